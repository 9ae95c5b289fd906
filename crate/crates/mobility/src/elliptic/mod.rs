//! Finite-difference machinery on triadic cubes.
//!
//! The cube `□_M = (−3^M/2, 3^M/2)^d` carries a uniform node grid. The
//! weighted operator `c·f − ½ e^{-2λx₁} ∇·(e^{2λx₁} ã ∇f)` is discretized
//! flux-conservatively (face-averaged coefficients for the diagonal of `ã`,
//! cell-centered gradients for its off-diagonal coupling), which makes it
//! exactly symmetric in the `e^{2λx₁}`-weighted discrete inner product.
//! On top of the Dirichlet solver sit the corrector / homogenized-matrix
//! pipeline, the tilted velocity and clock resolvents, and a spectral
//! negative-Sobolev diagnostic.

mod corrector;
mod operator;
mod resolvent;
mod spectral;

pub use corrector::{homogenized_matrix, solve_corrector, HomogenizedMatrix};
pub use operator::{solve_dirichlet, WeightedOperator};
pub use resolvent::{homogenization_error, solve_clock_resolvent, solve_velocity_resolvent};
pub use spectral::negative_sobolev_norm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Coord, ZERO};

/// Uniform grid on the triadic cube of side `3^level` centered at the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct CubeGrid {
    pub dim: usize,
    /// Cube level M; the side length is 3^M.
    pub level: i32,
    /// Nodes per side N ≥ 9.
    pub nodes: usize,
}

impl CubeGrid {
    pub fn new(dim: usize, level: i32, nodes: usize) -> Result<CubeGrid> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::config(format!("grid dimension {dim} not in {{2, 3}}")));
        }
        if nodes < 9 {
            return Err(Error::config(format!("grid needs N >= 9 nodes per side, got {nodes}")));
        }
        Ok(CubeGrid { dim, level, nodes })
    }

    pub fn side(&self) -> f64 {
        3f64.powi(self.level)
    }

    /// Grid spacing h = 3^M/(N−1).
    pub fn spacing(&self) -> f64 {
        self.side() / (self.nodes - 1) as f64
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.pow(self.dim as u32)
    }

    pub fn n_cells(&self) -> usize {
        (self.nodes - 1).pow(self.dim as u32)
    }

    #[inline]
    pub fn index(&self, multi: &[usize; 3]) -> usize {
        let n = self.nodes;
        match self.dim {
            2 => multi[0] + n * multi[1],
            3 => multi[0] + n * (multi[1] + n * multi[2]),
            _ => unreachable!(),
        }
    }

    #[inline]
    pub fn multi(&self, idx: usize) -> [usize; 3] {
        let n = self.nodes;
        match self.dim {
            2 => [idx % n, idx / n, 0],
            3 => [idx % n, (idx / n) % n, idx / (n * n)],
            _ => unreachable!(),
        }
    }

    #[inline]
    pub fn coordinate(&self, i: usize) -> f64 {
        -0.5 * self.side() + i as f64 * self.spacing()
    }

    #[inline]
    pub fn position(&self, multi: &[usize; 3]) -> Coord {
        let mut x = ZERO;
        for k in 0..self.dim {
            x[k] = self.coordinate(multi[k]);
        }
        x
    }

    #[inline]
    pub fn is_boundary(&self, multi: &[usize; 3]) -> bool {
        (0..self.dim).any(|k| multi[k] == 0 || multi[k] == self.nodes - 1)
    }

    /// Node index of the origin; requires an odd node count.
    pub fn origin_index(&self) -> Result<usize> {
        if self.nodes % 2 == 0 {
            return Err(Error::config(format!(
                "origin is not a node: N = {} is even",
                self.nodes
            )));
        }
        let mid = (self.nodes - 1) / 2;
        Ok(self.index(&[mid, mid, if self.dim == 3 { mid } else { 0 }]))
    }

    /// Checks that the grid resolves a medium's smoothness scale r:
    /// h ≤ r/2.
    pub fn check_resolves(&self, scale: Option<f64>) -> Result<()> {
        if let Some(r) = scale {
            if self.spacing() > r / 2.0 + 1e-12 {
                return Err(Error::config(format!(
                    "grid spacing {} does not resolve the field scale {} (need h <= {})",
                    self.spacing(),
                    r,
                    r / 2.0
                )));
            }
        }
        Ok(())
    }
}

/// Scalar nodal values on a cube grid.
#[derive(Clone, Debug)]
pub struct ScalarField {
    pub grid: CubeGrid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &CubeGrid) -> ScalarField {
        ScalarField {
            grid: grid.clone(),
            values: vec![0.0; grid.n_nodes()],
        }
    }

    pub fn from_fn(grid: &CubeGrid, f: impl Fn(&Coord) -> f64) -> ScalarField {
        let mut field = ScalarField::zeros(grid);
        for idx in 0..grid.n_nodes() {
            let m = grid.multi(idx);
            field.values[idx] = f(&grid.position(&m));
        }
        field
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Volume average (node mean).
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn assert_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::data("field contains non-finite values"))
        }
    }
}

/// One scalar field per component.
pub type VectorField = Vec<ScalarField>;

/// Field export: a `level,nodes,kind` header followed by one value per line
/// in node-index order.
pub fn write_field_csv<W: std::io::Write>(field: &ScalarField, kind: &str, mut w: W) -> Result<()> {
    writeln!(w, "level,nodes,kind")?;
    writeln!(w, "{},{},{kind}", field.grid.level, field.grid.nodes)?;
    for v in &field.values {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

/// Inverse of [`write_field_csv`]; the dimension is not stored and must be
/// supplied.
pub fn read_field_csv<R: std::io::BufRead>(dim: usize, r: R) -> Result<(ScalarField, String)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::data("empty field file"))??;
    if header.trim() != "level,nodes,kind" {
        return Err(Error::data(format!("unexpected field header `{header}`")));
    }
    let meta = lines
        .next()
        .ok_or_else(|| Error::data("missing field metadata"))??;
    let parts: Vec<&str> = meta.trim().split(',').collect();
    if parts.len() != 3 {
        return Err(Error::data(format!("malformed field metadata `{meta}`")));
    }
    let level: i32 = parts[0]
        .parse()
        .map_err(|_| Error::data("bad level in field metadata"))?;
    let nodes: usize = parts[1]
        .parse()
        .map_err(|_| Error::data("bad node count in field metadata"))?;
    let kind = parts[2].to_string();
    let grid = CubeGrid::new(dim, level, nodes)?;
    let mut values = Vec::with_capacity(grid.n_nodes());
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        values.push(
            line.trim()
                .parse::<f64>()
                .map_err(|_| Error::data(format!("bad field value `{line}`")))?,
        );
    }
    if values.len() != grid.n_nodes() {
        return Err(Error::data(format!(
            "field value count {} does not match node count {}",
            values.len(),
            grid.n_nodes()
        )));
    }
    let field = ScalarField { grid, values };
    field.assert_finite()?;
    Ok((field, kind))
}

/// Outcome of one Dirichlet solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub tolerance: f64,
    pub wall_seconds: f64,
    pub preconditioner: String,
}

//! Dirichlet correctors and the finite-volume homogenized matrix.
//!
//! The corrector `w_{p,M}` solves `−∇·(ã ∇w) = 0` in `□_M` with affine
//! boundary data `p·x`; the volume-averaged flux of the coordinate
//! correctors defines the computable homogenized matrix
//! `ā e_j = ⨍ ã ∇w_{e_j,M}`. The difference between consecutive levels is
//! reported as an empirical convergence diagnostic.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geom::{Coord, DenseMat, ZERO};
use crate::medium::Medium;

use super::{solve_dirichlet, CubeGrid, ScalarField, SolveReport, WeightedOperator};

/// Solves the corrector problem on the grid's cube: `−∇·(ã∇w) = 0`,
/// `w = p·x` on the boundary.
pub fn solve_corrector(
    medium: &dyn Medium,
    grid: &CubeGrid,
    p: &Coord,
    tol: f64,
) -> Result<(ScalarField, SolveReport)> {
    let op = WeightedOperator::assemble(medium, grid, 0.0, 0.0)?;
    let d = grid.dim;
    let boundary = ScalarField::from_fn(grid, |x| crate::geom::dot(d, p, x));
    let rhs = ScalarField::zeros(grid);
    solve_dirichlet(&op, &boundary, &rhs, tol)
}

/// Volume average of `ã ∇w` over the cube, evaluated with cell-centered
/// gradients (matching the discretization).
pub fn averaged_flux(medium: &dyn Medium, w: &ScalarField) -> Coord {
    let grid = &w.grid;
    let d = grid.dim;
    let n = grid.nodes;
    let m = n - 1;
    let h = grid.spacing();
    let inv = 1.0 / ((1usize << (d - 1)) as f64 * h);
    let mut flux_sum = ZERO;
    let mut cells = 0usize;
    let mut midx = [0usize; 3];
    let n_cells = grid.n_cells();
    for ci in 0..n_cells {
        midx[0] = ci % m;
        midx[1] = (ci / m) % m;
        midx[2] = if d == 3 { ci / (m * m) } else { 0 };
        let mut center = grid.position(&midx);
        for xk in center.iter_mut().take(d) {
            *xk += 0.5 * h;
        }
        // cell-centered gradient from corner differences
        let mut g = ZERO;
        for corner in 0..(1usize << d) {
            let mut node = midx;
            for k in 0..d {
                node[k] += (corner >> k) & 1;
            }
            let v = w.values[grid.index(&node)];
            for k in 0..d {
                let s = if corner >> k & 1 == 1 { 1.0 } else { -1.0 };
                g[k] += s * v;
            }
        }
        for gk in g.iter_mut().take(d) {
            *gk *= inv;
        }
        let at = medium.a_weighted(&center);
        let f = at.mul_vec(&g);
        for k in 0..d {
            flux_sum[k] += f[k];
        }
        cells += 1;
    }
    for k in 0..d {
        flux_sum[k] /= cells as f64;
    }
    flux_sum
}

/// Finite-volume homogenized matrix with diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomogenizedMatrix {
    /// Column j is the averaged flux of the e_j corrector at the grid level.
    pub matrix: [[f64; 3]; 3],
    pub dim: usize,
    pub level: i32,
    /// Frobenius norm of the antisymmetric part.
    pub asymmetry: f64,
    /// Max-entry difference against the level M−1 solve.
    pub level_drop: f64,
    /// Eigenvalues of the symmetrized matrix (ascending).
    pub eigenvalues: [f64; 3],
    pub solve_iterations: Vec<usize>,
    pub max_residual: f64,
}

impl HomogenizedMatrix {
    pub fn dense(&self) -> DenseMat {
        let mut m = DenseMat::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.set(i, j, self.matrix[i][j]);
            }
        }
        m
    }
}

/// Computes ā on the grid's cube, plus the level-(M−1) comparison. The
/// coarser solve reuses the same spacing when the node count allows it
/// ((N−1) divisible by 3), otherwise the same node count.
pub fn homogenized_matrix(
    medium: &dyn Medium,
    grid: &CubeGrid,
    tol: f64,
) -> Result<HomogenizedMatrix> {
    let d = grid.dim;
    let (abar, iters, maxres) = flux_matrix(medium, grid, tol)?;

    let sub_nodes = if (grid.nodes - 1) % 3 == 0 {
        (grid.nodes - 1) / 3 + 1
    } else {
        grid.nodes
    };
    let sub_grid = CubeGrid::new(d, grid.level - 1, sub_nodes.max(9))?;
    let (abar_sub, _, _) = flux_matrix(medium, &sub_grid, tol)?;

    let sym = abar.symmetrized();
    let mut matrix = [[0.0f64; 3]; 3];
    for i in 0..d {
        for j in 0..d {
            matrix[i][j] = abar.get(i, j);
        }
    }
    Ok(HomogenizedMatrix {
        matrix,
        dim: d,
        level: grid.level,
        asymmetry: abar.asymmetry(),
        level_drop: abar.max_abs_diff(&abar_sub),
        eigenvalues: sym.eigenvalues(),
        solve_iterations: iters,
        max_residual: maxres,
    })
}

fn flux_matrix(
    medium: &dyn Medium,
    grid: &CubeGrid,
    tol: f64,
) -> Result<(DenseMat, Vec<usize>, f64)> {
    let d = grid.dim;
    let mut abar = DenseMat::zeros(d);
    let mut iters = Vec::new();
    let mut maxres = 0.0f64;
    let columns: Vec<Result<(Coord, usize, f64)>> = crate::exec::map_indices(d, |j| {
        let mut p = ZERO;
        p[j] = 1.0;
        let (w, report) = solve_corrector(medium, grid, &p, tol)?;
        Ok((averaged_flux(medium, &w), report.iterations, report.residual))
    });
    for (j, col) in columns.into_iter().enumerate() {
        let (flux, it, res) = col?;
        for i in 0..d {
            abar.set(i, j, flux[i]);
        }
        iters.push(it);
        maxres = maxres.max(res);
    }
    Ok((abar, iters, maxres))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{build_environment, EnvParams};
    use crate::medium::{ConstantMedium, Laminate};

    #[test]
    fn identity_medium_gives_affine_corrector_and_identity_matrix() {
        let m = ConstantMedium::isotropic(2, 1.0, 0.0);
        let grid = CubeGrid::new(2, 1, 28).unwrap();
        let p = [1.0, 0.0, 0.0];
        let (w, _) = solve_corrector(&m, &grid, &p, 1e-11).unwrap();
        for idx in 0..grid.n_nodes() {
            let x = grid.position(&grid.multi(idx));
            assert!((w.values[idx] - x[0]).abs() < 1e-9);
        }
        let hm = homogenized_matrix(&m, &grid, 1e-11).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((hm.matrix[i][j] - target).abs() < 1e-8);
            }
        }
        assert!(hm.level_drop < 1e-8);
    }

    #[test]
    fn scaled_identity_recovers_scale() {
        let m = ConstantMedium::isotropic(2, 1.7, 0.0);
        let grid = CubeGrid::new(2, 1, 19).unwrap();
        let hm = homogenized_matrix(&m, &grid, 1e-11).unwrap();
        assert!((hm.matrix[0][0] - 1.7).abs() < 1e-8);
        assert!((hm.matrix[1][1] - 1.7).abs() < 1e-8);
        assert!(hm.matrix[0][1].abs() < 1e-8);
    }

    #[test]
    fn corrector_boundary_values_are_exact() {
        let env = build_environment(EnvParams { seed: 4, ..Default::default() }).unwrap();
        let grid = CubeGrid::new(2, 1, 17).unwrap();
        let p = [0.0, 1.0, 0.0];
        let (w, _) = solve_corrector(&env, &grid, &p, 1e-10).unwrap();
        for idx in 0..grid.n_nodes() {
            let m = grid.multi(idx);
            if grid.is_boundary(&m) {
                let x = grid.position(&m);
                assert_eq!(w.values[idx], x[1], "boundary node must carry p·x exactly");
            }
        }
    }

    #[test]
    fn laminate_corrector_matches_one_dimensional_quadrature() {
        // On the midline (far from the top and bottom faces) the e₁
        // corrector of diag(α(x₁), β(x₁)) is the 1D solution with
        // w'(x₁) = c/α(x₁), c = L / ∫ α⁻¹.
        let lam = Laminate::smooth(0.6);
        let grid = CubeGrid::new(2, 2, 109).unwrap(); // side 9, h ≈ 0.083
        let (w, _) = solve_corrector(&lam, &grid, &[1.0, 0.0, 0.0], 1e-11).unwrap();
        let side = grid.side();
        let harm = lam.harmonic_mean_alpha();
        // 1D oracle: w(x) = -L/2 + harm · ∫_{-L/2}^x α⁻¹, by fine Simpson
        let oracle = |x: f64| {
            let n = 4000;
            let mut acc = 0.0;
            let a = -side / 2.0;
            let hstep = (x - a) / n as f64;
            for i in 0..n {
                let t0 = a + i as f64 * hstep;
                let tm = t0 + 0.5 * hstep;
                let t1 = t0 + hstep;
                acc += hstep / 6.0
                    * (1.0 / (lam.alpha)(t0) + 4.0 / (lam.alpha)(tm) + 1.0 / (lam.alpha)(t1));
            }
            -side / 2.0 + harm * acc
        };
        let mid = (grid.nodes - 1) / 2;
        let mut worst: f64 = 0.0;
        for i in 0..grid.nodes {
            let idx = grid.index(&[i, mid, 0]);
            let x = grid.coordinate(i);
            worst = worst.max((w.values[idx] - oracle(x)).abs());
        }
        assert!(worst < 5e-3, "midline corrector error {worst}");
    }

    #[test]
    fn random_environment_matrix_within_ellipticity_band() {
        let env = build_environment(EnvParams { seed: 101, ..Default::default() }).unwrap();
        let grid = CubeGrid::new(2, 2, 37).unwrap();
        let hm = homogenized_matrix(&env, &grid, 1e-9).unwrap();
        let lam = env.params.ellipticity;
        for k in 0..2 {
            let ev = hm.eigenvalues[k];
            assert!(
                ev >= 1.0 / lam - 1e-9 && ev <= lam + 1e-9,
                "eigenvalue {ev} outside [{}, {lam}]",
                1.0 / lam
            );
        }
        assert!(hm.asymmetry < 0.05, "asymmetry {}", hm.asymmetry);
    }
}

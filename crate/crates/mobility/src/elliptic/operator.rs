//! Weighted elliptic operator and its preconditioned conjugate-gradient
//! Dirichlet solver.
//!
//! The operator is `L f = c·f − ½ e^{-2λx₁} ∇_h·(e^{2λx₁} ã ∇_h f)`.
//! Testing against `g` with the weight `w(x) = e^{2λx₁}` gives the exactly
//! symmetric bilinear form
//!
//! ```text
//! M(f, g) = c ⟨f, g⟩_w + ½ E_w(f, g),
//! E_w(f, g) = Σ_faces κ_k(x̄) D_k f D_k g h^{d-2}
//!           + Σ_cells Σ_{k≠l} K_kl(c̄) G_k(f) G_l(g) h^d ,
//! ```
//!
//! with `κ_k = w·ã_kk` at face midpoints, `K_kl = w·ã_kl` at cell centers,
//! `D_k` the face difference quotient and `G` the cell-centered gradient.
//! The solver runs CG with a Jacobi preconditioner on the interior unknowns;
//! distinct solves may run on distinct threads, one solve owns its state.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::medium::Medium;

use super::{CubeGrid, ScalarField, SolveReport};

/// Iteration cap per solve: 20·N.
const ITER_CAP_PER_NODE: usize = 20;

/// Guard against overflow of the exponential weight: λ·3^M ≤ 50.
const TILT_GUARD: f64 = 50.0;

pub struct WeightedOperator {
    pub grid: CubeGrid,
    pub tilt: f64,
    pub zero_order: f64,
    h: f64,
    /// Face coefficients per direction k: w·ã_kk at face midpoints. The
    /// direction-k array has N−1 entries along k and N along the others.
    face: Vec<Vec<f64>>,
    /// Off-diagonal cell coefficients w·ã_kl at cell centers, pairs in the
    /// order (0,1), (0,2), (1,2).
    cell: Vec<[f64; 3]>,
    /// Node weights w_i = e^{2λ x₁}.
    weight: Vec<f64>,
    /// Jacobi diagonal of the symmetric system.
    diagonal: Vec<f64>,
}

impl WeightedOperator {
    /// Samples the medium at faces and cells and assembles the diagonal.
    pub fn assemble(
        medium: &dyn Medium,
        grid: &CubeGrid,
        tilt: f64,
        zero_order: f64,
    ) -> Result<WeightedOperator> {
        if medium.dim() != grid.dim {
            return Err(Error::config("medium and grid dimension mismatch"));
        }
        if tilt * grid.side() > TILT_GUARD {
            return Err(Error::config(format!(
                "overflow guard: tilt·3^M = {} exceeds {TILT_GUARD}; the weight e^{{2λx₁}} would leave floating range",
                tilt * grid.side()
            )));
        }
        if zero_order < 0.0 {
            return Err(Error::config("zero-order coefficient must be nonnegative"));
        }
        grid.check_resolves(medium.smoothness_scale())?;
        let d = grid.dim;
        let n = grid.nodes;
        let h = grid.spacing();
        let weight_at = |x1: f64| (2.0 * tilt * x1).exp();

        let mut face = Vec::with_capacity(d);
        for k in 0..d {
            let mut shape = [n; 3];
            shape[k] = n - 1;
            let len = (0..d).map(|j| shape[j]).product();
            let mut coefs = vec![0.0f64; len];
            let mut midx = [0usize; 3];
            for (fi, c) in coefs.iter_mut().enumerate() {
                face_multi(fi, &shape, d, &mut midx);
                let mut x = grid.position(&midx);
                x[k] += 0.5 * h;
                let at = medium.a_weighted(&x);
                *c = weight_at(x[0]) * at.get(k, k);
            }
            face.push(coefs);
        }

        let n_cells = grid.n_cells();
        let mut cell = vec![[0.0f64; 3]; n_cells];
        if d > 1 {
            let shape = [n - 1; 3];
            let mut midx = [0usize; 3];
            for (ci, entry) in cell.iter_mut().enumerate() {
                face_multi(ci, &shape, d, &mut midx);
                let mut x = grid.position(&midx);
                for xk in x.iter_mut().take(d) {
                    *xk += 0.5 * h;
                }
                let at = medium.a_weighted(&x);
                let w = weight_at(x[0]);
                entry[0] = w * at.get(0, 1);
                if d == 3 {
                    entry[1] = w * at.get(0, 2);
                    entry[2] = w * at.get(1, 2);
                }
            }
        }

        let mut weight = vec![0.0f64; grid.n_nodes()];
        for (idx, wv) in weight.iter_mut().enumerate() {
            let m = grid.multi(idx);
            *wv = weight_at(grid.coordinate(m[0]));
        }

        let mut op = WeightedOperator {
            grid: grid.clone(),
            tilt,
            zero_order,
            h,
            face,
            cell,
            weight,
            diagonal: Vec::new(),
        };
        op.diagonal = op.assemble_diagonal();
        Ok(op)
    }

    /// ½·E_w(u, δ_i) for every node i (the symmetric stiffness action), plus
    /// the zero-order weighted mass term. Boundary entries of the output are
    /// zeroed; boundary values of `u` participate (Dirichlet lifting).
    fn stiffness_apply(&self, u: &[f64]) -> Vec<f64> {
        let d = self.grid.dim;
        let n = self.grid.nodes;
        let h = self.h;
        let hd = h.powi(d as i32);
        let hd2 = h.powi(d as i32 - 2);
        let mut out = vec![0.0f64; u.len()];

        // face (diagonal-coefficient) part
        let mut midx = [0usize; 3];
        for k in 0..d {
            let mut shape = [n; 3];
            shape[k] = n - 1;
            let len: usize = (0..d).map(|j| shape[j]).product();
            for fi in 0..len {
                face_multi(fi, &shape, d, &mut midx);
                let lo = self.grid.index(&midx);
                let mut upper = midx;
                upper[k] += 1;
                let hi = self.grid.index(&upper);
                let flux = self.face[k][fi] * (u[hi] - u[lo]) * hd2;
                // E(u, δ_lo) gets -flux·(g_hi - g_lo) derivative = -flux·(-1)
                out[lo] -= flux;
                out[hi] += flux;
            }
        }

        // cell (off-diagonal) part
        if d == 2 {
            let m = n - 1;
            let inv2h = 1.0 / (2.0 * h);
            for cy in 0..m {
                for cx in 0..m {
                    let kxy = self.cell[cx + m * cy][0];
                    if kxy == 0.0 {
                        continue;
                    }
                    let i00 = cx + n * cy;
                    let i10 = i00 + 1;
                    let i01 = i00 + n;
                    let i11 = i01 + 1;
                    let gx = (u[i10] - u[i00] + u[i11] - u[i01]) * inv2h;
                    let gy = (u[i01] - u[i00] + u[i11] - u[i10]) * inv2h;
                    // Σ_{k≠l} K_kl G_k(u) ∂G_l(δ): K_xy(G_x ∂G_y + G_y ∂G_x)
                    let cxv = kxy * gx * hd * inv2h;
                    let cyv = kxy * gy * hd * inv2h;
                    out[i00] -= cxv + cyv;
                    out[i10] += cyv - cxv;
                    out[i01] += cxv - cyv;
                    out[i11] += cxv + cyv;
                }
            }
        } else if d == 3 {
            let m = n - 1;
            let inv4h = 1.0 / (4.0 * h);
            for cz in 0..m {
                for cy in 0..m {
                    for cx in 0..m {
                        let coefs = self.cell[cx + m * (cy + m * cz)];
                        let base = cx + n * (cy + n * cz);
                        let idx = [
                            base,
                            base + 1,
                            base + n,
                            base + n + 1,
                            base + n * n,
                            base + n * n + 1,
                            base + n * n + n,
                            base + n * n + n + 1,
                        ];
                        // corner offsets in (x, y, z) bit order
                        let mut g = [0.0f64; 3];
                        for (corner, &id) in idx.iter().enumerate() {
                            let sx = if corner & 1 == 1 { 1.0 } else { -1.0 };
                            let sy = if corner & 2 == 2 { 1.0 } else { -1.0 };
                            let sz = if corner & 4 == 4 { 1.0 } else { -1.0 };
                            g[0] += sx * u[id];
                            g[1] += sy * u[id];
                            g[2] += sz * u[id];
                        }
                        for gk in g.iter_mut() {
                            *gk *= inv4h;
                        }
                        // pair contributions: (0,1), (0,2), (1,2)
                        let pair = [(0usize, 1usize), (0, 2), (1, 2)];
                        for (pi, &(k, l)) in pair.iter().enumerate() {
                            let kkl = coefs[pi];
                            if kkl == 0.0 {
                                continue;
                            }
                            let ck = kkl * g[k] * hd * inv4h;
                            let cl = kkl * g[l] * hd * inv4h;
                            for (corner, &id) in idx.iter().enumerate() {
                                let sk = if corner >> k & 1 == 1 { 1.0 } else { -1.0 };
                                let sl = if corner >> l & 1 == 1 { 1.0 } else { -1.0 };
                                // K(G_k ∂G_l + G_l ∂G_k)
                                out[id] += ck * sl + cl * sk;
                            }
                        }
                    }
                }
            }
        }

        // halve the stiffness, add the weighted zero-order mass, zero boundary
        for idx in 0..out.len() {
            let mi = self.grid.multi(idx);
            if self.grid.is_boundary(&mi) {
                out[idx] = 0.0;
            } else {
                out[idx] = 0.5 * out[idx] + self.zero_order * self.weight[idx] * u[idx] * hd;
            }
        }
        out
    }

    fn assemble_diagonal(&self) -> Vec<f64> {
        let d = self.grid.dim;
        let n = self.grid.nodes;
        let hd = self.h.powi(d as i32);
        let hd2 = self.h.powi(d as i32 - 2);
        let mut diag = vec![0.0f64; self.grid.n_nodes()];
        let mut midx = [0usize; 3];
        for k in 0..d {
            let mut shape = [n; 3];
            shape[k] = n - 1;
            let len: usize = (0..d).map(|j| shape[j]).product();
            for fi in 0..len {
                face_multi(fi, &shape, d, &mut midx);
                let lo = self.grid.index(&midx);
                let mut upper = midx;
                upper[k] += 1;
                let hi = self.grid.index(&upper);
                diag[lo] += self.face[k][fi] * hd2;
                diag[hi] += self.face[k][fi] * hd2;
            }
        }
        let scale = 1.0 / (1usize << (d - 1)).pow(2) as f64;
        for (ci, coefs) in self.cell.iter().enumerate() {
            face_multi(ci, &[n - 1; 3], d, &mut midx);
            // each corner sees Σ_{k≠l} K_kl s_k s_l / (2^{d-1} h)² · h^d
            let pair: &[(usize, usize)] = if d == 2 { &[(0, 1)] } else { &[(0, 1), (0, 2), (1, 2)] };
            for corner in 0..(1usize << d) {
                let mut node = midx;
                for k in 0..d {
                    node[k] += (corner >> k) & 1;
                }
                let id = self.grid.index(&node);
                for (pi, &(k, l)) in pair.iter().enumerate() {
                    let sk = if corner >> k & 1 == 1 { 1.0 } else { -1.0 };
                    let sl = if corner >> l & 1 == 1 { 1.0 } else { -1.0 };
                    diag[id] += 2.0 * coefs[pi] * sk * sl * scale * hd / (self.h * self.h);
                }
            }
        }
        for (idx, dv) in diag.iter_mut().enumerate() {
            *dv = 0.5 * *dv + self.zero_order * self.weight[idx] * hd;
            if *dv <= 0.0 {
                *dv = 1.0; // boundary rows are identities; keep them harmless
            }
        }
        diag
    }

    /// Pointwise operator value `(L f)_i = c f_i − ½ e^{-2λx₁} ∇_h·(…)` at
    /// interior nodes (zero on the boundary rows).
    pub fn apply(&self, f: &ScalarField) -> ScalarField {
        let hd = self.h.powi(self.grid.dim as i32);
        let mut raw = self.stiffness_apply(&f.values);
        for (idx, v) in raw.iter_mut().enumerate() {
            *v /= self.weight[idx] * hd;
        }
        ScalarField {
            grid: self.grid.clone(),
            values: raw,
        }
    }

    /// Discrete inner product ⟨f, g⟩_w = Σ w_i f_i g_i h^d.
    pub fn weighted_inner(&self, f: &ScalarField, g: &ScalarField) -> f64 {
        let hd = self.h.powi(self.grid.dim as i32);
        f.values
            .iter()
            .zip(&g.values)
            .zip(&self.weight)
            .map(|((a, b), w)| w * a * b)
            .sum::<f64>()
            * hd
    }

    /// Weak right-hand side entries w_i·b_i·h^d for a pointwise source b.
    fn weak_rhs(&self, rhs: &ScalarField) -> Vec<f64> {
        let hd = self.h.powi(self.grid.dim as i32);
        rhs.values
            .iter()
            .zip(&self.weight)
            .map(|(b, w)| w * b * hd)
            .collect()
    }
}

#[inline]
fn face_multi(fi: usize, shape: &[usize; 3], d: usize, out: &mut [usize; 3]) {
    match d {
        2 => {
            out[0] = fi % shape[0];
            out[1] = fi / shape[0];
            out[2] = 0;
        }
        3 => {
            out[0] = fi % shape[0];
            out[1] = (fi / shape[0]) % shape[1];
            out[2] = fi / (shape[0] * shape[1]);
        }
        _ => unreachable!(),
    }
}


/// Solves the Dirichlet problem `L u = rhs` in the cube, `u = boundary` on
/// the boundary nodes, by preconditioned conjugate gradients on the interior
/// unknowns of the weighted-symmetric system.
pub fn solve_dirichlet(
    op: &WeightedOperator,
    boundary: &ScalarField,
    rhs: &ScalarField,
    tol: f64,
) -> Result<(ScalarField, SolveReport)> {
    if tol <= 0.0 {
        return Err(Error::config("solver tolerance must be positive"));
    }
    let start = Instant::now();
    let grid = &op.grid;
    let n_total = grid.n_nodes();
    assert_eq!(boundary.values.len(), n_total);
    assert_eq!(rhs.values.len(), n_total);

    // lifted initial guess: boundary data on the boundary, zero inside
    let mut u = vec![0.0f64; n_total];
    let mut interior = Vec::with_capacity(n_total);
    for idx in 0..n_total {
        let m = grid.multi(idx);
        if grid.is_boundary(&m) {
            u[idx] = boundary.values[idx];
        } else {
            interior.push(idx);
        }
    }

    let weak = op.weak_rhs(rhs);
    let au = op.stiffness_apply(&u);
    let mut r = vec![0.0f64; n_total];
    let mut rhs_norm2 = 0.0;
    for &idx in &interior {
        r[idx] = weak[idx] - au[idx];
        rhs_norm2 += weak[idx] * weak[idx];
    }
    let r0 = l2(&r);
    let rhs_norm = rhs_norm2.sqrt();
    let scale = if rhs_norm > 0.0 {
        rhs_norm.max(1e-12 * r0 / tol)
    } else {
        r0.max(1e-300)
    };

    let mut z = precondition(op, &r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let cap = ITER_CAP_PER_NODE * grid.nodes;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut residual = r0 / scale;

    if residual > tol {
        for it in 1..=cap {
            let ap = op.stiffness_apply(&p);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                return Err(Error::Solver {
                    message: format!("indefinite pivot p·Ap = {pap} at iteration {it}"),
                    history,
                });
            }
            let alpha = rz / pap;
            for &idx in &interior {
                u[idx] += alpha * p[idx];
                r[idx] -= alpha * ap[idx];
            }
            residual = l2(&r) / scale;
            iterations = it;
            if history.len() >= 12 {
                history.remove(0);
            }
            history.push(residual);
            if residual <= tol {
                break;
            }
            z = precondition(op, &r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for &idx in &interior {
                p[idx] = z[idx] + beta * p[idx];
            }
        }
    }
    if residual > tol {
        return Err(Error::Solver {
            message: format!(
                "conjugate gradients did not reach tol {tol} within {cap} iterations (residual {residual})"
            ),
            history,
        });
    }
    let field = ScalarField {
        grid: grid.clone(),
        values: u,
    };
    field.assert_finite()?;
    Ok((
        field,
        SolveReport {
            iterations,
            residual,
            tolerance: tol,
            wall_seconds: start.elapsed().as_secs_f64(),
            preconditioner: "jacobi".into(),
        },
    ))
}

fn precondition(op: &WeightedOperator, r: &[f64]) -> Vec<f64> {
    r.iter().zip(&op.diagonal).map(|(v, d)| v / d).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

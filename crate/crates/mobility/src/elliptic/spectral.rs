//! Spectral negative-Sobolev diagnostic.
//!
//! The field is averaged to cell centers and expanded in the discrete cosine
//! (Neumann) eigenbasis of the cube. With `μ_k = π²|k|²` the unit-cube
//! Neumann eigenvalues and volume-normalized coefficients `f̂_k`
//! (`Σ_k f̂_k² = ⨍ f²`), the norm surrogate on `□_M` is
//!
//! ```text
//! ‖f‖_{-s} := 3^{sM} · ( Σ_k (1 + μ_k)^{-s} |f̂_k|² )^{1/2} ,
//! ```
//!
//! equivalent to the Gagliardo dual norm up to (d, s)-dependent constants.
//! Constants give exactly `3^{sM}|c|`, reproducing the dual-norm pullback
//! ratio `3^s` between consecutive levels; mean-zero fields with short-range
//! correlation stay bounded along `M`. All consumers therefore compare
//! trends in `M`, never absolute values.

use crate::error::{Error, Result};

use super::ScalarField;

/// Volume-normalized negative Sobolev norm surrogate, s ∈ (0, ½].
pub fn negative_sobolev_norm(field: &ScalarField, s: f64) -> Result<f64> {
    if !(0.0 < s && s <= 0.5) {
        return Err(Error::config(format!("exponent s = {s} outside (0, 1/2]")));
    }
    let grid = &field.grid;
    let d = grid.dim;
    let nc = grid.nodes - 1;

    // node values -> cell-center averages
    let mut cells = vec![0.0f64; grid.n_cells()];
    let corners = 1usize << d;
    let mut midx = [0usize; 3];
    for (ci, cv) in cells.iter_mut().enumerate() {
        midx[0] = ci % nc;
        midx[1] = (ci / nc) % nc;
        midx[2] = if d == 3 { ci / (nc * nc) } else { 0 };
        let mut s_acc = 0.0;
        for corner in 0..corners {
            let mut node = midx;
            for k in 0..d {
                node[k] += (corner >> k) & 1;
            }
            s_acc += field.values[grid.index(&node)];
        }
        *cv = s_acc / corners as f64;
    }

    // orthonormal DCT-II along each axis
    let cos = dct_matrix(nc);
    for axis in 0..d {
        dct_axis(&mut cells, nc, d, axis, &cos);
    }

    // volume normalization: divide coefficients by Nc^{d/2}
    let norm = (nc as f64).powi(d as i32).sqrt();
    let mut acc = 0.0f64;
    for (ci, coef) in cells.iter().enumerate() {
        let kx = ci % nc;
        let ky = (ci / nc) % nc;
        let kz = if d == 3 { ci / (nc * nc) } else { 0 };
        let mu = std::f64::consts::PI.powi(2) * (kx * kx + ky * ky + kz * kz) as f64;
        let coef = coef / norm;
        acc += (1.0 + mu).powf(-s) * coef * coef;
    }
    Ok(3f64.powf(s * grid.level as f64) * acc.sqrt())
}

/// Orthonormal DCT-II matrix: out[k][n] = c_k cos(π k (n+½)/N).
fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0f64; n * n];
    let c0 = (1.0 / n as f64).sqrt();
    let ck = (2.0 / n as f64).sqrt();
    for k in 0..n {
        let c = if k == 0 { c0 } else { ck };
        for j in 0..n {
            m[k * n + j] = c * (std::f64::consts::PI * k as f64 * (j as f64 + 0.5) / n as f64).cos();
        }
    }
    m
}

fn dct_axis(data: &mut [f64], nc: usize, d: usize, axis: usize, cos: &[f64]) {
    let stride = nc.pow(axis as u32);
    let n_lines = data.len() / nc;
    let mut line = vec![0.0f64; nc];
    let mut out = vec![0.0f64; nc];
    for li in 0..n_lines {
        // position of the line start: split index into (inner, outer) blocks
        let inner = li % stride;
        let outer = li / stride;
        let base = outer * stride * nc + inner;
        for (j, lv) in line.iter_mut().enumerate() {
            *lv = data[base + j * stride];
        }
        for k in 0..nc {
            let mut s_acc = 0.0;
            let row = &cos[k * nc..(k + 1) * nc];
            for j in 0..nc {
                s_acc += row[j] * line[j];
            }
            out[k] = s_acc;
        }
        for (j, ov) in out.iter().enumerate() {
            data[base + j * stride] = *ov;
        }
    }
    let _ = d;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::CubeGrid;
    use crate::environment::{build_environment, mean_clock_weight, EnvParams};
    use crate::medium::Medium;
    use crate::stats;

    #[test]
    fn zero_field_has_zero_norm() {
        let grid = CubeGrid::new(2, 1, 17).unwrap();
        let f = ScalarField::zeros(&grid);
        assert_eq!(negative_sobolev_norm(&f, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn constant_field_scales_like_the_dual_pullback() {
        // ‖c‖ on □_M is 3^{sM}|c|, so the two-level ratio is 3^s.
        let s = 1.0 / 6.0;
        let c = 0.8;
        let mut norms = Vec::new();
        for level in [2, 3] {
            let grid = CubeGrid::new(2, level, 28).unwrap();
            let f = ScalarField::from_fn(&grid, |_| c);
            norms.push(negative_sobolev_norm(&f, s).unwrap());
        }
        let ratio = norms[1] / norms[0];
        assert!(
            (ratio - 3f64.powf(s)).abs() < 1e-10,
            "two-level ratio {ratio} vs 3^s = {}",
            3f64.powf(s)
        );
        assert!((norms[0] - 3f64.powf(s * 2.0) * c).abs() < 1e-10);
    }

    #[test]
    fn parseval_on_a_random_field() {
        // with s -> tiny the norm approaches 3^{sM}·rms of the cell values
        let grid = CubeGrid::new(2, 0, 33).unwrap();
        let f = ScalarField::from_fn(&grid, |x| (x[0] * 7.3).sin() + 0.3 * (x[1] * 11.1).cos());
        let n_half = negative_sobolev_norm(&f, 0.5).unwrap();
        let n_small = negative_sobolev_norm(&f, 1e-9).unwrap();
        assert!(n_half <= n_small, "dual norm must decrease in s");
        assert!(n_small > 0.0);
    }

    #[test]
    fn centered_clock_source_stays_below_target_slope() {
        // ‖e^{-2V} − mean‖_{-1/6} on □_M should grow slower than 3^{M/24}
        let env = build_environment(EnvParams { seed: 77, ..Default::default() }).unwrap();
        let (mw, _) = mean_clock_weight(&env, 20_000);
        let s = 1.0 / 6.0;
        let mut logs = Vec::new();
        let mut ms = Vec::new();
        for level in [2i32, 3, 4] {
            let nodes = (3usize.pow(level as u32) * 2 + 1).max(31);
            let grid = CubeGrid::new(2, level, nodes).unwrap();
            let f = ScalarField::from_fn(&grid, |x| env.clock_weight(x) - mw);
            let norm = negative_sobolev_norm(&f, s).unwrap();
            logs.push(norm.ln() / 3f64.ln());
            ms.push(level as f64);
        }
        let fit = stats::linear_fit(&ms, &logs);
        assert!(
            fit.slope <= 1.0 / 24.0,
            "log₃ norm slope {} exceeds 1/24 target ({logs:?})",
            fit.slope
        );
    }
}

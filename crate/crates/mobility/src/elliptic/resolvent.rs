//! Tilted velocity and clock resolvents on the buffer cube `□_{m+h}` at the
//! critical scale `3^m ≍ λ⁻¹`, `λ = ρ·3^{-m}`.
//!
//! Velocity: componentwise
//! `ρ3^{-2m} u − ½ e^{-2λx₁}∇·(e^{2λx₁} ã ∇u) = b`, `u = 3^m ā e₁` on the
//! boundary, with `b` the Itô drift. In a constant medium `ã ≡ ā` the exact
//! solution is the constant `3^m ā e₁`, so the rescaled value
//! `U_m(0) = 3^{-m} u(0) − ā e₁` measures the homogenization error.
//!
//! Clock: `ρ3^{-2m} q − L^λ q = ρ3^{-2m}(e^{-2V} − mean_weight)` with zero
//! boundary data; `q(0)` captures the homogenization contribution to the
//! clock-rate error.

use crate::diffusion::ito_drift;
use crate::error::{Error, Result};
use crate::geom::{Coord, DenseMat, ZERO};
use crate::medium::Medium;

use super::{solve_dirichlet, CubeGrid, ScalarField, SolveReport, VectorField, WeightedOperator};

fn check_scales(grid: &CubeGrid, m: i32, buffer: i32, rho: f64) -> Result<f64> {
    if rho < 1.0 {
        return Err(Error::config(format!("rho = {rho} must be >= 1")));
    }
    if buffer < 0 {
        return Err(Error::config("buffer level h must be >= 0"));
    }
    if grid.level != m + buffer {
        return Err(Error::config(format!(
            "grid level {} does not match m + h = {}",
            grid.level,
            m + buffer
        )));
    }
    let tilt = rho * 3f64.powi(-m);
    if tilt > 1.0 {
        return Err(Error::config(format!(
            "tilt rho·3^-m = {tilt} exceeds 1; raise m or lower rho"
        )));
    }
    Ok(tilt)
}

/// Solves the velocity resolvent componentwise. `abar` supplies the boundary
/// data `3^m ā e₁` (computed at matching resolution by the caller).
pub fn solve_velocity_resolvent(
    medium: &dyn Medium,
    grid: &CubeGrid,
    m: i32,
    buffer: i32,
    rho: f64,
    abar: &DenseMat,
    tol: f64,
) -> Result<(VectorField, Vec<SolveReport>)> {
    let tilt = check_scales(grid, m, buffer, rho)?;
    let zero_order = rho * 3f64.powi(-2 * m);
    let op = WeightedOperator::assemble(medium, grid, tilt, zero_order)?;
    let d = grid.dim;
    let scale = 3f64.powi(m);
    let bdata = abar.mul_vec(&crate::geom::e1());
    let mut fields = Vec::with_capacity(d);
    let mut reports = Vec::with_capacity(d);
    for i in 0..d {
        let rhs = ScalarField::from_fn(grid, |x| ito_drift(medium, tilt, x)[i]);
        let boundary = ScalarField::from_fn(grid, |_| scale * bdata[i]);
        let (u, report) = solve_dirichlet(&op, &boundary, &rhs, tol)?;
        fields.push(u);
        reports.push(report);
    }
    Ok((fields, reports))
}

/// Solves the clock resolvent with the centered source
/// `ρ3^{-2m}(e^{-2V} − mean_weight)` and zero boundary data.
pub fn solve_clock_resolvent(
    medium: &dyn Medium,
    grid: &CubeGrid,
    m: i32,
    buffer: i32,
    rho: f64,
    mean_weight: f64,
    tol: f64,
) -> Result<(ScalarField, SolveReport)> {
    let tilt = check_scales(grid, m, buffer, rho)?;
    let zero_order = rho * 3f64.powi(-2 * m);
    let op = WeightedOperator::assemble(medium, grid, tilt, zero_order)?;
    let rhs = ScalarField::from_fn(grid, |x| zero_order * (medium.clock_weight(x) - mean_weight));
    let boundary = ScalarField::zeros(grid);
    solve_dirichlet(&op, &boundary, &rhs, tol)
}

/// Rescaled homogenization error `U_m(0) = 3^{-m} u_m(0) − ā e₁`; the origin
/// must be a grid node.
pub fn homogenization_error(u: &VectorField, abar: &DenseMat, m: i32) -> Result<Coord> {
    assert!(!u.is_empty());
    let grid = &u[0].grid;
    let origin = grid.origin_index()?;
    let target = abar.mul_vec(&crate::geom::e1());
    let scale = 3f64.powi(-m);
    let mut err = ZERO;
    for (i, comp) in u.iter().enumerate() {
        err[i] = scale * comp.values[origin] - target[i];
    }
    Ok(err)
}

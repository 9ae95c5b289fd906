//! Euler–Maruyama simulation of the time-changed tilted diffusion
//!
//! ```text
//! dY(s) = b(Y) ds + ã^{1/2}(Y) dW(s),   b = ½ ∇·ã + λ ã e₁,   ã = e^{-2V} a,
//! ```
//!
//! together with the additive clock `A(s) = ∫₀^s e^{-2V(Y(u))} du`
//! (trapezoid rule) and its inverse: the physical-time path is
//! `X(t) = Y(A⁻¹(t))`. Each path owns a counter-derived RNG stream, so an
//! ensemble is reproducible regardless of scheduling, and reductions happen
//! in path-index order.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::geom::{Coord, DenseMat, SymMat, ZERO};
use crate::medium::Medium;
use crate::rng::path_stream;
use crate::stats;

/// Simulation parameters.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SimParams {
    /// Tilt λ ∈ [0, 1].
    pub tilt: f64,
    /// Time step Δt; must satisfy Δt ≤ min(1, λ⁻²)/100 when λ > 0.
    pub dt: f64,
    /// Horizon T ≥ Δt.
    pub horizon: f64,
    pub n_paths: usize,
    /// Seed of the per-path RNG streams.
    pub seed: u64,
    /// Absorbing triadic cube (−3^L/2, 3^L/2)^d: paths stop at the first
    /// grid index outside it.
    pub absorb_level: Option<i32>,
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tilt) {
            return Err(Error::config(format!("tilt = {} outside [0, 1]", self.tilt)));
        }
        if self.dt <= 0.0 {
            return Err(Error::config("dt must be positive"));
        }
        if self.tilt > 0.0 {
            let cap = (1.0f64).min(self.tilt.powi(-2)) / 100.0;
            if self.dt > cap * (1.0 + 1e-12) {
                return Err(Error::config(format!(
                    "dt = {} exceeds min(1, tilt^-2)/100 = {cap} (block timescale unresolved)",
                    self.dt
                )));
            }
        }
        if self.horizon < self.dt {
            return Err(Error::config("horizon must be at least dt"));
        }
        if self.n_paths == 0 {
            return Err(Error::config("n_paths must be positive"));
        }
        Ok(())
    }
}

/// One simulated trajectory on the uniform grid `t_k = k·dt`. Positions are
/// stored with stride `dim`; the clock starts at zero and is strictly
/// increasing. For a time-changed path produced by [`invert_time_change`],
/// the clock column holds the inverse reparametrization `A⁻¹(t)`, which is
/// the accumulated `∫ e^{+2V}` along the new path.
#[derive(Clone, Debug)]
pub struct PathSample {
    pub dim: usize,
    pub dt: f64,
    positions: Vec<f64>,
    clock: Vec<f64>,
    pub seed: u64,
    pub path_id: u64,
    /// First grid index outside the absorbing cube, when one was set.
    pub exit_step: Option<usize>,
}

impl PathSample {
    /// Builds a path from raw grid data (positions stored with stride
    /// `dim`). The clock must start at zero and increase.
    pub fn from_parts(
        dim: usize,
        dt: f64,
        positions: Vec<f64>,
        clock: Vec<f64>,
        seed: u64,
        path_id: u64,
    ) -> Result<PathSample> {
        if clock.is_empty() || positions.len() != clock.len() * dim {
            return Err(Error::data("position/clock lengths do not match"));
        }
        if clock[0] != 0.0 {
            return Err(Error::data("clock must start at zero"));
        }
        if dt <= 0.0 {
            return Err(Error::data("step must be positive"));
        }
        Ok(PathSample {
            dim,
            dt,
            positions,
            clock,
            seed,
            path_id,
            exit_step: None,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.clock.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps() as f64 * self.dt
    }

    #[inline]
    pub fn position(&self, k: usize) -> Coord {
        let mut p = ZERO;
        for j in 0..self.dim {
            p[j] = self.positions[k * self.dim + j];
        }
        p
    }

    #[inline]
    pub fn clock_value(&self, k: usize) -> f64 {
        self.clock[k]
    }

    pub fn final_position(&self) -> Coord {
        self.position(self.n_steps())
    }

    pub fn final_clock(&self) -> f64 {
        *self.clock.last().unwrap()
    }

    /// Position at an off-grid time by linear interpolation.
    pub fn position_at(&self, t: f64) -> Coord {
        let (k, frac) = self.locate(t);
        let a = self.position(k);
        let b = self.position((k + 1).min(self.n_steps()));
        let mut p = ZERO;
        for j in 0..self.dim {
            p[j] = a[j] + frac * (b[j] - a[j]);
        }
        p
    }

    /// Clock at an off-grid time by linear interpolation.
    pub fn clock_at(&self, t: f64) -> f64 {
        let (k, frac) = self.locate(t);
        let a = self.clock[k];
        let b = self.clock[(k + 1).min(self.n_steps())];
        a + frac * (b - a)
    }

    #[inline]
    fn locate(&self, t: f64) -> (usize, f64) {
        assert!(t >= 0.0 && t <= self.horizon() + 1e-9 * self.dt, "time {t} outside path");
        let k = ((t / self.dt).floor() as usize).min(self.n_steps().saturating_sub(1));
        (k, (t - k as f64 * self.dt) / self.dt)
    }
}

/// Itô drift of the time-changed tilted diffusion:
/// b(x) = ½ ∇·ã(x) + λ ã(x) e₁ with ∇·ã = e^{-2V} (∇·a − 2 a ∇V).
pub fn ito_drift(medium: &dyn Medium, tilt: f64, x: &Coord) -> Coord {
    let d = medium.dim();
    let div = medium.div_a_weighted(x);
    let at = medium.a_weighted(x);
    let mut b = ZERO;
    for k in 0..d {
        b[k] = 0.5 * div[k] + tilt * at.get(k, 0);
    }
    b
}

/// Symmetric positive-definite square root of ã(x).
pub fn diffusion_root(medium: &dyn Medium, x: &Coord) -> SymMat {
    medium.a_weighted(x).sqrt_spd()
}

/// Streaming Euler–Maruyama integrator.
struct Stepper<'a> {
    medium: &'a dyn Medium,
    tilt: f64,
    dt: f64,
    sqrt_dt: f64,
    x: Coord,
    clock: f64,
    cur: crate::medium::StepSample,
    rng: rand_chacha::ChaCha8Rng,
    step: usize,
}

impl<'a> Stepper<'a> {
    fn new(medium: &'a dyn Medium, tilt: f64, dt: f64, x0: Coord, seed: u64, path_id: u64) -> Self {
        Stepper {
            cur: medium.step_sample(tilt, &x0),
            medium,
            tilt,
            dt,
            sqrt_dt: dt.sqrt(),
            x: x0,
            clock: 0.0,
            rng: path_stream(seed, path_id),
            step: 0,
        }
    }

    /// One Euler–Maruyama step; clock by the trapezoid rule.
    fn advance(&mut self) -> Result<()> {
        let d = self.medium.dim();
        let mut xi = ZERO;
        for j in 0..d {
            xi[j] = self.rng.sample::<f64, _>(StandardNormal);
        }
        let noise = self.cur.root.mul_vec(&xi);
        for j in 0..d {
            self.x[j] += self.cur.drift[j] * self.dt + self.sqrt_dt * noise[j];
            if !self.x[j].is_finite() {
                return Err(Error::data(format!(
                    "non-finite state in coordinate {j} at step {}",
                    self.step + 1
                )));
            }
        }
        let next = self.medium.step_sample(self.tilt, &self.x);
        self.clock += 0.5 * self.dt * (self.cur.weight + next.weight);
        self.cur = next;
        self.step += 1;
        Ok(())
    }
}

#[inline]
fn outside_cube(d: usize, x: &Coord, half_side: f64) -> bool {
    (0..d).any(|j| x[j].abs() >= half_side)
}

/// Simulates one path started at `x0`; `path_id` selects the RNG stream.
pub fn simulate_path(
    medium: &dyn Medium,
    params: &SimParams,
    x0: Coord,
    path_id: u64,
) -> Result<PathSample> {
    params.validate()?;
    let d = medium.dim();
    let n_steps = (params.horizon / params.dt).round().max(1.0) as usize;
    let half_side = params.absorb_level.map(|l| 3f64.powi(l) / 2.0);
    let mut stepper = Stepper::new(medium, params.tilt, params.dt, x0, params.seed, path_id);
    let mut positions = Vec::with_capacity((n_steps + 1) * d);
    let mut clock = Vec::with_capacity(n_steps + 1);
    positions.extend_from_slice(&x0[..d]);
    clock.push(0.0);
    let mut exit_step = None;
    for k in 1..=n_steps {
        stepper.advance()?;
        positions.extend_from_slice(&stepper.x[..d]);
        clock.push(stepper.clock);
        if let Some(h) = half_side {
            if outside_cube(d, &stepper.x, h) {
                exit_step = Some(k);
                break;
            }
        }
    }
    Ok(PathSample {
        dim: d,
        dt: params.dt,
        positions,
        clock,
        seed: params.seed,
        path_id,
        exit_step,
    })
}

/// Simulates the whole ensemble (parallel over paths, result in path order).
pub fn simulate_ensemble(medium: &dyn Medium, params: &SimParams, x0: Coord) -> Result<Vec<PathSample>> {
    params.validate()?;
    let results = exec::map_indices(params.n_paths, |i| simulate_path(medium, params, x0, i as u64));
    results.into_iter().collect()
}

/// Sequential reference for the benchmark suite.
pub fn simulate_ensemble_seq(
    medium: &dyn Medium,
    params: &SimParams,
    x0: Coord,
) -> Result<Vec<PathSample>> {
    params.validate()?;
    let results = exec::map_indices_seq(params.n_paths, |i| simulate_path(medium, params, x0, i as u64));
    results.into_iter().collect()
}

/// Runs a path without storing it, folding `(step, x, clock, weight)` into
/// `acc`; stops early when the callback returns `false`.
pub(crate) fn fold_path<T>(
    medium: &dyn Medium,
    tilt: f64,
    dt: f64,
    max_steps: usize,
    x0: Coord,
    seed: u64,
    path_id: u64,
    mut acc: T,
    mut f: impl FnMut(&mut T, usize, &Coord, f64, f64) -> bool,
) -> Result<T> {
    let mut stepper = Stepper::new(medium, tilt, dt, x0, seed, path_id);
    if !f(&mut acc, 0, &stepper.x, 0.0, stepper.cur.weight) {
        return Ok(acc);
    }
    for k in 1..=max_steps {
        stepper.advance()?;
        if !f(&mut acc, k, &stepper.x, stepper.clock, stepper.cur.weight) {
            break;
        }
    }
    Ok(acc)
}

/// Inverts the time change by monotone linear interpolation of the clock:
/// returns the path `X(t) = Y(A⁻¹(t))` on the uniform grid with the same
/// step, defined for `t ∈ [0, A(T)]`. The new clock column is `A⁻¹(t)`, so
/// applying the inversion twice recovers the original parametrization up to
/// interpolation error.
pub fn invert_time_change(path: &PathSample) -> Result<PathSample> {
    let n = path.n_steps();
    for k in 0..n {
        if path.clock[k + 1] <= path.clock[k] {
            return Err(Error::data(format!(
                "clock is not strictly increasing at step {k}"
            )));
        }
    }
    let total = path.final_clock();
    let m = (total / path.dt + 1e-9).floor() as usize;
    let d = path.dim;
    let mut positions = Vec::with_capacity((m + 1) * d);
    let mut clock = Vec::with_capacity(m + 1);
    let mut seg = 0usize;
    for j in 0..=m {
        let t = j as f64 * path.dt;
        while seg + 2 < path.clock.len() && path.clock[seg + 1] < t {
            seg += 1;
        }
        // t lies in [clock[seg], clock[seg+1]]
        let (a, b) = (path.clock[seg], path.clock[seg + 1]);
        let frac = if b > a { (t - a) / (b - a) } else { 0.0 };
        let s = (seg as f64 + frac) * path.dt;
        let p = path.position_at(s);
        positions.extend_from_slice(&p[..d]);
        clock.push(s);
    }
    Ok(PathSample {
        dim: d,
        dt: path.dt,
        positions,
        clock,
        seed: path.seed,
        path_id: path.path_id,
        exit_step: None,
    })
}

/// Direct velocity estimator: mean over paths of `position(T)/T`, with
/// per-coordinate standard errors. Requires λ > 0 and T ≥ 10·λ⁻².
pub fn estimate_velocity_direct(medium: &dyn Medium, params: &SimParams) -> Result<(Coord, Coord)> {
    params.validate()?;
    if params.tilt <= 0.0 {
        return Err(Error::config("velocity estimation needs tilt > 0"));
    }
    if params.horizon < 10.0 * params.tilt.powi(-2) {
        return Err(Error::config(format!(
            "horizon {} too short: need T >= 10 lambda^-2 = {}",
            params.horizon,
            10.0 * params.tilt.powi(-2)
        )));
    }
    let d = medium.dim();
    let n_steps = (params.horizon / params.dt).round() as usize;
    let finals: Result<Vec<Coord>> = exec::map_indices(params.n_paths, |i| {
        fold_path(
            medium,
            params.tilt,
            params.dt,
            n_steps,
            ZERO,
            params.seed,
            i as u64,
            ZERO,
            |acc, _, x, _, _| {
                *acc = *x;
                true
            },
        )
    })
    .into_iter()
    .collect();
    let finals = finals?;
    let t = n_steps as f64 * params.dt;
    let mut mean = ZERO;
    let mut se = ZERO;
    for j in 0..d {
        let vals: Vec<f64> = finals.iter().map(|p| p[j] / t).collect();
        let (m, s) = stats::mean_se(&vals);
        mean[j] = m;
        se[j] = s;
    }
    Ok((mean, se))
}

/// Monte Carlo diffusivity at zero tilt: the empirical covariance of
/// `X(T)/√T` in the physical parametrization (after inverting the clock),
/// symmetrized. Returns the matrix and componentwise standard errors.
pub fn estimate_diffusivity_mc(
    medium: &dyn Medium,
    params: &SimParams,
) -> Result<(DenseMat, DenseMat)> {
    params.validate()?;
    if params.tilt != 0.0 {
        return Err(Error::config("diffusivity estimation requires tilt = 0"));
    }
    let d = medium.dim();
    let target = params.horizon;
    // run each path until its clock passes T; e^{-2V} ≥ Λ⁻¹ bounds the steps
    let max_steps =
        ((target * medium.ellipticity() / params.dt).ceil() as usize).max(16) + 16;
    let finals: Result<Vec<Coord>> = exec::map_indices(params.n_paths, |i| {
        let hit = fold_path(
            medium,
            0.0,
            params.dt,
            max_steps,
            ZERO,
            params.seed,
            i as u64,
            (ZERO, 0.0f64, ZERO, 0.0f64), // (prev x, prev clock, cur x, cur clock)
            |acc, _, x, clock, _| {
                acc.0 = acc.2;
                acc.1 = acc.3;
                acc.2 = *x;
                acc.3 = clock;
                clock < target
            },
        )?;
        let (xa, ca, xb, cb) = hit;
        if cb < target {
            return Err(Error::budget(format!(
                "path {i}: clock reached only {cb} of target {target}"
            )));
        }
        // interpolate the position at clock time T
        let frac = if cb > ca { (target - ca) / (cb - ca) } else { 1.0 };
        let mut p = ZERO;
        for j in 0..d {
            p[j] = xa[j] + frac * (xb[j] - xa[j]);
        }
        Ok(p)
    })
    .into_iter()
    .collect();
    let finals = finals?;
    let n = finals.len();
    let scale = 1.0 / target.sqrt();
    let mut cov = DenseMat::zeros(d);
    let mut se = DenseMat::zeros(d);
    for i in 0..d {
        for j in i..d {
            let xi: Vec<f64> = finals.iter().map(|p| p[i] * scale).collect();
            let xj: Vec<f64> = finals.iter().map(|p| p[j] * scale).collect();
            let c = stats::covariance(&xi, &xj);
            // moment standard error of the cross products
            let prods: Vec<f64> = xi.iter().zip(&xj).map(|(a, b)| a * b).collect();
            let s = (stats::variance(&prods) / n as f64).sqrt();
            cov.set(i, j, c);
            cov.set(j, i, c);
            se.set(i, j, s);
            se.set(j, i, s);
        }
    }
    Ok((cov, se))
}

/// Path dump: CSV columns (path_id, step, t, x_1..x_d, clock).
pub fn write_paths_csv<W: std::io::Write>(paths: &[PathSample], mut w: W) -> Result<()> {
    if paths.is_empty() {
        return Ok(());
    }
    let d = paths[0].dim;
    let xs: Vec<String> = (1..=d).map(|j| format!("x_{j}")).collect();
    writeln!(w, "path_id,step,t,{},clock", xs.join(","))?;
    for p in paths {
        for k in 0..=p.n_steps() {
            let pos = p.position(k);
            let coords: Vec<String> = (0..d).map(|j| format!("{}", pos[j])).collect();
            writeln!(
                w,
                "{},{},{},{},{}",
                p.path_id,
                k,
                k as f64 * p.dt,
                coords.join(","),
                p.clock_value(k)
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{build_environment, EnvParams};
    use crate::medium::ConstantMedium;

    fn flat() -> ConstantMedium {
        ConstantMedium::isotropic(2, 1.0, 0.0)
    }

    #[test]
    fn drift_constant_coefficients() {
        let m = flat();
        let b = ito_drift(&m, 0.1, &[3.0, -2.0, 0.0]);
        assert!((b[0] - 0.1).abs() < 1e-15);
        assert!(b[1].abs() < 1e-15);
    }

    #[test]
    fn drift_locally_linear_potential() {
        // V = v x₁ near x: ½∇·(e^{-2V} I) = -v e^{-2V} e₁ at tilt 0
        struct LinearV;
        impl Medium for LinearV {
            fn dim(&self) -> usize {
                2
            }
            fn ellipticity(&self) -> f64 {
                4.0
            }
            fn a(&self, _x: &Coord) -> SymMat {
                SymMat::identity(2)
            }
            fn div_a(&self, _x: &Coord) -> Coord {
                ZERO
            }
            fn potential(&self, x: &Coord) -> f64 {
                0.4 * x[0]
            }
            fn grad_potential(&self, _x: &Coord) -> Coord {
                [0.4, 0.0, 0.0]
            }
        }
        let m = LinearV;
        let x = [0.3, 1.0, 0.0];
        let b = ito_drift(&m, 0.0, &x);
        let expect = -0.4 * (-2.0 * 0.4 * x[0]).exp();
        assert!((b[0] - expect).abs() < 1e-14, "{} vs {expect}", b[0]);
        assert!(b[1].abs() < 1e-15);
    }

    #[test]
    fn drift_matches_finite_difference_divergence() {
        let env = build_environment(EnvParams::default()).unwrap();
        let steps = [0.02, 0.01];
        let mut worst = [0.0f64; 2];
        for (si, &h) in steps.iter().enumerate() {
            for k in 0..1000u64 {
                let hsh = crate::rng::substream(5, 5, k);
                let x = [
                    (crate::rng::unit(hsh) - 0.5) * 20.0,
                    (crate::rng::unit(crate::rng::mix64(hsh)) - 0.5) * 20.0,
                    0.0,
                ];
                let b = ito_drift(&env, 0.0, &x);
                // centered finite difference of ½ ∇·ã
                let mut fd = ZERO;
                for i in 0..2 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[i] += h;
                    xm[i] -= h;
                    let ap = env.a_weighted(&xp);
                    let am = env.a_weighted(&xm);
                    for j in 0..2 {
                        fd[j] += 0.5 * (ap.get(i, j) - am.get(i, j)) / (2.0 * h);
                    }
                }
                for j in 0..2 {
                    worst[si] = worst[si].max((fd[j] - b[j]).abs());
                }
            }
        }
        assert!(worst[0] < 0.02, "coarse error {}", worst[0]);
        let ratio = worst[0] / worst[1].max(1e-300);
        assert!((3.0..5.5).contains(&ratio), "ratio {ratio}, {worst:?}");
    }

    #[test]
    fn root_identity_and_diagonal() {
        let m = flat();
        let r = diffusion_root(&m, &ZERO);
        assert!((r.get(0, 0) - 1.0).abs() < 1e-15);
        let m2 = ConstantMedium {
            dim: 2,
            a: SymMat::diagonal(2, &[4.0, 1.0]),
            potential: 0.0,
            ellipticity: 4.0,
        };
        let r = diffusion_root(&m2, &ZERO);
        assert!((r.get(0, 0) - 2.0).abs() < 1e-14);
        assert!((r.get(1, 1) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn root_squares_back_on_random_environment() {
        let env = build_environment(EnvParams::default()).unwrap();
        for k in 0..200u64 {
            let h = crate::rng::substream(8, 3, k);
            let x = [
                (crate::rng::unit(h) - 0.5) * 20.0,
                (crate::rng::unit(crate::rng::mix64(h)) - 0.5) * 20.0,
                0.0,
            ];
            let at = env.a_weighted(&x);
            let r = diffusion_root(&env, &x);
            for i in 0..2 {
                for j in 0..2 {
                    let mut s = 0.0;
                    for l in 0..2 {
                        s += r.get(i, l) * r.get(l, j);
                    }
                    assert!(
                        (s - at.get(i, j)).abs() <= 1e-12 * at.get(i, i).abs().max(1.0),
                        "root² mismatch at {x:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn seed_determinism_bitwise() {
        let env = build_environment(EnvParams::default()).unwrap();
        let params = SimParams {
            tilt: 0.1,
            dt: 0.01,
            horizon: 5.0,
            n_paths: 1,
            seed: 77,
            absorb_level: None,
        };
        let a = simulate_path(&env, &params, ZERO, 0).unwrap();
        let b = simulate_path(&env, &params, ZERO, 0).unwrap();
        assert_eq!(a.positions, b.positions);
        assert_eq!(a.clock, b.clock);
    }

    #[test]
    fn driftless_bm_centered_and_tilted_bm_ballistic() {
        let m = flat();
        let params = SimParams {
            tilt: 0.0,
            dt: 0.01,
            horizon: 10.0,
            n_paths: 400,
            seed: 11,
            absorb_level: None,
        };
        let paths = simulate_ensemble(&m, &params, ZERO).unwrap();
        let t = params.horizon;
        for j in 0..2 {
            let vals: Vec<f64> = paths.iter().map(|p| p.final_position()[j]).collect();
            let (mean, se) = stats::mean_se(&vals);
            assert!(mean.abs() <= 3.0 * se.max(1e-9), "coordinate {j}: {mean} vs se {se}");
        }
        // clock equals time exactly when V ≡ 0
        assert!((paths[0].final_clock() - t).abs() < 1e-9);

        let params = SimParams {
            tilt: 0.1,
            n_paths: 1000,
            ..params
        };
        let paths = simulate_ensemble(&m, &params, ZERO).unwrap();
        let vals: Vec<f64> = paths.iter().map(|p| p.final_position()[0]).collect();
        let (mean, se) = stats::mean_se(&vals);
        assert!(
            (mean - params.tilt * t).abs() <= 3.0 * se,
            "E[x1(T)] = {mean} vs {}",
            params.tilt * t
        );
    }

    #[test]
    fn quadratic_variation_matches_trace() {
        let env = build_environment(EnvParams { seed: 23, ..EnvParams::default() }).unwrap();
        let dt = 0.005;
        let n = 100_000usize;
        let mut sum_sq = 0.0;
        let mut sum_tr = 0.0;
        let mut prev = ZERO;
        let mut prev_tr = {
            let at = env.a_weighted(&ZERO);
            at.get(0, 0) + at.get(1, 1)
        };
        fold_path(&env, 0.0, dt, n, ZERO, 91, 0, (), |_, k, x, _, _| {
            if k > 0 {
                let dx = crate::geom::sub(2, x, &prev);
                sum_sq += crate::geom::dot(2, &dx, &dx);
                sum_tr += prev_tr * dt;
            }
            prev = *x;
            let at = env.a_weighted(x);
            prev_tr = at.get(0, 0) + at.get(1, 1);
            true
        })
        .unwrap();
        let rel = (sum_sq - sum_tr).abs() / sum_tr;
        // per-step mean is trace(ã)Δt + O(Δt²); the MC error over 1e5 steps
        // dominates and scales like √(2/n)
        assert!(rel < 0.02, "relative quadratic-variation error {rel}");
    }

    #[test]
    fn invert_time_change_identity_when_potential_zero() {
        let m = flat();
        let params = SimParams {
            tilt: 0.1,
            dt: 0.01,
            horizon: 5.0,
            n_paths: 1,
            seed: 3,
            absorb_level: None,
        };
        let y = simulate_path(&m, &params, ZERO, 0).unwrap();
        let x = invert_time_change(&y).unwrap();
        assert_eq!(x.n_steps(), y.n_steps());
        for k in 0..=x.n_steps() {
            let a = x.position(k);
            let b = y.position(k);
            for j in 0..2 {
                assert!((a[j] - b[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn invert_time_change_constant_potential_rescales() {
        // V ≡ 0.5: A(s) = e^{-1} s, so X(t) = Y(e·t)
        let m = ConstantMedium::isotropic(2, 1.0, 0.5);
        let params = SimParams {
            tilt: 0.0,
            dt: 0.01,
            horizon: 8.0,
            n_paths: 1,
            seed: 5,
            absorb_level: None,
        };
        let y = simulate_path(&m, &params, ZERO, 0).unwrap();
        let x = invert_time_change(&y).unwrap();
        let e = std::f64::consts::E;
        // check at the grid times of the inverted path, where both sides
        // interpolate the same underlying segment
        let step = x.n_steps() / 101;
        for i in 1..=100 {
            let k = i * step.max(1);
            if k >= x.n_steps() {
                break;
            }
            let t = k as f64 * x.dt;
            let xa = x.position(k);
            let yb = y.position_at((e * t).min(y.horizon()));
            for j in 0..2 {
                assert!(
                    (xa[j] - yb[j]).abs() < 1e-9,
                    "X({t}) = {:?} vs Y(e t) = {:?}",
                    xa,
                    yb
                );
            }
        }
    }

    #[test]
    fn invert_round_trip_recovers_positions() {
        let env = build_environment(EnvParams { seed: 31, ..EnvParams::default() }).unwrap();
        let params = SimParams {
            tilt: 0.1,
            dt: 0.01,
            horizon: 10.0,
            n_paths: 1,
            seed: 9,
            absorb_level: None,
        };
        let y = simulate_path(&env, &params, ZERO, 0).unwrap();
        let x = invert_time_change(&y).unwrap();
        let y2 = invert_time_change(&x).unwrap();
        // the reconstruction is piecewise linear with shifted breakpoints,
        // so the round-trip error is bounded by the drift tolerance
        // 2·Δt·Λ·max|b| plus the largest one-step diffusive increment
        let mut max_drift: f64 = 0.0;
        let mut max_step: f64 = 0.0;
        for k in 0..=y.n_steps() {
            let b = ito_drift(&env, params.tilt, &y.position(k));
            max_drift = max_drift.max(crate::geom::norm(2, &b));
            if k > 0 {
                let d = crate::geom::sub(2, &y.position(k), &y.position(k - 1));
                max_step = max_step.max(crate::geom::norm(2, &d));
            }
        }
        let lam = env.params.ellipticity;
        let tol = 2.0 * params.dt * lam * max_drift.max(1.0) + max_step;
        for k in 0..=y2.n_steps() {
            let t = k as f64 * y2.dt;
            if t > y.horizon() - 2.0 * params.dt {
                break;
            }
            let a = y2.position(k);
            let b = y.position_at(t);
            for j in 0..2 {
                assert!(
                    (a[j] - b[j]).abs() <= tol,
                    "round trip at t = {t}: {} vs {} (tol {tol})",
                    a[j],
                    b[j]
                );
            }
        }
    }

    #[test]
    fn non_monotone_clock_is_rejected() {
        let path = PathSample {
            dim: 2,
            dt: 0.1,
            positions: vec![0.0; 6],
            clock: vec![0.0, 0.2, 0.1],
            seed: 0,
            path_id: 0,
            exit_step: None,
        };
        assert!(invert_time_change(&path).is_err());
    }

    #[test]
    fn velocity_direct_scaled_identity() {
        for c in [1.0, 2.0] {
            let m = ConstantMedium::isotropic(2, c, 0.0);
            let params = SimParams {
                tilt: 0.2,
                dt: 0.01,
                horizon: 10.0 * 0.2f64.powi(-2),
                n_paths: 200,
                seed: 13,
                absorb_level: None,
            };
            let (v, se) = estimate_velocity_direct(&m, &params).unwrap();
            assert!(
                (v[0] - params.tilt * c).abs() <= 3.0 * se[0],
                "c = {c}: v = {} vs {}",
                v[0],
                params.tilt * c
            );
            assert!(v[1].abs() <= 3.0 * se[1]);
        }
    }

    #[test]
    fn velocity_direct_requires_long_horizon() {
        let m = flat();
        let params = SimParams {
            tilt: 0.1,
            dt: 0.01,
            horizon: 10.0,
            n_paths: 4,
            seed: 1,
            absorb_level: None,
        };
        assert!(estimate_velocity_direct(&m, &params).is_err());
    }

    #[test]
    fn diffusivity_identity_and_scaled() {
        for c in [1.0, 1.5] {
            let m = ConstantMedium::isotropic(2, c, 0.0);
            let params = SimParams {
                tilt: 0.0,
                dt: 0.01,
                horizon: 100.0,
                n_paths: 300,
                seed: 17,
                absorb_level: None,
            };
            let (sigma, se) = estimate_diffusivity_mc(&m, &params).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let target = if i == j { c } else { 0.0 };
                    assert!(
                        (sigma.get(i, j) - target).abs() <= 3.0 * se.get(i, j).max(1e-6),
                        "c = {c}, entry ({i},{j}): {} vs {target}",
                        sigma.get(i, j)
                    );
                }
            }
        }
    }

    #[test]
    fn clock_bounds_hold_on_random_environment() {
        let env = build_environment(EnvParams { seed: 91, ..EnvParams::default() }).unwrap();
        let params = SimParams {
            tilt: 0.2,
            dt: 0.01,
            horizon: 20.0,
            n_paths: 8,
            seed: 51,
            absorb_level: None,
        };
        let lam = env.params.ellipticity;
        for p in simulate_ensemble(&env, &params, ZERO).unwrap() {
            for k in 1..=p.n_steps() {
                let s = k as f64 * p.dt;
                let a = p.clock_value(k);
                assert!(a >= s / lam - 1e-12 && a <= s * lam + 1e-12, "clock {a} at {s}");
                assert!(a > p.clock_value(k - 1), "clock must strictly increase");
            }
        }
    }

    #[test]
    fn absorbing_cube_records_exit() {
        let m = flat();
        let params = SimParams {
            tilt: 0.5,
            dt: 0.004,
            horizon: 500.0,
            n_paths: 1,
            seed: 2,
            absorb_level: Some(1),
        };
        let p = simulate_path(&m, &params, ZERO, 0).unwrap();
        let k = p.exit_step.expect("tilted path must exit the unit-level cube");
        assert!(outside_cube(2, &p.position(k), 1.5));
        assert_eq!(k, p.n_steps());
    }
}

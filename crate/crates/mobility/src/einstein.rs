//! Headline experiments: the mobility error and its rate in the tilt, the
//! Feynman–Kac two-oracle cross-check, and the Girsanov / exit-time
//! consistency checks.
//!
//! The mobility error combines four estimates through the time-change
//! identities `ℓ_X = η⁻¹ ℓ` and `Σ_X = E[e^{-2V}]⁻¹ ā`:
//!
//! ```text
//! error(λ) = ℓ_X(λ)/λ − Σ_X e₁ ,
//! ```
//!
//! with `ℓ, η` from renewal blocks, `ā` from finite-volume correctors and
//! `E[e^{-2V}]` by stationary sampling. Per-tilt resolvent scales follow
//! `m(λ) = ⌈−log₃λ/(1−α)⌉`, `ρ = λ·3^m`, `h = ⌊ζm⌋`.
//!
//! No closed-form target exists for the rate: the underlying statement is
//! quenched and asymptotic with non-explicit constants, so the experiments
//! check properties — positivity and stability of the fitted exponent, and
//! agreement between independent oracles — rather than reference numbers.

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::diffusion::{fold_path, simulate_path, SimParams};
use crate::elliptic::{
    homogenized_matrix, solve_dirichlet, solve_velocity_resolvent, CubeGrid, HomogenizedMatrix,
    ScalarField, WeightedOperator,
};
use crate::environment::{build_environment, mean_clock_weight, EnvironmentField};
use crate::error::{Error, Result};
use crate::exec;
use crate::geom::{dot, norm, Coord, DenseMat, ZERO};
use crate::medium::Medium;
use crate::renewal::{
    detect_regenerations, estimate_clock_rate, estimate_velocity_renewal, RegenParams,
    RegenerationBlock,
};
use crate::rng::substream;
use crate::stats;

/// Per-tilt critical scales: `m = ⌈−log₃λ/(1−α)⌉`, `ρ = λ·3^m`, `h = ⌊ζm⌋`.
pub fn critical_scales(tilt: f64, alpha: f64, zeta: f64) -> (i32, i32, f64) {
    assert!(tilt > 0.0 && tilt <= 1.0);
    assert!((0.0..0.5).contains(&alpha) && zeta >= 0.0);
    let m = ((-tilt.ln() / 3f64.ln()) / (1.0 - alpha)).ceil().max(1.0) as i32;
    let rho = tilt * 3f64.powi(m);
    let h = (zeta * m as f64).floor() as i32;
    (m, h, rho)
}

/// Exponent defaults: β_h = 1/8, δ = 2β_h/(d+4), α = δ/4, ε = α/2.
pub fn default_alpha(dim: usize, beta_h: f64) -> f64 {
    2.0 * beta_h / (dim as f64 + 4.0) / 4.0
}

/// Largest admissible rate exponent β* = δ/(2(2−δ)) behind the defaults,
/// reported as a comparison line next to measured fits.
pub fn reference_rate_exponent(dim: usize, beta_h: f64) -> f64 {
    let delta = 2.0 * beta_h / (dim as f64 + 4.0);
    delta / (2.0 * (2.0 - delta))
}

// ---------------------------------------------------------------------------
// Feynman–Kac cross-check
// ---------------------------------------------------------------------------

/// Two independent estimates of the velocity resolvent at the origin: the
/// elliptic solve and the Monte Carlo average of the stopped functional
/// `ρ3^{-2m} ∫₀^τ e^{-ρ3^{-2m}t} X(t) dt + e^{-ρ3^{-2m}τ}(X(τ) + 3^m ā e₁)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FkCheck {
    pub m: i32,
    pub buffer: i32,
    pub rho: f64,
    pub pde: [f64; 3],
    pub mc: [f64; 3],
    pub mc_se: [f64; 3],
    pub grid_spacing: f64,
    pub n_paths: usize,
    pub unexited_fraction: f64,
    pub solver_iterations: Vec<usize>,
    /// |pde − mc| per coordinate.
    pub gap: [f64; 3],
    /// 3·mc_se + 5·h_grid·Λ per coordinate: the comparison tolerance.
    pub tolerance: [f64; 3],
    pub agree: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn fk_crosscheck(
    medium: &dyn Medium,
    abar: &DenseMat,
    m: i32,
    buffer: i32,
    rho: f64,
    grid_nodes: usize,
    n_paths: usize,
    dt: f64,
    seed: u64,
    tol: f64,
) -> Result<FkCheck> {
    if m + buffer > 5 {
        return Err(Error::config(
            "Feynman-Kac cross-check is limited to small cubes (m + h <= 5)",
        ));
    }
    let d = medium.dim();
    let grid = CubeGrid::new(d, m + buffer, grid_nodes)?;
    let (u, reports) = solve_velocity_resolvent(medium, &grid, m, buffer, rho, abar, tol)?;
    let origin = grid.origin_index()?;
    let mut pde = [0.0f64; 3];
    for (i, comp) in u.iter().enumerate() {
        pde[i] = comp.values[origin];
    }

    let tilt = rho * 3f64.powi(-m);
    let rate = rho * 3f64.powi(-2 * m);
    let side = grid.side();
    let half = side / 2.0;
    let boundary_shift = {
        let b = abar.mul_vec(&crate::geom::e1());
        crate::geom::scale(d, 3f64.powi(m), &b)
    };
    let cap_t = 20.0 * half * half * medium.ellipticity();
    let max_steps = (cap_t / dt).ceil() as usize;

    struct Acc {
        integral: Coord,
        prev_weighted: Coord,
        prev_t: f64,
        value: Option<Coord>,
    }
    let per_path: Result<Vec<(Coord, bool)>> = exec::map_indices(n_paths, |i| {
        let acc = Acc {
            integral: ZERO,
            prev_weighted: ZERO,
            prev_t: 0.0,
            value: None,
        };
        let out = fold_path(
            medium,
            tilt,
            dt,
            max_steps,
            ZERO,
            seed,
            i as u64,
            acc,
            |acc, k, x, _clock, _w| {
                let t = k as f64 * dt;
                let damp = (-rate * t).exp();
                let mut weighted = ZERO;
                for j in 0..d {
                    weighted[j] = damp * x[j];
                }
                if k > 0 {
                    for j in 0..d {
                        acc.integral[j] += 0.5 * (t - acc.prev_t) * (weighted[j] + acc.prev_weighted[j]);
                    }
                }
                acc.prev_weighted = weighted;
                acc.prev_t = t;
                let exited = (0..d).any(|j| x[j].abs() >= half);
                if exited {
                    let mut v = ZERO;
                    for j in 0..d {
                        v[j] = rate * acc.integral[j] + damp * (x[j] + boundary_shift[j]);
                    }
                    acc.value = Some(v);
                    return false;
                }
                true
            },
        )?;
        match out.value {
            Some(v) => Ok((v, true)),
            None => {
                // never exited within the budget: the residual boundary term
                // is exponentially negligible at the cap
                let mut v = ZERO;
                for j in 0..d {
                    v[j] = rate * out.integral[j];
                }
                Ok((v, false))
            }
        }
    })
    .into_iter()
    .collect();
    let per_path = per_path?;
    let unexited = per_path.iter().filter(|(_, exited)| !exited).count();
    let unexited_fraction = unexited as f64 / n_paths as f64;
    if unexited_fraction > 0.01 {
        return Err(Error::budget(format!(
            "{unexited} of {n_paths} paths did not exit the cube within the step budget"
        )));
    }

    let mut mc = [0.0f64; 3];
    let mut mc_se = [0.0f64; 3];
    for j in 0..d {
        let vals: Vec<f64> = per_path.iter().map(|(v, _)| v[j]).collect();
        let (mean, se) = stats::mean_se(&vals);
        mc[j] = mean;
        mc_se[j] = se;
    }

    let lam = medium.ellipticity();
    let mut gap = [0.0f64; 3];
    let mut tolerance = [0.0f64; 3];
    let mut agree = true;
    for j in 0..d {
        gap[j] = (pde[j] - mc[j]).abs();
        tolerance[j] = 3.0 * mc_se[j] + 5.0 * grid.spacing() * lam;
        if gap[j] > tolerance[j] {
            agree = false;
        }
    }

    Ok(FkCheck {
        m,
        buffer,
        rho,
        pde,
        mc,
        mc_se,
        grid_spacing: grid.spacing(),
        n_paths,
        unexited_fraction,
        solver_iterations: reports.iter().map(|r| r.iterations).collect(),
        gap,
        tolerance,
        agree,
    })
}

// ---------------------------------------------------------------------------
// Mobility error
// ---------------------------------------------------------------------------

/// Budgets and numerical knobs of one mobility-error evaluation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MobilityOptions {
    pub dt: f64,
    pub n_paths: usize,
    /// Path horizon in units of λ⁻².
    pub horizon_mult: f64,
    pub sim_seed: u64,
    pub regen: RegenParams,
    pub hom_level: i32,
    pub hom_nodes: usize,
    pub mw_samples: usize,
    pub tol: f64,
}

impl MobilityOptions {
    pub fn from_config(cfg: &Config) -> Self {
        MobilityOptions {
            dt: cfg.dt,
            n_paths: cfg.rate_paths,
            horizon_mult: cfg.rate_horizon_mult,
            sim_seed: cfg.sim_seed,
            regen: RegenParams {
                scale_multiplier: cfg.regen_l,
                mark_probability: cfg.regen_pstar,
                horizon_multiplier: cfg.regen_k,
                marks_seed: cfg.marks_seed,
            },
            hom_level: cfg.hom_level,
            hom_nodes: cfg.hom_nodes,
            mw_samples: cfg.mw_samples,
            tol: cfg.solve_tol,
        }
    }
}

/// One mobility-error evaluation with its breakdown into the velocity and
/// clock contributions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MobilityError {
    pub tilt: f64,
    pub ell: [f64; 3],
    pub ell_se: [f64; 3],
    pub eta: f64,
    pub eta_se: f64,
    pub mean_weight: f64,
    pub mean_weight_se: f64,
    pub abar: HomogenizedMatrix,
    /// Σ_X = mean_weight⁻¹ ā.
    pub sigma_x: [[f64; 3]; 3],
    /// ℓ_X = η⁻¹ ℓ.
    pub ell_x: [f64; 3],
    /// ℓ_X/λ − Σ_X e₁.
    pub error: [f64; 3],
    pub error_norm: f64,
    /// Propagated standard error of the error vector norm.
    pub error_se: f64,
    /// |ℓ(λ)/λ − ā e₁|: the velocity half of the split.
    pub velocity_breakdown: f64,
    /// |η(λ) − E[e^{-2V}]|: the clock half.
    pub clock_breakdown: f64,
    pub n_blocks: usize,
}

/// Computes the mobility error for one environment at one tilt.
pub fn einstein_error(
    env: &EnvironmentField,
    tilt: f64,
    opts: &MobilityOptions,
) -> Result<MobilityError> {
    let grid = CubeGrid::new(env.dim(), opts.hom_level, opts.hom_nodes)?;
    let hm = homogenized_matrix(env, &grid, opts.tol)?;
    let (mw, mw_se) = mean_clock_weight(env, opts.mw_samples);
    einstein_error_with(env, tilt, opts, hm, mw, mw_se)
}

/// Mobility error with the tilt-independent pieces (homogenized matrix and
/// mean clock weight) supplied by the caller, so a tilt sweep computes them
/// once per environment.
pub fn einstein_error_with(
    env: &EnvironmentField,
    tilt: f64,
    opts: &MobilityOptions,
    hm: HomogenizedMatrix,
    mw: f64,
    mw_se: f64,
) -> Result<MobilityError> {
    if !(0.0 < tilt && tilt <= 1.0) {
        return Err(Error::config(format!("tilt = {tilt} outside (0, 1]")));
    }
    opts.regen.validate(env.params.dependence_range)?;
    let d = env.dim();

    // renewal blocks from an ensemble of tilted paths
    let horizon = opts.horizon_mult * tilt.powi(-2);
    let params = SimParams {
        tilt,
        dt: opts.dt,
        horizon,
        n_paths: opts.n_paths,
        seed: opts.sim_seed,
        absorb_level: None,
    };
    params.validate()?;
    let per_path: Result<Vec<Vec<RegenerationBlock>>> = exec::map_indices(opts.n_paths, |i| {
        let path = simulate_path(env, &params, ZERO, i as u64)?;
        let (blocks, _) = detect_regenerations(&path, tilt, &opts.regen)?;
        Ok(blocks)
    })
    .into_iter()
    .collect();
    let mut blocks = Vec::new();
    for bs in per_path? {
        blocks.extend(bs);
    }

    let (ell, ell_se) = estimate_velocity_renewal(&blocks, d)?;
    let (eta, eta_se) = estimate_clock_rate(&blocks)?;

    assemble_mobility(tilt, d, ell, ell_se, eta, eta_se, mw, mw_se, hm, blocks.len())
}

#[allow(clippy::too_many_arguments)]
fn assemble_mobility(
    tilt: f64,
    d: usize,
    ell: Coord,
    ell_se: Coord,
    eta: f64,
    eta_se: f64,
    mw: f64,
    mw_se: f64,
    hm: HomogenizedMatrix,
    n_blocks: usize,
) -> Result<MobilityError> {
    let abar = hm.dense();
    let abar_e1 = abar.mul_vec(&crate::geom::e1());

    let mut sigma_x = [[0.0f64; 3]; 3];
    for i in 0..d {
        for j in 0..d {
            sigma_x[i][j] = abar.get(i, j) / mw;
        }
    }
    let mut ell_x = [0.0f64; 3];
    let mut error = [0.0f64; 3];
    let mut err_var = 0.0f64;
    for j in 0..d {
        ell_x[j] = ell[j] / eta;
        error[j] = ell_x[j] / tilt - sigma_x[j][0];
        let se_stat = (ell_se[j] / (eta * tilt)).powi(2)
            + (ell[j] * eta_se / (eta * eta * tilt)).powi(2)
            + (abar_e1[j] * mw_se / (mw * mw)).powi(2);
        err_var += se_stat;
    }
    let mut verr = ZERO;
    for j in 0..d {
        verr[j] = ell[j] / tilt - abar_e1[j];
    }

    Ok(MobilityError {
        tilt,
        ell: [ell[0], ell[1], ell[2]],
        ell_se: [ell_se[0], ell_se[1], ell_se[2]],
        eta,
        eta_se,
        mean_weight: mw,
        mean_weight_se: mw_se,
        abar: hm,
        sigma_x,
        ell_x,
        error,
        error_norm: norm(d, &[error[0], error[1], error[2]]),
        error_se: err_var.sqrt(),
        velocity_breakdown: norm(d, &verr),
        clock_breakdown: (eta - mw).abs(),
        n_blocks,
    })
}

// ---------------------------------------------------------------------------
// Rate experiment
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitSummary {
    pub exponent: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

fn fit_summary(points: &[(f64, f64)]) -> FitSummary {
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let fit = stats::linear_fit(&xs, &ys);
    let (lo, hi) = fit.slope_ci(0.95);
    FitSummary {
        exponent: fit.slope,
        ci_low: lo,
        ci_high: hi,
        r_squared: fit.r_squared,
        n_points: points.len(),
    }
}

/// Ensemble fit: for each tilt, average |error| over the seeds, then run a
/// weighted log–log fit with the propagated relative standard errors as
/// weights. Averaging before the logarithm keeps rows at the noise floor
/// from dominating the fit.
fn ensemble_fit(rows: &[&RateRow]) -> Option<FitSummary> {
    let mut tilts: Vec<f64> = rows.iter().map(|r| r.tilt).collect();
    tilts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    tilts.dedup();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut sigmas = Vec::new();
    for &t in &tilts {
        let errs: Vec<f64> = rows
            .iter()
            .filter(|r| r.tilt == t)
            .map(|r| r.result.error_norm)
            .collect();
        if errs.is_empty() {
            continue;
        }
        let (mean, se) = stats::mean_se(&errs);
        if mean <= 0.0 {
            return None;
        }
        xs.push(t.ln());
        ys.push(mean.ln());
        // relative error of the mean, floored by the single-row noise scale
        let per_row_se = rows
            .iter()
            .filter(|r| r.tilt == t)
            .map(|r| r.result.error_se)
            .sum::<f64>()
            / errs.len() as f64
            / (errs.len() as f64).sqrt();
        sigmas.push((se.max(per_row_se) / mean).max(1e-6));
    }
    if xs.len() < 3 {
        return None;
    }
    let fit = stats::weighted_linear_fit(&xs, &ys, &sigmas);
    let (lo, hi) = fit.slope_ci(0.95);
    Some(FitSummary {
        exponent: fit.slope,
        ci_low: lo,
        ci_high: hi,
        r_squared: fit.r_squared,
        n_points: xs.len(),
    })
}

/// One (seed, tilt) row of the rate experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateRow {
    pub seed: u64,
    pub tilt: f64,
    pub m: i32,
    pub buffer: i32,
    pub rho: f64,
    pub result: MobilityError,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    /// Pooled log–log fit of |error| against λ (slope = measured β).
    pub pooled: Option<FitSummary>,
    pub per_seed: Vec<FitSummary>,
    pub split_a: Option<FitSummary>,
    pub split_b: Option<FitSummary>,
    /// Split-sample estimates agree within combined confidence intervals.
    pub split_consistent: bool,
    /// All errors are below twice their standard error: no fit is claimed.
    pub degenerate: bool,
    /// Comparison line: the largest admissible exponent behind the defaults.
    pub reference_beta_star: f64,
    /// Conjectured sharp exponent (1, with a √log correction in d = 2).
    pub conjecture_beta: f64,
    pub conjecture_sqrt_log_correction: bool,
}

/// Runs the full (seed × tilt) ensemble and fits the rate.
pub fn rate_experiment(cfg: &Config) -> Result<RateReport> {
    if cfg.rate_lambdas.len() < 4 {
        return Err(Error::config("rate experiment needs at least 4 tilt values"));
    }
    if cfg.rate_seeds < 8 {
        return Err(Error::config("rate experiment needs an ensemble of >= 8 seeds"));
    }
    let opts = MobilityOptions::from_config(cfg);
    let alpha = cfg.rate_alpha;
    let zeta = cfg.rate_zeta;

    let mut rows = Vec::new();
    for s in 0..cfg.rate_seeds {
        let env_seed = cfg.env.seed.wrapping_add(s as u64);
        let env = build_environment(crate::environment::EnvParams {
            seed: env_seed,
            ..cfg.env.clone()
        })?;
        // the homogenized matrix and the mean clock weight do not depend on
        // the tilt; compute them once per seed
        let grid = CubeGrid::new(env.dim(), opts.hom_level, opts.hom_nodes)?;
        let hm = homogenized_matrix(&env, &grid, opts.tol)?;
        let (mw, mw_se) = mean_clock_weight(&env, opts.mw_samples);
        for (li, &tilt) in cfg.rate_lambdas.iter().enumerate() {
            let (m, h, rho) = critical_scales(tilt, alpha, zeta);
            let cell_opts = MobilityOptions {
                sim_seed: substream(cfg.sim_seed, s as u64, li as u64),
                ..opts.clone()
            };
            let result = einstein_error_with(&env, tilt, &cell_opts, hm.clone(), mw, mw_se)?;
            rows.push(RateRow {
                seed: env_seed,
                tilt,
                m,
                buffer: h,
                rho,
                result,
            });
        }
    }
    rows.sort_by_key(|r| (r.seed, ord(r.tilt)));

    // degenerate when, at every tilt, the ensemble-mean error stays within
    // twice the mean statistical error (the norm of a pure-noise vector has
    // mean ≈ 0.89 of the quadrature standard error, so a genuine signal
    // must clear the factor-two line somewhere on the grid)
    let mut tilts: Vec<f64> = rows.iter().map(|r| r.tilt).collect();
    tilts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    tilts.dedup();
    let degenerate = tilts.iter().all(|&t| {
        let sel: Vec<&RateRow> = rows.iter().filter(|r| r.tilt == t).collect();
        let mean_err = sel.iter().map(|r| r.result.error_norm).sum::<f64>() / sel.len() as f64;
        let mean_se = sel.iter().map(|r| r.result.error_se).sum::<f64>() / sel.len() as f64;
        mean_err <= 2.0 * mean_se
    });

    let log_point = |r: &RateRow| (r.tilt.ln(), r.result.error_norm.max(1e-300).ln());
    let all_rows: Vec<&RateRow> = rows.iter().collect();
    let pooled = if degenerate { None } else { ensemble_fit(&all_rows) };

    let mut per_seed = Vec::new();
    let seeds: Vec<u64> = {
        let mut s: Vec<u64> = rows.iter().map(|r| r.seed).collect();
        s.dedup();
        s
    };
    for &sd in &seeds {
        let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.seed == sd).map(log_point).collect();
        if pts.len() >= 2 && !degenerate {
            per_seed.push(fit_summary(&pts));
        }
    }

    let half = seeds.len() / 2;
    let (mut split_a, mut split_b) = (None, None);
    let mut split_consistent = true;
    if !degenerate && half >= 2 {
        let set_a: Vec<&RateRow> = rows
            .iter()
            .filter(|r| seeds[..half].contains(&r.seed))
            .collect();
        let set_b: Vec<&RateRow> = rows
            .iter()
            .filter(|r| seeds[half..].contains(&r.seed))
            .collect();
        match (ensemble_fit(&set_a), ensemble_fit(&set_b)) {
            (Some(fa), Some(fb)) => {
                let half_a = (fa.ci_high - fa.ci_low) / 2.0;
                let half_b = (fb.ci_high - fb.ci_low) / 2.0;
                split_consistent = (fa.exponent - fb.exponent).abs() <= half_a + half_b;
                split_a = Some(fa);
                split_b = Some(fb);
            }
            _ => split_consistent = false,
        }
    }

    Ok(RateReport {
        rows,
        pooled,
        per_seed,
        split_a,
        split_b,
        split_consistent,
        degenerate,
        reference_beta_star: reference_rate_exponent(cfg.env.dim, cfg.rate_beta_h),
        conjecture_beta: 1.0,
        conjecture_sqrt_log_correction: cfg.env.dim == 2,
    })
}

fn ord(v: f64) -> std::cmp::Reverse<u64> {
    std::cmp::Reverse(v.to_bits())
}

// ---------------------------------------------------------------------------
// Girsanov check
// ---------------------------------------------------------------------------

/// Empirical check of the second-moment comparison between nearby tilts:
/// |E^{λ'}[G] − E^{λ}[G]| ≤ C·|λ−λ'|·√t·(E^λ[G²])^{1/2} with the crude
/// explicit constant C = √(Λ e^Λ).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GirsanovSide {
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub pass: bool,
    /// Smallest constant that would satisfy the bound; distinguishes
    /// "inequality violated" (≫ the documented C) from "constant too
    /// small" when a check fails.
    pub required_constant: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GirsanovCheck {
    pub tilt_a: f64,
    pub tilt_b: f64,
    pub time: f64,
    pub constant: f64,
    pub position: GirsanovSide,
    pub clock: GirsanovSide,
}

pub fn girsanov_check(
    medium: &dyn Medium,
    tilt_a: f64,
    tilt_b: f64,
    time: f64,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<GirsanovCheck> {
    if (tilt_a - tilt_b).powi(2) * time > 1.0 {
        return Err(Error::config(
            "Girsanov check requires |lambda - lambda'|^2 t <= 1",
        ));
    }
    let d = medium.dim();
    let n_steps = (time / dt).round() as usize;
    let run = |tilt: f64, stream_shift: u64| -> Result<Vec<(Coord, f64)>> {
        exec::map_indices(n_paths, |i| {
            fold_path(
                medium,
                tilt,
                dt,
                n_steps,
                ZERO,
                seed,
                stream_shift.wrapping_add(i as u64),
                (ZERO, 0.0f64),
                |acc, _, x, clock, _| {
                    *acc = (*x, clock);
                    true
                },
            )
        })
        .into_iter()
        .collect()
    };
    let ens_a = run(tilt_a, 0)?;
    let ens_b = run(tilt_b, 1 << 32)?;

    let lam = medium.ellipticity();
    let constant = (lam * lam.exp()).sqrt();
    let scale = constant * (tilt_a - tilt_b).abs() * time.sqrt();

    // G = position at t
    let mut diff = ZERO;
    let mut var = 0.0f64;
    for j in 0..d {
        let a: Vec<f64> = ens_a.iter().map(|(x, _)| x[j]).collect();
        let b: Vec<f64> = ens_b.iter().map(|(x, _)| x[j]).collect();
        let (ma, sa) = stats::mean_se(&a);
        let (mb, sb) = stats::mean_se(&b);
        diff[j] = mb - ma;
        var += sa * sa + sb * sb;
    }
    let second_moment = ens_a
        .iter()
        .map(|(x, _)| dot(d, x, x))
        .sum::<f64>()
        / n_paths as f64;
    let lhs_pos = norm(d, &diff);
    let rhs_pos = scale * second_moment.sqrt();
    let lhs_pos_se = var.sqrt();
    let denom = (tilt_a - tilt_b).abs() * time.sqrt();
    let position = GirsanovSide {
        lhs: lhs_pos,
        lhs_se: lhs_pos_se,
        rhs: rhs_pos,
        pass: lhs_pos <= rhs_pos + 3.0 * lhs_pos_se,
        required_constant: lhs_pos / (denom * second_moment.sqrt()).max(1e-300),
    };

    // G = clock at t
    let ca: Vec<f64> = ens_a.iter().map(|(_, c)| *c).collect();
    let cb: Vec<f64> = ens_b.iter().map(|(_, c)| *c).collect();
    let (ma, sa) = stats::mean_se(&ca);
    let (mb, sb) = stats::mean_se(&cb);
    let m2 = ca.iter().map(|c| c * c).sum::<f64>() / n_paths as f64;
    let lhs_clk = (mb - ma).abs();
    let lhs_clk_se = (sa * sa + sb * sb).sqrt();
    let rhs_clk = scale * m2.sqrt();
    let clock = GirsanovSide {
        lhs: lhs_clk,
        lhs_se: lhs_clk_se,
        rhs: rhs_clk,
        pass: lhs_clk <= rhs_clk + 3.0 * lhs_clk_se,
        required_constant: lhs_clk / (denom * m2.sqrt()).max(1e-300),
    };

    Ok(GirsanovCheck {
        tilt_a,
        tilt_b,
        time,
        constant,
        position,
        clock,
    })
}

// ---------------------------------------------------------------------------
// Exit-time check
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExitRow {
    pub buffer: i32,
    pub estimate: f64,
    pub se: f64,
    /// Dirichlet-problem oracle for E₀[e^{-κρ3^{-2m}τ}] when requested.
    pub pde: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExitTimeCheck {
    pub m: i32,
    pub kappa: f64,
    pub rho: f64,
    pub rows: Vec<ExitRow>,
    /// Slope of log-estimate against 3^h (expected negative).
    pub slope: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn exit_time_check(
    medium: &dyn Medium,
    tilt: f64,
    m: i32,
    kappa: f64,
    buffers: &[i32],
    n_paths: usize,
    dt: f64,
    seed: u64,
    pde_oracle: Option<(usize, f64)>,
) -> Result<ExitTimeCheck> {
    if buffers.iter().any(|h| !(0..=2).contains(h)) {
        return Err(Error::config("exit-time buffers must lie in {0, 1, 2}"));
    }
    let d = medium.dim();
    let rho = tilt * 3f64.powi(m);
    let rate = kappa * rho * 3f64.powi(-2 * m);
    let mut rows = Vec::new();
    for (hi, &h) in buffers.iter().enumerate() {
        let side = 3f64.powi(m + h);
        let half = side / 2.0;
        let cap_t = 40.0 * half * half * medium.ellipticity();
        let max_steps = (cap_t / dt).ceil() as usize;
        let values: Result<Vec<f64>> = exec::map_indices(n_paths, |i| {
            let exit_t = fold_path(
                medium,
                tilt,
                dt,
                max_steps,
                ZERO,
                seed,
                ((hi as u64) << 40) | i as u64,
                cap_t,
                |acc, k, x, _, _| {
                    if (0..d).any(|j| x[j].abs() >= half) {
                        *acc = k as f64 * dt;
                        return false;
                    }
                    true
                },
            )?;
            Ok((-rate * exit_t).exp())
        })
        .into_iter()
        .collect();
        let values = values?;
        let (estimate, se) = stats::mean_se(&values);

        let pde = match pde_oracle {
            Some((grid_nodes, tol)) => {
                let grid = CubeGrid::new(d, m + h, grid_nodes)?;
                let op = WeightedOperator::assemble(medium, &grid, tilt, rate)?;
                let boundary = ScalarField::from_fn(&grid, |_| 1.0);
                let rhs = ScalarField::zeros(&grid);
                let (w, _) = solve_dirichlet(&op, &boundary, &rhs, tol)?;
                Some(w.values[grid.origin_index()?])
            }
            None => None,
        };
        rows.push(ExitRow {
            buffer: h,
            estimate,
            se,
            pde,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| 3f64.powi(r.buffer)).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.estimate.max(1e-300).ln()).collect();
    let slope = if rows.len() >= 2 {
        stats::linear_fit(&xs, &ys).slope
    } else {
        0.0
    };
    Ok(ExitTimeCheck {
        m,
        kappa,
        rho,
        rows,
        slope,
    })
}

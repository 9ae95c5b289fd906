//! Scaling checks across the tilt grid: the linear velocity bound, the
//! small-tilt limit of the clock rate, bounded scaled block moments, and the
//! breakdown identity of the mobility error.

use mobility::config::Config;
use mobility::diffusion::{simulate_path, SimParams};
use mobility::einstein::{einstein_error, MobilityOptions};
use mobility::environment::{build_environment, EnvParams};
use mobility::geom::{norm, ZERO};
use mobility::renewal::{
    detect_regenerations, estimate_clock_rate, estimate_velocity_renewal, RegenParams,
    RegenerationBlock,
};

fn blocks_for(env: &mobility::environment::EnvironmentField, tilt: f64, n_paths: usize, horizon_mult: f64, seed: u64) -> Vec<RegenerationBlock> {
    let params = SimParams {
        tilt,
        dt: 0.01,
        horizon: horizon_mult * tilt.powi(-2),
        n_paths,
        seed,
        absorb_level: None,
    };
    let regen = RegenParams::default();
    mobility::exec::map_indices(n_paths, |i| {
        let path = simulate_path(env, &params, ZERO, i as u64).unwrap();
        detect_regenerations(&path, tilt, &regen).unwrap().0
    })
    .into_iter()
    .flatten()
    .collect()
}

/// |ℓ(λ)| ≤ C·Λ·λ across the tilt grid (linear velocity bound, with the
/// crude constant C = 2), scaled displacement moments bounded within a
/// factor 3 across tilts, and η within [Λ⁻¹, Λ].
#[test]
fn velocity_bound_and_scaled_moments_across_tilts() {
    let env = build_environment(EnvParams { seed: 19, ..EnvParams::default() }).unwrap();
    let lam = env.params.ellipticity;
    let mut scaled_first_moments = Vec::new();
    for (tilt, n_paths, mult) in [(0.05, 10, 210.0), (0.1, 16, 210.0), (0.2, 40, 210.0)] {
        let blocks = blocks_for(&env, tilt, n_paths, mult, 17);
        let (ell, _) = estimate_velocity_renewal(&blocks, 2).unwrap();
        assert!(
            norm(2, &ell) <= 2.0 * lam * tilt,
            "tilt {tilt}: |ell| = {} exceeds 2Λλ = {}",
            norm(2, &ell),
            2.0 * lam * tilt
        );
        let (eta, _) = estimate_clock_rate(&blocks).unwrap();
        assert!(
            (1.0 / lam..=lam).contains(&eta),
            "tilt {tilt}: eta = {eta} outside [{}, {lam}]",
            1.0 / lam
        );
        let used: Vec<&RegenerationBlock> = blocks.iter().filter(|b| b.index >= 1).collect();
        let m1 = used
            .iter()
            .map(|b| tilt * norm(2, &b.displacement))
            .sum::<f64>()
            / used.len() as f64;
        scaled_first_moments.push(m1);
    }
    let lo = scaled_first_moments.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scaled_first_moments.iter().cloned().fold(0.0f64, f64::max);
    assert!(
        hi / lo <= 3.0,
        "E[λ|ΔX|] varies by more than a factor 3 across tilts: {scaled_first_moments:?}"
    );
}

/// As λ shrinks the clock rate approaches the mean clock weight.
#[test]
fn clock_rate_approaches_mean_weight_at_small_tilt() {
    let env = build_environment(EnvParams { seed: 23, ..EnvParams::default() }).unwrap();
    let (mw, mw_se) = mobility::environment::mean_clock_weight(&env, 20_000);
    let blocks = blocks_for(&env, 0.1, 24, 250.0, 29);
    let (eta, eta_se) = estimate_clock_rate(&blocks).unwrap();
    let combined = 3.0 * (eta_se * eta_se + mw_se * mw_se).sqrt();
    assert!(
        (eta - mw).abs() <= combined.max(5e-3),
        "eta = {eta} vs mean weight {mw} (combined 3σ = {combined})"
    );
}

/// Recombining the two intermediate errors through the time-change identity
/// reproduces the stored mobility error to floating tolerance:
/// error = η⁻¹(ℓ/λ − ā e₁) + (η⁻¹ − mw⁻¹) ā e₁.
#[test]
fn breakdown_identity_recombines() {
    let cfg = Config::default();
    let mut opts = MobilityOptions::from_config(&cfg);
    opts.n_paths = 12;
    opts.horizon_mult = 200.0;
    opts.hom_level = 2;
    opts.hom_nodes = 55;
    opts.mw_samples = 2000;
    let env = build_environment(EnvParams { seed: 31, ..EnvParams::default() }).unwrap();
    let r = einstein_error(&env, 0.2, &opts).unwrap();
    let abar_e1: Vec<f64> = (0..2).map(|i| r.abar.matrix[i][0]).collect();
    for j in 0..2 {
        let recombined = (r.ell[j] / r.tilt - abar_e1[j]) / r.eta
            + (1.0 / r.eta - 1.0 / r.mean_weight) * abar_e1[j];
        assert!(
            (recombined - r.error[j]).abs() <= 1e-12 * (1.0 + r.error[j].abs()),
            "coordinate {j}: recombination {recombined} vs stored {}",
            r.error[j]
        );
    }
}

//! Cross-module identity: the zero-tilt Monte Carlo diffusivity of the
//! physical-time path equals E[e^{-2V}]⁻¹·ā within combined error bars.

use mobility::diffusion::{estimate_diffusivity_mc, SimParams};
use mobility::elliptic::{homogenized_matrix, CubeGrid};
use mobility::environment::{build_environment, mean_clock_weight, EnvParams};

#[test]
fn monte_carlo_diffusivity_matches_weighted_homogenized_matrix() {
    let env = build_environment(EnvParams { seed: 47, ..EnvParams::default() }).unwrap();
    let params = SimParams {
        tilt: 0.0,
        dt: 0.01,
        horizon: 100.0,
        n_paths: 600,
        seed: 73,
        absorb_level: None,
    };
    let (sigma_mc, sigma_se) = estimate_diffusivity_mc(&env, &params).unwrap();

    let grid = CubeGrid::new(2, 4, 163).unwrap();
    let hm = homogenized_matrix(&env, &grid, 1e-9).unwrap();
    let (mw, _) = mean_clock_weight(&env, 20_000);

    for i in 0..2 {
        for j in 0..2 {
            let elliptic_value = hm.matrix[i][j] / mw;
            let gap = (sigma_mc.get(i, j) - elliptic_value).abs();
            // combined bars: 3 MC σ plus the finite-volume drop of ā
            let tol = 3.0 * sigma_se.get(i, j) + hm.level_drop / mw;
            assert!(
                gap <= tol,
                "Sigma_X[{i}][{j}]: mc {} vs elliptic {elliptic_value} (tol {tol})",
                sigma_mc.get(i, j)
            );
        }
    }
}

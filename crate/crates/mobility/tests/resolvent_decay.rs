//! Ensemble behavior of the rescaled homogenization error U_m(0): its
//! median magnitude decreases in the critical level m at fixed ρ and h, and
//! a crude a priori bound holds for every solve.

use mobility::elliptic::{homogenization_error, homogenized_matrix, solve_velocity_resolvent, CubeGrid};
use mobility::environment::{build_environment, EnvParams};
use mobility::geom::norm;

#[test]
fn homogenization_error_median_decays_in_m() {
    let h = 0;
    let rho = 1.0;
    let tol = 1e-9;
    let mut medians = Vec::new();
    for m in [1i32, 3] {
        let mut values = Vec::new();
        for seed in 0..9u64 {
            let env = build_environment(EnvParams { seed: 60 + seed, ..EnvParams::default() }).unwrap();
            // nodes sized to keep the spacing at 0.25 cube-independently
            let nodes = (4 * 3usize.pow((m + h) as u32)) + 1;
            let grid = CubeGrid::new(2, m + h, nodes).unwrap();
            let hm = homogenized_matrix(&env, &grid, tol).unwrap();
            let abar = hm.dense();
            let (u, _) = solve_velocity_resolvent(&env, &grid, m, h, rho, &abar, tol).unwrap();
            let err = homogenization_error(&u, &abar, m).unwrap();
            let e = norm(2, &err);
            // crude a priori sanity bound from solved-field extrema
            let lam = env.params.ellipticity;
            let abar_e1 = abar.mul_vec(&mobility::geom::e1());
            let bound = 2.0 * lam * (2.0f64).sqrt() + norm(2, &abar_e1);
            assert!(e.is_finite() && e <= bound, "m = {m}: |U_m(0)| = {e} vs bound {bound}");
            values.push(e);
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        medians.push(values[values.len() / 2]);
    }
    assert!(
        medians[1] < medians[0],
        "median |U_m(0)| did not decay: {medians:?}"
    );
    println!("median |U_m(0)|: m=1 -> {:.4}, m=3 -> {:.4}", medians[0], medians[1]);
}

//! Property tests for the structural invariants: configuration round-trips,
//! SPD square roots, clock monotonicity/bounds, and the time-change
//! involution on exactly representable paths.

use proptest::prelude::*;

use mobility::config::Config;
use mobility::diffusion::{invert_time_change, simulate_path, SimParams};
use mobility::environment::{build_environment, EnvParams};
use mobility::geom::{SymMat, ZERO};
use mobility::medium::Medium;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn config_text_round_trips(
        seed in any::<u64>(),
        tilt in 0.01f64..1.0,
        n_paths in 1usize..10_000,
        lambdas in proptest::collection::vec(0.01f64..1.0, 1..6),
    ) {
        let mut cfg = Config::default();
        cfg.env.seed = seed;
        cfg.tilt = (tilt * 1e6).round() / 1e6;
        cfg.n_paths = n_paths;
        cfg.rate_lambdas = lambdas.iter().map(|l| (l * 1e6).round() / 1e6).collect();
        let back = Config::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(cfg, back);
    }

    #[test]
    fn spd_square_root_multiplies_back(
        a in 0.2f64..4.0,
        c in 0.2f64..4.0,
        frac in -0.9f64..0.9,
    ) {
        // symmetric 2x2 with guaranteed positive determinant
        let b = frac * (a * c).sqrt();
        let mut m = SymMat::zeros(2);
        m.set(0, 0, a);
        m.set(1, 1, c);
        m.set(0, 1, b);
        let r = m.sqrt_spd();
        for i in 0..2 {
            for j in 0..2 {
                let mut s = 0.0;
                for k in 0..2 {
                    s += r.get(i, k) * r.get(k, j);
                }
                prop_assert!((s - m.get(i, j)).abs() < 1e-12 * (1.0 + a.max(c)));
            }
        }
    }

    #[test]
    fn clock_is_increasing_and_sandwiched(
        seed in any::<u64>(),
        tilt in 0.0f64..0.5,
    ) {
        let env = build_environment(EnvParams { seed, ..EnvParams::default() }).unwrap();
        let params = SimParams {
            tilt,
            dt: 0.01,
            horizon: 3.0,
            n_paths: 1,
            seed: seed ^ 0x5eed,
            absorb_level: None,
        };
        let path = simulate_path(&env, &params, ZERO, 0).unwrap();
        let lam = env.ellipticity();
        for k in 1..=path.n_steps() {
            let s = k as f64 * path.dt;
            let a = path.clock_value(k);
            prop_assert!(a > path.clock_value(k - 1));
            prop_assert!(a >= s / lam - 1e-9 && a <= s * lam + 1e-9);
        }
    }

    #[test]
    fn time_change_is_an_involution_on_smooth_paths(
        slope in 0.1f64..3.0,
        rate in 0.3f64..3.0,
    ) {
        // a synthetic path with linear positions and a linear clock is
        // reconstructed exactly by a double inversion
        let n = 200usize;
        let dt = 0.05;
        let medium = mobility::medium::ConstantMedium::isotropic(2, 1.0, 0.0);
        let _ = &medium;
        let mut positions = Vec::new();
        let mut clock = Vec::new();
        for k in 0..=n {
            let t = k as f64 * dt;
            positions.extend_from_slice(&[slope * t, -0.5 * slope * t]);
            clock.push(rate * t);
        }
        let path =
            mobility::diffusion::PathSample::from_parts(2, dt, positions, clock, 0, 0).unwrap();
        let x = invert_time_change(&path).unwrap();
        let back = invert_time_change(&x).unwrap();
        for k in 0..=back.n_steps() {
            let t = k as f64 * dt;
            let p = back.position(k);
            prop_assert!((p[0] - slope * t).abs() < 1e-9);
            prop_assert!((p[1] + 0.5 * slope * t).abs() < 1e-9);
        }
    }
}

//! Command-line front end: config parsing, subcommand dispatch, reproducible
//! run directories, CSV/JSON emission.
//!
//! Every run writes into `<out>/<config-hash>-<seed>/`: a canonical config
//! echo, a versioned JSON report, and subcommand-specific CSVs. Reports are
//! byte-identical across reruns of the same (config, seed) except for the
//! single `timestamp` header key. On failure the partial run directory is
//! removed and the exit status encodes the error category
//! (config 2 / solver 3 / budget 4 / data 5 / io 6).

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use mobility::config::Config;
use mobility::diffusion::{simulate_ensemble, SimParams};
use mobility::einstein::{exit_time_check, fk_crosscheck, girsanov_check, rate_experiment};
use mobility::elliptic::{
    homogenized_matrix, negative_sobolev_norm, solve_clock_resolvent, solve_corrector,
    solve_velocity_resolvent, CubeGrid, ScalarField,
};
use mobility::environment::{
    build_environment, mean_clock_weight, validate_environment, EnvironmentField,
};
use mobility::error::Error;
use mobility::geom::ZERO;
use mobility::medium::Medium;
use mobility::renewal::{
    block_diagnostics, detect_regenerations, estimate_clock_rate, estimate_velocity_renewal,
    RegenParams,
};
use mobility::report::{strip_timestamp, write_csv, RunReport};

#[derive(Parser)]
#[command(
    name = "mobility",
    about = "Random-media diffusion toolkit: tilted simulation, finite-volume homogenization, renewal estimators, and the small-force mobility error",
    after_long_help = Config::help_text()
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Key-value config file (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory root.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Override the environment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Bound on the worker count (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Suppress per-row progress lines.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Construct an environment and report its derived constants.
    GenEnv,
    /// Sample ellipticity, potential and Lipschitz checks.
    ValidateEnv,
    /// Simulate a tilted path ensemble (optionally dumping every step).
    Simulate,
    /// Solve the Dirichlet correctors on the configured cube.
    Corrector,
    /// Finite-volume homogenized matrix with diagnostics.
    Homogenize,
    /// Tilted velocity and clock resolvents at the critical scale.
    Resolvent,
    /// Detect regenerations and run the renewal estimators.
    Regen,
    /// Feynman-Kac two-oracle cross-check of the velocity resolvent.
    FkCheck,
    /// Exit-time Laplace transform across buffer levels.
    ExitCheck,
    /// Second-moment comparison between nearby tilts.
    GirsanovCheck,
    /// Full mobility-error rate experiment over (seed, tilt) cells.
    EinsteinRate,
}

impl Command {
    fn kind(&self) -> &'static str {
        match self {
            Command::GenEnv => "gen-env",
            Command::ValidateEnv => "validate-env",
            Command::Simulate => "simulate",
            Command::Corrector => "corrector",
            Command::Homogenize => "homogenize",
            Command::Resolvent => "resolvent",
            Command::Regen => "regen",
            Command::FkCheck => "fk-check",
            Command::ExitCheck => "exit-check",
            Command::GirsanovCheck => "girsanov-check",
            Command::EinsteinRate => "einstein-rate",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error ({}): {err}", category_of(&err));
            ExitCode::from(match category_of(&err) {
                "config" => 2,
                "solver" => 3,
                "budget" => 4,
                "data" => 5,
                _ => 6,
            })
        }
    }
}

fn category_of(err: &anyhow::Error) -> &'static str {
    match err.downcast_ref::<Error>() {
        Some(e) => e.category(),
        None => "io",
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.env.seed = seed;
    }

    let run_dir = run_directory(&cli.out, &cfg)?;
    let outcome = mobility::exec::with_worker_bound(cli.jobs, || dispatch(cli, &cfg, &run_dir));
    match outcome {
        Ok(()) => {
            if !cli.quiet {
                println!("wrote {}", run_dir.display());
            }
            Ok(())
        }
        Err(err) => {
            // no partial output on failure
            let _ = fs::remove_dir_all(&run_dir);
            Err(err)
        }
    }
}

/// Run directory named by the canonical config hash and the seed.
fn run_directory(root: &Path, cfg: &Config) -> anyhow::Result<PathBuf> {
    let canonical = cfg.to_text();
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let digest = hasher.finalize();
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    let dir = root.join(format!("{hex}-{}", cfg.env.seed));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.txt"), canonical)?;
    Ok(dir)
}

fn save_report<T: serde::Serialize>(
    run_dir: &Path,
    kind: &str,
    cfg: &Config,
    data: T,
) -> anyhow::Result<()> {
    let report = RunReport::new(kind, cfg.to_text(), data);
    let json = report.to_json()?;
    fs::write(run_dir.join("report.json"), &json)?;
    // content digest over the reproducible part, for quick comparisons
    let mut hasher = Sha256::new();
    hasher.update(strip_timestamp(&json).as_bytes());
    let digest: String = hasher.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect();
    fs::write(run_dir.join("report.digest"), digest)?;
    Ok(())
}

fn build_env(cfg: &Config) -> anyhow::Result<EnvironmentField> {
    Ok(build_environment(cfg.env.clone())?)
}

fn dispatch(cli: &Cli, cfg: &Config, run_dir: &Path) -> anyhow::Result<()> {
    let quiet = cli.quiet;
    match cli.command {
        Command::GenEnv => {
            let env = build_env(cfg)?;
            let (mw, mw_se) = mean_clock_weight(&env, cfg.mw_samples);
            let lipschitz = env.field_lipschitz();
            if !quiet {
                println!(
                    "environment seed={} d={} Lambda={} lipschitz_bound={lipschitz:.3} mean_clock_weight={mw:.6}±{mw_se:.6}",
                    env.params.seed, env.params.dim, env.params.ellipticity
                );
            }
            save_report(
                run_dir,
                cli.command.kind(),
                cfg,
                serde_json::json!({
                    "params": env.params,
                    "field_lipschitz_bound": lipschitz,
                    "mean_clock_weight": mw,
                    "mean_clock_weight_se": mw_se,
                }),
            )
        }
        Command::ValidateEnv => {
            let env = build_env(cfg)?;
            let report = validate_environment(&env, cfg.validate_samples);
            if !quiet {
                println!(
                    "rayleigh=[{:.4}, {:.4}] max|V|={:.4} diff-quotients a={:.3} V={:.3} pass={}",
                    report.rayleigh_min,
                    report.rayleigh_max,
                    report.max_abs_potential,
                    report.max_diff_quotient_a,
                    report.max_diff_quotient_v,
                    report.pass()
                );
            }
            let pass = report.pass();
            save_report(run_dir, cli.command.kind(), cfg, &report)?;
            if !pass {
                return Err(Error::data("environment validation failed").into());
            }
            Ok(())
        }
        Command::Simulate => {
            let env = build_env(cfg)?;
            let params = SimParams {
                tilt: cfg.tilt,
                dt: cfg.dt,
                horizon: cfg.horizon,
                n_paths: cfg.n_paths,
                seed: cfg.sim_seed,
                absorb_level: (cfg.absorb_level >= 0).then_some(cfg.absorb_level),
            };
            let paths = simulate_ensemble(&env, &params, ZERO)?;
            let mut rows = Vec::new();
            for p in &paths {
                let x = p.final_position();
                rows.push(vec![
                    p.path_id.to_string(),
                    format!("{}", p.horizon()),
                    format!("{}", x[0]),
                    format!("{}", x[1]),
                    format!("{}", p.final_clock()),
                    p.exit_step.map(|k| k.to_string()).unwrap_or_default(),
                ]);
                if !quiet {
                    println!(
                        "path {} T={} X(T)=({:.4}, {:.4}) A(T)={:.4}",
                        p.path_id,
                        p.horizon(),
                        x[0],
                        x[1],
                        p.final_clock()
                    );
                }
            }
            let mut summary = fs::File::create(run_dir.join("paths_summary.csv"))?;
            write_csv(
                &mut summary,
                &["path_id", "horizon", "x_1", "x_2", "clock", "exit_step"],
                &rows,
            )?;
            if cfg.dump_paths {
                let mut dump = fs::File::create(run_dir.join("paths.csv"))?;
                mobility::diffusion::write_paths_csv(&paths, &mut dump)?;
            }
            save_report(
                run_dir,
                cli.command.kind(),
                cfg,
                serde_json::json!({
                    "n_paths": paths.len(),
                    "tilt": cfg.tilt,
                    "horizon": cfg.horizon,
                }),
            )
        }
        Command::Corrector => {
            let env = build_env(cfg)?;
            let grid = CubeGrid::new(env.params.dim, cfg.grid_level, cfg.grid_nodes)?;
            let mut reports = Vec::new();
            for j in 0..env.params.dim {
                let mut p = ZERO;
                p[j] = 1.0;
                let (w, rep) = solve_corrector(&env, &grid, &p, cfg.solve_tol)?;
                let mut f = fs::File::create(run_dir.join(format!("corrector_e{}.csv", j + 1)))?;
                mobility::elliptic::write_field_csv(&w, "scalar", &mut f)?;
                if !quiet {
                    println!(
                        "corrector e{} solved in {} iterations (residual {:.2e})",
                        j + 1,
                        rep.iterations,
                        rep.residual
                    );
                }
                reports.push(rep);
            }
            save_report(run_dir, cli.command.kind(), cfg, &reports)
        }
        Command::Homogenize => {
            let env = build_env(cfg)?;
            let grid = CubeGrid::new(env.params.dim, cfg.hom_level, cfg.hom_nodes)?;
            let hm = homogenized_matrix(&env, &grid, cfg.solve_tol)?;
            if !quiet {
                for i in 0..hm.dim {
                    let row: Vec<String> =
                        (0..hm.dim).map(|j| format!("{:+.6}", hm.matrix[i][j])).collect();
                    println!("abar[{i}] = [{}]", row.join(", "));
                }
                println!(
                    "asymmetry={:.2e} level_drop={:.2e} eigenvalues={:?}",
                    hm.asymmetry,
                    hm.level_drop,
                    &hm.eigenvalues[..hm.dim]
                );
            }
            save_report(run_dir, cli.command.kind(), cfg, &hm)
        }
        Command::Resolvent => {
            let env = build_env(cfg)?;
            let d = env.params.dim;
            let level = cfg.res_m + cfg.res_h;
            let grid = CubeGrid::new(d, level, cfg.res_nodes)?;
            let hom_grid = CubeGrid::new(d, cfg.hom_level, cfg.hom_nodes)?;
            let hm = homogenized_matrix(&env, &hom_grid, cfg.solve_tol)?;
            let abar = hm.dense();
            let (u, ur) =
                solve_velocity_resolvent(&env, &grid, cfg.res_m, cfg.res_h, cfg.res_rho, &abar, cfg.solve_tol)?;
            let (mw, _) = mean_clock_weight(&env, cfg.mw_samples);
            let (q, qr) =
                solve_clock_resolvent(&env, &grid, cfg.res_m, cfg.res_h, cfg.res_rho, mw, cfg.solve_tol)?;
            let origin = grid.origin_index()?;
            let u0: Vec<f64> = u.iter().map(|c| c.values[origin]).collect();
            let err = mobility::elliptic::homogenization_error(&u, &abar, cfg.res_m)?;
            let centered = ScalarField::from_fn(&grid, |x| env.clock_weight(x) - mw);
            let neg_norm = negative_sobolev_norm(&centered, 1.0 / 6.0)?;
            if !quiet {
                println!(
                    "u_m(0)={:?} U_m(0)=({:.6}, {:.6}) q_m(0)={:.6} negsob(clock source)={:.4}",
                    u0, err[0], err[1], q.values[origin], neg_norm
                );
            }
            for (j, comp) in u.iter().enumerate() {
                let mut f = fs::File::create(run_dir.join(format!("velocity_resolvent_{}.csv", j + 1)))?;
                mobility::elliptic::write_field_csv(comp, "scalar", &mut f)?;
            }
            let mut f = fs::File::create(run_dir.join("clock_resolvent.csv"))?;
            mobility::elliptic::write_field_csv(&q, "scalar", &mut f)?;
            save_report(
                run_dir,
                cli.command.kind(),
                cfg,
                serde_json::json!({
                    "m": cfg.res_m, "h": cfg.res_h, "rho": cfg.res_rho,
                    "u_origin": u0,
                    "homogenization_error": [err[0], err[1], err[2]],
                    "q_origin": q.values[origin],
                    "clock_source_negative_sobolev": neg_norm,
                    "abar": hm,
                    "velocity_reports": ur,
                    "clock_report": qr,
                }),
            )
        }
        Command::Regen => {
            let env = build_env(cfg)?;
            let params = SimParams {
                tilt: cfg.tilt,
                dt: cfg.dt,
                horizon: cfg.horizon,
                n_paths: cfg.n_paths,
                seed: cfg.sim_seed,
                absorb_level: None,
            };
            let regen = RegenParams {
                scale_multiplier: cfg.regen_l,
                mark_probability: cfg.regen_pstar,
                horizon_multiplier: cfg.regen_k,
                marks_seed: cfg.marks_seed,
            };
            regen.validate(env.params.dependence_range)?;
            params.validate()?;
            let per_path: Result<Vec<_>, Error> = mobility::exec::map_indices(cfg.n_paths, |i| {
                let path = mobility::diffusion::simulate_path(&env, &params, ZERO, i as u64)?;
                let (blocks, stats) = detect_regenerations(&path, cfg.tilt, &regen)?;
                Ok((blocks, stats))
            })
            .into_iter()
            .collect();
            let mut blocks = Vec::new();
            let mut candidates = 0usize;
            let mut passes = 0usize;
            for (bs, st) in per_path? {
                blocks.extend(bs);
                candidates += st.backtrack_tests;
                passes += st.backtrack_passes;
            }
            let d = env.params.dim;
            let (ell, ell_se) = estimate_velocity_renewal(&blocks, d)?;
            let (eta, eta_se) = estimate_clock_rate(&blocks)?;
            let diag = block_diagnostics(&blocks, cfg.tilt, d, cfg.regen_l)?;
            if !quiet {
                println!(
                    "blocks={} ell=({:.5}±{:.5}, {:.5}±{:.5}) eta={:.5}±{:.5} acceptance={:.4}",
                    blocks.len(),
                    ell[0],
                    ell_se[0],
                    ell[1],
                    ell_se[1],
                    eta,
                    eta_se,
                    passes as f64 / candidates.max(1) as f64
                );
            }
            let mut f = fs::File::create(run_dir.join("blocks.csv"))?;
            mobility::renewal::write_blocks_csv(&blocks, d, &mut f)?;
            save_report(
                run_dir,
                cli.command.kind(),
                cfg,
                serde_json::json!({
                    "n_blocks": blocks.len(),
                    "ell": [ell[0], ell[1], ell[2]],
                    "ell_se": [ell_se[0], ell_se[1], ell_se[2]],
                    "eta": eta,
                    "eta_se": eta_se,
                    "backtrack_candidates": candidates,
                    "backtrack_passes": passes,
                    "diagnostics": diag,
                }),
            )
        }
        Command::FkCheck => {
            let env = build_env(cfg)?;
            let d = env.params.dim;
            let grid = CubeGrid::new(d, cfg.res_m + cfg.res_h, cfg.res_nodes)?;
            let hm = homogenized_matrix(&env, &grid, cfg.solve_tol)?;
            let check = fk_crosscheck(
                &env,
                &hm.dense(),
                cfg.res_m,
                cfg.res_h,
                cfg.res_rho,
                cfg.res_nodes,
                cfg.fk_paths,
                cfg.dt,
                cfg.sim_seed,
                cfg.solve_tol,
            )?;
            if !quiet {
                for j in 0..d {
                    println!(
                        "component {}: pde={:.5} mc={:.5}±{:.5} gap={:.5} tol={:.5} {}",
                        j + 1,
                        check.pde[j],
                        check.mc[j],
                        check.mc_se[j],
                        check.gap[j],
                        check.tolerance[j],
                        if check.gap[j] <= check.tolerance[j] { "ok" } else { "FAIL" }
                    );
                }
            }
            let agree = check.agree;
            save_report(run_dir, cli.command.kind(), cfg, &check)?;
            if !agree {
                return Err(Error::data("Feynman-Kac cross-check failed").into());
            }
            Ok(())
        }
        Command::ExitCheck => {
            let env = build_env(cfg)?;
            let check = exit_time_check(
                &env,
                cfg.tilt,
                cfg.res_m,
                cfg.exit_kappa,
                &[0, 1, 2],
                cfg.exit_paths,
                cfg.dt,
                cfg.sim_seed,
                Some((cfg.res_nodes, cfg.solve_tol)),
            )?;
            if !quiet {
                for row in &check.rows {
                    println!(
                        "h={} estimate={:.6}±{:.6} pde={}",
                        row.buffer,
                        row.estimate,
                        row.se,
                        row.pde.map(|v| format!("{v:.6}")).unwrap_or_default()
                    );
                }
                println!("slope vs 3^h: {:.4}", check.slope);
            }
            save_report(run_dir, cli.command.kind(), cfg, &check)
        }
        Command::GirsanovCheck => {
            let env = build_env(cfg)?;
            let check = girsanov_check(
                &env,
                cfg.tilt,
                cfg.g_tilt_b,
                cfg.g_time,
                cfg.g_paths,
                cfg.dt,
                cfg.sim_seed,
            )?;
            if !quiet {
                println!(
                    "position: lhs={:.5}±{:.5} rhs={:.5} pass={}",
                    check.position.lhs, check.position.lhs_se, check.position.rhs, check.position.pass
                );
                println!(
                    "clock:    lhs={:.5}±{:.5} rhs={:.5} pass={}",
                    check.clock.lhs, check.clock.lhs_se, check.clock.rhs, check.clock.pass
                );
            }
            save_report(run_dir, cli.command.kind(), cfg, &check)
        }
        Command::EinsteinRate => {
            let report = rate_experiment(cfg)?;
            if !quiet {
                for row in &report.rows {
                    println!(
                        "seed={} lambda={:.3} m={} h={} |error|={:.5} (vel {:.5}, clock {:.5})",
                        row.seed,
                        row.tilt,
                        row.m,
                        row.buffer,
                        row.result.error_norm,
                        row.result.velocity_breakdown,
                        row.result.clock_breakdown
                    );
                }
                match (&report.pooled, report.degenerate) {
                    (Some(fit), _) => println!(
                        "fitted beta = {:.4} (95% CI [{:.4}, {:.4}], R² {:.3}); reference beta* = {:.4}, conjecture = {}{}",
                        fit.exponent,
                        fit.ci_low,
                        fit.ci_high,
                        fit.r_squared,
                        report.reference_beta_star,
                        report.conjecture_beta,
                        if report.conjecture_sqrt_log_correction { " (with sqrt-log correction in d = 2)" } else { "" }
                    ),
                    (None, true) => println!("errors at noise floor at all tilts: fit flagged degenerate"),
                    (None, false) => {}
                }
            }
            // CSV: one row per (seed, lambda)
            let mut rows = Vec::new();
            for row in &report.rows {
                rows.push(vec![
                    row.seed.to_string(),
                    format!("{}", row.tilt),
                    row.m.to_string(),
                    row.buffer.to_string(),
                    format!("{}", row.rho),
                    format!("{}", row.result.error_norm),
                    format!("{}", row.result.error_se),
                    format!("{}", row.result.velocity_breakdown),
                    format!("{}", row.result.clock_breakdown),
                    format!("{}", row.result.eta),
                    format!("{}", row.result.mean_weight),
                    row.result.n_blocks.to_string(),
                ]);
            }
            let mut f = fs::File::create(run_dir.join("rate_rows.csv"))?;
            write_csv(
                &mut f,
                &[
                    "seed", "lambda", "m", "h", "rho", "error_norm", "error_se", "velocity_breakdown",
                    "clock_breakdown", "eta", "mean_weight", "n_blocks",
                ],
                &rows,
            )?;
            // plot-ready two-column file
            let mut plot = fs::File::create(run_dir.join("rate_loglog.csv"))?;
            writeln!(plot, "log_lambda,log_error")?;
            for row in &report.rows {
                writeln!(plot, "{},{}", row.tilt.ln(), row.result.error_norm.max(1e-300).ln())?;
            }
            save_report(run_dir, cli.command.kind(), cfg, &report)
        }
    }
}

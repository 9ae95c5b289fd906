//! Flat key–value experiment configuration.
//!
//! One format is shared by every subcommand so a whole experiment is
//! archivable as a single file. Lines are `key = value`; `#` starts a
//! comment. Unknown keys are rejected with the list of valid keys. Every key
//! is documented with its units in [`KEYS`], which also drives the CLI help
//! text.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::environment::EnvParams;
use crate::error::{Error, Result};

/// A documented configuration key.
pub struct KeySpec {
    pub name: &'static str,
    pub units: &'static str,
    pub doc: &'static str,
    pub default: &'static str,
}

pub const KEYS: &[KeySpec] = &[
    KeySpec { name: "d", units: "-", doc: "spatial dimension (2 or 3)", default: "2" },
    KeySpec { name: "lambda_ellipticity", units: "-", doc: "ellipticity constant Lambda >= 1", default: "4" },
    KeySpec { name: "r0", units: "length", doc: "dependence range of the random field", default: "2.5" },
    KeySpec { name: "c_cell", units: "length", doc: "lattice cell size carrying independent variates", default: "1" },
    KeySpec { name: "r_moll", units: "length", doc: "mollifier radius (< r0/2, r_moll + c_cell <= r0)", default: "1" },
    KeySpec { name: "amp_a", units: "-", doc: "relative amplitude of the coefficient perturbation", default: "0.5" },
    KeySpec { name: "amp_v", units: "-", doc: "amplitude of the random part of the potential V", default: "0.3" },
    KeySpec { name: "v_offset", units: "-", doc: "constant offset of the potential V", default: "0" },
    KeySpec { name: "base_scale", units: "-", doc: "constant diagonal scale of a", default: "1" },
    KeySpec { name: "seed", units: "-", doc: "master environment seed (64-bit)", default: "1" },
    KeySpec { name: "tilt", units: "-", doc: "force magnitude lambda in direction e1", default: "0.1" },
    KeySpec { name: "dt", units: "time", doc: "Euler-Maruyama step (<= min(1, lambda^-2)/100)", default: "0.01" },
    KeySpec { name: "horizon", units: "time", doc: "simulation horizon T", default: "1000" },
    KeySpec { name: "n_paths", units: "-", doc: "number of independent paths", default: "100" },
    KeySpec { name: "sim_seed", units: "-", doc: "seed of the per-path RNG streams", default: "2" },
    KeySpec { name: "absorb_level", units: "-", doc: "triadic level of the absorbing cube (-1 = none)", default: "-1" },
    KeySpec { name: "regen_l", units: "-", doc: "regeneration scale multiplier l (R = l/lambda, 2l > r0)", default: "2" },
    KeySpec { name: "regen_pstar", units: "-", doc: "Bernoulli mark success probability in (0,1)", default: "0.5" },
    KeySpec { name: "regen_k", units: "-", doc: "no-backtracking horizon multiplier K (>= 20)", default: "20" },
    KeySpec { name: "marks_seed", units: "-", doc: "seed of the Bernoulli marks", default: "3" },
    KeySpec { name: "grid_level", units: "-", doc: "triadic cube level M (side 3^M)", default: "3" },
    KeySpec { name: "grid_nodes", units: "-", doc: "nodes per side N (odd, >= 9)", default: "109" },
    KeySpec { name: "solve_tol", units: "-", doc: "relative residual tolerance of elliptic solves", default: "1e-9" },
    KeySpec { name: "res_m", units: "-", doc: "resolvent critical level m", default: "3" },
    KeySpec { name: "res_h", units: "-", doc: "resolvent buffer h (cube side 3^{m+h})", default: "1" },
    KeySpec { name: "res_rho", units: "-", doc: "resolvent spectral parameter rho >= 1 (lambda = rho 3^-m)", default: "1" },
    KeySpec { name: "fk_paths", units: "-", doc: "Monte Carlo paths of the Feynman-Kac cross-check", default: "10000" },
    KeySpec { name: "exit_kappa", units: "-", doc: "Laplace exponent kappa of the exit-time check", default: "1" },
    KeySpec { name: "exit_paths", units: "-", doc: "paths per cube level in the exit-time check", default: "2000" },
    KeySpec { name: "g_tilt_b", units: "-", doc: "second tilt lambda' of the Girsanov check", default: "0.12" },
    KeySpec { name: "g_time", units: "time", doc: "horizon t of the Girsanov check (|lambda-lambda'|^2 t <= 1)", default: "50" },
    KeySpec { name: "g_paths", units: "-", doc: "paths per ensemble in the Girsanov check", default: "4000" },
    KeySpec { name: "rate_lambdas", units: "-", doc: "comma-separated tilt grid of the rate experiment", default: "0.3,0.2,0.14,0.1" },
    KeySpec { name: "rate_seeds", units: "-", doc: "number of environment seeds in the ensemble", default: "8" },
    KeySpec { name: "rate_alpha", units: "-", doc: "scale exponent alpha in m(lambda) = ceil(-log3 lambda/(1-alpha))", default: "0.010416666666666666" },
    KeySpec { name: "rate_zeta", units: "-", doc: "buffer exponent zeta in h = floor(zeta m)", default: "0.05" },
    KeySpec { name: "rate_theta", units: "-", doc: "LLN exponent theta (reported only)", default: "0.1" },
    KeySpec { name: "rate_eps", units: "-", doc: "short-time exponent epsilon (reported only)", default: "0.005208333333333333" },
    KeySpec { name: "rate_beta_h", units: "-", doc: "homogenization exponent beta_h behind the defaults", default: "0.125" },
    KeySpec { name: "hom_level", units: "-", doc: "cube level of the homogenized-matrix solve", default: "4" },
    KeySpec { name: "hom_nodes", units: "-", doc: "nodes per side of the homogenized-matrix solve", default: "163" },
    KeySpec { name: "res_nodes", units: "-", doc: "nodes per side of resolvent solves (odd)", default: "109" },
    KeySpec { name: "rate_paths", units: "-", doc: "paths per (seed, lambda) cell of the rate experiment", default: "64" },
    KeySpec { name: "rate_horizon_mult", units: "-", doc: "horizon per path in units of lambda^-2", default: "400" },
    KeySpec { name: "mw_samples", units: "-", doc: "samples of the mean clock weight E[e^{-2V}]", default: "20000" },
    KeySpec { name: "validate_samples", units: "-", doc: "sample points of the environment validator", default: "10000" },
    KeySpec { name: "dump_paths", units: "-", doc: "write the per-step path CSV in `simulate` (true/false)", default: "false" },
];

/// Parsed configuration with every documented key populated.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Config {
    pub env: EnvParams,
    pub tilt: f64,
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub sim_seed: u64,
    pub absorb_level: i32,
    pub regen_l: f64,
    pub regen_pstar: f64,
    pub regen_k: u32,
    pub marks_seed: u64,
    pub grid_level: i32,
    pub grid_nodes: usize,
    pub solve_tol: f64,
    pub res_m: i32,
    pub res_h: i32,
    pub res_rho: f64,
    pub fk_paths: usize,
    pub exit_kappa: f64,
    pub exit_paths: usize,
    pub g_tilt_b: f64,
    pub g_time: f64,
    pub g_paths: usize,
    pub rate_lambdas: Vec<f64>,
    pub rate_seeds: usize,
    pub rate_alpha: f64,
    pub rate_zeta: f64,
    pub rate_theta: f64,
    pub rate_eps: f64,
    pub rate_beta_h: f64,
    pub hom_level: i32,
    pub hom_nodes: usize,
    pub res_nodes: usize,
    pub rate_paths: usize,
    pub rate_horizon_mult: f64,
    pub mw_samples: usize,
    pub validate_samples: usize,
    pub dump_paths: bool,
}

impl Default for Config {
    fn default() -> Self {
        // The registry defaults are authoritative; parse them.
        let text: String = KEYS
            .iter()
            .map(|k| format!("{} = {}\n", k.name, k.default))
            .collect();
        Config::parse(&text).expect("registry defaults parse")
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let valid: BTreeSet<&str> = KEYS.iter().map(|k| k.name).collect();
        let mut cfg = ConfigBuilder::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{raw}`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !valid.contains(key) {
                let names: Vec<&str> = KEYS.iter().map(|k| k.name).collect();
                return Err(Error::Config(format!(
                    "unknown key `{key}` on line {}; valid keys: {}",
                    lineno + 1,
                    names.join(", ")
                )));
            }
            cfg.set(key, value)?;
        }
        cfg.finish()
    }

    pub fn from_file(path: &std::path::Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        Config::parse(&text)
    }

    /// Canonical serialization: every key, registry order, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let v = self.value_of(k.name);
            let _ = writeln!(out, "{} = {}", k.name, v);
        }
        out
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "d" => self.env.dim.to_string(),
            "lambda_ellipticity" => trim_float(self.env.ellipticity),
            "r0" => trim_float(self.env.dependence_range),
            "c_cell" => trim_float(self.env.cell),
            "r_moll" => trim_float(self.env.mollifier_radius),
            "amp_a" => trim_float(self.env.amp_a),
            "amp_v" => trim_float(self.env.amp_v),
            "v_offset" => trim_float(self.env.v_offset),
            "base_scale" => trim_float(self.env.base_scale),
            "seed" => self.env.seed.to_string(),
            "tilt" => trim_float(self.tilt),
            "dt" => trim_float(self.dt),
            "horizon" => trim_float(self.horizon),
            "n_paths" => self.n_paths.to_string(),
            "sim_seed" => self.sim_seed.to_string(),
            "absorb_level" => self.absorb_level.to_string(),
            "regen_l" => trim_float(self.regen_l),
            "regen_pstar" => trim_float(self.regen_pstar),
            "regen_k" => self.regen_k.to_string(),
            "marks_seed" => self.marks_seed.to_string(),
            "grid_level" => self.grid_level.to_string(),
            "grid_nodes" => self.grid_nodes.to_string(),
            "solve_tol" => trim_float(self.solve_tol),
            "res_m" => self.res_m.to_string(),
            "res_h" => self.res_h.to_string(),
            "res_rho" => trim_float(self.res_rho),
            "fk_paths" => self.fk_paths.to_string(),
            "exit_kappa" => trim_float(self.exit_kappa),
            "exit_paths" => self.exit_paths.to_string(),
            "g_tilt_b" => trim_float(self.g_tilt_b),
            "g_time" => trim_float(self.g_time),
            "g_paths" => self.g_paths.to_string(),
            "rate_lambdas" => self
                .rate_lambdas
                .iter()
                .map(|x| trim_float(*x))
                .collect::<Vec<_>>()
                .join(","),
            "rate_seeds" => self.rate_seeds.to_string(),
            "rate_alpha" => trim_float(self.rate_alpha),
            "rate_zeta" => trim_float(self.rate_zeta),
            "rate_theta" => trim_float(self.rate_theta),
            "rate_eps" => trim_float(self.rate_eps),
            "rate_beta_h" => trim_float(self.rate_beta_h),
            "hom_level" => self.hom_level.to_string(),
            "hom_nodes" => self.hom_nodes.to_string(),
            "res_nodes" => self.res_nodes.to_string(),
            "rate_paths" => self.rate_paths.to_string(),
            "rate_horizon_mult" => trim_float(self.rate_horizon_mult),
            "mw_samples" => self.mw_samples.to_string(),
            "validate_samples" => self.validate_samples.to_string(),
            "dump_paths" => self.dump_paths.to_string(),
            _ => unreachable!("unregistered key {key}"),
        }
    }

    /// One line per key for `--help`: name, units, doc, default.
    pub fn help_text() -> String {
        let mut out = String::from("Configuration keys (key = value, `#` comments):\n");
        for k in KEYS {
            let _ = writeln!(
                out,
                "  {:<18} [{}] {} (default {})",
                k.name, k.units, k.doc, k.default
            );
        }
        out
    }
}

fn trim_float(v: f64) -> String {
    // shortest representation that round-trips
    let mut s = format!("{v}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        return s;
    }
    s.push_str(".0");
    s
}

struct ConfigBuilder {
    cfg: Config,
}

impl ConfigBuilder {
    fn new() -> Self {
        // start from hard-coded defaults equal to the registry defaults
        ConfigBuilder {
            cfg: Config {
                env: EnvParams::default(),
                tilt: 0.1,
                dt: 0.01,
                horizon: 1000.0,
                n_paths: 100,
                sim_seed: 2,
                absorb_level: -1,
                regen_l: 2.0,
                regen_pstar: 0.5,
                regen_k: 20,
                marks_seed: 3,
                grid_level: 3,
                grid_nodes: 109,
                solve_tol: 1e-9,
                res_m: 3,
                res_h: 1,
                res_rho: 1.0,
                fk_paths: 10_000,
                exit_kappa: 1.0,
                exit_paths: 2000,
                g_tilt_b: 0.12,
                g_time: 50.0,
                g_paths: 4000,
                rate_lambdas: vec![0.3, 0.2, 0.14, 0.1],
                rate_seeds: 8,
                rate_alpha: 0.25 / 24.0,
                rate_zeta: 0.05,
                rate_theta: 0.1,
                rate_eps: 0.125 / 24.0,
                rate_beta_h: 0.125,
                hom_level: 4,
                hom_nodes: 163,
                res_nodes: 109,
                rate_paths: 64,
                rate_horizon_mult: 400.0,
                mw_samples: 20_000,
                validate_samples: 10_000,
                dump_paths: false,
            },
        }
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("key `{key}`: cannot parse `{value}` as {what}"));
        macro_rules! num {
            ($ty:ty, $what:expr) => {
                value.parse::<$ty>().map_err(|_| bad($what))?
            };
        }
        let c = &mut self.cfg;
        match key {
            "d" => c.env.dim = num!(usize, "integer"),
            "lambda_ellipticity" => c.env.ellipticity = num!(f64, "number"),
            "r0" => c.env.dependence_range = num!(f64, "number"),
            "c_cell" => c.env.cell = num!(f64, "number"),
            "r_moll" => c.env.mollifier_radius = num!(f64, "number"),
            "amp_a" => c.env.amp_a = num!(f64, "number"),
            "amp_v" => c.env.amp_v = num!(f64, "number"),
            "v_offset" => c.env.v_offset = num!(f64, "number"),
            "base_scale" => c.env.base_scale = num!(f64, "number"),
            "seed" => c.env.seed = num!(u64, "64-bit integer"),
            "tilt" => c.tilt = num!(f64, "number"),
            "dt" => c.dt = num!(f64, "number"),
            "horizon" => c.horizon = num!(f64, "number"),
            "n_paths" => c.n_paths = num!(usize, "integer"),
            "sim_seed" => c.sim_seed = num!(u64, "64-bit integer"),
            "absorb_level" => c.absorb_level = num!(i32, "integer"),
            "regen_l" => c.regen_l = num!(f64, "number"),
            "regen_pstar" => c.regen_pstar = num!(f64, "number"),
            "regen_k" => c.regen_k = num!(u32, "integer"),
            "marks_seed" => c.marks_seed = num!(u64, "64-bit integer"),
            "grid_level" => c.grid_level = num!(i32, "integer"),
            "grid_nodes" => c.grid_nodes = num!(usize, "integer"),
            "solve_tol" => c.solve_tol = num!(f64, "number"),
            "res_m" => c.res_m = num!(i32, "integer"),
            "res_h" => c.res_h = num!(i32, "integer"),
            "res_rho" => c.res_rho = num!(f64, "number"),
            "fk_paths" => c.fk_paths = num!(usize, "integer"),
            "exit_kappa" => c.exit_kappa = num!(f64, "number"),
            "exit_paths" => c.exit_paths = num!(usize, "integer"),
            "g_tilt_b" => c.g_tilt_b = num!(f64, "number"),
            "g_time" => c.g_time = num!(f64, "number"),
            "g_paths" => c.g_paths = num!(usize, "integer"),
            "rate_lambdas" => {
                let mut grid = Vec::new();
                for part in value.split(',') {
                    grid.push(part.trim().parse::<f64>().map_err(|_| bad("number list"))?);
                }
                c.rate_lambdas = grid;
            }
            "rate_seeds" => c.rate_seeds = num!(usize, "integer"),
            "rate_alpha" => c.rate_alpha = num!(f64, "number"),
            "rate_zeta" => c.rate_zeta = num!(f64, "number"),
            "rate_theta" => c.rate_theta = num!(f64, "number"),
            "rate_eps" => c.rate_eps = num!(f64, "number"),
            "rate_beta_h" => c.rate_beta_h = num!(f64, "number"),
            "hom_level" => c.hom_level = num!(i32, "integer"),
            "hom_nodes" => c.hom_nodes = num!(usize, "integer"),
            "res_nodes" => c.res_nodes = num!(usize, "integer"),
            "rate_paths" => c.rate_paths = num!(usize, "integer"),
            "rate_horizon_mult" => c.rate_horizon_mult = num!(f64, "number"),
            "mw_samples" => c.mw_samples = num!(usize, "integer"),
            "validate_samples" => c.validate_samples = num!(usize, "integer"),
            "dump_paths" => c.dump_paths = value.parse::<bool>().map_err(|_| bad("true/false"))?,
            _ => unreachable!(),
        }
        Ok(())
    }

    fn finish(self) -> Result<Config> {
        Ok(self.cfg)
    }
}

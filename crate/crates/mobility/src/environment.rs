//! Random coefficient fields with finite range of dependence.
//!
//! A field is built from i.i.d. uniform variates attached to the sites of the
//! lattice `c_cell·ℤ^d`, hashed from the master seed and the cell index, and
//! smoothed with a compactly supported C^∞ bump of radius `r_moll`:
//!
//! ```text
//! F(x) = (1/B) Σ_z  u_z · φ(x − z),     φ(r) = exp(1 − 1/(1 − (r/r_moll)²))
//! ```
//!
//! The sum runs over the at most `(2⌈r_moll/c_cell⌉+1)^d` sites within
//! `r_moll` of `x`, so evaluating at two points farther than `r₀ >
//! 2·r_moll` apart touches disjoint variates. `B` is a certified upper bound
//! on `sup_x Σ_z φ(x−z)`, which pins `|F| ≤ 1` and makes the ellipticity
//! check a worst-case eigenvalue bound rather than a sampled one. Gradients
//! come from the bump's closed-form gradient.
//!
//! The coefficient matrix is `a(x) = base·(I + A(x))` with the symmetric
//! perturbation `A` weighted so its spectral radius stays below `amp_a`, and
//! the potential is `V(x) = amp_v·F_V(x)`. Construction rejects parameter
//! sets whose worst case could violate the ellipticity band `[Λ⁻¹, Λ]` for
//! `a`, `ã = e^{-2V}a`, or the clock weight `e^{-2V}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Coord, SymMat, ZERO};
use crate::medium::{Medium, StepSample};
use crate::rng::{self, STREAM_FIELD, STREAM_SAMPLER};
use crate::stats;

/// Parameters of the random medium.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EnvParams {
    /// Spatial dimension, 2 or 3.
    pub dim: usize,
    /// Ellipticity constant Λ ≥ 1: eigenvalues of a, ã and the clock weight
    /// all stay within [Λ⁻¹, Λ].
    pub ellipticity: f64,
    /// Dependence range r₀: evaluations farther apart are independent.
    pub dependence_range: f64,
    /// Lattice cell size carrying the independent variates.
    pub cell: f64,
    /// Mollifier radius; must satisfy r_moll < r₀/2 and r_moll + cell ≤ r₀.
    pub mollifier_radius: f64,
    /// Sup-norm amplitude of the relative perturbation of a.
    pub amp_a: f64,
    /// Sup-norm amplitude of the random part of the potential V.
    pub amp_v: f64,
    /// Constant offset of the potential: V = v_offset + amp_v·F.
    pub v_offset: f64,
    /// Constant diagonal scale: a = base_scale·(I + A).
    pub base_scale: f64,
    /// Master seed for all field variates.
    pub seed: u64,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            dim: 2,
            ellipticity: 4.0,
            dependence_range: 2.5,
            cell: 1.0,
            mollifier_radius: 1.0,
            amp_a: 0.5,
            amp_v: 0.3,
            v_offset: 0.0,
            base_scale: 1.0,
            seed: 1,
        }
    }
}

impl EnvParams {
    /// Constant medium a ≡ scale·I, V ≡ 0 expressed through the same params.
    pub fn constant(dim: usize, scale: f64) -> Self {
        EnvParams {
            dim,
            amp_a: 0.0,
            amp_v: 0.0,
            v_offset: 0.0,
            base_scale: scale,
            ellipticity: scale.max(1.0 / scale).max(1.0),
            ..EnvParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |name: &str, detail: String| -> Result<()> {
            Err(Error::Config(format!("constraint `{name}` violated: {detail}")))
        };
        if !(self.dim == 2 || self.dim == 3) {
            return fail("dimension", format!("d = {} not in {{2, 3}}", self.dim));
        }
        if self.ellipticity < 1.0 {
            return fail("ellipticity", format!("Λ = {} < 1", self.ellipticity));
        }
        if self.dependence_range < 1.0 {
            return fail("dependence_range", format!("r0 = {} < 1", self.dependence_range));
        }
        if self.cell <= 0.0 {
            return fail("cell", format!("c_cell = {} must be positive", self.cell));
        }
        if self.mollifier_radius <= 0.0 {
            return fail("mollifier_radius", "r_moll must be positive".into());
        }
        if self.mollifier_radius >= self.dependence_range / 2.0 {
            return fail(
                "mollifier_radius",
                format!(
                    "r_moll = {} must be < r0/2 = {}",
                    self.mollifier_radius,
                    self.dependence_range / 2.0
                ),
            );
        }
        if self.mollifier_radius + self.cell > self.dependence_range {
            return fail(
                "dependence_budget",
                format!(
                    "r_moll + c_cell = {} exceeds r0 = {}",
                    self.mollifier_radius + self.cell,
                    self.dependence_range
                ),
            );
        }
        if !(0.0..1.0).contains(&self.amp_a) {
            return fail("amp_a", format!("amp_a = {} must lie in [0, 1)", self.amp_a));
        }
        if self.amp_v < 0.0 {
            return fail("amp_v", format!("amp_v = {} must be nonnegative", self.amp_v));
        }
        if self.base_scale <= 0.0 {
            return fail("base_scale", "base_scale must be positive".into());
        }
        // Worst case over all x: eig(a) ∈ base·[1-amp_a, 1+amp_a] and
        // |V| ≤ |v_offset| + amp_v; the bands for a, ã and the clock weight
        // e^{-2V} must all fit inside [Λ⁻¹, Λ].
        let vmax = self.v_offset.abs() + self.amp_v;
        let hi = (2.0 * vmax).exp()
            * (self.base_scale * (1.0 + self.amp_a))
                .max(1.0 / (self.base_scale * (1.0 - self.amp_a)));
        if hi > self.ellipticity * (1.0 + 1e-12) {
            return fail(
                "ellipticity_budget",
                format!(
                    "worst-case eigenvalue bound e^{{2(|v_offset|+amp_v)}}·max(base(1+amp_a), 1/(base(1-amp_a))) = {hi:.6} exceeds Λ = {}",
                    self.ellipticity
                ),
            );
        }
        Ok(())
    }
}

/// Compactly supported C^∞ bump, normalized to 1 at the origin:
/// φ(r) = exp(1 − 1/(1 − s²)) with s = r/radius, zero for s ≥ 1.
#[derive(Clone, Copy, Debug)]
pub struct Bump {
    pub radius: f64,
}

impl Bump {
    #[inline]
    pub fn value(&self, r2: f64) -> f64 {
        let s2 = r2 / (self.radius * self.radius);
        if s2 >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - s2)).exp()
        }
    }

    /// Returns (φ, dφ/dr / r), the radial factor of the gradient:
    /// ∇φ(x−z) = (dφ/dr / r)·(x−z). Finite at r = 0.
    #[inline]
    pub fn value_and_slope(&self, r2: f64) -> (f64, f64) {
        let rr = self.radius * self.radius;
        let s2 = r2 / rr;
        if s2 >= 1.0 {
            return (0.0, 0.0);
        }
        let den = 1.0 - s2;
        let v = (1.0 - 1.0 / den).exp();
        // dφ/dr = -φ · 2 s / (den² · radius); dividing by r gives -2φ/(den²·rr)
        (v, -2.0 * v / (den * den * rr))
    }

    /// Certified upper bound of sup_r |dφ/dr| by dense search with a margin.
    fn slope_sup(&self) -> f64 {
        let mut m: f64 = 0.0;
        let n = 200_000;
        for i in 0..n {
            let r = self.radius * (i as f64 + 0.5) / n as f64;
            let (_, k) = self.value_and_slope(r * r);
            m = m.max((k * r).abs());
        }
        m * 1.001
    }
}

/// Channel layout: one independent field per coefficient entry plus one for
/// the potential.
const CHANNEL_POTENTIAL: u64 = 0;

#[inline]
fn channel_of_entry(i: usize, j: usize) -> u64 {
    // diagonal first, then (0,1), (0,2), (1,2)
    if i == j {
        1 + i as u64
    } else {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        4 + (i + j - 1) as u64
    }
}

/// Fully evaluated field data at one point. Produced in a single sweep over
/// the contributing lattice sites.
#[derive(Clone, Copy, Debug)]
pub struct FieldEval {
    pub a: SymMat,
    pub div_a: Coord,
    pub potential: f64,
    pub grad_potential: Coord,
}

/// A realized random medium. Immutable after construction; evaluation is a
/// pure function of (seed, x).
#[derive(Clone, Debug)]
pub struct EnvironmentField {
    pub params: EnvParams,
    bump: Bump,
    /// Certified bound for sup_x Σ_z φ(x−z); normalizes |F| ≤ 1.
    norm_b: f64,
    /// Certified bound for sup_x Σ_z |∇φ(x−z)|.
    grad_sum_bound: f64,
    field_seed: u64,
    /// Weight of the diagonal perturbation channels.
    w_diag: f64,
    /// Weight of each off-diagonal channel.
    w_off: f64,
}

pub fn build_environment(params: EnvParams) -> Result<EnvironmentField> {
    params.validate()?;
    let bump = Bump {
        radius: params.mollifier_radius,
    };
    let (norm_b, grad_sum_bound) = certified_sums(&bump, params.cell, params.dim);
    let d = params.dim;
    let env = EnvironmentField {
        field_seed: rng::substream(params.seed, STREAM_FIELD, 0),
        bump,
        norm_b,
        grad_sum_bound,
        w_diag: 0.5,
        w_off: if d > 1 { 0.5 / (d as f64 - 1.0) } else { 0.0 },
        params,
    };
    // Lipschitz budget: both V and a must have analytic Lipschitz
    // constants within Λ.
    let lf = env.field_lipschitz();
    let lv = env.params.amp_v * lf;
    let la = env.params.base_scale * env.params.amp_a * lf;
    if lv > env.params.ellipticity || la > env.params.ellipticity {
        return Err(Error::Config(format!(
            "constraint `lipschitz_budget` violated: analytic Lipschitz bounds (V: {lv:.3}, a: {la:.3}) exceed Λ = {}",
            env.params.ellipticity
        )));
    }
    Ok(env)
}

/// Certified grid-search bounds for sup_x Σ φ and sup_x Σ |∇φ| over one
/// periodicity cell, padded by the Lipschitz slack of the searched function.
fn certified_sums(bump: &Bump, cell: f64, dim: usize) -> (f64, f64) {
    let reach = (bump.radius / cell).ceil() as i64;
    let sites_per_axis = (2 * reach + 1) as f64;
    let max_sites = sites_per_axis.powi(dim as i32);
    let slope_sup = bump.slope_sup();

    let res = 48usize;
    let step = cell / res as f64;
    let mut sum_max: f64 = 0.0;
    let mut grad_max: f64 = 0.0;
    let mut idx = vec![0usize; dim];
    loop {
        let mut x = ZERO;
        for k in 0..dim {
            x[k] = (idx[k] as f64 + 0.5) * step;
        }
        let mut s = 0.0;
        let mut g = 0.0;
        for_sites(bump.radius, cell, dim, &x, |site| {
            let mut r2 = 0.0;
            for k in 0..dim {
                let dxk = x[k] - site[k] as f64 * cell;
                r2 += dxk * dxk;
            }
            let (v, slope_over_r) = bump.value_and_slope(r2);
            s += v;
            g += (slope_over_r * r2.sqrt()).abs();
        });
        sum_max = sum_max.max(s);
        grad_max = grad_max.max(g);
        // advance the multi-index
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < res {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == dim {
                break;
            }
        }
        if k == dim {
            break;
        }
    }
    // Lipschitz slack: the summed functions move at most max_sites·L per unit
    // step; the grid diagonal is step·√d/2 from the nearest sample.
    let pad = max_sites * step * (dim as f64).sqrt() / 2.0;
    (
        sum_max + pad * slope_sup,
        grad_max + pad * slope_sup, // |∇φ| is slope_sup-Lipschitz up to curvature of the same order
    )
}

/// Enumerates the lattice sites within the bump radius of `x` (at most
/// (2⌈r/c⌉+1)^d of them).
#[inline]
fn for_sites(radius: f64, cell: f64, dim: usize, x: &Coord, mut f: impl FnMut(&[i64; 3])) {
    let mut lo = [0i64; 3];
    let mut hi = [0i64; 3];
    for k in 0..dim {
        lo[k] = ((x[k] - radius) / cell).ceil() as i64;
        hi[k] = ((x[k] + radius) / cell).floor() as i64;
    }
    let mut site = [0i64; 3];
    match dim {
        2 => {
            for i in lo[0]..=hi[0] {
                site[0] = i;
                for j in lo[1]..=hi[1] {
                    site[1] = j;
                    f(&site);
                }
            }
        }
        3 => {
            for i in lo[0]..=hi[0] {
                site[0] = i;
                for j in lo[1]..=hi[1] {
                    site[1] = j;
                    for k in lo[2]..=hi[2] {
                        site[2] = k;
                        f(&site);
                    }
                }
            }
        }
        _ => unreachable!(),
    }
}

impl EnvironmentField {
    /// Number of independent scalar channels: V plus the entries of A.
    fn n_channels(&self) -> usize {
        let d = self.params.dim;
        1 + d + d * (d - 1) / 2
    }

    /// Analytic Lipschitz bound for any normalized channel field F.
    pub fn field_lipschitz(&self) -> f64 {
        self.grad_sum_bound / self.norm_b
    }

    /// Evaluates every channel and its gradient in one sweep over the sites.
    pub fn eval(&self, x: &Coord) -> FieldEval {
        let d = self.params.dim;
        let cell = self.params.cell;
        let nch = self.n_channels();
        // value and gradient accumulators per channel
        let mut vals = [0.0f64; 7];
        let mut grads = [[0.0f64; 3]; 7];
        for_sites(self.bump.radius, cell, d, x, |site| {
            let mut dx = ZERO;
            let mut r2 = 0.0;
            for k in 0..d {
                dx[k] = x[k] - site[k] as f64 * cell;
                r2 += dx[k] * dx[k];
            }
            let (v, slope_over_r) = self.bump.value_and_slope(r2);
            if v == 0.0 {
                return;
            }
            let mut h = self.field_seed;
            for c in site.iter().take(d) {
                h = rng::absorb(h, rng::zigzag(*c));
            }
            for ch in 0..nch {
                let u = rng::unit_symmetric(rng::absorb(h, ch as u64));
                vals[ch] += u * v;
                for k in 0..d {
                    grads[ch][k] += u * slope_over_r * dx[k];
                }
            }
        });
        let inv_b = 1.0 / self.norm_b;
        let read = |ch: u64| -> (f64, Coord) {
            let mut g = ZERO;
            for k in 0..d {
                g[k] = grads[ch as usize][k] * inv_b;
            }
            (vals[ch as usize] * inv_b, g)
        };

        let (fv, gv) = read(CHANNEL_POTENTIAL);
        let amp_v = self.params.amp_v;
        let potential = self.params.v_offset + amp_v * fv;
        let mut grad_potential = ZERO;
        for k in 0..d {
            grad_potential[k] = amp_v * gv[k];
        }

        let base = self.params.base_scale;
        let amp_a = self.params.amp_a;
        let mut a = SymMat::scaled_identity(d, base);
        let mut div_a = ZERO;
        for i in 0..d {
            for j in i..d {
                let w = if i == j { self.w_diag } else { self.w_off };
                let (f, g) = read(channel_of_entry(i, j));
                let scale = base * amp_a * w;
                a.set(i, j, a.get(i, j) + scale * f);
                // (∇·a)_j = Σ_i ∂_i a_ij: entry (i,j) contributes ∂_i to
                // column j and (by symmetry) ∂_j to column i.
                div_a[j] += scale * g[i];
                if i != j {
                    div_a[i] += scale * g[j];
                }
            }
        }
        FieldEval {
            a,
            div_a,
            potential,
            grad_potential,
        }
    }

    /// Lattice sites whose variates enter the evaluation at `x`. Evaluations
    /// at points farther than r₀ apart touch disjoint sets.
    pub fn touched_sites(&self, x: &Coord) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        for_sites(
            self.bump.radius,
            self.params.cell,
            self.params.dim,
            x,
            |site| out.push(*site),
        );
        out
    }
}

impl Medium for EnvironmentField {
    fn dim(&self) -> usize {
        self.params.dim
    }
    fn ellipticity(&self) -> f64 {
        self.params.ellipticity
    }
    fn smoothness_scale(&self) -> Option<f64> {
        Some(self.params.mollifier_radius)
    }
    fn a(&self, x: &Coord) -> SymMat {
        self.eval(x).a
    }
    fn div_a(&self, x: &Coord) -> Coord {
        self.eval(x).div_a
    }
    fn potential(&self, x: &Coord) -> f64 {
        self.eval(x).potential
    }
    fn grad_potential(&self, x: &Coord) -> Coord {
        self.eval(x).grad_potential
    }

    // the fused accessors below reuse a single field evaluation; the SDE
    // stepper and the operator assembly are dominated by these calls

    fn clock_weight(&self, x: &Coord) -> f64 {
        (-2.0 * self.eval(x).potential).exp()
    }

    fn a_weighted(&self, x: &Coord) -> SymMat {
        let e = self.eval(x);
        e.a.scale((-2.0 * e.potential).exp())
    }

    fn div_a_weighted(&self, x: &Coord) -> Coord {
        let e = self.eval(x);
        let d = self.params.dim;
        let w = (-2.0 * e.potential).exp();
        let agv = e.a.mul_vec(&e.grad_potential);
        let mut r = ZERO;
        for k in 0..d {
            r[k] = w * (e.div_a[k] - 2.0 * agv[k]);
        }
        r
    }

    fn step_sample(&self, tilt: f64, x: &Coord) -> StepSample {
        let e = self.eval(x);
        let d = self.params.dim;
        let weight = (-2.0 * e.potential).exp();
        let at = e.a.scale(weight);
        let agv = e.a.mul_vec(&e.grad_potential);
        let mut drift = ZERO;
        for k in 0..d {
            drift[k] = 0.5 * weight * (e.div_a[k] - 2.0 * agv[k]) + tilt * at.get(k, 0);
        }
        StepSample {
            drift,
            root: at.sqrt_spd(),
            weight,
        }
    }
}

/// Validation summary of the field hypotheses over sampled points.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_samples: usize,
    pub rayleigh_min: f64,
    pub rayleigh_max: f64,
    pub max_abs_potential: f64,
    pub max_diff_quotient_a: f64,
    pub max_diff_quotient_v: f64,
    pub symmetry_defect: f64,
    pub ellipticity_ok: bool,
    pub potential_ok: bool,
    pub lipschitz_ok: bool,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.ellipticity_ok && self.potential_ok && self.lipschitz_ok
    }
}

/// Samples Rayleigh quotients, potential bounds, difference quotients and
/// symmetry defects of any medium against its declared Λ.
pub fn validate_medium(medium: &dyn Medium, n_samples: usize, seed: u64) -> ValidationReport {
    assert!(n_samples >= 1);
    let d = medium.dim();
    let lambda = medium.ellipticity();
    let box_side = 50.0;
    let mut rmin = f64::INFINITY;
    let mut rmax = f64::NEG_INFINITY;
    let mut vmax: f64 = 0.0;
    let mut dqa: f64 = 0.0;
    let mut dqv: f64 = 0.0;
    let symmetry_defect = 0.0; // packed symmetric storage is symmetric by construction
    for k in 0..n_samples {
        let h = rng::substream(seed, STREAM_SAMPLER, k as u64);
        let mut x = ZERO;
        let mut xi = ZERO;
        for j in 0..d {
            x[j] = (rng::unit(rng::absorb(h, j as u64)) - 0.5) * box_side;
            xi[j] = rng::unit_symmetric(rng::absorb(h, 16 + j as u64));
        }
        if crate::geom::norm(d, &xi) < 1e-12 {
            xi[0] = 1.0;
        }
        let a = medium.a(&x);
        let q = a.rayleigh(&xi);
        rmin = rmin.min(q);
        rmax = rmax.max(q);
        let v = medium.potential(&x);
        vmax = vmax.max(v.abs());
        // difference quotients over a random nearby pair
        let delta = 0.05 + 0.45 * rng::unit(rng::absorb(h, 32));
        let mut y = x;
        let mut dir = ZERO;
        for j in 0..d {
            dir[j] = rng::unit_symmetric(rng::absorb(h, 48 + j as u64));
        }
        let nd = crate::geom::norm(d, &dir).max(1e-12);
        for j in 0..d {
            y[j] += delta * dir[j] / nd;
        }
        let ay = medium.a(&y);
        let mut op_diff: f64 = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += (a.get(i, j) - ay.get(i, j)).abs();
            }
            op_diff = op_diff.max(row);
        }
        dqa = dqa.max(op_diff / delta);
        dqv = dqv.max((v - medium.potential(&y)).abs() / delta);
    }
    ValidationReport {
        n_samples,
        rayleigh_min: rmin,
        rayleigh_max: rmax,
        max_abs_potential: vmax,
        max_diff_quotient_a: dqa,
        max_diff_quotient_v: dqv,
        symmetry_defect,
        ellipticity_ok: rmin >= 1.0 / lambda - 1e-12 && rmax <= lambda + 1e-12,
        potential_ok: vmax <= lambda + 1e-12,
        lipschitz_ok: dqa <= lambda + 1e-12 && dqv <= lambda + 1e-12,
    }
}

pub fn validate_environment(env: &EnvironmentField, n_samples: usize) -> ValidationReport {
    validate_medium(env, n_samples, env.params.seed ^ 0xa11d)
}

/// Monte Carlo estimate of E[e^{-2V(0)}] with standard error, using i.i.d.
/// stationary samples: sample points sit farther apart than the dependence
/// range and are jittered uniformly over one periodicity cell of the law.
pub fn mean_clock_weight_of(
    medium: &dyn Medium,
    period: f64,
    min_separation: f64,
    seed: u64,
    n_samples: usize,
) -> (f64, f64) {
    assert!(n_samples >= 2, "need at least two samples");
    let d = medium.dim();
    let stride = (min_separation / period).ceil() * period + 2.0 * period;
    let values: Vec<f64> = crate::exec::map_indices(n_samples, |k| {
        let h = rng::substream(seed, STREAM_SAMPLER, 0x77 ^ k as u64);
        let mut x = ZERO;
        x[0] = k as f64 * stride;
        for j in 0..d {
            x[j] += period * rng::unit(rng::absorb(h, j as u64));
        }
        medium.clock_weight(&x)
    });
    stats::mean_se(&values)
}

/// E[e^{-2V(0)}] for a realized environment.
pub fn mean_clock_weight(env: &EnvironmentField, n_samples: usize) -> (f64, f64) {
    let p = &env.params;
    mean_clock_weight_of(
        env,
        p.cell,
        p.dependence_range + 2.0 * p.mollifier_radius,
        p.seed ^ 0xc10c,
        n_samples,
    )
}

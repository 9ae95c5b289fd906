//! Small statistics toolbox shared by the estimators and checks: means with
//! standard errors, the delta method for ratio estimators, least-squares fits
//! with confidence intervals, lag correlations, and a two-sample
//! Kolmogorov–Smirnov test.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    assert!(n >= 1, "empty sample");
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Sample variance (unbiased).
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0)
}

/// Sample covariance (unbiased).
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (n as f64 - 1.0)
}

/// Pearson correlation coefficient.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let c = covariance(xs, ys);
    let sx = variance(xs).sqrt();
    let sy = variance(ys).sqrt();
    if sx == 0.0 || sy == 0.0 {
        0.0
    } else {
        c / (sx * sy)
    }
}

/// Ratio-of-means estimator mean(xs)/mean(ys) with a delta-method standard
/// error.
pub fn ratio_delta_method(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let r = mx / my;
    let vx = variance(xs);
    let vy = variance(ys);
    let cxy = covariance(xs, ys);
    let var_r = (vx - 2.0 * r * cxy + r * r * vy) / (my * my * n);
    (r, var_r.max(0.0).sqrt())
}

/// Lag-`j` autocorrelation pooled over independent series (pairs are formed
/// only within each series). Returns (correlation, number of pairs).
pub fn pooled_lag_correlation(series: &[Vec<f64>], lag: usize) -> (f64, usize) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in series {
        if s.len() > lag {
            for i in 0..s.len() - lag {
                xs.push(s[i]);
                ys.push(s[i + lag]);
            }
        }
    }
    if xs.len() < 3 {
        return (0.0, xs.len());
    }
    (correlation(&xs, &ys), xs.len())
}

/// Ordinary least squares y = intercept + slope·x.
#[derive(Clone, Copy, Debug)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r_squared: f64,
    pub n: usize,
}

impl LineFit {
    /// Two-sided confidence interval for the slope at the given level using
    /// the Student t quantile with n-2 degrees of freedom.
    pub fn slope_ci(&self, level: f64) -> (f64, f64) {
        let df = (self.n as f64 - 2.0).max(1.0);
        let t = StudentsT::new(0.0, 1.0, df)
            .unwrap()
            .inverse_cdf(0.5 + level / 2.0);
        (self.slope - t * self.slope_se, self.slope + t * self.slope_se)
    }
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LineFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    assert!(n >= 2, "need at least two points to fit a line");
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx = xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    let sxy = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum::<f64>();
    let ss_tot = ys.iter().map(|y| (y - my) * (y - my)).sum::<f64>();
    let sigma2 = if n > 2 { ss_res / (nf - 2.0) } else { 0.0 };
    LineFit {
        slope,
        intercept,
        slope_se: (sigma2 / sxx).sqrt(),
        r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
        n,
    }
}

/// Weighted least squares y = intercept + slope·x with known per-point
/// standard deviations; the slope CI uses the Student t quantile with n−2
/// degrees of freedom.
pub fn weighted_linear_fit(xs: &[f64], ys: &[f64], sigmas: &[f64]) -> LineFit {
    assert_eq!(xs.len(), ys.len());
    assert_eq!(xs.len(), sigmas.len());
    let n = xs.len();
    assert!(n >= 2);
    let ws: Vec<f64> = sigmas.iter().map(|s| 1.0 / (s * s).max(1e-300)).collect();
    let wsum: f64 = ws.iter().sum();
    let xw = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / wsum;
    let yw = ys.iter().zip(&ws).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let sxx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - xw) * (x - xw)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(ys)
        .zip(&ws)
        .map(|((x, y), w)| w * (x - xw) * (y - yw))
        .sum();
    let slope = sxy / sxx;
    let intercept = yw - slope * xw;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .zip(&ws)
        .map(|((x, y), w)| {
            let e = y - intercept - slope * x;
            w * e * e
        })
        .sum();
    let ss_tot: f64 = ys.iter().zip(&ws).map(|(y, w)| w * (y - yw) * (y - yw)).sum();
    LineFit {
        slope,
        intercept,
        slope_se: (1.0 / sxx).sqrt(),
        r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
        n,
    }
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

/// Two-sample Kolmogorov–Smirnov test. Returns (D statistic, asymptotic
/// p-value). Samples are assumed independent within and across groups.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut xs: Vec<f64> = a.to_vec();
    let mut ys: Vec<f64> = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xs.len(), ys.len());
    assert!(n > 0 && m > 0);
    let mut i = 0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = xs[i];
        let y = ys[j];
        if x <= y {
            i += 1;
        }
        if y <= x {
            j += 1;
        }
        let fa = i as f64 / n as f64;
        let fb = j as f64 / m as f64;
        d = d.max((fa - fb).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    (d, kolmogorov_sf(en * d))
}

/// Survival function of the Kolmogorov distribution, Q(x) = 2 Σ (-1)^{k-1}
/// exp(-2 k² x²).
fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..101 {
        let term = (-2.0 * (k as f64) * (k as f64) * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

//! Theoretical rate exponents as explicit piecewise functions, and log–log
//! least squares for empirical rates.
//!
//! Every table returns a [`RateResult`]: the decay exponent `a` of a bound
//! `t^{-a}`, whether a logarithmic factor accompanies it, the active case,
//! and whether the input sits on a case boundary the tables leave open. On a
//! boundary the smaller of the two adjacent exponents is returned with
//! `boundary = true` and `log_factor = true`.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::ops::Range;

use crate::error::{Error, Result};

/// Which quantity the exponent refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateQuantity {
    /// `E W_p^p(ν_t, ν)`
    MeanPower,
    /// `‖W_p(ν_t, ν)‖_p = (E W_p^p)^{1/p}`
    Norm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateResult {
    pub exponent: f64,
    pub log_factor: bool,
    pub regime: String,
    pub boundary: bool,
    /// The exponent is a supremum that is not attained ("1/d − ε" style).
    pub strict: bool,
    pub quantity: RateQuantity,
}

impl RateResult {
    fn new(exponent: f64, regime: impl Into<String>, quantity: RateQuantity) -> Self {
        RateResult {
            exponent,
            log_factor: false,
            regime: regime.into(),
            boundary: false,
            strict: false,
            quantity,
        }
    }

    fn with_log(mut self) -> Self {
        self.log_factor = true;
        self
    }

    fn on_boundary(mut self) -> Self {
        self.boundary = true;
        self.log_factor = true;
        self
    }

    fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    /// Exponent for `E W_p^p`, converting a norm exponent by the factor `p`.
    pub fn mean_power_exponent(&self, p: f64) -> f64 {
        match self.quantity {
            RateQuantity::MeanPower => self.exponent,
            RateQuantity::Norm => self.exponent * p,
        }
    }
}

impl fmt::Display for RateResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.quantity {
            RateQuantity::MeanPower => "E W_p^p",
            RateQuantity::Norm => "||W_p||_p",
        };
        write!(f, "{what} <~ t^-{:.6}", self.exponent)?;
        if self.strict {
            write!(f, " (strict)")?;
        }
        if self.log_factor {
            write!(f, " x log")?;
        }
        write!(f, " [{}]", self.regime)?;
        if self.boundary {
            write!(f, " [boundary]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeInput {
    pub p: f64,
    pub q: f64,
    pub d: usize,
    pub beta: f64,
    pub gamma: f64,
}

impl RegimeInput {
    pub fn new(p: f64, q: f64, d: usize, beta: f64, gamma: f64) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::invalid(format!("p must be positive, got {p}")));
        }
        if !(q > p) {
            return Err(Error::invalid(format!("q must exceed p, got q = {q}, p = {p}")));
        }
        if d == 0 {
            return Err(Error::invalid("d must be at least 1"));
        }
        if !(beta > 0.0 && beta <= 0.5) {
            return Err(Error::invalid(format!("beta must lie in (0, 1/2], got {beta}")));
        }
        if !(gamma > 0.0 && gamma <= 0.5) {
            return Err(Error::invalid(format!("gamma must lie in (0, 1/2], got {gamma}")));
        }
        Ok(RegimeInput { p, q, d, beta, gamma })
    }
}

const REL_TOL: f64 = 1e-12;

/// Three-way comparison with a relative tolerance for equality.
fn compare(a: f64, b: f64) -> Ordering {
    if (a - b).abs() <= REL_TOL * a.abs().max(b.abs()).max(1e-300) {
        Ordering::Equal
    } else if a < b {
        Ordering::Less
    } else {
        Ordering::Greater
    }
}

fn compare_p(p: f64, critical: f64) -> (Ordering, &'static str) {
    match compare(p, critical) {
        Ordering::Less => (Ordering::Less, "p<"),
        Ordering::Equal => (Ordering::Equal, "p="),
        Ordering::Greater => (Ordering::Greater, "p>"),
    }
}

/// Two-branch indicator: `small` when `x < threshold`, `large` above it, and
/// the smaller of the two on equality.
fn split(x: f64, threshold: f64, small: RateResult, large: RateResult) -> RateResult {
    match compare(x, threshold) {
        Ordering::Less => small,
        Ordering::Greater => large,
        Ordering::Equal => {
            let mut r = if small.exponent <= large.exponent { small } else { large };
            r.regime = format!("{} (on threshold)", r.regime);
            r.on_boundary()
        }
    }
}

/// The three-case table for `E W_p^p` under `A_{β,q,γ}`.
pub fn abstract_rate(input: &RegimeInput) -> RateResult {
    let RegimeInput { p, q, d, beta, gamma } = *input;
    let df = d as f64;
    let crit = df * (1.0 - beta);
    let mq = RateQuantity::MeanPower;
    let q_branch = gamma * (q - p) / (q * (1.0 - beta));
    let (ord, tag) = compare_p(p, crit);
    let large = RateResult::new(q_branch, format!("{tag}d(1-beta), large p/q"), mq);
    match ord {
        Ordering::Less => split(
            p / q,
            df / (df + q),
            RateResult::new(gamma * p / crit, "p<d(1-beta), small p/q", mq),
            large,
        ),
        Ordering::Equal => split(
            p / q,
            beta,
            RateResult::new(gamma, "p=d(1-beta), small p/q", mq).with_log(),
            large,
        ),
        Ordering::Greater => split(p / q, beta, RateResult::new(gamma, "p>d(1-beta), small p/q", mq), large),
    }
}

/// The `q > p/β` corollary for `‖W_p‖_p`.
pub fn limit_rate_wp(p: f64, d: usize, beta: f64, gamma: f64) -> Result<RateResult> {
    RegimeInput::new(p, f64::INFINITY, d, beta, gamma)?;
    let crit = d as f64 * (1.0 - beta);
    let n = RateQuantity::Norm;
    Ok(match compare(p, crit) {
        Ordering::Less => RateResult::new(gamma / crit, "p<d(1-beta)", n),
        Ordering::Equal => RateResult::new(gamma / p, "p=d(1-beta)", n).with_log(),
        Ordering::Greater => RateResult::new(gamma / p, "p>d(1-beta)", n),
    })
}

/// `(d_-, d_+)` of the non-Markov table.
pub fn d_thresholds(d: usize) -> (f64, f64) {
    let d = d as f64;
    let minus = (d + (d * d + 8.0 * d).sqrt()) / 4.0;
    let plus = (d + 1.0 + ((d + 1.0) * (d + 1.0) + 4.0 * d).sqrt()) / 2.0;
    (minus, plus)
}

/// `β(q) = (1 - 1/q) / 2`.
pub fn nonmarkov_beta(q: f64) -> f64 {
    0.5 * (1.0 - 1.0 / q)
}

/// The three-row table for `E W_p^p` of the general (possibly non-Markov)
/// criterion. In the first row the strip `dq/(d+q) <= p <= dq/(q+1)`, which
/// neither indicator covers, is reported as a boundary.
pub fn nonmarkov_rate(p: f64, q: f64, d: usize, gamma: f64) -> Result<RateResult> {
    if !(q > 1.0) {
        return Err(Error::invalid(format!("q must exceed 1, got {q}")));
    }
    RegimeInput::new(p, q, d, 0.5, gamma)?;
    let df = d as f64;
    let mq = RateQuantity::MeanPower;
    let crit = 0.5 * df * (1.0 + 1.0 / q);
    let q_branch = 2.0 * gamma * (q - p) / (q + 1.0);
    let (ord, tag) = compare_p(p, crit);
    Ok(match ord {
        Ordering::Less => {
            let small = RateResult::new(2.0 * gamma * p * q / ((q + 1.0) * df), "p<d(1+1/q)/2, p<dq/(d+q)", mq);
            let large = RateResult::new(q_branch, "p<d(1+1/q)/2, p>dq/(q+1)", mq);
            let lo = df * q / (df + q);
            let hi = df * q / (q + 1.0);
            if compare(p, lo) == Ordering::Less {
                small
            } else if compare(p, hi) == Ordering::Greater {
                large
            } else {
                let mut r = if small.exponent <= large.exponent { small } else { large };
                r.regime = "p<d(1+1/q)/2, uncovered strip dq/(d+q)<=p<=dq/(q+1)".into();
                r.on_boundary()
            }
        }
        Ordering::Equal => {
            let (dm, dp) = d_thresholds(d);
            let mid = RateResult::new(q_branch, "p=d(1+1/q)/2, d_-<q<d_+", mq);
            let high = RateResult::new(gamma, "p=d(1+1/q)/2, q>d_+", mq).with_log();
            match (compare(q, dm), compare(q, dp)) {
                (Ordering::Greater, Ordering::Less) => mid,
                (_, Ordering::Greater) => high,
                (_, Ordering::Equal) => {
                    let mut r = if mid.exponent <= high.exponent { mid } else { high };
                    r.regime = "p=d(1+1/q)/2, q=d_+".into();
                    r.on_boundary()
                }
                _ => {
                    // q <= d_-: the row is empty; the only available bound is
                    // the q-dependent one.
                    let mut r = mid;
                    r.regime = "p=d(1+1/q)/2, q<=d_-".into();
                    r.on_boundary()
                }
            }
        }
        Ordering::Greater => split(
            p,
            0.5 * (q - 1.0),
            RateResult::new(gamma, format!("{tag}d(1+1/q)/2, p<(q-1)/2"), mq),
            RateResult::new(q_branch, format!("{tag}d(1+1/q)/2, p>(q-1)/2"), mq),
        ),
    })
}

/// All-moments shorthand `‖W_p‖_p <~ t^{-2γ(1/(2p) ∧ (1/d)^-)}`: `2γ/d - ε`
/// (strict) when `p <= d/2`, `γ/p` otherwise.
pub fn nonmarkov_shorthand(p: f64, d: usize, gamma: f64, epsilon: f64) -> Result<RateResult> {
    RegimeInput::new(p, f64::INFINITY, d, 0.5, gamma)?;
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let df = d as f64;
    Ok(if compare(p, 0.5 * df) != Ordering::Greater {
        RateResult::new(2.0 * gamma / df - epsilon, "p<=d/2", RateQuantity::Norm).strict()
    } else {
        RateResult::new(gamma / p, "p>d/2", RateQuantity::Norm)
    })
}

/// Stationary Markov processes under a Poincaré-type inequality (β = γ = 1/2).
pub fn poincare_rate(p: f64, q: f64, d: usize) -> Result<RateResult> {
    RegimeInput::new(p, q, d, 0.5, 0.5)?;
    let half_d = 0.5 * d as f64;
    let df = d as f64;
    let mq = RateQuantity::MeanPower;
    let large = |tag: &str| RateResult::new(1.0 - p / q, format!("{tag}d/2, p/q large"), mq);
    Ok(match compare(p, half_d) {
        Ordering::Less => split(p / q, df / (df + q), RateResult::new(p / df, "p<d/2, p/q small", mq), large("p<")),
        Ordering::Equal => split(p / q, 0.5, RateResult::new(0.5, "p=d/2, p/q small", mq).with_log(), large("p=")),
        Ordering::Greater => split(p / q, 0.5, RateResult::new(0.5, "p>d/2, p/q small", mq), large("p>")),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FractionalSetting {
    /// Moving-average kernel with tail exponent ζ > 3/2.
    GeneralKernel { zeta: f64 },
    /// Fractional Brownian driver (ζ = 5/2 − H).
    Fbm { hurst: f64 },
    /// Stationary 1D fractional Ornstein–Uhlenbeck (affine drift).
    FractionalOu { hurst: f64 },
}

/// `‖W_p‖_p` exponents for fractional-noise-driven SDEs.
pub fn fractional_rate(setting: FractionalSetting, p: f64, d: usize, epsilon: f64) -> Result<RateResult> {
    if !(p > 0.0 && p.is_finite()) || d == 0 {
        return Err(Error::invalid("need p > 0 and d >= 1"));
    }
    let needs_eps = !matches!(setting, FractionalSetting::FractionalOu { .. });
    if needs_eps && !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let df = d as f64;
    let n = RateQuantity::Norm;
    let core = (0.5 / p).min(1.0 / df);
    let very_short = || {
        let e = (0.5 / p).min(1.0 / df - epsilon);
        let r = RateResult::new(e, "very short memory (zeta>5/2)", n);
        if 1.0 / df - epsilon < 0.5 / p {
            r.strict()
        } else {
            r
        }
    };
    let short_long = |zeta: f64, label: &str| RateResult::new((zeta - 1.5) * core - epsilon, label, n).strict();
    Ok(match setting {
        FractionalSetting::GeneralKernel { zeta } => {
            if !(zeta > 1.5 && zeta.is_finite()) {
                return Err(Error::invalid(format!("zeta must exceed 3/2, got {zeta}")));
            }
            match compare(zeta, 2.5) {
                Ordering::Greater => very_short(),
                Ordering::Less => short_long(zeta, "short/long memory (3/2<zeta<5/2)"),
                Ordering::Equal => {
                    let a = very_short();
                    let b = short_long(zeta, "zeta=5/2");
                    let mut r = if a.exponent <= b.exponent { a } else { b };
                    r.regime = "zeta=5/2".into();
                    r.on_boundary()
                }
            }
        }
        FractionalSetting::Fbm { hurst } => {
            if !(hurst > 0.0 && hurst < 1.0) {
                return Err(Error::invalid(format!("hurst must lie in (0,1), got {hurst}")));
            }
            RateResult::new((1.0 - hurst) * core - epsilon, "fbm driver", n).strict()
        }
        FractionalSetting::FractionalOu { hurst } => {
            if !(hurst > 0.0 && hurst < 1.0) {
                return Err(Error::invalid(format!("hurst must lie in (0,1), got {hurst}")));
            }
            if d != 1 {
                return Err(Error::invalid("the fractional OU rate is stated for d = 1"));
            }
            let label = if hurst < 0.5 { "fOU, H<1/2" } else { "fOU, H>=1/2" };
            RateResult::new(0.5f64.min(1.0 - hurst) / p, label, n)
        }
    })
}

/// Ordinary least squares of `log value` on `log t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Residual standard error of the regression.
    pub residual: f64,
    /// Standard error of the slope.
    pub slope_se: f64,
    pub points: usize,
}

pub fn fit_rate(series: &[(f64, f64)], window: Range<usize>) -> Result<RateFit> {
    let window = window.start.min(series.len())..window.end.min(series.len());
    let pts = &series[window];
    if pts.len() < 3 {
        return Err(Error::invalid(format!("need at least 3 points, got {}", pts.len())));
    }
    if let Some(&(t, v)) = pts.iter().find(|&&(t, v)| !(t > 0.0 && v > 0.0) || !t.is_finite() || !v.is_finite()) {
        return Err(Error::invalid(format!("non-positive point ({t}, {v}) in fit window")));
    }
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("fit needs at least two distinct times"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let residual = (rss / (n - 2.0)).sqrt();
    Ok(RateFit {
        slope,
        intercept,
        residual,
        slope_se: residual / sxx.sqrt(),
        points: pts.len(),
    })
}

/// Parameter grid for [`write_rate_table`].
#[derive(Debug, Clone, PartialEq)]
pub struct RateGrid {
    pub ps: Vec<f64>,
    pub qs: Vec<f64>,
    pub ds: Vec<usize>,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl Default for RateGrid {
    fn default() -> Self {
        RateGrid {
            ps: vec![0.5, 1.0, 2.0, 3.0],
            qs: vec![4.0, 10.0, 100.0],
            ds: vec![1, 2, 3, 4],
            betas: vec![0.25, 0.5],
            gammas: vec![0.25, 0.5],
        }
    }
}

/// CSV of `abstract_rate` over the grid with header
/// `p,q,d,beta,gamma,exponent,log,regime`; combinations with `q <= p` are skipped.
pub fn write_rate_table<W: Write>(grid: &RateGrid, out: W) -> Result<usize> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Parse {
        what: "rate table",
        detail: e.to_string(),
    };
    w.write_record(["p", "q", "d", "beta", "gamma", "exponent", "log", "regime"])
        .map_err(err)?;
    let mut rows = 0;
    for &p in &grid.ps {
        for &q in &grid.qs {
            for &d in &grid.ds {
                for &beta in &grid.betas {
                    for &gamma in &grid.gammas {
                        let Ok(input) = RegimeInput::new(p, q, d, beta, gamma) else {
                            continue;
                        };
                        let r = abstract_rate(&input);
                        w.write_record([
                            p.to_string(),
                            q.to_string(),
                            d.to_string(),
                            beta.to_string(),
                            gamma.to_string(),
                            r.exponent.to_string(),
                            r.log_factor.to_string(),
                            r.regime.clone(),
                        ])
                        .map_err(err)?;
                        rows += 1;
                    }
                }
            }
        }
    }
    w.flush().map_err(|e| Error::Parse {
        what: "rate table",
        detail: e.to_string(),
    })?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn abstract_examples() {
        let r = abstract_rate(&RegimeInput::new(1.0, 100.0, 3, 0.5, 0.5).unwrap());
        assert!(close(r.exponent, 1.0 / 3.0) && !r.log_factor && !r.boundary);
        let r = abstract_rate(&RegimeInput::new(1.0, 100.0, 2, 0.5, 0.5).unwrap());
        assert!(close(r.exponent, 0.5) && r.log_factor && !r.boundary);
        let r = abstract_rate(&RegimeInput::new(1.0, 100.0, 1, 0.5, 0.5).unwrap());
        assert!(close(r.exponent, 0.5) && !r.log_factor);
    }

    #[test]
    fn abstract_boundary_takes_smaller() {
        // p/q = β with p > d(1-β)
        let r = abstract_rate(&RegimeInput::new(1.0, 2.0, 1, 0.5, 0.5).unwrap());
        assert!(r.boundary && r.log_factor);
        assert!(close(r.exponent, 0.5));
    }

    #[test]
    fn limit_examples() {
        assert!(close(limit_rate_wp(2.0, 10, 0.5, 0.5).unwrap().exponent, 0.1));
        assert!(close(limit_rate_wp(1.0, 1, 0.5, 0.5).unwrap().exponent, 0.5));
        let r = limit_rate_wp(1.0, 2, 0.5, 0.5).unwrap();
        assert!(r.log_factor && close(r.exponent, 0.5));
    }

    #[test]
    fn thresholds_in_one_dimension() {
        let (m, p) = d_thresholds(1);
        assert!(close(m, 1.0));
        assert!(close(p, 1.0 + 2f64.sqrt()));
    }

    #[test]
    fn nonmarkov_limits() {
        let r = nonmarkov_rate(1.0, 1e8, 1, 0.5).unwrap();
        assert!((r.exponent - 0.5).abs() < 1e-6);
        let r = nonmarkov_rate(1.0, 1e8, 4, 0.5).unwrap();
        assert!((r.exponent - 0.25).abs() < 1e-6);
        let s = nonmarkov_shorthand(1.0, 4, 0.5, 0.01).unwrap();
        assert!(close(s.exponent, 0.24) && s.strict);
    }

    #[test]
    fn nonmarkov_strip_is_boundary() {
        // d = 3, q = 4: dq/(d+q) = 12/7, dq/(q+1) = 12/5, d(1+1/q)/2 = 15/8
        let r = nonmarkov_rate(1.8, 4.0, 3, 0.5).unwrap();
        assert!(r.boundary);
        let a: f64 = 2.0 * 0.5 * 1.8 * 4.0 / (5.0 * 3.0);
        let b = 2.0 * 0.5 * (4.0 - 1.8) / 5.0;
        assert!(close(r.exponent, a.min(b)));
    }

    #[test]
    fn poincare_examples() {
        assert!(close(poincare_rate(1.0, 10.0, 3).unwrap().exponent, 1.0 / 3.0));
        assert!(close(poincare_rate(1.0, 10.0, 1).unwrap().exponent, 0.5));
        assert!(close(poincare_rate(3.0, 4.0, 1).unwrap().exponent, 0.25));
    }

    #[test]
    fn fractional_examples() {
        let eps = 1e-3;
        let fou = fractional_rate(FractionalSetting::FractionalOu { hurst: 0.7 }, 1.0, 1, 0.0).unwrap();
        assert!(close(fou.exponent, 0.3) && !fou.strict);
        let fou = fractional_rate(FractionalSetting::FractionalOu { hurst: 0.3 }, 1.0, 1, 0.0).unwrap();
        assert!(close(fou.exponent, 0.5));
        let k = fractional_rate(FractionalSetting::GeneralKernel { zeta: 3.0 }, 1.0, 2, eps).unwrap();
        assert!(close(k.exponent, 0.5 - eps) && k.strict);
        let f = fractional_rate(FractionalSetting::Fbm { hurst: 0.7 }, 1.0, 1, eps).unwrap();
        assert!(close(f.exponent, 0.3 * 0.5 - eps));
        assert!(fractional_rate(FractionalSetting::FractionalOu { hurst: 0.3 }, 1.0, 2, 0.0).is_err());
        let b = fractional_rate(FractionalSetting::GeneralKernel { zeta: 2.5 }, 1.0, 1, eps).unwrap();
        assert!(b.boundary);
    }

    #[test]
    fn fit_exact_power_law() {
        let s: Vec<(f64, f64)> = (4..13).map(|k| {
            let t = 2f64.powi(k);
            (t, 3.0 * t.powf(-0.5))
        }).collect();
        let f = fit_rate(&s, 0..s.len()).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        let c: Vec<(f64, f64)> = s.iter().map(|&(t, _)| (t, 2.0)).collect();
        assert!(fit_rate(&c, 0..c.len()).unwrap().slope.abs() < 1e-12);
        assert!(fit_rate(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)], 0..3).is_err());
        assert!(fit_rate(&s, 0..2).is_err());
    }

    #[test]
    fn rate_table_dump() {
        let mut buf = Vec::new();
        let rows = write_rate_table(&RateGrid::default(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), rows + 1);
        assert!(text.starts_with("p,q,d,beta,gamma,exponent,log,regime"));
    }
}

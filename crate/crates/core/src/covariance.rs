//! Checks of the Gaussian covariance (Hermite) bound and of the fractional OU
//! covariance asymptotics.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::occupation::build_occupation_window;
use crate::process::ProcessSpec;
use crate::rates::{fit_rate, RateFit};
use crate::seed::{derive_seed, rng_from_seed, stream};
use crate::special::{normal_cdf, normal_pdf};
use crate::targets::TargetLaw;

/// Centered Gaussian pair `(U, V)` with `Var U = Var V = σ²` and raw
/// covariance `rho_cov`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BivariateGaussianSpec {
    sigma_u: f64,
    rho_cov: f64,
}

impl BivariateGaussianSpec {
    pub fn new(sigma_u: f64, rho_cov: f64) -> Result<Self> {
        if !(sigma_u > 0.0 && sigma_u.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma_u}")));
        }
        if !(rho_cov.abs() <= sigma_u * sigma_u) {
            return Err(Error::invalid(format!(
                "covariance {rho_cov} exceeds the variance {}",
                sigma_u * sigma_u
            )));
        }
        Ok(BivariateGaussianSpec { sigma_u, rho_cov })
    }

    pub fn sigma_u(&self) -> f64 {
        self.sigma_u
    }

    pub fn rho_cov(&self) -> f64 {
        self.rho_cov
    }

    /// Correlation coefficient `rho_cov / σ²`.
    pub fn correlation(&self) -> f64 {
        self.rho_cov / (self.sigma_u * self.sigma_u)
    }

    /// The lemma's hypothesis `|Cov(U, V)| <= 1/2`.
    pub fn lemma_applies(&self) -> bool {
        self.rho_cov.abs() <= 0.5
    }
}

/// `|Cov(f(U), g(V))| <= 2 √(Var f(U) Var g(V)) σ^{-2} |Cov(U, V)|`.
pub fn hermite_bound(spec: &BivariateGaussianSpec, var_f: f64, var_g: f64) -> Result<f64> {
    if !spec.lemma_applies() {
        return Err(Error::OutOfDomain(format!(
            "Gaussian covariance lemma needs |Cov(U,V)| <= 1/2, got {}",
            spec.rho_cov
        )));
    }
    if !(var_f >= 0.0) || !(var_g >= 0.0) {
        return Err(Error::invalid("variances must be non-negative"));
    }
    Ok(2.0 * (var_f * var_g).sqrt() * spec.rho_cov.abs() / (spec.sigma_u * spec.sigma_u))
}

/// The closed catalog of test functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunctionTag {
    /// `1{x <= a}`
    Indicator(f64),
    Identity,
    /// `clamp(x, -c, c)`
    ClippedIdentity(f64),
}

impl FunctionTag {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            FunctionTag::Indicator(a) => f64::from(u8::from(x <= a)),
            FunctionTag::Identity => x,
            FunctionTag::ClippedIdentity(c) => x.clamp(-c, c),
        }
    }

    /// `Var f(X)` for `X ~ N(0, σ²)`.
    pub fn variance(&self, sigma: f64) -> f64 {
        match *self {
            FunctionTag::Indicator(a) => {
                let p = normal_cdf(a / sigma);
                p * (1.0 - p)
            }
            FunctionTag::Identity => sigma * sigma,
            FunctionTag::ClippedIdentity(c) => {
                let k = c / sigma;
                let inner = sigma * sigma * (2.0 * normal_cdf(k) - 1.0 - 2.0 * k * normal_pdf(k));
                inner + 2.0 * c * c * normal_cdf(-k)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            FunctionTag::Indicator(a) => format!("indicator({a})"),
            FunctionTag::Identity => "identity".into(),
            FunctionTag::ClippedIdentity(c) => format!("clipped({c})"),
        }
    }
}

/// `P(U <= 0, V <= 0) - 1/4 = arcsin(ρ)/(2π)` for correlation `ρ`.
pub fn orthant_covariance(correlation: f64) -> f64 {
    correlation.asin() / (2.0 * std::f64::consts::PI)
}

/// Monte Carlo `Cov(f(U), g(V))` with its jackknife standard error. The pair
/// is built by exact linear mixing of two independent standard normals.
pub fn mc_covariance(spec: &BivariateGaussianSpec, f: FunctionTag, g: FunctionTag, samples: usize, seed: u64) -> Result<(f64, f64)> {
    if samples < 3 {
        return Err(Error::invalid("need at least 3 samples"));
    }
    let rho = spec.correlation();
    let mix = (1.0 - rho * rho).max(0.0).sqrt();
    let s = spec.sigma_u;
    let mut rng = rng_from_seed(seed);
    let mut fs = Vec::with_capacity(samples);
    let mut gs = Vec::with_capacity(samples);
    for _ in 0..samples {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        fs.push(f.eval(s * z1));
        gs.push(g.eval(s * (rho * z1 + mix * z2)));
    }
    Ok(covariance_with_jackknife(&fs, &gs))
}

/// Unbiased sample covariance and its O(n) jackknife standard error.
pub fn covariance_with_jackknife(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    // Centered sums: Σa = Σb = 0 up to rounding.
    let (mut sa, mut sb, mut sab) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (a, b) = (x - mx, y - my);
        sa += a;
        sb += b;
        sab += a * b;
    }
    let cov = (sab - sa * sb / n) / (n - 1.0);
    let loo: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let (a, b) = (x - mx, y - my);
            let m = n - 1.0;
            ((sab - a * b) - (sa - a) * (sb - b) / m) / (m - 1.0)
        })
        .collect();
    let mean_loo = loo.iter().sum::<f64>() / n;
    let var = (n - 1.0) / n * loo.iter().map(|c| (c - mean_loo).powi(2)).sum::<f64>();
    (cov, var.sqrt())
}

/// One row of the Hermite-bound report.
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaCheck {
    pub f: FunctionTag,
    pub g: FunctionTag,
    pub rho: f64,
    pub estimate: f64,
    pub se: f64,
    pub bound: f64,
    /// `|estimate| - 3 se <= bound`
    pub pass: bool,
}

/// Runs every `(f, g, ρ)` combination (σ = 1) and compares against the bound.
pub fn lemma_suite(functions: &[FunctionTag], rhos: &[f64], samples: usize, seed: u64) -> Result<Vec<LemmaCheck>> {
    let mut jobs = Vec::new();
    for &f in functions {
        for &g in functions {
            for &rho in rhos {
                jobs.push((f, g, rho));
            }
        }
    }
    jobs.into_par_iter()
        .enumerate()
        .map(|(i, (f, g, rho))| {
            let spec = BivariateGaussianSpec::new(1.0, rho)?;
            let (estimate, se) = mc_covariance(&spec, f, g, samples, derive_seed(seed, i as u64))?;
            let bound = hermite_bound(&spec, f.variance(1.0), g.variance(1.0))?;
            Ok(LemmaCheck {
                f,
                g,
                rho,
                estimate,
                se,
                bound,
                pass: estimate.abs() - 3.0 * se <= bound,
            })
        })
        .collect()
}

/// CSV `f,g,rho,estimate,se,bound,pass`.
pub fn write_lemma_report<W: Write>(rows: &[LemmaCheck], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Parse {
        what: "covariance report",
        detail: e.to_string(),
    };
    w.write_record(["f", "g", "rho", "estimate", "se", "bound", "pass"]).map_err(err)?;
    for r in rows {
        w.write_record([
            r.f.label(),
            r.g.label(),
            r.rho.to_string(),
            r.estimate.to_string(),
            r.se.to_string(),
            r.bound.to_string(),
            r.pass.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Parse {
        what: "covariance report",
        detail: e.to_string(),
    })
}

/// Leading term `σ² H(2H-1) λ^{-2} τ^{2H-2}` of the stationary fOU covariance
/// at lag `τ >= 1`, for `H ∈ (1/2, 1)`.
pub fn fou_covariance_asymptotic(lambda: f64, sigma: f64, hurst: f64, tau: f64) -> Result<f64> {
    if !(hurst > 0.5 && hurst < 1.0) {
        return Err(Error::OutOfDomain(format!(
            "fOU covariance asymptotic needs H in (1/2, 1), got {hurst}"
        )));
    }
    if !(tau >= 1.0) {
        return Err(Error::OutOfDomain(format!("fOU covariance asymptotic needs lag >= 1, got {tau}")));
    }
    if !(lambda > 0.0) || !(sigma > 0.0) {
        return Err(Error::invalid("lambda and sigma must be positive"));
    }
    Ok(sigma * sigma * hurst * (2.0 * hurst - 1.0) * tau.powf(2.0 * hurst - 2.0) / (lambda * lambda))
}

/// Setup for [`variance_decay_check`].
#[derive(Debug, Clone)]
pub struct VarianceDecaySetup<'a> {
    pub process: &'a ProcessSpec,
    /// Stationary law: starting states are drawn from it and `ν(A)` is its CDF.
    pub target: &'a TargetLaw,
    /// Upper endpoints `a` of the half-lines `(-∞, a]`; `+∞` is the full line.
    pub thresholds: Vec<f64>,
    pub times: Vec<f64>,
    pub burn_in: f64,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceDecayRow {
    pub threshold: f64,
    pub t: f64,
    pub mean_square: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceDecayReport {
    pub rows: Vec<VarianceDecayRow>,
    /// Fitted decay exponent per threshold (`None` when the error is
    /// identically zero, e.g. for the full line).
    pub exponents: Vec<(f64, Option<RateFit>)>,
}

/// Estimates `E|ν_t(A) - ν(A)|²` for half-lines `A` over independent
/// stationary-start replications and fits its decay in `t`.
pub fn variance_decay_check(setup: &VarianceDecaySetup<'_>) -> Result<VarianceDecayReport> {
    let process = setup.process;
    if process.dim() != 1 || setup.target.dim() != 1 {
        return Err(Error::invalid("variance decay check is one-dimensional"));
    }
    if setup.replications < 2 || setup.times.is_empty() {
        return Err(Error::invalid("need at least 2 replications and one time"));
    }
    if setup.times.windows(2).any(|w| !(w[1] > w[0])) || !(setup.times[0] > 0.0) {
        return Err(Error::invalid("times must be positive and increasing"));
    }
    let dt = process.dt;
    let burn_steps = (setup.burn_in / dt).round() as usize;
    let ends: Vec<usize> = setup.times.iter().map(|t| burn_steps + (t / dt).round() as usize).collect();
    let total = *ends.last().unwrap();
    let nu: Vec<f64> = setup
        .thresholds
        .iter()
        .map(|&a| if a == f64::INFINITY { Ok(1.0) } else { setup.target.cdf(a) })
        .collect::<Result<_>>()?;

    // errors[rep][threshold][time]
    let errors: Vec<Vec<Vec<f64>>> = (0..setup.replications)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(setup.seed, r as u64);
            let x0 = setup.target.sample(1, derive_seed(rep_seed, stream::INITIAL_STATE));
            let path = process.simulate(&x0, total, rep_seed).map_err(|e| Error::Replication {
                seed: rep_seed,
                source: Box::new(e),
            })?;
            let mut out = vec![vec![0.0; ends.len()]; setup.thresholds.len()];
            for (k, &end) in ends.iter().enumerate() {
                let m = build_occupation_window(&path, burn_steps as f64 * dt, end, 1)?;
                for (j, &a) in setup.thresholds.iter().enumerate() {
                    let frac = if a == f64::INFINITY {
                        1.0
                    } else {
                        m.points().iter().filter(|&&x| x <= a).count() as f64 / m.count() as f64
                    };
                    out[j][k] = (frac - nu[j]).powi(2);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let n = setup.replications as f64;
    let mut rows = Vec::new();
    let mut exponents = Vec::new();
    for (j, &a) in setup.thresholds.iter().enumerate() {
        let mut series = Vec::new();
        for (k, &t) in setup.times.iter().enumerate() {
            let vals: Vec<f64> = errors.iter().map(|e| e[j][k]).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            rows.push(VarianceDecayRow {
                threshold: a,
                t,
                mean_square: mean,
                se: (var / n).sqrt(),
            });
            series.push((t, mean));
        }
        let fit = if series.iter().all(|&(_, v)| v > 0.0) && series.len() >= 3 {
            Some(fit_rate(&series, 0..series.len())?)
        } else {
            None
        };
        exponents.push((a, fit));
    }
    Ok(VarianceDecayReport { rows, exponents })
}

/// `(2 - 2H) ∧ 1`, the variance-decay exponent expected for the fOU.
pub fn fou_variance_decay_exponent(hurst: f64) -> f64 {
    (2.0 - 2.0 * hurst).min(1.0)
}

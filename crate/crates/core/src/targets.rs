//! Invariant laws: closed-form Gaussians and long-run empirical surrogates.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::occupation::{OccupationMeasure, OccupationProvenance};
use crate::process::{hex_digest, ProcessSpec};
use crate::seed::{derive_seed, rng_from_seed};
use crate::special::{gamma, normal_cdf, normal_quantile};

/// Default number of independent terminal states in a surrogate.
pub const DEFAULT_SURROGATE_SAMPLES: usize = 1 << 16;

/// Smallest burn-in (time units) accepted for a surrogate.
pub const MIN_SURROGATE_BURN_IN: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateProvenance {
    pub process_hash: String,
    pub seed: u64,
    pub t_burn: f64,
}

/// Terminal states of independent long runs, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    points: Vec<f64>,
    dim: usize,
    provenance: SurrogateProvenance,
}

impl Surrogate {
    pub fn new(points: Vec<f64>, dim: usize, provenance: SurrogateProvenance) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(Error::invalid("surrogate cloud must be non-empty"));
        }
        if !(provenance.t_burn >= MIN_SURROGATE_BURN_IN) {
            return Err(Error::invalid(format!(
                "surrogate burn-in {} is below the minimum {MIN_SURROGATE_BURN_IN}",
                provenance.t_burn
            )));
        }
        Ok(Surrogate {
            points,
            dim,
            provenance,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn provenance(&self) -> &SurrogateProvenance {
        &self.provenance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetLaw {
    Gaussian1D { mean: f64, variance: f64 },
    GaussianDiag { mean: Vec<f64>, variances: Vec<f64> },
    EmpiricalSurrogate(Surrogate),
}

impl TargetLaw {
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) || !mean.is_finite() {
            return Err(Error::invalid(format!("need finite mean and positive variance, got {variance}")));
        }
        Ok(TargetLaw::Gaussian1D { mean, variance })
    }

    pub fn gaussian_diag(mean: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != variances.len() || variances.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("need one positive variance per coordinate"));
        }
        Ok(TargetLaw::GaussianDiag { mean, variances })
    }

    pub fn dim(&self) -> usize {
        match self {
            TargetLaw::Gaussian1D { .. } => 1,
            TargetLaw::GaussianDiag { mean, .. } => mean.len(),
            TargetLaw::EmpiricalSurrogate(s) => s.dim,
        }
    }

    /// Per-coordinate means and variances (empirical for surrogates).
    pub fn marginal_moments(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            TargetLaw::Gaussian1D { mean, variance } => (vec![*mean], vec![*variance]),
            TargetLaw::GaussianDiag { mean, variances } => (mean.clone(), variances.clone()),
            TargetLaw::EmpiricalSurrogate(s) => {
                let n = s.len() as f64;
                let d = s.dim;
                let mut m = vec![0.0; d];
                for x in s.points.chunks(d) {
                    for c in 0..d {
                        m[c] += x[c] / n;
                    }
                }
                let mut v = vec![0.0; d];
                for x in s.points.chunks(d) {
                    for c in 0..d {
                        v[c] += (x[c] - m[c]).powi(2) / (n - 1.0).max(1.0);
                    }
                }
                (m, v)
            }
        }
    }

    /// Resolution floor of a surrogate target: `σ̂ n^{-1/2}` with `σ̂` the
    /// root of the summed coordinate variances. Zero for closed-form laws.
    pub fn sampling_floor(&self) -> f64 {
        match self {
            TargetLaw::EmpiricalSurrogate(s) => {
                let (_, v) = self.marginal_moments();
                (v.iter().sum::<f64>() / s.len() as f64).sqrt()
            }
            _ => 0.0,
        }
    }

    /// Quantile of a one-dimensional law (order statistic for surrogates).
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::invalid(format!("quantile level must lie in (0,1), got {u}")));
        }
        match self {
            TargetLaw::Gaussian1D { mean, variance } => Ok(mean + variance.sqrt() * normal_quantile(u)),
            TargetLaw::GaussianDiag { mean, variances } if mean.len() == 1 => {
                Ok(mean[0] + variances[0].sqrt() * normal_quantile(u))
            }
            TargetLaw::EmpiricalSurrogate(s) if s.dim == 1 => {
                let mut v = s.points.clone();
                v.sort_by(f64::total_cmp);
                let k = ((u * v.len() as f64).ceil() as usize).clamp(1, v.len());
                Ok(v[k - 1])
            }
            _ => Err(Error::invalid("quantile requires a one-dimensional law")),
        }
    }

    /// CDF of a one-dimensional law at `x` (`P(X <= x)`).
    pub fn cdf(&self, x: f64) -> Result<f64> {
        match self {
            TargetLaw::Gaussian1D { mean, variance } => Ok(normal_cdf((x - mean) / variance.sqrt())),
            TargetLaw::GaussianDiag { mean, variances } if mean.len() == 1 => {
                Ok(normal_cdf((x - mean[0]) / variances[0].sqrt()))
            }
            TargetLaw::EmpiricalSurrogate(s) if s.dim == 1 => {
                Ok(s.points.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64)
            }
            _ => Err(Error::invalid("cdf requires a one-dimensional law")),
        }
    }

    /// `n` independent draws, row-major. Surrogates are resampled uniformly.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        match self {
            TargetLaw::Gaussian1D { mean, variance } => {
                let sd = variance.sqrt();
                (0..n)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        mean + sd * z
                    })
                    .collect()
            }
            TargetLaw::GaussianDiag { mean, variances } => {
                let mut out = Vec::with_capacity(n * mean.len());
                for _ in 0..n {
                    for (m, v) in mean.iter().zip(variances) {
                        let z: f64 = rng.sample(StandardNormal);
                        out.push(m + v.sqrt() * z);
                    }
                }
                out
            }
            TargetLaw::EmpiricalSurrogate(s) => {
                let mut out = Vec::with_capacity(n * s.dim);
                for _ in 0..n {
                    let i = rng.random_range(0..s.len());
                    out.extend_from_slice(&s.points[i * s.dim..(i + 1) * s.dim]);
                }
                out
            }
        }
    }
}

/// Stationary law of `dX = -λX dt + σ dW`: `N(0, σ²/(2λ))`.
pub fn ou_invariant(lambda: f64, sigma: f64) -> Result<TargetLaw> {
    if !(lambda > 0.0) || !(sigma > 0.0) {
        return Err(Error::invalid("lambda and sigma must be positive"));
    }
    TargetLaw::gaussian(0.0, sigma * sigma / (2.0 * lambda))
}

/// Stationary law of the fractional OU process: `N(0, σ² λ^{-2H} H Γ(2H))`.
pub fn fou_invariant(lambda: f64, sigma: f64, hurst: f64) -> Result<TargetLaw> {
    if !(lambda > 0.0) || !(sigma > 0.0) {
        return Err(Error::invalid("lambda and sigma must be positive"));
    }
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::invalid(format!("hurst must lie in (0,1), got {hurst}")));
    }
    TargetLaw::gaussian(0.0, fou_variance(lambda, sigma, hurst))
}

pub fn fou_variance(lambda: f64, sigma: f64, hurst: f64) -> f64 {
    sigma * sigma * lambda.powf(-2.0 * hurst) * hurst * gamma(2.0 * hurst)
}

/// Cache key of a surrogate: SHA-256 over the process description, burn-in,
/// sample count and seed.
pub fn surrogate_cache_key(process: &ProcessSpec, t_burn: f64, sample_count: usize, seed: u64) -> String {
    hex_digest(format!("{};t_burn={t_burn:e};n={sample_count};seed={seed}", process.describe()).as_bytes())
}

/// Terminal states after `t_burn` of `sample_count` independent runs started
/// at the origin. Run `i` uses seed `derive_seed(seed, i)`.
pub fn surrogate_invariant(process: &ProcessSpec, t_burn: f64, sample_count: usize, seed: u64) -> Result<TargetLaw> {
    if sample_count == 0 {
        return Err(Error::invalid("surrogate needs at least one sample"));
    }
    if !(t_burn >= MIN_SURROGATE_BURN_IN && t_burn.is_finite()) {
        return Err(Error::invalid(format!(
            "surrogate burn-in must be at least {MIN_SURROGATE_BURN_IN}, got {t_burn}"
        )));
    }
    let dim = process.dim();
    let steps = (t_burn / process.dt).round().max(2.0) as usize;
    let x0 = vec![0.0; dim];
    let terminals: Vec<Vec<f64>> = (0..sample_count)
        .into_par_iter()
        .map(|i| {
            let run_seed = derive_seed(seed, i as u64);
            process
                .simulate(&x0, steps, run_seed)
                .map(|p| p.state(p.len() - 1).to_vec())
                .map_err(|e| Error::Replication {
                    seed: run_seed,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let points = terminals.concat();
    Ok(TargetLaw::EmpiricalSurrogate(Surrogate::new(
        points,
        dim,
        SurrogateProvenance {
            process_hash: process.content_hash(),
            seed,
            t_burn,
        },
    )?))
}

/// [`surrogate_invariant`] with an on-disk cache in the point-cloud binary
/// format, keyed by [`surrogate_cache_key`].
pub fn cached_surrogate(dir: &Path, process: &ProcessSpec, t_burn: f64, sample_count: usize, seed: u64) -> Result<TargetLaw> {
    let key = surrogate_cache_key(process, t_burn, sample_count, seed);
    let file = dir.join(format!("surrogate-{}.bin", &key[..16]));
    let provenance = SurrogateProvenance {
        process_hash: process.content_hash(),
        seed,
        t_burn,
    };
    if file.exists() {
        let cloud = OccupationMeasure::read_binary(&file)?;
        return Ok(TargetLaw::EmpiricalSurrogate(Surrogate::new(
            cloud.points().to_vec(),
            cloud.dim(),
            provenance,
        )?));
    }
    let law = surrogate_invariant(process, t_burn, sample_count, seed)?;
    if let TargetLaw::EmpiricalSurrogate(s) = &law {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        OccupationMeasure::from_points(
            s.points.clone(),
            s.dim,
            t_burn,
            OccupationProvenance {
                seed: Some(seed),
                burn_in: t_burn,
            },
        )?
        .write_binary(&file)?;
    }
    Ok(law)
}

/// `e(t) = exp(-2t/C)`, the variance decay under a Poincaré inequality with
/// constant `C`.
pub fn poincare_decay(c_poincare: f64, t: f64) -> Result<f64> {
    if !(c_poincare > 0.0) || !(t >= 0.0) {
        return Err(Error::invalid("need C > 0 and t >= 0"));
    }
    Ok((-2.0 * t / c_poincare).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::NoiseSpec;
    use crate::sde::{DiffusionSpec, DriftSpec};

    #[test]
    fn ou_variances() {
        assert_eq!(ou_invariant(1.0, 2f64.sqrt()).unwrap().marginal_moments().1[0], 1.0000000000000002);
        assert_eq!(ou_invariant(2.0, 2.0).unwrap().marginal_moments().1[0], 1.0);
    }

    #[test]
    fn fou_variances() {
        let half = fou_variance(3.0, 1.5, 0.5);
        assert!((half - 1.5 * 1.5 / 6.0).abs() < 1e-14);
        // 0.75 Γ(1.5) from a 30-digit evaluation
        assert!((fou_variance(1.0, 1.0, 0.75) - 0.664_670_194_089_568_5).abs() < 1e-12);
        assert!(fou_invariant(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn quantiles() {
        let g = TargetLaw::gaussian(0.0, 1.0).unwrap();
        assert_eq!(g.quantile(0.5).unwrap(), 0.0);
        assert!((g.quantile(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-9);
        assert!(g.quantile(1.0).is_err());
    }

    #[test]
    fn poincare_decay_values() {
        assert_eq!(poincare_decay(3.0, 0.0).unwrap(), 1.0);
        assert!((poincare_decay(1.0, 1.0).unwrap() - (-2.0f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn surrogate_minimum_burn_in() {
        let p = ProcessSpec::new(
            DriftSpec::linear(1.0).unwrap(),
            DiffusionSpec::scalar(1.0, 1).unwrap(),
            NoiseSpec::Brownian,
            0.05,
        )
        .unwrap();
        assert!(surrogate_invariant(&p, 1.0, 10, 0).is_err());
        let s = surrogate_invariant(&p, 4.0, 16, 0).unwrap();
        assert_eq!(s, surrogate_invariant(&p, 4.0, 16, 0).unwrap());
        assert!(s.sampling_floor() > 0.0);
    }
}

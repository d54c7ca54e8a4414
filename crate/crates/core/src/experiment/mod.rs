//! Config-driven experiments: simulate replications, measure the distance of
//! each prefix occupation measure `ν_{t_k}` to the target, fit the decay and
//! compare it with the theoretical exponent.

mod config;
mod report;

pub use config::{
    ExperimentConfig, ExperimentSection, Metric, OutputSection, ProcessSection, StartRule, TargetDirective, TargetSection,
    TheorySection, ValidatedConfig, MIN_REPLICATIONS,
};
pub use report::{emit_report, read_series_csv, read_summary_csv, render_svg, write_series_csv, ReportFormat, Summary};

use rayon::prelude::*;

use crate::dyadic::{fg_multiscale_sum, gaussian_histogram, histogramize, histogramize_points, DyadicHistogram, TailControl};
use crate::error::{Error, Result};
use crate::occupation::{build_occupation_window, moment, OccupationMeasure};
use crate::rates::{fit_rate, RateFit, RateResult};
use crate::sde::PathSample;
use crate::seed::{derive_seed, stream};
use crate::targets::TargetLaw;
use crate::wasserstein::{wasserstein_1d_pow, wasserstein_exact_small, wasserstein_pow_to_gaussian, MAX_ASSIGNMENT_SIZE};

/// One time point of the measured series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub t: f64,
    /// Mean over replications of `W_p^p` (or of the multiscale sum).
    pub mean: f64,
    pub se: f64,
    pub n: usize,
    /// Replication `r` used seed `derive_seed(base_seed, r)` for `r` in this range.
    pub replications: std::ops::Range<usize>,
    pub base_seed: u64,
    /// The raw mean fell below the sampling floor and was clamped to it.
    pub floored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub pass: bool,
    pub fitted_slope: f64,
    /// `-(theory exponent)` for the mean-power quantity.
    pub theory_slope: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<SeriesRow>,
    /// Per-replication metric values, `samples[r][k]`.
    pub samples: Vec<Vec<f64>>,
    pub fit: Option<RateFit>,
    pub theory: RateResult,
    pub p: f64,
    pub metric: Metric,
    /// Sampling floor of the target, in the units of `mean`.
    pub floor: f64,
    pub config_hash: String,
    pub slope_tolerance: f64,
}

impl ExperimentResult {
    pub fn verdict(&self) -> Verdict {
        compare_to_theory(self, &self.theory, self.slope_tolerance)
    }
}

/// One-sided check: pass iff the fitted slope is at most
/// `-(theory exponent) + slope_tolerance`. Faster decay than the bound passes.
pub fn compare_to_theory(result: &ExperimentResult, rate: &RateResult, slope_tolerance: f64) -> Verdict {
    let theory_slope = -rate.mean_power_exponent(result.p);
    match result.fit {
        Some(fit) => Verdict {
            pass: fit.slope <= theory_slope + slope_tolerance,
            fitted_slope: fit.slope,
            theory_slope,
            tolerance: slope_tolerance,
        },
        None => Verdict {
            pass: false,
            fitted_slope: f64::NAN,
            theory_slope,
            tolerance: slope_tolerance,
        },
    }
}

/// Everything a replication needs to evaluate the metric.
enum Reference {
    Gaussian1d { mean: f64, sd: f64 },
    Sorted1d(Vec<f64>),
    Histogram { hist: DyadicHistogram, moment_q: f64 },
    Sampler(TargetLaw),
    SelfDistance,
}

/// Moment order used for the ring-tail bound of the multiscale sum.
fn tail_order(p: f64) -> f64 {
    p + 2.0
}

fn reference(cfg: &ExperimentConfig, v: &ValidatedConfig, law: Option<&TargetLaw>) -> Result<Reference> {
    let Some(law) = law else {
        return Ok(Reference::SelfDistance);
    };
    let q = tail_order(cfg.experiment.p);
    Ok(match v.metric {
        Metric::Exact1d => match law {
            TargetLaw::Gaussian1D { mean, variance } => Reference::Gaussian1d {
                mean: *mean,
                sd: variance.sqrt(),
            },
            TargetLaw::GaussianDiag { mean, variances } => Reference::Gaussian1d {
                mean: mean[0],
                sd: variances[0].sqrt(),
            },
            TargetLaw::EmpiricalSurrogate(s) => {
                let mut v = s.points().to_vec();
                v.sort_by(f64::total_cmp);
                Reference::Sorted1d(v)
            }
        },
        Metric::FgSum => match law {
            TargetLaw::EmpiricalSurrogate(s) => Reference::Histogram {
                hist: histogramize_points(s.points(), s.dim(), cfg.max_ring(), cfg.depth())?,
                moment_q: moment(s.points(), s.dim(), q),
            },
            _ => {
                let (m, var) = law.marginal_moments();
                Reference::Histogram {
                    hist: gaussian_histogram(&m, &var, cfg.max_ring(), cfg.depth())?,
                    moment_q: gaussian_norm_moment(law, q),
                }
            }
        },
        Metric::ExactSmall => Reference::Sampler(law.clone()),
    })
}

/// Monte Carlo-free bound on `E|X|^q` for a diagonal Gaussian via the sum of
/// coordinate moments times `d^{q/2 - 1}` (power mean inequality, q >= 2).
fn gaussian_norm_moment(law: &TargetLaw, q: f64) -> f64 {
    let (m, var) = law.marginal_moments();
    let d = m.len() as f64;
    // E|Z|^q for a standard normal: 2^{q/2} Γ((q+1)/2) / √π
    let abs_moment = 2f64.powf(q / 2.0) * crate::special::gamma((q + 1.0) / 2.0) / std::f64::consts::PI.sqrt();
    let coord: f64 = m.iter().zip(&var).map(|(mu, v)| 2f64.powf(q - 1.0) * (mu.abs().powf(q) + v.powf(q / 2.0) * abs_moment)).sum();
    d.powf((q / 2.0 - 1.0).max(0.0)) * coord
}

fn evaluate(metric: Metric, reference: &Reference, nu_t: &OccupationMeasure, p: f64, cfg: &ExperimentConfig, rep_seed: u64, k: usize) -> Result<f64> {
    match (metric, reference) {
        (_, Reference::SelfDistance) => match metric {
            Metric::Exact1d => {
                let s = nu_t.sorted_1d()?;
                wasserstein_1d_pow(&s, &s, p)
            }
            Metric::FgSum => {
                let h = histogramize(nu_t, cfg.max_ring(), cfg.depth())?;
                Ok(fg_multiscale_sum(&h, &h, p, None)?.value)
            }
            Metric::ExactSmall => {
                let pts = stride_points(nu_t);
                wasserstein_exact_small(&pts, &pts, nu_t.dim(), p)
            }
        },
        (Metric::Exact1d, Reference::Gaussian1d { mean, sd }) => wasserstein_pow_to_gaussian(&nu_t.sorted_1d()?, *mean, *sd, p),
        (Metric::Exact1d, Reference::Sorted1d(target)) => wasserstein_1d_pow(&nu_t.sorted_1d()?, target, p),
        (Metric::FgSum, Reference::Histogram { hist, moment_q }) => {
            let h = histogramize(nu_t, cfg.max_ring(), cfg.depth())?;
            let q = tail_order(p);
            let tail = TailControl {
                q,
                moment_first: nu_t.moment(q),
                moment_second: *moment_q,
            };
            Ok(fg_multiscale_sum(&h, hist, p, Some(tail))?.value)
        }
        (Metric::ExactSmall, Reference::Sampler(law)) => {
            let pts = stride_points(nu_t);
            let m = pts.len() / nu_t.dim();
            let draw = law.sample(m, derive_seed(derive_seed(rep_seed, stream::TARGET_SAMPLE), k as u64));
            wasserstein_exact_small(&pts, &draw, nu_t.dim(), p)
        }
        _ => Err(Error::invalid("metric and target reference do not match")),
    }
}

/// At most [`MAX_ASSIGNMENT_SIZE`] evenly strided points of the measure.
fn stride_points(nu: &OccupationMeasure) -> Vec<f64> {
    let n = nu.count();
    let m = n.min(MAX_ASSIGNMENT_SIZE);
    (0..m).flat_map(|i| nu.point(i * n / m).to_vec()).collect()
}

/// Path of replication `r` over `burn_in + t_max`, seeded with
/// `derive_seed(base_seed, r)`. A stationary start draws `X_0` from the target.
pub fn simulate_replication(cfg: &ExperimentConfig, v: &ValidatedConfig, law: Option<&TargetLaw>, r: usize) -> Result<PathSample> {
    let dt = v.process.dt;
    let rep_seed = derive_seed(cfg.experiment.seed, r as u64);
    let x0 = match (v.start, law) {
        (StartRule::Stationary, Some(law)) => law.sample(1, derive_seed(rep_seed, stream::INITIAL_STATE)),
        _ => vec![0.0; v.process.dim()],
    };
    let burn_steps = (cfg.experiment.burn_in / dt).round() as usize;
    let total = burn_steps + (v.times.last().expect("non-empty grid") / dt).round() as usize;
    v.process.simulate(&x0, total, rep_seed)
}

/// Runs every replication and aggregates the series.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let v = cfg.validate()?;
    let law = v.target.resolve(&v.process)?;
    run_with_target(cfg, &v, law.as_ref())
}

/// [`run_experiment`] against an already resolved target law.
pub fn run_with_target(cfg: &ExperimentConfig, v: &ValidatedConfig, law: Option<&TargetLaw>) -> Result<ExperimentResult> {
    let e = &cfg.experiment;
    let p = e.p;
    let dt = v.process.dt;
    let reference = reference(cfg, v, law)?;
    let burn_steps = (e.burn_in / dt).round() as usize;
    let ends: Vec<usize> = v.times.iter().map(|t| burn_steps + (t / dt).round() as usize).collect();
    let burn_in = burn_steps as f64 * dt;

    let samples: Vec<Vec<f64>> = (0..e.replications)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(e.seed, r as u64);
            let wrap = |err: Error| Error::Replication {
                seed: rep_seed,
                source: Box::new(err),
            };
            let path = simulate_replication(cfg, v, law, r).map_err(wrap)?;
            ends.iter()
                .enumerate()
                .map(|(k, &end)| {
                    let nu = build_occupation_window(&path, burn_in, end, e.thinning)?;
                    evaluate(v.metric, &reference, &nu, p, cfg, rep_seed, k)
                })
                .collect::<Result<Vec<f64>>>()
                .map_err(wrap)
        })
        .collect::<Result<_>>()?;

    let floor = law.map_or(0.0, |l| l.sampling_floor().powf(p));
    let n = e.replications;
    let rows: Vec<SeriesRow> = v
        .times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let vals: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let floored = mean < floor;
            SeriesRow {
                t,
                mean: mean.max(floor),
                se: (var / n as f64).sqrt(),
                n,
                replications: 0..n,
                base_seed: e.seed,
                floored,
            }
        })
        .collect();
    let series: Vec<(f64, f64)> = rows.iter().filter(|r| !r.floored && r.mean > 0.0).map(|r| (r.t, r.mean)).collect();
    let fit = if series.len() >= 3 { Some(fit_rate(&series, 0..series.len())?) } else { None };
    Ok(ExperimentResult {
        rows,
        samples,
        fit,
        theory: v.theory.clone(),
        p,
        metric: v.metric,
        floor,
        config_hash: cfg.content_hash(),
        slope_tolerance: e.slope_tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::config::tests::OU1D;
    use super::*;
    use crate::rates::RateQuantity;

    fn result_with_slope(slope: f64) -> ExperimentResult {
        ExperimentResult {
            rows: vec![],
            samples: vec![],
            fit: Some(RateFit {
                slope,
                intercept: 0.0,
                residual: 0.0,
                slope_se: 0.0,
                points: 3,
            }),
            theory: rate(0.5),
            p: 1.0,
            metric: Metric::Exact1d,
            floor: 0.0,
            config_hash: String::new(),
            slope_tolerance: 0.1,
        }
    }

    fn rate(e: f64) -> RateResult {
        RateResult {
            exponent: e,
            log_factor: false,
            regime: "test".into(),
            boundary: false,
            strict: false,
            quantity: RateQuantity::MeanPower,
        }
    }

    #[test]
    fn one_sided_verdicts() {
        assert!(compare_to_theory(&result_with_slope(-0.52), &rate(0.5), 0.1).pass);
        assert!(!compare_to_theory(&result_with_slope(-0.30), &rate(0.5), 0.1).pass);
        assert!(compare_to_theory(&result_with_slope(-0.55), &rate(0.3), 0.1).pass);
    }

    #[test]
    fn deterministic_and_prefix_stable_replications() {
        let c8 = ExperimentConfig::from_toml_str(OU1D).unwrap();
        let c16 = ExperimentConfig::from_toml_str(&OU1D.replace("replications = 8", "replications = 16")).unwrap();
        let a = run_experiment(&c8).unwrap();
        let b = run_experiment(&c16).unwrap();
        assert_eq!(a.samples[..], b.samples[..8]);
        assert_eq!(a, run_experiment(&c8).unwrap());
    }

    #[test]
    fn self_distance_is_zero() {
        for metric in ["exact-1d", "fg-sum", "exact-small"] {
            let text = OU1D
                .replace("kind = \"ou\"", "kind = \"self\"\nstart = \"origin\"")
                .replace("exact-1d", metric);
            let r = run_experiment(&ExperimentConfig::from_toml_str(&text).unwrap()).unwrap();
            assert!(r.rows.iter().all(|row| row.mean == 0.0), "{metric}");
            assert!(r.fit.is_none());
            assert!(!r.verdict().pass);
        }
    }

    #[test]
    fn all_metrics_run() {
        for metric in ["fg-sum", "exact-small"] {
            let r = run_experiment(&ExperimentConfig::from_toml_str(&OU1D.replace("exact-1d", metric)).unwrap()).unwrap();
            assert!(r.rows.iter().all(|row| row.mean > 0.0 && row.mean.is_finite()), "{metric}");
        }
    }
}

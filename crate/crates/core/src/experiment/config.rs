//! Experiment configuration: a sectioned, flat TOML file.
//!
//! ```toml
//! [process]
//! drift = "linear"        # linear | double_well | weak_mean_reverting
//! rate = 1.0
//! sigma = 1.4142135623730951
//! dim = 1
//! noise = "bm"            # bm | fbm | moving_average
//! dt = 0.00390625
//!
//! [target]
//! kind = "ou"             # ou | fou | gaussian | surrogate | self
//! start = "stationary"    # stationary | origin
//!
//! [experiment]
//! p = 1.0
//! t_min = 16.0
//! t_max = 4096.0
//! replications = 64
//! seed = 1
//! metric = "exact-1d"     # exact-1d | fg-sum | exact-small
//!
//! [theory]
//! kind = "auto"           # auto | limit | fractional | fixed
//!
//! [output]
//! dir = "out/ou1d"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dyadic::{default_depth, DEFAULT_MAX_RING};
use crate::error::{Error, Result};
use crate::process::{hex_digest, NoiseSpec, ProcessSpec};
use crate::rates::{fractional_rate, limit_rate_wp, FractionalSetting, RateResult};
use crate::sde::{DiffusionSpec, DriftSpec};
use crate::targets::{cached_surrogate, fou_invariant, ou_invariant, surrogate_invariant, TargetLaw, DEFAULT_SURROGATE_SAMPLES};

/// Smallest accepted replication count.
pub const MIN_REPLICATIONS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub process: ProcessSection,
    pub target: TargetSection,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub theory: TheorySection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSection {
    pub drift: String,
    pub rate: Option<f64>,
    pub nonconvexity: Option<f64>,
    pub curvature: Option<f64>,
    pub well_radius: Option<f64>,
    pub exponent: Option<f64>,
    pub strength: Option<f64>,
    pub inner_radius: Option<f64>,
    pub sigma: f64,
    pub dim: usize,
    #[serde(default = "default_noise")]
    pub noise: String,
    pub hurst: Option<f64>,
    pub zeta: Option<f64>,
    pub t0: Option<f64>,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub kind: String,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    /// Surrogate burn-in (time units).
    pub burn_in: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    /// Directory for cached surrogate clouds.
    pub cache: Option<String>,
    #[serde(default = "default_start")]
    pub start: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub p: f64,
    pub t_min: f64,
    pub t_max: f64,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    pub replications: usize,
    #[serde(default)]
    pub burn_in: f64,
    pub seed: u64,
    pub metric: String,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    #[serde(default = "default_tolerance")]
    pub slope_tolerance: f64,
    pub max_ring: Option<u32>,
    pub depth: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySection {
    #[serde(default = "default_theory")]
    pub kind: String,
    pub exponent: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl Default for TheorySection {
    fn default() -> Self {
        TheorySection {
            kind: default_theory(),
            exponent: None,
            epsilon: default_epsilon(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: String,
    pub name: Option<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_out(),
            name: None,
        }
    }
}

fn default_noise() -> String {
    "bm".into()
}
fn default_start() -> String {
    "stationary".into()
}
fn default_ratio() -> f64 {
    2.0
}
fn default_thinning() -> usize {
    1
}
fn default_tolerance() -> f64 {
    0.1
}
fn default_theory() -> String {
    "auto".into()
}
fn default_epsilon() -> f64 {
    0.01
}
fn default_out() -> String {
    "out".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Exact 1D `W_p^p` (quantile coupling, or closed form against a Gaussian).
    Exact1d,
    /// The truncated dyadic multiscale sum.
    FgSum,
    /// Exact assignment between at most 64 evenly strided occupation points
    /// and as many target draws.
    ExactSmall,
}

impl Metric {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exact-1d" => Ok(Metric::Exact1d),
            "fg-sum" => Ok(Metric::FgSum),
            "exact-small" => Ok(Metric::ExactSmall),
            other => Err(Error::Config(format!("unknown metric {other:?}"))),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Metric::Exact1d => "exact-1d",
            Metric::FgSum => "fg-sum",
            Metric::ExactSmall => "exact-small",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartRule {
    Stationary,
    Origin,
}

/// How the target law is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetDirective {
    Closed(TargetLaw),
    Surrogate {
        burn_in: f64,
        samples: usize,
        seed: u64,
        cache: Option<PathBuf>,
    },
    /// Distance of `ν_t` to itself; a harness sanity check.
    SelfDistance,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Canonical TOML re-serialization.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 over the canonical TOML.
    pub fn content_hash(&self) -> String {
        hex_digest(self.to_toml_string().as_bytes())
    }

    /// Output file stem: `<name>-<first 12 hex digits of the hash>`.
    pub fn file_stem(&self) -> String {
        let name = self.output.name.clone().unwrap_or_else(|| "experiment".into());
        format!("{name}-{}", &self.content_hash()[..12])
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(&self.output.dir)
    }

    pub fn process_spec(&self) -> Result<ProcessSpec> {
        let s = &self.process;
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Error::Config(format!("process.{name} is required for drift {:?}", s.drift)));
        let drift = match s.drift.as_str() {
            "linear" => DriftSpec::linear(s.rate.unwrap_or(1.0)),
            "double_well" => DriftSpec::double_well(need(s.nonconvexity, "nonconvexity")?, need(s.curvature, "curvature")?, need(s.well_radius, "well_radius")?),
            "weak_mean_reverting" => DriftSpec::weak_mean_reverting(need(s.exponent, "exponent")?, need(s.strength, "strength")?, s.inner_radius.unwrap_or(1.0)),
            other => return Err(Error::Config(format!("unknown drift {other:?}"))),
        }
        .map_err(as_config)?;
        let diffusion = DiffusionSpec::scalar(s.sigma, s.dim).map_err(as_config)?;
        let need_noise = |v: Option<f64>, name: &str| v.ok_or_else(|| Error::Config(format!("process.{name} is required for noise {:?}", s.noise)));
        let noise = match s.noise.as_str() {
            "bm" => NoiseSpec::Brownian,
            "fbm" => NoiseSpec::Fbm {
                hurst: need_noise(s.hurst, "hurst")?,
            },
            "moving_average" => NoiseSpec::MovingAverage {
                hurst: need_noise(s.hurst, "hurst")?,
                zeta: need_noise(s.zeta, "zeta")?,
                t0: s.t0.unwrap_or(1.0),
            },
            other => return Err(Error::Config(format!("unknown noise {other:?}"))),
        };
        ProcessSpec::new(drift, diffusion, noise, s.dt).map_err(as_config)
    }

    pub fn metric(&self) -> Result<Metric> {
        Metric::parse(&self.experiment.metric)
    }

    pub fn start_rule(&self) -> Result<StartRule> {
        match self.target.start.as_str() {
            "stationary" => Ok(StartRule::Stationary),
            "origin" => Ok(StartRule::Origin),
            other => Err(Error::Config(format!("unknown start rule {other:?}"))),
        }
    }

    /// Geometric grid `t_min · ratio^k <= t_max`.
    pub fn time_grid(&self) -> Result<Vec<f64>> {
        let e = &self.experiment;
        if !(e.t_min > 0.0 && e.t_min.is_finite()) || !(e.t_max >= e.t_min && e.t_max.is_finite()) {
            return Err(Error::Config(format!("need 0 < t_min <= t_max, got {} and {}", e.t_min, e.t_max)));
        }
        if !(e.ratio > 1.0) {
            return Err(Error::Config(format!("time-grid ratio must exceed 1, got {}", e.ratio)));
        }
        let mut grid = Vec::new();
        let mut t = e.t_min;
        while t <= e.t_max * (1.0 + 1e-12) {
            grid.push(t);
            t *= e.ratio;
        }
        Ok(grid)
    }

    pub fn max_ring(&self) -> u32 {
        self.experiment.max_ring.unwrap_or(DEFAULT_MAX_RING)
    }

    pub fn depth(&self) -> u32 {
        self.experiment.depth.unwrap_or_else(|| default_depth(self.process.dim))
    }

    pub fn target_directive(&self) -> Result<TargetDirective> {
        let t = &self.target;
        let s = &self.process;
        let d = s.dim;
        let closed = |law: Result<TargetLaw>| law.map(TargetDirective::Closed).map_err(as_config);
        match t.kind.as_str() {
            "ou" => {
                if s.drift != "linear" || s.noise != "bm" {
                    return Err(Error::Config("target ou needs a linear drift with Brownian noise".into()));
                }
                let law = ou_invariant(s.rate.unwrap_or(1.0), s.sigma).map_err(as_config)?;
                closed(widen(law, d))
            }
            "fou" => {
                if s.drift != "linear" || s.noise != "fbm" {
                    return Err(Error::Config("target fou needs a linear drift with fbm noise".into()));
                }
                let hurst = s.hurst.ok_or_else(|| Error::Config("process.hurst is required".into()))?;
                let law = fou_invariant(s.rate.unwrap_or(1.0), s.sigma, hurst).map_err(as_config)?;
                closed(widen(law, d))
            }
            "gaussian" => {
                let law = TargetLaw::gaussian(t.mean.unwrap_or(0.0), t.variance.unwrap_or(1.0)).map_err(as_config)?;
                closed(widen(law, d))
            }
            "surrogate" => Ok(TargetDirective::Surrogate {
                burn_in: t.burn_in.unwrap_or(16.0),
                samples: t.samples.unwrap_or(DEFAULT_SURROGATE_SAMPLES),
                seed: t.seed.unwrap_or(self.experiment.seed ^ 0x5eed_0000),
                cache: t.cache.as_ref().map(PathBuf::from),
            }),
            "self" => Ok(TargetDirective::SelfDistance),
            other => Err(Error::Config(format!("unknown target kind {other:?}"))),
        }
    }

    /// Theoretical exponent for the configured setting.
    pub fn theory(&self) -> Result<RateResult> {
        let th = &self.theory;
        let p = self.experiment.p;
        let d = self.process.dim;
        let process = self.process_spec()?;
        let fractional = |setting| fractional_rate(setting, p, d, th.epsilon).map_err(as_config);
        match th.kind.as_str() {
            "fixed" => {
                let e = th.exponent.ok_or_else(|| Error::Config("theory.exponent is required for kind fixed".into()))?;
                Ok(RateResult {
                    exponent: e,
                    log_factor: false,
                    regime: "fixed".into(),
                    boundary: false,
                    strict: false,
                    quantity: crate::rates::RateQuantity::MeanPower,
                })
            }
            // Stationary Markov case with all moments: β = γ = 1/2.
            "limit" => limit_rate_wp(p, d, 0.5, 0.5).map_err(as_config),
            "fractional" | "auto" => match process.noise {
                NoiseSpec::Brownian if th.kind == "auto" => limit_rate_wp(p, d, 0.5, 0.5).map_err(as_config),
                NoiseSpec::Brownian => Err(Error::Config("theory kind fractional needs fractional noise".into())),
                NoiseSpec::Fbm { hurst } if s_is_linear(&process) && d == 1 => fractional(FractionalSetting::FractionalOu { hurst }),
                NoiseSpec::Fbm { hurst } => fractional(FractionalSetting::Fbm { hurst }),
                NoiseSpec::MovingAverage { zeta, .. } => fractional(FractionalSetting::GeneralKernel { zeta }),
            },
            other => Err(Error::Config(format!("unknown theory kind {other:?}"))),
        }
    }

    /// Checks every cross-field constraint and returns the validated plan.
    pub fn validate(&self) -> Result<ValidatedConfig> {
        let process = self.process_spec()?;
        let metric = self.metric()?;
        let e = &self.experiment;
        if !(e.p > 0.0 && e.p.is_finite()) {
            return Err(Error::Config(format!("p must be positive, got {}", e.p)));
        }
        if e.replications < MIN_REPLICATIONS {
            return Err(Error::Config(format!(
                "replications must be at least {MIN_REPLICATIONS}, got {}",
                e.replications
            )));
        }
        if metric == Metric::Exact1d && self.process.dim != 1 {
            return Err(Error::Config("metric exact-1d requires dim = 1".into()));
        }
        if e.thinning == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if !(e.burn_in >= 0.0) {
            return Err(Error::Config("burn_in must be non-negative".into()));
        }
        if !(e.slope_tolerance >= 0.0) {
            return Err(Error::Config("slope_tolerance must be non-negative".into()));
        }
        let times = self.time_grid()?;
        let steps: Vec<usize> = times.iter().map(|t| (t / process.dt).round() as usize).collect();
        if steps.windows(2).any(|w| w[1] <= w[0]) || steps[0] < 2 {
            return Err(Error::Config("time grid is not strictly increasing on the step grid".into()));
        }
        let target = self.target_directive()?;
        let start = self.start_rule()?;
        if start == StartRule::Stationary && matches!(target, TargetDirective::SelfDistance) {
            return Err(Error::Config("a stationary start needs a target law".into()));
        }
        if let TargetDirective::Closed(law) = &target {
            if law.dim() != self.process.dim {
                return Err(Error::Config("target dimension differs from the process dimension".into()));
            }
        }
        let theory = self.theory()?;
        Ok(ValidatedConfig {
            process,
            metric,
            times,
            target,
            start,
            theory,
        })
    }
}

fn s_is_linear(p: &ProcessSpec) -> bool {
    matches!(p.drift, DriftSpec::Linear { .. })
}

fn widen(law: TargetLaw, d: usize) -> Result<TargetLaw> {
    match law {
        TargetLaw::Gaussian1D { mean, variance } if d > 1 => TargetLaw::gaussian_diag(vec![mean; d], vec![variance; d]),
        other => Ok(other),
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    }
}

/// A config after validation.
#[derive(Debug, Clone)]
pub struct ValidatedConfig {
    pub process: ProcessSpec,
    pub metric: Metric,
    pub times: Vec<f64>,
    pub target: TargetDirective,
    pub start: StartRule,
    pub theory: RateResult,
}

impl TargetDirective {
    /// Resolves the directive to a law (`None` for the self-distance check).
    pub fn resolve(&self, process: &ProcessSpec) -> Result<Option<TargetLaw>> {
        match self {
            TargetDirective::Closed(law) => Ok(Some(law.clone())),
            TargetDirective::Surrogate {
                burn_in,
                samples,
                seed,
                cache,
            } => match cache {
                Some(dir) => cached_surrogate(dir, process, *burn_in, *samples, *seed).map(Some),
                None => surrogate_invariant(process, *burn_in, *samples, *seed).map(Some),
            },
            TargetDirective::SelfDistance => Ok(None),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const OU1D: &str = r#"
[process]
drift = "linear"
rate = 1.0
sigma = 1.4142135623730951
dim = 1
dt = 0.0625

[target]
kind = "ou"

[experiment]
p = 1.0
t_min = 4.0
t_max = 64.0
replications = 8
seed = 3
metric = "exact-1d"
"#;

    #[test]
    fn parses_and_validates() {
        let c = ExperimentConfig::from_toml_str(OU1D).unwrap();
        let v = c.validate().unwrap();
        assert_eq!(v.times, vec![4.0, 8.0, 16.0, 32.0, 64.0]);
        assert_eq!(v.metric, Metric::Exact1d);
        assert!((v.theory.exponent - 0.5).abs() < 1e-15);
        assert_eq!(v.start, StartRule::Stationary);
    }

    #[test]
    fn hash_round_trips_through_canonical_form() {
        let c = ExperimentConfig::from_toml_str(OU1D).unwrap();
        let again = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.content_hash(), again.content_hash());
        assert!(c.file_stem().starts_with("experiment-"));
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            OU1D.replace("replications = 8", "replications = 4"),
            OU1D.replace("dim = 1", "dim = 2"),
            OU1D.replace("t_max = 64.0", "t_max = 2.0"),
            OU1D.replace("exact-1d", "exact-2d"),
            OU1D.replace("kind = \"ou\"", "kind = \"fou\""),
            OU1D.replace("rate = 1.0", "rate = 1.0\nbogus = 2"),
        ];
        for text in bad {
            let r = ExperimentConfig::from_toml_str(&text).and_then(|c| c.validate());
            assert!(matches!(r, Err(Error::Config(_))), "{text}: {r:?}");
        }
    }

    #[test]
    fn fractional_theory() {
        let text = OU1D
            .replace("dt = 0.0625", "dt = 0.0625\nnoise = \"fbm\"\nhurst = 0.75")
            .replace("kind = \"ou\"", "kind = \"fou\"");
        let c = ExperimentConfig::from_toml_str(&text).unwrap();
        let th = c.validate().unwrap().theory;
        assert!((th.mean_power_exponent(1.0) - 0.25).abs() < 1e-15);
    }
}

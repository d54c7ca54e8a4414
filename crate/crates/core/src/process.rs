//! `ProcessSpec`: one ergodic dynamic (drift, diffusion, driving noise, step).

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::noise::{sample_moving_average, CirculantFbm, FbmSpec, KernelSpec};
use crate::sde::{euler_maruyama, integrate_additive, DiffusionSpec, DriftSpec, NoiseSource, PathSample};
use crate::seed::{derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    Brownian,
    Fbm { hurst: f64 },
    MovingAverage { hurst: f64, zeta: f64, t0: f64 },
}

impl NoiseSpec {
    pub fn tag(&self) -> String {
        match self {
            NoiseSpec::Brownian => "bm".into(),
            NoiseSpec::Fbm { hurst } => format!("fbm(h={hurst})"),
            NoiseSpec::MovingAverage { hurst, zeta, t0 } => format!("moving_average(h={hurst},zeta={zeta},t0={t0})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProcessSpec {
    pub drift: DriftSpec,
    pub diffusion: DiffusionSpec,
    pub noise: NoiseSpec,
    pub dt: f64,
}

impl ProcessSpec {
    pub fn new(drift: DriftSpec, diffusion: DiffusionSpec, noise: NoiseSpec, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("time step must be positive, got {dt}")));
        }
        if noise != NoiseSpec::Brownian && !matches!(diffusion, DiffusionSpec::ConstantMatrix { .. }) {
            return Err(Error::invalid("fractional noise requires a constant diffusion matrix"));
        }
        Ok(ProcessSpec {
            drift,
            diffusion,
            noise,
            dt,
        })
    }

    pub fn dim(&self) -> usize {
        self.diffusion.dim()
    }

    /// Canonical description used for hashing and reports.
    pub fn describe(&self) -> String {
        format!(
            "drift={};diffusion={};noise={};dt={:e}",
            self.drift.tag(),
            self.diffusion.tag(),
            self.noise.tag(),
            self.dt
        )
    }

    /// Hex SHA-256 of [`Self::describe`].
    pub fn content_hash(&self) -> String {
        hex_digest(self.describe().as_bytes())
    }

    /// Simulates `steps` Euler steps from `x0`. The driving noise is drawn
    /// from the `DRIVING_NOISE` child of `seed`.
    pub fn simulate(&self, x0: &[f64], steps: usize, seed: u64) -> Result<PathSample> {
        let noise_seed = derive_seed(seed, stream::DRIVING_NOISE);
        let dim = self.diffusion.cols();
        match self.noise {
            NoiseSpec::Brownian => euler_maruyama(&self.drift, &self.diffusion, x0, self.dt, steps, NoiseSource::Seed(noise_seed)),
            NoiseSpec::Fbm { hurst } => {
                let spec = FbmSpec::new(hurst, steps as f64 * self.dt, steps.max(2))?;
                let path = CirculantFbm::new(spec)?.sample(dim, noise_seed)?;
                if steps < 2 {
                    return Err(Error::invalid("fbm-driven paths need at least two steps"));
                }
                integrate_additive(&self.drift, &self.diffusion, x0, &path)
            }
            NoiseSpec::MovingAverage { hurst, zeta, t0 } => {
                let horizon = steps as f64 * self.dt;
                let kernel = KernelSpec::new(hurst, zeta, t0)?.with_default_truncation(horizon)?;
                let path = sample_moving_average(&kernel, steps, self.dt, dim, noise_seed)?;
                integrate_additive(&self.drift, &self.diffusion, x0, &path)
            }
        }
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

//! Empirical convergence rates of occupation measures of ergodic SDEs to
//! their invariant laws in Wasserstein distance.
//!
//! The pipeline is: simulate a path ([`sde`], [`noise`]), take its occupation
//! measure ([`occupation`]), compare it to a target law ([`targets`]) with one
//! of the metrics in [`wasserstein`] or [`dyadic`], and check the observed
//! decay against the theoretical exponents in [`rates`]. [`experiment`] wires
//! these together behind a TOML config.

// `!(x > 0.0)` is used on purpose throughout: it rejects NaN together with
// the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covariance;
pub mod dyadic;
pub mod error;
pub mod experiment;
pub(crate) mod fft;
pub mod noise;
pub mod occupation;
pub mod process;
pub mod rates;
pub mod sde;
pub mod seed;
pub mod special;
pub mod targets;
pub mod wasserstein;

pub use error::{Error, Result};
pub use noise::{NoiseKind, NoisePath};
pub use occupation::OccupationMeasure;
pub use process::{NoiseSpec, ProcessSpec};
pub use rates::{RateQuantity, RateResult};
pub use sde::{DiffusionSpec, DriftSpec, PathSample};
pub use targets::TargetLaw;

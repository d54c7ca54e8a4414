//! Explicit Euler schemes for `dX = b(X) dt + σ(X) dW` and for the additive
//! Gaussian-driven equation `dX = b(X) dt + σ dG`, together with a catalog of
//! drifts and an empirical checker for the contraction and Hajek conditions.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::noise::{sample_brownian, NoiseKind, NoisePath};
use crate::seed::rng_from_seed;

/// `out = f(x)`; `out` has the same length as `x`.
pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// `out = σ(x)` as a row-major `d × cols` matrix.
pub type MatrixField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Explosion threshold factor: the integrator aborts once `|X| > 1e6 (1 + |x0|)`.
pub const EXPLOSION_FACTOR: f64 = 1e6;

#[derive(Clone)]
pub enum DriftSpec {
    /// `b(x) = -rate x`.
    Linear { rate: f64 },
    /// `b = -∇U` with `U(x) = κ|x|²/2 + (κ+λ) s² exp(-|x|²/(2s²))`. The origin is
    /// a local maximum of `U` when `λ > 0`, the minima sit on the sphere of
    /// radius `R`, and the drift Jacobian is bounded above by `λ`.
    GradientDoubleWell {
        nonconvexity: f64,
        curvature: f64,
        well_radius: f64,
    },
    /// `b(x) = -α x |x|^{2a-2}` for `|x| >= M`, blended inside `B(0, M)` by a
    /// C² cubic radial profile vanishing at the origin.
    WeakMeanReverting {
        exponent: f64,
        strength: f64,
        inner_radius: f64,
    },
    Custom {
        label: String,
        field: VectorField,
        lipschitz: f64,
    },
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl DriftSpec {
    pub fn linear(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::invalid(format!("linear drift rate must be positive, got {rate}")));
        }
        Ok(DriftSpec::Linear { rate })
    }

    pub fn double_well(nonconvexity: f64, curvature: f64, well_radius: f64) -> Result<Self> {
        if !(nonconvexity >= 0.0 && nonconvexity.is_finite()) {
            return Err(Error::invalid("double-well nonconvexity must be >= 0"));
        }
        if !(curvature > 0.0 && curvature.is_finite()) {
            return Err(Error::invalid("double-well outer curvature must be > 0"));
        }
        if !(well_radius >= 0.0 && well_radius.is_finite()) {
            return Err(Error::invalid("double-well radius must be >= 0"));
        }
        Ok(DriftSpec::GradientDoubleWell {
            nonconvexity,
            curvature,
            well_radius,
        })
    }

    pub fn weak_mean_reverting(exponent: f64, strength: f64, inner_radius: f64) -> Result<Self> {
        if !(exponent > 0.0 && exponent <= 1.0) {
            return Err(Error::invalid(format!("weak mean-reversion exponent must lie in (0,1], got {exponent}")));
        }
        if !(strength > 0.0 && strength.is_finite()) {
            return Err(Error::invalid("weak mean-reversion strength must be > 0"));
        }
        if !(inner_radius >= 0.0 && inner_radius.is_finite()) {
            return Err(Error::invalid("inner radius must be >= 0"));
        }
        if exponent < 1.0 && inner_radius == 0.0 {
            return Err(Error::invalid(
                "exponent < 1 needs a positive inner radius: the drift is not Lipschitz at the origin",
            ));
        }
        Ok(DriftSpec::WeakMeanReverting {
            exponent,
            strength,
            inner_radius,
        })
    }

    pub fn custom(label: impl Into<String>, field: VectorField, lipschitz: f64) -> Result<Self> {
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(Error::invalid("declared Lipschitz constant must be finite and >= 0"));
        }
        Ok(DriftSpec::Custom {
            label: label.into(),
            field,
            lipschitz,
        })
    }

    pub fn tag(&self) -> String {
        match self {
            DriftSpec::Linear { rate } => format!("linear(rate={rate})"),
            DriftSpec::GradientDoubleWell {
                nonconvexity,
                curvature,
                well_radius,
            } => format!("double_well(nonconvexity={nonconvexity},curvature={curvature},radius={well_radius})"),
            DriftSpec::WeakMeanReverting {
                exponent,
                strength,
                inner_radius,
            } => format!("weak_mean_reverting(a={exponent},alpha={strength},m={inner_radius})"),
            DriftSpec::Custom { label, lipschitz, .. } => format!("custom({label},lip={lipschitz})"),
        }
    }

    /// Declared or analytic Lipschitz constant, if one is known.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            DriftSpec::Linear { rate } => Some(*rate),
            DriftSpec::Custom { lipschitz, .. } => Some(*lipschitz),
            _ => None,
        }
    }

    /// `out = b(x)`.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            DriftSpec::Linear { rate } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -rate * xi;
                }
            }
            DriftSpec::GradientDoubleWell {
                nonconvexity,
                curvature,
                well_radius,
            } => {
                let k = *curvature;
                let factor = if *nonconvexity > 0.0 && *well_radius > 0.0 {
                    let s2 = well_radius * well_radius / (2.0 * (1.0 + nonconvexity / k).ln());
                    let r2: f64 = x.iter().map(|v| v * v).sum();
                    -k + (k + nonconvexity) * (-r2 / (2.0 * s2)).exp()
                } else {
                    -k
                };
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = factor * xi;
                }
            }
            DriftSpec::WeakMeanReverting {
                exponent,
                strength,
                inner_radius,
            } => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                // b(x) = -x * m(r) / r
                let per_r = if r >= *inner_radius {
                    if r == 0.0 {
                        0.0
                    } else {
                        strength * r.powf(2.0 * exponent - 2.0)
                    }
                } else {
                    let (c1, c2, c3) = weak_blend(*exponent, *strength, *inner_radius);
                    c1 + c2 * r + c3 * r * r
                };
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -per_r * xi;
                }
            }
            DriftSpec::Custom { field, .. } => field(x, out),
        }
    }

    pub fn eval_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.eval(x, &mut out);
        out
    }
}

/// Coefficients of `m(r) = c1 r + c2 r² + c3 r³` matching `α r^{2a-1}` to
/// second order at `r = M`.
fn weak_blend(a: f64, alpha: f64, m: f64) -> (f64, f64, f64) {
    let e = 2.0 * a - 1.0;
    let v0 = alpha * m.powf(e);
    let v1 = alpha * e * m.powf(e - 1.0);
    let v2 = alpha * e * (e - 1.0) * m.powf(e - 2.0);
    // Unknowns c1, c2, c3 with
    //   c1 M + c2 M² + c3 M³ = v0
    //   c1 + 2 c2 M + 3 c3 M² = v1
    //   2 c2 + 6 c3 M = v2
    // Eliminating gives the closed form below.
    let c3 = (v0 - v1 * m + 0.5 * v2 * m * m) / (m * m * m);
    let c2 = 0.5 * v2 - 3.0 * c3 * m;
    let c1 = v1 - 2.0 * c2 * m - 3.0 * c3 * m * m;
    (c1, c2, c3)
}

#[derive(Clone)]
pub enum DiffusionSpec {
    /// Row-major `dim × cols` matrix.
    ConstantMatrix { sigma: Vec<f64>, dim: usize, cols: usize },
    StateDependent {
        label: String,
        field: MatrixField,
        dim: usize,
        cols: usize,
        growth: f64,
        ellipticity_floor: f64,
    },
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl DiffusionSpec {
    pub fn constant(sigma: Vec<f64>, dim: usize, cols: usize) -> Result<Self> {
        if dim == 0 || cols == 0 || sigma.len() != dim * cols {
            return Err(Error::invalid(format!(
                "diffusion matrix has {} entries, expected {dim}x{cols}",
                sigma.len()
            )));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("diffusion matrix has non-finite entries"));
        }
        Ok(DiffusionSpec::ConstantMatrix { sigma, dim, cols })
    }

    /// `σ I_d`.
    pub fn scalar(sigma: f64, dim: usize) -> Result<Self> {
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = sigma;
        }
        Self::constant(m, dim, dim)
    }

    pub fn state_dependent(
        label: impl Into<String>,
        field: MatrixField,
        dim: usize,
        cols: usize,
        growth: f64,
        ellipticity_floor: f64,
    ) -> Result<Self> {
        if dim == 0 || cols == 0 {
            return Err(Error::invalid("diffusion dimensions must be positive"));
        }
        if !(growth > 0.0 && growth <= 0.5) {
            return Err(Error::invalid(format!("growth exponent must lie in (0, 1/2], got {growth}")));
        }
        if !(ellipticity_floor >= 0.0) {
            return Err(Error::invalid("ellipticity floor must be >= 0"));
        }
        Ok(DiffusionSpec::StateDependent {
            label: label.into(),
            field,
            dim,
            cols,
            growth,
            ellipticity_floor,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            DiffusionSpec::ConstantMatrix { dim, .. } | DiffusionSpec::StateDependent { dim, .. } => *dim,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            DiffusionSpec::ConstantMatrix { cols, .. } | DiffusionSpec::StateDependent { cols, .. } => *cols,
        }
    }

    pub fn tag(&self) -> String {
        match self {
            DiffusionSpec::ConstantMatrix { sigma, dim, cols } => format!("constant({dim}x{cols},{sigma:?})"),
            DiffusionSpec::StateDependent {
                label,
                growth,
                ellipticity_floor,
                ..
            } => format!("state_dependent({label},r={growth},eps={ellipticity_floor})"),
        }
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            DiffusionSpec::ConstantMatrix { sigma, .. } => out.copy_from_slice(sigma),
            DiffusionSpec::StateDependent { field, .. } => field(x, out),
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, DiffusionSpec::ConstantMatrix { sigma, .. } if sigma.iter().all(|&v| v == 0.0))
    }
}

/// Whether `σσᵀ - floor·I` is positive semidefinite (Cholesky with a small
/// relative slack).
pub fn satisfies_ellipticity(sigma: &[f64], dim: usize, cols: usize, floor: f64) -> bool {
    let mut a = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            a[i * dim + j] = (0..cols).map(|k| sigma[i * cols + k] * sigma[j * cols + k]).sum();
        }
        a[i * dim + i] -= floor;
    }
    let slack = 1e-12 * (1.0 + floor);
    for j in 0..dim {
        let mut diag = a[j * dim + j];
        for k in 0..j {
            diag -= a[j * dim + k] * a[j * dim + k];
        }
        if diag < -slack {
            return false;
        }
        let l = diag.max(0.0).sqrt();
        a[j * dim + j] = l;
        for i in (j + 1)..dim {
            let mut v = a[i * dim + j];
            for k in 0..j {
                v -= a[i * dim + k] * a[j * dim + k];
            }
            a[i * dim + j] = if l > 0.0 { v / l } else { 0.0 };
        }
    }
    true
}

fn determinant(m: &[f64], n: usize) -> f64 {
    let mut a = m.to_vec();
    let mut det = 1.0;
    for c in 0..n {
        let pivot = (c..n)
            .max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs()))
            .unwrap_or(c);
        if a[pivot * n + c] == 0.0 {
            return 0.0;
        }
        if pivot != c {
            for k in 0..n {
                a.swap(c * n + k, pivot * n + k);
            }
            det = -det;
        }
        let p = a[c * n + c];
        det *= p;
        for r in (c + 1)..n {
            let f = a[r * n + c] / p;
            for k in c..n {
                a[r * n + k] -= f * a[c * n + k];
            }
        }
    }
    det
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub drift: String,
    pub diffusion: String,
    pub noise: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    times: Vec<f64>,
    states: Vec<f64>,
    dim: usize,
    provenance: Provenance,
}

impl PathSample {
    /// Assemble a path from raw parts; all entries must be finite.
    pub fn new(times: Vec<f64>, states: Vec<f64>, dim: usize, provenance: Provenance) -> Result<Self> {
        if dim == 0 || times.is_empty() || states.len() != times.len() * dim {
            return Err(Error::invalid("path lengths do not match"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("path times must be strictly increasing"));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("path has non-finite states"));
        }
        Ok(PathSample {
            times,
            states,
            dim,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty path")
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// The first `len` grid points.
    pub fn prefix(&self, len: usize) -> PathSample {
        let len = len.clamp(1, self.len());
        PathSample {
            times: self.times[..len].to_vec(),
            states: self.states[..len * self.dim].to_vec(),
            dim: self.dim,
            provenance: self.provenance.clone(),
        }
    }
}

/// Where the driving noise comes from.
#[derive(Debug, Clone, Copy)]
pub enum NoiseSource<'a> {
    Path(&'a NoisePath),
    /// Brownian increments drawn from this seed.
    Seed(u64),
}

fn check_step(drift: &DriftSpec, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    if let DriftSpec::Linear { rate } = drift {
        if rate * dt >= 1.0 {
            return Err(Error::invalid(format!(
                "linear drift needs rate*dt < 1 for stability, got {}",
                rate * dt
            )));
        }
    }
    Ok(())
}

/// Euler–Maruyama: `X_{k+1} = X_k + b(X_k) dt + σ(X_k) ΔG_k`.
///
/// With [`NoiseSource::Seed`] the driver is a Brownian motion sampled by
/// [`sample_brownian`] with that seed, so passing the sampled path explicitly
/// gives the identical result.
pub fn euler_maruyama(
    drift: &DriftSpec,
    diffusion: &DiffusionSpec,
    x0: &[f64],
    dt: f64,
    steps: usize,
    noise: NoiseSource<'_>,
) -> Result<PathSample> {
    check_step(drift, dt)?;
    if steps == 0 {
        return Err(Error::invalid("need at least one step"));
    }
    if x0.len() != diffusion.dim() {
        return Err(Error::invalid(format!(
            "initial state has dimension {}, diffusion expects {}",
            x0.len(),
            diffusion.dim()
        )));
    }
    let owned;
    let (path, seed) = match noise {
        NoiseSource::Path(p) => (p, None),
        NoiseSource::Seed(s) => {
            owned = sample_brownian(steps, dt, diffusion.cols(), s)?;
            (&owned, Some(s))
        }
    };
    if path.dim() != diffusion.cols() {
        return Err(Error::invalid(format!(
            "noise has {} coordinates, diffusion expects {}",
            path.dim(),
            diffusion.cols()
        )));
    }
    if path.steps() != steps {
        return Err(Error::invalid(format!("noise has {} steps, expected {steps}", path.steps())));
    }
    match path.uniform_dt() {
        Some(h) if ((h - dt) / dt).abs() < 1e-9 => {}
        _ => return Err(Error::invalid("noise grid does not match the time step")),
    }
    if path.kind() != NoiseKind::Brownian && !matches!(diffusion, DiffusionSpec::ConstantMatrix { .. }) {
        return Err(Error::invalid(
            "non-Brownian noise requires a constant diffusion matrix (additive noise)",
        ));
    }
    integrate(drift, diffusion, x0, dt, path, seed)
}

/// Additive-noise Euler scheme `X_{k+1} = X_k + b(X_k) dt + σ ΔG_k` for any
/// noise path on a uniform grid. `sigma` must be a constant invertible matrix.
pub fn integrate_additive(drift: &DriftSpec, sigma: &DiffusionSpec, x0: &[f64], noise: &NoisePath) -> Result<PathSample> {
    let DiffusionSpec::ConstantMatrix { sigma: m, dim, cols } = sigma else {
        return Err(Error::invalid("additive integration requires a constant diffusion matrix"));
    };
    if dim != cols || determinant(m, *dim) == 0.0 {
        return Err(Error::invalid("additive noise requires an invertible square diffusion matrix"));
    }
    let dt = noise
        .uniform_dt()
        .ok_or_else(|| Error::invalid("noise grid must be uniform"))?;
    check_step(drift, dt)?;
    if x0.len() != *dim || noise.dim() != *cols {
        return Err(Error::invalid("dimension mismatch between state, sigma and noise"));
    }
    integrate(drift, sigma, x0, dt, noise, None)
}

fn integrate(
    drift: &DriftSpec,
    diffusion: &DiffusionSpec,
    x0: &[f64],
    dt: f64,
    noise: &NoisePath,
    seed: Option<u64>,
) -> Result<PathSample> {
    let d = diffusion.dim();
    let cols = diffusion.cols();
    let steps = noise.steps();
    let norm0 = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let threshold = EXPLOSION_FACTOR * (1.0 + norm0);
    let floor = match diffusion {
        DiffusionSpec::StateDependent { ellipticity_floor, .. } if *ellipticity_floor > 0.0 => Some(*ellipticity_floor),
        _ => None,
    };
    let skip_noise = diffusion.is_zero();

    let mut states = Vec::with_capacity((steps + 1) * d);
    states.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d * cols];
    let mut dg = vec![0.0; cols];
    diffusion.eval(&x, &mut s);
    for k in 0..steps {
        drift.eval(&x, &mut b);
        if let DiffusionSpec::StateDependent { .. } = diffusion {
            diffusion.eval(&x, &mut s);
        }
        if let Some(floor) = floor {
            if !satisfies_ellipticity(&s, d, cols, floor) {
                return Err(Error::Ellipticity { step: k, floor });
            }
        }
        for (j, g) in dg.iter_mut().enumerate() {
            *g = noise.increment(k, j);
        }
        let mut norm2 = 0.0;
        for i in 0..d {
            let mut v = x[i] + b[i] * dt;
            if !skip_noise {
                let row = &s[i * cols..(i + 1) * cols];
                v += row.iter().zip(&dg).map(|(a, g)| a * g).sum::<f64>();
            }
            x[i] = v;
            norm2 += v * v;
        }
        let norm = norm2.sqrt();
        if !(norm <= threshold) {
            return Err(Error::Divergence { step: k + 1, norm });
        }
        states.extend_from_slice(&x);
    }
    Ok(PathSample {
        times: noise.times().to_vec(),
        states,
        dim: d,
        provenance: Provenance {
            drift: drift.tag(),
            diffusion: diffusion.tag(),
            noise: noise.kind().tag().to_string(),
            seed,
        },
    })
}

/// A pair of points violating a declared condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolatingPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `<b(x)-b(y), x-y> / |x-y|²`
    pub ratio: f64,
}

/// Empirical summary of the contraction condition `S_{κ,R,λ}` and the Hajek
/// left-hand side over random points of `B(0, radius)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    /// Best-fit outer contraction rate κ (positive when contracting).
    pub kappa: f64,
    /// Smallest sampled radius beyond which all pairs contract.
    pub radius: f64,
    /// Largest expansion rate `max(0, sup ratio)` over all pairs.
    pub nonconvexity: f64,
    /// Fraction of sampled points with negative Hajek left-hand side, per
    /// decile of `|x| / radius`.
    pub hajek_negative_fraction: Vec<f64>,
    /// `max LHS(x) / |x|²` over sampled points with `|x| >= radius / 2`.
    pub hajek_outer_slope: f64,
    /// Points with `|x| > M` where `<b(x),x> > -α|x|^{2a}` (weak mean-reverting only).
    pub weak_reversion_violations: usize,
    /// A pair contradicting the drift's declared constants, if any.
    pub violating_pair: Option<ViolatingPair>,
    pub pairs: usize,
}

fn sample_ball(rng: &mut impl Rng, dim: usize, radius: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / dim as f64);
    for a in v.iter_mut() {
        *a *= r / n;
    }
    v
}

/// Samples `sample_count` random pairs in `B(0, radius) ⊂ R^dim` and reports
/// the fitted contraction parameters and the `(Haj)_q` sign pattern.
pub fn check_drift_conditions(
    drift: &DriftSpec,
    diffusion: Option<&DiffusionSpec>,
    dim: usize,
    q: f64,
    sample_count: usize,
    radius: f64,
    seed: u64,
) -> Result<DriftReport> {
    if sample_count < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    if !(q >= 1.0) || !(radius > 0.0) || dim == 0 {
        return Err(Error::invalid("need q >= 1, radius > 0 and dim >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    let mut pairs = Vec::with_capacity(sample_count);
    let mut nonconvexity: f64 = 0.0;
    for _ in 0..sample_count {
        let x = sample_ball(&mut rng, dim, radius);
        let y = sample_ball(&mut rng, dim, radius);
        let bx = drift.eval_vec(&x);
        let by = drift.eval_vec(&y);
        let mut dot = 0.0;
        let mut n2 = 0.0;
        for i in 0..dim {
            let dx = x[i] - y[i];
            dot += (bx[i] - by[i]) * dx;
            n2 += dx * dx;
        }
        if n2 == 0.0 {
            continue;
        }
        let ratio = dot / n2;
        nonconvexity = nonconvexity.max(ratio);
        let rmin = norm(&x).min(norm(&y));
        pairs.push((rmin, ratio, x, y));
    }
    // Scan from the outside in: the running max of the ratio over pairs with
    // min-norm >= R. The fitted R is the smallest R with a negative running max.
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut running = f64::NEG_INFINITY;
    let mut fitted_r = f64::INFINITY;
    let mut kappa = 0.0;
    for (rmin, ratio, _, _) in &pairs {
        running = running.max(*ratio);
        if running < 0.0 {
            fitted_r = *rmin;
            kappa = -running;
        } else {
            break;
        }
    }
    if fitted_r.is_finite() && pairs.last().map(|p| p.0) == Some(fitted_r) {
        // Every pair contracts; the condition holds globally.
        fitted_r = 0.0;
    }

    // Declared constants, when the drift family provides them.
    let declared: Option<(f64, f64)> = match drift {
        DriftSpec::Linear { rate } => Some((*rate, 0.0)),
        DriftSpec::GradientDoubleWell { nonconvexity, .. } => Some((f64::NEG_INFINITY, *nonconvexity)),
        DriftSpec::Custom { lipschitz, .. } => Some((f64::NEG_INFINITY, *lipschitz)),
        DriftSpec::WeakMeanReverting { .. } => None,
    };
    let mut violating_pair = None;
    if let Some((kappa_decl, lambda_decl)) = declared {
        let tol = 1e-9;
        for (_, ratio, x, y) in &pairs {
            let bad = *ratio > lambda_decl + tol || (kappa_decl.is_finite() && *ratio > -kappa_decl + tol);
            if bad {
                violating_pair = Some(ViolatingPair {
                    x: x.clone(),
                    y: y.clone(),
                    ratio: *ratio,
                });
                break;
            }
        }
    }

    // Hajek left-hand side and the weak mean-reversion inequality on points.
    let mut buckets = vec![(0usize, 0usize); 10];
    let mut outer_slope = f64::NEG_INFINITY;
    let mut weak_violations = 0;
    let mut sigma = diffusion.map(|s| vec![0.0; s.dim() * s.cols()]);
    for _ in 0..sample_count {
        let x = sample_ball(&mut rng, dim, radius);
        let r = norm(&x);
        if r == 0.0 {
            continue;
        }
        let b = drift.eval_vec(&x);
        let bx: f64 = b.iter().zip(&x).map(|(a, c)| a * c).sum();
        let mut lhs = bx;
        if let (Some(diff), Some(s)) = (diffusion, sigma.as_mut()) {
            diff.eval(&x, s);
            let cols = diff.cols();
            let frob: f64 = s.iter().map(|v| v * v).sum();
            let mut stx2 = 0.0;
            for j in 0..cols {
                let v: f64 = (0..dim).map(|i| s[i * cols + j] * x[i]).sum();
                stx2 += v * v;
            }
            lhs += 0.5 * frob + (0.5 * q - 1.0) * stx2 / (r * r);
        }
        let bucket = ((r / radius) * 10.0).floor().min(9.0) as usize;
        buckets[bucket].1 += 1;
        if lhs < 0.0 {
            buckets[bucket].0 += 1;
        }
        if r >= 0.5 * radius {
            outer_slope = outer_slope.max(lhs / (r * r));
        }
        if let DriftSpec::WeakMeanReverting {
            exponent,
            strength,
            inner_radius,
        } = drift
        {
            if r > *inner_radius && bx > -strength * r.powf(2.0 * exponent) * (1.0 - 1e-12) {
                weak_violations += 1;
            }
        }
    }
    Ok(DriftReport {
        kappa,
        radius: fitted_r,
        nonconvexity,
        hajek_negative_fraction: buckets
            .iter()
            .map(|&(neg, n)| if n == 0 { f64::NAN } else { neg as f64 / n as f64 })
            .collect(),
        hajek_outer_slope: outer_slope,
        weak_reversion_violations: weak_violations,
        violating_pair,
        pairs: pairs.len(),
    })
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_fbm, FbmSpec};

    fn scalar(s: f64) -> DiffusionSpec {
        DiffusionSpec::scalar(s, 1).unwrap()
    }

    #[test]
    fn zero_dynamics_is_constant() {
        let drift = DriftSpec::custom("zero", Arc::new(|_: &[f64], o: &mut [f64]| o.fill(0.0)), 0.0).unwrap();
        let diff = DiffusionSpec::scalar(0.0, 2).unwrap();
        let p = euler_maruyama(&drift, &diff, &[1.5, -2.0], 0.1, 20, NoiseSource::Seed(1)).unwrap();
        for k in 0..p.len() {
            assert_eq!(p.state(k), &[1.5, -2.0]);
        }
    }

    #[test]
    fn linear_ode_decay() {
        let dt = 2f64.powi(-10);
        let p = euler_maruyama(&DriftSpec::linear(1.0).unwrap(), &scalar(0.0), &[1.0], dt, 1024, NoiseSource::Seed(0)).unwrap();
        assert!((p.state(1024)[0] - (-1.0f64).exp()).abs() < 1e-2);
    }

    #[test]
    fn linear_stability_guard() {
        let err = euler_maruyama(&DriftSpec::linear(4.0).unwrap(), &scalar(1.0), &[0.0], 0.25, 4, NoiseSource::Seed(0));
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn divergence_is_reported() {
        let drift = DriftSpec::custom("expand", Arc::new(|x: &[f64], o: &mut [f64]| o[0] = 10.0 * x[0]), 10.0).unwrap();
        let err = euler_maruyama(&drift, &scalar(0.0), &[1.0], 0.5, 100, NoiseSource::Seed(0)).unwrap_err();
        match err {
            Error::Divergence { step, .. } => assert!(step > 1 && step < 100),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn seed_and_explicit_path_agree() {
        let drift = DriftSpec::linear(1.0).unwrap();
        let diff = DiffusionSpec::scalar(2f64.sqrt(), 2).unwrap();
        let a = euler_maruyama(&drift, &diff, &[0.3, 0.1], 0.01, 200, NoiseSource::Seed(9)).unwrap();
        let w = sample_brownian(200, 0.01, 2, 9).unwrap();
        let b = euler_maruyama(&drift, &diff, &[0.3, 0.1], 0.01, 200, NoiseSource::Path(&w)).unwrap();
        assert_eq!(a.states(), b.states());
        let c = integrate_additive(&drift, &diff, &[0.3, 0.1], &w).unwrap();
        assert_eq!(a.states(), c.states());
    }

    #[test]
    fn half_hurst_fbm_matches_brownian_driver() {
        let spec = FbmSpec::new(0.5, 2.0, 200).unwrap();
        let g = sample_fbm(&spec, 1, 4).unwrap();
        let drift = DriftSpec::linear(1.0).unwrap();
        let a = integrate_additive(&drift, &scalar(1.0), &[0.0], &g).unwrap();
        let b = euler_maruyama(&drift, &scalar(1.0), &[0.0], 0.01, 200, NoiseSource::Path(&g)).unwrap();
        assert_eq!(a.states(), b.states());
    }

    #[test]
    fn additive_requires_invertible_sigma() {
        let w = sample_brownian(10, 0.1, 2, 0).unwrap();
        let singular = DiffusionSpec::constant(vec![1.0, 1.0, 1.0, 1.0], 2, 2).unwrap();
        assert!(integrate_additive(&DriftSpec::linear(1.0).unwrap(), &singular, &[0.0, 0.0], &w).is_err());
    }

    #[test]
    fn weak_blend_is_c2() {
        let drift = DriftSpec::weak_mean_reverting(0.5, 2.0, 1.5).unwrap();
        let m = |r: f64| -drift.eval_vec(&[r])[0];
        let h = 1e-4;
        let at = 1.5;
        assert!((m(at - h) - m(at + h)).abs() < 1e-3);
        let d_left = (m(at) - m(at - h)) / h;
        let d_right = (m(at + h) - m(at)) / h;
        assert!((d_left - d_right).abs() < 1e-3);
        assert_eq!(m(0.0), 0.0);
        // outside: b(x) = -α sign(x) for a = 1/2
        assert!((m(3.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn weak_mean_reverting_needs_inner_radius() {
        assert!(DriftSpec::weak_mean_reverting(0.5, 1.0, 0.0).is_err());
        assert!(DriftSpec::weak_mean_reverting(1.0, 1.0, 0.0).is_ok());
        assert!(DriftSpec::weak_mean_reverting(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn double_well_wells_at_radius() {
        let drift = DriftSpec::double_well(1.0, 1.0, 1.5).unwrap();
        assert!(drift.eval_vec(&[1.5])[0].abs() < 1e-12);
        assert!(drift.eval_vec(&[0.5])[0] > 0.0);
        assert!(drift.eval_vec(&[3.0])[0] < 0.0);
    }

    #[test]
    fn linear_contraction_report() {
        let r = check_drift_conditions(&DriftSpec::linear(1.0).unwrap(), None, 2, 2.0, 2000, 5.0, 3).unwrap();
        assert!((r.kappa - 1.0).abs() < 1e-9);
        assert_eq!(r.radius, 0.0);
        assert_eq!(r.nonconvexity, 0.0);
        assert!(r.violating_pair.is_none());
        assert!(r.hajek_outer_slope < 0.0);
    }

    #[test]
    fn double_well_report() {
        let drift = DriftSpec::double_well(1.0, 1.0, 1.0).unwrap();
        let r = check_drift_conditions(&drift, Some(&scalar(1.0)), 1, 2.0, 4000, 6.0, 5).unwrap();
        assert!(r.nonconvexity > 0.0 && r.nonconvexity <= 1.0 + 1e-9);
        assert!(r.kappa > 0.0);
        assert!(r.radius > 0.0 && r.radius < 6.0);
        assert!(r.violating_pair.is_none());
    }

    #[test]
    fn weak_reversion_holds_on_samples() {
        let drift = DriftSpec::weak_mean_reverting(0.5, 1.0, 1.0).unwrap();
        let r = check_drift_conditions(&drift, None, 3, 1.0, 1000, 10.0, 8).unwrap();
        assert_eq!(r.weak_reversion_violations, 0);
    }

    #[test]
    fn ellipticity_check() {
        assert!(satisfies_ellipticity(&[1.0, 0.0, 0.0, 1.0], 2, 2, 1.0));
        assert!(!satisfies_ellipticity(&[1.0, 0.0, 0.0, 0.5], 2, 2, 0.5));
        let field: MatrixField = Arc::new(|x: &[f64], o: &mut [f64]| o[0] = 0.1 + x[0].abs());
        let diff = DiffusionSpec::state_dependent("lin", field, 1, 1, 0.5, 0.5).unwrap();
        let drift = DriftSpec::linear(1.0).unwrap();
        let err = euler_maruyama(&drift, &diff, &[0.0], 0.01, 10, NoiseSource::Seed(0)).unwrap_err();
        assert!(matches!(err, Error::Ellipticity { step: 0, .. }));
    }
}

//! Gaussian driving noises: Brownian motion, exact fractional Brownian motion
//! and moving-average processes with stationary increments.
//!
//! Paths are sampled on a uniform grid `0, dt, 2dt, ...` and always start at
//! zero. Every generator is a pure function of its arguments and a `u64` seed.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::fft::convolve;
use crate::seed::{derive_seed, rng_from_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Brownian,
    Fbm,
    MovingAverage,
}

impl NoiseKind {
    pub fn tag(self) -> &'static str {
        match self {
            NoiseKind::Brownian => "bm",
            NoiseKind::Fbm => "fbm",
            NoiseKind::MovingAverage => "moving_average",
        }
    }
}

/// A sampled `d`-dimensional noise path on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    times: Vec<f64>,
    /// Row-major: `values[k * dim + c]` is coordinate `c` at `times[k]`.
    values: Vec<f64>,
    dim: usize,
    kind: NoiseKind,
}

impl NoisePath {
    /// Wraps an externally built path. `values` is row-major with `dim`
    /// columns, one row per time; the path must start at zero.
    pub fn new(times: Vec<f64>, values: Vec<f64>, dim: usize, kind: NoiseKind) -> Result<Self> {
        if dim == 0 || times.len() < 2 {
            return Err(Error::invalid("noise path needs a positive dimension and at least two times"));
        }
        if values.len() != times.len() * dim {
            return Err(Error::invalid(format!(
                "{} values do not fill {} times x {dim} coordinates",
                values.len(),
                times.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("noise times must be strictly increasing"));
        }
        if values[..dim].iter().any(|&v| v != 0.0) {
            return Err(Error::invalid("noise path must start at zero"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("noise path has a non-finite value"));
        }
        Ok(NoisePath { times, values, dim, kind })
    }

    fn from_increments(dt: f64, steps: usize, dim: usize, increments: &[Vec<f64>], kind: NoiseKind) -> Self {
        debug_assert_eq!(increments.len(), dim);
        let times = (0..=steps).map(|k| k as f64 * dt).collect();
        let mut values = vec![0.0; (steps + 1) * dim];
        for (c, inc) in increments.iter().enumerate() {
            let mut acc = 0.0;
            for k in 0..steps {
                acc += inc[k];
                values[(k + 1) * dim + c] = acc;
            }
        }
        NoisePath { times, values, dim, kind }
    }

    fn from_levels(dt: f64, steps: usize, dim: usize, levels: &[Vec<f64>], kind: NoiseKind) -> Self {
        let times = (0..=steps).map(|k| k as f64 * dt).collect();
        let mut values = vec![0.0; (steps + 1) * dim];
        for (c, lev) in levels.iter().enumerate() {
            for k in 1..=steps {
                values[k * dim + c] = lev[k];
            }
        }
        NoisePath { times, values, dim, kind }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// `G_{t_{k+1}} - G_{t_k}`, coordinate `c`.
    pub fn increment(&self, k: usize, c: usize) -> f64 {
        self.values[(k + 1) * self.dim + c] - self.values[k * self.dim + c]
    }

    /// Grid step, if the grid is uniform to within rounding.
    pub fn uniform_dt(&self) -> Option<f64> {
        let n = self.steps();
        if n == 0 {
            return None;
        }
        let dt = self.times[n] / n as f64;
        let tol = 1e-9 * dt;
        self.times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= tol)
            .then_some(dt)
    }
}

fn gaussian_increments(steps: usize, dt: f64, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    let scale = dt.sqrt();
    let mut inc = vec![vec![0.0; steps]; dim];
    for k in 0..steps {
        for coord in inc.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            coord[k] = scale * z;
        }
    }
    inc
}

/// Standard `dim`-dimensional Brownian motion on `steps` cells of width `dt`.
pub fn sample_brownian(steps: usize, dt: f64, dim: usize, seed: u64) -> Result<NoisePath> {
    if steps == 0 {
        return Err(Error::invalid("brownian path needs at least one step"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    if dim == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let inc = gaussian_increments(steps, dt, dim, seed);
    Ok(NoisePath::from_increments(dt, steps, dim, &inc, NoiseKind::Brownian))
}

/// Grid description of a fractional Brownian motion sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbmSpec {
    hurst: f64,
    horizon: f64,
    steps: usize,
}

impl FbmSpec {
    /// `hurst` must lie strictly inside (0, 1); H = 1 is not supported.
    pub fn new(hurst: f64, horizon: f64, steps: usize) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::invalid(format!("hurst must lie in (0,1), got {hurst}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps < 2 {
            return Err(Error::invalid("fbm grid needs at least two steps"));
        }
        Ok(FbmSpec { hurst, horizon, steps })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `Cov(B_s, B_t) = (s^{2H} + t^{2H} - |t-s|^{2H}) / 2`.
    pub fn covariance(&self, s: f64, t: f64) -> f64 {
        let h2 = 2.0 * self.hurst;
        0.5 * (s.abs().powf(h2) + t.abs().powf(h2) - (t - s).abs().powf(h2))
    }

    /// Autocovariance of the increment sequence (fractional Gaussian noise) at `lag`.
    pub fn increment_autocovariance(&self, lag: usize) -> f64 {
        let h2 = 2.0 * self.hurst;
        let k = lag as f64;
        let raw = if lag == 0 {
            1.0
        } else {
            0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).powf(h2))
        };
        raw * self.dt().powf(h2)
    }
}

/// Exact fractional Gaussian noise synthesis by circulant embedding
/// (Davies–Harte). The embedding size is `2n` with `n` the smallest power of
/// two covering the requested steps.
#[derive(Debug, Clone)]
pub struct CirculantFbm {
    spec: FbmSpec,
    half: usize,
    first_row: Vec<f64>,
    eigenvalues: Vec<f64>,
}

impl CirculantFbm {
    pub fn new(spec: FbmSpec) -> Result<Self> {
        let half = spec.steps.next_power_of_two();
        let m = 2 * half;
        let first_row: Vec<f64> = (0..m)
            .map(|j| spec.increment_autocovariance(if j <= half { j } else { m - j }))
            .collect();
        let mut buf: Vec<Complex64> = first_row.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        FftPlanner::<f64>::new().plan_fft_forward(m).process(&mut buf);
        let max = buf.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
        let tol = 1e-12 * max;
        let mut eigenvalues = Vec::with_capacity(m);
        for (index, z) in buf.iter().enumerate() {
            if z.re < -tol {
                return Err(Error::NegativeEigenvalue { index, value: z.re });
            }
            eigenvalues.push(z.re.max(0.0));
        }
        Ok(CirculantFbm {
            spec,
            half,
            first_row,
            eigenvalues,
        })
    }

    pub fn spec(&self) -> &FbmSpec {
        &self.spec
    }

    /// First row of the circulant matrix; its leading `n+1` entries are the
    /// target increment autocovariances.
    pub fn first_row(&self) -> &[f64] {
        &self.first_row
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn sample(&self, dim: usize, seed: u64) -> Result<NoisePath> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        let inc = self.increments(dim, seed);
        Ok(NoisePath::from_increments(
            self.spec.dt(),
            self.spec.steps,
            dim,
            &inc,
            NoiseKind::Fbm,
        ))
    }

    /// Fractional Gaussian noise, one vector per coordinate. Each FFT yields
    /// two independent coordinates (real and imaginary parts).
    pub fn increments(&self, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let m = 2 * self.half;
        let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
        let scale: Vec<f64> = self.eigenvalues.iter().map(|l| (l / m as f64).sqrt()).collect();
        let mut out = Vec::with_capacity(dim);
        let mut pair = 0u64;
        while out.len() < dim {
            let mut rng = rng_from_seed(derive_seed(seed, pair));
            let mut buf: Vec<Complex64> = scale
                .iter()
                .map(|&s| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(s * re, s * im)
                })
                .collect();
            fft.process(&mut buf);
            out.push(buf[..self.spec.steps].iter().map(|z| z.re).collect());
            if out.len() < dim {
                out.push(buf[..self.spec.steps].iter().map(|z| z.im).collect());
            }
            pair += 1;
        }
        out
    }
}

/// Exact fractional Brownian motion with independent coordinates.
pub fn sample_fbm(spec: &FbmSpec, dim: usize, seed: u64) -> Result<NoisePath> {
    CirculantFbm::new(*spec)?.sample(dim, seed)
}

/// Number of standard deviations in [`KernelSpec::neglected_tail_bound`].
pub const TAIL_SIGMAS: f64 = 5.0;

/// Relative tolerance used by [`KernelSpec::with_default_truncation`].
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-3;

/// Largest default past window, as a multiple of the simulated horizon.
pub const MAX_PAST_MULTIPLE: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Continuation {
    /// `A + B (t/t0)^(2-ζ) + D (t/t0)^(1-ζ)`
    Power { a: f64, b: f64, d: f64 },
    /// `A + B ln(t/t0) + D (t/t0)^(1-ζ)`, used when ζ = 2.
    Log { a: f64, b: f64, d: f64 },
}

/// Moving-average kernel `g`: `g(t) = t^{H-1/2}` on `(0, t0]`, continued
/// beyond `t0` by a C² combination whose second derivative decays like
/// `t^{-ζ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    hurst: f64,
    zeta: f64,
    t0: f64,
    tail_coefficient: f64,
    past_truncation: f64,
    continuation: Continuation,
}

impl KernelSpec {
    pub fn new(hurst: f64, zeta: f64, t0: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst <= 1.0) {
            return Err(Error::invalid(format!("kernel hurst must lie in (0,1], got {hurst}")));
        }
        if !(zeta > 1.5 && zeta.is_finite()) {
            return Err(Error::invalid(format!("tail exponent must exceed 3/2, got {zeta}")));
        }
        if !(t0 > 0.0 && t0.is_finite()) {
            return Err(Error::invalid(format!("t0 must be positive, got {t0}")));
        }
        let h = hurst - 0.5;
        let g0 = t0.powf(h);
        let g1 = h * g0; // t0 * g'(t0)
        let g2 = h * (h - 1.0) * g0; // t0^2 * g''(t0)
        let e2 = 1.0 - zeta;
        let continuation = if (zeta - 2.0).abs() < 1e-12 {
            let d = g2_log(g1, g2, e2);
            let b = g1 - d * e2;
            Continuation::Log { a: g0 - d, b, d }
        } else {
            let e1 = 2.0 - zeta;
            // b e1 + d e2 = g1 ; b e1(e1-1) + d e2(e2-1) = g2
            let det = e1 * e2 * (e2 - 1.0) - e2 * e1 * (e1 - 1.0);
            let b = (g1 * e2 * (e2 - 1.0) - e2 * g2) / det;
            let d = (e1 * g2 - e1 * (e1 - 1.0) * g1) / det;
            Continuation::Power { a: g0 - b - d, b, d }
        };
        let mut spec = KernelSpec {
            hurst,
            zeta,
            t0,
            tail_coefficient: 0.0,
            past_truncation: 1.0,
            continuation,
        };
        spec.tail_coefficient = spec.minimal_tail_coefficient();
        Ok(spec)
    }

    /// The fBm kernel `t^{H-1/2}` everywhere (ζ = 5/2 - H).
    pub fn fbm(hurst: f64) -> Result<Self> {
        Self::new(hurst, 2.5 - hurst, 1.0)
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Smallest `C` with `|g''(u)| <= C u^{-ζ}` for all `u >= 1`.
    pub fn tail_coefficient(&self) -> f64 {
        self.tail_coefficient
    }

    pub fn past_truncation(&self) -> f64 {
        self.past_truncation
    }

    /// Declare a larger tail coefficient than the minimal one.
    pub fn with_tail_coefficient(mut self, c: f64) -> Result<Self> {
        if !(c >= self.minimal_tail_coefficient()) {
            return Err(Error::invalid(format!(
                "tail coefficient {c} is below the kernel's actual bound {}",
                self.minimal_tail_coefficient()
            )));
        }
        self.tail_coefficient = c;
        Ok(self)
    }

    pub fn with_past_truncation(mut self, past: f64) -> Result<Self> {
        if !(past > 0.0 && past.is_finite()) {
            return Err(Error::invalid(format!("past truncation must be positive, got {past}")));
        }
        self.past_truncation = past;
        Ok(self)
    }

    /// Chooses the past window so that the neglected contribution's standard
    /// deviation over `horizon` is below `DEFAULT_TAIL_TOLERANCE` times the
    /// path scale, clamped to `[horizon, MAX_PAST_MULTIPLE * horizon]`.
    /// Long-memory kernels usually hit the upper clamp; inspect
    /// [`Self::neglected_tail_sd`] for the achieved level.
    pub fn with_default_truncation(self, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::invalid("horizon must be positive"));
        }
        let target = DEFAULT_TAIL_TOLERANCE * self.path_scale(horizon);
        let exponent = 1.5 - self.zeta;
        let k = horizon * self.tail_coefficient / ((self.zeta - 1.0) * (2.0 * self.zeta - 3.0).sqrt());
        let past = if k == 0.0 {
            horizon
        } else {
            (target / k).powf(1.0 / exponent)
        };
        let past = past.clamp(horizon.max(1.0), MAX_PAST_MULTIPLE * horizon.max(1.0));
        self.with_past_truncation(past)
    }

    /// `sqrt(∫_0^h g²)`, the standard deviation of the causal part at `h`.
    pub fn path_scale(&self, horizon: f64) -> f64 {
        self.integral_sq(0.0, horizon).sqrt()
    }

    /// Upper bound on the standard deviation of the discarded far-past part
    /// `∫_{-∞}^{-T} (g(t-u) - g(-u)) dW_u` for `t <= horizon`, from
    /// `|g'(s)| <= C s^{1-ζ} / (ζ-1)`.
    pub fn neglected_tail_sd(&self, horizon: f64) -> f64 {
        let past = self.past_truncation.max(1.0);
        horizon * self.tail_coefficient * past.powf(1.5 - self.zeta)
            / ((self.zeta - 1.0) * (2.0 * self.zeta - 3.0).sqrt())
    }

    /// `TAIL_SIGMAS` standard deviations of the neglected part.
    pub fn neglected_tail_bound(&self, horizon: f64) -> f64 {
        TAIL_SIGMAS * self.neglected_tail_sd(horizon)
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.t0 {
            return t.powf(self.hurst - 0.5);
        }
        let s = t / self.t0;
        match self.continuation {
            Continuation::Power { a, b, d } => a + b * s.powf(2.0 - self.zeta) + d * s.powf(1.0 - self.zeta),
            Continuation::Log { a, b, d } => a + b * s.ln() + d * s.powf(1.0 - self.zeta),
        }
    }

    fn second_derivative_scaled(&self, s: f64) -> f64 {
        // t0^2 g''(t0 s) on the continuation.
        let z = self.zeta;
        match self.continuation {
            Continuation::Power { b, d, .. } => {
                let e1 = 2.0 - z;
                let e2 = 1.0 - z;
                b * e1 * (e1 - 1.0) * s.powf(e1 - 2.0) + d * e2 * (e2 - 1.0) * s.powf(e2 - 2.0)
            }
            Continuation::Log { b, d, .. } => {
                let e2 = 1.0 - z;
                -b / (s * s) + d * e2 * (e2 - 1.0) * s.powf(e2 - 2.0)
            }
        }
    }

    fn minimal_tail_coefficient(&self) -> f64 {
        let h = self.hurst - 0.5;
        let z = self.zeta;
        let mut c: f64 = 0.0;
        // Pure power region [1, t0]: |h(h-1)| u^{h-2+ζ} is monotone in u.
        if self.t0 > 1.0 {
            let k = (h * (h - 1.0)).abs();
            c = c.max(k).max(k * self.t0.powf(h - 2.0 + z));
        }
        // Continuation: u^ζ |g''(u)| = t0^{ζ-2} |x + y/s|, monotone in 1/s.
        let s_min = (1.0 / self.t0).max(1.0);
        let t0z = self.t0.powf(z - 2.0);
        let at = |s: f64| (self.second_derivative_scaled(s) * s.powf(z)).abs() * t0z;
        let limit = match self.continuation {
            Continuation::Power { b, .. } => (b * (2.0 - z) * (1.0 - z)).abs() * t0z,
            Continuation::Log { b, .. } => b.abs() * t0z,
        };
        c.max(at(s_min)).max(limit)
    }

    /// `∫_a^b g(s) ds`, exact on the power region, trapezoidal beyond `t0`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.split(a, b, |lo, hi| {
            let e = self.hurst + 0.5;
            (hi.powf(e) - lo.powf(e)) / e
        }, |lo, hi| 0.5 * (hi - lo) * (self.eval(lo) + self.eval(hi)))
    }

    /// `∫_a^b g(s)² ds`, exact on the power region, exact for the linear
    /// interpolant of `g` beyond `t0`.
    pub fn integral_sq(&self, a: f64, b: f64) -> f64 {
        self.split(a, b, |lo, hi| {
            let e = 2.0 * self.hurst;
            (hi.powf(e) - lo.powf(e)) / e
        }, |lo, hi| {
            let (ga, gb) = (self.eval(lo), self.eval(hi));
            (hi - lo) * (ga * ga + ga * gb + gb * gb) / 3.0
        })
    }

    fn split(&self, a: f64, b: f64, power: impl Fn(f64, f64) -> f64, smooth: impl Fn(f64, f64) -> f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut total = 0.0;
        if a < self.t0 {
            total += power(a, b.min(self.t0));
        }
        if b > self.t0 {
            total += smooth(a.max(self.t0), b);
        }
        total
    }
}

fn g2_log(g1: f64, g2: f64, e2: f64) -> f64 {
    (g1 + g2) / (e2 * e2)
}

/// Brownian increments on `[-T, 0]`, stored nearest-first: `increments[c][i]`
/// is `W` over cell `[-(i+1)dt, -i dt]`. Reusing one past across several
/// future seeds gives conditional restarts with a shared history.
#[derive(Debug, Clone, PartialEq)]
pub struct PastBrownian {
    dt: f64,
    increments: Vec<Vec<f64>>,
}

impl PastBrownian {
    pub fn sample(cells: usize, dt: f64, dim: usize, seed: u64) -> Result<Self> {
        if cells == 0 || !(dt > 0.0) || dim == 0 {
            return Err(Error::invalid("past path needs positive cells, dt and dimension"));
        }
        Ok(PastBrownian {
            dt,
            increments: gaussian_increments(cells, dt, dim, seed),
        })
    }

    pub fn cells(&self) -> usize {
        self.increments[0].len()
    }

    pub fn dim(&self) -> usize {
        self.increments.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

/// Moving-average Gaussian process `G_t = ∫_{-∞}^0 (g(t-u) - g(-u)) dW_u + ∫_0^t g(t-u) dW_u`
/// with the past truncated at `spec.past_truncation()`.
pub fn sample_moving_average(spec: &KernelSpec, steps: usize, dt: f64, dim: usize, seed: u64) -> Result<NoisePath> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    let cells = (spec.past_truncation / dt).ceil().max(1.0) as usize;
    let past = PastBrownian::sample(cells, dt, dim, derive_seed(seed, stream::PAST_NOISE))?;
    sample_moving_average_with_past(spec, steps, &past, derive_seed(seed, stream::DRIVING_NOISE))
}

/// Moving-average path over a fixed past; the future increments come from
/// `future_seed` and are the same increments `sample_brownian` would draw.
pub fn sample_moving_average_with_past(
    spec: &KernelSpec,
    steps: usize,
    past: &PastBrownian,
    future_seed: u64,
) -> Result<NoisePath> {
    if steps == 0 {
        return Err(Error::invalid("moving-average path needs at least one step"));
    }
    let dt = past.dt;
    let dim = past.dim();
    let cells = past.cells().min((spec.past_truncation / dt).ceil().max(1.0) as usize);

    // Cell averages of g and root-mean-square of g over [m dt, (m+1) dt].
    // Both are finite at m = 0 for H < 1/2; g is never evaluated at 0.
    let mean_g: Vec<f64> = (0..cells + steps)
        .map(|m| spec.integral(m as f64 * dt, (m + 1) as f64 * dt) / dt)
        .collect();
    let causal: Vec<f64> = (0..steps)
        .map(|m| {
            let rms = (spec.integral_sq(m as f64 * dt, (m + 1) as f64 * dt) / dt).sqrt();
            if mean_g[m] < 0.0 {
                -rms
            } else {
                rms
            }
        })
        .collect();

    let future = gaussian_increments(steps, dt, dim, future_seed);
    let mut levels = Vec::with_capacity(dim);
    for c in 0..dim {
        let mut level = vec![0.0; steps + 1];
        // Causal part: sum_{m<k} causal[m] dW_{k-1-m}.
        let conv = convolve(&causal, &future[c]);
        for k in 1..=steps {
            level[k] += conv[k - 1];
        }
        // Past part: sum_j (mean_g[k+j] - mean_g[j]) x_j, x_j nearest-first.
        let x = &past.increments[c][..cells];
        let reversed: Vec<f64> = x.iter().rev().copied().collect();
        let corr = convolve(&mean_g, &reversed);
        let base = corr[cells - 1];
        for k in 1..=steps {
            level[k] += corr[k + cells - 1] - base;
        }
        levels.push(level);
    }
    Ok(NoisePath::from_levels(dt, steps, dim, &levels, NoiseKind::MovingAverage))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brownian_starts_at_zero() {
        let p = sample_brownian(1, 1.0, 1, 7).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.value(0), &[0.0]);
        assert_eq!(p.kind(), NoiseKind::Brownian);
    }

    #[test]
    fn explicit_paths_are_validated() {
        let ok = NoisePath::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.3, -0.1], 1, NoiseKind::Brownian).unwrap();
        assert_eq!(ok.uniform_dt(), Some(0.5));
        assert!(NoisePath::new(vec![0.0, 1.0], vec![0.1, 0.3], 1, NoiseKind::Brownian).is_err());
        assert!(NoisePath::new(vec![0.0, 0.0], vec![0.0, 0.3], 1, NoiseKind::Brownian).is_err());
        assert!(NoisePath::new(vec![0.0, 1.0], vec![0.0], 1, NoiseKind::Brownian).is_err());
    }

    #[test]
    fn brownian_rejects_bad_arguments() {
        assert!(matches!(sample_brownian(0, 1.0, 1, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(sample_brownian(4, 0.0, 1, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(sample_brownian(4, -1.0, 1, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn brownian_is_deterministic() {
        let a = sample_brownian(50, 0.1, 3, 11).unwrap();
        let b = sample_brownian(50, 0.1, 3, 11).unwrap();
        assert_eq!(a, b);
        let c = sample_brownian(50, 0.1, 3, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn fbm_spec_validation() {
        assert!(FbmSpec::new(0.0, 1.0, 4).is_err());
        assert!(FbmSpec::new(1.0, 1.0, 4).is_err());
        assert!(FbmSpec::new(0.5, 0.0, 4).is_err());
        assert!(FbmSpec::new(0.5, 1.0, 1).is_err());
        assert!(FbmSpec::new(0.3, 1.0, 2).is_ok());
    }

    #[test]
    fn fbm_covariance_formula() {
        let spec = FbmSpec::new(0.75, 1.0, 2).unwrap();
        // ½(0.5^{1.5} + 1 - 0.5^{1.5}) = 0.5
        assert!((spec.covariance(0.5, 1.0) - 0.5).abs() < 1e-15);
        assert!((spec.covariance(1.0, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn half_hurst_increments_are_white() {
        let spec = FbmSpec::new(0.5, 2.0, 8).unwrap();
        assert!((spec.increment_autocovariance(0) - 0.25).abs() < 1e-15);
        for lag in 1..8 {
            assert!(spec.increment_autocovariance(lag).abs() < 1e-15);
        }
        let gen = CirculantFbm::new(spec).unwrap();
        for l in gen.eigenvalues() {
            assert!((l - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn circulant_eigenvalues_nonnegative_across_hurst() {
        for &h in &[0.05, 0.25, 0.5, 0.75, 0.95] {
            let gen = CirculantFbm::new(FbmSpec::new(h, 10.0, 1000).unwrap()).unwrap();
            assert!(gen.eigenvalues().iter().all(|&l| l >= 0.0));
        }
    }

    #[test]
    fn fbm_path_shape() {
        let spec = FbmSpec::new(0.3, 1.0, 100).unwrap();
        let p = sample_fbm(&spec, 3, 5).unwrap();
        assert_eq!(p.len(), 101);
        assert_eq!(p.dim(), 3);
        assert_eq!(p.value(0), &[0.0, 0.0, 0.0]);
        assert_eq!(p.uniform_dt(), Some(0.01));
        assert_eq!(p, sample_fbm(&spec, 3, 5).unwrap());
    }

    #[test]
    fn kernel_is_c2_at_t0() {
        for &(h, z, t0) in &[(0.3, 2.2, 0.5), (0.75, 1.75, 2.0), (0.6, 2.0, 1.0), (0.2, 3.5, 0.25)] {
            let k = KernelSpec::new(h, z, t0).unwrap();
            let eps = 1e-5 * t0;
            let left = k.eval(t0 - eps);
            let right = k.eval(t0 + eps);
            assert!((left - right).abs() < 1e-4 * k.eval(t0).abs().max(1.0), "{h} {z}");
            let d_left = (k.eval(t0) - k.eval(t0 - eps)) / eps;
            let d_right = (k.eval(t0 + eps) - k.eval(t0)) / eps;
            assert!((d_left - d_right).abs() < 1e-3 * d_left.abs().max(1.0), "{h} {z}: {d_left} {d_right}");
        }
    }

    #[test]
    fn kernel_tail_bound_holds() {
        for &(h, z, t0) in &[(0.3, 2.2, 0.5), (0.75, 1.75, 2.0), (0.6, 2.0, 1.0), (0.2, 3.5, 4.0)] {
            let k = KernelSpec::new(h, z, t0).unwrap();
            let c = k.tail_coefficient();
            let mut u: f64 = 1.0;
            while u < 1e6 {
                let e = 1e-4 * u;
                let g2 = (k.eval(u + e) - 2.0 * k.eval(u) + k.eval(u - e)) / (e * e);
                assert!(g2.abs() <= c * u.powf(-z) * (1.0 + 1e-3) + 1e-9, "h={h} z={z} u={u}");
                u *= 1.37;
            }
        }
    }

    #[test]
    fn fbm_kernel_is_pure_power() {
        let k = KernelSpec::fbm(0.75).unwrap();
        for &t in &[0.1, 1.0, 3.0, 100.0] {
            assert!((k.eval(t) - t.powf(0.25)).abs() < 1e-12 * t.powf(0.25));
        }
    }

    #[test]
    fn unit_kernel_reduces_to_brownian() {
        let k = KernelSpec::new(0.5, 2.3, 0.7).unwrap().with_past_truncation(4.0).unwrap();
        let dt = 0.125;
        let past = PastBrownian::sample(32, dt, 2, 1).unwrap();
        let ma = sample_moving_average_with_past(&k, 40, &past, 99).unwrap();
        let bm = sample_brownian(40, dt, 2, 99).unwrap();
        for (a, b) in ma.values().iter().zip(bm.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_kernel_weights_are_finite() {
        let k = KernelSpec::new(0.1, 2.4, 1.0).unwrap().with_past_truncation(2.0).unwrap();
        let p = sample_moving_average(&k, 64, 1.0 / 64.0, 1, 3).unwrap();
        assert!(p.values().iter().all(|v| v.is_finite()));
    }
}

//! Exact Wasserstein distances: one-dimensional quantile coupling (between
//! clouds, and from a cloud to a Gaussian), optimal assignment for small
//! instances, and the series `L_t(u)` of the multiscale rate lemma.

use crate::error::{Error, Result};
use crate::special::{normal_cdf, normal_cdf_integral, normal_pdf, normal_quantile};

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::invalid(format!("p must be a finite value >= 1, got {p}")));
    }
    Ok(())
}

fn check_sorted(xs: &[f64], name: &str) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::invalid(format!("{name} is empty")));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{name} has non-finite points")));
    }
    if xs.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid(format!("{name} is not sorted")));
    }
    Ok(())
}

/// `W_p^p` between two uniformly weighted sorted 1D clouds, by merging the
/// quantile breakpoints `i/n` and `j/m`.
pub fn wasserstein_1d_pow(mu: &[f64], nu: &[f64], p: f64) -> Result<f64> {
    check_p(p)?;
    check_sorted(mu, "mu")?;
    check_sorted(nu, "nu")?;
    let (n, m) = (mu.len(), nu.len());
    if n == m {
        let s: f64 = mu.iter().zip(nu).map(|(a, b)| (a - b).abs().powf(p)).sum();
        return Ok(s / n as f64);
    }
    // Work in integer units of 1/(n m) so the breakpoints compare exactly.
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ui, mut uj) = (m as u128, n as u128); // next breakpoints, in 1/(nm)
    let mut u = 0u128;
    let mut total = 0.0;
    while i < n && j < m {
        let next = ui.min(uj);
        total += (next - u) as f64 * (mu[i] - nu[j]).abs().powf(p);
        u = next;
        if ui == next {
            i += 1;
            ui += m as u128;
        }
        if uj == next {
            j += 1;
            uj += n as u128;
        }
    }
    Ok(total / (n as f64 * m as f64))
}

/// `W_p` between two uniformly weighted sorted 1D clouds.
pub fn wasserstein_1d_exact(mu: &[f64], nu: &[f64], p: f64) -> Result<f64> {
    Ok(wasserstein_1d_pow(mu, nu, p)?.powf(1.0 / p))
}

/// `W_p` between weighted 1D measures given as `(point, mass)` pairs sorted by
/// point; masses are normalized.
pub fn wasserstein_1d_weighted(mu: &[(f64, f64)], nu: &[(f64, f64)], p: f64) -> Result<f64> {
    check_p(p)?;
    let norm = |v: &[(f64, f64)], name: &str| -> Result<f64> {
        if v.is_empty() || v.iter().any(|&(x, w)| !x.is_finite() || !(w >= 0.0)) {
            return Err(Error::invalid(format!("{name} must be non-empty with finite points and masses")));
        }
        if v.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::invalid(format!("{name} is not sorted")));
        }
        let s: f64 = v.iter().map(|e| e.1).sum();
        if !(s > 0.0) {
            return Err(Error::invalid(format!("{name} has zero mass")));
        }
        Ok(s)
    };
    let (sa, sb) = (norm(mu, "mu")?, norm(nu, "nu")?);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (mu[0].1 / sa, nu[0].1 / sb);
    let mut total = 0.0;
    while i < mu.len() && j < nu.len() {
        let w = ra.min(rb);
        total += w * (mu[i].0 - nu[j].0).abs().powf(p);
        ra -= w;
        rb -= w;
        if ra <= 1e-15 {
            i += 1;
            ra = mu.get(i).map_or(0.0, |e| e.1 / sa);
        }
        if rb <= 1e-15 {
            j += 1;
            rb = nu.get(j).map_or(0.0, |e| e.1 / sb);
        }
    }
    Ok(total.powf(1.0 / p))
}

/// `∫_a^b (c - Φ(z)) dz` on the standard scale, written on whichever tail
/// avoids cancellation.
fn signed_gap_integral(c: f64, a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        // c - Φ = (1 - Φ) - (1 - c)
        let upper = normal_cdf_integral(-a) - normal_cdf_integral(-b);
        upper - (1.0 - c) * (b - a)
    } else {
        c * (b - a) - (normal_cdf_integral(b) - normal_cdf_integral(a))
    }
}

fn abs_gap_integral(c: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let cross = normal_quantile(c);
    if cross > a && cross < b {
        signed_gap_integral(c, a, cross).abs() + signed_gap_integral(c, cross, b).abs()
    } else {
        signed_gap_integral(c, a, b).abs()
    }
}

const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn gauss_legendre(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    GL8_NODES
        .iter()
        .zip(GL8_WEIGHTS)
        .map(|(&x, w)| w * (f(c - h * x) + f(c + h * x)))
        .sum::<f64>()
        * h
}

/// `∫_a^b |y - z|^p φ(z) dz` by composite Gauss–Legendre, split at the kink
/// `z = y`, with the tails cut at `|z| = 12`.
fn abs_power_gaussian(y: f64, a: f64, b: f64, p: f64) -> f64 {
    const CUT: f64 = 12.0;
    const MAX_WIDTH: f64 = 0.25;
    let (a, b) = (a.max(-CUT - y.abs()), b.min(CUT + y.abs()));
    if b <= a {
        return 0.0;
    }
    let f = |z: f64| (y - z).abs().powf(p) * normal_pdf(z);
    let mut pieces = vec![a];
    if y > a && y < b {
        pieces.push(y);
    }
    pieces.push(b);
    pieces
        .windows(2)
        .map(|w| {
            let k = ((w[1] - w[0]) / MAX_WIDTH).ceil().max(1.0) as usize;
            let h = (w[1] - w[0]) / k as f64;
            (0..k)
                .map(|i| gauss_legendre(&f, w[0] + i as f64 * h, w[0] + (i + 1) as f64 * h))
                .sum::<f64>()
        })
        .sum()
}

/// `W_p^p(μ, N(mean, sd²))` for a uniformly weighted sorted 1D cloud `μ`.
///
/// `p = 1` is exact through `∫ |F_μ - Φ|` with the antiderivative of `Φ`;
/// `p = 2` is exact through the truncated Gaussian moments of each quantile
/// cell; other `p` use composite Gauss–Legendre per cell.
pub fn wasserstein_pow_to_gaussian(sorted: &[f64], mean: f64, sd: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    check_sorted(sorted, "points")?;
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::invalid("standard deviation must be positive"));
    }
    let n = sorted.len();
    let z: Vec<f64> = sorted.iter().map(|x| (x - mean) / sd).collect();
    let scale = sd.powf(p);
    if p == 1.0 {
        // Tails: ∫_{-∞}^{z_0} Φ and ∫_{z_{n-1}}^{∞} (1 - Φ).
        let mut total = normal_cdf_integral(z[0]) + normal_cdf_integral(-z[n - 1]);
        for i in 1..n {
            total += abs_gap_integral(i as f64 / n as f64, z[i - 1], z[i]);
        }
        return Ok(total * scale);
    }
    let bounds: Vec<f64> = (0..=n)
        .map(|i| match i {
            0 => f64::NEG_INFINITY,
            i if i == n => f64::INFINITY,
            i => normal_quantile(i as f64 / n as f64),
        })
        .collect();
    let mut total = 0.0;
    for i in 0..n {
        let (a, b) = (bounds[i], bounds[i + 1]);
        let y = z[i];
        total += if p == 2.0 {
            let (pa, pb) = (fin_pdf(a), fin_pdf(b));
            let mass = cell_mass(a, b);
            let i1 = pa - pb;
            let i2 = mass + fin_mul(a, pa) - fin_mul(b, pb);
            (y * y * mass - 2.0 * y * i1 + i2).max(0.0)
        } else {
            abs_power_gaussian(y, a, b, p)
        };
    }
    Ok(total * scale)
}

fn fin_pdf(x: f64) -> f64 {
    if x.is_finite() {
        normal_pdf(x)
    } else {
        0.0
    }
}

fn fin_mul(x: f64, pdf: f64) -> f64 {
    if x.is_finite() {
        x * pdf
    } else {
        0.0
    }
}

fn cell_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        normal_cdf(-a) - normal_cdf(-b)
    } else {
        normal_cdf(b) - normal_cdf(a)
    }
}

/// Largest instance accepted by [`wasserstein_exact_small`].
pub const MAX_ASSIGNMENT_SIZE: usize = 64;

/// Minimum-cost perfect matching on a square cost matrix (row-major), by the
/// shortest augmenting path Hungarian method with potentials. Returns the
/// column assigned to each row and the total cost.
pub fn optimal_assignment(cost: &[f64], n: usize) -> Result<(Vec<usize>, f64)> {
    if cost.len() != n * n {
        return Err(Error::invalid("cost matrix must be n x n"));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("cost matrix has non-finite entries"));
    }
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    // 1-based arrays; column 0 is a virtual column.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    let total = assignment.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok((assignment, total))
}

/// Exact `W_p` between two uniform clouds of equal size `<= 64` in `R^dim`
/// (row-major points), by optimal assignment on `|x_i - y_j|^p`.
pub fn wasserstein_exact_small(mu: &[f64], nu: &[f64], dim: usize, p: f64) -> Result<f64> {
    check_p(p)?;
    if dim == 0 || mu.len() % dim != 0 || nu.len() % dim != 0 {
        return Err(Error::invalid("point arrays must hold whole points"));
    }
    let n = mu.len() / dim;
    if n != nu.len() / dim {
        return Err(Error::invalid(format!(
            "support sizes differ: {n} vs {}",
            nu.len() / dim
        )));
    }
    if n == 0 || n > MAX_ASSIGNMENT_SIZE {
        return Err(Error::invalid(format!(
            "support size must lie in 1..={MAX_ASSIGNMENT_SIZE}, got {n}"
        )));
    }
    let cost = cost_matrix(mu, nu, dim, p);
    let (_, total) = optimal_assignment(&cost, n)?;
    Ok((total / n as f64).max(0.0).powf(1.0 / p))
}

pub(crate) fn cost_matrix(mu: &[f64], nu: &[f64], dim: usize, p: f64) -> Vec<f64> {
    let mut cost = Vec::with_capacity((mu.len() / dim) * (nu.len() / dim));
    for x in mu.chunks(dim) {
        for y in nu.chunks(dim) {
            let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            cost.push(d2.powf(0.5 * p));
        }
    }
    cost
}

/// Which branch of the `L_t(u)` lemma applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LtRegime {
    /// `p > d(1-β)`
    Above,
    /// `p = d(1-β)`
    Critical,
    /// `p < d(1-β)`
    Below,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LtValue {
    /// `Σ_ℓ 2^{-pℓ} min(u^{1/(2β)}, (u/t)^{1/2} 2^{dℓ(1-β)})`, exact.
    pub series: f64,
    /// The lemma's bound for the active regime, without its constant.
    pub case_bound: f64,
    pub regime: LtRegime,
    /// First level where the minimum is attained by `u^{1/(2β)}`.
    pub tipping_level: u32,
}

/// Relative tolerance used to decide `p = d(1-β)`.
const CRITICAL_TOL: f64 = 1e-12;

pub fn lt_function(u: f64, t: f64, p: f64, beta: f64, d: usize) -> Result<LtValue> {
    if !(u > 0.0 && u <= 1.0) || !(t >= 1.0 && t.is_finite()) || !(p > 0.0 && p.is_finite()) {
        return Err(Error::invalid("need u in (0,1], finite t >= 1 and p > 0"));
    }
    if !(beta > 0.0 && beta <= 0.5) || d == 0 {
        return Err(Error::invalid("need beta in (0, 1/2] and d >= 1"));
    }
    let a = u.powf(1.0 / (2.0 * beta));
    let b = (u / t).sqrt();
    let c = d as f64 * (1.0 - beta);
    // Smallest ℓ with a <= b 2^{cℓ}.
    let mut tip: u32 = if a <= b { 0 } else { ((a / b).log2() / c).ceil().max(0.0) as u32 };
    while tip > 0 && a <= b * 2f64.powf(c * (tip - 1) as f64) {
        tip -= 1;
    }
    while a > b * 2f64.powf(c * tip as f64) {
        tip += 1;
    }
    let head: f64 = (0..tip).map(|l| b * 2f64.powf((c - p) * l as f64)).sum();
    let tail = a * 2f64.powf(-p * tip as f64) / (1.0 - 2f64.powf(-p));
    let series = head + tail;

    let x = u * t.powf(beta / (1.0 - beta));
    let regime = if (p - c).abs() <= CRITICAL_TOL * c {
        LtRegime::Critical
    } else if p > c {
        LtRegime::Above
    } else {
        LtRegime::Below
    };
    let case_bound = match regime {
        LtRegime::Above => a.min(b),
        LtRegime::Critical => {
            if x <= 1.0 {
                a
            } else {
                b * (1.0 + x.ln())
            }
        }
        LtRegime::Below => a * 1f64.min(x.powf(-p / (2.0 * beta * d as f64))),
    };
    Ok(LtValue {
        series,
        case_bound,
        regime,
        tipping_level: tip,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_d_basics() {
        let a = [0.0, 1.0, 2.0];
        assert_eq!(wasserstein_1d_exact(&a, &a, 1.0).unwrap(), 0.0);
        for p in [1.0, 2.0, 3.5] {
            let w = wasserstein_1d_exact(&[1.0], &[-2.5], p).unwrap();
            assert!((w - 3.5).abs() < 1e-14);
        }
        assert!(wasserstein_1d_exact(&[1.0, 0.0], &[0.0], 1.0).is_err());
        assert!(wasserstein_1d_exact(&[0.0], &[0.0], 0.5).is_err());
    }

    #[test]
    fn unequal_sizes_merge() {
        // μ = {0, 1} uniform, ν = {0, 0.5, 1} uniform. Quantile functions on
        // [0,1/3): 0 vs 0, [1/3,1/2): 0 vs .5, [1/2,2/3): 1 vs .5, [2/3,1]: 1 vs 1.
        let w = wasserstein_1d_pow(&[0.0, 1.0], &[0.0, 0.5, 1.0], 1.0).unwrap();
        assert!((w - (1.0 / 6.0) * 0.5 * 2.0).abs() < 1e-15);
        let weighted = wasserstein_1d_weighted(&[(0.0, 1.0), (1.0, 1.0)], &[(0.0, 1.0), (0.5, 1.0), (1.0, 1.0)], 1.0).unwrap();
        assert!((weighted - w).abs() < 1e-14);
    }

    #[test]
    fn gaussian_single_point() {
        // W_1(δ_0, N(0,1)) = E|Z| = √(2/π); W_2² = 1.
        let w1 = wasserstein_pow_to_gaussian(&[0.0], 0.0, 1.0, 1.0).unwrap();
        assert!((w1 - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-14);
        let w2 = wasserstein_pow_to_gaussian(&[0.0], 0.0, 1.0, 2.0).unwrap();
        assert!((w2 - 1.0).abs() < 1e-14);
        // E|Z|^3 = 2√(2/π)
        let w3 = wasserstein_pow_to_gaussian(&[0.0], 0.0, 1.0, 3.0).unwrap();
        assert!((w3 - 2.0 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-9);
        // δ_m vs N(0, s²): W_2² = m² + s²
        let w = wasserstein_pow_to_gaussian(&[3.0], 1.0, 2.0, 2.0).unwrap();
        assert!((w - 8.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_quantile_cloud_is_close() {
        let n = 2000;
        let pts: Vec<f64> = (0..n).map(|i| normal_quantile((i as f64 + 0.5) / n as f64)).collect();
        for p in [1.0, 1.5, 2.0] {
            let w = wasserstein_pow_to_gaussian(&pts, 0.0, 1.0, p).unwrap();
            assert!(w < 5e-3, "p={p} w={w}");
        }
    }

    #[test]
    fn general_p_agrees_with_closed_forms() {
        let pts = [-1.3, -0.2, 0.1, 0.9, 2.4];
        for p in [1.0, 2.0] {
            let exact = wasserstein_pow_to_gaussian(&pts, 0.3, 1.7, p).unwrap();
            let z: Vec<f64> = pts.iter().map(|x| (x - 0.3) / 1.7).collect();
            let n = z.len();
            let mut quad = 0.0;
            for i in 0..n {
                let a = if i == 0 { f64::NEG_INFINITY } else { normal_quantile(i as f64 / n as f64) };
                let b = if i == n - 1 { f64::INFINITY } else { normal_quantile((i + 1) as f64 / n as f64) };
                quad += abs_power_gaussian(z[i], a, b, p);
            }
            quad *= 1.7f64.powf(p);
            assert!((exact - quad).abs() < 1e-9 * exact.max(1.0), "p={p}: {exact} vs {quad}");
        }
    }

    #[test]
    fn assignment_two_points() {
        let mu = [0.0, 0.0, 1.0, 0.0];
        let nu = [1.0, 0.1, 0.0, 0.1];
        let w = wasserstein_exact_small(&mu, &nu, 2, 2.0).unwrap();
        assert!((w - 0.1).abs() < 1e-14);
        assert_eq!(wasserstein_exact_small(&mu, &mu, 2, 1.0).unwrap(), 0.0);
        assert!(wasserstein_exact_small(&mu, &nu[..2], 2, 1.0).is_err());
        assert!(wasserstein_exact_small(&vec![0.0; 65], &vec![0.0; 65], 1, 1.0).is_err());
    }

    #[test]
    fn assignment_known_matrix() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let (a, c) = optimal_assignment(&cost, 3).unwrap();
        assert_eq!(c, 5.0);
        assert_eq!(a, vec![1, 0, 2]);
    }

    #[test]
    fn lt_regimes() {
        // d(1-β) = 1/2 for d = 1, β = 1/2
        assert_eq!(lt_function(0.5, 4.0, 1.0, 0.5, 1).unwrap().regime, LtRegime::Above);
        assert_eq!(lt_function(0.5, 4.0, 1.0, 0.5, 2).unwrap().regime, LtRegime::Critical);
        assert_eq!(lt_function(0.5, 4.0, 1.0, 0.5, 3).unwrap().regime, LtRegime::Below);
    }

    #[test]
    fn lt_series_matches_direct_sum() {
        for &(u, t, p, beta, d) in &[(0.3, 10.0, 1.0, 0.5, 1), (0.01, 1e4, 0.7, 0.25, 3), (1.0, 1.0, 2.0, 0.5, 4)] {
            let v = lt_function(u, t, p, beta, d).unwrap();
            let direct: f64 = (0..4000)
                .map(|l| {
                    let l = l as f64;
                    2f64.powf(-p * l)
                        * u.powf(1.0 / (2.0 * beta)).min((u / t).sqrt() * 2f64.powf(d as f64 * l * (1.0 - beta)))
                })
                .sum();
            assert!((v.series - direct).abs() < 1e-12 * direct, "{u} {t}");
        }
    }

    #[test]
    fn lt_critical_small_x_tips_at_zero() {
        // p = d(1-β) = 1, u t^{β/(1-β)} = u t <= 1
        let v = lt_function(0.01, 50.0, 1.0, 0.5, 2).unwrap();
        assert_eq!(v.tipping_level, 0);
        assert!(v.series <= 0.01f64 / (1.0 - 0.5) + 1e-15);
    }
}

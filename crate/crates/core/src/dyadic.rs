//! Sparse dyadic histograms over the ring/tiling system and the multiscale
//! transport sum built on them.
//!
//! Ring `n` is `B_n = (-2^n, 2^n]^d \ (-2^{n-1}, 2^{n-1}]^d` (`B_0 = (-1,1]^d`).
//! Level `ℓ` tiles `(-1, 1]^d` by `2^{dℓ}` half-open cubes of side `2^{1-ℓ}`,
//! and the cells of ring `n` are the scaled cubes `2^n F ∩ B_n`. Per
//! coordinate a level-ℓ cell is `(-1 + i 2^{1-ℓ}, -1 + (i+1) 2^{1-ℓ}]`; the
//! per-coordinate indices are Morton-interleaved so that the parent of a cell
//! at level `ℓ+1` is `cell >> d`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};
use crate::occupation::{ring_index, OccupationMeasure};
use crate::special::normal_cdf;

/// Largest supported `d * depth`.
pub const MAX_CELL_BITS: usize = 20;
pub const MAX_RING: u32 = 60;
pub const DEFAULT_MAX_RING: u32 = 8;

/// `12 / d` rounded down, at least 1.
pub fn default_depth(dim: usize) -> u32 {
    (12 / dim.max(1)).max(1) as u32
}

fn pack(ring: u32, level: u32, cell: u64) -> u64 {
    ((ring as u64) << 32) | ((level as u64) << 24) | cell
}

fn unpack(key: u64) -> (u32, u32, u64) {
    ((key >> 32) as u32, ((key >> 24) & 0xff) as u32, key & 0xff_ffff)
}

fn check_geometry(dim: usize, max_ring: u32, depth: u32) -> Result<()> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if dim * depth as usize > MAX_CELL_BITS {
        return Err(Error::invalid(format!(
            "depth {depth} too large for d = {dim}: need d * depth <= {MAX_CELL_BITS}"
        )));
    }
    if max_ring > MAX_RING {
        return Err(Error::invalid(format!("max_ring must be <= {MAX_RING}")));
    }
    Ok(())
}

/// Per-coordinate index of `y ∈ (-1, 1]` at `level >= 1`. Exact: `y 2^{ℓ-1}`
/// is a power-of-two scaling.
fn coordinate_cell(y: f64, level: u32) -> u64 {
    let half = (1u64 << (level - 1)) as f64;
    let i = (y * half).ceil() + half - 1.0;
    i as u64
}

fn interleave(indices: &[u64], level: u32) -> u64 {
    let mut code = 0u64;
    for bit in (0..level).rev() {
        for &i in indices {
            code = (code << 1) | ((i >> bit) & 1);
        }
    }
    code
}

fn deinterleave(code: u64, dim: usize, level: u32) -> Vec<u64> {
    let mut out = vec![0u64; dim];
    let total = dim as u32 * level;
    for pos in 0..total {
        let bit = (code >> (total - 1 - pos)) & 1;
        let c = pos as usize % dim;
        out[c] = (out[c] << 1) | bit;
    }
    out
}

/// Morton index of the level-`depth` cell of ring `n` containing `x`.
pub fn cell_of(x: &[f64], ring: u32, depth: u32) -> u64 {
    if depth == 0 {
        return 0;
    }
    let scale = 0.5f64.powi(ring as i32);
    let idx: Vec<u64> = x.iter().map(|&c| coordinate_cell(c * scale, depth)).collect();
    interleave(&idx, depth)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DyadicHistogram {
    dim: usize,
    max_ring: u32,
    depth: u32,
    cells: HashMap<u64, f64>,
    overflow_mass: f64,
}

impl DyadicHistogram {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_ring(&self) -> u32 {
        self.max_ring
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn overflow_mass(&self) -> f64 {
        self.overflow_mass
    }

    /// Mass of cell `cell` at `level` of ring `ring` (zero if absent).
    pub fn mass(&self, ring: u32, level: u32, cell: u64) -> f64 {
        self.cells.get(&pack(ring, level, cell)).copied().unwrap_or(0.0)
    }

    pub fn ring_mass(&self, ring: u32) -> f64 {
        self.mass(ring, 0, 0)
    }

    /// Nonzero cells as sorted `(ring, level, cell, mass)` tuples.
    pub fn entries(&self) -> Vec<(u32, u32, u64, f64)> {
        let mut keys: Vec<u64> = self.cells.keys().copied().collect();
        keys.sort_unstable();
        keys.into_iter()
            .map(|k| {
                let (n, l, c) = unpack(k);
                (n, l, c, self.cells[&k])
            })
            .collect()
    }

    pub fn nonzero_cells(&self) -> usize {
        self.cells.len()
    }

    fn same_geometry(&self, other: &DyadicHistogram) -> bool {
        self.dim == other.dim && self.max_ring == other.max_ring && self.depth == other.depth
    }

    /// Sparse triplet CSV with header `n,level,cell,mass`, rows sorted.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let err = |e: csv::Error| Error::Parse {
            what: "histogram csv",
            detail: e.to_string(),
        };
        w.write_record(["n", "level", "cell", "mass"]).map_err(err)?;
        for (n, l, c, m) in self.entries() {
            w.write_record([n.to_string(), l.to_string(), c.to_string(), m.to_string()])
                .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a triplet CSV; the geometry is supplied by the caller and the
    /// overflow mass is recovered as `1 - Σ ring masses`.
    pub fn read_csv(path: &Path, dim: usize, max_ring: u32, depth: u32) -> Result<Self> {
        check_geometry(dim, max_ring, depth)?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::Reader::from_reader(BufReader::new(file));
        let bad = |detail: String| Error::Parse {
            what: "histogram csv",
            detail,
        };
        let mut cells = HashMap::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != 4 {
                return Err(bad("expected 4 fields".into()));
            }
            let n: u32 = rec[0].parse().map_err(|_| bad("bad ring".into()))?;
            let l: u32 = rec[1].parse().map_err(|_| bad("bad level".into()))?;
            let c: u64 = rec[2].parse().map_err(|_| bad("bad cell".into()))?;
            let m: f64 = rec[3].parse().map_err(|_| bad("bad mass".into()))?;
            if n > max_ring || l > depth || c >= 1u64 << (dim as u32 * l) {
                return Err(bad(format!("cell ({n},{l},{c}) outside the geometry")));
            }
            cells.insert(pack(n, l, c), m);
        }
        let total: f64 = (0..=max_ring).map(|n| cells.get(&pack(n, 0, 0)).copied().unwrap_or(0.0)).sum();
        Ok(DyadicHistogram {
            dim,
            max_ring,
            depth,
            cells,
            overflow_mass: (1.0 - total).max(0.0),
        })
    }
}

/// Bins a uniformly weighted cloud into every level `0..=depth` of rings
/// `0..=max_ring`.
pub fn histogramize(measure: &OccupationMeasure, max_ring: u32, depth: u32) -> Result<DyadicHistogram> {
    histogramize_points(measure.points(), measure.dim(), max_ring, depth)
}

pub fn histogramize_points(points: &[f64], dim: usize, max_ring: u32, depth: u32) -> Result<DyadicHistogram> {
    check_geometry(dim, max_ring, depth)?;
    if points.is_empty() || points.len() % dim != 0 {
        return Err(Error::invalid("point cloud must be non-empty"));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("point with a non-finite coordinate"));
    }
    let count = points.len() / dim;
    // Accumulate integer counts so that the nesting holds exactly in counts.
    let mut counts: HashMap<u64, u64> = HashMap::new();
    let mut overflow = 0u64;
    for x in points.chunks(dim) {
        let n = ring_index(x);
        if n > max_ring {
            overflow += 1;
            continue;
        }
        let leaf = cell_of(x, n, depth);
        for level in 0..=depth {
            let cell = leaf >> (dim as u32 * (depth - level));
            *counts.entry(pack(n, level, cell)).or_insert(0) += 1;
        }
    }
    let w = 1.0 / count as f64;
    Ok(DyadicHistogram {
        dim,
        max_ring,
        depth,
        cells: counts.into_iter().map(|(k, c)| (k, c as f64 * w)).collect(),
        overflow_mass: overflow as f64 * w,
    })
}

/// Exact histogram of `N(mean, diag(var))`: each cell mass is
/// `P(box) - P(box ∩ inner cube)` with product-form box probabilities.
pub fn gaussian_histogram(mean: &[f64], var: &[f64], max_ring: u32, depth: u32) -> Result<DyadicHistogram> {
    let dim = mean.len();
    check_geometry(dim, max_ring, depth)?;
    if var.len() != dim || var.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("variances must be positive, one per coordinate"));
    }
    let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    // P(a < X_c <= b)
    let interval = |c: usize, a: f64, b: f64| -> f64 {
        if b <= a {
            return 0.0;
        }
        let za = (a - mean[c]) / sd[c];
        let zb = (b - mean[c]) / sd[c];
        if za > 0.0 {
            normal_cdf(-za) - normal_cdf(-zb)
        } else {
            normal_cdf(zb) - normal_cdf(za)
        }
    };
    let side_cells = 1u64 << depth;
    let leaves = 1u64 << (dim as u32 * depth);
    let mut cells: HashMap<u64, f64> = HashMap::new();
    let mut total = 0.0;
    for n in 0..=max_ring {
        let scale = 2f64.powi(n as i32);
        let inner = if n == 0 { 0.0 } else { scale / 2.0 };
        let width = 2.0 * scale / side_cells as f64;
        // Per-coordinate probabilities of each interval and of its overlap
        // with the inner cube.
        let outer_p: Vec<Vec<f64>> = (0..dim)
            .map(|c| {
                (0..side_cells)
                    .map(|i| interval(c, -scale + i as f64 * width, -scale + (i + 1) as f64 * width))
                    .collect()
            })
            .collect();
        let inner_p: Vec<Vec<f64>> = (0..dim)
            .map(|c| {
                (0..side_cells)
                    .map(|i| {
                        let a = (-scale + i as f64 * width).max(-inner);
                        let b = (-scale + (i + 1) as f64 * width).min(inner);
                        interval(c, a, b)
                    })
                    .collect()
            })
            .collect();
        let mut level_masses: HashMap<u64, f64> = HashMap::new();
        for leaf in 0..leaves {
            let idx = deinterleave(leaf, dim, depth);
            let mut po = 1.0;
            let mut pi = 1.0;
            for c in 0..dim {
                po *= outer_p[c][idx[c] as usize];
                pi *= inner_p[c][idx[c] as usize];
            }
            let m = (po - pi).max(0.0);
            if m > 0.0 {
                level_masses.insert(leaf, m);
            }
        }
        for level in (0..=depth).rev() {
            let mut parents: HashMap<u64, f64> = HashMap::new();
            for (&cell, &m) in &level_masses {
                cells.insert(pack(n, level, cell), m);
                if level > 0 {
                    *parents.entry(cell >> dim).or_insert(0.0) += m;
                }
            }
            if level == 0 {
                total += level_masses.get(&0).copied().unwrap_or(0.0);
            }
            level_masses = parents;
        }
    }
    Ok(DyadicHistogram {
        dim,
        max_ring,
        depth,
        cells,
        overflow_mass: (1.0 - total).max(0.0),
    })
}

/// Moment information used to bound the rings beyond `max_ring`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailControl {
    /// Moment order `q`; must exceed `p`.
    pub q: f64,
    pub moment_first: f64,
    pub moment_second: f64,
}

/// Truncated multiscale sum and the bounds on what truncation left out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiscaleSum {
    pub value: f64,
    /// Bound on the levels `ℓ > depth`, from `Σ_F |μ-ν| <= μ(B_n) + ν(B_n)`.
    pub level_residual: f64,
    /// Bound on the rings `n > max_ring`, from `μ(B_n) <= M_μ(q) 2^{-(n-1)q}`;
    /// infinite when there is overflow mass and no tail control.
    pub ring_residual: f64,
}

impl MultiscaleSum {
    pub fn upper(&self) -> f64 {
        self.value + self.level_residual + self.ring_residual
    }
}

/// `Σ_{n<=N} 2^{pn} Σ_{ℓ<=L} 2^{-pℓ} Σ_F |μ(2^n F ∩ B_n) - ν(2^n F ∩ B_n)|`.
pub fn fg_multiscale_sum(h1: &DyadicHistogram, h2: &DyadicHistogram, p: f64, tail: Option<TailControl>) -> Result<MultiscaleSum> {
    if !h1.same_geometry(h2) {
        return Err(Error::invalid("histograms have different geometry"));
    }
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::invalid(format!("p must be positive, got {p}")));
    }
    let mut per_ring = vec![0.0; h1.max_ring as usize + 1];
    // Iterate keys in sorted order so the floating-point sum is reproducible
    // regardless of hash order.
    let mut keys: Vec<u64> = h1.cells.keys().chain(h2.cells.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    for k in keys {
        let a = h1.cells.get(&k).copied().unwrap_or(0.0);
        let b = h2.cells.get(&k).copied().unwrap_or(0.0);
        if a != b {
            let (n, l, _) = unpack(k);
            per_ring[n as usize] += 2f64.powf(-p * l as f64) * (a - b).abs();
        }
    }
    let value: f64 = per_ring
        .iter()
        .enumerate()
        .map(|(n, s)| 2f64.powf(p * n as f64) * s)
        .sum();
    let geo = 1.0 / (1.0 - 2f64.powf(-p));
    let level_residual: f64 = (0..=h1.max_ring)
        .map(|n| 2f64.powf(p * n as f64) * (h1.ring_mass(n) + h2.ring_mass(n)))
        .sum::<f64>()
        * 2f64.powf(-p * (h1.depth + 1) as f64)
        * geo;
    let ring_residual = if h1.overflow_mass == 0.0 && h2.overflow_mass == 0.0 {
        0.0
    } else {
        match tail {
            Some(t) if t.q > p => {
                let n1 = (h1.max_ring + 1) as f64;
                (t.moment_first + t.moment_second) * 2f64.powf(t.q) * geo * 2f64.powf((p - t.q) * n1)
                    / (1.0 - 2f64.powf(p - t.q))
            }
            _ => f64::INFINITY,
        }
    };
    Ok(MultiscaleSum {
        value,
        level_residual,
        ring_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_cells_half_open() {
        // level 1: (-1,0] -> 0, (0,1] -> 1
        assert_eq!(coordinate_cell(0.0, 1), 0);
        assert_eq!(coordinate_cell(1e-300, 1), 1);
        assert_eq!(coordinate_cell(1.0, 1), 1);
        assert_eq!(coordinate_cell(-0.999, 1), 0);
        // level 2: (-1,-.5], (-.5,0], (0,.5], (.5,1]
        assert_eq!(coordinate_cell(-0.5, 2), 0);
        assert_eq!(coordinate_cell(0.5, 2), 2);
        assert_eq!(coordinate_cell(0.75, 2), 3);
    }

    #[test]
    fn morton_round_trip() {
        for code in 0..64u64 {
            assert_eq!(interleave(&deinterleave(code, 3, 2), 2), code);
        }
    }

    #[test]
    fn parent_is_shift() {
        let x = [0.3, -0.7];
        for level in 1..6 {
            let child = cell_of(&x, 0, level + 1);
            assert_eq!(child >> 2, cell_of(&x, 0, level));
        }
    }

    #[test]
    fn single_point_one_cell_per_level() {
        let h = histogramize_points(&[0.1, 0.1], 2, 4, 5).unwrap();
        assert_eq!(h.ring_mass(0), 1.0);
        assert_eq!(h.nonzero_cells(), 6);
        for level in 0..=5 {
            let n = h.entries().iter().filter(|e| e.1 == level).count();
            assert_eq!(n, 1);
        }
    }

    #[test]
    fn geometry_guard() {
        assert!(histogramize_points(&[0.0, 0.0], 2, 8, 11).is_err());
        assert!(histogramize_points(&[f64::NAN], 1, 8, 4).is_err());
        assert_eq!(default_depth(1), 12);
        assert_eq!(default_depth(3), 4);
        assert_eq!(default_depth(5), 2);
    }

    #[test]
    fn two_diracs_enumeration() {
        let a = histogramize_points(&[0.0], 1, 8, 10).unwrap();
        let b = histogramize_points(&[0.5], 1, 8, 10).unwrap();
        let s = fg_multiscale_sum(&a, &b, 1.0, None).unwrap();
        let want: f64 = (1..=10).map(|l| 2.0 * 0.5f64.powi(l)).sum();
        assert!((s.value - want).abs() < 1e-15);
        assert_eq!(s.ring_residual, 0.0);
        assert_eq!(fg_multiscale_sum(&a, &a, 1.0, None).unwrap().value, 0.0);
    }

    #[test]
    fn overflow_without_tail_is_unbounded() {
        let a = histogramize_points(&[1000.0], 1, 3, 2).unwrap();
        let b = histogramize_points(&[0.0], 1, 3, 2).unwrap();
        assert_eq!(a.overflow_mass(), 1.0);
        let s = fg_multiscale_sum(&a, &b, 1.0, None).unwrap();
        assert!(s.ring_residual.is_infinite());
        let t = TailControl { q: 2.0, moment_first: 1e6, moment_second: 0.0 };
        assert!(fg_multiscale_sum(&a, &b, 1.0, Some(t)).unwrap().ring_residual.is_finite());
    }

    #[test]
    fn gaussian_histogram_is_consistent() {
        let h = gaussian_histogram(&[0.0], &[1.0], 8, 6).unwrap();
        let total: f64 = (0..=8).map(|n| h.ring_mass(n)).sum();
        assert!((total + h.overflow_mass() - 1.0).abs() < 1e-12);
        // ring 0 holds P(-1 < X <= 1)
        assert!((h.ring_mass(0) - (normal_cdf(1.0) - normal_cdf(-1.0))).abs() < 1e-14);
        // level 1 of ring 0: (-1, 0] has half of it
        assert!((h.mass(0, 1, 0) - 0.5 * h.ring_mass(0)).abs() < 1e-14);
        // ring 1 cells inside the inner cube are empty
        assert_eq!(h.mass(1, 2, 1), 0.0);
        assert!(h.mass(1, 2, 0) > 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let h = histogramize_points(&[0.1, -0.2, 3.0, 0.5, 0.5, 0.5], 2, 4, 3).unwrap();
        let p = dir.path().join("h.csv");
        h.write_csv(&p).unwrap();
        let back = DyadicHistogram::read_csv(&p, 2, 4, 3).unwrap();
        assert_eq!(back.entries(), h.entries());
        assert!((back.overflow_mass() - h.overflow_mass()).abs() < 1e-15);
    }
}

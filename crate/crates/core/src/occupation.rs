//! Occupation measures `ν_t = (1/t) ∫ δ_{X_s} ds`, discretized on the Euler
//! grid, with moments, ring masses and a point-cloud file format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sde::PathSample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupationProvenance {
    pub seed: Option<u64>,
    pub burn_in: f64,
}

/// Uniformly weighted point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationMeasure {
    points: Vec<f64>,
    dim: usize,
    t_effective: f64,
    provenance: OccupationProvenance,
}

impl OccupationMeasure {
    /// Wrap an existing cloud (row-major, `dim` coordinates per point).
    pub fn from_points(points: Vec<f64>, dim: usize, t_effective: f64, provenance: OccupationProvenance) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(Error::invalid("point cloud must be non-empty with a whole number of points"));
        }
        if !(t_effective > 0.0) {
            return Err(Error::invalid(format!("t_effective must be positive, got {t_effective}")));
        }
        Ok(OccupationMeasure {
            points,
            dim,
            t_effective,
            provenance,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.count() as f64
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn t_effective(&self) -> f64 {
        self.t_effective
    }

    pub fn provenance(&self) -> OccupationProvenance {
        self.provenance
    }

    /// `M_μ(q) = ∫ |ξ|^q μ(dξ)` with the Euclidean norm.
    pub fn moment(&self, q: f64) -> f64 {
        moment(&self.points, self.dim, q)
    }

    pub fn ring_mass(&self, n: u32) -> f64 {
        let hits = self.points.chunks(self.dim).filter(|x| ring_index(x) == n).count();
        hits as f64 / self.count() as f64
    }

    /// Masses of rings `0..=max_ring`; the last entry also absorbs nothing —
    /// mass beyond `max_ring` is returned separately.
    pub fn ring_masses(&self, max_ring: u32) -> (Vec<f64>, f64) {
        let mut masses = vec![0.0; max_ring as usize + 1];
        let mut overflow = 0.0;
        let w = self.weight();
        for x in self.points.chunks(self.dim) {
            let n = ring_index(x);
            if n <= max_ring {
                masses[n as usize] += w;
            } else {
                overflow += w;
            }
        }
        (masses, overflow)
    }

    /// The coordinates sorted ascending; only meaningful for `dim == 1`.
    pub fn sorted_1d(&self) -> Result<Vec<f64>> {
        if self.dim != 1 {
            return Err(Error::invalid(format!("expected a 1-dimensional measure, got d = {}", self.dim)));
        }
        let mut v = self.points.clone();
        v.sort_by(f64::total_cmp);
        Ok(v)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(BufWriter::new(file));
        let csv_err = |e: csv::Error| Error::Parse {
            what: "point cloud csv",
            detail: e.to_string(),
        };
        w.write_record([self.dim.to_string(), self.count().to_string(), self.t_effective.to_string()])
            .map_err(csv_err)?;
        for x in self.points.chunks(self.dim) {
            w.write_record(x.iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(BufReader::new(file));
        let bad = |detail: String| Error::Parse {
            what: "point cloud csv",
            detail,
        };
        let mut records = r.records();
        let header = records
            .next()
            .ok_or_else(|| bad("missing header".into()))?
            .map_err(|e| bad(e.to_string()))?;
        if header.len() != 3 {
            return Err(bad("header must be d,count,t_effective".into()));
        }
        let dim: usize = header[0].parse().map_err(|_| bad("bad d".into()))?;
        let count: usize = header[1].parse().map_err(|_| bad("bad count".into()))?;
        let t_eff: f64 = header[2].parse().map_err(|_| bad("bad t_effective".into()))?;
        let mut points = Vec::with_capacity(dim * count);
        for rec in records {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != dim {
                return Err(bad(format!("row has {} coordinates, expected {dim}", rec.len())));
            }
            for f in rec.iter() {
                points.push(f.parse::<f64>().map_err(|_| bad(format!("bad coordinate {f:?}")))?);
            }
        }
        if points.len() != dim * count {
            return Err(bad(format!("expected {count} rows, found {}", points.len() / dim.max(1))));
        }
        Self::from_points(
            points,
            dim,
            t_eff,
            OccupationProvenance {
                seed: None,
                burn_in: 0.0,
            },
        )
    }

    /// Little-endian binary: magic `EWPC`, `u32` d, `u64` count, `f64`
    /// t_effective, then `d * count` `f64` coordinates.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
        put(BINARY_MAGIC)?;
        put(&(self.dim as u32).to_le_bytes())?;
        put(&(self.count() as u64).to_le_bytes())?;
        put(&self.t_effective.to_le_bytes())?;
        for v in &self.points {
            put(&v.to_le_bytes())?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let bad = |detail: &str| Error::Parse {
            what: "point cloud binary",
            detail: detail.to_string(),
        };
        if bytes.len() < 24 || &bytes[..4] != BINARY_MAGIC {
            return Err(bad("missing header"));
        }
        let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let t_eff = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let body = &bytes[24..];
        if body.len() != 8 * dim * count {
            return Err(bad("body length does not match header"));
        }
        let points = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_points(
            points,
            dim,
            t_eff,
            OccupationProvenance {
                seed: None,
                burn_in: 0.0,
            },
        )
    }
}

const BINARY_MAGIC: &[u8; 4] = b"EWPC";

/// Uniform weights on every `thinning`-th grid state with `burn_in <= time`,
/// starting at the first retained state. Both window endpoints are kept.
pub fn build_occupation(path: &PathSample, burn_in: f64, thinning: usize) -> Result<OccupationMeasure> {
    build_occupation_window(path, burn_in, path.len() - 1, thinning)
}

/// As [`build_occupation`], restricted to grid indices `..= end`. Used for the
/// prefix windows `ν_{t_k}` of one long path.
pub fn build_occupation_window(path: &PathSample, burn_in: f64, end: usize, thinning: usize) -> Result<OccupationMeasure> {
    if thinning == 0 {
        return Err(Error::invalid("thinning must be at least 1"));
    }
    if !(burn_in >= 0.0) {
        return Err(Error::invalid("burn-in must be non-negative"));
    }
    if end >= path.len() {
        return Err(Error::invalid("window end beyond the path"));
    }
    let times = path.times();
    let horizon = times[end];
    let slack = 1e-9 * (times.get(1).copied().unwrap_or(1.0) - times[0]).abs();
    if !(burn_in < horizon - slack) {
        return Err(Error::invalid(format!(
            "empty occupation window: burn-in {burn_in} is not below the horizon {horizon}"
        )));
    }
    let start = times[..=end].partition_point(|&t| t < burn_in - slack);
    let dim = path.dim();
    let mut points = Vec::with_capacity(((end - start) / thinning + 1) * dim);
    for k in (start..=end).step_by(thinning) {
        points.extend_from_slice(path.state(k));
    }
    OccupationMeasure::from_points(
        points,
        dim,
        horizon - burn_in,
        OccupationProvenance {
            seed: path.provenance().seed,
            burn_in,
        },
    )
}

pub fn moment(points: &[f64], dim: usize, q: f64) -> f64 {
    let n = points.len() / dim;
    if n == 0 {
        return 0.0;
    }
    let total: f64 = points
        .chunks(dim)
        .map(|x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            if r2 == 0.0 {
                0.0
            } else {
                r2.powf(0.5 * q)
            }
        })
        .sum();
    total / n as f64
}

/// Smallest `n >= 0` with `c ∈ (-2^n, 2^n]` for one coordinate.
pub(crate) fn coordinate_ring(c: f64) -> u32 {
    let mut n = 0u32;
    let mut bound = 1.0f64;
    while !(c <= bound && -c < bound) {
        bound *= 2.0;
        n += 1;
    }
    n
}

/// Index of the ℓ∞ ring `B_n = (-2^n, 2^n]^d \ (-2^{n-1}, 2^{n-1}]^d` (with
/// `B_0 = (-1, 1]^d`) containing `x`. Coordinates must be finite.
pub fn ring_index(x: &[f64]) -> u32 {
    x.iter().map(|&c| coordinate_ring(c)).max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::Provenance;

    fn path_from(states: Vec<f64>, dim: usize, dt: f64) -> PathSample {
        let n = states.len() / dim;
        PathSample::new(
            (0..n).map(|k| k as f64 * dt).collect(),
            states,
            dim,
            Provenance {
                drift: "test".into(),
                diffusion: "test".into(),
                noise: "none".into(),
                seed: Some(1),
            },
        )
        .unwrap()
    }

    #[test]
    fn constant_path_gives_dirac() {
        let p = path_from(vec![2.0, -1.0].repeat(10), 2, 0.5);
        let m = build_occupation(&p, 1.0, 1).unwrap();
        assert!(m.points().chunks(2).all(|x| x == [2.0, -1.0]));
        assert_eq!(m.t_effective(), 3.5);
    }

    #[test]
    fn four_states_four_points() {
        let p = path_from(vec![0.0, 1.0, 2.0, 3.0], 1, 1.0);
        let m = build_occupation(&p, 0.0, 1).unwrap();
        assert_eq!(m.count(), 4);
        assert_eq!(m.weight(), 0.25);
        assert_eq!(m.t_effective(), 3.0);
        let thin = build_occupation(&p, 0.0, 2).unwrap();
        assert_eq!(thin.points(), &[0.0, 2.0]);
    }

    #[test]
    fn empty_window_is_rejected() {
        let p = path_from(vec![0.0, 1.0, 2.0], 1, 1.0);
        assert!(build_occupation(&p, 2.0, 1).is_err());
        assert!(build_occupation(&p, 0.0, 0).is_err());
    }

    #[test]
    fn burn_in_is_inclusive() {
        let p = path_from((0..9).map(f64::from).collect(), 1, 0.25);
        let m = build_occupation(&p, 1.0, 1).unwrap();
        assert_eq!(m.points(), &[4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(m.t_effective(), 1.0);
    }

    #[test]
    fn moments() {
        let m = OccupationMeasure::from_points(vec![-1.0, 1.0], 1, 1.0, OccupationProvenance { seed: None, burn_in: 0.0 }).unwrap();
        assert_eq!(m.moment(2.0), 1.0);
        assert_eq!(moment(&[0.0, 0.0], 2, 0.5), 0.0);
    }

    #[test]
    fn rings() {
        assert_eq!(ring_index(&[0.0, 0.0]), 0);
        assert_eq!(ring_index(&[1.0]), 0);
        assert_eq!(ring_index(&[-1.0]), 1);
        assert_eq!(ring_index(&[1.5, 0.0, 0.0]), 1);
        assert_eq!(ring_index(&[2.0]), 1);
        assert_eq!(ring_index(&[2.0000001]), 2);
        assert_eq!(ring_index(&[0.2, -300.0]), 9);
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = OccupationMeasure::from_points(
            vec![0.1, -2.5, 1e-300, 3.0 / 7.0],
            2,
            2.5,
            OccupationProvenance { seed: None, burn_in: 0.0 },
        )
        .unwrap();
        let c = dir.path().join("m.csv");
        m.write_csv(&c).unwrap();
        assert_eq!(OccupationMeasure::read_csv(&c).unwrap(), m);
        let b = dir.path().join("m.bin");
        m.write_binary(&b).unwrap();
        assert_eq!(OccupationMeasure::read_binary(&b).unwrap(), m);
    }
}

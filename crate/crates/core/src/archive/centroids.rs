use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ArchiveError;
use crate::rng;

/// Lloyd iterations are capped here; most layouts settle well before.
pub const LLOYD_MAX_ITERATIONS: usize = 100;
/// Uniform samples drawn per centroid for the Lloyd fit.
pub const SAMPLES_PER_CENTROID: usize = 100;

/// Cell centres of the archive, `count x dim` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CentroidsRepr", into = "CentroidsRepr")]
pub struct Centroids {
    dim: usize,
    points: Vec<f64>,
    #[serde(skip)]
    index: SortedIndex,
}

#[derive(Serialize, Deserialize)]
struct CentroidsRepr {
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl TryFrom<CentroidsRepr> for Centroids {
    type Error = ArchiveError;

    fn try_from(r: CentroidsRepr) -> Result<Self, Self::Error> {
        if r.points.iter().any(|p| p.len() != r.dim) {
            return Err(ArchiveError::InvalidCentroids("ragged points".into()));
        }
        Centroids::from_points(r.dim, r.points.concat())
    }
}

impl From<Centroids> for CentroidsRepr {
    fn from(c: Centroids) -> Self {
        CentroidsRepr {
            dim: c.dim,
            points: c.points.chunks(c.dim).map(<[f64]>::to_vec).collect(),
        }
    }
}

/// Centroids sorted by their first coordinate. A nearest-neighbour query
/// walks outwards from the query's position in that order and stops once the
/// first-coordinate gap alone exceeds the best distance found.
#[derive(Debug, Clone, Default, PartialEq)]
struct SortedIndex {
    order: Vec<usize>,
    keys: Vec<f64>,
}

impl SortedIndex {
    fn build(dim: usize, points: &[f64]) -> Self {
        let n = points.len() / dim;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            points[a * dim]
                .total_cmp(&points[b * dim])
                .then(a.cmp(&b))
        });
        let keys = order.iter().map(|&i| points[i * dim]).collect();
        SortedIndex { order, keys }
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_bounds(bounds: &[(f64, f64)]) -> Result<(), ArchiveError> {
    if bounds.is_empty() {
        return Err(ArchiveError::InvalidBounds("no dimensions".into()));
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !lo.is_finite() || !hi.is_finite() || hi <= lo {
            return Err(ArchiveError::InvalidBounds(format!(
                "dimension {i}: [{lo}, {hi}] is empty or degenerate"
            )));
        }
    }
    Ok(())
}

impl Centroids {
    pub fn from_points(dim: usize, points: Vec<f64>) -> Result<Self, ArchiveError> {
        if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(ArchiveError::InvalidCentroids(format!(
                "{} values do not form {dim}-dimensional points",
                points.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(ArchiveError::InvalidCentroids("non-finite centroid".into()));
        }
        let index = SortedIndex::build(dim, &points);
        Ok(Centroids { dim, points, index })
    }

    /// CVT by Lloyd's algorithm over `SAMPLES_PER_CENTROID * count` uniform
    /// samples in `bounds`, started from the first `count` samples.
    pub fn generate(count: usize, bounds: &[(f64, f64)], seed: u64) -> Result<Self, ArchiveError> {
        if count == 0 {
            return Err(ArchiveError::InvalidCentroids("count must be at least 1".into()));
        }
        check_bounds(bounds)?;
        let dim = bounds.len();
        let n_samples = SAMPLES_PER_CENTROID * count;
        let mut rng = rng::stream(seed, 0, count as u64, rng::Purpose::Centroids);
        let samples: Vec<f64> = (0..n_samples)
            .flat_map(|_| bounds.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect::<Vec<_>>())
            .collect();

        let mut points = samples[..count * dim].to_vec();
        let mut assignment = vec![usize::MAX; n_samples];
        let mut sums = vec![0.0; count * dim];
        let mut counts = vec![0usize; count];
        for _ in 0..LLOYD_MAX_ITERATIONS {
            let current = Centroids::from_points(dim, points.clone())?;
            let mut changed = 0usize;
            for (i, s) in samples.chunks_exact(dim).enumerate() {
                let c = current.cell_index(s);
                if assignment[i] != c {
                    assignment[i] = c;
                    changed += 1;
                }
            }
            if changed == 0 {
                break;
            }
            sums.fill(0.0);
            counts.fill(0);
            for (s, &c) in samples.chunks_exact(dim).zip(&assignment) {
                counts[c] += 1;
                for (acc, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(s) {
                    *acc += v;
                }
            }
            for c in 0..count {
                // empty cells keep their previous position
                if counts[c] > 0 {
                    for d in 0..dim {
                        points[c * dim + d] = sums[c * dim + d] / counts[c] as f64;
                    }
                }
            }
        }
        Centroids::from_points(dim, points)
    }

    /// Regular grid of cell centres, `bins_per_dim` per dimension.
    pub fn grid(bins_per_dim: usize, bounds: &[(f64, f64)]) -> Result<Self, ArchiveError> {
        if bins_per_dim == 0 {
            return Err(ArchiveError::InvalidCentroids("bins_per_dim must be at least 1".into()));
        }
        check_bounds(bounds)?;
        let dim = bounds.len();
        let total = bins_per_dim.pow(dim as u32);
        let mut points = Vec::with_capacity(total * dim);
        for cell in 0..total {
            let mut rest = cell;
            for &(lo, hi) in bounds {
                let b = rest % bins_per_dim;
                rest /= bins_per_dim;
                points.push(lo + (b as f64 + 0.5) * (hi - lo) / bins_per_dim as f64);
            }
        }
        Centroids::from_points(dim, points)
    }

    /// Process-wide memoized [`generate`](Self::generate).
    pub fn shared(count: usize, bounds: &[(f64, f64)], seed: u64) -> Result<Arc<Self>, ArchiveError> {
        static CACHE: OnceLock<Mutex<HashMap<String, Arc<Centroids>>>> = OnceLock::new();
        let key = cache_key(count, bounds, seed);
        let cache = CACHE.get_or_init(Default::default);
        if let Some(c) = cache.lock().unwrap().get(&key) {
            return Ok(Arc::clone(c));
        }
        let c = Arc::new(Centroids::generate(count, bounds, seed)?);
        cache.lock().unwrap().insert(key, Arc::clone(&c));
        Ok(c)
    }

    /// Read centroids from `dir` if a file for `(count, bounds, seed)` exists,
    /// otherwise generate and write it.
    pub fn load_or_generate(
        dir: &Path,
        count: usize,
        bounds: &[(f64, f64)],
        seed: u64,
    ) -> Result<Self, ArchiveError> {
        let path = Self::cache_path(dir, count, bounds, seed);
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(c) = serde_json::from_str::<Centroids>(&text) {
                if c.len() == count && c.dim() == bounds.len() {
                    return Ok(c);
                }
            }
            log::warn!("ignoring unreadable centroid cache {}", path.display());
        }
        let c = Centroids::generate(count, bounds, seed)?;
        std::fs::create_dir_all(dir)?;
        std::fs::write(&path, serde_json::to_string(&c)?)?;
        Ok(c)
    }

    pub fn cache_path(dir: &Path, count: usize, bounds: &[(f64, f64)], seed: u64) -> PathBuf {
        dir.join(format!("centroids_{}.json", cache_key(count, bounds, seed)))
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Nearest centroid by Euclidean distance; ties go to the lowest index.
    pub fn cell_index(&self, d: &[f64]) -> usize {
        debug_assert_eq!(d.len(), self.dim);
        let SortedIndex { order, keys } = &self.index;
        let start = keys.partition_point(|&k| k < d[0]);
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        let consider = |i: usize, best: &mut usize, best_d: &mut f64| {
            let dist = sq_dist(self.point(i), d);
            if dist < *best_d || (dist == *best_d && i < *best) {
                *best_d = dist;
                *best = i;
            }
        };
        let (mut up, mut down) = (start, start);
        loop {
            let mut progressed = false;
            if up < order.len() {
                let gap = keys[up] - d[0];
                if gap * gap <= best_d {
                    consider(order[up], &mut best, &mut best_d);
                    up += 1;
                    progressed = true;
                } else {
                    up = order.len();
                }
            }
            if down > 0 {
                let gap = d[0] - keys[down - 1];
                if gap * gap <= best_d {
                    consider(order[down - 1], &mut best, &mut best_d);
                    down -= 1;
                    progressed = true;
                } else {
                    down = 0;
                }
            }
            if !progressed {
                break;
            }
        }
        best
    }
}

fn cache_key(count: usize, bounds: &[(f64, f64)], seed: u64) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &(lo, hi) in bounds {
        for b in lo.to_bits().to_le_bytes().into_iter().chain(hi.to_bits().to_le_bytes()) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("c{count}_d{}_s{seed}_{h:016x}", bounds.len())
}

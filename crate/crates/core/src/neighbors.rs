//! Exact Euclidean nearest-neighbor search.
//!
//! Candidates are screened with the expansion `|a-b|^2 = |a|^2 + |b|^2 - 2 a.b`
//! on mean-centered coordinates, with a rigorous floating-point error bound
//! on every screened value. Anything that cannot be excluded by the bound
//! is re-measured with [`squared_distance`], so the final table is the same
//! as a naive double loop over `squared_distance`, including ties (broken by
//! the smaller index).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{IdError, Result};
use crate::scalar::Scalar;
use crate::tensor_io::PointCloud;

const QUERY_BLOCK: usize = 16;

/// Per-point sorted k-NN distances and indices (self excluded).
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborTable {
    n: usize,
    k: usize,
    dist: Vec<f64>,
    idx: Vec<usize>,
}

impl NeighborTable {
    /// Assembles a table from row-major `n x k` buffers, checking the
    /// ordering invariants.
    pub fn from_parts(n: usize, k: usize, dist: Vec<f64>, idx: Vec<usize>) -> Result<Self> {
        if dist.len() != n * k || idx.len() != n * k {
            return Err(IdError::Shape(format!(
                "neighbor buffers do not match ({n}, {k})"
            )));
        }
        for i in 0..n {
            let row = &dist[i * k..(i + 1) * k];
            if row.iter().any(|d| !d.is_finite() || *d < 0.0) {
                return Err(IdError::Data {
                    row: i,
                    message: "neighbor distances must be finite and non-negative".into(),
                });
            }
            if row.windows(2).any(|w| w[0] > w[1]) {
                return Err(IdError::Data {
                    row: i,
                    message: "neighbor distances are not sorted".into(),
                });
            }
            if idx[i * k..(i + 1) * k].contains(&i) {
                return Err(IdError::Data {
                    row: i,
                    message: "a point cannot be its own neighbor".into(),
                });
            }
        }
        Ok(Self { n, k, dist, idx })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Sorted distances from point `i` to its neighbors.
    pub fn distances(&self, i: usize) -> &[f64] {
        &self.dist[i * self.k..(i + 1) * self.k]
    }

    pub fn indices(&self, i: usize) -> &[usize] {
        &self.idx[i * self.k..(i + 1) * self.k]
    }

    /// `r_j(i)`: distance from `i` to its `j`-th neighbor, 1-based.
    pub fn r(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.k + j - 1]
    }

    /// Keeps only the first `k` neighbors of every point.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k {
            return Err(IdError::Parameter(format!(
                "cannot truncate a {}-NN table to k={k}",
                self.k
            )));
        }
        if k == self.k {
            return Ok(self.clone());
        }
        let mut dist = Vec::with_capacity(self.n * k);
        let mut idx = Vec::with_capacity(self.n * k);
        for i in 0..self.n {
            dist.extend_from_slice(&self.distances(i)[..k]);
            idx.extend_from_slice(&self.indices(i)[..k]);
        }
        Ok(Self {
            n: self.n,
            k,
            dist,
            idx,
        })
    }
}

/// Exact squared Euclidean distance, accumulated left to right in `f64`.
#[inline]
pub fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let mut s = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let t = x.as_f64() - y.as_f64();
        s += t * t;
    }
    s
}

#[inline]
pub fn distance<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    squared_distance(a, b).sqrt()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Mean-centered copy of a cloud with squared norms and the error
/// coefficient of the dot-product expansion.
pub(crate) struct Screen {
    d: usize,
    centered: Vec<f64>,
    norms: Vec<f64>,
    coef: f64,
}

impl Screen {
    pub(crate) fn new<T: Scalar>(cloud: &PointCloud<T>) -> Self {
        let (n, d) = (cloud.n(), cloud.d_ambient());
        let mut mean = vec![0.0f64; d];
        for row in cloud.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v.as_f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut centered = Vec::with_capacity(n * d);
        for row in cloud.rows() {
            centered.extend(row.iter().zip(&mean).map(|(v, m)| v.as_f64() - m));
        }
        let norms = centered.chunks_exact(d).map(|r| dot(r, r)).collect();
        // Error of |a|^2 + |b|^2 - 2 a.b (blocked dot products, centering
        // round-off) relative to the exact squared distance between the
        // original rows; generous by a small constant factor.
        let coef = (4 * d + 16) as f64 * f64::EPSILON;
        Self {
            d,
            centered,
            norms,
            coef,
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.centered[i * self.d..(i + 1) * self.d]
    }

    /// Lower and upper bounds on the exact squared distance between `i` and `j`.
    #[inline]
    pub(crate) fn bounds(&self, i: usize, j: usize) -> (f64, f64) {
        let (ni, nj) = (self.norms[i], self.norms[j]);
        let approx = ni + nj - 2.0 * dot(self.row(i), self.row(j));
        let err = self.coef * (ni + nj) + f64::MIN_POSITIVE;
        (approx - err, approx + err)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Bound(f64);

impl Eq for Bound {}

impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Bound {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

struct QueryState {
    // k smallest upper bounds seen so far (max-heap)
    upper: BinaryHeap<Bound>,
    // (lower bound, index) of every point not yet excluded
    candidates: Vec<(f64, usize)>,
}

impl QueryState {
    fn threshold(&self, k: usize) -> f64 {
        if self.upper.len() < k {
            f64::INFINITY
        } else {
            self.upper.peek().map_or(f64::INFINITY, |b| b.0)
        }
    }

    fn offer(&mut self, k: usize, j: usize, lo: f64, hi: f64) {
        let t = self.threshold(k);
        if lo > t {
            return;
        }
        self.candidates.push((lo, j));
        if self.upper.len() < k {
            self.upper.push(Bound(hi));
        } else if hi < t {
            self.upper.pop();
            self.upper.push(Bound(hi));
        }
        if self.candidates.len() > 4 * k + 64 {
            self.prune(k);
        }
    }

    fn prune(&mut self, k: usize) {
        let t = self.threshold(k);
        self.candidates.retain(|&(lo, _)| lo <= t);
    }
}

/// Exact k nearest neighbors of every point, self excluded.
///
/// Rows are ordered by exact squared distance, then by neighbor index.
/// The result does not depend on the number of worker threads.
pub fn knn<T: Scalar>(cloud: &PointCloud<T>, k: usize) -> Result<NeighborTable> {
    let n = cloud.n();
    if k == 0 || k >= n {
        return Err(IdError::Parameter(format!(
            "k must satisfy 1 <= k < N, got k={k} with N={n}"
        )));
    }
    let screen = Screen::new(cloud);

    let blocks: Vec<(Vec<f64>, Vec<usize>)> = (0..n)
        .into_par_iter()
        .step_by(QUERY_BLOCK)
        .map(|start| {
            let end = (start + QUERY_BLOCK).min(n);
            let mut states: Vec<QueryState> = (start..end)
                .map(|_| QueryState {
                    upper: BinaryHeap::with_capacity(k + 1),
                    candidates: Vec::with_capacity(4 * k + 65),
                })
                .collect();
            for j in 0..n {
                for (q, state) in (start..end).zip(states.iter_mut()) {
                    if q == j {
                        continue;
                    }
                    let (lo, hi) = screen.bounds(q, j);
                    state.offer(k, j, lo, hi);
                }
            }
            let mut dist = Vec::with_capacity((end - start) * k);
            let mut idx = Vec::with_capacity((end - start) * k);
            for (q, mut state) in (start..end).zip(states) {
                state.prune(k);
                let query = cloud.row(q);
                let mut exact: Vec<(f64, usize)> = state
                    .candidates
                    .iter()
                    .map(|&(_, j)| (squared_distance(query, cloud.row(j)), j))
                    .collect();
                exact.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                for &(d2, j) in exact.iter().take(k) {
                    dist.push(d2.sqrt());
                    idx.push(j);
                }
            }
            (dist, idx)
        })
        .collect();

    let mut dist = Vec::with_capacity(n * k);
    let mut idx = Vec::with_capacity(n * k);
    for (d, i) in blocks {
        dist.extend(d);
        idx.extend(i);
    }
    Ok(NeighborTable { n, k, dist, idx })
}

/// All pairwise distances among `subset`, condensed in `(a, b)` order with
/// `a < b` by position in `subset`.
pub fn pairwise_within<T: Scalar>(cloud: &PointCloud<T>, subset: &[usize]) -> Result<Vec<f64>> {
    let n = cloud.n();
    for (pos, &i) in subset.iter().enumerate() {
        if i >= n {
            return Err(IdError::Index { index: i, len: n });
        }
        if subset[..pos].contains(&i) {
            return Err(IdError::Parameter(format!("index {i} repeated in subset")));
        }
    }
    let m = subset.len();
    let mut out = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for a in 0..m {
        for b in a + 1..m {
            out.push(distance(cloud.row(subset[a]), cloud.row(subset[b])));
        }
    }
    Ok(out)
}

//! Expected simplex skewness.
//!
//! For every point, its k neighbors are centered on their centroid and each
//! pair of centered vectors spans a triangle with one vertex at the
//! centroid. The ratio of its area to the area it would have with
//! orthogonal edges is `|sin theta|`. The mean ratio over all pairs and
//! points is matched against the expected value for isotropic directions
//! in `R^d`, `ess(d) = Gamma(d/2)^2 / (Gamma((d+1)/2) Gamma((d-1)/2))`.

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{IdError, Result};
use crate::neighbors::{dot, NeighborTable};
use crate::numeric::mean;
use crate::scalar::Scalar;
use crate::tensor_io::PointCloud;

use super::{estimate, EstimatorName, EstimatorSpec, Fit, IdEstimate};

const TOLERANCE: f64 = 1e-10;

/// Expected `|sin theta|` between two independent isotropic directions in
/// `R^d`, extended to real `d >= 1` (`ess(1) = 0`).
pub fn ess_reference(d: f64) -> f64 {
    if d <= 1.0 {
        return 0.0;
    }
    (2.0 * ln_gamma(d / 2.0) - ln_gamma((d + 1.0) / 2.0) - ln_gamma((d - 1.0) / 2.0)).exp()
}

/// Mean `|sin theta|` over all pairs of `vectors` (rows of width `dim`),
/// skipping zero-length vectors. `None` when no pair is usable.
pub fn simplex_skewness(vectors: &[f64], dim: usize) -> Option<f64> {
    let rows: Vec<&[f64]> = vectors.chunks_exact(dim).collect();
    let norms: Vec<f64> = rows.iter().map(|r| dot(r, r)).collect();
    let mut sum = 0.0;
    let mut count = 0usize;
    for a in 0..rows.len() {
        if norms[a] == 0.0 {
            continue;
        }
        for b in a + 1..rows.len() {
            if norms[b] == 0.0 {
                continue;
            }
            let c = dot(rows[a], rows[b]);
            let cos2 = (c * c) / (norms[a] * norms[b]);
            sum += (1.0 - cos2).max(0.0).sqrt();
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Solves `ess(d) = skewness` on `[1, d_max]` by bisection.
///
/// Returns the dimension and whether it was clamped to `d_max`.
pub fn invert_ess(skewness: f64, d_max: f64) -> Result<(f64, bool)> {
    if !(skewness.is_finite() && skewness >= 0.0) {
        return Err(IdError::Inversion(format!("invalid skewness {skewness}")));
    }
    if skewness >= 1.0 - 1e-12 {
        return Err(IdError::Inversion(format!(
            "skewness {skewness} is at or above the supremum of ess(d)"
        )));
    }
    let d_max = d_max.max(1.0);
    if skewness >= ess_reference(d_max) {
        return Ok((d_max, true));
    }
    let (mut lo, mut hi) = (1.0f64, d_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = ess_reference(mid);
        if (v - skewness).abs() < TOLERANCE || hi - lo < 1e-14 {
            return Ok((mid, false));
        }
        if v < skewness {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), false))
}

pub(crate) fn ess_fit<T: Scalar>(
    cloud: &PointCloud<T>,
    table: &NeighborTable,
    k: usize,
) -> Result<Fit> {
    let n = cloud.n();
    if n <= k || k < 3 {
        return Err(IdError::Sample(format!(
            "ess needs N > k >= 3, got N={n}, k={k}"
        )));
    }
    let d = cloud.d_ambient();
    let per_point: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let idx = &table.indices(i)[..k];
            let mut centroid = vec![0.0f64; d];
            for &j in idx {
                for (c, v) in centroid.iter_mut().zip(cloud.row(j)) {
                    *c += v.as_f64();
                }
            }
            centroid.iter_mut().for_each(|c| *c /= k as f64);
            let mut vectors = Vec::with_capacity(k * d);
            for &j in idx {
                vectors.extend(
                    cloud
                        .row(j)
                        .iter()
                        .zip(&centroid)
                        .map(|(v, c)| v.as_f64() - c),
                );
            }
            simplex_skewness(&vectors, d)
        })
        .collect();
    let valid: Vec<f64> = per_point.into_iter().flatten().collect();
    if valid.is_empty() {
        return Err(IdError::Degenerate(
            "every neighborhood collapsed to its centroid".into(),
        ));
    }
    let skewness = mean(&valid);
    let (value, clamped) = invert_ess(skewness, d as f64)?;
    Ok(Fit::new(value)
        .with("skewness", skewness)
        .with("clamped", clamped as u8 as f64)
        .with("points_used", valid.len() as f64))
}

pub fn ess_from_neighbors<T: Scalar>(
    cloud: &PointCloud<T>,
    table: &NeighborTable,
    k: usize,
) -> Result<IdEstimate> {
    let spec = EstimatorSpec::new(EstimatorName::Ess).with_param("k", k as f64)?;
    ess_fit(cloud, table, k)?.into_estimate(spec, cloud.n())
}

pub fn estimate_ess<T: Scalar>(cloud: &PointCloud<T>, k: usize) -> Result<IdEstimate> {
    estimate(
        &EstimatorSpec::new(EstimatorName::Ess).with_param("k", k as f64)?,
        cloud,
    )
}

//! Correlation dimension from two neighbor-scale radii.

use rayon::prelude::*;

use crate::error::{IdError, Result};
use crate::neighbors::{squared_distance, NeighborTable, Screen};
use crate::numeric::mean;
use crate::scalar::Scalar;
use crate::tensor_io::PointCloud;

use super::{estimate, EstimatorName, EstimatorSpec, Fit, IdEstimate};

/// Number of unordered pairs with distance strictly below each radius.
pub(crate) fn count_pairs_below<T: Scalar>(cloud: &PointCloud<T>, radii: &[f64]) -> Vec<u64> {
    let n = cloud.n();
    let screen = Screen::new(cloud);
    let sq: Vec<f64> = radii.iter().map(|r| r * r).collect();
    // screened comparisons against r^2 need a little room for the final sqrt
    let margin = 4.0 * f64::EPSILON;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut counts = vec![0u64; radii.len()];
            for j in i + 1..n {
                let (lo, hi) = screen.bounds(i, j);
                let mut exact: Option<f64> = None;
                for (c, (&r, &r2)) in counts.iter_mut().zip(radii.iter().zip(&sq)) {
                    if hi < r2 * (1.0 - margin) {
                        *c += 1;
                    } else if lo > r2 * (1.0 + margin) {
                        continue;
                    } else {
                        let d = *exact.get_or_insert_with(|| {
                            squared_distance(cloud.row(i), cloud.row(j)).sqrt()
                        });
                        if d < r {
                            *c += 1;
                        }
                    }
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; radii.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

pub(crate) fn corrint_fit<T: Scalar>(
    cloud: &PointCloud<T>,
    table: &NeighborTable,
    k1: usize,
    k2: usize,
) -> Result<Fit> {
    let n = cloud.n();
    if n <= k2 {
        return Err(IdError::Sample(format!(
            "corrint needs N > k2 = {k2}, got {n}"
        )));
    }
    let r1 = mean(&(0..n).map(|i| table.r(i, k1)).collect::<Vec<_>>());
    let r2 = mean(&(0..n).map(|i| table.r(i, k2)).collect::<Vec<_>>());
    if !(r2 > r1) {
        return Err(IdError::Degenerate(format!(
            "radii coincide (r1 = {r1}, r2 = {r2})"
        )));
    }
    let counts = count_pairs_below(cloud, &[r1, r2]);
    let norm = 2.0 / (n as f64 * (n as f64 - 1.0));
    let (c1, c2) = (counts[0] as f64 * norm, counts[1] as f64 * norm);
    if counts[0] == 0 {
        return Err(IdError::Degenerate("no pairs closer than r1".into()));
    }
    if counts[0] == counts[1] {
        return Err(IdError::Degenerate(
            "both radii enclose the same number of pairs".into(),
        ));
    }
    let d = (c2.ln() - c1.ln()) / (r2.ln() - r1.ln());
    Ok(Fit::new(d)
        .with("r1", r1)
        .with("r2", r2)
        .with("c_r1", c1)
        .with("c_r2", c2))
}

/// Correlation dimension with radii from a precomputed neighbor table.
pub fn corrint_from_neighbors<T: Scalar>(
    cloud: &PointCloud<T>,
    table: &NeighborTable,
    k1: usize,
    k2: usize,
) -> Result<IdEstimate> {
    let spec = EstimatorSpec::new(EstimatorName::Corrint)
        .with_param("k2", k2 as f64)?
        .with_param("k1", k1 as f64)?;
    corrint_fit(cloud, table, k1, k2)?.into_estimate(spec, cloud.n())
}

pub fn estimate_corrint<T: Scalar>(
    cloud: &PointCloud<T>,
    k1: usize,
    k2: usize,
) -> Result<IdEstimate> {
    let spec = EstimatorSpec::new(EstimatorName::Corrint)
        .with_param("k1", k1 as f64)?
        .with_param("k2", k2 as f64)?;
    estimate(&spec, cloud)
}

//! Estimators built from one point's sorted neighbor distances
//! `r_1 <= ... <= r_k`, averaged over points.

use crate::error::{IdError, Result};
use crate::neighbors::NeighborTable;
use crate::numeric::mean;
use crate::scalar::Scalar;
use crate::tensor_io::PointCloud;

use super::{estimate, EstimatorName, EstimatorSpec, Fit, IdEstimate};

/// Levina-Bickel: `[ (1/(k-1)) sum_{j<k} ln(r_k / r_j) ]^-1`.
pub fn mle_local(dists: &[f64]) -> Result<f64> {
    let k = dists.len();
    if k < 2 {
        return Err(IdError::Parameter(format!(
            "mle needs k >= 2 distances, got {k}"
        )));
    }
    if dists[0] <= 0.0 {
        return Err(IdError::Degenerate("zero neighbor distance".into()));
    }
    let rk = dists[k - 1];
    let s: f64 = dists[..k - 1].iter().map(|r| (rk / r).ln()).sum();
    if !(s > 0.0) {
        return Err(IdError::Degenerate(
            "all neighbor distances are equal".into(),
        ));
    }
    Ok((k - 1) as f64 / s)
}

/// Method of moments under `F(r) = (r / w)^d`: `m1 / (w - m1)` with `w = r_k`.
/// `None` when `w <= m1`.
pub fn mom_local(dists: &[f64]) -> Option<f64> {
    let w = *dists.last()?;
    let m1 = dists.iter().sum::<f64>() / dists.len() as f64;
    (w > m1).then(|| m1 / (w - m1))
}

/// `ln 2 / ln(r_k / r_ceil(k/2))`, computed as `1 / log2(ratio)`.
/// `None` when the ratio is not above 1.
pub fn mada_local(dists: &[f64]) -> Option<f64> {
    let k = dists.len();
    if k < 2 {
        return None;
    }
    let half = dists[k.div_ceil(2) - 1];
    let rk = dists[k - 1];
    (half > 0.0 && rk > half).then(|| 1.0 / (rk / half).log2())
}

fn check_k(name: &str, table: &NeighborTable, k: usize, min_k: usize) -> Result<()> {
    if k < min_k || k > table.k() {
        return Err(IdError::Parameter(format!(
            "{name} needs {min_k} <= k <= {} (table width), got {k}",
            table.k()
        )));
    }
    if table.n() <= k {
        return Err(IdError::Sample(format!(
            "{name} needs N > k = {k}, got {}",
            table.n()
        )));
    }
    Ok(())
}

pub(crate) fn mle_fit(table: &NeighborTable, k: usize) -> Result<Fit> {
    check_k("mle", table, k, 3)?;
    let locals = (0..table.n())
        .map(|i| mle_local(&table.distances(i)[..k]))
        .collect::<Result<Vec<_>>>()?;
    Ok(Fit::new(mean(&locals)))
}

pub(crate) fn mom_fit(table: &NeighborTable, k: usize) -> Result<Fit> {
    check_k("mom", table, k, 2)?;
    let n = table.n();
    let valid: Vec<f64> = (0..n)
        .filter_map(|i| mom_local(&table.distances(i)[..k]))
        .collect();
    if valid.len() * 2 < n {
        return Err(IdError::Quality(format!(
            "w <= m1 for {} of {n} points",
            n - valid.len()
        )));
    }
    Ok(Fit::new(mean(&valid)).with("points_used", valid.len() as f64))
}

pub(crate) fn mada_fit(table: &NeighborTable, k: usize) -> Result<Fit> {
    check_k("mada", table, k, 2)?;
    let valid: Vec<f64> = (0..table.n())
        .filter_map(|i| mada_local(&table.distances(i)[..k]))
        .collect();
    if valid.is_empty() {
        return Err(IdError::Degenerate(
            "r_k equals r_ceil(k/2) at every point".into(),
        ));
    }
    Ok(Fit::new(mean(&valid)).with("points_used", valid.len() as f64))
}

pub fn mle_from_neighbors(table: &NeighborTable, k: usize) -> Result<IdEstimate> {
    let spec = EstimatorSpec::new(EstimatorName::Mle).with_param("k", k as f64)?;
    mle_fit(table, k)?.into_estimate(spec, table.n())
}

pub fn mom_from_neighbors(table: &NeighborTable, k: usize) -> Result<IdEstimate> {
    let spec = EstimatorSpec::new(EstimatorName::Mom).with_param("k", k as f64)?;
    mom_fit(table, k)?.into_estimate(spec, table.n())
}

pub fn mada_from_neighbors(table: &NeighborTable, k: usize) -> Result<IdEstimate> {
    let spec = EstimatorSpec::new(EstimatorName::Mada).with_param("k", k as f64)?;
    mada_fit(table, k)?.into_estimate(spec, table.n())
}

pub fn estimate_mle<T: Scalar>(cloud: &PointCloud<T>, k: usize) -> Result<IdEstimate> {
    estimate(
        &EstimatorSpec::new(EstimatorName::Mle).with_param("k", k as f64)?,
        cloud,
    )
}

pub fn estimate_mom<T: Scalar>(cloud: &PointCloud<T>, k: usize) -> Result<IdEstimate> {
    estimate(
        &EstimatorSpec::new(EstimatorName::Mom).with_param("k", k as f64)?,
        cloud,
    )
}

pub fn estimate_mada<T: Scalar>(cloud: &PointCloud<T>, k: usize) -> Result<IdEstimate> {
    estimate(
        &EstimatorSpec::new(EstimatorName::Mada).with_param("k", k as f64)?,
        cloud,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mle_reciprocal_of_mean_log_ratio() {
        // ln(r_k / r_j) = 1/3 for both j < k
        let e = (1.0f64 / 3.0).exp();
        let d = mle_local(&[1.0, 1.0, e]).unwrap();
        assert!((d - 3.0).abs() < 1e-12);
        assert!(matches!(
            mle_local(&[2.0, 2.0, 2.0]),
            Err(IdError::Degenerate(_))
        ));
        assert!(matches!(
            mle_local(&[0.0, 1.0, 2.0]),
            Err(IdError::Degenerate(_))
        ));
    }

    #[test]
    fn mom_closed_forms() {
        assert_eq!(mom_local(&[0.0, 1.0, 2.0]), Some(1.0));
        assert_eq!(mom_local(&[1.5, 1.5, 3.0]), Some(2.0));
        assert_eq!(mom_local(&[1.0, 1.0]), None);
    }

    #[test]
    fn mada_closed_forms() {
        assert_eq!(mada_local(&[0.5, 1.0, 1.5, 2.0]), Some(1.0));
        let s = 2f64.sqrt();
        let d = mada_local(&[0.5, 1.0, 1.2, s]).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
        assert_eq!(mada_local(&[1.0, 1.0]), None);
    }

    #[test]
    fn table_level_errors() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let c = PointCloud::from_rows(&rows).unwrap();
        assert!(matches!(estimate_mle(&c, 10), Err(IdError::Sample(_))));
        let t = crate::neighbors::knn(&c, 4).unwrap();
        assert!(matches!(mle_fit(&t, 5), Err(IdError::Parameter(_))));
        // evenly spaced line: MADA at interior points sees ratio 2
        let e = estimate_mada(&c, 2).unwrap();
        assert!(e.value > 0.0);
    }
}

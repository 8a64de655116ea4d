use crate::error::{IdError, Result};
use crate::scalar::Scalar;
use crate::tensor_io::PointCloud;

use super::linalg::covariance_spectrum;
use super::{EstimatorName, EstimatorSpec, Fit, IdEstimate};

/// Number of eigenvalues strictly above `lambda_max / k`.
pub fn pca_count(eigenvalues: &[f64], k: f64) -> Result<usize> {
    let lambda_max = eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !(lambda_max > 0.0) {
        return Err(IdError::Degenerate(
            "all points coincide; covariance is zero".into(),
        ));
    }
    Ok(eigenvalues.iter().filter(|&&l| l > lambda_max / k).count())
}

pub(crate) fn pca_fit<T: Scalar>(cloud: &PointCloud<T>, k: f64) -> Result<Fit> {
    if cloud.n() < 2 {
        return Err(IdError::Sample("pca needs at least 2 points".into()));
    }
    let spectrum = covariance_spectrum(cloud);
    let count = pca_count(&spectrum, k)?;
    Ok(Fit::new(count as f64).with("lambda_max", spectrum[0]))
}

/// Linear ID: count of principal values above `lambda_max / k`.
pub fn estimate_pca<T: Scalar>(cloud: &PointCloud<T>, k: f64) -> Result<IdEstimate> {
    let spec = EstimatorSpec::new(EstimatorName::Pca).with_param("k", k)?;
    pca_fit(cloud, k)?.into_estimate(spec, cloud.n())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_against_threshold() {
        assert_eq!(pca_count(&[10.0, 0.6, 0.5, 0.0], 20.0).unwrap(), 2);
        assert!(pca_count(&[0.0, 0.0], 20.0).is_err());
    }

    #[test]
    fn plane_in_ten_dimensions() {
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|i| {
                let (a, b) = ((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos());
                let mut r = vec![0.0; 10];
                r[0] = a + b;
                r[3] = a - 2.0 * b;
                r[7] = 0.5 * a;
                r
            })
            .collect();
        let c = PointCloud::from_rows(&rows).unwrap();
        assert_eq!(estimate_pca(&c, 20.0).unwrap().value, 2.0);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let c = PointCloud::new(vec![1.0; 12], 4, 3).unwrap();
        assert!(matches!(
            estimate_pca(&c, 20.0),
            Err(IdError::Degenerate(_))
        ));
    }

    #[test]
    fn unit_circle_gives_two() {
        let rows: Vec<Vec<f64>> = (0..1000)
            .map(|i| {
                let t = i as f64 * std::f64::consts::TAU / 1000.0;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let c = PointCloud::from_rows(&rows).unwrap();
        assert_eq!(estimate_pca(&c, 20.0).unwrap().value, 2.0);
    }
}

//! TwoNN: the ratio `mu = r2 / r1` of second to first neighbor distance
//! is Pareto-distributed with shape `d`, so `-ln(1 - F(mu)) = d ln(mu)`.

use crate::error::{IdError, Result};
use crate::neighbors::NeighborTable;
use crate::scalar::Scalar;
use crate::tensor_io::PointCloud;

use super::{estimate, EstimatorName, EstimatorSpec, Fit, IdEstimate};

const MIN_POINTS: usize = 20;
const MIN_FIT_POINTS: usize = 10;

/// Slope and R^2 of the through-origin fit of `-ln(1 - F(mu))` on `ln mu`.
///
/// `ratios` are sorted in place; the largest `discard` fraction is left out
/// of the regression (the point with `F = 1` is always excluded).
pub fn twonn_fit(ratios: &mut [f64], discard: f64) -> Result<(f64, f64)> {
    let n = ratios.len();
    ratios.sort_by(f64::total_cmp);
    let keep = ((n as f64) * (1.0 - discard)).floor() as usize;
    let keep = keep.min(n.saturating_sub(1));
    if keep < MIN_FIT_POINTS {
        return Err(IdError::Sample(format!(
            "only {keep} ratios left for the regression"
        )));
    }
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut ys = Vec::with_capacity(keep);
    let mut xs = Vec::with_capacity(keep);
    for (i, &mu) in ratios[..keep].iter().enumerate() {
        let f = (i + 1) as f64 / n as f64;
        let x = mu.ln();
        let y = -(1.0 - f).ln();
        sxx += x * x;
        sxy += x * y;
        xs.push(x);
        ys.push(y);
    }
    if !(sxx > 0.0) {
        return Err(IdError::Degenerate(
            "every kept ratio equals 1 (r1 = r2 everywhere)".into(),
        ));
    }
    let slope = sxy / sxx;
    let y_mean = ys.iter().sum::<f64>() / keep as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - y_mean).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - slope * x).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok((slope, r2))
}

pub(crate) fn twonn_table_fit(table: &NeighborTable, discard: f64) -> Result<Fit> {
    let n = table.n();
    if n < MIN_POINTS {
        return Err(IdError::Sample(format!(
            "twonn needs at least {MIN_POINTS} points, got {n}"
        )));
    }
    let mut ratios = Vec::with_capacity(n);
    for i in 0..n {
        let (r1, r2) = (table.r(i, 1), table.r(i, 2));
        if r1 == 0.0 {
            return Err(IdError::Degenerate(format!(
                "point {i} has a duplicate (r1 = 0)"
            )));
        }
        ratios.push(r2 / r1);
    }
    let (slope, r2) = twonn_fit(&mut ratios, discard)?;
    Ok(Fit::new(slope).with("r_squared", r2))
}

pub fn twonn_from_neighbors(table: &NeighborTable, discard: f64) -> Result<IdEstimate> {
    let spec = EstimatorSpec::new(EstimatorName::Twonn).with_param("discard", discard)?;
    twonn_table_fit(table, discard)?.into_estimate(spec, table.n())
}

pub fn estimate_twonn<T: Scalar>(cloud: &PointCloud<T>, discard: f64) -> Result<IdEstimate> {
    estimate(
        &EstimatorSpec::new(EstimatorName::Twonn).with_param("discard", discard)?,
        cloud,
    )
}

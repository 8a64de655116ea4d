//! Tight local intrinsic-dimension estimation.
//!
//! Inside the k-NN ball of radius `r` around a query `q`, each ordered pair
//! of neighbors `(x_i, x_j)` with distances `u_i, u_j` to `q` and `v_ij`
//! between them yields two extra distance measurements `s_ij`, `t_ij`: the
//! distances at which the ball's boundary is hit when `q` is moved to
//! `x_j`'s position relative to `x_i` and to its reflection. Together with
//! the `u_i` themselves, all measurements are treated as samples of the
//! local distance law `F(m) = (m / r)^d`, whose maximum-likelihood fit is
//! `d = -count / sum(ln(m / r))`.

use rayon::prelude::*;

use crate::error::{IdError, Result};
use crate::neighbors::{distance, NeighborTable};
use crate::numeric::mean;
use crate::scalar::Scalar;
use crate::tensor_io::PointCloud;

use super::{estimate, EstimatorName, EstimatorSpec, Fit, IdEstimate};

/// Measurements below this fraction of `r` are dropped.
const EPSILON: f64 = 1e-4;

/// Maximum-likelihood dimension of measurements drawn from
/// `F(m) = (m / r)^d` on `[0, r]`. `None` when the log-sum is not negative.
pub fn tle_from_measurements(measurements: &[f64], r: f64) -> Option<f64> {
    if measurements.is_empty() || !(r > 0.0) {
        return None;
    }
    let s: f64 = measurements.iter().map(|m| (m / r).ln()).sum();
    let d = -(measurements.len() as f64) / s;
    (s < 0.0 && d.is_finite()).then_some(d)
}

/// `(s_ij, t_ij)` for neighbor distances `ui`, `uj`, their separation `v`
/// and ball radius `r`.
fn reflected_measurements(ui: f64, uj: f64, v: f64, r: f64) -> (f64, f64) {
    let z2 = 2.0 * ui * ui + 2.0 * uj * uj - v * v;
    if ui == r {
        let s = r * v * v / (r * r + v * v - uj * uj);
        let t = r * z2 / (r * r + z2 - uj * uj);
        return (s, t);
    }
    let den = 2.0 * (r * r - ui * ui);
    let b = ui * ui + v * v - uj * uj;
    let s = r * ((b * b + 4.0 * v * v * (r * r - ui * ui)).sqrt() - b) / den;
    let b = ui * ui + z2 - uj * uj;
    let t = r * ((b * b + 4.0 * z2 * (r * r - ui * ui)).sqrt() - b) / den;
    (s, t)
}

/// Local estimate at one query from its neighbor distances `u` (sorted,
/// length k) and the `k x k` row-major neighbor separation matrix `v`.
fn tle_point(u: &[f64], v: &[f64]) -> Option<f64> {
    let k = u.len();
    let r = u[k - 1];
    if !(r > 0.0) {
        return None;
    }
    let floor = EPSILON * r;
    let mut measurements = Vec::with_capacity(2 * k * k);
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let vij = v[i * k + j];
            if vij == 0.0 {
                continue;
            }
            let (s, t) = match (u[i] == 0.0, u[j] == 0.0) {
                (true, _) => (u[j], u[j]),
                (false, true) => {
                    let m = r * vij / (r + vij);
                    (m, m)
                }
                _ => reflected_measurements(u[i], u[j], vij, r),
            };
            if !(s >= floor && t >= floor) || !s.is_finite() || !t.is_finite() {
                continue;
            }
            measurements.push(s.min(r));
            measurements.push(t.min(r));
        }
    }
    for &ui in u {
        if ui >= floor {
            // query distances enter with the same weight as each (s, t) pair
            measurements.push(ui);
            measurements.push(ui);
        }
    }
    tle_from_measurements(&measurements, r)
}

pub(crate) fn tle_fit<T: Scalar>(
    cloud: &PointCloud<T>,
    table: &NeighborTable,
    k: usize,
) -> Result<Fit> {
    let n = cloud.n();
    if n <= k || k < 5 {
        return Err(IdError::Sample(format!(
            "tle needs N > k >= 5, got N={n}, k={k}"
        )));
    }
    let per_point: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|q| {
            let idx = &table.indices(q)[..k];
            let u = &table.distances(q)[..k];
            let mut v = vec![0.0f64; k * k];
            for a in 0..k {
                for b in a + 1..k {
                    let d = distance(cloud.row(idx[a]), cloud.row(idx[b]));
                    v[a * k + b] = d;
                    v[b * k + a] = d;
                }
            }
            tle_point(u, &v)
        })
        .collect();
    let valid: Vec<f64> = per_point.into_iter().flatten().collect();
    if valid.len() * 2 < n {
        return Err(IdError::Quality(format!(
            "only {} of {n} neighborhoods gave a valid local estimate",
            valid.len()
        )));
    }
    Ok(Fit::new(mean(&valid)).with("points_used", valid.len() as f64))
}

pub fn tle_from_neighbors<T: Scalar>(
    cloud: &PointCloud<T>,
    table: &NeighborTable,
    k: usize,
) -> Result<IdEstimate> {
    let spec = EstimatorSpec::new(EstimatorName::Tle).with_param("k", k as f64)?;
    tle_fit(cloud, table, k)?.into_estimate(spec, cloud.n())
}

pub fn estimate_tle<T: Scalar>(cloud: &PointCloud<T>, k: usize) -> Result<IdEstimate> {
    estimate(
        &EstimatorSpec::new(EstimatorName::Tle).with_param("k", k as f64)?,
        cloud,
    )
}

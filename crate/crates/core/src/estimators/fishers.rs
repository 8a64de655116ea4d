//! Fisher-separability estimator.
//!
//! Data are whitened on their leading principal components and projected
//! onto the unit sphere. For each threshold `alpha`, the mean fraction of
//! points `y` that are *not* Fisher-separable from `x` (`<x, y> >= alpha`)
//! is compared with the same quantity for points drawn uniformly from the
//! unit sphere of `R^d`; the dimension `d` matching the observed fraction is
//! read off a calibration table, and the median over thresholds is
//! reported.
//!
//! For the uniform sphere in `R^d` the calibration value has the closed form
//! `P(<x,y> >= alpha) = I_{1-alpha^2}((d-1)/2, 1/2) / 2` (regularized
//! incomplete beta), which is what [`CalibrationTable::analytic`] tabulates.
//! [`CalibrationTable::monte_carlo`] builds the same table by sampling.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{IdError, Result};
use crate::neighbors::dot;
use crate::numeric::median;
use crate::scalar::Scalar;
use crate::tensor_io::{load_matrix, save_matrix, PointCloud};

use super::linalg::whitened_scores;
use super::{EstimatorName, EstimatorSpec, Fit, IdEstimate};

const CACHE_STEM: &str = "fishers_calibration";
const MAX_DIM: usize = 64;

/// Inseparability probabilities `p(alpha, d)` on a `(d, alpha)` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationTable {
    dims: Vec<usize>,
    alphas: Vec<f64>,
    // row-major: dims x alphas
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    dims: Vec<usize>,
    alphas: Vec<f64>,
    method: String,
}

/// Threshold grid 0.60, 0.62, ..., 0.98.
pub fn default_alphas() -> Vec<f64> {
    (0..20).map(|i| (60 + 2 * i) as f64 / 100.0).collect()
}

fn default_dims() -> Vec<usize> {
    (1..=MAX_DIM).collect()
}

/// `P(<x, y> >= alpha)` for independent uniform points on the unit sphere of `R^d`.
pub fn sphere_inseparability(alpha: f64, d: usize) -> f64 {
    assert!(d >= 1 && (0.0..1.0).contains(&alpha));
    if d == 1 {
        // x, y in {-1, +1}
        return 0.5;
    }
    0.5 * beta_reg((d as f64 - 1.0) / 2.0, 0.5, 1.0 - alpha * alpha)
}

/// Mean inseparability fraction of unit vectors (rows of `z`, width `r`)
/// at each threshold in `alphas` (ascending).
fn inseparability_profile(z: &[f64], r: usize, alphas: &[f64]) -> Vec<f64> {
    let n = z.len() / r;
    let m = alphas.len();
    let hist = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut h = vec![0u64; m + 1];
            let zi = &z[i * r..(i + 1) * r];
            for j in i + 1..n {
                let t = dot(zi, &z[j * r..(j + 1) * r]);
                h[alphas.partition_point(|&a| a <= t)] += 1;
            }
            h
        })
        .reduce(
            || vec![0u64; m + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    // a pair with t >= alphas[a] lands in a bucket > a
    let pairs = (n as f64) * (n as f64 - 1.0) / 2.0;
    (0..m)
        .map(|a| hist[a + 1..].iter().sum::<u64>() as f64 / pairs)
        .collect()
}

impl CalibrationTable {
    /// Closed-form table for the uniform sphere.
    pub fn analytic(dims: Vec<usize>, alphas: Vec<f64>) -> Self {
        let values = dims
            .iter()
            .flat_map(|&d| alphas.iter().map(move |&a| sphere_inseparability(a, d)))
            .collect();
        Self {
            dims,
            alphas,
            values,
        }
    }

    /// Default grid: `d = 1..=64`, thresholds 0.60..0.98.
    pub fn default_analytic() -> Self {
        Self::analytic(default_dims(), default_alphas())
    }

    /// Table measured on `samples` uniform points per dimension.
    pub fn monte_carlo(dims: Vec<usize>, alphas: Vec<f64>, samples: usize, seed: u64) -> Self {
        let mut values = Vec::with_capacity(dims.len() * alphas.len());
        for &d in &dims {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(d as u64);
            let mut z = Vec::with_capacity(samples * d);
            for _ in 0..samples {
                let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                z.extend(g.iter().map(|v| v / norm));
            }
            values.extend(inseparability_profile(&z, d, &alphas));
        }
        Self {
            dims,
            alphas,
            values,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// Calibration value at grid position `(dim_index, alpha_index)`.
    pub fn value(&self, dim_index: usize, alpha_index: usize) -> f64 {
        self.values[dim_index * self.alphas.len() + alpha_index]
    }

    /// Dimension whose calibration value at `alphas[alpha_index]` equals
    /// `p`, interpolated linearly in `ln p` between grid dimensions and
    /// clamped to the grid ends. The flag reports clamping.
    pub fn invert(&self, alpha_index: usize, p: f64) -> (f64, bool) {
        let col: Vec<f64> = (0..self.dims.len())
            .map(|di| self.value(di, alpha_index))
            .collect();
        if p >= col[0] {
            return (self.dims[0] as f64, true);
        }
        let last = col.len() - 1;
        if p <= col[last] {
            return (self.dims[last] as f64, true);
        }
        // calibration is decreasing in d: find col[i] >= p > col[i+1]
        let i = (0..last)
            .find(|&i| col[i] >= p && p > col[i + 1])
            .unwrap_or(last - 1);
        let (hi, lo) = (col[i], col[i + 1]);
        let frac = if lo > 0.0 {
            (hi.ln() - p.ln()) / (hi.ln() - lo.ln())
        } else {
            (hi - p) / (hi - lo)
        };
        let (d0, d1) = (self.dims[i] as f64, self.dims[i + 1] as f64);
        (d0 + frac * (d1 - d0), false)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| IdError::io(dir, e))?;
        let cloud = PointCloud::new(self.values.clone(), self.dims.len(), self.alphas.len())?;
        save_matrix(&cloud, dir.join(format!("{CACHE_STEM}.npy")))?;
        let sidecar = Sidecar {
            dims: self.dims.clone(),
            alphas: self.alphas.clone(),
            method: "analytic".into(),
        };
        let path = dir.join(format!("{CACHE_STEM}.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&sidecar)?)
            .map_err(|e| IdError::io(&path, e))
    }

    /// Reads a cached table; `None` when no cache exists in `dir`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Option<Self>> {
        let dir = dir.as_ref();
        let npy = dir.join(format!("{CACHE_STEM}.npy"));
        let json = dir.join(format!("{CACHE_STEM}.json"));
        if !npy.exists() || !json.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&json).map_err(|e| IdError::io(&json, e))?;
        let sidecar: Sidecar = serde_json::from_str(&text)?;
        let m = load_matrix(&npy)?;
        if m.n() != sidecar.dims.len() || m.d_ambient() != sidecar.alphas.len() {
            return Err(IdError::Schema(
                "calibration cache grid does not match its sidecar".into(),
            ));
        }
        Ok(Some(Self {
            dims: sidecar.dims,
            alphas: sidecar.alphas,
            values: m.into_vec(),
        }))
    }

    /// Default-grid table from `dir`, regenerated and written when absent
    /// or stale.
    pub fn load_or_build(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let wanted = Self::default_analytic();
        match Self::load(dir) {
            Ok(Some(t)) if t.dims == wanted.dims && t.alphas == wanted.alphas => return Ok(t),
            Ok(_) => {}
            Err(e) => log::warn!("ignoring unreadable calibration cache: {e}"),
        }
        wanted.save(dir)?;
        Ok(wanted)
    }

    /// Cache location: `$IDLAB_CACHE_DIR`, else a directory under the
    /// system temp dir.
    pub fn cache_dir() -> PathBuf {
        std::env::var_os("IDLAB_CACHE_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| std::env::temp_dir().join("idlab-cache"))
    }

    /// Process-wide default table, loaded from (or written to) the cache.
    pub fn shared() -> &'static CalibrationTable {
        static TABLE: OnceLock<CalibrationTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            CalibrationTable::load_or_build(Self::cache_dir()).unwrap_or_else(|e| {
                log::warn!("calibration cache unavailable ({e}); using in-memory table");
                CalibrationTable::default_analytic()
            })
        })
    }
}

pub(crate) fn fishers_fit<T: Scalar>(
    cloud: &PointCloud<T>,
    cond: f64,
    table: &CalibrationTable,
) -> Result<Fit> {
    if cloud.n() < 50 {
        return Err(IdError::Sample(format!(
            "fishers needs at least 50 points, got {}",
            cloud.n()
        )));
    }
    let (scores, kept) = whitened_scores(cloud, cond);
    if kept.is_empty() || !(kept[0] > 0.0) {
        return Err(IdError::Degenerate("cloud has zero variance".into()));
    }
    let r = kept.len();
    let mut z = Vec::with_capacity(scores.len());
    for row in scores.chunks_exact(r) {
        let norm = dot(row, row).sqrt();
        if norm > 0.0 {
            z.extend(row.iter().map(|v| v / norm));
        }
    }
    if z.len() / r < 2 {
        return Err(IdError::Degenerate(
            "all points project to the center".into(),
        ));
    }
    let profile = inseparability_profile(&z, r, table.alphas());

    let mut dims = Vec::new();
    let mut clamped = 0usize;
    for (a, &p) in profile.iter().enumerate() {
        if p > 0.0 && p < 1.0 {
            let (d, was_clamped) = table.invert(a, p);
            clamped += was_clamped as usize;
            dims.push(d);
        }
    }
    if dims.is_empty() {
        return Err(IdError::Inversion(
            "inseparability is 0 or 1 at every threshold".into(),
        ));
    }
    Ok(Fit::new(median(&dims))
        .with("components_kept", r as f64)
        .with("alphas_used", dims.len() as f64)
        .with("alphas_clamped", clamped as f64))
}

/// FisherS estimate against an explicit calibration table.
pub fn fishers_with_table<T: Scalar>(
    cloud: &PointCloud<T>,
    cond: f64,
    table: &CalibrationTable,
) -> Result<IdEstimate> {
    let spec = EstimatorSpec::new(EstimatorName::Fishers).with_param("cond", cond)?;
    fishers_fit(cloud, cond, table)?.into_estimate(spec, cloud.n())
}

/// FisherS estimate using the shared default calibration.
pub fn estimate_fishers<T: Scalar>(cloud: &PointCloud<T>, cond: f64) -> Result<IdEstimate> {
    fishers_with_table(cloud, cond, CalibrationTable::shared())
}

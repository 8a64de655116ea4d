//! Intrinsic-dimension estimators behind a common registry.
//!
//! Global estimators (PCA, FisherS, CorrInt, TwoNN) fit a single model to
//! the whole cloud; local ones (ESS, TLE, MLE, MOM, MADA) produce one
//! estimate per point and average them in index order.
//!
//! Every nearest-neighbor based estimator is computed from a shared
//! [`NeighborTable`], so [`estimate_many`] runs one exact k-NN search for a
//! whole batch of estimators.

mod corrint;
mod ess;
mod fishers;
mod linalg;
mod local;
mod pca;
mod tle;
mod twonn;

use std::borrow::Cow;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{IdError, Result};
use crate::neighbors::{knn, NeighborTable};
use crate::scalar::Scalar;
use crate::tensor_io::PointCloud;

pub use corrint::{corrint_from_neighbors, estimate_corrint};
pub use ess::{ess_from_neighbors, ess_reference, estimate_ess, invert_ess, simplex_skewness};
pub use fishers::{estimate_fishers, fishers_with_table, CalibrationTable};
pub use local::{
    estimate_mada, estimate_mle, estimate_mom, mada_from_neighbors, mada_local, mle_from_neighbors,
    mle_local, mom_from_neighbors, mom_local,
};
pub use pca::{estimate_pca, pca_count};
pub use tle::{estimate_tle, tle_from_measurements, tle_from_neighbors};
pub use twonn::{estimate_twonn, twonn_fit, twonn_from_neighbors};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorName {
    Pca,
    Fishers,
    Corrint,
    Twonn,
    Ess,
    Tle,
    Mle,
    Mom,
    Mada,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Locality {
    Global,
    Local,
}

impl EstimatorName {
    pub const ALL: [EstimatorName; 9] = [
        EstimatorName::Pca,
        EstimatorName::Fishers,
        EstimatorName::Corrint,
        EstimatorName::Twonn,
        EstimatorName::Ess,
        EstimatorName::Tle,
        EstimatorName::Mle,
        EstimatorName::Mom,
        EstimatorName::Mada,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorName::Pca => "pca",
            EstimatorName::Fishers => "fishers",
            EstimatorName::Corrint => "corrint",
            EstimatorName::Twonn => "twonn",
            EstimatorName::Ess => "ess",
            EstimatorName::Tle => "tle",
            EstimatorName::Mle => "mle",
            EstimatorName::Mom => "mom",
            EstimatorName::Mada => "mada",
        }
    }

    pub fn locality(self) -> Locality {
        match self {
            EstimatorName::Pca
            | EstimatorName::Fishers
            | EstimatorName::Corrint
            | EstimatorName::Twonn => Locality::Global,
            _ => Locality::Local,
        }
    }

    /// Estimators built on nearest-neighbor distances; these run on
    /// deduplicated clouds.
    pub fn is_neighbor_based(self) -> bool {
        !matches!(self, EstimatorName::Pca | EstimatorName::Fishers)
    }

    fn default_params(self) -> &'static [(&'static str, f64)] {
        match self {
            EstimatorName::Pca => &[("k", 20.0)],
            EstimatorName::Fishers => &[("cond", 10.0)],
            EstimatorName::Corrint => &[("k1", 10.0), ("k2", 20.0)],
            EstimatorName::Twonn => &[("discard", 0.1)],
            EstimatorName::Ess => &[("k", 10.0)],
            EstimatorName::Tle => &[("k", 20.0)],
            EstimatorName::Mle => &[("k", 20.0)],
            EstimatorName::Mom => &[("k", 100.0)],
            EstimatorName::Mada => &[("k", 20.0)],
        }
    }
}

impl fmt::Display for EstimatorName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorName {
    type Err = IdError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        EstimatorName::ALL
            .into_iter()
            .find(|n| n.as_str() == lower)
            .ok_or_else(|| IdError::Registry(s.to_string()))
    }
}

/// Estimator name plus hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub name: EstimatorName,
    pub params: BTreeMap<String, f64>,
    pub locality: Locality,
}

impl EstimatorSpec {
    /// Spec with the default hyperparameters of `name`.
    pub fn new(name: EstimatorName) -> Self {
        Self {
            name,
            params: name
                .default_params()
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            locality: name.locality(),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(Self::new(name.parse()?))
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Result<Self> {
        if !self.params.contains_key(key) {
            return Err(IdError::Parameter(format!(
                "{} has no parameter '{key}' (known: {})",
                self.name,
                self.params.keys().cloned().collect::<Vec<_>>().join(", ")
            )));
        }
        self.params.insert(key.to_string(), value);
        self.validate()?;
        Ok(self)
    }

    pub fn param(&self, key: &str) -> f64 {
        self.params[key]
    }

    fn int_param(&self, key: &str) -> usize {
        self.params[key] as usize
    }

    pub fn validate(&self) -> Result<()> {
        for (key, _) in self.name.default_params() {
            if !self.params.contains_key(*key) {
                return Err(IdError::Parameter(format!(
                    "{} lacks parameter '{key}'",
                    self.name
                )));
            }
        }
        if self.params.len() != self.name.default_params().len() {
            return Err(IdError::Parameter(format!(
                "{} has unknown parameters: {:?}",
                self.name,
                self.params.keys().collect::<Vec<_>>()
            )));
        }
        if self.locality != self.name.locality() {
            return Err(IdError::Parameter(format!(
                "{} is a {:?} estimator",
                self.name,
                self.name.locality()
            )));
        }
        let int_at_least = |key: &str, min: f64| -> Result<()> {
            let v = self.params[key];
            if v.fract() != 0.0 || v < min {
                return Err(IdError::Parameter(format!(
                    "{}: {key} must be an integer >= {min}, got {v}",
                    self.name
                )));
            }
            Ok(())
        };
        match self.name {
            EstimatorName::Pca => {
                let k = self.param("k");
                if !(k.is_finite() && k > 1.0) {
                    return Err(IdError::Parameter(format!("pca: k must be > 1, got {k}")));
                }
            }
            EstimatorName::Fishers => {
                let c = self.param("cond");
                if !(c.is_finite() && c > 1.0) {
                    return Err(IdError::Parameter(format!(
                        "fishers: cond must be > 1, got {c}"
                    )));
                }
            }
            EstimatorName::Corrint => {
                int_at_least("k1", 1.0)?;
                int_at_least("k2", 2.0)?;
                if self.param("k1") >= self.param("k2") {
                    return Err(IdError::Parameter("corrint: k1 must be < k2".into()));
                }
            }
            EstimatorName::Twonn => {
                let f = self.param("discard");
                if !(0.0..1.0).contains(&f) {
                    return Err(IdError::Parameter(format!(
                        "twonn: discard must lie in [0, 1), got {f}"
                    )));
                }
            }
            EstimatorName::Ess | EstimatorName::Mle => int_at_least("k", 3.0)?,
            EstimatorName::Tle => int_at_least("k", 5.0)?,
            EstimatorName::Mom | EstimatorName::Mada => int_at_least("k", 2.0)?,
        }
        Ok(())
    }

    /// Neighbor count this estimator reads from a k-NN table.
    pub fn neighbors_needed(&self) -> Option<usize> {
        match self.name {
            EstimatorName::Pca | EstimatorName::Fishers => None,
            EstimatorName::Corrint => Some(self.int_param("k2")),
            EstimatorName::Twonn => Some(2),
            _ => Some(self.int_param("k")),
        }
    }
}

/// One intrinsic-dimension estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdEstimate {
    pub value: f64,
    /// Points the estimator actually saw (after duplicate removal).
    pub n_used: usize,
    pub estimator: EstimatorSpec,
    pub diagnostics: BTreeMap<String, f64>,
}

/// Raw output of an estimator before it is tied to a spec.
#[derive(Clone, Debug, Default)]
pub(crate) struct Fit {
    pub value: f64,
    pub diagnostics: BTreeMap<String, f64>,
}

impl Fit {
    pub(crate) fn new(value: f64) -> Self {
        Self {
            value,
            diagnostics: BTreeMap::new(),
        }
    }

    pub(crate) fn with(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }

    pub(crate) fn into_estimate(self, spec: EstimatorSpec, n_used: usize) -> Result<IdEstimate> {
        if !(self.value.is_finite() && self.value > 0.0) {
            return Err(IdError::Degenerate(format!(
                "{} produced a non-positive or non-finite dimension ({})",
                spec.name, self.value
            )));
        }
        Ok(IdEstimate {
            value: self.value,
            n_used,
            estimator: spec,
            diagnostics: self.diagnostics,
        })
    }
}

/// Removes exact duplicate rows, keeping first occurrences in order.
/// Returns the cloud and the number of rows removed.
pub fn dedup_rows<T: Scalar>(cloud: &PointCloud<T>) -> (Cow<'_, PointCloud<T>>, usize) {
    let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(cloud.n());
    let mut keep = Vec::with_capacity(cloud.n());
    for (i, row) in cloud.rows().enumerate() {
        let key: Vec<u64> = row
            .iter()
            .map(|v| {
                let x = v.as_f64();
                // +0.0 and -0.0 are the same point
                if x == 0.0 {
                    0u64
                } else {
                    x.to_bits()
                }
            })
            .collect();
        if seen.insert(key) {
            keep.push(i);
        }
    }
    let removed = cloud.n() - keep.len();
    if removed == 0 {
        (Cow::Borrowed(cloud), 0)
    } else {
        let unique = cloud
            .select_rows(&keep)
            .expect("indices come from the cloud itself");
        (Cow::Owned(unique), removed)
    }
}

/// Runs one neighbor-based estimator on a cloud and its k-NN table.
///
/// The table must belong to `cloud` and have at least
/// `spec.neighbors_needed()` columns.
pub fn estimate_with_neighbors<T: Scalar>(
    spec: &EstimatorSpec,
    cloud: &PointCloud<T>,
    table: &NeighborTable,
) -> Result<IdEstimate> {
    spec.validate()?;
    let need = spec.neighbors_needed().ok_or_else(|| {
        IdError::Parameter(format!("{} does not use a neighbor table", spec.name))
    })?;
    if table.k() < need || table.n() != cloud.n() {
        return Err(IdError::Parameter(format!(
            "{} needs a {need}-NN table for {} points, got k={} for {} points",
            spec.name,
            cloud.n(),
            table.k(),
            table.n()
        )));
    }
    let fit = match spec.name {
        EstimatorName::Corrint => {
            corrint::corrint_fit(cloud, table, spec.int_param("k1"), spec.int_param("k2"))?
        }
        EstimatorName::Twonn => twonn::twonn_table_fit(table, spec.param("discard"))?,
        EstimatorName::Ess => ess::ess_fit(cloud, table, spec.int_param("k"))?,
        EstimatorName::Tle => tle::tle_fit(cloud, table, spec.int_param("k"))?,
        EstimatorName::Mle => local::mle_fit(table, spec.int_param("k"))?,
        EstimatorName::Mom => local::mom_fit(table, spec.int_param("k"))?,
        EstimatorName::Mada => local::mada_fit(table, spec.int_param("k"))?,
        EstimatorName::Pca | EstimatorName::Fishers => unreachable!(),
    };
    fit.into_estimate(spec.clone(), cloud.n())
}

fn estimate_global<T: Scalar>(spec: &EstimatorSpec, cloud: &PointCloud<T>) -> Result<IdEstimate> {
    let fit = match spec.name {
        EstimatorName::Pca => pca::pca_fit(cloud, spec.param("k"))?,
        EstimatorName::Fishers => {
            fishers::fishers_fit(cloud, spec.param("cond"), CalibrationTable::shared())?
        }
        _ => unreachable!(),
    };
    fit.into_estimate(spec.clone(), cloud.n())
}

/// Estimates the intrinsic dimension of `cloud` with the estimator named
/// in `spec`. Neighbor-based estimators run on the deduplicated cloud.
pub fn estimate<T: Scalar>(spec: &EstimatorSpec, cloud: &PointCloud<T>) -> Result<IdEstimate> {
    estimate_many(std::slice::from_ref(spec), cloud)
        .pop()
        .expect("one result per spec")
}

/// Runs several estimators on one cloud, sharing duplicate removal and a
/// single k-NN search sized for the most demanding estimator.
pub fn estimate_many<T: Scalar>(
    specs: &[EstimatorSpec],
    cloud: &PointCloud<T>,
) -> Vec<Result<IdEstimate>> {
    let mut out: Vec<Option<Result<IdEstimate>>> = specs.iter().map(|_| None).collect();
    let mut k_max = 0;
    for (slot, spec) in out.iter_mut().zip(specs) {
        match spec.validate() {
            Err(e) => *slot = Some(Err(e)),
            Ok(()) => {
                if let Some(k) = spec.neighbors_needed() {
                    k_max = k_max.max(k);
                }
            }
        }
    }

    if k_max > 0 {
        let (unique, removed) = dedup_rows(cloud);
        let table = if k_max < unique.n() {
            knn(unique.as_ref(), k_max)
        } else {
            Err(IdError::Sample(format!(
                "{} distinct points cannot supply {k_max} neighbors",
                unique.n()
            )))
        };
        for (slot, spec) in out.iter_mut().zip(specs) {
            if slot.is_some() || spec.neighbors_needed().is_none() {
                continue;
            }
            let result = match &table {
                Ok(t) => estimate_with_neighbors(spec, unique.as_ref(), t).map(|mut e| {
                    e.diagnostics
                        .insert("duplicates_removed".into(), removed as f64);
                    e
                }),
                Err(e) => Err(clone_error(e)),
            };
            *slot = Some(result);
        }
    }

    for (slot, spec) in out.iter_mut().zip(specs) {
        if slot.is_none() {
            *slot = Some(estimate_global(spec, cloud));
        }
    }
    out.into_iter().map(|r| r.expect("filled above")).collect()
}

fn clone_error(e: &IdError) -> IdError {
    match e {
        IdError::Parameter(m) => IdError::Parameter(m.clone()),
        IdError::Sample(m) => IdError::Sample(m.clone()),
        other => IdError::Degenerate(other.to_string()),
    }
}

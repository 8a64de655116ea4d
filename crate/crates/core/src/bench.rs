//! Accuracy matrix of the estimators on synthetic manifolds of known
//! dimension.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimators::{estimate, estimate_many, EstimatorName, EstimatorSpec};
use crate::manifolds::{generate, Family, ManifoldSpec};

/// Estimators checked on balls and cubes.
pub const NEIGHBOR_ESTIMATORS: [EstimatorName; 7] = [
    EstimatorName::Twonn,
    EstimatorName::Mle,
    EstimatorName::Mom,
    EstimatorName::Mada,
    EstimatorName::Tle,
    EstimatorName::Corrint,
    EstimatorName::Ess,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n: usize,
    pub d_ambient: usize,
    /// Intrinsic dimensions for the ball and cube rows.
    pub dims: Vec<usize>,
    /// Largest subspace / sphere dimension for the PCA and FisherS rows.
    pub max_dim: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            d_ambient: 100,
            dims: vec![1, 2, 5, 10],
            max_dim: 10,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchCase {
    pub family: Family,
    pub d_intrinsic: usize,
    pub estimator: EstimatorName,
    pub value: Option<f64>,
    pub error: Option<String>,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub cases: Vec<BenchCase>,
    pub elapsed_secs: f64,
}

impl BenchReport {
    pub fn all_pass(&self) -> bool {
        self.cases.iter().all(|c| c.pass)
    }
}

/// Allowed absolute error of a neighbor-based estimate at dimension `d`.
pub fn neighbor_tolerance(d: usize) -> f64 {
    (0.2 * d as f64).max(1.0)
}

pub const FISHERS_TOLERANCE: f64 = 1.5;

fn case(
    family: Family,
    d: usize,
    estimator: EstimatorName,
    result: Result<f64>,
    tolerance: f64,
) -> BenchCase {
    let (value, error) = match result {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    BenchCase {
        family,
        d_intrinsic: d,
        estimator,
        value,
        error,
        tolerance,
        pass: value.is_some_and(|v| (v - d as f64).abs() <= tolerance),
    }
}

pub fn accuracy_matrix(config: &BenchConfig) -> Result<BenchReport> {
    let start = Instant::now();
    let mut cases = Vec::new();
    let specs: Vec<EstimatorSpec> = NEIGHBOR_ESTIMATORS
        .iter()
        .map(|&e| EstimatorSpec::new(e))
        .collect();
    for family in [Family::UniformBall, Family::UniformCube] {
        for &d in &config.dims {
            let spec =
                ManifoldSpec::new(family, d, config.d_ambient, config.n).with_seed(config.seed);
            let (cloud, truth) = generate(&spec)?;
            for (s, r) in specs.iter().zip(estimate_many(&specs, &cloud)) {
                cases.push(case(
                    family,
                    truth,
                    s.name,
                    r.map(|e| e.value),
                    neighbor_tolerance(truth),
                ));
            }
            log::info!("{family} d={d} done after {:.1?}", start.elapsed());
        }
    }
    let pca = EstimatorSpec::new(EstimatorName::Pca);
    let fishers = EstimatorSpec::new(EstimatorName::Fishers);
    for d in 1..=config.max_dim {
        let spec = ManifoldSpec::new(
            Family::LinearSubspace,
            d,
            config.d_ambient,
            config.n.min(2000),
        )
        .with_seed(config.seed);
        let (cloud, truth) = generate(&spec)?;
        cases.push(case(
            Family::LinearSubspace,
            truth,
            pca.name,
            estimate(&pca, &cloud).map(|e| e.value),
            0.0,
        ));

        let d_amb = config.d_ambient.max(d + 1);
        let spec =
            ManifoldSpec::new(Family::SphereSurface, d, d_amb, config.n).with_seed(config.seed);
        let (cloud, truth) = generate(&spec)?;
        cases.push(case(
            Family::SphereSurface,
            truth,
            fishers.name,
            estimate(&fishers, &cloud).map(|e| e.value),
            FISHERS_TOLERANCE,
        ));
    }
    Ok(BenchReport {
        config: config.clone(),
        cases,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

//! Per-layer ID profiles, their scalar aggregates and convergence curves
//! over subsample size.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IdError, Result};
use crate::estimators::{estimate, estimate_many, EstimatorSpec, IdEstimate};
use crate::numeric::shifted_mean;
use crate::scalar::Scalar;
use crate::tensor_io::{LayerStack, PointCloud};

/// Largest fraction of layers that may fail before a profile is rejected.
pub const MAX_MISSING_FRACTION: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerFailure {
    pub layer: usize,
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdProfile {
    pub estimator: EstimatorSpec,
    /// One entry per layer, index 0 being the embedding output; `None`
    /// where the estimator failed (see `failures`).
    pub per_layer: Vec<Option<IdEstimate>>,
    pub failures: Vec<LayerFailure>,
    pub dataset_id: String,
    pub model_id: String,
    pub d_ambient: usize,
}

impl IdProfile {
    /// Per-layer values, `None` for missing layers.
    pub fn values(&self) -> Vec<Option<f64>> {
        self.per_layer
            .iter()
            .map(|e| e.as_ref().map(|e| e.value))
            .collect()
    }
}

/// Runs `spec` on every layer of `stack`.
pub fn profile<T: Scalar>(
    stack: &LayerStack<T>,
    spec: &EstimatorSpec,
    dataset_id: &str,
    model_id: &str,
) -> Result<IdProfile> {
    spec.validate()?;
    let results: Vec<Result<IdEstimate>> = stack
        .layers()
        .par_iter()
        .map(|layer| estimate(spec, layer))
        .collect();
    let mut per_layer = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (layer, r) in results.into_iter().enumerate() {
        match r {
            Ok(e) => per_layer.push(Some(e)),
            Err(e) => {
                log::warn!("layer {layer}: {} failed: {e}", spec.name);
                failures.push(LayerFailure {
                    layer,
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                });
                per_layer.push(None);
            }
        }
    }
    let m = per_layer.len();
    if failures.len() as f64 > MAX_MISSING_FRACTION * m as f64 {
        return Err(IdError::Quality(format!(
            "{} of {m} layers failed for {}: {}",
            failures.len(),
            spec.name,
            failures
                .iter()
                .map(|f| format!("layer {} ({})", f.layer, f.message))
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }
    Ok(IdProfile {
        estimator: spec.clone(),
        per_layer,
        failures,
        dataset_id: dataset_id.to_string(),
        model_id: model_id.to_string(),
        d_ambient: stack.d_ambient(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileAggregate {
    pub max: f64,
    pub min: f64,
    pub mean: f64,
    /// Lower-middle element for an even number of layers.
    pub median: f64,
    pub first: f64,
    pub last: f64,
    pub change: f64,
    pub range: f64,
    pub layers_used: usize,
}

/// Aggregates of a complete per-layer series.
pub fn aggregate_values(values: &[f64]) -> Result<ProfileAggregate> {
    if values.is_empty() {
        return Err(IdError::Empty("cannot aggregate an empty profile".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let first = values[0];
    let last = values[values.len() - 1];
    Ok(ProfileAggregate {
        max,
        min,
        mean: shifted_mean(values).clamp(min, max),
        median: sorted[(sorted.len() - 1) / 2],
        first,
        last,
        change: last - first,
        range: max - min,
        layers_used: values.len(),
    })
}

/// Aggregates over the layers present in `profile`; missing layers are
/// skipped, so `first`/`last` are the first/last available layers.
pub fn aggregate(profile: &IdProfile) -> Result<ProfileAggregate> {
    let values: Vec<f64> = profile.values().into_iter().flatten().collect();
    aggregate_values(&values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub estimator: EstimatorSpec,
    pub sizes: Vec<usize>,
    pub mean_id: Vec<f64>,
    /// Sample standard deviation over seeds (0 at the full size).
    pub std_id: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Requested sizes left out because the estimator failed there.
    pub skipped: Vec<usize>,
}

/// Sorted indices of a uniform subsample without replacement; depends only
/// on `(n, size, seed)`.
pub fn subsample_indices(n: usize, size: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(size as u64);
    let mut idx = index::sample(&mut rng, n, size).into_vec();
    idx.sort_unstable();
    idx
}

/// `count` log-spaced integer sizes from `lo` to `hi` inclusive
/// (duplicates after rounding removed).
pub fn log_sizes(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    if count <= 1 || lo >= hi {
        return vec![hi];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<usize> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp().round() as usize)
        .collect();
    out[0] = lo;
    out[count - 1] = hi;
    out.dedup();
    out
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let m = shifted_mean(values);
    if values.len() < 2 || values.iter().all(|v| *v == values[0]) {
        return (m, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    (m, (ss / (values.len() - 1) as f64).sqrt())
}

/// Convergence curves for several estimators at once; each subsample is
/// shared by all estimators (one k-NN search per subsample).
pub fn convergence_multi<T: Scalar>(
    cloud: &PointCloud<T>,
    specs: &[EstimatorSpec],
    sizes: &[usize],
    seeds: &[u64],
) -> Result<Vec<ConvergenceCurve>> {
    if seeds.len() < 2 {
        return Err(IdError::Parameter(format!(
            "convergence needs at least 2 seeds, got {}",
            seeds.len()
        )));
    }
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.is_empty() || sizes[0] == 0 {
        return Err(IdError::Parameter(
            "sizes must be non-empty and positive".into(),
        ));
    }
    let n = cloud.n();
    if let Some(&big) = sizes.last() {
        if big > n {
            return Err(IdError::Parameter(format!(
                "largest size {big} exceeds the {n} available points"
            )));
        }
    }
    for s in specs {
        s.validate()?;
    }

    // values[spec][size] = Some(per-seed estimates) or None when skipped
    let mut values: Vec<Vec<Option<Vec<f64>>>> = vec![Vec::new(); specs.len()];
    for &size in &sizes {
        let mut per_spec: Vec<Option<Vec<f64>>> = vec![Some(Vec::new()); specs.len()];
        let values_of = |run: Vec<Result<IdEstimate>>| -> Vec<std::result::Result<f64, String>> {
            run.into_iter()
                .map(|r| r.map(|e| e.value).map_err(|e| e.to_string()))
                .collect()
        };
        let runs: Vec<Vec<std::result::Result<f64, String>>> = if size == n {
            // the full sample is the same for every seed
            let full = values_of(estimate_many(specs, cloud));
            vec![full; seeds.len()]
        } else {
            seeds
                .iter()
                .map(|&seed| {
                    let sub = cloud.select_rows(&subsample_indices(n, size, seed))?;
                    Ok(values_of(estimate_many(specs, &sub)))
                })
                .collect::<Result<_>>()?
        };
        for run in runs {
            for (slot, r) in per_spec.iter_mut().zip(run) {
                match (slot.as_mut(), r) {
                    (Some(v), Ok(x)) => v.push(x),
                    (Some(_), Err(e)) => {
                        log::warn!("skipping size {size}: {e}");
                        *slot = None;
                    }
                    (None, _) => {}
                }
            }
        }
        for (dst, src) in values.iter_mut().zip(per_spec) {
            dst.push(src);
        }
    }

    Ok(specs
        .iter()
        .zip(values)
        .map(|(spec, per_size)| {
            let mut curve = ConvergenceCurve {
                estimator: spec.clone(),
                sizes: Vec::new(),
                mean_id: Vec::new(),
                std_id: Vec::new(),
                seeds: seeds.to_vec(),
                skipped: Vec::new(),
            };
            for (&size, v) in sizes.iter().zip(per_size) {
                match v {
                    Some(v) => {
                        let (m, s) = mean_std(&v);
                        curve.sizes.push(size);
                        curve.mean_id.push(m);
                        curve.std_id.push(s);
                    }
                    None => curve.skipped.push(size),
                }
            }
            curve
        })
        .collect())
}

pub fn convergence<T: Scalar>(
    cloud: &PointCloud<T>,
    spec: &EstimatorSpec,
    sizes: &[usize],
    seeds: &[u64],
) -> Result<ConvergenceCurve> {
    Ok(
        convergence_multi(cloud, std::slice::from_ref(spec), sizes, seeds)?
            .pop()
            .expect("one curve per spec"),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Admission {
    Reject,
    UseAll,
    Subsample { n: usize },
}

pub const ADMIT_THRESHOLD: usize = 10_000;
pub const ADMIT_CAP: usize = 50_000;

/// Whether a dataset of `n` sequences is large enough, and how many of
/// them to keep.
pub fn admit_dataset(n: usize, threshold: usize, cap: usize) -> Admission {
    if n < threshold {
        Admission::Reject
    } else if n <= cap {
        Admission::UseAll
    } else {
        Admission::Subsample { n: cap }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::EstimatorName;

    #[test]
    fn aggregates_by_hand() {
        let a = aggregate_values(&[3.0, 7.0, 5.0]).unwrap();
        assert_eq!(
            (a.max, a.min, a.first, a.last, a.mean, a.median, a.change, a.range),
            (7.0, 3.0, 3.0, 5.0, 5.0, 5.0, 2.0, 4.0)
        );
        let c = aggregate_values(&[4.0; 4]).unwrap();
        assert_eq!((c.change, c.range), (0.0, 0.0));
        assert_eq!(aggregate_values(&[1.0, 2.0, 3.0, 4.0]).unwrap().median, 2.0);
        assert!(matches!(aggregate_values(&[]), Err(IdError::Empty(_))));
    }

    #[test]
    fn admission_rules() {
        assert_eq!(
            admit_dataset(9999, ADMIT_THRESHOLD, ADMIT_CAP),
            Admission::Reject
        );
        assert_eq!(
            admit_dataset(30000, ADMIT_THRESHOLD, ADMIT_CAP),
            Admission::UseAll
        );
        assert_eq!(
            admit_dataset(74_004_228, ADMIT_THRESHOLD, ADMIT_CAP),
            Admission::Subsample { n: 50000 }
        );
        let v = serde_json::to_value(Admission::Subsample { n: 5 }).unwrap();
        assert_eq!(v["decision"], "subsample");
    }

    #[test]
    fn subsample_is_deterministic() {
        let a = subsample_indices(1000, 100, 3);
        assert_eq!(a, subsample_indices(1000, 100, 3));
        assert_ne!(a, subsample_indices(1000, 100, 4));
        assert_eq!(a.len(), 100);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn log_sizes_span_range() {
        let s = log_sizes(200, 50000, 9);
        assert_eq!(s.first(), Some(&200));
        assert_eq!(s.last(), Some(&50000));
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rank_ladder_profile() {
        let mut layers = Vec::new();
        for r in 1..=3 {
            let rows: Vec<Vec<f64>> = (0..40)
                .map(|i| {
                    let mut v = vec![0.0; 5];
                    for (j, x) in v.iter_mut().take(r).enumerate() {
                        *x = ((i * (j + 3) * 7919) % 101) as f64;
                    }
                    v
                })
                .collect();
            layers.push(PointCloud::from_rows(&rows).unwrap());
        }
        let stack = LayerStack::new(layers).unwrap();
        let p = profile(&stack, &EstimatorSpec::new(EstimatorName::Pca), "d", "m").unwrap();
        assert_eq!(p.values(), vec![Some(1.0), Some(2.0), Some(3.0)]);
    }

    #[test]
    fn too_many_failed_layers() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 1.0]).collect();
        let c = PointCloud::from_rows(&rows).unwrap();
        let stack = LayerStack::new(vec![c.clone(), c]).unwrap();
        let r = profile(&stack, &EstimatorSpec::new(EstimatorName::Mle), "d", "m");
        assert!(matches!(r, Err(IdError::Quality(_))));
    }

    #[test]
    fn full_size_has_zero_spread() {
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                vec![
                    (i as f64 * 0.37).sin(),
                    (i as f64 * 1.3).cos(),
                    i as f64 * 0.01,
                ]
            })
            .collect();
        let c = PointCloud::from_rows(&rows).unwrap();
        let spec = EstimatorSpec::new(EstimatorName::Twonn);
        let curve = convergence(&c, &spec, &[60, 5], &[1, 2, 3]).unwrap();
        assert_eq!(curve.sizes, vec![60]);
        assert_eq!(curve.skipped, vec![5]);
        assert_eq!(curve.std_id, vec![0.0]);
        assert!(convergence(&c, &spec, &[61], &[1, 2]).is_err());
        assert!(convergence(&c, &spec, &[60], &[1]).is_err());
    }
}

//! Synthetic point clouds with known intrinsic dimension.
//!
//! Samples are drawn in the family's minimal embedding, zero-padded to the
//! requested ambient dimension and then rotated by a seeded random
//! orthogonal matrix. Points, rotation and noise use separate streams of
//! the same ChaCha8 seed, so the rotation never perturbs the samples.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{IdError, Result};
use crate::tensor_io::PointCloud;

const POINT_STREAM: u64 = 0;
const ROTATION_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    UniformBall,
    UniformCube,
    SphereSurface,
    SwissRoll,
    LinearSubspace,
    GaussianBlob,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::UniformBall,
        Family::UniformCube,
        Family::SphereSurface,
        Family::SwissRoll,
        Family::LinearSubspace,
        Family::GaussianBlob,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::UniformBall => "uniform_ball",
            Family::UniformCube => "uniform_cube",
            Family::SphereSurface => "sphere_surface",
            Family::SwissRoll => "swiss_roll",
            Family::LinearSubspace => "linear_subspace",
            Family::GaussianBlob => "gaussian_blob",
        }
    }

    /// Coordinates needed to embed a `d`-dimensional member of the family.
    pub fn min_ambient(self, d: usize) -> usize {
        match self {
            Family::SphereSurface => d + 1,
            Family::SwissRoll => 3,
            _ => d,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = IdError;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| IdError::Parameter(format!("unknown manifold family '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub family: Family,
    pub d_intrinsic: usize,
    pub d_ambient: usize,
    pub n: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ManifoldSpec {
    pub fn new(family: Family, d_intrinsic: usize, d_ambient: usize, n: usize) -> Self {
        Self {
            family,
            d_intrinsic,
            d_ambient,
            n,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d_intrinsic == 0 {
            return Err(IdError::Parameter(
                "n and d_intrinsic must be positive".into(),
            ));
        }
        if self.family == Family::SwissRoll && self.d_intrinsic != 2 {
            return Err(IdError::Parameter(format!(
                "swiss_roll is 2-dimensional, got d_intrinsic={}",
                self.d_intrinsic
            )));
        }
        let need = self.family.min_ambient(self.d_intrinsic);
        if self.d_ambient < need {
            return Err(IdError::Parameter(format!(
                "{} with d={} needs d_ambient >= {need}, got {}",
                self.family, self.d_intrinsic, self.d_ambient
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(IdError::Parameter(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn gaussian(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out {
        *v = StandardNormal.sample(rng);
    }
}

/// Uniform direction in `R^len`.
fn direction(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    loop {
        gaussian(rng, out);
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.iter_mut().for_each(|v| *v /= norm);
            return;
        }
    }
}

fn sample_minimal(spec: &ManifoldSpec) -> Vec<f64> {
    let d = spec.d_intrinsic;
    let m = spec.family.min_ambient(d);
    let mut rng = rng(spec.seed, POINT_STREAM);
    let mut data = vec![0.0; spec.n * m];
    for row in data.chunks_exact_mut(m) {
        match spec.family {
            Family::UniformBall => {
                direction(&mut rng, row);
                let r = rng.gen::<f64>().powf(1.0 / d as f64);
                row.iter_mut().for_each(|v| *v *= r);
            }
            Family::UniformCube => row.iter_mut().for_each(|v| *v = rng.gen()),
            Family::SphereSurface => direction(&mut rng, row),
            Family::SwissRoll => {
                let t = 1.5 * std::f64::consts::PI * (1.0 + 2.0 * rng.gen::<f64>());
                let h = 21.0 * rng.gen::<f64>();
                row.copy_from_slice(&[t * t.cos(), h, t * t.sin()]);
            }
            Family::LinearSubspace | Family::GaussianBlob => gaussian(&mut rng, row),
        }
    }
    data
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`.
pub fn random_rotation(dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng(seed, ROTATION_STREAM);
    let g = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Samples `spec` and returns the cloud with its ground-truth dimension.
pub fn generate(spec: &ManifoldSpec) -> Result<(PointCloud<f64>, usize)> {
    spec.validate()?;
    let m = spec.family.min_ambient(spec.d_intrinsic);
    let big_d = spec.d_ambient;
    let minimal = sample_minimal(spec);
    let mut data = if big_d > m {
        let q = random_rotation(big_d, spec.seed);
        let mut out = vec![0.0; spec.n * big_d];
        // x_rot = Q [x; 0], only the first m columns of Q matter
        for (src, dst) in minimal.chunks_exact(m).zip(out.chunks_exact_mut(big_d)) {
            for (i, o) in dst.iter_mut().enumerate() {
                *o = (0..m).map(|j| q[(i, j)] * src[j]).sum();
            }
        }
        out
    } else {
        minimal
    };
    if spec.noise_sigma > 0.0 {
        let mut rng = rng(spec.seed, NOISE_STREAM);
        for v in &mut data {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += spec.noise_sigma * e;
        }
    }
    let cloud = PointCloud::new(data, spec.n, big_d)?;
    Ok((cloud, spec.d_intrinsic))
}

//! Reference implementations used as oracles by the integration tests.
//! Deliberately naive: no screening, no blocking, no shared code with the
//! library beyond the point container.
#![allow(dead_code)]

use idlab::Cloud;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sorted (squared distance, index) neighbor lists by full O(N^2) scan.
pub fn brute_knn(cloud: &Cloud, k: usize) -> Vec<Vec<(f64, usize)>> {
    let n = cloud.n();
    (0..n)
        .map(|i| {
            let a = cloud.row(i);
            let mut all: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let b = cloud.row(j);
                    let mut s = 0.0;
                    for t in 0..a.len() {
                        let diff = a[t] - b[t];
                        s += diff * diff;
                    }
                    (s, j)
                })
                .collect();
            all.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            all.truncate(k);
            all
        })
        .collect()
}

/// Haar-random orthogonal matrix (row-major) by Gram-Schmidt on a
/// Gaussian matrix, with sign correction.
pub fn gram_schmidt_rotation(dim: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while q.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| r.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for u in &q {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                for (x, y) in v.iter_mut().zip(u) {
                    *x -= dot * y;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            q.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    q.into_iter().flatten().collect()
}

pub fn rotate(cloud: &Cloud, m: &[f64]) -> Cloud {
    let d = cloud.d_ambient();
    cloud
        .map_rows(d, |src, dst| {
            for (i, out) in dst.iter_mut().enumerate() {
                *out = (0..d).map(|j| m[i * d + j] * src[j]).sum();
            }
        })
        .unwrap()
}

pub fn affine(cloud: &Cloud, scale: f64, shift: &[f64]) -> Cloud {
    cloud
        .map_rows(cloud.d_ambient(), |src, dst| {
            for ((o, s), t) in dst.iter_mut().zip(src).zip(shift) {
                *o = scale * s + t;
            }
        })
        .unwrap()
}

/// Points uniform in the unit `d`-ball, written into the first `d` of
/// `ambient` coordinates.
pub fn ball(n: usize, d: usize, ambient: usize, seed: u64) -> Cloud {
    let mut r = rng(seed);
    let mut data = vec![0.0; n * ambient];
    for row in data.chunks_exact_mut(ambient) {
        let v: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let radius = r.gen::<f64>().powf(1.0 / d as f64);
        for (o, x) in row.iter_mut().zip(&v) {
            *o = x / norm * radius;
        }
    }
    Cloud::new(data, n, ambient).unwrap()
}

/// Monte Carlo mean of |sin| of the angle between two random directions
/// in R^d.
pub fn mc_mean_abs_sine(d: usize, samples: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut acc = 0.0;
    for _ in 0..samples {
        let a: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum();
        let nb: f64 = b.iter().map(|x| x * x).sum();
        acc += (1.0 - dot * dot / (na * nb)).max(0.0).sqrt();
    }
    acc / samples as f64
}

/// Mid-ranks by counting: rank = #less + (#equal + 1) / 2.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let less = x.iter().filter(|w| *w < v).count() as f64;
            let eq = x.iter().filter(|w| *w == v).count() as f64;
            less + (eq + 1.0) / 2.0
        })
        .collect()
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    sxy / (sxx * syy).sqrt()
}

fn permutations(items: &[f64]) -> Vec<Vec<f64>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Spearman rho and two-sided permutation p by listing all n! orderings.
pub fn spearman_enumeration(x: &[f64], y: &[f64]) -> (f64, f64) {
    let rx = midranks(x);
    let ry = midranks(y);
    let rho = pearson(&rx, &ry);
    let perms = permutations(&ry);
    let hits = perms
        .iter()
        .filter(|p| pearson(&rx, p).abs() >= rho.abs() - 1e-9)
        .count();
    (rho, hits as f64 / perms.len() as f64)
}

/// Difference in units in the last place.
pub fn ulps(a: f64, b: f64) -> u64 {
    (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
}

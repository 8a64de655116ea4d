//! Dense matrices, layer stacks and run manifests, plus their on-disk formats.

mod manifest;
mod npy;

use rayon::prelude::*;

use crate::error::{IdError, Result};
use crate::scalar::Scalar;

pub use manifest::RunManifest;
pub use npy::{load_matrix, load_matrix_as, read_npy, save_matrix, write_npy, NpyHeader};

/// An `N x D` row-major matrix of finite values: one row per datapoint.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud<T: Scalar = f64> {
    data: Vec<T>,
    n: usize,
    d: usize,
}

impl<T: Scalar> PointCloud<T> {
    /// Builds a cloud from row-major data, checking shape and finiteness.
    pub fn new(data: Vec<T>, n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(IdError::Shape(format!(
                "point cloud needs at least one row and one column, got ({n}, {d})"
            )));
        }
        if data.len() != n * d {
            return Err(IdError::Shape(format!(
                "buffer of {} values does not match shape ({n}, {d})",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(IdError::Data {
                row: pos / d,
                message: format!("non-finite value in column {}", pos % d),
            });
        }
        Ok(Self { data, n, d })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(IdError::Shape(format!(
                "row {bad} has {} columns, expected {d}",
                rows[bad].len()
            )));
        }
        Self::new(rows.concat(), n, d)
    }

    /// Number of points `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Ambient dimension `D`.
    pub fn d_ambient(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Rows at `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(IdError::Index {
                    index: i,
                    len: self.n,
                });
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(data, indices.len(), self.d)
    }

    /// Element-wise conversion to another scalar type.
    pub fn cast<U: Scalar>(&self) -> PointCloud<U> {
        PointCloud {
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.as_f64()))
                .collect(),
            n: self.n,
            d: self.d,
        }
    }

    /// Same points with `extra` zero columns appended.
    pub fn pad_zeros(&self, extra: usize) -> Self {
        let d = self.d + extra;
        let mut data = Vec::with_capacity(self.n * d);
        for row in self.rows() {
            data.extend_from_slice(row);
            data.extend(std::iter::repeat(T::zero()).take(extra));
        }
        Self { data, n: self.n, d }
    }

    /// Applies `f` to every row, producing rows of width `d_out`.
    pub fn map_rows<F>(&self, d_out: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&[T], &mut [T]),
    {
        let mut data = vec![T::zero(); self.n * d_out];
        for (src, dst) in self.rows().zip(data.chunks_exact_mut(d_out)) {
            f(src, dst);
        }
        Self::new(data, self.n, d_out)
    }
}

/// Representations of the same `N` inputs at `M` successive layers.
///
/// Layer 0 is the contextualized-embedding output; layer `j > 0` is the
/// output of block `j`.
#[derive(Clone, Debug)]
pub struct LayerStack<T: Scalar = f64> {
    layers: Vec<PointCloud<T>>,
}

impl<T: Scalar> LayerStack<T> {
    pub fn new(layers: Vec<PointCloud<T>>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| IdError::Empty("layer stack needs at least one layer".into()))?;
        let (n, d) = (first.n(), first.d_ambient());
        for (j, layer) in layers.iter().enumerate().skip(1) {
            if layer.n() != n || layer.d_ambient() != d {
                return Err(IdError::Consistency {
                    layer: j,
                    message: format!(
                        "shape ({}, {}) differs from ({n}, {d})",
                        layer.n(),
                        layer.d_ambient()
                    ),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Number of layers `M`.
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn n(&self) -> usize {
        self.layers[0].n()
    }

    pub fn d_ambient(&self) -> usize {
        self.layers[0].d_ambient()
    }

    pub fn layers(&self) -> &[PointCloud<T>] {
        &self.layers
    }

    pub fn layer(&self, j: usize) -> &PointCloud<T> {
        &self.layers[j]
    }
}

/// Loads every layer file named by the manifest, in manifest order.
///
/// Files are read concurrently; a file whose shape disagrees with layer 0
/// yields a consistency error naming that layer's position.
pub fn load_layer_stack(manifest: &RunManifest) -> Result<LayerStack<f64>> {
    manifest.validate()?;
    let layers = manifest
        .layer_files
        .par_iter()
        .map(load_matrix)
        .collect::<Result<Vec<_>>>()?;
    LayerStack::new(layers)
}

//! Deterministic synthetic classification sets.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Isotropic blobs with means on a circle of radius 3.
    Gaussians,
    /// Interleaved spiral arms, one per class.
    Spirals,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    features: Tensor<S>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(features: Tensor<S>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let (rows, _) = features.dims2()?;
        if rows != labels.len() {
            return Err(Error::dim(format!(
                "{rows} rows but {} labels",
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l >= num_classes) {
            return Err(Error::input("label out of range"));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Tensor<S> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Rows at `indices`, in that order.
    pub fn gather(&self, indices: &[usize]) -> (Tensor<S>, Vec<usize>) {
        let d = self.input_dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.features.row(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (
            Tensor::new(vec![indices.len(), d], data).expect("gathered rows are well-formed"),
            labels,
        )
    }

    pub fn steps_per_epoch(&self, batch_size: usize) -> usize {
        self.len().div_ceil(batch_size)
    }

    /// A fresh shuffle split into consecutive batches; the last one may be short.
    pub fn epoch_batches<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(rng);
        order.chunks(batch_size).map(<[usize]>::to_vec).collect()
    }

    /// Fraction of rows in the most frequent class.
    pub fn majority_rate(&self) -> f64 {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        *counts.iter().max().unwrap_or(&0) as f64 / self.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let d = self.input_dim();
        for j in 0..d {
            let _ = write!(out, "x{j},");
        }
        out.push_str("label\n");
        for r in 0..self.len() {
            for v in self.features.row(r) {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{}", self.labels[r]);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetParams {
    pub kind: DatasetKind,
    pub n_train: usize,
    pub n_val: usize,
    pub classes: usize,
    pub input_dim: usize,
    pub noise: f64,
    pub seed: u64,
}

/// Train and validation splits, label-balanced, standardized on train statistics.
///
/// Spirals live in the first two input dimensions; further dimensions carry pure noise.
pub fn generate_dataset<S: Scalar>(params: &DatasetParams) -> Result<(Dataset<S>, Dataset<S>)> {
    if params.classes < 2 {
        return Err(Error::config("need at least 2 classes"));
    }
    if params.n_train == 0 || params.n_val == 0 {
        return Err(Error::config("train and validation sets must be non-empty"));
    }
    let min_dim = match params.kind {
        DatasetKind::Gaussians => 1,
        DatasetKind::Spirals => 2,
    };
    if params.input_dim < min_dim {
        return Err(Error::config(format!(
            "{:?} needs input_dim >= {min_dim}",
            params.kind
        )));
    }
    if !(params.noise >= 0.0) {
        return Err(Error::config("noise must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let centers = match params.kind {
        DatasetKind::Gaussians => {
            let mut c = vec![vec![0.0; params.input_dim]; params.classes];
            for (k, row) in c.iter_mut().enumerate() {
                let angle = 2.0 * PI * k as f64 / params.classes as f64;
                row[0] = 3.0 * angle.cos();
                if params.input_dim > 1 {
                    row[1] = 3.0 * angle.sin();
                } else {
                    row[0] = 3.0 * k as f64;
                }
            }
            c
        }
        DatasetKind::Spirals => Vec::new(),
    };
    let draw = |n: usize, rng: &mut ChaCha8Rng| {
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let k = i % params.classes;
            let mut x = vec![0.0; params.input_dim];
            match params.kind {
                DatasetKind::Gaussians => {
                    for (j, v) in x.iter_mut().enumerate() {
                        let z: f64 = StandardNormal.sample(rng);
                        *v = centers[k][j] + params.noise * z;
                    }
                }
                DatasetKind::Spirals => {
                    let t: f64 = rng.random_range(0.05..1.0);
                    let angle = 1.75 * 2.0 * PI * t + 2.0 * PI * k as f64 / params.classes as f64;
                    let (z0, z1): (f64, f64) =
                        (StandardNormal.sample(rng), StandardNormal.sample(rng));
                    x[0] = t * angle.cos() + params.noise * z0;
                    x[1] = t * angle.sin() + params.noise * z1;
                    for v in x.iter_mut().skip(2) {
                        *v = StandardNormal.sample(rng);
                    }
                }
            }
            rows.push(x);
            labels.push(k);
        }
        // Interleaved labels would make the first batch class-ordered; shuffle rows once.
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let rows: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
        let labels: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
        (rows, labels)
    };
    let (train_rows, train_labels) = draw(params.n_train, &mut rng);
    let (val_rows, val_labels) = draw(params.n_val, &mut rng);

    let d = params.input_dim;
    let n = train_rows.len() as f64;
    let mean: Vec<f64> = (0..d)
        .map(|j| train_rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let std: Vec<f64> = (0..d)
        .map(|j| {
            let var = train_rows
                .iter()
                .map(|r| (r[j] - mean[j]).powi(2))
                .sum::<f64>()
                / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let finish = |rows: Vec<Vec<f64>>, labels: Vec<usize>| -> Result<Dataset<S>> {
        let data: Vec<S> = rows
            .iter()
            .flat_map(|r| {
                (0..d)
                    .map(|j| S::of((r[j] - mean[j]) / std[j]))
                    .collect::<Vec<_>>()
            })
            .collect();
        Dataset::new(
            Tensor::new(vec![rows.len(), d], data)?,
            labels,
            params.classes,
        )
    };
    Ok((
        finish(train_rows, train_labels)?,
        finish(val_rows, val_labels)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kind: DatasetKind, noise: f64) -> DatasetParams {
        DatasetParams {
            kind,
            n_train: 300,
            n_val: 90,
            classes: 3,
            input_dim: 2,
            noise,
            seed: 17,
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let (a, va) = generate_dataset::<f64>(&params(DatasetKind::Spirals, 0.1)).unwrap();
        let (b, vb) = generate_dataset::<f64>(&params(DatasetKind::Spirals, 0.1)).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(va.to_csv(), vb.to_csv());
    }

    #[test]
    fn balanced_and_standardized() {
        let (train, val) = generate_dataset::<f64>(&params(DatasetKind::Gaussians, 0.5)).unwrap();
        assert_eq!(train.len(), 300);
        assert_eq!(val.len(), 90);
        assert!((train.majority_rate() - 1.0 / 3.0).abs() < 1e-12);
        for j in 0..2 {
            let col: Vec<f64> = (0..train.len())
                .map(|r| train.features().at2(r, j))
                .collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = params(DatasetKind::Spirals, 0.1);
        p.classes = 1;
        assert!(generate_dataset::<f64>(&p).is_err());
        let mut p = params(DatasetKind::Spirals, 0.1);
        p.input_dim = 1;
        assert!(generate_dataset::<f64>(&p).is_err());
    }

    #[test]
    fn batches_cover_everything_once() {
        let (train, _) = generate_dataset::<f64>(&params(DatasetKind::Gaussians, 0.5)).unwrap();
        let batches = train.epoch_batches(32, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(batches.len(), train.steps_per_epoch(32));
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, (0..300).collect::<Vec<_>>());
    }
}

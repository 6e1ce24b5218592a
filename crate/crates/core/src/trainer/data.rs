//! Datasets for the training demo.
//!
//! * `synthetic-blobs`: a Gaussian mixture drawn from the seed.
//! * `small-digits`: 8×8 grayscale digits read from a CSV file with header
//!   `label,pixel_0,…,pixel_63` and pixel values in `[0, 16]`.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{EocError, Result};

pub const DIGIT_PIXELS: usize = 64;
const DIGIT_MAX: f64 = 16.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DatasetSpec {
    SyntheticBlobs {
        classes: usize,
        dim: usize,
        samples: usize,
        /// Standard deviation of the class centres; within-class noise is 1.
        separation: f64,
    },
    SmallDigits {
        path: PathBuf,
    },
}

impl DatasetSpec {
    pub fn blobs(classes: usize) -> Self {
        DatasetSpec::SyntheticBlobs {
            classes,
            dim: 32,
            samples: 2000,
            separation: 1.0,
        }
    }

    pub fn load(&self, seed: u64) -> Result<Dataset> {
        match self {
            DatasetSpec::SyntheticBlobs {
                classes,
                dim,
                samples,
                separation,
            } => synthetic_blobs(*classes, *dim, *samples, *separation, seed),
            DatasetSpec::SmallDigits { path } => read_digits_csv(path),
        }
    }
}

/// Features (one sample per row) and integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub classes: usize,
}

/// Train / validation / test partition.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            classes: self.classes,
        }
    }

    /// Rescales every sample to mean 0 and variance `var` across its features.
    /// Constant samples become all zeros.
    pub fn normalize_samples(&mut self, var: f64) {
        for mut row in self.x.rows_mut() {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            row.mapv_inplace(|v| v - mean);
            let sd = (row.dot(&row) / n).sqrt();
            if sd > 0.0 {
                row.mapv_inplace(|v| v * var.sqrt() / sd);
            }
        }
    }

    /// Shuffles with `seed` and cuts 70% / 15% / 15%.
    pub fn split(&self, seed: u64) -> Result<Splits> {
        if self.len() < 10 {
            return Err(EocError::Config(format!(
                "dataset too small to split ({} samples)",
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = self.len() * 70 / 100;
        let n_val = self.len() * 15 / 100;
        Ok(Splits {
            train: self.select(&idx[..n_train]),
            val: self.select(&idx[n_train..n_train + n_val]),
            test: self.select(&idx[n_train + n_val..]),
        })
    }
}

pub fn synthetic_blobs(
    classes: usize,
    dim: usize,
    samples: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 || dim < 2 || samples < classes {
        return Err(EocError::Config(format!(
            "synthetic-blobs needs classes >= 2, dim >= 2 and samples >= classes \
             (got {classes}, {dim}, {samples})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || rng.sample::<f64, _>(StandardNormal);
    let centres = Array2::from_shape_simple_fn((classes, dim), || separation * normal());
    let y: Vec<usize> = (0..samples).map(|i| i % classes).collect();
    let mut x = Array2::zeros((samples, dim));
    for (mut row, &label) in x.rows_mut().into_iter().zip(&y) {
        row.assign(&centres.row(label));
        row.mapv_inplace(|c| c + normal());
    }
    Ok(Dataset { x, y, classes })
}

/// Reads the digit CSV. Labels must be 0–9; pixels must lie in `[0, 16]`.
pub fn read_digits_csv(path: &Path) -> Result<Dataset> {
    let csv_err = |source| EocError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    let expected: Vec<String> = std::iter::once("label".to_string())
        .chain((0..DIGIT_PIXELS).map(|i| format!("pixel_{i}")))
        .collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(EocError::Config(format!(
            "{}: header must be label,pixel_0..pixel_63",
            path.display()
        )));
    }
    let mut y = Vec::new();
    let mut pixels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let bad = |what: &str| {
            EocError::Config(format!("{}: row {}: {what}", path.display(), line + 2))
        };
        let label: usize = record[0].trim().parse().map_err(|_| bad("label is not an integer"))?;
        if label > 9 {
            return Err(bad("label outside 0..=9"));
        }
        y.push(label);
        for field in record.iter().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| bad("pixel is not a number"))?;
            if !(0.0..=DIGIT_MAX).contains(&v) {
                return Err(bad("pixel outside [0, 16]"));
            }
            pixels.push(v);
        }
    }
    let x = Array2::from_shape_vec((y.len(), DIGIT_PIXELS), pixels)
        .map_err(|e| EocError::Config(format!("{}: {e}", path.display())))?;
    Ok(Dataset { x, y, classes: 10 })
}

/// One-hot encoding with `classes` columns.
pub fn one_hot(labels: &[usize], classes: usize) -> Array2<f64> {
    let mut out = Array2::zeros((labels.len(), classes));
    for (i, &c) in labels.iter().enumerate() {
        out[[i, c]] = 1.0;
    }
    out
}

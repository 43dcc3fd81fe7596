//! Datasets, feature masks, train/test splits, scaling, and CSV ingestion.

use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::{stream, stream_rng};

/// Covariate matrix (row-major) paired with an outcome per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    outcomes: Vec<f64>,
    n_features: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset from one covariate vector per row.
    pub fn new(rows: Vec<Vec<f64>>, outcomes: Vec<f64>) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: bad.len(),
            });
        }
        Self::from_flat(rows.into_iter().flatten().collect(), d, outcomes)
    }

    pub fn from_flat(features: Vec<f64>, n_features: usize, outcomes: Vec<f64>) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::InvalidDataset("need at least one feature".into()));
        }
        if outcomes.is_empty() {
            return Err(Error::InvalidDataset("need at least one row".into()));
        }
        if features.len() != outcomes.len() * n_features {
            return Err(Error::InvalidDataset(format!(
                "{} feature values do not fill {} rows of {} columns",
                features.len(),
                outcomes.len(),
                n_features
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite feature at row {}, column {}",
                i / n_features,
                i % n_features
            )));
        }
        if let Some(i) = outcomes.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("non-finite outcome at row {i}")));
        }
        Ok(Self {
            features,
            outcomes,
            n_features,
            feature_names: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        check_dim(self.n_features, names.len())?;
        self.feature_names = Some(names);
        Ok(self)
    }

    /// Number of rows.
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_features)
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Same outcomes, new covariates of identical shape.
    pub fn with_features(&self, features: Vec<f64>) -> Result<Self> {
        check_dim(self.features.len(), features.len())?;
        let mut out = Self::from_flat(features, self.n_features, self.outcomes.clone())?;
        out.feature_names = self.feature_names.clone();
        Ok(out)
    }

    /// Same covariates, new outcomes.
    pub fn with_outcomes(&self, outcomes: Vec<f64>) -> Result<Self> {
        check_dim(self.len(), outcomes.len())?;
        let mut out = Self::from_flat(self.features.clone(), self.n_features, outcomes)?;
        out.feature_names = self.feature_names.clone();
        Ok(out)
    }

    /// Rows at `indices`, in that order; repeats allowed.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidDataset("empty row selection".into()));
        }
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut outcomes = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidDataset(format!(
                    "row {i} out of range for {} rows",
                    self.len()
                )));
            }
            features.extend_from_slice(self.row(i));
            outcomes.push(self.outcomes[i]);
        }
        Ok(Self {
            features,
            outcomes,
            n_features: self.n_features,
            feature_names: self.feature_names.clone(),
        })
    }

    /// Keeps the rows for which `keep(x, y)` holds. This is how a biased
    /// "active set" is carved out of a full dataset.
    pub fn filter_rows<P>(&self, mut keep: P) -> Result<Self>
    where
        P: FnMut(&[f64], f64) -> bool,
    {
        let indices: Vec<usize> = (0..self.len())
            .filter(|&i| keep(self.row(i), self.outcomes[i]))
            .collect();
        self.select(&indices)
    }
}

/// Which coordinates a user may change. `true` = mutable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureMask {
    flags: Vec<bool>,
}

impl FeatureMask {
    pub fn new(flags: Vec<bool>) -> Self {
        Self { flags }
    }

    pub fn all_mutable(d: usize) -> Self {
        Self {
            flags: vec![true; d],
        }
    }

    /// Mask over `names` that is true exactly on `mutable`.
    pub fn from_names(names: &[String], mutable: &[String]) -> Result<Self> {
        for m in mutable {
            if !names.contains(m) {
                return Err(Error::InvalidConfig(format!(
                    "mutable column `{m}` is not a feature"
                )));
            }
        }
        Ok(Self {
            flags: names.iter().map(|n| mutable.contains(n)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn is_mutable(&self, j: usize) -> bool {
        self.flags[j]
    }

    /// Zeroes the immutable coordinates of `v` in place.
    pub fn apply(&self, v: &mut [f64]) {
        for (x, &keep) in v.iter_mut().zip(&self.flags) {
            if !keep {
                *x = 0.0;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        Self {
            train_fraction,
            seed,
        }
    }
}

/// Sorted train and test row indices for a random partition of `m` rows.
pub fn split_indices(m: usize, spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if m < 4 {
        return Err(Error::InvalidDataset(format!(
            "need at least 4 rows to split, got {m}"
        )));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    let n_train = ((m as f64 * spec.train_fraction).round() as usize).clamp(1, m - 1);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut stream_rng(spec.seed, stream::SPLIT));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split(data: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(data.len(), spec)?;
    Ok((data.select(&train)?, data.select(&test)?))
}

/// Parameters of the one-dimensional synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub x_mean: f64,
    /// Standard deviation of x, not variance.
    pub x_std: f64,
    /// Standard deviation of the additive outcome noise.
    pub noise_std: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            x_mean: -0.8,
            x_std: 0.5,
            noise_std: 0.25,
        }
    }
}

/// Ground-truth curve of the synthetic experiment: −0.8x² + 0.5x + 0.1.
pub fn synthetic_truth(x: f64) -> f64 {
    -0.8 * x * x + 0.5 * x + 0.1
}

pub fn generate_synthetic(m: usize, seed: u64) -> Result<Dataset> {
    generate_synthetic_with(m, seed, SyntheticSpec::default())
}

pub fn generate_synthetic_with(m: usize, seed: u64, spec: SyntheticSpec) -> Result<Dataset> {
    if m < 2 {
        return Err(Error::InvalidDataset(format!(
            "synthetic data needs m >= 2, got {m}"
        )));
    }
    let x_dist = Normal::new(spec.x_mean, spec.x_std)
        .map_err(|e| Error::InvalidConfig(format!("x distribution: {e}")))?;
    let noise = Normal::new(0.0, spec.noise_std)
        .map_err(|e| Error::InvalidConfig(format!("noise distribution: {e}")))?;
    let mut x_rng = stream_rng(seed, stream::SYNTH_FEATURES);
    let mut e_rng = stream_rng(seed, stream::SYNTH_NOISE);
    let xs: Vec<f64> = (0..m).map(|_| x_dist.sample(&mut x_rng)).collect();
    let ys = xs
        .iter()
        .map(|&x| synthetic_truth(x) + noise.sample(&mut e_rng))
        .collect();
    Dataset::from_flat(xs, 1, ys)?.with_feature_names(vec!["x".into()])
}

/// Affine maps fitted on a training set: z-scores for features, min-max
/// to [0, 1] for outcomes. Degenerate columns pass through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub outcome_min: f64,
    pub outcome_range: f64,
}

impl Scaler {
    pub fn fit(train: &Dataset) -> Self {
        let m = train.len() as f64;
        let d = train.dim();
        let mut mean = vec![0.0; d];
        for row in train.rows() {
            for (acc, v) in mean.iter_mut().zip(row) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        let mut var = vec![0.0; d];
        for row in train.rows() {
            for j in 0..d {
                var[j] += (row[j] - mean[j]).powi(2);
            }
        }
        let names = train.feature_names();
        let mut scale = Vec::with_capacity(d);
        for j in 0..d {
            let sd = (var[j] / m).sqrt();
            if sd > 1e-12 {
                scale.push(sd);
            } else {
                let label = names.map_or_else(|| format!("#{j}"), |n| n[j].clone());
                warn!("feature column {label} has zero variance; passing through unscaled");
                mean[j] = 0.0;
                scale.push(1.0);
            }
        }
        let (lo, hi) = train
            .outcomes()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
                (lo.min(y), hi.max(y))
            });
        let (outcome_min, outcome_range) = if hi - lo > 1e-12 {
            (lo, hi - lo)
        } else {
            warn!("outcome has zero range; passing through unscaled");
            (0.0, 1.0)
        };
        Self {
            feature_mean: mean,
            feature_scale: scale,
            outcome_min,
            outcome_range,
        }
    }

    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        check_dim(self.feature_mean.len(), data.dim())?;
        let d = data.dim();
        let features = data
            .features()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.feature_mean[i % d]) / self.feature_scale[i % d])
            .collect();
        let outcomes = data
            .outcomes()
            .iter()
            .map(|y| (y - self.outcome_min) / self.outcome_range)
            .collect();
        let mut out = Dataset::from_flat(features, d, outcomes)?;
        out.feature_names = data.feature_names.clone();
        Ok(out)
    }

    pub fn inverse(&self, data: &Dataset) -> Result<Dataset> {
        check_dim(self.feature_mean.len(), data.dim())?;
        let d = data.dim();
        let features = data
            .features()
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.feature_scale[i % d] + self.feature_mean[i % d])
            .collect();
        let outcomes = data
            .outcomes()
            .iter()
            .map(|y| y * self.outcome_range + self.outcome_min)
            .collect();
        let mut out = Dataset::from_flat(features, d, outcomes)?;
        out.feature_names = data.feature_names.clone();
        Ok(out)
    }
}

/// Fits a [`Scaler`] on `train` and applies it to both sets.
pub fn standardize(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset, Scaler)> {
    let scaler = Scaler::fit(train);
    Ok((scaler.transform(train)?, scaler.transform(test)?, scaler))
}

/// Reads a comma-separated file with a header row. The target column
/// becomes the outcome; every other column is a feature.
pub fn load_csv(
    path: impl AsRef<Path>,
    target_column: &str,
    mutable_columns: &[String],
) -> Result<(Dataset, FeatureMask)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let target = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: target_column.to_string(),
        })?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target)
        .map(|(_, h)| h.clone())
        .collect();
    for m in mutable_columns {
        if !feature_names.contains(m) {
            return Err(Error::MissingColumn {
                path: path.to_path_buf(),
                column: m.clone(),
            });
        }
    }

    let mut features = Vec::new();
    let mut outcomes = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        // 1-based data row; the header is row 0.
        let row = r + 1;
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let value = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonNumeric {
                    path: path.to_path_buf(),
                    row,
                    column: header[j].clone(),
                    value: cell.to_string(),
                })?;
            if j == target {
                outcomes.push(value);
            } else {
                features.push(value);
            }
        }
    }
    let mask = FeatureMask::from_names(&feature_names, mutable_columns)?;
    let data = Dataset::from_flat(features, feature_names.len(), outcomes)?
        .with_feature_names(feature_names)?;
    Ok((data, mask))
}

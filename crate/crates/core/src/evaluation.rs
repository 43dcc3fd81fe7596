//! Oracle-based evaluation and the λ sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::{
    generate_synthetic_with, split, standardize, Dataset, FeatureMask, Scaler, SplitSpec,
    SyntheticSpec,
};
use crate::decision::decide;
use crate::error::{check_dim, Error, Result};
use crate::models::{fit_predictive, ModelKind, Oracle, PredictiveModel};
use crate::training::{train_lookahead, TrainedBundle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    pub improvement_rate: f64,
    pub improvement_magnitude: f64,
    pub n_test: usize,
}

/// What an outcome after the decision is compared against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// The observed test label y.
    #[default]
    ObservedLabel,
    /// The oracle at the original point, f*(x); noiseless diagnostics.
    OracleAtOriginal,
}

pub fn evaluate(
    f: &PredictiveModel,
    oracle: &Oracle,
    test: &Dataset,
    eta: f64,
    mask: &FeatureMask,
) -> Result<EvalReport> {
    evaluate_with(f, oracle, test, eta, mask, Baseline::ObservedLabel)
}

pub fn evaluate_with(
    f: &PredictiveModel,
    oracle: &Oracle,
    test: &Dataset,
    eta: f64,
    mask: &FeatureMask,
    baseline: Baseline,
) -> Result<EvalReport> {
    check_dim(oracle.model().dim(), test.dim())?;
    let n = test.len();
    let decided = decide(f, test, eta, mask)?;
    let mut sq = 0.0;
    let mut improved = 0usize;
    let mut gain = 0.0;
    for (i, (x, &y)) in test.rows().zip(test.outcomes()).enumerate() {
        sq += (f.predict(x)? - y).powi(2);
        let after = oracle.outcome(decided.decided.row(i))?;
        let before = match baseline {
            Baseline::ObservedLabel => y,
            Baseline::OracleAtOriginal => oracle.outcome(x)?,
        };
        if after > before {
            improved += 1;
        }
        gain += after - before;
    }
    Ok(EvalReport {
        rmse: (sq / n as f64).sqrt(),
        improvement_rate: improved as f64 / n as f64,
        improvement_magnitude: gain / n as f64,
        n_test: n,
    })
}

/// Fraction of rows whose induced decision the predictor itself scores
/// above the observed label, i.e. f(x') > y.
pub fn predicted_improvement_rate(
    f: &PredictiveModel,
    data: &Dataset,
    eta: f64,
    mask: &FeatureMask,
) -> Result<f64> {
    let decided = decide(f, data, eta, mask)?;
    let hits = data
        .outcomes()
        .iter()
        .enumerate()
        .filter(|&(i, &y)| f.eval(decided.decided.row(i)) > y)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    QuadraticPoly,
}

/// Least-squares quadratic fitted on all available data, then frozen.
pub fn fit_oracle(
    full_data: &Dataset,
    kind: OracleKind,
    lr: f64,
    epochs: usize,
) -> Result<Oracle> {
    let model_kind = match kind {
        OracleKind::QuadraticPoly => ModelKind::Quadratic,
    };
    Ok(Oracle::new(fit_predictive(full_data, model_kind, lr, epochs)?))
}

/// Train/test partition with its ground-truth oracle and mutability mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub train: Dataset,
    pub test: Dataset,
    pub oracle: Oracle,
    pub mask: FeatureMask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaler: Option<Scaler>,
}

impl Experiment {
    /// Synthetic curves: m points, 75:25 split, analytic oracle.
    pub fn synthetic(m: usize, seed: u64) -> Result<Self> {
        Self::synthetic_split(m, seed, 0.75)
    }

    pub fn synthetic_split(m: usize, seed: u64, train_fraction: f64) -> Result<Self> {
        let data = generate_synthetic_with(m, seed, SyntheticSpec::default())?;
        let (train, test) = split(&data, SplitSpec::new(train_fraction, seed))?;
        Ok(Self {
            train,
            test,
            oracle: Oracle::synthetic(),
            mask: FeatureMask::all_mutable(1),
            scaler: None,
        })
    }

    /// Splits `data`, standardizes with training statistics, and fits a
    /// quadratic oracle on the whole standardized dataset.
    pub fn from_data(
        data: &Dataset,
        mask: FeatureMask,
        split_spec: SplitSpec,
        oracle_lr: f64,
        oracle_epochs: usize,
    ) -> Result<Self> {
        check_dim(data.dim(), mask.len())?;
        let (train, test) = split(data, split_spec)?;
        let (train, test, scaler) = standardize(&train, &test)?;
        let full = scaler.transform(data)?;
        let oracle = fit_oracle(&full, OracleKind::QuadraticPoly, oracle_lr, oracle_epochs)?;
        Ok(Self {
            train,
            test,
            oracle,
            mask,
            scaler: Some(scaler),
        })
    }

    pub fn with_mask(mut self, mask: FeatureMask) -> Self {
        self.mask = mask;
        self
    }

    /// Config with this experiment's mask filled in.
    pub fn config(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            mask: Some(self.mask.clone()),
            ..base.clone()
        }
    }

    /// Plain least-squares predictor with the same iteration budget as a
    /// lookahead run under `config`.
    pub fn baseline(&self, config: &TrainConfig) -> Result<PredictiveModel> {
        fit_predictive(
            &self.train,
            config.model_kind,
            config.learning_rate,
            config.epochs_init + config.rounds * config.epochs_per_round,
        )
    }

    pub fn train(&self, config: &TrainConfig) -> Result<TrainedBundle> {
        train_lookahead(&self.train, &self.config(config))
    }

    pub fn evaluate(&self, f: &PredictiveModel, eta: f64) -> Result<EvalReport> {
        evaluate(f, &self.oracle, &self.test, eta, &self.mask)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub lambda: f64,
    pub report: EvalReport,
    /// Lookahead penalty on the training set after the last round.
    pub final_penalty: f64,
}

/// One trained and evaluated point per λ, each isolated from the others'
/// failures. Output is sorted by λ ascending.
pub fn frontier_sweep_each(
    experiment: &Experiment,
    config: &TrainConfig,
    lambda_grid: &[f64],
) -> Vec<(f64, Result<FrontierPoint>)> {
    let mut grid = lambda_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.par_iter()
        .map(|&lambda| {
            let run = || -> Result<FrontierPoint> {
                let cfg = TrainConfig {
                    lambda,
                    ..config.clone()
                };
                let bundle = experiment.train(&cfg)?;
                let report = experiment.evaluate(&bundle.predictive, cfg.eta)?;
                Ok(FrontierPoint {
                    lambda,
                    report,
                    final_penalty: bundle.trace.last().map_or(0.0, |t| t.penalty),
                })
            };
            let out = run().map_err(|e| Error::SweepPoint {
                lambda,
                source: Box::new(e),
            });
            (lambda, out)
        })
        .collect()
}

pub fn frontier_sweep(
    experiment: &Experiment,
    config: &TrainConfig,
    lambda_grid: &[f64],
) -> Result<Vec<FrontierPoint>> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidConfig("empty lambda grid".into()));
    }
    frontier_sweep_each(experiment, config, lambda_grid)
        .into_iter()
        .map(|(_, r)| r)
        .collect()
}

/// `lambda,rmse,improvement_rate,improvement_magnitude` rows.
pub fn frontier_csv(points: &[FrontierPoint]) -> String {
    let mut out = String::from("lambda,rmse,improvement_rate,improvement_magnitude\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.lambda, p.report.rmse, p.report.improvement_rate, p.report.improvement_magnitude
        ));
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

//! Interval models g_τ aimed at the post-decision distribution.
//!
//! All three fits take per-sample importance weights w(x) ≈ p'(x)/p(x):
//! vanilla bootstrap resamples rows in proportion to w, residual bootstrap
//! and quantile regression weight the per-sample loss by w.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::models::{fit_predictive_weighted, ModelKind, PredictiveModel};
use crate::optim::gradient_descent;
use crate::rng::{stream, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyKind {
    VanillaBootstrap,
    ResidualBootstrap,
    Quantile,
}

impl std::str::FromStr for UncertaintyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" | "vanilla_bootstrap" => Ok(Self::VanillaBootstrap),
            "residual" | "residual_bootstrap" => Ok(Self::ResidualBootstrap),
            "quantile" => Ok(Self::Quantile),
            other => Err(Error::InvalidConfig(format!(
                "unknown uncertainty kind `{other}` (expected vanilla, residual or quantile)"
            ))),
        }
    }
}

/// How the bootstrap resample size is derived from the weights.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EssFormula {
    /// mean(w) / var(w), capped at m.
    #[default]
    MeanOverVariance,
    /// Kish: (Σw)² / Σw².
    Kish,
}

/// Effective sample size of `weights` as mean/var (population variance),
/// capped at m. Near-constant weights (var < 1e-12) give m.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    effective_sample_size_with(weights, EssFormula::MeanOverVariance)
}

pub fn effective_sample_size_with(weights: &[f64], formula: EssFormula) -> f64 {
    let m = weights.len() as f64;
    if weights.is_empty() {
        return 0.0;
    }
    match formula {
        EssFormula::MeanOverVariance => {
            let mean = weights.iter().sum::<f64>() / m;
            let var = weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / m;
            if var < 1e-12 {
                m
            } else {
                (mean / var).min(m)
            }
        }
        EssFormula::Kish => {
            let s: f64 = weights.iter().sum();
            let s2: f64 = weights.iter().map(|w| w * w).sum();
            (s * s / s2).min(m)
        }
    }
}

/// Two-sided standard-normal critical value for coverage `tau`.
pub fn z_score(tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let normal = Normal::standard();
    Ok(normal.inverse_cdf((1.0 + tau) / 2.0))
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("tau must lie in (0, 1), got {tau}")))
    }
}

/// Pinball loss at quantile level `level`: max{(level−1)r, level·r}, r = y − ŷ.
pub fn pinball_loss(level: f64, y: f64, y_hat: f64) -> f64 {
    let r = y - y_hat;
    ((level - 1.0) * r).max(level * r)
}

/// Weighted empirical risk Σ wᵢ·Lᵢ / m. With w = p'/p and samples from p
/// this estimates the expected loss under p'.
pub fn importance_weighted_risk(weights: &[f64], losses: &[f64]) -> Result<f64> {
    check_dim(weights.len(), losses.len())?;
    if losses.is_empty() {
        return Err(Error::InvalidDataset("no samples".into()));
    }
    Ok(weights.iter().zip(losses).map(|(w, l)| w * l).sum::<f64>() / losses.len() as f64)
}

/// Shared settings for fitting interval submodels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalFit {
    pub model_kind: ModelKind,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default)]
    pub ess: EssFormula,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntervalModel {
    VanillaBootstrap {
        submodels: Vec<PredictiveModel>,
        z: f64,
        tau: f64,
    },
    ResidualBootstrap {
        submodels: Vec<PredictiveModel>,
        z: f64,
        tau: f64,
    },
    Quantile {
        lower_model: PredictiveModel,
        upper_model: PredictiveModel,
        tau: f64,
    },
}

fn check_weights(data: &Dataset, weights: &[f64]) -> Result<()> {
    check_dim(data.len(), weights.len())?;
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidConfig("weights must be positive and finite".into()));
    }
    Ok(())
}

fn check_replicates(k: usize) -> Result<()> {
    if k < 2 {
        Err(Error::InvalidConfig(format!("need at least 2 bootstrap models, got {k}")))
    } else {
        Ok(())
    }
}

/// k submodels, each fit on ⌈m̃(w)⌉ rows drawn with replacement with
/// probability proportional to w.
pub fn fit_vanilla_bootstrap(
    data: &Dataset,
    weights: &[f64],
    k: usize,
    tau: f64,
    fit: IntervalFit,
) -> Result<IntervalModel> {
    check_replicates(k)?;
    check_weights(data, weights)?;
    let z = z_score(tau)?;
    let size = (effective_sample_size_with(weights, fit.ess).ceil() as usize).max(1);
    let sampler = WeightedIndex::new(weights)
        .map_err(|e| Error::InvalidConfig(format!("bootstrap weights: {e}")))?;
    let submodels = (0..k)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(fit.seed, stream::BOOTSTRAP_BASE + r as u64);
            let idx: Vec<usize> = (0..size).map(|_| sampler.sample(&mut rng)).collect();
            let resample = data.select(&idx)?;
            fit_predictive_weighted(&resample, None, fit.model_kind, fit.lr, fit.epochs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IntervalModel::VanillaBootstrap { submodels, z, tau })
}

/// Base model on weighted data, then k submodels on the original rows with
/// pseudo-labels yⱼ + r_σ(j), residuals resampled with replacement.
pub fn fit_residual_bootstrap(
    data: &Dataset,
    weights: &[f64],
    k: usize,
    tau: f64,
    fit: IntervalFit,
) -> Result<IntervalModel> {
    check_replicates(k)?;
    check_weights(data, weights)?;
    let z = z_score(tau)?;
    let base = fit_predictive_weighted(data, Some(weights), fit.model_kind, fit.lr, fit.epochs)?;
    let residuals: Vec<f64> = data
        .rows()
        .zip(data.outcomes())
        .map(|(x, y)| y - base.eval(x))
        .collect();
    let m = data.len();
    let submodels = (0..k)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(
                fit.seed,
                stream::BOOTSTRAP_BASE + (stream::RESIDUALS << 16) + r as u64,
            );
            let pseudo: Vec<f64> = data
                .outcomes()
                .iter()
                .map(|y| y + residuals[rng.random_range(0..m)])
                .collect();
            let relabeled = data.with_outcomes(pseudo)?;
            fit_predictive_weighted(&relabeled, Some(weights), fit.model_kind, fit.lr, fit.epochs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IntervalModel::ResidualBootstrap { submodels, z, tau })
}

/// Weighted pinball-loss regression at quantile `level`, from zero.
pub fn fit_pinball(
    data: &Dataset,
    weights: Option<&[f64]>,
    level: f64,
    model_kind: ModelKind,
    lr: f64,
    epochs: usize,
) -> Result<PredictiveModel> {
    check_tau(level)?;
    if let Some(w) = weights {
        check_weights(data, w)?;
    }
    let mut model = PredictiveModel::zeros(model_kind, data.dim());
    let mut params = model.params();
    let mut scratch = model.clone();
    gradient_descent(&mut params, lr, epochs, "quantile fit", |p| {
        scratch.set_params(p).expect("length fixed");
        let mut grad = vec![0.0; p.len()];
        let (mut loss, mut total) = (0.0, 0.0);
        for (i, (x, &y)) in data.rows().zip(data.outcomes()).enumerate() {
            let w = weights.map_or(1.0, |w| w[i]);
            let y_hat = scratch.eval(x);
            loss += w * pinball_loss(level, y, y_hat);
            total += w;
            // d/dŷ of the tilted loss; zero at the kink
            let slope = if y > y_hat {
                -level
            } else if y < y_hat {
                1.0 - level
            } else {
                0.0
            };
            for (g, phi) in grad.iter_mut().zip(scratch.param_grad(x)) {
                *g += w * slope * phi;
            }
        }
        grad.iter_mut().for_each(|g| *g /= total);
        (loss / total, grad)
    })?;
    model.set_params(&params)?;
    Ok(model)
}

/// Lower model at level (1−τ)/2 and upper model at (1+τ)/2.
pub fn fit_quantile(
    data: &Dataset,
    weights: &[f64],
    tau: f64,
    fit: IntervalFit,
) -> Result<IntervalModel> {
    check_tau(tau)?;
    check_weights(data, weights)?;
    let lower_model = fit_pinball(
        data,
        Some(weights),
        (1.0 - tau) / 2.0,
        fit.model_kind,
        fit.lr,
        fit.epochs,
    )?;
    let upper_model = fit_pinball(
        data,
        Some(weights),
        (1.0 + tau) / 2.0,
        fit.model_kind,
        fit.lr,
        fit.epochs,
    )?;
    Ok(IntervalModel::Quantile {
        lower_model,
        upper_model,
        tau,
    })
}

/// Dispatches on `kind`.
pub fn fit_interval(
    kind: UncertaintyKind,
    data: &Dataset,
    weights: &[f64],
    k: usize,
    tau: f64,
    fit: IntervalFit,
) -> Result<IntervalModel> {
    match kind {
        UncertaintyKind::VanillaBootstrap => fit_vanilla_bootstrap(data, weights, k, tau, fit),
        UncertaintyKind::ResidualBootstrap => fit_residual_bootstrap(data, weights, k, tau, fit),
        UncertaintyKind::Quantile => fit_quantile(data, weights, tau, fit),
    }
}

/// Mean and population standard deviation of the submodel predictions.
fn ensemble_moments(submodels: &[PredictiveModel], x: &[f64]) -> (f64, f64, Vec<f64>) {
    let preds: Vec<f64> = submodels.iter().map(|g| g.eval(x)).collect();
    let k = preds.len() as f64;
    let mu = preds.iter().sum::<f64>() / k;
    let var = preds.iter().map(|p| (p - mu).powi(2)).sum::<f64>() / k;
    (mu, var.sqrt(), preds)
}

impl IntervalModel {
    pub fn kind(&self) -> UncertaintyKind {
        match self {
            IntervalModel::VanillaBootstrap { .. } => UncertaintyKind::VanillaBootstrap,
            IntervalModel::ResidualBootstrap { .. } => UncertaintyKind::ResidualBootstrap,
            IntervalModel::Quantile { .. } => UncertaintyKind::Quantile,
        }
    }

    pub fn tau(&self) -> f64 {
        match self {
            IntervalModel::VanillaBootstrap { tau, .. }
            | IntervalModel::ResidualBootstrap { tau, .. }
            | IntervalModel::Quantile { tau, .. } => *tau,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            IntervalModel::VanillaBootstrap { submodels, .. }
            | IntervalModel::ResidualBootstrap { submodels, .. } => submodels[0].dim(),
            IntervalModel::Quantile { lower_model, .. } => lower_model.dim(),
        }
    }

    /// Bootstrap submodels; empty for the quantile kind.
    pub fn submodels(&self) -> &[PredictiveModel] {
        match self {
            IntervalModel::VanillaBootstrap { submodels, .. }
            | IntervalModel::ResidualBootstrap { submodels, .. } => submodels,
            IntervalModel::Quantile { .. } => &[],
        }
    }

    /// `(lower, upper)` at x, always ordered.
    pub fn predict_interval(&self, x: &[f64]) -> Result<(f64, f64)> {
        check_dim(self.dim(), x.len())?;
        Ok(self.interval(x))
    }

    pub(crate) fn interval(&self, x: &[f64]) -> (f64, f64) {
        match self {
            IntervalModel::VanillaBootstrap { submodels, z, .. }
            | IntervalModel::ResidualBootstrap { submodels, z, .. } => {
                let (mu, sigma, _) = ensemble_moments(submodels, x);
                (mu - z * sigma, mu + z * sigma)
            }
            IntervalModel::Quantile {
                lower_model,
                upper_model,
                ..
            } => {
                let (a, b) = (lower_model.eval(x), upper_model.eval(x));
                if a <= b {
                    (a, b)
                } else {
                    (b, a)
                }
            }
        }
    }

    pub(crate) fn lower(&self, x: &[f64]) -> f64 {
        self.interval(x).0
    }

    /// Gradient of the lower bound with respect to the query point.
    pub fn dlower_dx(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self.lower_grad(x))
    }

    pub(crate) fn lower_grad(&self, x: &[f64]) -> Vec<f64> {
        match self {
            IntervalModel::VanillaBootstrap { submodels, z, .. }
            | IntervalModel::ResidualBootstrap { submodels, z, .. } => {
                let (mu, sigma, preds) = ensemble_moments(submodels, x);
                let k = submodels.len() as f64;
                let mut out = vec![0.0; x.len()];
                for (g, p) in submodels.iter().zip(&preds) {
                    // ∇σ = Σ (gᵢ − μ)∇gᵢ / (kσ); taken as 0 where σ = 0
                    let coeff = if sigma > 0.0 {
                        1.0 / k - z * (p - mu) / (k * sigma)
                    } else {
                        1.0 / k
                    };
                    for (o, gi) in out.iter_mut().zip(g.input_grad(x)) {
                        *o += coeff * gi;
                    }
                }
                out
            }
            IntervalModel::Quantile {
                lower_model,
                upper_model,
                ..
            } => {
                if lower_model.eval(x) <= upper_model.eval(x) {
                    lower_model.input_grad(x)
                } else {
                    upper_model.input_grad(x)
                }
            }
        }
    }
}

/// Refits nothing: rebuilds an ensemble interval from existing submodels.
/// Vanilla and residual intervals share this combination rule.
pub fn combine_bootstrap(
    kind: UncertaintyKind,
    submodels: Vec<PredictiveModel>,
    tau: f64,
) -> Result<IntervalModel> {
    check_replicates(submodels.len())?;
    let z = z_score(tau)?;
    match kind {
        UncertaintyKind::VanillaBootstrap => Ok(IntervalModel::VanillaBootstrap { submodels, z, tau }),
        UncertaintyKind::ResidualBootstrap => {
            Ok(IntervalModel::ResidualBootstrap { submodels, z, tau })
        }
        UncertaintyKind::Quantile => Err(Error::InvalidConfig(
            "quantile intervals are not an ensemble".into(),
        )),
    }
}

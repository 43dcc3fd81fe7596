//! Training configuration and the named presets.

use serde::{Deserialize, Serialize};

use crate::data::FeatureMask;
use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::uncertainty::{EssFormula, IntervalFit, UncertaintyKind};

/// Every scalar of the alternating lookahead loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the lookahead penalty.
    pub lambda: f64,
    /// Decision step size.
    pub eta: f64,
    /// Interval coverage level.
    pub tau: f64,
    pub rounds: usize,
    pub n_bootstrap: usize,
    pub learning_rate: f64,
    pub epochs_init: usize,
    pub epochs_per_round: usize,
    pub seed: u64,
    /// `None` means every feature is mutable.
    #[serde(default)]
    pub mask: Option<FeatureMask>,
    pub uncertainty_kind: UncertaintyKind,
    /// Model class of the predictor and of the interval submodels.
    pub model_kind: ModelKind,
    pub uncertainty_lr: f64,
    pub uncertainty_epochs: usize,
    pub propensity_lr: f64,
    pub propensity_epochs: usize,
    #[serde(default)]
    pub ess_formula: EssFormula,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::synthetic(1.25)
    }
}

impl TrainConfig {
    /// Quadratic curves experiment: λ=4, τ=0.95, k=10, T=5, vanilla bootstrap.
    pub fn synthetic(eta: f64) -> Self {
        Self {
            lambda: 4.0,
            eta,
            tau: 0.95,
            rounds: 5,
            n_bootstrap: 10,
            learning_rate: 0.002,
            epochs_init: 40_000,
            epochs_per_round: 1000,
            seed: 0,
            mask: None,
            uncertainty_kind: UncertaintyKind::VanillaBootstrap,
            model_kind: ModelKind::Quadratic,
            uncertainty_lr: 0.05,
            uncertainty_epochs: 1000,
            propensity_lr: 0.5,
            propensity_epochs: 500,
            ess_formula: EssFormula::MeanOverVariance,
        }
    }

    /// Wine-quality setting: linear models, residual bootstrap with k=20,
    /// T=10, learning rate 0.1 with 1000 + 100/round epochs, 500 epochs per
    /// submodel. η is 0.5 (all features mutable) or 2 (partially mutable).
    pub fn wine(eta: f64) -> Self {
        Self {
            lambda: 1.0,
            eta,
            tau: 0.95,
            rounds: 10,
            n_bootstrap: 20,
            learning_rate: 0.1,
            epochs_init: 1000,
            epochs_per_round: 100,
            seed: 0,
            mask: None,
            uncertainty_kind: UncertaintyKind::ResidualBootstrap,
            model_kind: ModelKind::Linear,
            uncertainty_lr: 0.1,
            uncertainty_epochs: 500,
            propensity_lr: 0.1,
            propensity_epochs: 500,
            ess_formula: EssFormula::MeanOverVariance,
        }
    }

    /// Diabetes setting: quantile intervals at τ=0.8, T=10, η=5, learning
    /// rate 0.05 with 1000 + 100/round epochs and 500 for the quantile fits.
    pub fn diabetes(model_kind: ModelKind) -> Self {
        Self {
            lambda: 1.0,
            eta: 5.0,
            tau: 0.8,
            rounds: 10,
            n_bootstrap: 2,
            learning_rate: 0.05,
            epochs_init: 1000,
            epochs_per_round: 100,
            seed: 0,
            mask: None,
            uncertainty_kind: UncertaintyKind::Quantile,
            model_kind,
            uncertainty_lr: 0.05,
            uncertainty_epochs: 500,
            propensity_lr: 0.05,
            propensity_epochs: 500,
            ess_formula: EssFormula::MeanOverVariance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be >= 0, got {}", self.eta));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if self.rounds == 0 {
            return bad("rounds must be positive".into());
        }
        if self.n_bootstrap == 0 {
            return bad("n_bootstrap must be positive".into());
        }
        if self.uncertainty_kind != UncertaintyKind::Quantile && self.n_bootstrap < 2 {
            return bad(format!(
                "bootstrap intervals need n_bootstrap >= 2, got {}",
                self.n_bootstrap
            ));
        }
        for (name, lr) in [
            ("learning_rate", self.learning_rate),
            ("uncertainty_lr", self.uncertainty_lr),
            ("propensity_lr", self.propensity_lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be positive, got {lr}"));
            }
        }
        if self.epochs_init == 0 || self.epochs_per_round == 0 {
            return bad("epoch counts must be positive".into());
        }
        Ok(())
    }

    pub fn mask_for(&self, d: usize) -> Result<FeatureMask> {
        match &self.mask {
            None => Ok(FeatureMask::all_mutable(d)),
            Some(m) if m.len() == d => Ok(m.clone()),
            Some(m) => Err(Error::DimensionMismatch {
                expected: d,
                actual: m.len(),
            }),
        }
    }

    pub(crate) fn interval_fit(&self, seed: u64) -> IntervalFit {
        IntervalFit {
            model_kind: self.model_kind,
            lr: self.uncertainty_lr,
            epochs: self.uncertainty_epochs,
            seed,
            ess: self.ess_formula,
        }
    }
}

/// JSON form of [`TrainConfig`]: same field names, but mutability is given
/// as column names. Missing fields take the synthetic preset's values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_bootstrap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs_init: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs_per_round: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uncertainty_kind: Option<UncertaintyKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mutable_columns: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_kind: Option<ModelKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uncertainty_lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uncertainty_epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub propensity_lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub propensity_epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ess_formula: Option<EssFormula>,
}

impl ConfigFile {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Overlays the file onto `base`, resolving `mutable_columns` against
    /// `feature_names`.
    pub fn resolve(&self, base: TrainConfig, feature_names: &[String]) -> Result<TrainConfig> {
        let mut c = base;
        macro_rules! overlay {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { c.$f = v; } )* };
        }
        overlay!(
            lambda,
            eta,
            tau,
            rounds,
            n_bootstrap,
            learning_rate,
            epochs_init,
            epochs_per_round,
            seed,
            uncertainty_kind,
            model_kind,
            uncertainty_lr,
            uncertainty_epochs,
            propensity_lr,
            propensity_epochs,
            ess_formula
        );
        if let Some(cols) = &self.mutable_columns {
            c.mask = Some(FeatureMask::from_names(feature_names, cols)?);
        }
        c.validate()?;
        Ok(c)
    }
}

//! Decision-aware regression with lookahead regularization.
//!
//! A predictor `f` is trained both to fit outcomes and to induce user
//! decisions `x' = x + η·Γ(∇f(x))` whose outcomes improve with confidence
//! `τ`. Improvement is certified by an interval model fitted to the shifted
//! covariate distribution through discriminatively estimated importance
//! weights.

pub mod config;
pub mod data;
pub mod decision;
pub mod error;
pub mod evaluation;
pub mod models;
mod optim;
pub mod rng;
pub mod training;
pub mod uncertainty;

pub use config::{ConfigFile, TrainConfig};
pub use data::{
    generate_synthetic, load_csv, split, standardize, synthetic_truth, Dataset, FeatureMask,
    Scaler, SplitSpec,
};
pub use decision::{ddecided_dparams, decide, DecisionOutcome};
pub use error::{Error, Result};
pub use evaluation::{
    evaluate, fit_oracle, frontier_sweep, EvalReport, Experiment, FrontierPoint, OracleKind,
};
pub use models::{
    fit_predictive, fit_propensity, ModelKind, Oracle, PredictiveModel, PropensityModel,
};
pub use training::{
    grad_lookahead, lookahead_objective, lookahead_penalty, train_lookahead, train_naive,
    RoundTrace, TrainedBundle,
};
pub use uncertainty::{
    effective_sample_size, fit_quantile, fit_residual_bootstrap, fit_vanilla_bootstrap,
    IntervalModel, UncertaintyKind,
};

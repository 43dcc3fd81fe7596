//! The lookahead objective, its analytic gradient, the naive average-case
//! objective, and the alternating training loop.
//!
//! Both objectives use the mean convention: the squared-error term and the
//! penalty are each divided by m, so λ does not scale with dataset size.

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::{Dataset, FeatureMask};
use crate::decision::{decide, step};
use crate::error::{check_dim, Error, Result};
use crate::models::{
    descend_mse, fit_predictive, fit_propensity, mse_and_grad, PredictiveModel, PropensityModel,
};
use crate::optim::gradient_descent;
use crate::rng::round_seed;
use crate::uncertainty::{fit_interval, IntervalModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub train_mse: f64,
    /// Penalty of the updated predictor under this round's interval model.
    pub penalty: f64,
    pub active_count: usize,
    /// Penalty of the incoming predictor under this round's interval model.
    pub penalty_at_start: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedBundle {
    pub predictive: PredictiveModel,
    pub interval: IntervalModel,
    pub propensity: PropensityModel,
    pub trace: Vec<RoundTrace>,
}

impl TrainedBundle {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `round,train_mse,penalty,active_count,penalty_at_start` rows.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("round,train_mse,penalty,active_count,penalty_at_start\n");
        for t in &self.trace {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t.round, t.train_mse, t.penalty, t.active_count, t.penalty_at_start
            ));
        }
        out
    }
}

fn check_inputs(
    f: &PredictiveModel,
    g: &IntervalModel,
    data: &Dataset,
    eta: f64,
    mask: &FeatureMask,
) -> Result<()> {
    check_dim(f.dim(), data.dim())?;
    check_dim(g.dim(), data.dim())?;
    check_dim(data.dim(), mask.len())?;
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::InvalidConfig(format!("step size must be >= 0, got {eta}")));
    }
    Ok(())
}

/// Mean hinge max{0, yᵢ − ℓ'ᵢ} over the decided points, with the number
/// of active hinges.
fn penalty_terms(
    f: &PredictiveModel,
    g: &IntervalModel,
    data: &Dataset,
    eta: f64,
    mask: &FeatureMask,
) -> (f64, usize) {
    let mut total = 0.0;
    let mut active = 0;
    for (x, &y) in data.rows().zip(data.outcomes()) {
        let decided: Vec<f64> = x.iter().zip(step(f, x, eta, mask)).map(|(a, b)| a + b).collect();
        let gap = y - g.lower(&decided);
        if gap > 0.0 {
            total += gap;
            active += 1;
        }
    }
    (total / data.len() as f64, active)
}

pub fn lookahead_penalty(
    f: &PredictiveModel,
    g: &IntervalModel,
    data: &Dataset,
    eta: f64,
    mask: &FeatureMask,
) -> Result<f64> {
    check_inputs(f, g, data, eta, mask)?;
    Ok(penalty_terms(f, g, data, eta, mask).0)
}

/// Mean squared error plus λ times the lookahead penalty.
pub fn lookahead_objective(
    f: &PredictiveModel,
    g: &IntervalModel,
    data: &Dataset,
    lambda: f64,
    eta: f64,
    mask: &FeatureMask,
) -> Result<f64> {
    check_inputs(f, g, data, eta, mask)?;
    let (mse, _) = mse_and_grad(f, data, None);
    if lambda == 0.0 {
        return Ok(mse);
    }
    Ok(mse + lambda * penalty_terms(f, g, data, eta, mask).0)
}

/// Objective value and parameter gradient; g's parameters stay fixed and
/// the gradient flows through x' = x + ηΓ∇f(x).
fn lookahead_value_and_grad(
    f: &PredictiveModel,
    g: &IntervalModel,
    data: &Dataset,
    lambda: f64,
    eta: f64,
    mask: &FeatureMask,
) -> (f64, Vec<f64>) {
    let (mse, mut grad) = mse_and_grad(f, data, None);
    if lambda == 0.0 {
        return (mse, grad);
    }
    let m = data.len() as f64;
    let mut penalty = 0.0;
    for (x, &y) in data.rows().zip(data.outcomes()) {
        let decided: Vec<f64> = x.iter().zip(step(f, x, eta, mask)).map(|(a, b)| a + b).collect();
        let gap = y - g.lower(&decided);
        // subgradient 0 at the kink
        if gap <= 0.0 {
            continue;
        }
        penalty += gap;
        let mut v = g.lower_grad(&decided);
        mask.apply(&mut v);
        v.iter_mut().for_each(|vi| *vi *= eta);
        for (gr, jv) in grad.iter_mut().zip(f.grad_param_vjp(x, &v)) {
            *gr -= lambda * jv / m;
        }
    }
    (mse + lambda * penalty / m, grad)
}

pub fn grad_lookahead(
    f: &PredictiveModel,
    g: &IntervalModel,
    data: &Dataset,
    lambda: f64,
    eta: f64,
    mask: &FeatureMask,
) -> Result<Vec<f64>> {
    check_inputs(f, g, data, eta, mask)?;
    Ok(lookahead_value_and_grad(f, g, data, lambda, eta, mask).1)
}

fn wrap(round: usize, stage: &'static str) -> impl FnOnce(Error) -> Error {
    move |e| Error::RoundFailed {
        round,
        stage,
        source: Box::new(e),
    }
}

/// Alternates decisions, propensity, interval and predictor fits for
/// `config.rounds` rounds, starting from a plain least-squares predictor.
pub fn train_lookahead(data: &Dataset, config: &TrainConfig) -> Result<TrainedBundle> {
    config.validate()?;
    let mask = config.mask_for(data.dim())?;
    let mut f = fit_predictive(
        data,
        config.model_kind,
        config.learning_rate,
        config.epochs_init,
    )
    .map_err(wrap(0, "initial fit"))?;

    let mut trace = Vec::with_capacity(config.rounds);
    let mut last = None;
    for round in 1..=config.rounds {
        let decided = decide(&f, data, config.eta, &mask).map_err(wrap(round, "decision"))?;
        let h = fit_propensity(
            data,
            &decided.decided,
            config.propensity_lr,
            config.propensity_epochs,
        )
        .map_err(wrap(round, "propensity fit"))?;
        let weights = h.weights_for(data)?;
        let g = fit_interval(
            config.uncertainty_kind,
            data,
            &weights,
            config.n_bootstrap,
            config.tau,
            config.interval_fit(round_seed(config.seed, round)),
        )
        .map_err(wrap(round, "interval fit"))?;
        let (penalty_at_start, _) = penalty_terms(&f, &g, data, config.eta, &mask);

        if config.lambda == 0.0 {
            descend_mse(&mut f, data, None, config.learning_rate, config.epochs_per_round)
                .map_err(wrap(round, "predictor update"))?;
        } else {
            let mut params = f.params();
            let mut scratch = f.clone();
            gradient_descent(
                &mut params,
                config.learning_rate,
                config.epochs_per_round,
                "lookahead objective",
                |p| {
                    scratch.set_params(p).expect("length fixed");
                    lookahead_value_and_grad(&scratch, &g, data, config.lambda, config.eta, &mask)
                },
            )
            .map_err(wrap(round, "predictor update"))?;
            f.set_params(&params)?;
        }

        let (train_mse, _) = mse_and_grad(&f, data, None);
        let (penalty, active_count) = penalty_terms(&f, &g, data, config.eta, &mask);
        if !(train_mse.is_finite() && penalty.is_finite()) {
            return Err(wrap(round, "predictor update")(Error::Diverged {
                stage: "lookahead objective".into(),
                epoch: config.epochs_per_round,
            }));
        }
        trace.push(RoundTrace {
            round,
            train_mse,
            penalty,
            active_count,
            penalty_at_start,
        });
        last = Some((g, h));
    }

    let (interval, propensity) = last.expect("rounds >= 1");
    Ok(TrainedBundle {
        predictive: f,
        interval,
        propensity,
        trace,
    })
}

/// Mean squared error plus λ·mean(yᵢ − f(x'ᵢ)), where the predictor itself
/// scores its induced decisions.
pub fn naive_objective(
    f: &PredictiveModel,
    data: &Dataset,
    lambda: f64,
    eta: f64,
    mask: &FeatureMask,
) -> Result<f64> {
    check_dim(f.dim(), data.dim())?;
    check_dim(data.dim(), mask.len())?;
    Ok(naive_value_and_grad(f, data, lambda, eta, mask).0)
}

pub fn grad_naive(
    f: &PredictiveModel,
    data: &Dataset,
    lambda: f64,
    eta: f64,
    mask: &FeatureMask,
) -> Result<Vec<f64>> {
    check_dim(f.dim(), data.dim())?;
    check_dim(data.dim(), mask.len())?;
    Ok(naive_value_and_grad(f, data, lambda, eta, mask).1)
}

fn naive_value_and_grad(
    f: &PredictiveModel,
    data: &Dataset,
    lambda: f64,
    eta: f64,
    mask: &FeatureMask,
) -> (f64, Vec<f64>) {
    let (mse, mut grad) = mse_and_grad(f, data, None);
    if lambda == 0.0 {
        return (mse, grad);
    }
    let m = data.len() as f64;
    let mut penalty = 0.0;
    for (x, &y) in data.rows().zip(data.outcomes()) {
        let decided: Vec<f64> = x.iter().zip(step(f, x, eta, mask)).map(|(a, b)| a + b).collect();
        penalty += y - f.eval(&decided);
        // d f(x')/dθ = ∂f/∂θ at x' + ∇ₓf(x')ᵀ ∂x'/∂θ
        let mut v = f.input_grad(&decided);
        mask.apply(&mut v);
        v.iter_mut().for_each(|vi| *vi *= eta);
        let through_decision = f.grad_param_vjp(x, &v);
        for ((gr, direct), indirect) in grad
            .iter_mut()
            .zip(f.param_grad(&decided))
            .zip(through_decision)
        {
            *gr -= lambda * (direct + indirect) / m;
        }
    }
    (mse + lambda * penalty / m, grad)
}

/// Gradient descent from zero on [`naive_objective`], recomputing the
/// decisions from the current predictor at every step.
pub fn train_naive(
    data: &Dataset,
    kind: crate::models::ModelKind,
    lambda: f64,
    eta: f64,
    mask: &FeatureMask,
    lr: f64,
    epochs: usize,
) -> Result<PredictiveModel> {
    check_dim(data.dim(), mask.len())?;
    if !(lambda >= 0.0 && eta >= 0.0) {
        return Err(Error::InvalidConfig("lambda and eta must be >= 0".into()));
    }
    let mut f = PredictiveModel::zeros(kind, data.dim());
    if lambda == 0.0 {
        descend_mse(&mut f, data, None, lr, epochs)?;
        return Ok(f);
    }
    let mut params = f.params();
    let mut scratch = f.clone();
    gradient_descent(&mut params, lr, epochs, "naive objective", |p| {
        scratch.set_params(p).expect("length fixed");
        naive_value_and_grad(&scratch, data, lambda, eta, mask)
    })?;
    f.set_params(&params)?;
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    fn point(x: f64, y: f64) -> Dataset {
        Dataset::new(vec![vec![x]], vec![y]).unwrap()
    }

    fn constant_band(lower: f64, upper: f64) -> IntervalModel {
        IntervalModel::Quantile {
            lower_model: PredictiveModel::linear(vec![0.0], lower),
            upper_model: PredictiveModel::linear(vec![0.0], upper),
            tau: 0.9,
        }
    }

    #[test]
    fn penalty_inactive_when_lower_above_label() {
        let f = PredictiveModel::linear(vec![1.0], 0.0);
        let data = crate::data::generate_synthetic(10, 1).unwrap();
        let g = constant_band(100.0, 101.0);
        let mask = FeatureMask::all_mutable(1);
        assert_eq!(lookahead_penalty(&f, &g, &data, 1.0, &mask).unwrap(), 0.0);
    }

    #[test]
    fn penalty_hinge_arithmetic() {
        let f = PredictiveModel::linear(vec![1.0], 0.0);
        let g = constant_band(0.25, 2.0);
        let mask = FeatureMask::all_mutable(1);
        let r = lookahead_penalty(&f, &g, &point(0.0, 1.0), 1.0, &mask).unwrap();
        assert!((r - 0.75).abs() < 1e-15);
    }

    #[test]
    fn penalty_zero_for_identity_decision_inside_oracle_band() {
        let truth = PredictiveModel::quadratic(vec![0.5], vec![-0.8], 0.1).unwrap();
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![-1.0 + 0.2 * i as f64]).collect();
        let ys = rows.iter().map(|r| truth.eval(r)).collect();
        let data = Dataset::new(rows, ys).unwrap();
        let mut upper = truth.clone();
        upper.bias += 0.1;
        let g = IntervalModel::Quantile {
            lower_model: truth.clone(),
            upper_model: upper,
            tau: 0.9,
        };
        let r = lookahead_penalty(&truth, &g, &data, 0.0, &FeatureMask::all_mutable(1)).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn objective_combines_terms() {
        // f ≡ 0 against y = 1: squared-error term 1; penalty 1 − 0.5 = 0.5
        let f = PredictiveModel::linear(vec![0.0], 0.0);
        let g = constant_band(0.5, 1.0);
        let mask = FeatureMask::all_mutable(1);
        let data = point(0.0, 1.0);
        assert_eq!(lookahead_objective(&f, &g, &data, 4.0, 1.0, &mask).unwrap(), 3.0);
        assert_eq!(lookahead_objective(&f, &g, &data, 0.0, 1.0, &mask).unwrap(), 1.0);
    }

    #[test]
    fn gradient_reduces_to_mse_without_active_hinges() {
        let f = PredictiveModel::quadratic(vec![0.3], vec![-0.2], 0.1).unwrap();
        let data = crate::data::generate_synthetic(15, 2).unwrap();
        let mask = FeatureMask::all_mutable(1);
        let (_, mse_grad) = mse_and_grad(&f, &data, None);
        let g = constant_band(-5.0, 5.0);
        assert_eq!(grad_lookahead(&f, &g, &data, 0.0, 1.0, &mask).unwrap(), mse_grad);
        let g = constant_band(50.0, 60.0);
        assert_eq!(grad_lookahead(&f, &g, &data, 3.0, 1.0, &mask).unwrap(), mse_grad);
    }

    #[test]
    fn naive_zero_lambda_matches_plain_fit() {
        let data = crate::data::generate_synthetic(20, 3).unwrap();
        let mask = FeatureMask::all_mutable(1);
        let a = train_naive(&data, ModelKind::Quadratic, 0.0, 1.0, &mask, 0.05, 300).unwrap();
        let b = fit_predictive(&data, ModelKind::Quadratic, 0.05, 300).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_errors_name_the_round() {
        let data = crate::data::generate_synthetic(20, 3).unwrap();
        let config = TrainConfig {
            learning_rate: 50.0,
            ..TrainConfig::synthetic(1.0)
        };
        match train_lookahead(&data, &config) {
            Err(Error::RoundFailed { round: 0, stage, .. }) => assert_eq!(stage, "initial fit"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trace_csv_shape() {
        let data = crate::data::generate_synthetic(20, 3).unwrap();
        let config = TrainConfig {
            rounds: 2,
            epochs_init: 50,
            epochs_per_round: 10,
            uncertainty_epochs: 50,
            propensity_epochs: 50,
            ..TrainConfig::synthetic(1.0)
        };
        let bundle = train_lookahead(&data, &config).unwrap();
        assert_eq!(bundle.trace.len(), 2);
        let csv = bundle.trace_csv();
        assert!(csv.starts_with("round,train_mse,penalty,active_count,penalty_at_start\n1,"));
        assert_eq!(csv.lines().count(), 3);
        let back: TrainedBundle = serde_json::from_str(&bundle.to_json().unwrap()).unwrap();
        assert_eq!(back, bundle);
    }
}

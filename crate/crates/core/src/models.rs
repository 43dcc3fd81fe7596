//! Parametric regressors with analytic input gradients, the logistic
//! propensity model, and the ground-truth oracle wrapper.
//!
//! Parameters are flattened as `[theta..., theta_sq..., bias]`; linear
//! models have no `theta_sq` block.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::optim::{gradient_descent, sigmoid, softplus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Quadratic,
}

impl ModelKind {
    pub fn n_params(self, d: usize) -> usize {
        match self {
            ModelKind::Linear => d + 1,
            ModelKind::Quadratic => 2 * d + 1,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ModelKind::Linear),
            "quadratic" => Ok(ModelKind::Quadratic),
            other => Err(Error::InvalidConfig(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Dense row-major matrix, used for the small Jacobians below.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// vᵀ · self
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate().take(self.rows) {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += vr * a;
            }
        }
        out
    }
}

/// f(x) = θ·x + θ'·x² + b (θ' absent for linear models).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveModel {
    pub kind: ModelKind,
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_sq: Option<Vec<f64>>,
    pub bias: f64,
}

impl PredictiveModel {
    pub fn zeros(kind: ModelKind, d: usize) -> Self {
        Self {
            kind,
            theta: vec![0.0; d],
            theta_sq: (kind == ModelKind::Quadratic).then(|| vec![0.0; d]),
            bias: 0.0,
        }
    }

    pub fn linear(theta: Vec<f64>, bias: f64) -> Self {
        Self {
            kind: ModelKind::Linear,
            theta,
            theta_sq: None,
            bias,
        }
    }

    pub fn quadratic(theta: Vec<f64>, theta_sq: Vec<f64>, bias: f64) -> Result<Self> {
        check_dim(theta.len(), theta_sq.len())?;
        Ok(Self {
            kind: ModelKind::Quadratic,
            theta,
            theta_sq: Some(theta_sq),
            bias,
        })
    }

    pub fn from_params(kind: ModelKind, d: usize, params: &[f64]) -> Result<Self> {
        let mut model = Self::zeros(kind, d);
        model.set_params(params)?;
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn n_params(&self) -> usize {
        self.kind.n_params(self.dim())
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.theta.clone();
        if let Some(sq) = &self.theta_sq {
            p.extend_from_slice(sq);
        }
        p.push(self.bias);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim(self.n_params(), params.len())?;
        let d = self.dim();
        self.theta.copy_from_slice(&params[..d]);
        if let Some(sq) = &mut self.theta_sq {
            sq.copy_from_slice(&params[d..2 * d]);
        }
        self.bias = params[params.len() - 1];
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.eval(x))
    }

    pub(crate) fn eval(&self, x: &[f64]) -> f64 {
        let mut y = self.bias;
        for (t, v) in self.theta.iter().zip(x) {
            y += t * v;
        }
        if let Some(sq) = &self.theta_sq {
            for (t, v) in sq.iter().zip(x) {
                y += t * v * v;
            }
        }
        y
    }

    /// ∇ₓf(x): θ for linear models, θ + 2θ'⊙x for quadratic ones.
    pub fn grad_x(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self.input_grad(x))
    }

    pub(crate) fn input_grad(&self, x: &[f64]) -> Vec<f64> {
        match &self.theta_sq {
            None => self.theta.clone(),
            Some(sq) => self
                .theta
                .iter()
                .zip(sq)
                .zip(x)
                .map(|((t, s), v)| t + 2.0 * s * v)
                .collect(),
        }
    }

    /// ∂f/∂params at x: `[x, x², 1]`.
    pub(crate) fn param_grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = x.to_vec();
        if self.theta_sq.is_some() {
            g.extend(x.iter().map(|v| v * v));
        }
        g.push(1.0);
        g
    }

    /// Jacobian of [`grad_x`](Self::grad_x) with respect to the flattened
    /// parameters, shape d × n_params.
    pub fn dgrad_dparams(&self, x: &[f64]) -> Result<Matrix> {
        check_dim(self.dim(), x.len())?;
        let d = self.dim();
        let mut jac = Matrix::zeros(d, self.n_params());
        for i in 0..d {
            jac.set(i, i, 1.0);
            if self.theta_sq.is_some() {
                jac.set(i, d + i, 2.0 * x[i]);
            }
        }
        Ok(jac)
    }

    /// vᵀ · dgrad_dparams(x) without materializing the Jacobian.
    pub(crate) fn grad_param_vjp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        if self.theta_sq.is_some() {
            out.extend(v.iter().zip(x).map(|(vi, xi)| 2.0 * xi * vi));
        }
        out.push(0.0);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }
}

/// Gradient of the (optionally weighted) mean squared error at `model`.
pub(crate) fn mse_and_grad(
    model: &PredictiveModel,
    data: &Dataset,
    weights: Option<&[f64]>,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; model.n_params()];
    let mut loss = 0.0;
    let mut total = 0.0;
    for (i, (x, &y)) in data.rows().zip(data.outcomes()).enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        let r = model.eval(x) - y;
        loss += w * r * r;
        total += w;
        for (g, phi) in grad.iter_mut().zip(model.param_grad(x)) {
            *g += 2.0 * w * r * phi;
        }
    }
    grad.iter_mut().for_each(|g| *g /= total);
    (loss / total, grad)
}

/// Continues gradient descent on the (weighted) mean squared error from
/// the model's current parameters.
pub fn descend_mse(
    model: &mut PredictiveModel,
    data: &Dataset,
    weights: Option<&[f64]>,
    lr: f64,
    epochs: usize,
) -> Result<()> {
    check_dim(model.dim(), data.dim())?;
    if let Some(w) = weights {
        check_dim(data.len(), w.len())?;
    }
    let mut params = model.params();
    let mut scratch = model.clone();
    gradient_descent(&mut params, lr, epochs, "squared-loss fit", |p| {
        scratch.set_params(p).expect("length fixed");
        mse_and_grad(&scratch, data, weights)
    })?;
    model.set_params(&params)
}

/// Least-squares fit by full-batch gradient descent from zero.
pub fn fit_predictive(
    data: &Dataset,
    kind: ModelKind,
    lr: f64,
    epochs: usize,
) -> Result<PredictiveModel> {
    fit_predictive_weighted(data, None, kind, lr, epochs)
}

pub fn fit_predictive_weighted(
    data: &Dataset,
    weights: Option<&[f64]>,
    kind: ModelKind,
    lr: f64,
    epochs: usize,
) -> Result<PredictiveModel> {
    let mut model = PredictiveModel::zeros(kind, data.dim());
    descend_mse(&mut model, data, weights, lr, epochs)?;
    Ok(model)
}

/// Coefficient of the L2 penalty on propensity weights (not the bias).
pub const PROPENSITY_L2: f64 = 1e-3;
/// Importance weights are clamped to `[1/WEIGHT_CLAMP, WEIGHT_CLAMP]`.
pub const WEIGHT_CLAMP: f64 = 1e3;

/// Logistic discriminator between original points (label 0) and decided
/// points (label 1); its logit estimates log p'(x)/p(x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl PropensityModel {
    pub fn zeros(d: usize) -> Self {
        Self {
            weights: vec![0.0; d],
            bias: 0.0,
        }
    }

    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.weights.len(), x.len())?;
        Ok(self.raw_logit(x))
    }

    fn raw_logit(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    /// Importance weight e^{h(x)}, clamped to [1e-3, 1e3].
    pub fn weight_of(&self, x: &[f64]) -> Result<f64> {
        let bound = WEIGHT_CLAMP.ln();
        Ok(self.logit(x)?.clamp(-bound, bound).exp())
    }

    pub fn weights_for(&self, data: &Dataset) -> Result<Vec<f64>> {
        data.rows().map(|x| self.weight_of(x)).collect()
    }
}

/// Mean log-loss of the discriminator plus the L2 term, and its gradient
/// ordered `[weights..., bias]`.
pub(crate) fn propensity_loss_and_grad(
    model: &PropensityModel,
    originals: &Dataset,
    decided: &Dataset,
) -> (f64, Vec<f64>) {
    let d = model.weights.len();
    let n = (originals.len() + decided.len()) as f64;
    let mut grad = vec![0.0; d + 1];
    let mut loss = 0.0;
    // label 0: log(1 + e^{h}); label 1: log(1 + e^{-h})
    for (set, label) in [(originals, 0.0), (decided, 1.0)] {
        for x in set.rows() {
            let h = model.raw_logit(x);
            loss += if label == 0.0 { softplus(h) } else { softplus(-h) };
            let dh = sigmoid(h) - label;
            for (g, v) in grad.iter_mut().zip(x) {
                *g += dh * v;
            }
            grad[d] += dh;
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    let mut l2 = 0.0;
    for (g, w) in grad.iter_mut().zip(&model.weights) {
        l2 += w * w;
        *g += 2.0 * PROPENSITY_L2 * w;
    }
    (loss / n + PROPENSITY_L2 * l2, grad)
}

pub fn fit_propensity(
    originals: &Dataset,
    decided: &Dataset,
    lr: f64,
    epochs: usize,
) -> Result<PropensityModel> {
    check_dim(originals.dim(), decided.dim())?;
    let d = originals.dim();
    let mut params = vec![0.0; d + 1];
    let mut scratch = PropensityModel::zeros(d);
    gradient_descent(&mut params, lr, epochs, "propensity fit", |p| {
        scratch.weights.copy_from_slice(&p[..d]);
        scratch.bias = p[d];
        propensity_loss_and_grad(&scratch, originals, decided)
    })?;
    Ok(PropensityModel {
        weights: params[..d].to_vec(),
        bias: params[d],
    })
}

/// Ground-truth outcome function used only for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Oracle {
    model: PredictiveModel,
}

impl Oracle {
    pub fn new(model: PredictiveModel) -> Self {
        Self { model }
    }

    /// −0.8x² + 0.5x + 0.1 on a single feature.
    pub fn synthetic() -> Self {
        Self {
            model: PredictiveModel {
                kind: ModelKind::Quadratic,
                theta: vec![0.5],
                theta_sq: Some(vec![-0.8]),
                bias: 0.1,
            },
        }
    }

    pub fn outcome(&self, x: &[f64]) -> Result<f64> {
        self.model.predict(x)
    }

    pub fn model(&self) -> &PredictiveModel {
        &self.model
    }
}

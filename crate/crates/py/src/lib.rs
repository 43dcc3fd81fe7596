//! Python bindings for the `lookahead` crate.

use lookahead::evaluation::{frontier_csv, frontier_sweep};
use lookahead::{
    decide, evaluate, generate_synthetic, load_csv, train_lookahead, Dataset, EvalReport,
    Experiment, FeatureMask, IntervalModel, ModelKind, Oracle, PredictiveModel, TrainConfig,
    TrainedBundle, UncertaintyKind,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn mask_or_all(mask: Option<Vec<bool>>, d: usize) -> FeatureMask {
    mask.map_or_else(|| FeatureMask::all_mutable(d), FeatureMask::new)
}

#[pyclass(name = "Dataset", module = "lookahead_py", skip_from_py_object, frozen)]
#[derive(Clone)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (rows, outcomes, feature_names=None))]
    fn new(rows: Vec<Vec<f64>>, outcomes: Vec<f64>, feature_names: Option<Vec<String>>) -> PyResult<Self> {
        let mut inner = Dataset::new(rows, outcomes).map_err(err)?;
        if let Some(names) = feature_names {
            inner = inner.with_feature_names(names).map_err(err)?;
        }
        Ok(Self { inner })
    }

    /// Loads a CSV; returns the dataset and the mutability flags.
    #[staticmethod]
    #[pyo3(signature = (path, target, mutable=Vec::new()))]
    fn from_csv(path: &str, target: &str, mutable: Vec<String>) -> PyResult<(Self, Vec<bool>)> {
        let (inner, mask) = load_csv(path, target, &mutable).map_err(err)?;
        Ok((Self { inner }, mask.flags().to_vec()))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows().map(<[f64]>::to_vec).collect()
    }

    fn outcomes(&self) -> Vec<f64> {
        self.inner.outcomes().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(m={}, d={})", self.inner.len(), self.inner.dim())
    }
}

#[pyclass(name = "PredictiveModel", module = "lookahead_py", skip_from_py_object, frozen)]
#[derive(Clone)]
struct PyPredictiveModel {
    inner: PredictiveModel,
}

#[pymethods]
impl PyPredictiveModel {
    #[staticmethod]
    fn linear(theta: Vec<f64>, bias: f64) -> Self {
        Self {
            inner: PredictiveModel::linear(theta, bias),
        }
    }

    #[staticmethod]
    fn quadratic(theta: Vec<f64>, theta_sq: Vec<f64>, bias: f64) -> PyResult<Self> {
        let inner = PredictiveModel::quadratic(theta, theta_sq, bias).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(s).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(err)
    }

    #[getter]
    fn kind(&self) -> String {
        match self.inner.kind {
            ModelKind::Linear => "linear".into(),
            ModelKind::Quadratic => "quadratic".into(),
        }
    }

    #[getter]
    fn params(&self) -> Vec<f64> {
        self.inner.params()
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.predict(&x).map_err(err)
    }

    fn grad_x(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.grad_x(&x).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("PredictiveModel(kind={}, params={:?})", self.kind(), self.inner.params())
    }
}

#[pyclass(name = "IntervalModel", module = "lookahead_py", frozen)]
struct PyIntervalModel {
    inner: IntervalModel,
}

#[pymethods]
impl PyIntervalModel {
    #[getter]
    fn kind(&self) -> String {
        match self.inner.kind() {
            UncertaintyKind::VanillaBootstrap => "vanilla_bootstrap".into(),
            UncertaintyKind::ResidualBootstrap => "residual_bootstrap".into(),
            UncertaintyKind::Quantile => "quantile".into(),
        }
    }

    fn predict_interval(&self, x: Vec<f64>) -> PyResult<(f64, f64)> {
        self.inner.predict_interval(&x).map_err(err)
    }

    fn dlower_dx(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.dlower_dx(&x).map_err(err)
    }
}

#[pyclass(name = "TrainConfig", module = "lookahead_py", skip_from_py_object)]
#[derive(Clone)]
struct PyTrainConfig {
    inner: TrainConfig,
}

#[pymethods]
impl PyTrainConfig {
    /// Synthetic-curves preset at step size `eta`.
    #[new]
    #[pyo3(signature = (eta=1.25))]
    fn new(eta: f64) -> Self {
        Self {
            inner: TrainConfig::synthetic(eta),
        }
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        let inner: TrainConfig = serde_json::from_str(s).map_err(err)?;
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(err)
    }

    #[getter(lambda_)]
    fn get_lambda(&self) -> f64 {
        self.inner.lambda
    }

    #[setter(lambda_)]
    fn set_lambda(&mut self, v: f64) {
        self.inner.lambda = v;
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }

    #[setter]
    fn set_eta(&mut self, v: f64) {
        self.inner.eta = v;
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }

    #[setter]
    fn set_tau(&mut self, v: f64) {
        self.inner.tau = v;
    }

    #[getter]
    fn rounds(&self) -> usize {
        self.inner.rounds
    }

    #[setter]
    fn set_rounds(&mut self, v: usize) {
        self.inner.rounds = v;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.seed = v;
    }

    #[getter]
    fn uncertainty(&self) -> String {
        serde_json::to_value(self.inner.uncertainty_kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default()
    }

    #[setter]
    fn set_uncertainty(&mut self, v: &str) -> PyResult<()> {
        self.inner.uncertainty_kind = v.parse().map_err(err)?;
        Ok(())
    }

    #[getter]
    fn epochs_init(&self) -> usize {
        self.inner.epochs_init
    }

    #[setter]
    fn set_epochs_init(&mut self, v: usize) {
        self.inner.epochs_init = v;
    }

    #[getter]
    fn epochs_per_round(&self) -> usize {
        self.inner.epochs_per_round
    }

    #[setter]
    fn set_epochs_per_round(&mut self, v: usize) {
        self.inner.epochs_per_round = v;
    }
}

#[pyclass(name = "EvalReport", module = "lookahead_py", frozen, get_all)]
struct PyEvalReport {
    rmse: f64,
    improvement_rate: f64,
    improvement_magnitude: f64,
    n_test: usize,
}

impl From<EvalReport> for PyEvalReport {
    fn from(r: EvalReport) -> Self {
        Self {
            rmse: r.rmse,
            improvement_rate: r.improvement_rate,
            improvement_magnitude: r.improvement_magnitude,
            n_test: r.n_test,
        }
    }
}

#[pymethods]
impl PyEvalReport {
    fn __repr__(&self) -> String {
        format!(
            "EvalReport(rmse={:.4}, improvement_rate={:.4}, improvement_magnitude={:.4}, n_test={})",
            self.rmse, self.improvement_rate, self.improvement_magnitude, self.n_test
        )
    }
}

#[pyclass(name = "TrainedBundle", module = "lookahead_py", frozen)]
struct PyTrainedBundle {
    inner: TrainedBundle,
}

#[pymethods]
impl PyTrainedBundle {
    #[getter]
    fn predictive(&self) -> PyPredictiveModel {
        PyPredictiveModel {
            inner: self.inner.predictive.clone(),
        }
    }

    #[getter]
    fn interval(&self) -> PyIntervalModel {
        PyIntervalModel {
            inner: self.inner.interval.clone(),
        }
    }

    /// `(round, train_mse, penalty, active_count)` per round.
    #[getter]
    fn trace(&self) -> Vec<(usize, f64, f64, usize)> {
        self.inner
            .trace
            .iter()
            .map(|t| (t.round, t.train_mse, t.penalty, t.active_count))
            .collect()
    }

    fn trace_csv(&self) -> String {
        self.inner.trace_csv()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }
}

#[pyfunction(name = "generate_synthetic")]
fn py_generate_synthetic(m: usize, seed: u64) -> PyResult<PyDataset> {
    Ok(PyDataset {
        inner: generate_synthetic(m, seed).map_err(err)?,
    })
}

/// 75:25 split of synthetic curves; returns `(train, test)`.
#[pyfunction]
fn synthetic_split(m: usize, seed: u64) -> PyResult<(PyDataset, PyDataset)> {
    let exp = Experiment::synthetic(m, seed).map_err(err)?;
    Ok((PyDataset { inner: exp.train }, PyDataset { inner: exp.test }))
}

/// The analytic oracle −0.8x² + 0.5x + 0.1 as a model.
#[pyfunction]
fn synthetic_oracle() -> PyPredictiveModel {
    PyPredictiveModel {
        inner: Oracle::synthetic().model().clone(),
    }
}

#[pyfunction(name = "train_lookahead")]
fn py_train_lookahead(py: Python<'_>, data: &PyDataset, config: &PyTrainConfig) -> PyResult<PyTrainedBundle> {
    let (data, config) = (data.inner.clone(), config.inner.clone());
    let inner = py
        .detach(move || train_lookahead(&data, &config))
        .map_err(err)?;
    Ok(PyTrainedBundle { inner })
}

#[pyfunction(name = "decide")]
#[pyo3(signature = (model, data, eta, mask=None))]
fn py_decide(model: &PyPredictiveModel, data: &PyDataset, eta: f64, mask: Option<Vec<bool>>) -> PyResult<PyDataset> {
    let mask = mask_or_all(mask, data.inner.dim());
    let out = decide(&model.inner, &data.inner, eta, &mask).map_err(err)?;
    Ok(PyDataset { inner: out.decided })
}

#[pyfunction(name = "evaluate")]
#[pyo3(signature = (model, oracle, test, eta, mask=None))]
fn py_evaluate(
    model: &PyPredictiveModel,
    oracle: &PyPredictiveModel,
    test: &PyDataset,
    eta: f64,
    mask: Option<Vec<bool>>,
) -> PyResult<PyEvalReport> {
    let mask = mask_or_all(mask, test.inner.dim());
    let oracle = Oracle::new(oracle.inner.clone());
    let report = evaluate(&model.inner, &oracle, &test.inner, eta, &mask).map_err(err)?;
    Ok(report.into())
}

/// λ sweep on synthetic curves; returns the frontier CSV.
#[pyfunction]
#[pyo3(signature = (config, grid, m=25, seed=0))]
fn sweep_synthetic(py: Python<'_>, config: &PyTrainConfig, grid: Vec<f64>, m: usize, seed: u64) -> PyResult<String> {
    let config = config.inner.clone();
    py.detach(move || {
        let exp = Experiment::synthetic(m, seed)?;
        frontier_sweep(&exp, &config, &grid).map(|p| frontier_csv(&p))
    })
    .map_err(err)
}

#[pymodule]
fn lookahead_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPredictiveModel>()?;
    m.add_class::<PyIntervalModel>()?;
    m.add_class::<PyTrainConfig>()?;
    m.add_class::<PyEvalReport>()?;
    m.add_class::<PyTrainedBundle>()?;
    m.add_function(wrap_pyfunction!(py_generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_split, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(py_train_lookahead, m)?)?;
    m.add_function(wrap_pyfunction!(py_decide, m)?)?;
    m.add_function(wrap_pyfunction!(py_evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_synthetic, m)?)?;
    Ok(())
}

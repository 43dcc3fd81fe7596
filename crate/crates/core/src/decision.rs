//! The user decision model: one masked gradient step on the predictor,
//! x' = x + η·Γ(∇f(x)).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureMask};
use crate::error::{check_dim, Error, Result};
use crate::models::{Matrix, PredictiveModel};

/// Decided covariates for every row, with the step that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub decided: Dataset,
    /// Row-major m × d matrix of x' − x.
    pub displacement: Vec<f64>,
}

impl DecisionOutcome {
    pub fn displacement_row(&self, i: usize) -> &[f64] {
        let d = self.decided.dim();
        &self.displacement[i * d..(i + 1) * d]
    }

    /// Writes the decided rows as CSV with the original feature names.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let d = self.decided.dim();
        let header: Vec<String> = match self.decided.feature_names() {
            Some(names) => names.to_vec(),
            None => (0..d).map(|j| format!("x{j}")).collect(),
        };
        writeln!(out, "{}", header.join(","))?;
        for row in self.decided.rows() {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

fn validate(f: &PredictiveModel, d: usize, eta: f64, mask: &FeatureMask) -> Result<()> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::InvalidConfig(format!("step size must be >= 0, got {eta}")));
    }
    check_dim(f.dim(), d)?;
    check_dim(d, mask.len())
}

/// Single-row decision step.
pub(crate) fn step(f: &PredictiveModel, x: &[f64], eta: f64, mask: &FeatureMask) -> Vec<f64> {
    let mut g = f.input_grad(x);
    mask.apply(&mut g);
    g.iter_mut().for_each(|v| *v *= eta);
    g
}

pub fn decide(
    f: &PredictiveModel,
    data: &Dataset,
    eta: f64,
    mask: &FeatureMask,
) -> Result<DecisionOutcome> {
    validate(f, data.dim(), eta, mask)?;
    let mut decided = Vec::with_capacity(data.features().len());
    let mut displacement = Vec::with_capacity(data.features().len());
    for x in data.rows() {
        let delta = step(f, x, eta, mask);
        decided.extend(x.iter().zip(&delta).map(|(a, b)| a + b));
        displacement.extend(delta);
    }
    Ok(DecisionOutcome {
        decided: data.with_features(decided)?,
        displacement,
    })
}

/// Jacobian of the decided point x' with respect to f's parameters:
/// η · diag(Γ) · ∂(∇f)/∂params.
pub fn ddecided_dparams(
    f: &PredictiveModel,
    x: &[f64],
    eta: f64,
    mask: &FeatureMask,
) -> Result<Matrix> {
    validate(f, x.len(), eta, mask)?;
    let mut jac = f.dgrad_dparams(x)?;
    for r in 0..jac.rows {
        let scale = if mask.is_mutable(r) { eta } else { 0.0 };
        for c in 0..jac.cols {
            let v = jac.get(r, c);
            jac.set(r, c, scale * v);
        }
    }
    Ok(jac)
}

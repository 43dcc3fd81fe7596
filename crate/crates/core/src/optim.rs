//! Full-batch gradient descent shared by every component fit.

use crate::error::{Error, Result};

/// Runs `epochs` steps of `params -= lr * grad`, where `objective` returns
/// the loss and its gradient at the current parameters. Aborts as soon as
/// the loss or any parameter stops being finite.
pub(crate) fn gradient_descent<F>(
    params: &mut [f64],
    lr: f64,
    epochs: usize,
    stage: &str,
    mut objective: F,
) -> Result<()>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    for epoch in 0..epochs {
        let (loss, grad) = objective(params);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                stage: stage.to_string(),
                epoch,
            });
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= lr * g;
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                stage: stage.to_string(),
                epoch,
            });
        }
    }
    Ok(())
}

/// ln(1 + e^z) without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

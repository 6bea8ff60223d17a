//! Adam optimizer over a list of parameter matrices.

use ndarray::Array2;

use crate::{Error, Result};

/// First/second moment accumulators plus hyperparameters.
///
/// Steps are taken in the ascent direction: the training objective is a
/// lower bound to be maximized.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    /// Completed steps; 0 for a fresh state.
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(shapes: &[(usize, usize)], lr: f64) -> Self {
        AdamState {
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_params(params: &[Array2<f64>], lr: f64) -> Self {
        Self::new(
            &params.iter().map(|p| p.dim()).collect::<Vec<_>>(),
            lr,
        )
    }
}

/// One bias-corrected Adam ascent step in place.
///
/// Any non-finite gradient entry aborts the whole step (parameters,
/// accumulators, and step count untouched) and reports the offending
/// parameter.
pub fn adam_step(
    params: &mut [Array2<f64>],
    grads: &[Array2<f64>],
    state: &mut AdamState,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::OptimizerShape {
            index: 0,
            msg: format!(
                "{} params, {} grads, {} accumulators",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.dim() != g.dim() || p.dim() != state.m[i].dim() {
            return Err(Error::OptimizerShape {
                index: i,
                msg: format!("param {:?} vs grad {:?}", p.dim(), g.dim()),
            });
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { index: i });
        }
    }

    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = &grads[i];
        state.m[i].zip_mut_with(g, |m, &gi| *m = state.beta1 * *m + (1.0 - state.beta1) * gi);
        state.v[i]
            .zip_mut_with(g, |v, &gi| *v = state.beta2 * *v + (1.0 - state.beta2) * gi * gi);
        let lr = state.lr;
        let eps = state.eps;
        ndarray::Zip::from(&mut params[i])
            .and(&state.m[i])
            .and(&state.v[i])
            .for_each(|p, &m, &v| {
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                *p += lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
    Ok(())
}

//! Bias-corrected Adam on an `n × d` parameter matrix.

use crate::math::{powi, sqrt};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the number of steps taken.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Matrix,
    pub second_moment: Matrix,
    pub step_count: u64,
}

impl OptimizerState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            first_moment: Matrix::zeros(rows, cols),
            second_moment: Matrix::zeros(rows, cols),
            step_count: 0,
        }
    }

    /// Applies one update to `z` in place.
    pub fn step(&mut self, grad: &Matrix, z: &mut Matrix, eta: f64, params: &AdamParams) -> Result<()> {
        let shape = (z.rows(), z.cols());
        if (grad.rows(), grad.cols()) != shape || (self.first_moment.rows(), self.first_moment.cols()) != shape {
            return Err(Error::Shape("optimizer, gradient and parameters disagree"));
        }
        self.step_count += 1;
        let t = self.step_count.min(i32::MAX as u64) as i32;
        let bc1 = 1.0 - powi(params.beta1, t);
        let bc2 = 1.0 - powi(params.beta2, t);
        let m = self.first_moment.as_mut_slice();
        let v = self.second_moment.as_mut_slice();
        for (((zi, &g), mi), vi) in z.as_mut_slice().iter_mut().zip(grad.as_slice()).zip(m).zip(v) {
            *mi = params.beta1 * *mi + (1.0 - params.beta1) * g;
            *vi = params.beta2 * *vi + (1.0 - params.beta2) * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *zi -= eta * m_hat / (sqrt(v_hat) + params.eps);
        }
        Ok(())
    }
}

/// Functional form of [`OptimizerState::step`]: returns the new state and
/// the updated parameters (before any reprojection).
pub fn adam_step(
    state: &OptimizerState,
    grad: &Matrix,
    z: &Matrix,
    eta: f64,
    params: &AdamParams,
) -> Result<(OptimizerState, Matrix)> {
    let mut state = state.clone();
    let mut z = z.clone();
    state.step(grad, &mut z, eta, params)?;
    Ok((state, z))
}

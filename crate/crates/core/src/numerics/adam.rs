use super::matrix::Matrix;
use crate::error::{Error, Result};

/// A learnable tensor with its gradient accumulator.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Param {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one [`Param`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub step: u64,
}

impl AdamState {
    pub fn for_param(p: &Param) -> Self {
        let (r, c) = p.value.shape();
        AdamState {
            m: Matrix::zeros(r, c),
            v: Matrix::zeros(r, c),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `param` from its current gradient.
pub fn adam_step(param: &mut Param, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if state.m.shape() != param.value.shape() || state.v.shape() != param.value.shape() {
        return Err(Error::dim(format!("optimizer state shape mismatch for {}", param.name)));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.beta1 as f64, cfg.beta2 as f64);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let lr = cfg.lr as f64;
    let eps = cfg.eps as f64;
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for (i, (p, &g)) in param.value.data_mut().iter_mut().zip(param.grad.data()).enumerate() {
        let g = g as f64;
        let mi = b1 * m[i] as f64 + (1.0 - b1) * g;
        let vi = b2 * v[i] as f64 + (1.0 - b2) * g * g;
        m[i] = mi as f32;
        v[i] = vi as f32;
        let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
        *p = (*p as f64 - update) as f32;
    }
    Ok(())
}

//! Layer primitives. Every forward op has a paired backward op that takes the
//! upstream gradient and accumulates parameter gradients in place.

use rand::Rng;

use super::matrix::{gemm, Matrix, Op};
use crate::error::{Error, Result};

pub const LAYERNORM_EPS: f32 = 1e-5;

const FRAC_1_SQRT_2: f32 = std::f32::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f32 = 0.398_942_3;

/// Single-precision erf as a rational function of `x` on [-4, 4]
/// (|error| < 5e-7 against the f64 reference); saturates outside.
/// Written without `mul_add` so slice loops vectorize.
#[inline]
pub fn erf(x: f32) -> f32 {
    let x = x.clamp(-4.0, 4.0);
    let x2 = x * x;
    let mut p = x2 * -2.726_142_3e-10 + 2.770_681_4e-8;
    p = x2 * p - 2.101_024e-6;
    p = x2 * p - 5.692_506_4e-5;
    p = x2 * p - 7.349_906_3e-4;
    p = x2 * p - 2.954_600_1e-3;
    p = x2 * p - 1.609_603_3e-2;
    p *= x;
    let mut q = x2 * -1.456_607_2e-5 - 2.133_740_6e-4;
    q = x2 * q - 1.682_827e-3;
    q = x2 * q - 7.373_329e-3;
    q = x2 * q - 1.426_474e-2;
    p / q
}

// Below this, 1 + erf loses its relative precision; switch to erfc.
const TAIL: f32 = -3.0;

#[inline]
fn normal_cdf_fast(x: f32) -> f32 {
    0.5 * (1.0 + erf(x * FRAC_1_SQRT_2))
}

#[inline]
fn normal_cdf_tail(x: f32) -> f32 {
    0.5 * libm::erfcf(-x * FRAC_1_SQRT_2)
}

#[inline]
pub fn normal_cdf(x: f32) -> f32 {
    if x < TAIL {
        normal_cdf_tail(x)
    } else {
        normal_cdf_fast(x)
    }
}

#[inline]
pub fn gelu_scalar(x: f32) -> f32 {
    x * normal_cdf(x)
}

#[inline]
fn gelu_grad_scalar(x: f32) -> f32 {
    normal_cdf(x) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Exact (erf) GELU, elementwise. Same values as [`gelu_scalar`]: a
/// branch-free pass over everything, then a fix-up of the far negative tail.
pub fn gelu(x: &Matrix) -> Matrix {
    let mut y = x.clone();
    gelu_in_place(&mut y);
    y
}

pub fn gelu_in_place(x: &mut Matrix) {
    let data = x.data_mut();
    // branch-free pass unless some input needs the tail formula
    if data.iter().all(|&v| v >= TAIL) {
        for v in data.iter_mut() {
            *v *= normal_cdf_fast(*v);
        }
    } else {
        for v in data.iter_mut() {
            *v = gelu_scalar(*v);
        }
    }
}

/// Gradient through GELU given its pre-activation input.
pub fn gelu_backward(x: &Matrix, dy: &Matrix) -> Result<Matrix> {
    x.check_same_shape(dy, "gelu backward")?;
    let mut dx = dy.clone();
    for (g, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        *g *= gelu_grad_scalar(v);
    }
    Ok(dx)
}

/// Per-row statistics kept for the layernorm backward pass.
#[derive(Clone, Debug)]
pub struct LayerNormCache {
    pub xhat: Matrix,
    pub inv_std: Vec<f32>,
}

/// Normalizes each row over the column (channel) axis, then applies `gamma`/`beta`.
fn check_layernorm(d: usize, gamma: &[f32], beta: &[f32], eps: f32) -> Result<()> {
    if gamma.len() != d || beta.len() != d {
        return Err(Error::dim(format!(
            "layernorm over {d} channels given gamma {} / beta {}",
            gamma.len(),
            beta.len()
        )));
    }
    if eps <= 0.0 {
        return Err(Error::Parameter("layernorm eps must be positive".into()));
    }
    Ok(())
}

/// Normalizes one row into `xh`, writes the affine output and returns 1/std.
#[inline]
fn layernorm_row(row: &[f32], gamma: &[f32], beta: &[f32], eps: f32, xh: &mut [f32], out: &mut [f32]) -> f32 {
    let d = row.len() as f64;
    let mean = row.iter().map(|&v| v as f64).sum::<f64>() / d;
    let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / d;
    let is = 1.0 / (var + eps as f64).sqrt();
    for (h, &v) in xh.iter_mut().zip(row) {
        *h = ((v as f64 - mean) * is) as f32;
    }
    for (((o, &h), &g), &b) in out.iter_mut().zip(xh.iter()).zip(gamma).zip(beta) {
        *o = g * h + b;
    }
    is as f32
}

pub fn layernorm(x: &Matrix, gamma: &[f32], beta: &[f32], eps: f32) -> Result<(Matrix, LayerNormCache)> {
    let d = x.cols();
    check_layernorm(d, gamma, beta, eps)?;
    let mut xhat = Matrix::zeros(x.rows(), d);
    let mut out = Matrix::zeros(x.rows(), d);
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        inv_std.push(layernorm_row(x.row(r), gamma, beta, eps, xhat.row_mut(r), out.row_mut(r)));
    }
    Ok((out, LayerNormCache { xhat, inv_std }))
}

/// [`layernorm`] into a reused buffer, without the backward cache.
pub fn layernorm_into(x: &Matrix, gamma: &[f32], beta: &[f32], eps: f32, out: &mut Matrix) -> Result<()> {
    let d = x.cols();
    check_layernorm(d, gamma, beta, eps)?;
    out.reset(x.rows(), d);
    let mut xh = vec![0.0; d];
    for r in 0..x.rows() {
        layernorm_row(x.row(r), gamma, beta, eps, &mut xh, out.row_mut(r));
    }
    Ok(())
}

/// Returns `dx`; accumulates into `dgamma`/`dbeta`.
pub fn layernorm_backward(
    cache: &LayerNormCache,
    gamma: &[f32],
    dy: &Matrix,
    dgamma: &mut [f32],
    dbeta: &mut [f32],
) -> Result<Matrix> {
    cache.xhat.check_same_shape(dy, "layernorm backward")?;
    let d = dy.cols();
    let mut dg = vec![0f64; d];
    let mut db = vec![0f64; d];
    let mut dx = Matrix::zeros(dy.rows(), d);
    let mut dxhat = vec![0f32; d];
    for r in 0..dy.rows() {
        let g = dy.row(r);
        let xh = cache.xhat.row(r);
        let mut mean_dxhat = 0f64;
        let mut mean_dxhat_xhat = 0f64;
        for c in 0..d {
            dg[c] += (g[c] * xh[c]) as f64;
            db[c] += g[c] as f64;
            dxhat[c] = g[c] * gamma[c];
            mean_dxhat += dxhat[c] as f64;
            mean_dxhat_xhat += (dxhat[c] * xh[c]) as f64;
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        let is = cache.inv_std[r] as f64;
        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
            *o = (is * (dxhat[c] as f64 - mean_dxhat - xh[c] as f64 * mean_dxhat_xhat)) as f32;
        }
    }
    for c in 0..d {
        dgamma[c] += dg[c] as f32;
        dbeta[c] += db[c] as f32;
    }
    Ok(dx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout. Returns the output and, in train mode with `p > 0`,
/// the per-entry scale mask (0 or `1/(1-p)`) needed for the backward pass.
pub fn dropout<R: Rng + ?Sized>(x: &Matrix, p: f32, mode: Mode, rng: &mut R) -> Result<(Matrix, Option<Vec<f32>>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Parameter(format!("dropout probability {p} outside [0, 1)")));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f32> = (0..x.len())
        .map(|_| if rng.gen::<f32>() < p { 0.0 } else { keep })
        .collect();
    let mut out = x.clone();
    for (v, m) in out.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    Ok((out, Some(mask)))
}

pub fn dropout_backward(mask: Option<&[f32]>, dy: &Matrix) -> Matrix {
    let mut dx = dy.clone();
    if let Some(mask) = mask {
        for (v, m) in dx.data_mut().iter_mut().zip(mask) {
            *v *= m;
        }
    }
    dx
}

/// `x * w + b` with `w` shaped `in x out` and `b` of length `out`.
pub fn linear(x: &Matrix, w: &Matrix, b: &[f32]) -> Result<Matrix> {
    let mut y = Matrix::zeros(x.rows(), w.cols());
    linear_into(x, w, b, &mut y)?;
    Ok(y)
}

/// [`linear`] into a reused buffer.
pub fn linear_into(x: &Matrix, w: &Matrix, b: &[f32], out: &mut Matrix) -> Result<()> {
    out.reset(x.rows(), w.cols());
    gemm(1.0, x, Op::N, w, Op::N, 0.0, out)?;
    out.add_row_vector(b)
}

/// Returns `dx`; accumulates `x^T dy` into `dw` and column sums into `db`.
pub fn linear_backward(x: &Matrix, w: &Matrix, dy: &Matrix, dw: &mut Matrix, db: &mut [f32]) -> Result<Matrix> {
    gemm(1.0, x, Op::T, dy, Op::N, 1.0, dw)?;
    for (acc, s) in db.iter_mut().zip(dy.col_sums()) {
        *acc += s;
    }
    let mut dx = Matrix::zeros(dy.rows(), w.rows());
    gemm(1.0, dy, Op::N, w, Op::T, 0.0, &mut dx)?;
    Ok(dx)
}

/// Row lookup into an embedding table.
pub fn embed(table: &Matrix, ids: &[usize]) -> Result<Matrix> {
    let mut out = Matrix::zeros(ids.len(), table.cols());
    for (r, &id) in ids.iter().enumerate() {
        if id >= table.rows() {
            return Err(Error::Vocab(format!("id {id} outside table of {} rows", table.rows())));
        }
        out.row_mut(r).copy_from_slice(table.row(id));
    }
    Ok(out)
}

pub fn embed_backward(ids: &[usize], dy: &Matrix, dtable: &mut Matrix) {
    for (r, &id) in ids.iter().enumerate() {
        for (g, &d) in dtable.row_mut(id).iter_mut().zip(dy.row(r)) {
            *g += d;
        }
    }
}

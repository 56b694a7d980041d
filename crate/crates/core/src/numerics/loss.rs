use super::matrix::Matrix;
use crate::error::{Error, Result};

fn unmasked_rows(pred: &Matrix, target: &Matrix, mask: Option<&[bool]>) -> Result<usize> {
    pred.check_same_shape(target, "l1 loss")?;
    match mask {
        Some(m) if m.len() != pred.rows() => Err(Error::dim(format!(
            "mask of length {} for {} frames",
            m.len(),
            pred.rows()
        ))),
        Some(m) => Ok(m.iter().filter(|&&keep| keep).count()),
        None => Ok(pred.rows()),
    }
}

/// Mean absolute difference over the frames (rows) whose mask flag is set.
pub fn l1_loss(pred: &Matrix, target: &Matrix, mask: Option<&[bool]>) -> Result<f32> {
    l1_loss_f64(pred, target, mask).map(|v| v as f32)
}

/// [`l1_loss`] without the final rounding to f32.
pub fn l1_loss_f64(pred: &Matrix, target: &Matrix, mask: Option<&[bool]>) -> Result<f64> {
    let kept = unmasked_rows(pred, target, mask)?;
    if kept == 0 || pred.cols() == 0 {
        return Err(Error::DegenerateInput("every frame is masked".into()));
    }
    let mut sum = 0f64;
    for r in 0..pred.rows() {
        if mask.is_some_and(|m| !m[r]) {
            continue;
        }
        sum += pred
            .row(r)
            .iter()
            .zip(target.row(r))
            .map(|(a, b)| (a - b).abs() as f64)
            .sum::<f64>();
    }
    Ok(sum / (kept * pred.cols()) as f64)
}

/// Gradient of [`l1_loss`] with respect to `pred` (sign(0) = 0).
pub fn l1_loss_backward(pred: &Matrix, target: &Matrix, mask: Option<&[bool]>) -> Result<Matrix> {
    let kept = unmasked_rows(pred, target, mask)?;
    if kept == 0 || pred.cols() == 0 {
        return Err(Error::DegenerateInput("every frame is masked".into()));
    }
    let scale = 1.0 / (kept * pred.cols()) as f32;
    let mut g = Matrix::zeros(pred.rows(), pred.cols());
    for r in 0..pred.rows() {
        if mask.is_some_and(|m| !m[r]) {
            continue;
        }
        for ((o, a), b) in g.row_mut(r).iter_mut().zip(pred.row(r)).zip(target.row(r)) {
            let d = a - b;
            *o = if d > 0.0 {
                scale
            } else if d < 0.0 {
                -scale
            } else {
                0.0
            };
        }
    }
    Ok(g)
}

//! Central-difference verification of analytic gradients.

use rand::Rng;

use super::adam::Param;
use super::rng::stream;
use crate::error::{Error, Result};

/// A scalar function of a fixed set of parameters.
pub trait Objective {
    /// Visits every parameter in a stable order.
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param));
    fn loss(&mut self) -> Result<f64>;
    /// Zeroes all gradients, then fills them for the current values.
    fn loss_and_grad(&mut self) -> Result<f64>;
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub h: f32,
    /// Coordinates sampled per parameter tensor (all of them if the tensor is smaller).
    pub samples_per_param: usize,
    pub seed: u64,
    /// Relative error is taken against `max(|analytic|, |numeric|, abs_floor)`,
    /// i.e. below `abs_floor` the check becomes absolute with tolerance
    /// `rel_tol * abs_floor`.
    pub abs_floor: f64,
    /// Combine central differences at `h` and `h/2` to cancel the `h^2`
    /// truncation term, so a larger `h` can be used against f32 rounding.
    pub richardson: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-2,
            samples_per_param: 16,
            seed: 0,
            abs_floor: 1e-2,
            richardson: true,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub worst: Option<(String, usize, f64, f64)>,
    pub coords_checked: usize,
}

fn with_param<O: Objective + ?Sized, T>(obj: &mut O, index: usize, f: impl FnOnce(&mut Param) -> T) -> T {
    let mut f = Some(f);
    let mut out = None;
    let mut i = 0;
    obj.visit_params(&mut |p| {
        if i == index {
            out = Some((f.take().unwrap())(p));
        }
        i += 1;
    });
    out.expect("parameter index in range")
}

fn central_difference<O: Objective + ?Sized>(obj: &mut O, pi: usize, idx: usize, h: f32, name: &str) -> Result<f64> {
    let orig = with_param(obj, pi, |p| p.value.data()[idx]);
    let up = orig + h;
    let down = orig - h;
    with_param(obj, pi, |p| p.value.data_mut()[idx] = up);
    let lp = obj.loss()?;
    with_param(obj, pi, |p| p.value.data_mut()[idx] = down);
    let lm = obj.loss()?;
    with_param(obj, pi, |p| p.value.data_mut()[idx] = orig);
    if !lp.is_finite() || !lm.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss perturbing {name}[{idx}]")));
    }
    // divide by the step actually taken after f32 rounding
    Ok((lp - lm) / (up as f64 - down as f64))
}

pub fn gradient_check<O: Objective + ?Sized>(obj: &mut O, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    if !(1e-4..=1e-2).contains(&cfg.h) {
        return Err(Error::Parameter(format!("step {} outside [1e-4, 1e-2]", cfg.h)));
    }
    let base = obj.loss_and_grad()?;
    if !base.is_finite() {
        return Err(Error::Numeric("non-finite loss".into()));
    }
    let mut analytic = Vec::new();
    obj.visit_params(&mut |p| analytic.push((p.name.clone(), p.grad.data().to_vec())));

    let mut rng = stream(cfg.seed, &[0x6772_6164]);
    let mut report = GradCheckReport::default();
    for (pi, (name, grad)) in analytic.iter().enumerate() {
        let n = grad.len();
        let coords: Vec<usize> = if n <= cfg.samples_per_param {
            (0..n).collect()
        } else {
            (0..cfg.samples_per_param).map(|_| rng.gen_range(0..n)).collect()
        };
        for idx in coords {
            let d1 = central_difference(obj, pi, idx, cfg.h, name)?;
            let numeric = if cfg.richardson {
                let d2 = central_difference(obj, pi, idx, cfg.h / 2.0, name)?;
                (4.0 * d2 - d1) / 3.0
            } else {
                d1
            };
            let a = grad[idx] as f64;
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(cfg.abs_floor);
            report.coords_checked += 1;
            report.max_abs_err = report.max_abs_err.max(abs);
            if report.worst.is_none() || rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((name.clone(), idx, a, numeric));
            }
        }
    }
    Ok(report)
}

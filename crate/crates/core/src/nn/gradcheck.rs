use alloc::string::String;
use alloc::vec::Vec;

use super::Parameterized;
use crate::{Error, Result, Tensor};

/// Central-difference step.
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Gradient magnitudes below this are compared absolutely rather than relatively.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `(tensor name, max relative error over its elements)`.
    pub per_tensor: Vec<(String, f64)>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&(String, f64)> {
        self.per_tensor.iter().max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares analytic gradients against central differences.
///
/// `eval(t, e, delta)` must return the loss with element `e` of tensor `t`
/// shifted by `delta`, and leave the tensor as it found it.
pub fn check_gradients<F>(analytic: &[(String, Tensor<f64>)], tolerance: f64, mut eval: F) -> Result<GradCheckReport>
where
    F: FnMut(usize, usize, f64) -> Result<f64>,
{
    let h = GRAD_CHECK_STEP;
    let mut per_tensor = Vec::with_capacity(analytic.len());
    let mut max_rel_error: f64 = 0.0;
    for (t, (name, grad)) in analytic.iter().enumerate() {
        grad.ensure_finite("analytic gradient")?;
        let mut worst: f64 = 0.0;
        for (e, &a) in grad.data().iter().enumerate() {
            let plus = eval(t, e, h)?;
            let minus = eval(t, e, -h)?;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(alloc::format!("loss while perturbing {name}[{e}]")));
            }
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(a, numeric));
        }
        max_rel_error = max_rel_error.max(worst);
        per_tensor.push((name.clone(), worst));
    }
    Ok(GradCheckReport {
        per_tensor,
        max_rel_error,
        tolerance,
        passed: max_rel_error <= tolerance,
    })
}

/// Gradient check of a whole model fragment, covering every trainable
/// tensor and the input.
///
/// `loss(model, input, backward)` evaluates the scalar loss; when `backward`
/// is true it must also run the backward pass (writing parameter gradients)
/// and return the input gradient.
pub fn grad_check<M, F>(model: &mut M, input: &Tensor<f64>, tolerance: f64, mut loss: F) -> Result<GradCheckReport>
where
    M: Parameterized<f64>,
    F: FnMut(&mut M, &Tensor<f64>, bool) -> Result<(f64, Option<Tensor<f64>>)>,
{
    let (_, input_grad) = loss(model, input, true)?;
    let mut analytic: Vec<(String, Tensor<f64>)> = model
        .params_mut()
        .into_iter()
        .map(|p| (p.name, p.grad.clone()))
        .collect();
    let n_params = analytic.len();
    if let Some(g) = input_grad {
        analytic.push(("input".into(), g));
    }
    let mut x = input.clone();
    check_gradients(&analytic, tolerance, |t, e, delta| {
        if t == n_params {
            x.data_mut()[e] += delta;
            let l = loss(model, &x, false);
            x.data_mut()[e] -= delta;
            return Ok(l?.0);
        }
        model.params_mut()[t].value.data_mut()[e] += delta;
        let l = loss(model, &x, false);
        model.params_mut()[t].value.data_mut()[e] -= delta;
        Ok(l?.0)
    })
}

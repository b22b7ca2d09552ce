use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{ParamMut, Parameterized};
use crate::{Error, Mode, Real, Result, Tensor};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone)]
struct Cache<T> {
    mode: Mode,
    xhat: Tensor<T>,
    inv_std: Vec<f64>,
}

/// Batch normalization without learnable scale or shift.
///
/// Statistics are taken per feature (axis 1) over every other axis. Running
/// variance is tracked with the unbiased estimate.
#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub epsilon: f64,
    pub momentum: f64,
    cache: Option<Cache<T>>,
}

fn layout<T: Real>(input: &Tensor<T>, features: usize) -> Result<(usize, usize)> {
    let shape = input.shape();
    if shape.len() < 2 || shape[1] != features {
        return Err(Error::ShapeMismatch {
            context: "batch norm input",
            expected: vec![0, features],
            found: shape.to_vec(),
        });
    }
    Ok((shape[0], shape[2..].iter().product()))
}

impl<T: Real> BatchNorm<T> {
    pub fn new(num_features: usize) -> Self {
        Self {
            running_mean: Tensor::zeros(&[num_features]),
            running_var: Tensor::from_fn(&[num_features], |_| T::one()),
            epsilon: BN_EPSILON,
            momentum: BN_MOMENTUM,
            cache: None,
        }
    }

    pub fn num_features(&self) -> usize {
        self.running_mean.len()
    }

    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let f = self.num_features();
        let (n, spatial) = layout(input, f)?;
        let count = n * spatial;
        let x = input.data();
        let (mean, inv_std) = match mode {
            Mode::Train => {
                if count < 2 {
                    return Err(Error::BatchTooSmall(count));
                }
                let mut mean = vec![0.0f64; f];
                let mut var = vec![0.0f64; f];
                for s in 0..n {
                    for c in 0..f {
                        let block = &x[(s * f + c) * spatial..][..spatial];
                        mean[c] += block.iter().map(|v| v.as_f64()).sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= count as f64);
                for s in 0..n {
                    for c in 0..f {
                        let block = &x[(s * f + c) * spatial..][..spatial];
                        var[c] += block
                            .iter()
                            .map(|v| {
                                let d = v.as_f64() - mean[c];
                                d * d
                            })
                            .sum::<f64>();
                    }
                }
                let m = self.momentum;
                let unbias = count as f64 / (count as f64 - 1.0);
                let mut inv_std = Vec::with_capacity(f);
                for c in 0..f {
                    let v = var[c] / count as f64;
                    let rm = &mut self.running_mean.data_mut()[c];
                    *rm = T::cast((1.0 - m) * rm.as_f64() + m * mean[c]);
                    let rv = &mut self.running_var.data_mut()[c];
                    *rv = T::cast((1.0 - m) * rv.as_f64() + m * v * unbias);
                    inv_std.push(1.0 / libm::sqrt(v + self.epsilon));
                }
                (mean, inv_std)
            }
            Mode::Eval => (
                self.running_mean.data().iter().map(|v| v.as_f64()).collect(),
                self.running_var
                    .data()
                    .iter()
                    .map(|v| 1.0 / libm::sqrt(v.as_f64() + self.epsilon))
                    .collect(),
            ),
        };
        let mut out = Tensor::zeros(input.shape());
        let o = out.data_mut();
        for s in 0..n {
            for c in 0..f {
                let off = (s * f + c) * spatial;
                let (mu, is) = (T::cast(mean[c]), T::cast(inv_std[c]));
                for (d, &v) in o[off..off + spatial].iter_mut().zip(&x[off..off + spatial]) {
                    *d = (v - mu) * is;
                }
            }
        }
        self.cache = Some(Cache {
            mode,
            xhat: out.clone(),
            inv_std,
        });
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or(Error::ShapeMismatch {
            context: "batch norm backward without forward",
            expected: vec![],
            found: vec![],
        })?;
        grad_out.expect_shape("batch norm grad_out", cache.xhat.shape())?;
        let f = self.num_features();
        let (n, spatial) = layout(grad_out, f)?;
        let g = grad_out.data();
        let mut gx = Tensor::zeros(grad_out.shape());
        let out = gx.data_mut();
        match cache.mode {
            Mode::Eval => {
                for s in 0..n {
                    for c in 0..f {
                        let off = (s * f + c) * spatial;
                        let is = T::cast(cache.inv_std[c]);
                        for (d, &v) in out[off..off + spatial].iter_mut().zip(&g[off..off + spatial]) {
                            *d = v * is;
                        }
                    }
                }
            }
            Mode::Train => {
                let xh = cache.xhat.data();
                let count = (n * spatial) as f64;
                let mut mean_g = vec![0.0f64; f];
                let mut mean_gx = vec![0.0f64; f];
                for s in 0..n {
                    for c in 0..f {
                        let off = (s * f + c) * spatial;
                        for i in off..off + spatial {
                            mean_g[c] += g[i].as_f64();
                            mean_gx[c] += g[i].as_f64() * xh[i].as_f64();
                        }
                    }
                }
                for c in 0..f {
                    mean_g[c] /= count;
                    mean_gx[c] /= count;
                }
                for s in 0..n {
                    for c in 0..f {
                        let off = (s * f + c) * spatial;
                        let is = cache.inv_std[c];
                        for i in off..off + spatial {
                            out[i] = T::cast(is * (g[i].as_f64() - mean_g[c] - xh[i].as_f64() * mean_gx[c]));
                        }
                    }
                }
            }
        }
        Ok(gx)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

impl<T: Real> Parameterized<T> for BatchNorm<T> {
    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        vec![
            ("running_mean".into(), &mut self.running_mean),
            ("running_var".into(), &mut self.running_var),
        ]
    }
}

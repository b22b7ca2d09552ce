use alloc::vec;

use rand::Rng;

use super::{fan_in_uniform, ParamMut, Parameterized};
use crate::{Error, Real, Result, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

fn check_geometry<T: Real>(input: &Tensor<T>, weight: &Tensor<T>) -> Result<([usize; 4], [usize; 4])> {
    let [n, cin, h, w] = input.dims4("conv2d input")?;
    let [cout, wcin, kh, kw] = weight.dims4("conv2d weight")?;
    if wcin != cin {
        return Err(Error::ChannelMismatch {
            expected: wcin,
            found: cin,
        });
    }
    if kh > h || kw > w || kh == 0 || kw == 0 {
        return Err(Error::KernelTooLarge {
            kernel_h: kh,
            kernel_w: kw,
            input_h: h,
            input_w: w,
        });
    }
    Ok(([n, cin, h, w], [cout, cin, kh, kw]))
}

/// Valid cross-correlation with stride 1: `N×Cin×h×w` → `N×Cout×(h−kh+1)×(w−kw+1)`.
pub fn conv2d_forward<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let ([n, cin, h, w], [cout, _, kh, kw]) = check_geometry(input, weight)?;
    if let Some(b) = bias {
        b.expect_shape("conv2d bias", &[cout])?;
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = Tensor::zeros(&[n, cout, oh, ow]);
    let x = input.data();
    let wt = weight.data();
    let plane_in = h * w;
    let plane_out = oh * ow;
    let o = out.data_mut();
    for s in 0..n {
        for co in 0..cout {
            let dst = &mut o[(s * cout + co) * plane_out..][..plane_out];
            if let Some(b) = bias {
                dst.fill(b.data()[co]);
            }
            for ci in 0..cin {
                let src = &x[(s * cin + ci) * plane_in..][..plane_in];
                let wk = &wt[(co * cin + ci) * kh * kw..][..kh * kw];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = wk[ky * kw + kx];
                        for y in 0..oh {
                            let src_row = &src[(y + ky) * w + kx..][..ow];
                            let dst_row = &mut dst[y * ow..][..ow];
                            for (d, &v) in dst_row.iter_mut().zip(src_row) {
                                *d += wv * v;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of a scalar loss through [`conv2d_forward`].
///
/// `input_grad` can be switched off for layers fed directly by data.
pub fn conv2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    has_bias: bool,
    input_grad: bool,
) -> Result<Conv2dGrads<T>> {
    let ([n, cin, h, w], [cout, _, kh, kw]) = check_geometry(input, weight)?;
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    grad_out.expect_shape("conv2d grad_out", &[n, cout, oh, ow])?;
    let g = grad_out.data();
    let x = input.data();
    let wt = weight.data();
    let plane_in = h * w;
    let plane_out = oh * ow;

    let mut gw = Tensor::zeros(weight.shape());
    let mut gx = if input_grad {
        Some(Tensor::zeros(input.shape()))
    } else {
        None
    };
    let gwd = gw.data_mut();
    for s in 0..n {
        for co in 0..cout {
            let go = &g[(s * cout + co) * plane_out..][..plane_out];
            for ci in 0..cin {
                let src = &x[(s * cin + ci) * plane_in..][..plane_in];
                let base = (co * cin + ci) * kh * kw;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let mut acc = T::zero();
                        for y in 0..oh {
                            let src_row = &src[(y + ky) * w + kx..][..ow];
                            let g_row = &go[y * ow..][..ow];
                            acc += dot(src_row, g_row);
                        }
                        gwd[base + ky * kw + kx] += acc;
                    }
                }
                if let Some(gx) = gx.as_mut() {
                    let dst = &mut gx.data_mut()[(s * cin + ci) * plane_in..][..plane_in];
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let wv = wt[base + ky * kw + kx];
                            for y in 0..oh {
                                let g_row = &go[y * ow..][..ow];
                                let dst_row = &mut dst[(y + ky) * w + kx..][..ow];
                                for (d, &v) in dst_row.iter_mut().zip(g_row) {
                                    *d += wv * v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let gb = has_bias.then(|| {
        let mut gb = Tensor::zeros(&[cout]);
        for s in 0..n {
            for co in 0..cout {
                let go = &g[(s * cout + co) * plane_out..][..plane_out];
                gb.data_mut()[co] += go.iter().copied().sum::<T>();
            }
        }
        gb
    });
    Ok(Conv2dGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

fn check_batch_last<T: Real>(input: &Tensor<T>, weight: &Tensor<T>) -> Result<([usize; 4], [usize; 4])> {
    let [cin, h, w, n] = input.dims4("batch-last conv input")?;
    let [cout, wcin, kh, kw] = weight.dims4("conv2d weight")?;
    if wcin != cin {
        return Err(Error::ChannelMismatch {
            expected: wcin,
            found: cin,
        });
    }
    if kh > h || kw > w || kh == 0 || kw == 0 {
        return Err(Error::KernelTooLarge {
            kernel_h: kh,
            kernel_w: kw,
            input_h: h,
            input_w: w,
        });
    }
    Ok(([cin, h, w, n], [cout, cin, kh, kw]))
}

/// [`conv2d_forward`] on batch-last tensors: `Cin×h×w×N` → `Cout×h'×w'×N`.
///
/// Suited to small maps with a large batch, where the contiguous batch axis
/// gives the inner loops their length.
pub fn conv2d_forward_batch_last<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let ([cin, h, w, n], [cout, _, kh, kw]) = check_batch_last(input, weight)?;
    if let Some(b) = bias {
        b.expect_shape("conv2d bias", &[cout])?;
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = Tensor::zeros(&[cout, oh, ow, n]);
    let x = input.data();
    let wt = weight.data();
    let o = out.data_mut();
    for co in 0..cout {
        let dst_c = &mut o[co * oh * ow * n..][..oh * ow * n];
        if let Some(b) = bias {
            dst_c.fill(b.data()[co]);
        }
        for y in 0..oh {
            for xo in 0..ow {
                let dst = &mut dst_c[(y * ow + xo) * n..][..n];
                for ci in 0..cin {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let wv = wt[((co * cin + ci) * kh + ky) * kw + kx];
                            let src = &x[((ci * h + y + ky) * w + xo + kx) * n..][..n];
                            for (d, &v) in dst.iter_mut().zip(src) {
                                *d += wv * v;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Backward pass of [`conv2d_forward_batch_last`].
pub fn conv2d_backward_batch_last<T: Real>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    has_bias: bool,
    input_grad: bool,
) -> Result<Conv2dGrads<T>> {
    let ([cin, h, w, n], [cout, _, kh, kw]) = check_batch_last(input, weight)?;
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    grad_out.expect_shape("conv2d grad_out", &[cout, oh, ow, n])?;
    let g = grad_out.data();
    let x = input.data();
    let wt = weight.data();
    let mut gw = Tensor::zeros(weight.shape());
    let mut gx = if input_grad {
        Some(Tensor::zeros(input.shape()))
    } else {
        None
    };
    let gwd = gw.data_mut();
    for co in 0..cout {
        for y in 0..oh {
            for xo in 0..ow {
                let go = &g[((co * oh + y) * ow + xo) * n..][..n];
                for ci in 0..cin {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let widx = ((co * cin + ci) * kh + ky) * kw + kx;
                            let off = ((ci * h + y + ky) * w + xo + kx) * n;
                            gwd[widx] += dot(&x[off..][..n], go);
                            if let Some(gx) = gx.as_mut() {
                                let wv = wt[widx];
                                for (d, &v) in gx.data_mut()[off..][..n].iter_mut().zip(go) {
                                    *d += wv * v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let gb = has_bias.then(|| {
        Tensor::from_fn(&[cout], |co| {
            g[co * oh * ow * n..][..oh * ow * n].iter().copied().sum::<T>()
        })
    });
    Ok(Conv2dGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    // four independent accumulators so the loop vectorizes; fixed order keeps it deterministic
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for j in 0..4 {
            acc[j] += a[4 * i + j] * b[4 * i + j];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Stateful convolution layer (stride 1, no padding).
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Option<Tensor<T>>,
    input_grad: bool,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        has_bias: bool,
        rng: &mut R,
    ) -> Self {
        let shape = [out_channels, in_channels, kernel.0, kernel.1];
        let weight = fan_in_uniform(&shape, in_channels * kernel.0 * kernel.1, rng);
        Self::from_parts(weight, has_bias.then(|| Tensor::zeros(&[out_channels])))
    }

    pub fn from_parts(weight: Tensor<T>, bias: Option<Tensor<T>>) -> Self {
        let grad_weight = Tensor::zeros(weight.shape());
        let grad_bias = bias.as_ref().map(|b| Tensor::zeros(b.shape()));
        Self {
            weight,
            bias,
            grad_weight,
            grad_bias,
            input_grad: true,
            cache: None,
        }
    }

    /// Skip computing the gradient with respect to the layer input.
    pub fn without_input_grad(mut self) -> Self {
        self.input_grad = false;
        self
    }

    pub fn set_input_grad(&mut self, on: bool) {
        self.input_grad = on;
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.shape()[2], self.weight.shape()[3])
    }

    pub fn has_bias(&self) -> bool {
        self.bias.is_some()
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (kh, kw) = self.kernel();
        (h >= kh && w >= kw).then(|| (h - kh + 1, w - kw + 1))
    }

    pub fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let out = conv2d_forward(input, &self.weight, self.bias.as_ref())?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    /// Writes weight/bias gradients; returns the input gradient when enabled.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Option<Tensor<T>>> {
        let input = self.cache.as_ref().ok_or(Error::ShapeMismatch {
            context: "conv2d backward without forward",
            expected: vec![],
            found: vec![],
        })?;
        let g = conv2d_backward(grad_out, input, &self.weight, self.bias.is_some(), self.input_grad)?;
        self.grad_weight = g.weight;
        self.grad_bias = g.bias;
        Ok(g.input)
    }

    /// Forward on a batch-last `Cin×h×w×N` tensor.
    pub fn forward_batch_last(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let out = conv2d_forward_batch_last(input, &self.weight, self.bias.as_ref())?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    pub fn backward_batch_last(&mut self, grad_out: &Tensor<T>) -> Result<Option<Tensor<T>>> {
        let input = self.cache.as_ref().ok_or(Error::ShapeMismatch {
            context: "conv2d backward without forward",
            expected: vec![],
            found: vec![],
        })?;
        let g = conv2d_backward_batch_last(grad_out, input, &self.weight, self.bias.is_some(), self.input_grad)?;
        self.grad_weight = g.weight;
        self.grad_bias = g.bias;
        Ok(g.input)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

impl<T: Real> Parameterized<T> for Conv2d<T> {
    fn params_mut(&mut self) -> alloc::vec::Vec<ParamMut<'_, T>> {
        let mut out = vec![ParamMut {
            name: "weight".into(),
            value: &mut self.weight,
            grad: &mut self.grad_weight,
        }];
        if let (Some(b), Some(gb)) = (self.bias.as_mut(), self.grad_bias.as_mut()) {
            out.push(ParamMut {
                name: "bias".into(),
                value: b,
                grad: gb,
            });
        }
        out
    }
}

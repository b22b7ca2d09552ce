use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{fan_in_uniform, ParamMut, Parameterized};
use crate::{Error, Real, Result, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// `y = x Wᵀ + b` for `x: N×in`, `W: out×in`.
pub fn dense_forward<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, fin] = input.dims2("dense input")?;
    let [fout, win] = weight.dims2("dense weight")?;
    if win != fin {
        return Err(Error::ChannelMismatch {
            expected: win,
            found: fin,
        });
    }
    bias.expect_shape("dense bias", &[fout])?;
    let x = input.data();
    let w = weight.data();
    let mut out = Vec::with_capacity(n * fout);
    for s in 0..n {
        let row = &x[s * fin..][..fin];
        for o in 0..fout {
            let wr = &w[o * fin..][..fin];
            out.push(bias.data()[o] + row.iter().zip(wr).map(|(&a, &b)| a * b).sum::<T>());
        }
    }
    Tensor::from_vec(&[n, fout], out)
}

pub fn dense_backward<T: Real>(grad_out: &Tensor<T>, input: &Tensor<T>, weight: &Tensor<T>) -> Result<DenseGrads<T>> {
    let [n, fin] = input.dims2("dense input")?;
    let [fout, _] = weight.dims2("dense weight")?;
    grad_out.expect_shape("dense grad_out", &[n, fout])?;
    let (g, x, w) = (grad_out.data(), input.data(), weight.data());
    let mut gx = Tensor::zeros(&[n, fin]);
    let mut gw = Tensor::zeros(&[fout, fin]);
    let mut gb = Tensor::zeros(&[fout]);
    for s in 0..n {
        let row = &x[s * fin..][..fin];
        for o in 0..fout {
            let go = g[s * fout + o];
            gb.data_mut()[o] += go;
            let gwr = &mut gw.data_mut()[o * fin..][..fin];
            for (d, &v) in gwr.iter_mut().zip(row) {
                *d += go * v;
            }
            let wr = &w[o * fin..][..fin];
            let gxr = &mut gx.data_mut()[s * fin..][..fin];
            for (d, &v) in gxr.iter_mut().zip(wr) {
                *d += go * v;
            }
        }
    }
    Ok(DenseGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Dense<T> {
    pub fn new<R: Rng + ?Sized>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        let weight = fan_in_uniform(&[out_features, in_features], in_features, rng);
        Self::from_parts(weight, Tensor::zeros(&[out_features]))
    }

    pub fn from_parts(weight: Tensor<T>, bias: Tensor<T>) -> Self {
        Self {
            grad_weight: Tensor::zeros(weight.shape()),
            grad_bias: Tensor::zeros(bias.shape()),
            weight,
            bias,
            cache: None,
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let y = dense_forward(input, &self.weight, &self.bias)?;
        self.cache = Some(input.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self.cache.as_ref().ok_or(Error::ShapeMismatch {
            context: "dense backward without forward",
            expected: vec![],
            found: vec![],
        })?;
        let g = dense_backward(grad_out, input, &self.weight)?;
        self.grad_weight = g.weight;
        self.grad_bias = g.bias;
        Ok(g.input)
    }
}

impl<T: Real> Parameterized<T> for Dense<T> {
    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        vec![
            ParamMut {
                name: "weight".into(),
                value: &mut self.weight,
                grad: &mut self.grad_weight,
            },
            ParamMut {
                name: "bias".into(),
                value: &mut self.bias,
                grad: &mut self.grad_bias,
            },
        ]
    }
}

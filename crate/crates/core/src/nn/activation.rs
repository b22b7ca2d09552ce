use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Mode, Real, Result, Tensor};

/// Lower clamp applied before the logarithm.
pub const LOG_FLOOR: f64 = 1e-6;

pub fn square_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v * v)
}

pub fn square_backward<T: Real>(grad_out: &Tensor<T>, input: &Tensor<T>) -> Tensor<T> {
    Tensor::from_fn(input.shape(), |i| T::cast(2.0) * input.data()[i] * grad_out.data()[i])
}

/// `ln(max(x, 1e-6))`.
pub fn safe_log_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let floor = T::cast(LOG_FLOOR);
    x.map(|v| v.max(floor).ln())
}

pub fn safe_log_backward<T: Real>(grad_out: &Tensor<T>, input: &Tensor<T>) -> Tensor<T> {
    let floor = T::cast(LOG_FLOOR);
    Tensor::from_fn(input.shape(), |i| {
        let v = input.data()[i];
        if v > floor {
            grad_out.data()[i] / v
        } else {
            T::zero()
        }
    })
}

/// Inverted dropout with its own seeded stream.
#[derive(Debug, Clone)]
pub struct Dropout<T> {
    p: f64,
    rng: ChaCha8Rng,
    mask: Option<Vec<T>>,
}

impl<T: Real> Dropout<T> {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidConfig(alloc::format!(
                "dropout probability {p} not in [0, 1)"
            )));
        }
        Ok(Self {
            p,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: None,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        if mode == Mode::Eval || self.p == 0.0 {
            self.mask = None;
            return x.clone();
        }
        let keep = T::cast(1.0 / (1.0 - self.p));
        let p = self.p;
        let rng = &mut self.rng;
        let mask: Vec<T> = (0..x.len())
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
            .collect();
        let out = Tensor::from_fn(x.shape(), |i| x.data()[i] * mask[i]);
        self.mask = Some(mask);
        out
    }

    pub fn backward(&self, grad_out: &Tensor<T>) -> Tensor<T> {
        match &self.mask {
            Some(mask) => Tensor::from_fn(grad_out.shape(), |i| grad_out.data()[i] * mask[i]),
            None => grad_out.clone(),
        }
    }
}

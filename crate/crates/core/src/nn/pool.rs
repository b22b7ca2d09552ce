use crate::{Error, Real, Result, Tensor};

/// Number of windows of `len` with `stride` that fit in `n`.
pub fn pooled_len(n: usize, len: usize, stride: usize) -> Option<usize> {
    (len >= 1 && stride >= 1 && n >= len).then(|| (n - len) / stride + 1)
}

/// Mean pooling along the last axis.
pub fn mean_pool_forward<T: Real>(input: &Tensor<T>, len: usize, stride: usize) -> Result<Tensor<T>> {
    let shape = input.shape();
    let n = *shape.last().unwrap_or(&0);
    let p = pooled_len(n, len, stride).ok_or(Error::KernelTooLarge {
        kernel_h: 1,
        kernel_w: len,
        input_h: 1,
        input_w: n,
    })?;
    let mut out_shape = shape.to_vec();
    *out_shape.last_mut().unwrap() = p;
    let scale = T::one() / T::cast(len as f64);
    let mut out = alloc::vec::Vec::with_capacity(input.len() / n * p);
    for row in input.data().chunks_exact(n) {
        for i in 0..p {
            out.push(row[i * stride..i * stride + len].iter().copied().sum::<T>() * scale);
        }
    }
    Tensor::from_vec(&out_shape, out)
}

pub fn mean_pool_backward<T: Real>(
    grad_out: &Tensor<T>,
    input_shape: &[usize],
    len: usize,
    stride: usize,
) -> Result<Tensor<T>> {
    let n = *input_shape.last().unwrap_or(&0);
    let p = *grad_out.shape().last().unwrap_or(&0);
    if pooled_len(n, len, stride) != Some(p) {
        return Err(Error::ShapeMismatch {
            context: "mean pool grad_out",
            expected: input_shape.to_vec(),
            found: grad_out.shape().to_vec(),
        });
    }
    let scale = T::one() / T::cast(len as f64);
    let mut gx = Tensor::zeros(input_shape);
    for (dst, g) in gx.data_mut().chunks_exact_mut(n).zip(grad_out.data().chunks_exact(p)) {
        for (i, &gv) in g.iter().enumerate() {
            for d in &mut dst[i * stride..i * stride + len] {
                *d += gv * scale;
            }
        }
    }
    Ok(gx)
}

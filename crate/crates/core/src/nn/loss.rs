use alloc::vec::Vec;

use crate::{Error, Real, Result, Tensor};

/// Mean negative log-likelihood of `labels` under `softmax(logits)`.
///
/// Returns the loss and its gradient `(softmax − onehot) / N`.
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let [n, k] = logits.dims2("softmax_cross_entropy logits")?;
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            context: "softmax_cross_entropy labels",
            expected: alloc::vec![n],
            found: alloc::vec![labels.len()],
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange { label: bad, classes: k });
    }
    let inv_n = T::one() / T::cast(n as f64);
    let mut grad = Vec::with_capacity(n * k);
    let mut total = T::zero();
    for (row, &label) in logits.data().chunks_exact(k).zip(labels) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&z| (z - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - row[label];
        for (j, &z) in row.iter().enumerate() {
            let p = (z - log_z).exp();
            let target = if j == label { T::one() } else { T::zero() };
            grad.push((p - target) * inv_n);
        }
    }
    let loss = total * inv_n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("cross-entropy loss".into()));
    }
    Ok((loss, Tensor::from_vec(&[n, k], grad)?))
}

use super::{Grid, Real};
use crate::error::{Error, Result};

/// Row-wise softmax over the channel axis of an `(N, 1, K)` grid.
pub fn softmax<T: Real>(logits: &Grid<T>) -> Grid<T> {
    let k = logits.channels();
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total = total + *v;
        }
        row.iter_mut().for_each(|v| *v = *v / total);
    }
    out
}

#[derive(Debug, Clone)]
pub struct SoftmaxXent<T> {
    /// Mean of `−ln P[label]` over the batch.
    pub loss: T,
    pub probs: Grid<T>,
    /// `(P − onehot(label)) / N`, the gradient of the mean loss w.r.t. the logits.
    pub grad: Grid<T>,
}

pub fn softmax_xent<T: Real>(logits: &Grid<T>, labels: &[usize]) -> Result<SoftmaxXent<T>> {
    let (n, k) = (logits.batch(), logits.channels());
    if logits.len() != 1 || labels.len() != n {
        return Err(Error::shape(
            "softmax_xent",
            format!("{} flat logit rows", labels.len()),
            logits.shape(),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidArgument(format!("label {bad} outside 0..{k}")));
    }

    let probs = softmax(logits);
    let scale = T::one() / T::from_usize(n).unwrap();
    let mut grad = probs.clone();
    let mut loss = T::zero();
    for ((z, g), &label) in logits
        .data()
        .chunks_exact(k)
        .zip(grad.data_mut().chunks_exact_mut(k))
        .zip(labels)
    {
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let log_total = z.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        loss = loss + (log_total - (z[label] - max));
        g[label] = g[label] - T::one();
        g.iter_mut().for_each(|v| *v = *v * scale);
    }
    Ok(SoftmaxXent {
        loss: loss * scale,
        probs,
        grad,
    })
}

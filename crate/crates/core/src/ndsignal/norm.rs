use super::{Grid, Real, Shape};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;

/// Batch statistics in training, frozen running statistics in inference.
#[derive(Debug, Clone, Copy)]
pub enum BnMode<'a, T> {
    Train,
    Eval { mean: &'a [T], var: &'a [T] },
}

#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    normalized: Grid<T>,
    inv_std: Vec<T>,
    train: bool,
    /// Per-channel batch mean and (biased) variance; empty in eval mode.
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
}

impl<T: Real> BatchNormCache<T> {
    /// `running ← momentum·running + (1 − momentum)·batch`. No-op for eval caches.
    pub fn update_running(&self, mean: &mut [T], var: &mut [T], momentum: T) {
        if !self.train {
            return;
        }
        let rest = T::one() - momentum;
        for (r, &b) in mean.iter_mut().zip(&self.batch_mean) {
            *r = momentum * *r + rest * b;
        }
        for (r, &b) in var.iter_mut().zip(&self.batch_var) {
            *r = momentum * *r + rest * b;
        }
    }
}

/// Per-channel normalisation over the batch and length axes, then `γ·x̂ + β`.
pub fn batch_norm1d<T: Real>(
    input: &Grid<T>,
    gamma: &Grid<T>,
    beta: &Grid<T>,
    mode: BnMode<'_, T>,
) -> Result<(Grid<T>, BatchNormCache<T>)> {
    let c = input.channels();
    let param_shape = Shape::new(1, 1, c);
    gamma.expect_shape("batch_norm1d", param_shape)?;
    beta.expect_shape("batch_norm1d", param_shape)?;
    let eps = T::from_f64_lossy(BN_EPS);

    let (mean, var, train) = match mode {
        BnMode::Train => {
            if input.batch() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "batch_norm1d: training mode needs a batch of at least 2, got {}",
                    input.batch()
                )));
            }
            let count = T::from_usize(input.batch() * input.len()).unwrap();
            let mut mean = vec![T::zero(); c];
            for row in input.data().chunks_exact(c) {
                for (m, &v) in mean.iter_mut().zip(row) {
                    *m = *m + v;
                }
            }
            mean.iter_mut().for_each(|m| *m = *m / count);
            let mut var = vec![T::zero(); c];
            for row in input.data().chunks_exact(c) {
                for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                    *s = *s + (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s = *s / count);
            (mean, var, true)
        }
        BnMode::Eval { mean, var } => {
            if mean.len() != c || var.len() != c {
                return Err(Error::shape("batch_norm1d", format!("{c} running statistics"), mean.len()));
            }
            (mean.to_vec(), var.to_vec(), false)
        }
    };

    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut normalized = input.clone();
    let mut out = input.clone();
    for (xh, y) in normalized
        .data_mut()
        .chunks_exact_mut(c)
        .zip(out.data_mut().chunks_exact_mut(c))
    {
        for i in 0..c {
            xh[i] = (xh[i] - mean[i]) * inv_std[i];
            y[i] = gamma.data()[i] * xh[i] + beta.data()[i];
        }
    }

    let (batch_mean, batch_var) = if train { (mean, var) } else { (Vec::new(), Vec::new()) };
    Ok((
        out,
        BatchNormCache {
            normalized,
            inv_std,
            train,
            batch_mean,
            batch_var,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<T> {
    pub input: Grid<T>,
    pub gamma: Grid<T>,
    pub beta: Grid<T>,
}

pub fn batch_norm1d_backward<T: Real>(
    upstream: &Grid<T>,
    gamma: &Grid<T>,
    cache: &BatchNormCache<T>,
) -> Result<BatchNormGrads<T>> {
    upstream.expect_shape("batch_norm1d_backward", cache.normalized.shape())?;
    let c = upstream.channels();
    let mut d_gamma = Grid::zeros(Shape::new(1, 1, c));
    let mut d_beta = Grid::zeros(Shape::new(1, 1, c));
    for (dy, xh) in upstream
        .data()
        .chunks_exact(c)
        .zip(cache.normalized.data().chunks_exact(c))
    {
        for i in 0..c {
            d_beta.data_mut()[i] = d_beta.data()[i] + dy[i];
            d_gamma.data_mut()[i] = d_gamma.data()[i] + dy[i] * xh[i];
        }
    }

    let g = gamma.data();
    let mut d_input = upstream.clone();
    if cache.train {
        let m = T::from_usize(upstream.batch() * upstream.len()).unwrap();
        for (dx, xh) in d_input
            .data_mut()
            .chunks_exact_mut(c)
            .zip(cache.normalized.data().chunks_exact(c))
        {
            for i in 0..c {
                let scale = g[i] * cache.inv_std[i] / m;
                dx[i] = scale * (m * dx[i] - d_beta.data()[i] - xh[i] * d_gamma.data()[i]);
            }
        }
    } else {
        for dx in d_input.data_mut().chunks_exact_mut(c) {
            for i in 0..c {
                dx[i] = dx[i] * g[i] * cache.inv_std[i];
            }
        }
    }
    Ok(BatchNormGrads {
        input: d_input,
        gamma: d_gamma,
        beta: d_beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(c: usize, gamma: f64, beta: f64) -> (Grid<f64>, Grid<f64>) {
        (
            Grid::filled(Shape::new(1, 1, c), gamma),
            Grid::filled(Shape::new(1, 1, c), beta),
        )
    }

    #[test]
    fn standardized_batch_is_nearly_unchanged() {
        // per channel: values ±1 → mean 0, biased variance 1
        let x = Grid::from_parts(Shape::new(2, 2, 1), vec![1.0, -1.0, -1.0, 1.0]);
        let (g, b) = params(1, 1.0, 0.0);
        let (y, _) = batch_norm1d(&x, &g, &b, BnMode::Train).unwrap();
        for (a, e) in y.data().iter().zip(x.data()) {
            assert!((a - e).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_gamma_outputs_beta() {
        let x = Grid::from_parts(Shape::new(2, 3, 2), (0..12).map(|v| v as f64 * 1.7).collect());
        let (g, b) = params(2, 0.0, 0.75);
        let (y, _) = batch_norm1d(&x, &g, &b, BnMode::Train).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn single_sample_batch_rejected_in_training() {
        let x = Grid::from_parts(Shape::new(1, 4, 1), vec![1.0, 2.0, 3.0, 4.0]);
        let (g, b) = params(1, 1.0, 0.0);
        assert!(batch_norm1d(&x, &g, &b, BnMode::Train).is_err());
        let (mean, var) = ([0.0], [1.0]);
        assert!(batch_norm1d(&x, &g, &b, BnMode::Eval { mean: &mean, var: &var }).is_ok());
    }

    #[test]
    fn running_stats_use_momentum() {
        let x = Grid::from_parts(Shape::new(2, 1, 1), vec![2.0, 4.0]);
        let (g, b) = params(1, 1.0, 0.0);
        let (_, cache) = batch_norm1d(&x, &g, &b, BnMode::Train).unwrap();
        let (mut mean, mut var) = ([0.0], [1.0]);
        cache.update_running(&mut mean, &mut var, 0.9);
        assert!((mean[0] - 0.3).abs() < 1e-12);
        assert!((var[0] - 1.0).abs() < 1e-12); // 0.9·1 + 0.1·1
    }
}

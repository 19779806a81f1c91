use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Grid, Mode, Real, Shape};
use crate::error::{Error, Result};

/// Inverted-dropout mask: each entry is 0 with probability `p`, else `1/(1−p)`.
pub fn dropout_mask<T: Real>(shape: Shape, p: f64, seed: u64) -> Result<Vec<T>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("dropout probability {p} must be in [0, 1)")));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - p));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..shape.numel())
        .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
        .collect())
}

/// Returns the output and the mask that produced it (`None` when the op is the identity).
pub fn dropout<T: Real>(input: &Grid<T>, p: f64, seed: u64, mode: Mode) -> Result<(Grid<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("dropout probability {p} must be in [0, 1)")));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok((input.clone(), None));
    }
    let mask = dropout_mask::<T>(input.shape(), p, seed)?;
    let data = input.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
    Ok((Grid::from_parts(input.shape(), data), Some(mask)))
}

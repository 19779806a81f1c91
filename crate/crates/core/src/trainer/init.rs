use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::ndsignal::{Grid, Real, Shape};

/// He (Kaiming) normal initialisation: `N(0, 2 / fan_in)`.
pub fn he_init<T: Real, R: Rng + ?Sized>(shape: Shape, fan_in: usize, rng: &mut R) -> Result<Grid<T>> {
    if fan_in == 0 {
        return Err(Error::InvalidArgument("he_init: fan_in must be at least 1".into()));
    }
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive standard deviation");
    let data = (0..shape.numel())
        .map(|_| T::from_f64_lossy(normal.sample(rng)))
        .collect();
    Ok(Grid::from_parts(shape, data))
}

use crate::error::{Error, Result};
use crate::ndsignal::{Grid, Real};
use crate::network::ParamStore;

/// Heavy-ball update on flat slices: `v ← μ·v + g; p ← p − lr·v`.
pub fn sgd_momentum_step<T: Real>(params: &mut [T], grads: &[T], velocity: &mut [T], lr: T, momentum: T) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::shape(
            "sgd_momentum_step",
            format!("{} gradients and velocities", params.len()),
            format!("{} gradients, {} velocities", grads.len(), velocity.len()),
        ));
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite { op: "sgd_momentum_step", index });
    }
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p = *p - lr * *v;
    }
    Ok(())
}

/// Momentum SGD over a whole [`ParamStore`], one velocity buffer per parameter.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub momentum: T,
    velocity: Vec<Option<Grid<T>>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(momentum: T) -> Self {
        Sgd {
            momentum,
            velocity: Vec::new(),
        }
    }

    /// Applies `grads` (indexed like the store). Every gradient is checked for
    /// NaN/Inf before any parameter moves.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Option<Grid<T>>], lr: T) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::shape("Sgd::step", store.len(), grads.len()));
        }
        for (p, g) in store.iter().zip(grads) {
            if let Some(g) = g {
                if !g.all_finite() {
                    return Err(Error::NonFiniteGradient { param: p.name.clone() });
                }
            }
        }
        self.velocity.resize(store.len(), None);
        for ((p, g), v) in store.iter_mut().zip(grads).zip(self.velocity.iter_mut()) {
            let Some(g) = g else { continue };
            if !p.trainable {
                continue;
            }
            let v = v.get_or_insert_with(|| Grid::zeros(g.shape()));
            sgd_momentum_step(p.value.data_mut(), g.data(), v.data_mut(), lr, self.momentum)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_sgd_step() {
        let (mut p, mut v) = ([0.0f64], [0.0]);
        sgd_momentum_step(&mut p, &[1.0], &mut v, 0.1, 0.0).unwrap();
        assert_eq!(p, [-0.1]);
    }

    #[test]
    fn two_momentum_steps_unroll() {
        let (mut p, mut v) = ([0.0f64], [0.0]);
        for _ in 0..2 {
            sgd_momentum_step(&mut p, &[1.0], &mut v, 1.0, 0.9).unwrap();
        }
        // v1 = 1, v2 = 0.9 + 1
        assert!((p[0] - -(1.0 + 1.9)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_decays_velocity() {
        let (mut p, mut v) = ([0.0f64], [1.0]);
        for k in 1..=5 {
            sgd_momentum_step(&mut p, &[0.0], &mut v, 0.0, 0.9).unwrap();
            assert!((v[0] - 0.9f64.powi(k)).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let (mut p, mut v) = ([1.0f64, 2.0], [0.0, 0.0]);
        let err = sgd_momentum_step(&mut p, &[0.5, f64::NAN], &mut v, 0.1, 0.9).unwrap_err();
        assert!(err.is_numeric());
        assert_eq!(p, [1.0, 2.0]);
    }
}

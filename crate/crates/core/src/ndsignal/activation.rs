use serde::{Deserialize, Serialize};

use super::{Grid, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
}

pub fn relu<T: Real>(x: &Grid<T>) -> Grid<T> {
    x.map(|v| v.max(T::zero()))
}

/// Subgradient at zero is taken as 0.
pub fn relu_backward<T: Real>(upstream: &Grid<T>, input: &Grid<T>) -> Grid<T> {
    let data = upstream
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Grid::from_parts(input.shape(), data)
}

#[inline]
fn logistic<T: Real>(v: T) -> T {
    // Split by sign so exp never overflows.
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Real>(x: &Grid<T>) -> Grid<T> {
    x.map(logistic)
}

/// Takes the forward *output* `s`, using σ' = s(1 − s).
pub fn sigmoid_backward<T: Real>(upstream: &Grid<T>, output: &Grid<T>) -> Grid<T> {
    let data = upstream
        .data()
        .iter()
        .zip(output.data())
        .map(|(&g, &s)| g * s * (T::one() - s))
        .collect();
    Grid::from_parts(output.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_negatives_and_zero_has_zero_slope() {
        let x = Grid::signal(&[-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&Grid::filled(x.shape(), 1.0), &x);
        assert_eq!(g.data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn sigmoid_at_zero() {
        let x = Grid::signal(&[0.0f64]).unwrap();
        let s = sigmoid(&x);
        assert_eq!(s.data(), &[0.5]);
        assert_eq!(sigmoid_backward(&Grid::filled(x.shape(), 1.0), &s).data(), &[0.25]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        let s = sigmoid(&Grid::signal(&[-1000.0f64, 1000.0]).unwrap());
        assert_eq!(s.data(), &[0.0, 1.0]);
    }
}

use super::{Grid, Real, Shape};
use crate::error::{Error, Result};

/// Affine map `y = W x + b` applied to each batch member.
///
/// `input` is `(N, 1, in)`, `weights` is `(1, out, in)` and `bias` is `(1, 1, out)`.
pub fn fully_connected<T: Real>(input: &Grid<T>, weights: &Grid<T>, bias: &Grid<T>) -> Result<Grid<T>> {
    let (n, d_in) = check("fully_connected", input, weights)?;
    let d_out = weights.len();
    bias.expect_shape("fully_connected", Shape::new(1, 1, d_out))?;

    let mut out = Grid::zeros(Shape::new(n, 1, d_out));
    for row in out.data_mut().chunks_exact_mut(d_out) {
        row.copy_from_slice(bias.data());
    }
    T::gemm(n, d_in, d_out, input.data(), (d_in, 1), weights.data(), (1, d_in), T::one(), out.data_mut());
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LinearGrads<T> {
    pub input: Grid<T>,
    pub weights: Grid<T>,
    pub bias: Grid<T>,
}

pub fn fully_connected_backward<T: Real>(
    upstream: &Grid<T>,
    input: &Grid<T>,
    weights: &Grid<T>,
) -> Result<LinearGrads<T>> {
    let (n, d_in) = check("fully_connected_backward", input, weights)?;
    let d_out = weights.len();
    upstream.expect_shape("fully_connected_backward", Shape::new(n, 1, d_out))?;

    let mut d_input = Grid::zeros(input.shape());
    T::gemm(n, d_out, d_in, upstream.data(), (d_out, 1), weights.data(), (d_in, 1), T::zero(), d_input.data_mut());

    let mut d_weights = Grid::zeros(weights.shape());
    T::gemm(d_out, n, d_in, upstream.data(), (1, d_out), input.data(), (d_in, 1), T::zero(), d_weights.data_mut());

    let mut d_bias = Grid::zeros(Shape::new(1, 1, d_out));
    for row in upstream.data().chunks_exact(d_out) {
        for (g, &v) in d_bias.data_mut().iter_mut().zip(row) {
            *g = *g + v;
        }
    }
    Ok(LinearGrads {
        input: d_input,
        weights: d_weights,
        bias: d_bias,
    })
}

fn check<T: Real>(op: &'static str, input: &Grid<T>, weights: &Grid<T>) -> Result<(usize, usize)> {
    if input.len() != 1 {
        return Err(Error::shape(op, "flat input (length 1)", input.shape()));
    }
    if weights.batch() != 1 || weights.channels() != input.channels() {
        return Err(Error::shape(
            op,
            format!("weights with inner dimension {}", input.channels()),
            format!("weights {}", weights.shape()),
        ));
    }
    Ok((input.batch(), input.channels()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(v: &[f64]) -> Grid<f64> {
        Grid::from_parts(Shape::new(1, 1, v.len()), v.to_vec())
    }

    #[test]
    fn hand_sum() {
        let w = Grid::from_parts(Shape::new(1, 1, 2), vec![1.0, 1.0]);
        let y = fully_connected(&flat(&[2.0, 3.0]), &w, &flat(&[0.0])).unwrap();
        assert_eq!(y.data(), &[5.0]);
    }

    #[test]
    fn identity_weights() {
        let w = Grid::from_parts(Shape::new(1, 3, 3), vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let x = flat(&[0.3, -4.0, 9.0]);
        assert_eq!(fully_connected(&x, &w, &flat(&[0.0; 3])).unwrap().data(), x.data());
    }

    #[test]
    fn inner_dimension_mismatch() {
        let w = Grid::<f64>::zeros(Shape::new(1, 2, 3));
        assert!(fully_connected(&flat(&[1.0, 2.0]), &w, &flat(&[0.0, 0.0])).is_err());
    }
}

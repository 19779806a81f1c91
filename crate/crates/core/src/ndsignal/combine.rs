//! Shape-level combinators: residual sums, channel concatenation and gating.

use super::{Grid, Real, Shape};
use crate::error::{Error, Result};

pub fn add<T: Real>(a: &Grid<T>, b: &Grid<T>) -> Result<Grid<T>> {
    b.expect_shape("add", a.shape())?;
    let mut out = a.clone();
    out.add_assign(b);
    Ok(out)
}

/// Concatenates along the channel axis, `a`'s channels first.
pub fn concat_channels<T: Real>(a: &Grid<T>, b: &Grid<T>) -> Result<Grid<T>> {
    if a.batch() != b.batch() || a.len() != b.len() {
        return Err(Error::shape(
            "concat_channels",
            format!("batch {} length {}", a.batch(), a.len()),
            format!("batch {} length {}", b.batch(), b.len()),
        ));
    }
    let (ca, cb) = (a.channels(), b.channels());
    let mut data = Vec::with_capacity(a.numel() + b.numel());
    for (ra, rb) in a.data().chunks_exact(ca).zip(b.data().chunks_exact(cb)) {
        data.extend_from_slice(ra);
        data.extend_from_slice(rb);
    }
    Ok(Grid::from_parts(Shape::new(a.batch(), a.len(), ca + cb), data))
}

/// Splits a concatenated gradient back into its `(a, b)` parts.
pub fn concat_channels_backward<T: Real>(upstream: &Grid<T>, a_channels: usize) -> (Grid<T>, Grid<T>) {
    let s = upstream.shape();
    let cb = s.channels - a_channels;
    let rows = s.batch * s.len;
    let mut da = Vec::with_capacity(rows * a_channels);
    let mut db = Vec::with_capacity(rows * cb);
    for row in upstream.data().chunks_exact(s.channels) {
        da.extend_from_slice(&row[..a_channels]);
        db.extend_from_slice(&row[a_channels..]);
    }
    (
        Grid::from_parts(Shape::new(s.batch, s.len, a_channels), da),
        Grid::from_parts(Shape::new(s.batch, s.len, cb), db),
    )
}

/// `out[n, l, c] = feature[n, l, c] · weights[n, 0, c]`.
pub fn scale_channels<T: Real>(feature: &Grid<T>, weights: &Grid<T>) -> Result<Grid<T>> {
    weights.expect_shape("scale_channels", Shape::new(feature.batch(), 1, feature.channels()))?;
    let c = feature.channels();
    let mut out = feature.clone();
    for b in 0..feature.batch() {
        let w = weights.sample(b);
        for row in out.sample_mut(b).chunks_exact_mut(c) {
            for (v, &s) in row.iter_mut().zip(w) {
                *v = *v * s;
            }
        }
    }
    Ok(out)
}

/// Returns `(d_feature, d_weights)`.
pub fn scale_channels_backward<T: Real>(
    upstream: &Grid<T>,
    feature: &Grid<T>,
    weights: &Grid<T>,
) -> (Grid<T>, Grid<T>) {
    let c = feature.channels();
    let mut d_feature = Grid::zeros(feature.shape());
    let mut d_weights = Grid::zeros(weights.shape());
    for b in 0..feature.batch() {
        let w = weights.sample(b);
        let dw = &mut d_weights.sample_mut(b)[..];
        for ((up, x), dx) in upstream
            .sample(b)
            .chunks_exact(c)
            .zip(feature.sample(b).chunks_exact(c))
            .zip(d_feature.sample_mut(b).chunks_exact_mut(c))
        {
            for i in 0..c {
                dx[i] = up[i] * w[i];
                dw[i] = dw[i] + up[i] * x[i];
            }
        }
    }
    (d_feature, d_weights)
}

/// `(N, L, C)` → `(N, 1, L·C)`, position-major.
pub fn flatten<T: Real>(x: Grid<T>) -> Grid<T> {
    let s = x.shape();
    x.reshape(Shape::new(s.batch, 1, s.len * s.channels))
        .expect("flatten preserves element count")
}

pub fn unflatten<T: Real>(x: Grid<T>, shape: Shape) -> Result<Grid<T>> {
    x.reshape(shape)
}

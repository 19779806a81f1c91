use super::{Grid, Real, Shape};
use crate::error::{Error, Result};

#[inline]
fn bin(b: usize, len: usize, target: usize) -> (usize, usize) {
    (b * len / target, (b + 1) * len / target)
}

/// Averages each channel over `target` bins; bin `b` covers
/// `[floor(b·L/T), floor((b+1)·L/T))`.
pub fn adaptive_avg_pool<T: Real>(input: &Grid<T>, target: usize) -> Result<Grid<T>> {
    let (len, c) = (input.len(), input.channels());
    if target == 0 || target > len {
        return Err(Error::InvalidArgument(format!(
            "adaptive_avg_pool: target length {target} must be in 1..={len}"
        )));
    }
    let mut out = Grid::zeros(Shape::new(input.batch(), target, c));
    for b in 0..input.batch() {
        let x = input.sample(b);
        let y = out.sample_mut(b);
        for t in 0..target {
            let (lo, hi) = bin(t, len, target);
            let acc = &mut y[t * c..(t + 1) * c];
            for row in x[lo * c..hi * c].chunks_exact(c) {
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a = *a + v;
                }
            }
            let scale = T::one() / T::from_usize(hi - lo).unwrap();
            acc.iter_mut().for_each(|a| *a = *a * scale);
        }
    }
    Ok(out)
}

pub fn adaptive_avg_pool_backward<T: Real>(upstream: &Grid<T>, input_shape: Shape) -> Grid<T> {
    let (len, c, target) = (input_shape.len, input_shape.channels, upstream.len());
    let mut d = Grid::zeros(input_shape);
    for b in 0..input_shape.batch {
        let g = upstream.sample(b);
        let dx = d.sample_mut(b);
        for t in 0..target {
            let (lo, hi) = bin(t, len, target);
            let scale = T::one() / T::from_usize(hi - lo).unwrap();
            let src = &g[t * c..(t + 1) * c];
            for row in dx[lo * c..hi * c].chunks_exact_mut(c) {
                for (d, &v) in row.iter_mut().zip(src) {
                    *d = v * scale;
                }
            }
        }
    }
    d
}

/// Nearest-neighbour ×2: every position is repeated once.
pub fn upsample2x<T: Real>(input: &Grid<T>) -> Grid<T> {
    let s = input.shape();
    let c = s.channels;
    let mut data = Vec::with_capacity(2 * input.numel());
    for row in input.data().chunks_exact(c) {
        data.extend_from_slice(row);
        data.extend_from_slice(row);
    }
    Grid::from_parts(Shape::new(s.batch, 2 * s.len, c), data)
}

pub fn upsample2x_backward<T: Real>(upstream: &Grid<T>) -> Grid<T> {
    let s = upstream.shape();
    let c = s.channels;
    let mut data = Vec::with_capacity(upstream.numel() / 2);
    for pair in upstream.data().chunks_exact(2 * c) {
        data.extend(pair[..c].iter().zip(&pair[c..]).map(|(&a, &b)| a + b));
    }
    Grid::from_parts(Shape::new(s.batch, s.len / 2, c), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_bins() {
        let x = Grid::signal(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(adaptive_avg_pool(&x, 3).unwrap().data(), &[1.5, 3.5, 5.5]);
    }

    #[test]
    fn full_target_is_identity_and_constants_stay_constant() {
        let x = Grid::signal(&[4.0, -1.0, 2.5]).unwrap();
        assert_eq!(adaptive_avg_pool(&x, 3).unwrap(), x);
        let c = Grid::filled(Shape::new(2, 7, 3), 1.25f64);
        assert!(adaptive_avg_pool(&c, 3).unwrap().data().iter().all(|&v| v == 1.25));
    }

    #[test]
    fn target_longer_than_input_is_rejected() {
        assert!(adaptive_avg_pool(&Grid::signal(&[1.0f64, 2.0]).unwrap(), 3).is_err());
    }

    #[test]
    fn uneven_bins_follow_floor_rule() {
        // L = 5, T = 2 → bins [0, 2) and [2, 5)
        let x = Grid::signal(&[1.0, 3.0, 3.0, 6.0, 9.0]).unwrap();
        assert_eq!(adaptive_avg_pool(&x, 2).unwrap().data(), &[2.0, 6.0]);
    }

    #[test]
    fn upsample_repeats_and_pool_inverts() {
        let x = Grid::signal(&[1.0, 2.0]).unwrap();
        let up = upsample2x(&x);
        assert_eq!(up.data(), &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(adaptive_avg_pool(&up, 2).unwrap(), x);
        assert_eq!(upsample2x_backward(&up).data(), &[2.0, 4.0]);
    }

    #[test]
    fn upsample_chain_matches_pyramid_lengths() {
        let x = Grid::<f32>::zeros(Shape::new(1, 192, 2));
        let p2 = upsample2x(&x);
        let p3 = upsample2x(&p2);
        assert_eq!((p2.len(), p3.len()), (384, 768));
    }
}

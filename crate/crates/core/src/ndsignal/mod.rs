//! Differentiable numeric core for 1D signals.
//!
//! Every operation comes as a pure forward function plus an explicit backward
//! function returning gradients for its inputs. [`Tape`] strings them together
//! into a reverse-mode graph so the network can be written once and trained.
//!
//! Activations are laid out as `(batch, length, channels)` row-major grids.
//! Convolution weights reuse the same container as `(kernel, in, out)` and
//! fully-connected weights as `(1, out, in)`.

mod activation;
mod combine;
mod conv;
mod dropout;
mod grid;
mod linear;
mod loss;
mod norm;
mod pool;
mod tape;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, Activation};
pub use combine::{
    add, concat_channels, concat_channels_backward, flatten, scale_channels,
    scale_channels_backward, unflatten,
};
pub use conv::{conv1d, conv1d_backward, ConvGrads, ConvSpec};
pub use dropout::{dropout, dropout_mask};
pub use grid::{Grid, Shape};
pub use linear::{fully_connected, fully_connected_backward, LinearGrads};
pub use loss::{softmax, softmax_xent, SoftmaxXent};
pub use norm::{batch_norm1d, batch_norm1d_backward, BatchNormCache, BatchNormGrads, BnMode, BN_EPS};
pub use pool::{adaptive_avg_pool, adaptive_avg_pool_backward, upsample2x, upsample2x_backward};
pub use tape::{Tape, Var};

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Scalar type of every grid: `f32` for training, `f64` for gradient checks.
pub trait Real:
    Float + FromPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    const DTYPE: &'static str;

    /// `c = a·b + beta·c` where `c` is row-major `m×n` and `a`/`b` are strided views.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        beta: Self,
        c: &mut [Self],
    );

    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 conversion")
    }
}

fn check_view(len: usize, rows: usize, cols: usize, (rs, cs): (usize, usize)) {
    if rows > 0 && cols > 0 {
        let last = (rows - 1) * rs + (cols - 1) * cs;
        assert!(last < len, "gemm view out of bounds: {last} >= {len}");
    }
}

macro_rules! impl_real {
    ($t:ty, $name:literal, $kernel:path) => {
        impl Real for $t {
            const DTYPE: &'static str = $name;

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_strides: (usize, usize),
                b: &[Self],
                b_strides: (usize, usize),
                beta: Self,
                c: &mut [Self],
            ) {
                check_view(a.len(), m, k, a_strides);
                check_view(b.len(), k, n, b_strides);
                assert!(c.len() >= m * n, "gemm output too small");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every view was bounds-checked above against its slice.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        a_strides.0 as isize,
                        a_strides.1 as isize,
                        b.as_ptr(),
                        b_strides.0 as isize,
                        b_strides.1 as isize,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, "f32", matrixmultiply::sgemm);
impl_real!(f64, "f64", matrixmultiply::dgemm);

/// Training or inference behaviour of dropout and batch normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

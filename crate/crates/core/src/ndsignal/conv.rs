use serde::{Deserialize, Serialize};

use super::{Grid, Real, Shape};
use crate::error::{Error, Result};

/// Geometry of a same-padded 1D cross-correlation.
///
/// Output length is `ceil(L / stride)`. The total zero padding is split with
/// the smaller half on the left, so an even kernel puts its extra tap on the
/// right of the output index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel_length: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub fn new(kernel_length: usize, in_channels: usize, out_channels: usize, stride: usize) -> Result<Self> {
        if kernel_length == 0 || in_channels == 0 || out_channels == 0 || stride == 0 {
            return Err(Error::InvalidArgument(format!(
                "conv spec fields must be positive: kernel {kernel_length}, in {in_channels}, out {out_channels}, stride {stride}"
            )));
        }
        Ok(ConvSpec {
            kernel_length,
            in_channels,
            out_channels,
            stride,
        })
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        input_len.div_ceil(self.stride)
    }

    /// `(left, right)` zero padding for an input of length `input_len`.
    pub fn padding(&self, input_len: usize) -> (usize, usize) {
        let out = self.output_len(input_len);
        let total = ((out - 1) * self.stride + self.kernel_length).saturating_sub(input_len);
        (total / 2, total - total / 2)
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.kernel_length, self.in_channels, self.out_channels)
    }

    pub fn bias_shape(&self) -> Shape {
        Shape::new(1, 1, self.out_channels)
    }

    pub fn param_count(&self) -> usize {
        self.kernel_length * self.in_channels * self.out_channels + self.out_channels
    }
}

/// Copies one sample into a zero-padded buffer so that row `o` of the
/// implicit im2col matrix starts at `o * stride * cin`.
fn padded<T: Real>(x: &[T], len: usize, cin: usize, pad: (usize, usize)) -> Vec<T> {
    let mut buf = vec![T::zero(); (pad.0 + len + pad.1) * cin];
    buf[pad.0 * cin..(pad.0 + len) * cin].copy_from_slice(x);
    buf
}

fn check_inputs<T: Real>(op: &'static str, input: &Grid<T>, weights: &Grid<T>, spec: &ConvSpec) -> Result<()> {
    if input.channels() != spec.in_channels {
        return Err(Error::shape(
            op,
            format!("{} input channels", spec.in_channels),
            format!("{} input channels", input.channels()),
        ));
    }
    weights.expect_shape(op, spec.weight_shape())
}

pub fn conv1d<T: Real>(input: &Grid<T>, weights: &Grid<T>, bias: &Grid<T>, spec: &ConvSpec) -> Result<Grid<T>> {
    check_inputs("conv1d", input, weights, spec)?;
    bias.expect_shape("conv1d", spec.bias_shape())?;

    let (batch, len, cin, cout) = (input.batch(), input.len(), spec.in_channels, spec.out_channels);
    let l_out = spec.output_len(len);
    let pad = spec.padding(len);
    let kk = spec.kernel_length * cin;
    let mut out = Grid::zeros(Shape::new(batch, l_out, cout));

    for b in 0..batch {
        let xp = padded(input.sample(b), len, cin, pad);
        let y = out.sample_mut(b);
        for row in y.chunks_exact_mut(cout) {
            row.copy_from_slice(bias.data());
        }
        T::gemm(
            l_out,
            kk,
            cout,
            &xp,
            (spec.stride * cin, 1),
            weights.data(),
            (cout, 1),
            T::one(),
            y,
        );
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Grid<T>,
    pub weights: Grid<T>,
    pub bias: Grid<T>,
}

pub fn conv1d_backward<T: Real>(
    upstream: &Grid<T>,
    input: &Grid<T>,
    weights: &Grid<T>,
    spec: &ConvSpec,
) -> Result<ConvGrads<T>> {
    check_inputs("conv1d_backward", input, weights, spec)?;
    let (batch, len, cin, cout) = (input.batch(), input.len(), spec.in_channels, spec.out_channels);
    let l_out = spec.output_len(len);
    upstream.expect_shape("conv1d_backward", Shape::new(batch, l_out, cout))?;

    let pad = spec.padding(len);
    let kk = spec.kernel_length * cin;
    let row_step = spec.stride * cin;

    let mut d_input = Grid::zeros(input.shape());
    let mut d_weights = Grid::zeros(weights.shape());
    let mut d_bias = Grid::zeros(spec.bias_shape());
    let mut dcol = vec![T::zero(); l_out * kk];

    for b in 0..batch {
        let dy = upstream.sample(b);
        for row in dy.chunks_exact(cout) {
            for (g, &v) in d_bias.data_mut().iter_mut().zip(row) {
                *g = *g + v;
            }
        }

        // dW += colᵀ · dY
        let xp = padded(input.sample(b), len, cin, pad);
        T::gemm(kk, l_out, cout, &xp, (1, row_step), dy, (cout, 1), T::one(), d_weights.data_mut());

        // dcol = dY · Wᵀ, then scatter back onto the padded input positions.
        T::gemm(l_out, cout, kk, dy, (cout, 1), weights.data(), (1, cout), T::zero(), &mut dcol);
        let mut dxp = vec![T::zero(); (pad.0 + len + pad.1) * cin];
        for (o, row) in dcol.chunks_exact(kk).enumerate() {
            let dst = &mut dxp[o * row_step..o * row_step + kk];
            for (d, &g) in dst.iter_mut().zip(row) {
                *d = *d + g;
            }
        }
        d_input
            .sample_mut(b)
            .copy_from_slice(&dxp[pad.0 * cin..(pad.0 + len) * cin]);
    }

    Ok(ConvGrads {
        input: d_input,
        weights: d_weights,
        bias: d_bias,
    })
}

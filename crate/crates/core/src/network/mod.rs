//! Residual backbone, multi-scale fusion pyramid with channel gating, and the
//! 5-way classifier head.

mod checkpoint;
mod config;
mod layers;
mod model;
mod params;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Manifest, TensorEntry};
pub use config::{AcfConfig, BackboneConfig, HeadConfig, ModelConfig, PyramidConfig};
pub use layers::{derive_seed, Acf, BnLayer, ConvLayer, Head, LinearLayer, ResidualBlock, Stem};
pub use model::{BackboneOutput, BnUpdate, ForwardPass, LayerSummary, Model, ModelSummary, Prediction};
pub use params::{Param, ParamId, ParamStore};

use crate::error::{Error, Result};
use crate::ndsignal::{concat_channels, upsample2x, Grid, Real};

/// Fuses gated taps (shallow to deep) deepest first:
/// `P ← concat(upsample2x(P), W)`. Adjacent taps must be in a 2:1 length ratio.
pub fn pyramid_fuse<T: Real>(gated: &[Grid<T>]) -> Result<Grid<T>> {
    let (deepest, rest) = gated
        .split_last()
        .ok_or_else(|| Error::InvalidArgument("pyramid_fuse: no taps".into()))?;
    let mut p = deepest.clone();
    for w in rest.iter().rev() {
        if w.len() != 2 * p.len() {
            return Err(Error::InvalidArgument(format!(
                "pyramid_fuse: length-ratio violation, {} is not twice {}",
                w.len(),
                p.len()
            )));
        }
        p = concat_channels(&upsample2x(&p), w)?;
    }
    Ok(p)
}

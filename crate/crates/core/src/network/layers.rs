//! Layer building blocks. Layers hold only parameter ids; values live in a
//! [`ParamStore`] so the same layout can back `f32` and `f64` models.

use rand::Rng;

use super::params::{ParamId, ParamStore};
use crate::error::Result;
use crate::ndsignal::{BnMode, ConvSpec, Grid, Mode, Real, Shape, Tape, Var};
use crate::trainer::he_init;

/// Records one forward pass, creating each parameter leaf at most once.
pub(crate) struct Recorder<'p, T: Real> {
    pub tape: Tape<'p, T>,
    pub params: &'p ParamStore<T>,
    pub vars: Vec<Option<Var>>,
    pub mode: Mode,
    seed: u64,
    dropout_calls: u64,
    pub bn_nodes: Vec<(BnLayer, Var)>,
}

impl<'p, T: Real> Recorder<'p, T> {
    pub fn new(params: &'p ParamStore<T>, mode: Mode, seed: u64) -> Self {
        Recorder {
            tape: Tape::new(),
            params,
            vars: vec![None; params.len()],
            mode,
            seed,
            dropout_calls: 0,
            bn_nodes: Vec::new(),
        }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.vars[id.0] {
            return v;
        }
        let v = self.tape.leaf_ref(&self.params.get(id).value);
        self.vars[id.0] = Some(v);
        v
    }

    fn next_dropout_seed(&mut self) -> u64 {
        self.dropout_calls += 1;
        derive_seed(self.seed, self.dropout_calls)
    }
}

/// SplitMix64 finaliser over `base ⊕ stream·φ`; decorrelates per-call RNG streams.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) struct Builder<'a, T: Real, R: Rng> {
    pub store: ParamStore<T>,
    pub rng: &'a mut R,
}

impl<T: Real, R: Rng> Builder<'_, T, R> {
    pub fn conv(&mut self, name: &str, spec: ConvSpec) -> Result<ConvLayer> {
        let fan_in = spec.kernel_length * spec.in_channels;
        let w = he_init(spec.weight_shape(), fan_in, self.rng)?;
        Ok(ConvLayer {
            spec,
            weight: self.store.add(format!("{name}.weight"), w, true),
            bias: self.store.add(format!("{name}.bias"), Grid::zeros(spec.bias_shape()), true),
        })
    }

    pub fn batch_norm(&mut self, name: &str, channels: usize) -> BnLayer {
        let s = Shape::new(1, 1, channels);
        BnLayer {
            gamma: self.store.add(format!("{name}.gamma"), Grid::filled(s, T::one()), true),
            beta: self.store.add(format!("{name}.beta"), Grid::zeros(s), true),
            running_mean: self.store.add(format!("{name}.running_mean"), Grid::zeros(s), false),
            running_var: self.store.add(format!("{name}.running_var"), Grid::filled(s, T::one()), false),
        }
    }

    pub fn linear(&mut self, name: &str, d_in: usize, d_out: usize) -> Result<LinearLayer> {
        let w = he_init(Shape::new(1, d_out, d_in), d_in, self.rng)?;
        Ok(LinearLayer {
            d_in,
            d_out,
            weight: self.store.add(format!("{name}.weight"), w, true),
            bias: self.store.add(format!("{name}.bias"), Grid::zeros(Shape::new(1, 1, d_out)), true),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub spec: ConvSpec,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl ConvLayer {
    pub(crate) fn forward<T: Real>(&self, rec: &mut Recorder<'_, T>, x: Var) -> Result<Var> {
        let (w, b) = (rec.param(self.weight), rec.param(self.bias));
        rec.tape.conv1d(x, w, b, self.spec)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BnLayer {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BnLayer {
    pub(crate) fn forward<T: Real>(&self, rec: &mut Recorder<'_, T>, x: Var) -> Result<Var> {
        let (g, b) = (rec.param(self.gamma), rec.param(self.beta));
        let params = rec.params;
        let mode = match rec.mode {
            Mode::Train => BnMode::Train,
            Mode::Eval => BnMode::Eval {
                mean: params.get(self.running_mean).value.data(),
                var: params.get(self.running_var).value.data(),
            },
        };
        let y = rec.tape.batch_norm(x, g, b, mode)?;
        if rec.mode == Mode::Train {
            rec.bn_nodes.push((*self, y));
        }
        Ok(y)
    }
}

#[derive(Debug, Clone)]
pub struct LinearLayer {
    pub d_in: usize,
    pub d_out: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl LinearLayer {
    pub(crate) fn forward<T: Real>(&self, rec: &mut Recorder<'_, T>, x: Var) -> Result<Var> {
        let (w, b) = (rec.param(self.weight), rec.param(self.bias));
        rec.tape.fully_connected(x, w, b)
    }
}

fn conv_bn<T: Real>(rec: &mut Recorder<'_, T>, conv: &ConvLayer, bn: &Option<BnLayer>, x: Var) -> Result<Var> {
    let h = conv.forward(rec, x)?;
    match bn {
        Some(bn) => bn.forward(rec, h),
        None => Ok(h),
    }
}

/// Conv → BN → ReLU, the entry layer of the backbone.
#[derive(Debug, Clone)]
pub struct Stem {
    pub conv: ConvLayer,
    pub bn: Option<BnLayer>,
}

impl Stem {
    pub(crate) fn forward<T: Real>(&self, rec: &mut Recorder<'_, T>, x: Var) -> Result<Var> {
        let h = conv_bn(rec, &self.conv, &self.bn, x)?;
        Ok(rec.tape.relu(h))
    }
}

/// `Conv → BN → ReLU → Dropout → Conv → BN` plus a shortcut.
///
/// Subsampling blocks stride the first convolution by 2; their shortcut
/// average-pools by 2 and, when the channel count changes, projects with a
/// 1×1 convolution.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub conv1: ConvLayer,
    pub bn1: Option<BnLayer>,
    pub conv2: ConvLayer,
    pub bn2: Option<BnLayer>,
    pub shortcut: Option<ConvLayer>,
    pub subsample: bool,
    pub dropout_p: f64,
}

impl ResidualBlock {
    pub(crate) fn forward<T: Real>(&self, rec: &mut Recorder<'_, T>, x: Var) -> Result<Var> {
        let h = conv_bn(rec, &self.conv1, &self.bn1, x)?;
        let h = rec.tape.relu(h);
        let seed = rec.next_dropout_seed();
        let h = rec.tape.dropout(h, self.dropout_p, seed, rec.mode)?;
        let main = conv_bn(rec, &self.conv2, &self.bn2, h)?;

        let skip = self.shortcut(rec, x)?;
        rec.tape.add(main, skip)
    }

    pub(crate) fn shortcut<T: Real>(&self, rec: &mut Recorder<'_, T>, x: Var) -> Result<Var> {
        let mut s = x;
        if self.subsample {
            let half = rec.tape.value(s).len().div_ceil(2);
            s = rec.tape.adaptive_avg_pool(s, half)?;
        }
        if let Some(proj) = &self.shortcut {
            s = proj.forward(rec, s)?;
        }
        Ok(s)
    }
}

/// Adaptive Channel Fusion: per-channel sigmoid gates computed by
/// conv → global average pool → FC/ReLU → FC/Sigmoid, multiplied onto the input.
#[derive(Debug, Clone)]
pub struct Acf {
    pub conv: ConvLayer,
    pub fc1: LinearLayer,
    pub fc2: LinearLayer,
}

impl Acf {
    /// The `(N, 1, C)` gate values.
    pub(crate) fn gates<T: Real>(&self, rec: &mut Recorder<'_, T>, feature: Var) -> Result<Var> {
        let h = self.conv.forward(rec, feature)?;
        let pooled = rec.tape.adaptive_avg_pool(h, 1)?;
        let h = self.fc1.forward(rec, pooled)?;
        let h = rec.tape.relu(h);
        let h = self.fc2.forward(rec, h)?;
        Ok(rec.tape.sigmoid(h))
    }

    pub(crate) fn forward<T: Real>(&self, rec: &mut Recorder<'_, T>, feature: Var) -> Result<Var> {
        let w = self.gates(rec, feature)?;
        rec.tape.scale_channels(feature, w)
    }
}

/// Deepest tap first: `P ← concat(upsample2x(P), W)` for each shallower tap.
pub(crate) fn fuse<T: Real>(tape: &mut Tape<'_, T>, gated: &[Var]) -> Result<Var> {
    let (&deepest, rest) = gated.split_last().expect("at least one tap");
    let mut p = deepest;
    for &w in rest.iter().rev() {
        let up = tape.upsample2x(p);
        p = tape.concat_channels(up, w)?;
    }
    Ok(p)
}

#[derive(Debug, Clone)]
pub struct Head {
    pub pool_target: usize,
    pub hidden: Vec<LinearLayer>,
    pub out: LinearLayer,
}

impl Head {
    pub(crate) fn forward<T: Real>(&self, rec: &mut Recorder<'_, T>, fused: Var) -> Result<Var> {
        let pooled = rec.tape.adaptive_avg_pool(fused, self.pool_target)?;
        let mut h = rec.tape.flatten(pooled);
        for layer in &self.hidden {
            let z = layer.forward(rec, h)?;
            h = rec.tape.relu(z);
        }
        self.out.forward(rec, h)
    }
}

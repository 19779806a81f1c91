use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ModelConfig;
use super::layers::{fuse, Acf, Builder, Head, Recorder, ResidualBlock, Stem};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::ndsignal::{softmax, BatchNormCache, ConvSpec, Grid, Mode, Real, Shape, Tape, Var};
use crate::stage::argmax;

/// Residual backbone, ACF-gated fusion pyramid and classifier head.
#[derive(Debug, Clone)]
pub struct Model<T: Real> {
    config: ModelConfig,
    store: ParamStore<T>,
    stem: Stem,
    blocks: Vec<ResidualBlock>,
    acfs: Vec<Acf>,
    head: Head,
}

/// One recorded forward pass. Holds the tape so callers can back-propagate.
pub struct ForwardPass<'p, T: Real> {
    pub tape: Tape<'p, T>,
    pub input: Var,
    /// Backbone output after each block, index 0 is block 1.
    pub blocks: Vec<Var>,
    /// Pyramid taps before and after channel gating, shallow to deep.
    pub taps: Vec<Var>,
    pub gated: Vec<Var>,
    pub fused: Var,
    pub logits: Var,
    param_vars: Vec<Option<Var>>,
    bn_nodes: Vec<(super::layers::BnLayer, Var)>,
}

/// Batch statistics from a training pass, to be folded into the running averages.
#[derive(Debug, Clone)]
pub struct BnUpdate<T> {
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
}

impl<T: Real> ForwardPass<'_, T> {
    pub fn param_var(&self, id: ParamId) -> Option<Var> {
        self.param_vars[id.index()]
    }

    /// Gradient of the last backward target for every parameter, indexed by [`ParamId`].
    /// Entries are `None` for parameters that were not used (e.g. running statistics).
    pub fn param_grads(&self) -> Result<Vec<Option<Grid<T>>>> {
        self.param_vars
            .iter()
            .map(|v| match v {
                Some(v) => Ok(Some(self.tape.grad_or_zeros(*v)?)),
                None => Ok(None),
            })
            .collect()
    }

    pub fn bn_updates(&self) -> Vec<BnUpdate<T>> {
        self.bn_nodes
            .iter()
            .filter_map(|(layer, var)| {
                let cache: &BatchNormCache<T> = self.tape.bn_cache(*var)?;
                Some(BnUpdate {
                    running_mean: layer.running_mean,
                    running_var: layer.running_var,
                    batch_mean: cache.batch_mean.clone(),
                    batch_var: cache.batch_var.clone(),
                })
            })
            .collect()
    }

    pub fn probabilities(&self) -> Grid<T> {
        softmax(self.tape.value(self.logits))
    }
}

/// Softmax confidences for one epoch and their argmax stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub probs: Vec<T>,
    pub stage: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerSummary {
    pub name: String,
    pub params: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub layers: Vec<LayerSummary>,
    pub total: usize,
}

impl<T: Real> Model<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder {
            store: ParamStore::default(),
            rng: &mut rng,
        };
        let bb = &config.backbone;
        let k = bb.kernel_length;

        let stem = Stem {
            conv: b.conv("stem.conv", ConvSpec::new(k, 1, bb.base_channels, 1)?)?,
            bn: bb.batch_norm.then(|| b.batch_norm("stem.bn", bb.base_channels)),
        };

        let mut blocks = Vec::with_capacity(bb.num_blocks);
        let mut ch = bb.base_channels;
        for i in 1..=bb.num_blocks {
            let subsample = bb.subsamples(i);
            let out = if subsample { ch * bb.channel_growth } else { ch };
            let name = format!("block{i}");
            let stride = if subsample { 2 } else { 1 };
            let conv1 = b.conv(&format!("{name}.conv1"), ConvSpec::new(k, ch, out, stride)?)?;
            let bn1 = bb.batch_norm.then(|| b.batch_norm(&format!("{name}.bn1"), out));
            let conv2 = b.conv(&format!("{name}.conv2"), ConvSpec::new(k, out, out, 1)?)?;
            let bn2 = bb.batch_norm.then(|| b.batch_norm(&format!("{name}.bn2"), out));
            let shortcut = if out != ch {
                Some(b.conv(&format!("{name}.shortcut"), ConvSpec::new(1, ch, out, 1)?)?)
            } else {
                None
            };
            blocks.push(ResidualBlock {
                conv1,
                bn1,
                conv2,
                bn2,
                shortcut,
                subsample,
                dropout_p: bb.dropout_p,
            });
            ch = out;
        }

        let mut acfs = Vec::new();
        if config.acf.enabled {
            for (j, &(_, c)) in config.tap_shapes().iter().enumerate() {
                let name = format!("acf{}", j + 1);
                let hidden = config.acf.bottleneck(c);
                acfs.push(Acf {
                    conv: b.conv(&format!("{name}.conv"), ConvSpec::new(config.acf.conv_kernel_length, c, c, 1)?)?,
                    fc1: b.linear(&format!("{name}.fc1"), c, hidden)?,
                    fc2: b.linear(&format!("{name}.fc2"), hidden, c)?,
                });
            }
        }

        let (_, fused_ch) = config.fused_shape();
        let mut width = config.head.pool_target * fused_ch;
        let mut hidden = Vec::new();
        for (j, &h) in config.head.hidden_sizes.iter().enumerate() {
            hidden.push(b.linear(&format!("head.fc{j}"), width, h)?);
            width = h;
        }
        let out = b.linear("head.out", width, config.head.num_classes)?;
        let head = Head {
            pool_target: config.head.pool_target,
            hidden,
            out,
        };

        Ok(Model {
            store: b.store,
            config,
            stem,
            blocks,
            acfs,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn blocks(&self) -> &[ResidualBlock] {
        &self.blocks
    }

    pub fn num_trainable(&self) -> usize {
        self.store.trainable_count()
    }

    /// Same architecture and parameter values in another precision.
    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            store: self.store.cast(),
            stem: self.stem.clone(),
            blocks: self.blocks.clone(),
            acfs: self.acfs.clone(),
            head: self.head.clone(),
        }
    }

    /// Checks an `(N, input_length, 1)` batch.
    pub fn check_input(&self, input: &Grid<T>) -> Result<()> {
        let want = self.config.backbone.input_length;
        if input.len() != want || input.channels() != 1 {
            return Err(Error::shape(
                "model input",
                format!("length {want} with 1 channel"),
                format!("length {} with {} channels", input.len(), input.channels()),
            ));
        }
        Ok(())
    }

    /// Records a full forward pass; `seed` drives dropout in training mode.
    pub fn forward<'p>(&'p self, input: &Grid<T>, mode: Mode, seed: u64) -> Result<ForwardPass<'p, T>> {
        self.check_input(input)?;
        let mut rec = Recorder::new(&self.store, mode, seed);
        let x = rec.tape.leaf(input.clone());

        let mut h = self.stem.forward(&mut rec, x)?;
        let mut outputs = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            h = block.forward(&mut rec, h)?;
            outputs.push(h);
        }

        let taps: Vec<Var> = self.config.pyramid.tap_blocks.iter().map(|&b| outputs[b - 1]).collect();
        let gated = if self.acfs.is_empty() {
            taps.clone()
        } else {
            taps.iter()
                .zip(&self.acfs)
                .map(|(&t, acf)| acf.forward(&mut rec, t))
                .collect::<Result<Vec<_>>>()?
        };
        let fused = fuse(&mut rec.tape, &gated)?;
        let logits = self.head.forward(&mut rec, fused)?;

        Ok(ForwardPass {
            tape: rec.tape,
            input: x,
            blocks: outputs,
            taps,
            gated,
            fused,
            logits,
            param_vars: rec.vars,
            bn_nodes: rec.bn_nodes,
        })
    }

    /// Inference over a batch; deterministic and pure.
    pub fn predict(&self, input: &Grid<T>) -> Result<Vec<Prediction<T>>> {
        let pass = self.forward(input, Mode::Eval, 0)?;
        let probs = pass.probabilities();
        Ok(probs
            .data()
            .chunks_exact(probs.channels())
            .map(|p| Prediction {
                probs: p.to_vec(),
                stage: argmax(p),
            })
            .collect())
    }

    /// Classifies a single epoch of `input_length` samples.
    pub fn classify_epoch(&self, samples: &[T]) -> Result<Prediction<T>> {
        let x = Grid::new(Shape::new(1, samples.len(), 1), samples.to_vec())?;
        Ok(self.predict(&x)?.remove(0))
    }

    /// Eval-mode backbone: the pyramid taps and the final block output.
    pub fn backbone(&self, input: &Grid<T>) -> Result<BackboneOutput<T>> {
        let pass = self.forward(input, Mode::Eval, 0)?;
        Ok(BackboneOutput {
            taps: pass.taps.iter().map(|&v| pass.tape.value(v).clone()).collect(),
            features: pass.tape.value(*pass.blocks.last().unwrap()).clone(),
        })
    }

    pub fn apply_bn_updates(&mut self, updates: &[BnUpdate<T>], momentum: T) {
        let rest = T::one() - momentum;
        for u in updates {
            let fold = |dst: &mut Grid<T>, src: &[T]| {
                for (r, &b) in dst.data_mut().iter_mut().zip(src) {
                    *r = momentum * *r + rest * b;
                }
            };
            fold(&mut self.store.get_mut(u.running_mean).value, &u.batch_mean);
            fold(&mut self.store.get_mut(u.running_var).value, &u.batch_var);
        }
    }

    /// Trainable parameter counts grouped by layer (the name before the last `.`).
    pub fn summary(&self) -> ModelSummary {
        let mut layers: Vec<LayerSummary> = Vec::new();
        for p in self.store.iter().filter(|p| p.trainable) {
            let layer = p.name.rsplit_once('.').map_or(p.name.as_str(), |(l, _)| l);
            match layers.last_mut() {
                Some(last) if last.name == layer => last.params += p.value.numel(),
                _ => layers.push(LayerSummary {
                    name: layer.to_string(),
                    params: p.value.numel(),
                }),
            }
        }
        let total = layers.iter().map(|l| l.params).sum();
        ModelSummary { layers, total }
    }
}

#[derive(Debug, Clone)]
pub struct BackboneOutput<T> {
    pub taps: Vec<Grid<T>>,
    pub features: Grid<T>,
}

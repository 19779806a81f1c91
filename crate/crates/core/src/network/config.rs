use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Residual backbone geometry.
///
/// The defaults give 19 convolutions (one stem conv plus two per block) with
/// kernel length 32. Blocks listed in `subsample_blocks` halve the length with
/// a stride-2 first convolution and multiply the channel count by
/// `channel_growth`; a 3072-sample input then reaches lengths 768, 384 and 192
/// after blocks 5, 7 and 9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub input_length: usize,
    pub num_blocks: usize,
    pub kernel_length: usize,
    pub base_channels: usize,
    pub channel_growth: usize,
    /// 1-based block indices.
    pub subsample_blocks: Vec<usize>,
    pub dropout_p: f64,
    pub batch_norm: bool,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            input_length: 3072,
            num_blocks: 9,
            kernel_length: 32,
            base_channels: 32,
            channel_growth: 2,
            subsample_blocks: vec![2, 4, 6, 8],
            dropout_p: 0.3,
            batch_norm: true,
        }
    }
}

impl BackboneConfig {
    pub fn conv_layers(&self) -> usize {
        2 * self.num_blocks + 1
    }

    pub fn subsamples(&self, block: usize) -> bool {
        self.subsample_blocks.contains(&block)
    }

    /// `(length, channels)` at the output of every block, 1-based (index 0 is the stem).
    pub fn block_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = vec![(self.input_length, self.base_channels)];
        let (mut len, mut ch) = (self.input_length, self.base_channels);
        for b in 1..=self.num_blocks {
            if self.subsamples(b) {
                len = len.div_ceil(2);
                ch *= self.channel_growth;
            }
            shapes.push((len, ch));
        }
        shapes
    }
}

/// Which block outputs feed the fusion pyramid (1-based, shallow to deep).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PyramidConfig {
    pub tap_blocks: Vec<usize>,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        PyramidConfig {
            tap_blocks: vec![5, 7, 9],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfConfig {
    pub enabled: bool,
    pub conv_kernel_length: usize,
    pub bottleneck_ratio: usize,
}

impl Default for AcfConfig {
    fn default() -> Self {
        AcfConfig {
            enabled: true,
            conv_kernel_length: 3,
            bottleneck_ratio: 4,
        }
    }
}

impl AcfConfig {
    pub fn bottleneck(&self, channels: usize) -> usize {
        (channels / self.bottleneck_ratio).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub pool_target: usize,
    pub hidden_sizes: Vec<usize>,
    pub num_classes: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            pool_target: 3,
            hidden_sizes: vec![128],
            num_classes: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub pyramid: PyramidConfig,
    pub acf: AcfConfig,
    pub head: HeadConfig,
}

impl ModelConfig {
    /// Three-block variant for overfitting checks: full-length input, taps at every block.
    pub fn reduced(base_channels: usize) -> Self {
        ModelConfig {
            backbone: BackboneConfig {
                num_blocks: 3,
                base_channels,
                subsample_blocks: vec![2, 3],
                ..BackboneConfig::default()
            },
            pyramid: PyramidConfig {
                tap_blocks: vec![1, 2, 3],
            },
            ..ModelConfig::default()
        }
    }

    /// Small enough for finite-difference checks of the whole model.
    pub fn tiny() -> Self {
        ModelConfig {
            backbone: BackboneConfig {
                input_length: 96,
                num_blocks: 3,
                kernel_length: 5,
                base_channels: 4,
                channel_growth: 2,
                subsample_blocks: vec![2, 3],
                dropout_p: 0.0,
                batch_norm: true,
            },
            pyramid: PyramidConfig {
                tap_blocks: vec![1, 2, 3],
            },
            acf: AcfConfig {
                enabled: true,
                conv_kernel_length: 3,
                bottleneck_ratio: 2,
            },
            head: HeadConfig {
                pool_target: 3,
                hidden_sizes: vec![8],
                num_classes: 5,
            },
        }
    }

    /// `(length, channels)` of each pyramid tap, shallow to deep.
    pub fn tap_shapes(&self) -> Vec<(usize, usize)> {
        let shapes = self.backbone.block_shapes();
        self.pyramid.tap_blocks.iter().map(|&b| shapes[b]).collect()
    }

    /// `(length, channels)` of the fused feature fed to the classifier.
    pub fn fused_shape(&self) -> (usize, usize) {
        let taps = self.tap_shapes();
        (taps[0].0, taps.iter().map(|t| t.1).sum())
    }

    pub fn validate(&self) -> Result<()> {
        let bb = &self.backbone;
        let bad = |msg: String| Err(Error::Config(msg));
        if bb.input_length == 0 || bb.num_blocks == 0 || bb.kernel_length == 0 || bb.base_channels == 0 {
            return bad("backbone lengths, block count and channel count must be positive".into());
        }
        if bb.channel_growth == 0 {
            return bad("channel_growth must be positive".into());
        }
        if let Some(b) = bb.subsample_blocks.iter().find(|&&b| b == 0 || b > bb.num_blocks) {
            return bad(format!("subsample block {b} outside 1..={}", bb.num_blocks));
        }
        if !(0.0..1.0).contains(&bb.dropout_p) {
            return bad(format!("dropout_p {} must be in [0, 1)", bb.dropout_p));
        }
        let taps = &self.pyramid.tap_blocks;
        if taps.is_empty() {
            return bad("at least one pyramid tap is required".into());
        }
        if taps.windows(2).any(|w| w[0] >= w[1]) || taps[0] == 0 || *taps.last().unwrap() > bb.num_blocks {
            return bad(format!(
                "tap blocks {taps:?} must be strictly increasing within 1..={}",
                bb.num_blocks
            ));
        }
        let shapes = self.tap_shapes();
        for w in shapes.windows(2) {
            if w[0].0 != 2 * w[1].0 {
                return bad(format!(
                    "pyramid length-ratio violation: tap lengths {} and {} are not 2:1",
                    w[0].0, w[1].0
                ));
            }
        }
        if self.acf.conv_kernel_length == 0 || self.acf.bottleneck_ratio == 0 {
            return bad("ACF kernel length and bottleneck ratio must be positive".into());
        }
        let head = &self.head;
        if head.pool_target == 0 || head.pool_target > shapes[0].0 {
            return bad(format!("pool target {} exceeds fused length {}", head.pool_target, shapes[0].0));
        }
        if head.num_classes < 2 || head.hidden_sizes.contains(&0) {
            return bad("head needs at least two classes and non-empty hidden layers".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_backbone_has_nineteen_convolutions() {
        assert_eq!(BackboneConfig::default().conv_layers(), 19);
    }

    #[test]
    fn default_tap_geometry() {
        let cfg = ModelConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.tap_shapes(), vec![(768, 128), (384, 256), (192, 512)]);
        assert_eq!(cfg.fused_shape(), (768, 896));
    }

    #[test]
    fn length_ratio_violation_is_rejected() {
        let mut cfg = ModelConfig::default();
        cfg.pyramid.tap_blocks = vec![3, 7, 9];
        assert!(cfg.validate().unwrap_err().to_string().contains("length-ratio"));
    }

    #[test]
    fn deeper_variant_validates() {
        let mut cfg = ModelConfig::default();
        cfg.backbone.num_blocks = 11;
        cfg.backbone.subsample_blocks = vec![2, 4, 6, 8, 10];
        cfg.pyramid.tap_blocks = vec![7, 9, 11];
        cfg.validate().unwrap();
        assert_eq!(cfg.backbone.conv_layers(), 23);
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Annotation;
use crate::error::{Error, Result};
use crate::stage::Stage;

/// Maps a hypnogram annotation to a stage. `None` means the epoch is excluded
/// (unscored, movement, or unrecognised text).
pub fn map_stage(text: &str) -> Option<Stage> {
    match text.trim() {
        "Sleep stage W" => Some(Stage::W),
        "Sleep stage 1" => Some(Stage::N1),
        "Sleep stage 2" => Some(Stage::N2),
        "Sleep stage 3" | "Sleep stage 4" => Some(Stage::N3),
        "Sleep stage R" => Some(Stage::Rem),
        "Sleep stage ?" | "Movement time" => None,
        other => {
            log::warn!("unrecognised annotation `{other}`, epochs excluded");
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PadMode {
    /// Zeros after the samples.
    Tail,
    /// Zeros split evenly, the extra one at the end.
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochOptions {
    pub epoch_seconds: f64,
    pub padded_len: usize,
    pub pad: PadMode,
}

impl Default for EpochOptions {
    fn default() -> Self {
        EpochOptions {
            epoch_seconds: 30.0,
            padded_len: 3072,
            pad: PadMode::Tail,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub channel: String,
    pub sample_rate: f64,
    /// Seconds from the recording start.
    pub onset: f64,
    pub stage: Stage,
    /// `padded_len` samples in physical units.
    pub samples: Vec<f32>,
}

/// Cuts a signal into annotated epochs, dropping excluded epochs and any
/// epoch that runs past the end of the signal.
pub fn epoch_and_pad(
    signal: &[f64],
    sample_rate: f64,
    annotations: &[Annotation],
    channel: &str,
    opts: &EpochOptions,
) -> Result<Vec<EpochRecord>> {
    let per_epoch = (opts.epoch_seconds * sample_rate).round() as usize;
    if per_epoch == 0 || per_epoch > opts.padded_len {
        return Err(Error::InvalidArgument(format!(
            "an epoch of {per_epoch} samples cannot be padded to {}",
            opts.padded_len
        )));
    }
    let pad = opts.padded_len - per_epoch;
    let left = match opts.pad {
        PadMode::Tail => 0,
        PadMode::Symmetric => pad / 2,
    };

    let mut out: Vec<EpochRecord> = Vec::new();
    for a in annotations {
        let Some(stage) = map_stage(&a.text) else { continue };
        let count = (a.duration / opts.epoch_seconds + 1e-9).floor() as usize;
        for k in 0..count {
            let onset = a.onset + k as f64 * opts.epoch_seconds;
            let start = (onset * sample_rate).round() as usize;
            if start + per_epoch > signal.len() {
                log::warn!("{channel}: epoch at {onset} s runs past the signal end, dropped");
                break;
            }
            if out.last().is_some_and(|e| e.onset >= onset) {
                log::warn!("{channel}: overlapping annotation at {onset} s ignored");
                continue;
            }
            let mut samples = vec![0.0f32; opts.padded_len];
            for (dst, &v) in samples[left..left + per_epoch].iter_mut().zip(&signal[start..start + per_epoch]) {
                *dst = v as f32;
            }
            out.push(EpochRecord {
                channel: channel.to_string(),
                sample_rate,
                onset,
                stage,
                samples,
            });
        }
    }
    Ok(out)
}

/// Keeps the sleep period plus `minutes` of wake on either side.
pub fn trim_wake(epochs: Vec<EpochRecord>, minutes: f64) -> Vec<EpochRecord> {
    let sleep: Vec<f64> = epochs.iter().filter(|e| e.stage != Stage::W).map(|e| e.onset).collect();
    let (Some(&first), Some(&last)) = (sleep.first(), sleep.last()) else {
        return Vec::new();
    };
    let margin = minutes * 60.0;
    epochs
        .into_iter()
        .filter(|e| e.onset >= first - margin && e.onset <= last + margin)
        .collect()
}

/// Sleep-EDF naming: `SC4001E0-PSG.edf` and `SC4001EC-Hypnogram.edf` share
/// the id `SC4001E` (the part before `-` minus its last character).
pub fn record_id(file_name: &str) -> Option<String> {
    let stem = file_name.split('-').next()?;
    let mut chars = stem.chars();
    chars.next_back()?;
    let id = chars.as_str();
    (!id.is_empty()).then(|| id.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordingPair {
    pub id: String,
    pub psg: PathBuf,
    pub hypnogram: PathBuf,
}

/// Pairs every `*-PSG.edf` with its `*-Hypnogram.edf`. Sorted by id.
pub fn pair_recordings(files: &[PathBuf]) -> Result<Vec<RecordingPair>> {
    let name = |p: &Path| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let kind = |p: &Path, tag: &str| name(p).to_ascii_lowercase().ends_with(&format!("-{tag}.edf"));
    let hyps: Vec<(String, &PathBuf)> = files
        .iter()
        .filter(|p| kind(p, "hypnogram"))
        .filter_map(|p| record_id(&name(p)).map(|id| (id, p)))
        .collect();
    let mut pairs = Vec::new();
    for psg in files.iter().filter(|p| kind(p, "psg")) {
        let id = record_id(&name(psg))
            .ok_or_else(|| Error::InvalidArgument(format!("cannot derive a record id from {}", psg.display())))?;
        let hyp = hyps
            .iter()
            .find(|(h, _)| *h == id)
            .ok_or_else(|| Error::InvalidArgument(format!("missing hypnogram for {}", psg.display())))?;
        pairs.push(RecordingPair {
            id,
            psg: psg.clone(),
            hypnogram: hyp.1.clone(),
        });
    }
    pairs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(onset: f64, duration: f64, text: &str) -> Annotation {
        Annotation {
            onset,
            duration,
            text: text.into(),
        }
    }

    #[test]
    fn stage_mapping() {
        assert_eq!(map_stage("Sleep stage 4"), Some(Stage::N3));
        assert_eq!(map_stage("Sleep stage 3"), Some(Stage::N3));
        assert_eq!(map_stage("Sleep stage R"), Some(Stage::Rem));
        assert_eq!(map_stage("Movement time"), None);
        assert_eq!(map_stage("Lights off"), None);
    }

    #[test]
    fn one_epoch_is_tail_padded() {
        let signal: Vec<f64> = (0..3000).map(|i| i as f64 + 1.0).collect();
        let e = epoch_and_pad(&signal, 100.0, &[ann(0.0, 30.0, "Sleep stage W")], "EEG", &EpochOptions::default()).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].samples.len(), 3072);
        assert_eq!(e[0].samples[2999], 3000.0);
        assert!(e[0].samples[3000..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ninety_seconds_three_epochs() {
        let signal = vec![1.0; 9000];
        let anns = [ann(0.0, 60.0, "Sleep stage 2"), ann(60.0, 30.0, "Sleep stage R")];
        let e = epoch_and_pad(&signal, 100.0, &anns, "EEG", &EpochOptions::default()).unwrap();
        assert_eq!(e.iter().map(|e| e.stage).collect::<Vec<_>>(), vec![Stage::N2, Stage::N2, Stage::Rem]);
        let excluded = [ann(0.0, 90.0, "Sleep stage ?")];
        assert!(epoch_and_pad(&signal, 100.0, &excluded, "EEG", &EpochOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn partial_trailing_epoch_is_dropped() {
        let signal = vec![1.0; 5000];
        let e = epoch_and_pad(&signal, 100.0, &[ann(0.0, 60.0, "Sleep stage W")], "EEG", &EpochOptions::default()).unwrap();
        assert_eq!(e.len(), 1);
    }

    #[test]
    fn symmetric_padding_splits_zeros() {
        let signal = vec![1.0; 3000];
        let opts = EpochOptions {
            pad: PadMode::Symmetric,
            ..EpochOptions::default()
        };
        let e = epoch_and_pad(&signal, 100.0, &[ann(0.0, 30.0, "Sleep stage W")], "EEG", &opts).unwrap();
        assert_eq!(e[0].samples.iter().position(|&v| v == 1.0), Some(36));
    }

    #[test]
    fn trimming_keeps_margin() {
        let stages = [Stage::W, Stage::W, Stage::W, Stage::N1, Stage::N2, Stage::W, Stage::W];
        let epochs: Vec<EpochRecord> = stages
            .iter()
            .enumerate()
            .map(|(i, &stage)| EpochRecord {
                channel: "EEG".into(),
                sample_rate: 100.0,
                onset: 30.0 * i as f64,
                stage,
                samples: vec![],
            })
            .collect();
        let kept = trim_wake(epochs, 0.5);
        assert_eq!(kept.iter().map(|e| e.onset).collect::<Vec<_>>(), vec![60.0, 90.0, 120.0, 150.0]);
    }

    #[test]
    fn sleep_edf_pairing() {
        assert_eq!(record_id("SC4001E0-PSG.edf").as_deref(), Some("SC4001E"));
        assert_eq!(record_id("SC4001EC-Hypnogram.edf").as_deref(), Some("SC4001E"));
        let files: Vec<PathBuf> = ["SC4011E0-PSG.edf", "SC4001EC-Hypnogram.edf", "SC4001E0-PSG.edf", "SC4011EH-Hypnogram.edf"]
            .iter()
            .map(PathBuf::from)
            .collect();
        let pairs = pair_recordings(&files).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].hypnogram, PathBuf::from("SC4001EC-Hypnogram.edf"));
        let err = pair_recordings(&files[..1]).unwrap_err().to_string();
        assert!(err.contains("missing hypnogram"), "{err}");
    }
}

//! Deterministic synthetic sleep data: Markov hypnograms, stage-banded
//! EEG-like epochs, and noisy classifier confidences with isolated flips.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::edf::{self, Annotation, EdfHeader, RecordingPair, SignalHeader};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, confusion, transition_count};
use crate::msc::{fit_and_apply, MscConfig};
use crate::network::derive_seed;
use crate::stage::{argmax, Stage, NUM_STAGES};
use crate::store::{EpochStore, EPOCH_LEN};
use crate::trainer::Dataset;

/// Spectral signature of one stage: band-limited noise around `center_hz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageProfile {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    /// RMS amplitude in µV.
    pub amplitude: f64,
    /// Emit the band as short bursts over a low theta background (spindles).
    pub bursts: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub transitions: [[f64; NUM_STAGES]; NUM_STAGES],
    pub epochs_per_record: usize,
    pub sample_rate: f64,
    pub epoch_seconds: f64,
    pub profiles: [StageProfile; NUM_STAGES],
    /// White-noise RMS in µV added to every epoch.
    pub noise: f64,
    pub seed: u64,
}

/// Stays with probability 0.9; otherwise moves along the usual cycle
/// W ↔ N1 ↔ N2 ↔ N3 with REM entered from N2 and left towards W or N1.
pub const DEFAULT_TRANSITIONS: [[f64; NUM_STAGES]; NUM_STAGES] = [
    [0.90, 0.08, 0.005, 0.0, 0.015],
    [0.03, 0.90, 0.055, 0.0, 0.015],
    [0.005, 0.02, 0.90, 0.05, 0.025],
    [0.002, 0.003, 0.095, 0.90, 0.0],
    [0.02, 0.03, 0.05, 0.0, 0.90],
];

impl Default for SynthConfig {
    fn default() -> Self {
        let p = |center_hz, bandwidth_hz, amplitude| StageProfile {
            center_hz,
            bandwidth_hz,
            amplitude,
            bursts: false,
        };
        SynthConfig {
            transitions: DEFAULT_TRANSITIONS,
            epochs_per_record: 1000,
            sample_rate: 100.0,
            epoch_seconds: 30.0,
            profiles: [
                p(10.0, 4.0, 20.0),
                p(5.5, 3.0, 25.0),
                StageProfile {
                    bursts: true,
                    ..p(13.0, 2.0, 35.0)
                },
                p(1.25, 1.5, 75.0),
                p(6.0, 8.0, 12.0),
            ],
            noise: 2.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn samples_per_epoch(&self) -> usize {
        (self.epoch_seconds * self.sample_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        check_stochastic(&self.transitions)?;
        if self.profiles.iter().any(|p| !(p.center_hz > 0.0 && p.bandwidth_hz > 0.0 && p.amplitude > 0.0)) {
            return Err(Error::Config("stage profiles need positive frequency, bandwidth and amplitude".into()));
        }
        if !(self.sample_rate > 0.0) || self.samples_per_epoch() == 0 || self.samples_per_epoch() > EPOCH_LEN {
            return Err(Error::Config(format!(
                "an epoch of {} samples does not fit the {EPOCH_LEN}-sample input",
                self.samples_per_epoch()
            )));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::Config("noise must be non-negative".into()));
        }
        Ok(())
    }
}

pub fn check_stochastic(m: &[[f64; NUM_STAGES]; NUM_STAGES]) -> Result<()> {
    for (s, row) in m.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if row.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "transition row {} must be non-negative and sum to 1 (sum {sum})",
                Stage::ALL[s]
            )));
        }
    }
    Ok(())
}

/// Markov-chain hypnogram of `len` epochs starting in W.
pub fn sample_hypnogram<R: Rng + ?Sized>(
    transitions: &[[f64; NUM_STAGES]; NUM_STAGES],
    len: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    check_stochastic(transitions)?;
    let mut out = Vec::with_capacity(len);
    let mut s = Stage::W.index();
    for _ in 0..len {
        out.push(s);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let row = &transitions[s];
        // falls back to the last positive entry if rounding leaves `u` uncovered
        let mut next = (0..NUM_STAGES).rev().find(|&t| row[t] > 0.0).unwrap_or(s);
        for (t, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = t;
                break;
            }
        }
        s = next;
    }
    Ok(out)
}

fn band_noise<R: Rng + ?Sized>(out: &mut [f64], center: f64, bandwidth: f64, amplitude: f64, fs: f64, rng: &mut R) {
    const COMPONENTS: usize = 24;
    let lo = (center - bandwidth / 2.0).max(0.05);
    let hi = center + bandwidth / 2.0;
    let a = amplitude * (2.0 / COMPONENTS as f64).sqrt();
    for _ in 0..COMPONENTS {
        let f = rng.random_range(lo..hi);
        let phase = rng.random_range(0.0..2.0 * PI);
        let w = 2.0 * PI * f / fs;
        for (t, v) in out.iter_mut().enumerate() {
            *v += a * (w * t as f64 + phase).sin();
        }
    }
}

/// One unpadded epoch (`epoch_seconds · sample_rate` samples) for `stage`.
pub fn synth_epoch<R: Rng + ?Sized>(stage: Stage, cfg: &SynthConfig, rng: &mut R) -> Vec<f32> {
    let n = cfg.samples_per_epoch();
    let fs = cfg.sample_rate;
    let p = cfg.profiles[stage.index()];
    let mut x = vec![0.0f64; n];
    if p.bursts {
        band_noise(&mut x, 5.5, 3.0, p.amplitude * 0.4, fs, rng);
        let mut burst = vec![0.0f64; n];
        band_noise(&mut burst, p.center_hz, p.bandwidth_hz, p.amplitude, fs, rng);
        let width = (1.5 * fs) as usize;
        let mut env = vec![0.0f64; n];
        for _ in 0..rng.random_range(2..=4) {
            let start = rng.random_range(0..n.saturating_sub(width).max(1));
            for k in 0..width.min(n - start) {
                let h = (PI * k as f64 / width as f64).sin().powi(2);
                env[start + k] = f64::max(env[start + k], h);
            }
        }
        for ((v, b), e) in x.iter_mut().zip(&burst).zip(&env) {
            *v += 2.0 * b * e;
        }
    } else {
        band_noise(&mut x, p.center_hz, p.bandwidth_hz, p.amplitude, fs, rng);
    }
    if cfg.noise > 0.0 {
        let normal = Normal::new(0.0, cfg.noise).expect("finite noise");
        for v in &mut x {
            *v += normal.sample(rng);
        }
    }
    x.into_iter().map(|v| v as f32).collect()
}

fn padded(epoch: &[f32]) -> impl Iterator<Item = f32> + '_ {
    epoch.iter().copied().chain(std::iter::repeat(0.0).take(EPOCH_LEN - epoch.len()))
}

/// A full record: sampled hypnogram plus one tail-padded epoch per label.
pub fn synth_record(cfg: &SynthConfig, name: &str, seed: u64) -> Result<EpochStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = sample_hypnogram(&cfg.transitions, cfg.epochs_per_record, &mut rng)?;
    let mut samples = Vec::with_capacity(labels.len() * EPOCH_LEN);
    for &l in &labels {
        samples.extend(padded(&synth_epoch(Stage::ALL[l], cfg, &mut rng)));
    }
    Ok(EpochStore {
        name: name.into(),
        samples,
        labels: labels.into_iter().map(|l| Stage::ALL[l]).collect(),
    })
}

/// Channels written by [`write_edf_pair`].
pub const EDF_CHANNELS: [&str; 2] = ["EEG Fpz-Cz", "EEG Pz-Oz"];

fn annotation_text(stage: Stage) -> &'static str {
    match stage {
        Stage::W => "Sleep stage W",
        Stage::N1 => "Sleep stage 1",
        Stage::N2 => "Sleep stage 2",
        Stage::N3 => "Sleep stage 3",
        Stage::Rem => "Sleep stage R",
    }
}

/// Writes a synthetic record as `<id>0-PSG.edf` (two EEG channels, one data
/// record per epoch) and `<id>C-Hypnogram.edf` (EDF+ annotations, one per
/// run of equal stages). Returns the pair and the true labels.
pub fn write_edf_pair(
    dir: &std::path::Path,
    id: &str,
    cfg: &SynthConfig,
    seed: u64,
) -> Result<(RecordingPair, Vec<Stage>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = sample_hypnogram(&cfg.transitions, cfg.epochs_per_record, &mut rng)?;
    let (pmin, pmax, dmin, dmax) = (-500.0, 500.0, -32768i32, 32767i32);
    let digitise = |x: f32| {
        let d = (x as f64 - pmin) / (pmax - pmin) * (dmax - dmin) as f64 + dmin as f64;
        d.round().clamp(dmin as f64, dmax as f64) as i16
    };
    let mut channels = vec![Vec::new(), Vec::new()];
    for &l in &labels {
        for ch in channels.iter_mut() {
            ch.extend(synth_epoch(Stage::ALL[l], cfg, &mut rng).into_iter().map(digitise));
        }
    }
    let spr = cfg.samples_per_epoch();
    let psg_header = EdfHeader::new(
        labels.len() as i64,
        cfg.epoch_seconds,
        EDF_CHANNELS
            .iter()
            .map(|name| SignalHeader::new(name, (pmin, pmax), (dmin, dmax), spr))
            .collect(),
    );

    let mut annotations: Vec<Annotation> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        let text = annotation_text(Stage::ALL[l]);
        match annotations.last_mut() {
            Some(a) if i > 0 && labels[i - 1] == l => a.duration += cfg.epoch_seconds,
            _ => annotations.push(Annotation {
                onset: i as f64 * cfg.epoch_seconds,
                duration: cfg.epoch_seconds,
                text: text.into(),
            }),
        }
    }
    // one annotation record holding the timekeeping entry and every TAL
    let bytes = 8 + edf::write_tal(&annotations).len();
    let hyp_header = EdfHeader::new(1, 0.0, vec![SignalHeader::annotations(bytes.div_ceil(2) * 2)]);

    std::fs::create_dir_all(dir)?;
    let pair = RecordingPair {
        id: id.to_string(),
        psg: dir.join(format!("{id}0-PSG.edf")),
        hypnogram: dir.join(format!("{id}C-Hypnogram.edf")),
    };
    std::fs::write(&pair.psg, edf::write_fixture(&psg_header, &channels, &[])?)?;
    std::fs::write(&pair.hypnogram, edf::write_fixture(&hyp_header, &[], &annotations)?)?;
    Ok((pair, labels.into_iter().map(|l| Stage::ALL[l]).collect()))
}

/// `n` padded epochs cycling through the five stages.
pub fn synth_balanced(n: usize, cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Dataset {
        epoch_len: EPOCH_LEN,
        ..Dataset::default()
    };
    for i in 0..n {
        let stage = Stage::ALL[i % NUM_STAGES];
        let e: Vec<f32> = padded(&synth_epoch(stage, cfg, &mut rng)).collect();
        d.push(&e, stage.index());
    }
    Ok(d)
}

/// Plausible misclassifications: stages one step away on the sleep cycle.
pub fn adjacent_stages(stage: usize) -> &'static [usize] {
    const W: usize = 0;
    const N1: usize = 1;
    const N2: usize = 2;
    const N3: usize = 3;
    const REM: usize = 4;
    match stage {
        W => &[N1, REM],
        N1 => &[W, N2, REM],
        N2 => &[N1, N3, REM],
        N3 => &[N2],
        REM => &[W, N1, N2],
        _ => &[],
    }
}

/// Confidences for a ground-truth sequence. Every vector peaks on the true
/// stage except at isolated flipped epochs, where an adjacent stage beats the
/// true one by `margin`. Flips only land inside runs of at least three equal
/// stages and never next to each other.
pub fn inject_jitter<R: Rng + ?Sized>(
    truth: &[usize],
    rate: f64,
    margin: f64,
    rng: &mut R,
) -> Result<(Vec<[f64; NUM_STAGES]>, Vec<bool>)> {
    if !(0.0..0.5).contains(&rate) {
        return Err(Error::InvalidArgument(format!("jitter rate {rate} outside [0, 0.5)")));
    }
    if !(margin > 0.0 && margin < 0.5) {
        return Err(Error::InvalidArgument(format!("confidence margin {margin} outside (0, 0.5)")));
    }
    crate::stage::check_labels(truth)?;
    let n = truth.len();
    let mut flipped = vec![false; n];
    if rate > 0.0 && n > 0 {
        let want = Binomial::new(n as u64, rate).expect("valid rate").sample(rng) as usize;
        let mut eligible: Vec<usize> = (1..n.saturating_sub(1))
            .filter(|&i| truth[i - 1] == truth[i] && truth[i] == truth[i + 1])
            .collect();
        eligible.shuffle(rng);
        let mut taken = 0;
        for i in eligible {
            if taken == want {
                break;
            }
            if !flipped[i - 1] && !flipped[i + 1] {
                flipped[i] = true;
                taken += 1;
            }
        }
        if taken < want {
            log::warn!("only {taken} of {want} requested flips fit the sequence");
        }
    }

    let mut probs = Vec::with_capacity(n);
    for (i, &t) in truth.iter().enumerate() {
        let mut p = [0.0; NUM_STAGES];
        let (peak, others): (Vec<(usize, f64)>, Vec<usize>) = if flipped[i] {
            let adj = adjacent_stages(t);
            let wrong = adj[rng.random_range(0..adj.len())];
            let top = rng.random_range(0.4..(1.0 + margin) / 2.0);
            let rest = (0..NUM_STAGES).filter(|&k| k != t && k != wrong).collect();
            (vec![(wrong, top), (t, top - margin)], rest)
        } else {
            let top = rng.random_range(0.6..0.95);
            (vec![(t, top)], (0..NUM_STAGES).filter(|&k| k != t).collect())
        };
        let used: f64 = peak.iter().map(|x| x.1).sum();
        let weights: Vec<f64> = others.iter().map(|_| rng.random_range(0.5..1.5)).collect();
        let total: f64 = weights.iter().sum();
        for (&k, w) in others.iter().zip(&weights) {
            p[k] = (1.0 - used) * w / total;
        }
        for (k, v) in peak {
            p[k] = v;
        }
        probs.push(p);
    }
    Ok((probs, flipped))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub seed: u64,
    pub raw_acc: f64,
    pub corrected_acc: f64,
    pub raw_transitions: usize,
    pub corrected_transitions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub records: usize,
    pub epochs_per_record: usize,
    pub jitter_rate: f64,
    pub margin: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            records: 20,
            epochs_per_record: 1000,
            jitter_rate: 0.15,
            margin: 0.1,
            seed: 0,
        }
    }
}

/// Corrector benchmark on synthetic hypnograms. Each record is corrected with
/// a transition matrix fitted on the other records' ground truth.
pub fn msc_benchmark(bench: &BenchConfig, transitions: &[[f64; NUM_STAGES]; NUM_STAGES], msc: &MscConfig) -> Result<Vec<BenchRow>> {
    let seeds: Vec<u64> = (0..bench.records as u64).map(|r| derive_seed(bench.seed, r)).collect();
    let truths: Vec<Vec<usize>> = seeds
        .iter()
        .map(|&s| sample_hypnogram(transitions, bench.epochs_per_record, &mut ChaCha8Rng::seed_from_u64(s)))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(bench.records);
    for (r, truth) in truths.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seeds[r], 1));
        let (probs, _) = inject_jitter(truth, bench.jitter_rate, bench.margin, &mut rng)?;
        let raw: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
        let others: Vec<&[usize]> = truths
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != r)
            .map(|(_, t)| t.as_slice())
            .collect();
        let corrected = fit_and_apply(&others, &probs, msc)?;
        rows.push(BenchRow {
            seed: seeds[r],
            raw_acc: accuracy(&confusion(truth, &raw)?)?,
            corrected_acc: accuracy(&confusion(truth, &corrected)?)?,
            raw_transitions: transition_count(&raw),
            corrected_transitions: transition_count(&corrected),
        });
    }
    Ok(rows)
}

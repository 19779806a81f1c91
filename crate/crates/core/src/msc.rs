//! Markov-based sequential correction of per-epoch stage predictions.
//!
//! Whenever the predicted stage changes, the confidences at that epoch are
//! reweighted by the transition row of the previous stage, with the "stay"
//! entry scaled by an inertia factor that looks ahead at upcoming predictions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stage::{argmax, check_labels, Stage, NUM_STAGES};

/// Consecutive-epoch transition counts, `counts[source][target]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionCounts {
    pub counts: [[u64; NUM_STAGES]; NUM_STAGES],
}

impl TransitionCounts {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Counts transitions inside each record; record boundaries are never crossed.
pub fn count_transitions<S: AsRef<[usize]>>(hypnograms: &[S]) -> Result<TransitionCounts> {
    let mut tc = TransitionCounts::default();
    for h in hypnograms {
        let h = h.as_ref();
        check_labels(h)?;
        for w in h.windows(2) {
            tc.counts[w[0]][w[1]] += 1;
        }
    }
    Ok(tc)
}

/// Monotone map applied to counts before the power and row normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compression {
    Linear,
    Sqrt,
    /// `ln(1 + x)`: keeps zero counts at zero, unlike a bare logarithm.
    #[serde(alias = "log")]
    Log1p,
}

impl Compression {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Compression::Linear => x,
            Compression::Sqrt => x.sqrt(),
            Compression::Log1p => x.ln_1p(),
        }
    }
}

impl fmt::Display for Compression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Compression::Linear => "linear",
            Compression::Sqrt => "sqrt",
            Compression::Log1p => "log1p",
        })
    }
}

impl FromStr for Compression {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Compression::Linear),
            "sqrt" => Ok(Compression::Sqrt),
            "log1p" | "log" => Ok(Compression::Log1p),
            _ => Err(Error::InvalidArgument(format!(
                "unknown compression `{s}` (expected linear, sqrt or log1p)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MscConfig {
    pub compression: Compression,
    /// Exponent applied after compression, `r ≥ 1`.
    pub r: f64,
    /// Lookahead decay base, `a ≥ 1`.
    pub a: f64,
    /// Lookahead length, `n ≥ 1`.
    pub n: usize,
    /// Feed corrected labels into later change-point comparisons.
    pub cascade: bool,
    /// Add one to every count before compressing (fits sparse data).
    pub laplace: bool,
}

impl Default for MscConfig {
    fn default() -> Self {
        MscConfig {
            compression: Compression::Log1p,
            r: 4.2,
            a: 1.5,
            n: 4,
            cascade: false,
            laplace: false,
        }
    }
}

impl MscConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 1.0) || !(self.a >= 1.0) || self.n == 0 || !self.r.is_finite() || !self.a.is_finite() {
            return Err(Error::Config(format!(
                "msc needs r ≥ 1, a ≥ 1 and n ≥ 1 (got r={}, a={}, n={})",
                self.r, self.a, self.n
            )));
        }
        Ok(())
    }
}

/// Row-stochastic matrix `norm(G(counts)^r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessedMatrix {
    pub rows: [[f64; NUM_STAGES]; NUM_STAGES],
}

impl ProcessedMatrix {
    /// Checks that every entry is non-negative and each row sums to 1 within `1e-9`.
    pub fn new(rows: [[f64; NUM_STAGES]; NUM_STAGES]) -> Result<Self> {
        for (s, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "transition row {} is not a probability vector (sum {sum})",
                    Stage::ALL[s]
                )));
            }
        }
        Ok(ProcessedMatrix { rows })
    }
}

/// Compresses and normalises one row of counts. `None` if every entry maps to zero.
pub fn compress_row(counts: &[f64], g: Compression, r: f64) -> Option<Vec<f64>> {
    let mapped: Vec<f64> = counts.iter().map(|&c| g.apply(c).powf(r)).collect();
    let sum: f64 = mapped.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        Some(mapped.into_iter().map(|v| v / sum).collect())
    } else {
        None
    }
}

pub fn compress(counts: &TransitionCounts, g: Compression, r: f64, laplace: bool) -> Result<ProcessedMatrix> {
    if !(r >= 1.0) {
        return Err(Error::InvalidArgument(format!("compress: r must be ≥ 1, got {r}")));
    }
    let prior = if laplace { 1.0 } else { 0.0 };
    let mut rows = [[0.0; NUM_STAGES]; NUM_STAGES];
    for (s, row) in counts.counts.iter().enumerate() {
        let c: Vec<f64> = row.iter().map(|&v| v as f64 + prior).collect();
        let normed = compress_row(&c, g, r).ok_or(Error::EmptyTransitionRow {
            stage: Stage::ALL[s].name(),
        })?;
        rows[s].copy_from_slice(&normed);
    }
    Ok(ProcessedMatrix { rows })
}

/// `Σ_{j=1..n} δ_j · a^{−j}` where `δ_j` is +1 when the j-th upcoming label
/// equals `prev`, −1 when it equals `cur`, and 0 otherwise. Labels past the
/// end contribute nothing.
fn inertia_from(prev: usize, cur: usize, ahead: &[usize], a: f64, n: usize) -> f64 {
    ahead
        .iter()
        .take(n)
        .enumerate()
        .map(|(j, &c)| {
            let delta = if c == prev {
                1.0
            } else if c == cur {
                -1.0
            } else {
                0.0
            };
            delta * a.powi(-(j as i32 + 1))
        })
        .sum()
}

/// Inertia factor at change point `i` of `labels`.
pub fn inertia(labels: &[usize], i: usize, a: f64, n: usize) -> Result<f64> {
    if i == 0 || i >= labels.len() {
        return Err(Error::InvalidArgument(format!(
            "inertia: index {i} needs a predecessor inside a sequence of {}",
            labels.len()
        )));
    }
    Ok(inertia_from(labels[i - 1], labels[i], &labels[i + 1..], a, n))
}

/// What happened at one change point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangePoint {
    pub index: usize,
    pub previous: usize,
    pub inertia: f64,
    pub reweighted: [f64; NUM_STAGES],
    pub corrected: usize,
}

/// Corrects `labels` (the argmax of `probs`) for one continuous record.
pub fn msc_apply(
    probs: &[[f64; NUM_STAGES]],
    labels: &[usize],
    m: &ProcessedMatrix,
    cfg: &MscConfig,
) -> Result<Vec<usize>> {
    Ok(msc_apply_traced(probs, labels, m, cfg)?.0)
}

pub fn msc_apply_traced(
    probs: &[[f64; NUM_STAGES]],
    labels: &[usize],
    m: &ProcessedMatrix,
    cfg: &MscConfig,
) -> Result<(Vec<usize>, Vec<ChangePoint>)> {
    cfg.validate()?;
    if probs.len() != labels.len() {
        return Err(Error::shape("msc_apply", format!("{} confidences", labels.len()), probs.len()));
    }
    check_labels(labels)?;
    let mut out = labels.to_vec();
    let mut trace = Vec::new();
    for i in 1..labels.len() {
        let prev = if cfg.cascade { out[i - 1] } else { labels[i - 1] };
        let cur = labels[i];
        if cur == prev {
            continue;
        }
        let w = inertia_from(prev, cur, &labels[i + 1..], cfg.a, cfg.n);
        let mut row = m.rows[prev];
        row[prev] *= w;
        let mut reweighted = [0.0; NUM_STAGES];
        for k in 0..NUM_STAGES {
            reweighted[k] = probs[i][k] * row[k];
        }
        out[i] = argmax(&reweighted);
        trace.push(ChangePoint {
            index: i,
            previous: prev,
            inertia: w,
            reweighted,
            corrected: out[i],
        });
    }
    Ok((out, trace))
}

/// Labels from confidences, then [`msc_apply`].
pub fn correct(probs: &[[f64; NUM_STAGES]], m: &ProcessedMatrix, cfg: &MscConfig) -> Result<Vec<usize>> {
    let labels: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    msc_apply(probs, &labels, m, cfg)
}

/// Fits the transition matrix on training hypnograms and corrects one record.
pub fn fit_and_apply<S: AsRef<[usize]>>(
    train_hypnograms: &[S],
    probs: &[[f64; NUM_STAGES]],
    cfg: &MscConfig,
) -> Result<Vec<usize>> {
    let counts = count_transitions(train_hypnograms)?;
    let m = compress(&counts, cfg.compression, cfg.r, cfg.laplace)?;
    correct(probs, &m, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const W: usize = 0;
    const N1: usize = 1;

    #[test]
    fn counts_respect_record_boundaries() {
        let tc = count_transitions(&[vec![W, N1], vec![N1, W]]).unwrap();
        assert_eq!(tc.counts[W][N1], 1);
        assert_eq!(tc.counts[N1][W], 1);
        assert_eq!(tc.counts[W][W], 0);
        assert_eq!(tc.total(), 2);
        assert_eq!(count_transitions(&[vec![3]]).unwrap().total(), 0);
        assert!(count_transitions(&[vec![0, 5]]).is_err());
    }

    #[test]
    fn toy_rows_normalise() {
        let r = compress_row(&[8.0, 2.0], Compression::Linear, 1.0).unwrap();
        assert_eq!(r, vec![0.8, 0.2]);
        let r = compress_row(&[8.0, 2.0], Compression::Log1p, 1.0).unwrap();
        assert!((r[0] - 2.0 / 3.0).abs() < 1e-12 && (r[1] - 1.0 / 3.0).abs() < 1e-12);
        let a = compress_row(&[8.0, 2.0, 5.0], Compression::Sqrt, 2.0).unwrap();
        let b = compress_row(&[8.0, 2.0, 5.0], Compression::Linear, 1.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_row_needs_smoothing() {
        let tc = count_transitions(&[vec![0, 0, 1, 1]]).unwrap();
        let err = compress(&tc, Compression::Log1p, 4.2, false).unwrap_err();
        assert!(matches!(err, Error::EmptyTransitionRow { stage: "N2" }), "{err}");
        let m = compress(&tc, Compression::Log1p, 4.2, true).unwrap();
        assert!(ProcessedMatrix::new(m.rows).is_ok());
    }

    #[test]
    fn inertia_terms() {
        let third = 2.0 / 3.0;
        assert!((inertia(&[0, 1, 0], 1, 1.5, 1).unwrap() - third).abs() < 1e-12);
        assert!((inertia(&[0, 1, 1], 1, 1.5, 1).unwrap() + third).abs() < 1e-12);
        let w = inertia(&[0, 1, 0, 0, 1, 3], 1, 1.5, 4).unwrap();
        assert!((w - (1.0 / 1.5 + 1.0 / 2.25 - 1.0 / 3.375)).abs() < 1e-12);
        assert!((w - 0.8148).abs() < 1e-4);
        assert!(inertia(&[0, 1], 0, 1.5, 4).is_err());
        // truncated lookahead
        assert_eq!(inertia(&[0, 1], 1, 1.5, 4).unwrap(), 0.0);
    }

    #[test]
    fn constant_sequence_is_untouched() {
        let m = ProcessedMatrix {
            rows: [[0.2; 5]; 5],
        };
        let probs = vec![[0.1, 0.6, 0.1, 0.1, 0.1]; 7];
        assert_eq!(correct(&probs, &m, &MscConfig::default()).unwrap(), vec![1; 7]);
    }

    #[test]
    fn cascade_uses_corrected_predecessor() {
        let mut rows = [[0.2; 5]; 5];
        rows[0] = [0.5, 0.5, 0.0, 0.0, 0.0];
        rows[1] = [0.5, 0.5, 0.0, 0.0, 0.0];
        let m = ProcessedMatrix::new(rows).unwrap();
        let probs = [
            [1.0, 0.0, 0.0, 0.0, 0.0],
            [0.4, 0.1, 0.5, 0.0, 0.0],
            [0.3, 0.0, 0.7, 0.0, 0.0],
        ];
        let labels = [0, 2, 2];
        let cfg = MscConfig {
            n: 1,
            ..MscConfig::default()
        };
        // index 1: negative inertia suppresses W, N2 is unreachable, N1 wins
        assert_eq!(msc_apply(&probs, &labels, &m, &cfg).unwrap(), vec![0, 1, 2]);
        // cascading sees N1 -> N2 at index 2, which the N1 row forbids
        let cascade = MscConfig { cascade: true, ..cfg };
        assert_eq!(msc_apply(&probs, &labels, &m, &cascade).unwrap(), vec![0, 1, 0]);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let m = ProcessedMatrix { rows: [[0.2; 5]; 5] };
        assert!(msc_apply(&[[0.2; 5]], &[0, 0], &m, &MscConfig::default()).is_err());
    }
}

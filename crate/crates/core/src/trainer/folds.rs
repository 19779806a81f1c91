use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};

/// One cross-validation fold: a contiguous test span inside every record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub fold: usize,
    pub record_lengths: Vec<usize>,
    pub test_spans: Vec<Range<usize>>,
}

impl FoldPlan {
    /// `(record, epoch)` pairs outside the test spans, in record order.
    pub fn train_indices(&self) -> Vec<(usize, usize)> {
        self.indices(false)
    }

    /// `(record, epoch)` pairs inside the test spans, in time order.
    pub fn test_indices(&self) -> Vec<(usize, usize)> {
        self.indices(true)
    }

    fn indices(&self, test: bool) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (r, (span, &n)) in self.test_spans.iter().zip(&self.record_lengths).enumerate() {
            out.extend((0..n).filter(|e| span.contains(e) == test).map(|e| (r, e)));
        }
        out
    }
}

/// Fold `f` of a record with `N` epochs tests `[⌊f·N/k⌋, ⌊(f+1)·N/k⌋)`.
pub fn make_folds(record_lengths: &[usize], k: usize) -> Result<Vec<FoldPlan>> {
    if k == 0 {
        return Err(Error::InvalidArgument("make_folds: k must be positive".into()));
    }
    if let Some((r, &n)) = record_lengths.iter().enumerate().find(|(_, &n)| n < k) {
        return Err(Error::InvalidArgument(format!(
            "make_folds: record {r} has {n} epochs, fewer than the {k} folds"
        )));
    }
    Ok((0..k)
        .map(|f| FoldPlan {
            fold: f,
            record_lengths: record_lengths.to_vec(),
            test_spans: record_lengths.iter().map(|&n| f * n / k..(f + 1) * n / k).collect(),
        })
        .collect())
}

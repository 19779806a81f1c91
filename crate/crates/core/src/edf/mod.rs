//! EDF/EDF+ reading and writing, sleep-stage annotations, and conversion of a
//! recording into labelled, padded 30-second epochs.

mod annotations;
mod epochs;
mod header;

pub use annotations::{parse_tal, write_tal, Annotation};
pub use epochs::{
    epoch_and_pad, map_stage, pair_recordings, record_id, trim_wake, EpochOptions, EpochRecord, PadMode,
    RecordingPair,
};
pub use header::{parse_header, EdfHeader, SignalHeader, ANNOTATION_LABEL};

use std::path::Path;

use crate::error::{Error, Result};
use crate::stage::Stage;
use crate::store::EpochStore;

/// A parsed file: header plus the raw data-record bytes.
#[derive(Debug, Clone)]
pub struct EdfFile {
    pub header: EdfHeader,
    data: Vec<u8>,
    num_records: usize,
}

impl EdfFile {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let header = parse_header(bytes)?;
        let data = &bytes[header.header_bytes..];
        let rb = header.record_bytes();
        let num_records = if header.num_records < 0 {
            if rb == 0 {
                0
            } else {
                data.len() / rb
            }
        } else {
            header.num_records as usize
        };
        let need = num_records * rb;
        if data.len() < need {
            let have = data.len() / rb.max(1);
            return Err(Error::EdfTruncated {
                what: format!("data record {have} of {num_records}"),
                start: header.header_bytes + data.len(),
                end: header.header_bytes + need,
            });
        }
        Ok(EdfFile {
            data: data[..need].to_vec(),
            header,
            num_records,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read(path)?)
    }

    pub fn num_records(&self) -> usize {
        self.num_records
    }

    fn signal_bytes(&self, signal: usize) -> Result<impl Iterator<Item = &[u8]>> {
        let h = &self.header;
        if signal >= h.signals.len() {
            return Err(Error::InvalidArgument(format!(
                "signal {signal} out of range, the file has {}",
                h.signals.len()
            )));
        }
        let rb = h.record_bytes();
        let offset: usize = h.signals[..signal].iter().map(|s| 2 * s.samples_per_record).sum();
        let width = 2 * h.signals[signal].samples_per_record;
        Ok((0..self.num_records).map(move |r| &self.data[r * rb + offset..r * rb + offset + width]))
    }

    /// Raw 16-bit samples of one signal, all records concatenated.
    pub fn digital(&self, signal: usize) -> Result<Vec<i16>> {
        Ok(self
            .signal_bytes(signal)?
            .flat_map(|rec| rec.chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]])))
            .collect())
    }

    /// Samples of one signal in physical units.
    pub fn physical(&self, signal: usize) -> Result<Vec<f64>> {
        let digital = self.digital(signal)?;
        let h = &self.header.signals[signal];
        Ok(digital.into_iter().map(|d| h.to_physical(d)).collect())
    }

    /// Annotations from every annotation signal, ordered by onset.
    pub fn annotations(&self) -> Result<Vec<Annotation>> {
        let mut out = Vec::new();
        for (i, s) in self.header.signals.iter().enumerate() {
            if s.is_annotation() {
                for block in self.signal_bytes(i)? {
                    out.extend(parse_tal(block)?);
                }
            }
        }
        out.sort_by(|a, b| a.onset.total_cmp(&b.onset));
        Ok(out)
    }
}

/// Reads one PSG/hypnogram pair into a store of labelled, padded epochs.
/// `trim_wake` keeps that many minutes of wake around the sleep period.
pub fn load_recording(
    pair: &RecordingPair,
    channel: &str,
    opts: &EpochOptions,
    trim_wake_minutes: Option<f64>,
) -> Result<EpochStore> {
    if opts.padded_len != crate::store::EPOCH_LEN {
        return Err(Error::Config(format!(
            "epoch stores hold {} samples per epoch, not {}",
            crate::store::EPOCH_LEN,
            opts.padded_len
        )));
    }
    let psg = EdfFile::read(&pair.psg).map_err(|e| with_path(e, &pair.psg))?;
    let Some(index) = psg.header.signal_index(channel) else {
        return Err(Error::UnknownChannel {
            path: pair.psg.clone(),
            requested: channel.to_string(),
            available: psg
                .header
                .signals
                .iter()
                .filter(|s| !s.is_annotation())
                .map(|s| s.label.clone())
                .collect(),
        });
    };
    let signal = psg.physical(index)?;
    let hyp = EdfFile::read(&pair.hypnogram).map_err(|e| with_path(e, &pair.hypnogram))?;
    let annotations = hyp.annotations().map_err(|e| with_path(e, &pair.hypnogram))?;
    let mut epochs = epoch_and_pad(&signal, psg.header.sample_rate(index), &annotations, channel, opts)?;
    if let Some(minutes) = trim_wake_minutes {
        epochs = trim_wake(epochs, minutes);
    }
    let mut store = EpochStore {
        name: pair.id.clone(),
        samples: Vec::with_capacity(epochs.len() * opts.padded_len),
        labels: Vec::with_capacity(epochs.len()),
    };
    for e in epochs {
        store.samples.extend_from_slice(&e.samples);
        store.labels.push(e.stage);
    }
    Ok(store)
}

/// Per-stage epoch counts, keyed by stage name.
pub fn stage_histogram(labels: &[Stage]) -> std::collections::BTreeMap<String, usize> {
    let mut h: std::collections::BTreeMap<String, usize> = Stage::ALL.iter().map(|s| (s.name().to_string(), 0)).collect();
    for s in labels {
        *h.get_mut(s.name()).expect("every stage present") += 1;
    }
    h
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::EdfTruncated { .. } | Error::EdfField { .. } | Error::Tal(_) => Error::Contract {
            path: path.to_path_buf(),
            location: match &e {
                Error::EdfTruncated { start, .. } => format!("byte {start}"),
                Error::EdfField { offset, .. } => format!("byte {offset}"),
                _ => "annotations".into(),
            },
            reason: e.to_string(),
        },
        other => other,
    }
}

/// Serialises a recording. `signals` holds the digital samples of every
/// non-annotation signal in header order; annotations are packed into the
/// annotation signal's records after each record's timekeeping list.
pub fn write_fixture(header: &EdfHeader, signals: &[Vec<i16>], annotations: &[Annotation]) -> Result<Vec<u8>> {
    let bad = |reason: String| Error::InvalidArgument(format!("write_fixture: {reason}"));
    let ns = header.signals.len();
    if header.header_bytes != 256 * (1 + ns) {
        return Err(bad(format!("header_bytes {} for {ns} signals", header.header_bytes)));
    }
    if header.num_records < 0 {
        return Err(bad("num_records must be known".into()));
    }
    let records = header.num_records as usize;
    let ordinary: Vec<usize> = (0..ns).filter(|&i| !header.signals[i].is_annotation()).collect();
    if ordinary.len() != signals.len() {
        return Err(bad(format!("{} sample vectors for {} signals", signals.len(), ordinary.len())));
    }
    for (&i, s) in ordinary.iter().zip(signals) {
        let want = records * header.signals[i].samples_per_record;
        if s.len() != want {
            return Err(bad(format!("signal `{}` has {} samples, expected {want}", header.signals[i].label, s.len())));
        }
    }
    let ann_signal = header.signals.iter().position(|s| s.is_annotation());
    let blocks = match ann_signal {
        Some(i) => pack_annotations(header, records, 2 * header.signals[i].samples_per_record, annotations)?,
        None if annotations.is_empty() => Vec::new(),
        None => return Err(bad("annotations given but the header has no annotation signal".into())),
    };

    let mut out = header::write_header(header)?;
    for r in 0..records {
        let mut next = 0;
        for (i, sig) in header.signals.iter().enumerate() {
            if sig.is_annotation() {
                out.extend_from_slice(&blocks[r]);
            } else {
                let spr = sig.samples_per_record;
                let samples = &signals[next][r * spr..(r + 1) * spr];
                next += 1;
                debug_assert_eq!(ordinary[next - 1], i);
                for v in samples {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

fn pack_annotations(header: &EdfHeader, records: usize, width: usize, annotations: &[Annotation]) -> Result<Vec<Vec<u8>>> {
    let mut blocks = Vec::with_capacity(records);
    let mut pending = annotations.iter().peekable();
    for r in 0..records {
        let mut block = annotations::timekeeping(r as f64 * header.record_duration);
        while let Some(a) = pending.peek() {
            let tal = write_tal(std::slice::from_ref(*a));
            if block.len() + tal.len() > width {
                break;
            }
            block.extend(tal);
            pending.next();
        }
        if block.len() > width {
            return Err(Error::InvalidArgument(format!(
                "write_fixture: annotation record {r} needs {} bytes, only {width} available",
                block.len()
            )));
        }
        block.resize(width, 0);
        blocks.push(block);
    }
    if pending.peek().is_some() {
        return Err(Error::InvalidArgument(
            "write_fixture: annotations do not fit in the annotation signal".into(),
        ));
    }
    Ok(blocks)
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label of the EDF+ annotation pseudo-signal.
pub const ANNOTATION_LABEL: &str = "EDF Annotations";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalHeader {
    pub label: String,
    pub transducer: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub prefiltering: String,
    pub samples_per_record: usize,
    pub reserved: String,
}

impl SignalHeader {
    /// A signal with blank descriptive fields.
    pub fn new(label: &str, physical: (f64, f64), digital: (i32, i32), samples_per_record: usize) -> Self {
        SignalHeader {
            label: label.into(),
            transducer: String::new(),
            physical_dimension: String::new(),
            physical_min: physical.0,
            physical_max: physical.1,
            digital_min: digital.0,
            digital_max: digital.1,
            prefiltering: String::new(),
            samples_per_record,
            reserved: String::new(),
        }
    }

    /// The EDF+ annotation channel, `bytes_per_record` must be even.
    pub fn annotations(bytes_per_record: usize) -> Self {
        SignalHeader::new(ANNOTATION_LABEL, (-1.0, 1.0), (-32768, 32767), bytes_per_record / 2)
    }

    pub fn is_annotation(&self) -> bool {
        self.label == ANNOTATION_LABEL
    }

    /// Affine digital → physical map; both digital extremes land exactly on
    /// the physical extremes.
    pub fn to_physical(&self, digital: i16) -> f64 {
        let d = digital as i32;
        if d == self.digital_max {
            return self.physical_max;
        }
        let span = (self.digital_max - self.digital_min) as f64;
        (d - self.digital_min) as f64 * (self.physical_max - self.physical_min) / span + self.physical_min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdfHeader {
    pub version: String,
    pub patient_id: String,
    pub recording_id: String,
    pub start_date: String,
    pub start_time: String,
    pub header_bytes: usize,
    pub reserved: String,
    /// `-1` while a recording is still in progress.
    pub num_records: i64,
    pub record_duration: f64,
    pub signals: Vec<SignalHeader>,
}

impl EdfHeader {
    /// Header for the given signals with the remaining fields set to blank
    /// defaults and `header_bytes` derived from the signal count.
    pub fn new(num_records: i64, record_duration: f64, signals: Vec<SignalHeader>) -> Self {
        let plus = signals.iter().any(SignalHeader::is_annotation);
        EdfHeader {
            version: "0".into(),
            patient_id: "X X X X".into(),
            recording_id: "Startdate X X X X".into(),
            start_date: "01.01.85".into(),
            start_time: "00.00.00".into(),
            header_bytes: 256 * (1 + signals.len()),
            reserved: if plus { "EDF+C".into() } else { String::new() },
            num_records,
            record_duration,
            signals,
        }
    }

    pub fn signal_index(&self, label: &str) -> Option<usize> {
        self.signals.iter().position(|s| s.label == label)
    }

    /// Bytes in one data record.
    pub fn record_bytes(&self) -> usize {
        self.signals.iter().map(|s| 2 * s.samples_per_record).sum()
    }

    pub fn sample_rate(&self, signal: usize) -> f64 {
        self.signals[signal].samples_per_record as f64 / self.record_duration
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, width: usize, field: &str) -> Result<&'a str> {
        let end = self.pos + width;
        let raw = self.bytes.get(self.pos..end).ok_or_else(|| Error::EdfTruncated {
            what: format!("header field `{field}`"),
            start: self.bytes.len().max(self.pos),
            end,
        })?;
        let s = std::str::from_utf8(raw).map_err(|_| Error::EdfField {
            field: field.into(),
            offset: self.pos,
            reason: "not ASCII".into(),
        })?;
        self.pos = end;
        Ok(s.trim_end_matches(' '))
    }

    fn number<T: std::str::FromStr>(&mut self, width: usize, field: &str) -> Result<T> {
        let offset = self.pos;
        let s = self.take(width, field)?;
        s.trim().parse().map_err(|_| Error::EdfField {
            field: field.into(),
            offset,
            reason: format!("`{s}` is not a number"),
        })
    }
}

pub fn parse_header(bytes: &[u8]) -> Result<EdfHeader> {
    if bytes.len() < 256 {
        return Err(Error::EdfTruncated {
            what: "fixed header".into(),
            start: bytes.len(),
            end: 256,
        });
    }
    let mut c = Cursor { bytes, pos: 0 };
    let version = c.take(8, "version")?.to_string();
    let patient_id = c.take(80, "patient id")?.to_string();
    let recording_id = c.take(80, "recording id")?.to_string();
    let start_date = c.take(8, "start date")?.to_string();
    let start_time = c.take(8, "start time")?.to_string();
    let header_bytes: usize = c.number(8, "header bytes")?;
    let reserved = c.take(44, "reserved")?.to_string();
    let num_records: i64 = c.number(8, "number of records")?;
    let record_duration: f64 = c.number(8, "record duration")?;
    let ns: usize = c.number(4, "number of signals")?;

    let expected = 256 * (1 + ns);
    if header_bytes != expected {
        return Err(Error::EdfField {
            field: "header bytes".into(),
            offset: 184,
            reason: format!("{header_bytes} declared, {expected} expected for {ns} signals"),
        });
    }
    if bytes.len() < expected {
        return Err(Error::EdfTruncated {
            what: format!("signal headers for {ns} signals"),
            start: bytes.len(),
            end: expected,
        });
    }

    let dmin_offset = 256 + 120 * ns;
    let mut cols = |width: usize, field: &str| -> Result<Vec<String>> {
        (0..ns).map(|_| c.take(width, field).map(str::to_string)).collect()
    };
    let labels = cols(16, "label")?;
    let transducers = cols(80, "transducer")?;
    let dims = cols(8, "physical dimension")?;
    let mut nums = |width: usize, field: &str| -> Result<Vec<f64>> {
        (0..ns).map(|_| c.number::<f64>(width, field)).collect()
    };
    let pmin = nums(8, "physical minimum")?;
    let pmax = nums(8, "physical maximum")?;
    let dmin = nums(8, "digital minimum")?;
    let dmax = nums(8, "digital maximum")?;
    let prefilter: Vec<String> = (0..ns).map(|_| c.take(80, "prefiltering").map(str::to_string)).collect::<Result<_>>()?;
    let spr: Vec<usize> = (0..ns).map(|_| c.number(8, "samples per record")).collect::<Result<_>>()?;
    let sig_reserved: Vec<String> = (0..ns).map(|_| c.take(32, "signal reserved").map(str::to_string)).collect::<Result<_>>()?;

    let mut signals = Vec::with_capacity(ns);
    for i in 0..ns {
        let as_int = |v: f64, field: &str| -> Result<i32> {
            if v.fract() == 0.0 && v.abs() <= 32768.0 {
                Ok(v as i32)
            } else {
                Err(Error::EdfField {
                    field: field.into(),
                    offset: dmin_offset,
                    reason: format!("{v} is not a 16-bit integer"),
                })
            }
        };
        let s = SignalHeader {
            label: labels[i].clone(),
            transducer: transducers[i].clone(),
            physical_dimension: dims[i].clone(),
            physical_min: pmin[i],
            physical_max: pmax[i],
            digital_min: as_int(dmin[i], "digital minimum")?,
            digital_max: as_int(dmax[i], "digital maximum")?,
            prefiltering: prefilter[i].clone(),
            samples_per_record: spr[i],
            reserved: sig_reserved[i].clone(),
        };
        if s.digital_max <= s.digital_min || s.physical_max == s.physical_min {
            return Err(Error::EdfField {
                field: format!("signal {i} range"),
                offset: dmin_offset,
                reason: "digital maximum must exceed minimum and the physical range must be non-empty".into(),
            });
        }
        signals.push(s);
    }

    Ok(EdfHeader {
        version,
        patient_id,
        recording_id,
        start_date,
        start_time,
        header_bytes,
        reserved,
        num_records,
        record_duration,
        signals,
    })
}

fn put(out: &mut Vec<u8>, value: &str, width: usize, field: &str) -> Result<()> {
    if value.len() > width || !value.is_ascii() {
        return Err(Error::EdfField {
            field: field.into(),
            offset: out.len(),
            reason: format!("`{value}` does not fit {width} ASCII bytes"),
        });
    }
    out.extend_from_slice(value.as_bytes());
    out.resize(out.len() + width - value.len(), b' ');
    Ok(())
}

pub(crate) fn write_header(h: &EdfHeader) -> Result<Vec<u8>> {
    let ns = h.signals.len();
    let mut out = Vec::with_capacity(256 * (1 + ns));
    put(&mut out, &h.version, 8, "version")?;
    put(&mut out, &h.patient_id, 80, "patient id")?;
    put(&mut out, &h.recording_id, 80, "recording id")?;
    put(&mut out, &h.start_date, 8, "start date")?;
    put(&mut out, &h.start_time, 8, "start time")?;
    put(&mut out, &h.header_bytes.to_string(), 8, "header bytes")?;
    put(&mut out, &h.reserved, 44, "reserved")?;
    put(&mut out, &h.num_records.to_string(), 8, "number of records")?;
    put(&mut out, &h.record_duration.to_string(), 8, "record duration")?;
    put(&mut out, &ns.to_string(), 4, "number of signals")?;
    let s = &h.signals;
    for x in s {
        put(&mut out, &x.label, 16, "label")?;
    }
    for x in s {
        put(&mut out, &x.transducer, 80, "transducer")?;
    }
    for x in s {
        put(&mut out, &x.physical_dimension, 8, "physical dimension")?;
    }
    for x in s {
        put(&mut out, &x.physical_min.to_string(), 8, "physical minimum")?;
    }
    for x in s {
        put(&mut out, &x.physical_max.to_string(), 8, "physical maximum")?;
    }
    for x in s {
        put(&mut out, &x.digital_min.to_string(), 8, "digital minimum")?;
    }
    for x in s {
        put(&mut out, &x.digital_max.to_string(), 8, "digital maximum")?;
    }
    for x in s {
        put(&mut out, &x.prefiltering, 80, "prefiltering")?;
    }
    for x in s {
        put(&mut out, &x.samples_per_record.to_string(), 8, "samples per record")?;
    }
    for x in s {
        put(&mut out, &x.reserved, 32, "signal reserved")?;
    }
    Ok(out)
}

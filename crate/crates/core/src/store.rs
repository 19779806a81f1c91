//! On-disk formats shared by the command-line tools.
//!
//! * epoch store: a directory per record with `epochs.bin` (little-endian
//!   `f32`, [`EPOCH_LEN`] values per epoch) and `labels.csv`
//!   (`epoch_index,stage`);
//! * predictions: `epoch_index,p_W,p_N1,p_N2,p_N3,p_REM`;
//! * transition matrices: 5×5 CSV with stage names on both axes.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::stage::{Stage, NUM_STAGES};
use crate::trainer::Dataset;

pub const EPOCH_LEN: usize = 3072;
pub const EPOCHS_FILE: &str = "epochs.bin";
pub const LABELS_FILE: &str = "labels.csv";

const PRED_HEADER: [&str; 6] = ["epoch_index", "p_W", "p_N1", "p_N2", "p_N3", "p_REM"];

/// One record's epochs and labels, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStore {
    pub name: String,
    pub samples: Vec<f32>,
    pub labels: Vec<Stage>,
}

impl EpochStore {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn epoch(&self, i: usize) -> &[f32] {
        &self.samples[i * EPOCH_LEN..(i + 1) * EPOCH_LEN]
    }

    pub fn label_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|s| s.index()).collect()
    }

    pub fn to_dataset(&self) -> Dataset {
        Dataset {
            epoch_len: EPOCH_LEN,
            samples: self.samples.clone(),
            labels: self.label_indices(),
        }
    }
}

pub fn write_store(dir: &Path, store: &EpochStore) -> Result<()> {
    if store.samples.len() != store.labels.len() * EPOCH_LEN {
        return Err(Error::shape(
            "write_store",
            format!("{} epochs × {EPOCH_LEN}", store.labels.len()),
            store.samples.len(),
        ));
    }
    fs::create_dir_all(dir)?;
    let mut bytes = Vec::with_capacity(4 * store.samples.len());
    for v in &store.samples {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join(EPOCHS_FILE), bytes)?;
    write_labels(&dir.join(LABELS_FILE), &store.labels)
}

pub fn read_store(dir: &Path) -> Result<EpochStore> {
    let bin = dir.join(EPOCHS_FILE);
    let bytes = fs::read(&bin).map_err(|e| open_error(&bin, e))?;
    let epoch_bytes = 4 * EPOCH_LEN;
    if bytes.len() % epoch_bytes != 0 {
        return Err(Error::contract(
            &bin,
            format!("byte {}", bytes.len() - bytes.len() % epoch_bytes),
            format!("trailing partial epoch ({} bytes, epochs are {epoch_bytes})", bytes.len() % epoch_bytes),
        ));
    }
    let mut samples = Vec::with_capacity(bytes.len() / 4);
    for (i, b) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(b.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::contract(&bin, format!("byte {}", 4 * i), "non-finite sample"));
        }
        samples.push(v);
    }
    let labels_path = dir.join(LABELS_FILE);
    let labels = read_labels(&labels_path)?;
    if labels.len() * EPOCH_LEN != samples.len() {
        return Err(Error::contract(
            &labels_path,
            format!("line {}", labels.len() + 1),
            format!("{} labels for {} epochs", labels.len(), samples.len() / EPOCH_LEN),
        ));
    }
    Ok(EpochStore {
        name: dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        samples,
        labels,
    })
}

/// Subdirectories of `root` that hold an epoch store, sorted by name.
pub fn list_stores(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root)? {
        let path = entry?.path();
        if path.join(EPOCHS_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::contract(path, format!("line {line}"), e)
}

fn open_error(path: &Path, e: std::io::Error) -> Error {
    Error::contract(path, "open", e)
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| open_error(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<fs::File>, expected: &[&str]) -> Result<()> {
    let h = rdr.headers().map_err(|e| csv_error(path, e))?;
    if h.iter().ne(expected.iter().copied()) {
        return Err(Error::contract(
            path,
            "line 1",
            format!("header `{}`, expected `{}`", h.iter().collect::<Vec<_>>().join(","), expected.join(",")),
        ));
    }
    Ok(())
}

/// Reads `epoch_index,<cols...>` rows, requiring indices 0, 1, 2, ...
fn indexed_rows(path: &Path, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, header)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let idx: usize = rec[0]
            .parse()
            .map_err(|_| Error::contract(path, format!("line {line}"), format!("bad epoch index `{}`", &rec[0])))?;
        if idx != rows.len() {
            return Err(Error::contract(
                path,
                format!("line {line}"),
                format!("epoch index {idx}, expected {}", rows.len()),
            ));
        }
        rows.push((line, rec));
    }
    Ok(rows)
}

pub fn write_labels(path: &Path, labels: &[Stage]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["epoch_index", "stage"]).map_err(|e| csv_error(path, e))?;
    for (i, s) in labels.iter().enumerate() {
        w.write_record([i.to_string(), s.name().to_string()]).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<Stage>> {
    indexed_rows(path, &["epoch_index", "stage"])?
        .into_iter()
        .map(|(line, rec)| rec[1].parse().map_err(|e: Error| Error::contract(path, format!("line {line}"), e)))
        .collect()
}

pub fn write_predictions(path: &Path, probs: &[[f32; NUM_STAGES]]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(PRED_HEADER).map_err(|e| csv_error(path, e))?;
    for (i, p) in probs.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(p.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<[f32; NUM_STAGES]>> {
    indexed_rows(path, &PRED_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            let mut p = [0.0f32; NUM_STAGES];
            for (k, v) in p.iter_mut().enumerate() {
                *v = rec[k + 1]
                    .parse()
                    .ok()
                    .filter(|v: &f32| v.is_finite() && *v >= 0.0)
                    .ok_or_else(|| {
                        Error::contract(path, format!("line {line}"), format!("bad confidence `{}`", &rec[k + 1]))
                    })?;
            }
            Ok(p)
        })
        .collect()
}

pub fn write_matrix(path: &Path, rows: &[[f64; NUM_STAGES]; NUM_STAGES]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec![String::new()];
    header.extend(Stage::ALL.iter().map(|s| s.name().to_string()));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (s, row) in Stage::ALL.iter().zip(rows) {
        let mut rec = vec![s.name().to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<[[f64; NUM_STAGES]; NUM_STAGES]> {
    let mut rdr = reader(path)?;
    let names: Vec<&str> = std::iter::once("").chain(Stage::ALL.iter().map(|s| s.name())).collect();
    check_header(path, &mut rdr, &names)?;
    let mut rows = [[0.0; NUM_STAGES]; NUM_STAGES];
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let at = |reason: String| Error::contract(path, format!("line {line}"), reason);
        if n >= NUM_STAGES || rec[0] != *Stage::ALL[n].name() {
            return Err(at(format!("row `{}`, expected {}", &rec[0], Stage::ALL.get(n).map_or("end of file", |s| s.name()))));
        }
        for k in 0..NUM_STAGES {
            rows[n][k] = rec[k + 1].parse().map_err(|_| at(format!("bad entry `{}`", &rec[k + 1])))?;
        }
        n += 1;
    }
    if n != NUM_STAGES {
        return Err(Error::contract(path, format!("line {}", n + 2), "matrix has fewer than 5 rows"));
    }
    Ok(rows)
}

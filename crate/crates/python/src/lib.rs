//! Python bindings: model construction, checkpoints and prediction, the
//! sequential corrector, metrics, EDF loading and synthetic data.

use std::path::PathBuf;

use mrnet::edf::{self, EpochOptions, RecordingPair};
use mrnet::msc::{self, Compression, MscConfig, ProcessedMatrix};
use mrnet::network::{self, ModelConfig};
use mrnet::synth::{self, BenchConfig, SynthConfig};
use mrnet::trainer::{self, Dataset};
use mrnet::{Stage, NUM_STAGES};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: mrnet::Error) -> PyErr {
    if e.is_numeric() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn five<T: Copy>(row: &[T], what: &str) -> PyResult<[T; NUM_STAGES]> {
    row.try_into()
        .map_err(|_| PyValueError::new_err(format!("{what}: rows need {NUM_STAGES} entries, got {}", row.len())))
}

/// Staging network in single precision.
#[pyclass(name = "Model")]
struct PyModel {
    inner: network::Model<f32>,
}

#[pymethods]
impl PyModel {
    /// `preset` is "full", "reduced" or "tiny".
    #[new]
    #[pyo3(signature = (preset = "full", seed = 0))]
    fn new(preset: &str, seed: u64) -> PyResult<Self> {
        let config = match preset {
            "full" => ModelConfig::default(),
            "reduced" => ModelConfig::reduced(8),
            "tiny" => ModelConfig::tiny(),
            other => return Err(PyValueError::new_err(format!("unknown preset `{other}`"))),
        };
        Ok(PyModel {
            inner: network::Model::new(config, seed).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (inner, _) = network::load_checkpoint(&path).map_err(to_py)?;
        Ok(PyModel { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        network::save_checkpoint(&path, &self.inner, serde_json::Value::Null).map_err(to_py)
    }

    #[getter]
    fn input_length(&self) -> usize {
        self.inner.config().backbone.input_length
    }

    #[getter]
    fn num_trainable(&self) -> usize {
        self.inner.num_trainable()
    }

    /// `(layer, parameter count)` pairs.
    fn summary(&self) -> Vec<(String, usize)> {
        self.inner.summary().layers.into_iter().map(|l| (l.name, l.params)).collect()
    }

    /// Softmax confidences for each epoch (a list of `input_length` samples).
    #[pyo3(signature = (epochs, batch_size = 64))]
    fn predict(&self, py: Python<'_>, epochs: Vec<Vec<f32>>, batch_size: usize) -> PyResult<Vec<Vec<f32>>> {
        let len = self.input_length();
        let mut data = Dataset {
            epoch_len: len,
            ..Dataset::default()
        };
        for (i, e) in epochs.iter().enumerate() {
            if e.len() != len {
                return Err(PyValueError::new_err(format!("epoch {i} has {} samples, expected {len}", e.len())));
            }
            data.push(e, 0);
        }
        py.detach(|| trainer::predict_dataset(&self.inner, &data, batch_size.max(1)))
            .map_err(to_py)
    }
}

fn compression(name: &str) -> PyResult<Compression> {
    name.parse().map_err(to_py)
}

/// Processed transition matrix from training hypnograms (stage indices 0..5).
#[pyfunction]
#[pyo3(signature = (hypnograms, compression = "log1p", r = 4.2, laplace = false))]
fn fit_transition_matrix(
    hypnograms: Vec<Vec<usize>>,
    compression: &str,
    r: f64,
    laplace: bool,
) -> PyResult<Vec<Vec<f64>>> {
    let g = self::compression(compression)?;
    let counts = msc::count_transitions(&hypnograms).map_err(to_py)?;
    let m = msc::compress(&counts, g, r, laplace).map_err(to_py)?;
    Ok(m.rows.iter().map(|r| r.to_vec()).collect())
}

/// Corrected labels for one record's confidences.
#[pyfunction]
#[pyo3(signature = (probs, matrix, a = 1.5, n = 4, cascade = false))]
fn msc_correct(probs: Vec<Vec<f64>>, matrix: Vec<Vec<f64>>, a: f64, n: usize, cascade: bool) -> PyResult<Vec<usize>> {
    if matrix.len() != NUM_STAGES {
        return Err(PyValueError::new_err(format!("matrix needs {NUM_STAGES} rows")));
    }
    let mut rows = [[0.0; NUM_STAGES]; NUM_STAGES];
    for (dst, src) in rows.iter_mut().zip(&matrix) {
        *dst = five(src, "matrix")?;
    }
    let probs: Vec<[f64; NUM_STAGES]> = probs.iter().map(|p| five(p, "probs")).collect::<PyResult<_>>()?;
    let cfg = MscConfig {
        a,
        n,
        cascade,
        ..MscConfig::default()
    };
    let m = ProcessedMatrix::new(rows).map_err(to_py)?;
    msc::correct(&probs, &m, &cfg).map_err(to_py)
}

/// Accuracy, macro F1, per-class F1, confusion matrix and transition counts.
#[pyfunction]
#[pyo3(signature = (truth, predicted, raw = None))]
fn report<'py>(
    py: Python<'py>,
    truth: Vec<usize>,
    predicted: Vec<usize>,
    raw: Option<Vec<usize>>,
) -> PyResult<Bound<'py, PyDict>> {
    let r = mrnet::metrics::report(&truth, &predicted, raw.as_deref()).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("acc", r.acc)?;
    d.set_item("mf1", r.mf1)?;
    d.set_item("per_class_f1", r.per_class_f1)?;
    d.set_item("confusion", r.confusion.iter().map(|row| row.to_vec()).collect::<Vec<_>>())?;
    d.set_item("transitions_raw", r.transitions_raw)?;
    d.set_item("transitions_corrected", r.transitions_corrected)?;
    Ok(d)
}

/// `(epochs, labels)`: tail-padded 3072-sample epochs from a Markov hypnogram.
#[pyfunction]
#[pyo3(signature = (epochs = 100, seed = 0))]
fn synth_record(epochs: usize, seed: u64) -> PyResult<(Vec<Vec<f32>>, Vec<usize>)> {
    let cfg = SynthConfig {
        epochs_per_record: epochs,
        ..SynthConfig::default()
    };
    let s = synth::synth_record(&cfg, "synthetic", seed).map_err(to_py)?;
    Ok(((0..s.len()).map(|i| s.epoch(i).to_vec()).collect(), s.label_indices()))
}

/// `(epochs, labels)` from a PSG file and its hypnogram.
#[pyfunction]
#[pyo3(signature = (psg, hypnogram, channel = "EEG Fpz-Cz", trim_wake_minutes = None))]
fn load_recording(
    psg: PathBuf,
    hypnogram: PathBuf,
    channel: &str,
    trim_wake_minutes: Option<f64>,
) -> PyResult<(Vec<Vec<f32>>, Vec<usize>)> {
    let pair = RecordingPair {
        id: psg.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        psg,
        hypnogram,
    };
    let s = edf::load_recording(&pair, channel, &EpochOptions::default(), trim_wake_minutes).map_err(to_py)?;
    Ok(((0..s.len()).map(|i| s.epoch(i).to_vec()).collect(), s.label_indices()))
}

/// Raw and corrected accuracy per jittered synthetic record.
#[pyfunction]
#[pyo3(signature = (records = 20, epochs = 1000, jitter = 0.15, seed = 0))]
fn msc_benchmark<'py>(
    py: Python<'py>,
    records: usize,
    epochs: usize,
    jitter: f64,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let bench = BenchConfig {
        records,
        epochs_per_record: epochs,
        jitter_rate: jitter,
        seed,
        ..BenchConfig::default()
    };
    let rows = py
        .detach(|| synth::msc_benchmark(&bench, &synth::DEFAULT_TRANSITIONS, &MscConfig::default()))
        .map_err(to_py)?;
    rows.into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("seed", r.seed)?;
            d.set_item("raw_acc", r.raw_acc)?;
            d.set_item("corrected_acc", r.corrected_acc)?;
            d.set_item("raw_transitions", r.raw_transitions)?;
            d.set_item("corrected_transitions", r.corrected_transitions)?;
            Ok(d)
        })
        .collect()
}

/// Learning rate of the default step schedule at `epoch`.
#[pyfunction]
fn lr_at(epoch: usize) -> PyResult<f64> {
    trainer::lr_at(epoch).map_err(to_py)
}

/// For each fold, the `(start, end)` test span of every record.
#[pyfunction]
#[pyo3(signature = (lengths, k = 10))]
fn make_folds(lengths: Vec<usize>, k: usize) -> PyResult<Vec<Vec<(usize, usize)>>> {
    Ok(trainer::make_folds(&lengths, k)
        .map_err(to_py)?
        .into_iter()
        .map(|f| f.test_spans.into_iter().map(|s| (s.start, s.end)).collect())
        .collect())
}

#[pymodule]
fn pymrnet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("STAGES", Stage::ALL.iter().map(|s| s.name()).collect::<Vec<_>>())?;
    m.add("EPOCH_LEN", mrnet::store::EPOCH_LEN)?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(fit_transition_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(msc_correct, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add_function(wrap_pyfunction!(synth_record, m)?)?;
    m.add_function(wrap_pyfunction!(load_recording, m)?)?;
    m.add_function(wrap_pyfunction!(msc_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(lr_at, m)?)?;
    m.add_function(wrap_pyfunction!(make_folds, m)?)?;
    Ok(())
}

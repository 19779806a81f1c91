use std::collections::BTreeMap;
use std::io::Write;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use log::info;
use mrnet::config::RunConfig;
use mrnet::edf;
use mrnet::metrics::{self, transition_count};
use mrnet::msc::{self, ProcessedMatrix};
use mrnet::network::{self, derive_seed, Model, ModelConfig};
use mrnet::plot::{self, Lane, LaneKind};
use mrnet::stage::argmax;
use mrnet::store::{self, EPOCH_LEN};
use mrnet::synth;
use mrnet::trainer::{self, Dataset};
use mrnet::{Error, Result, Stage, NUM_STAGES};
use serde_json::json;

use crate::io::{self, labels_to_indices, parent_dir, stem};
use crate::ConfigArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Nine residual blocks, taps 768/384/192 on 3072-sample epochs.
    Full,
    /// Three blocks with 8 base channels.
    Reduced,
}

impl ConfigArgs {
    /// Defaults (with `preset`'s model), config file, `--set` pairs, then the
    /// command's own flags.
    pub fn load(&self, preset: Option<Preset>, flags: Vec<(String, String)>) -> Result<RunConfig> {
        let mut base = RunConfig::default();
        if preset == Some(Preset::Reduced) {
            base.model = ModelConfig::reduced(8);
        }
        let mut overrides = Vec::new();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        overrides.extend(flags);
        RunConfig::load_onto(base, self.config.as_deref(), &overrides)
    }
}

pub fn ingest(cfg: &RunConfig, edf_dir: &Path, out: &Path) -> Result<()> {
    let files = io::files_with_extension(edf_dir, "edf")?;
    let pairs = edf::pair_recordings(&files)?;
    if pairs.is_empty() {
        return Err(Error::Contract {
            path: edf_dir.to_path_buf(),
            location: "directory".into(),
            reason: "no *-PSG.edf files".into(),
        });
    }
    let mut records = serde_json::Map::new();
    let mut totals: BTreeMap<String, usize> = Stage::ALL.iter().map(|s| (s.name().to_string(), 0)).collect();
    for pair in &pairs {
        let store = edf::load_recording(pair, &cfg.ingest.channel, &cfg.ingest.epoch, cfg.ingest.trim_wake_minutes)?;
        let hist = edf::stage_histogram(&store.labels);
        for (k, v) in &hist {
            *totals.get_mut(k).unwrap() += v;
        }
        info!("{}: {} epochs", pair.id, store.len());
        store::write_store(&out.join(&pair.id), &store)?;
        records.insert(pair.id.clone(), json!({ "epochs": store.len(), "stages": hist }));
    }
    let total: usize = totals.values().sum();
    let summary = json!({
        "channel": cfg.ingest.channel,
        "records": records,
        "stages": totals,
        "epochs": total,
    });
    io::write_json(&out.join("summary.json"), &summary)?;
    cfg.write_echo(out)
}

pub fn folds(cfg: &RunConfig, stores: &Path, out: &Path) -> Result<()> {
    let labels = io::read_store_labels(stores)?;
    let lengths: Vec<usize> = labels.iter().map(|(_, l)| l.len()).collect();
    let plans = trainer::make_folds(&lengths, cfg.folds.k)?;
    let folds: Vec<_> = plans
        .iter()
        .map(|p| {
            let spans: serde_json::Map<String, serde_json::Value> = labels
                .iter()
                .zip(&p.test_spans)
                .map(|((name, _), s)| (name.clone(), json!([s.start, s.end])))
                .collect();
            json!({ "fold": p.fold, "test_spans": spans })
        })
        .collect();
    let doc = json!({
        "k": cfg.folds.k,
        "records": labels.iter().map(|(n, _)| n).collect::<Vec<_>>(),
        "lengths": lengths,
        "folds": folds,
    });
    io::write_json(out, &doc)?;
    cfg.write_echo(&parent_dir(out))
}

fn dataset(stores: &[store::EpochStore], indices: &[(usize, usize)]) -> Dataset {
    let mut d = Dataset {
        epoch_len: EPOCH_LEN,
        ..Dataset::default()
    };
    for &(r, e) in indices {
        d.push(stores[r].epoch(e), stores[r].labels[e].index());
    }
    d
}

pub fn train(cfg: &RunConfig, stores_dir: &Path, out: &Path, fold: Option<usize>) -> Result<()> {
    if cfg.model.backbone.input_length != EPOCH_LEN {
        return Err(Error::Config(format!(
            "model.backbone.input_length must be {EPOCH_LEN} to train on epoch stores"
        )));
    }
    let stores = io::read_stores(stores_dir)?;
    let lengths: Vec<usize> = stores.iter().map(|s| s.len()).collect();
    let (train_idx, val_idx) = match fold {
        Some(f) => {
            let plans = trainer::make_folds(&lengths, cfg.folds.k)?;
            let plan = plans
                .get(f)
                .ok_or_else(|| Error::Config(format!("fold {f} out of range for folds.k = {}", cfg.folds.k)))?;
            (plan.train_indices(), Some(plan.test_indices()))
        }
        None => (
            lengths.iter().enumerate().flat_map(|(r, &n)| (0..n).map(move |e| (r, e))).collect(),
            None,
        ),
    };
    let train_set = dataset(&stores, &train_idx);
    let val_set = val_idx.map(|v| dataset(&stores, &v));
    info!(
        "training on {} epochs from {} records{}",
        train_set.len(),
        stores.len(),
        val_set.as_ref().map_or(String::new(), |v| format!(", validating on {}", v.len()))
    );

    std::fs::create_dir_all(out)?;
    cfg.write_echo(out)?;
    let mut model = Model::<f32>::new(cfg.model.clone(), cfg.train.seed)?;
    let mut log_file = std::io::BufWriter::new(std::fs::File::create(out.join("train_log.jsonl"))?);
    let logs = trainer::train(&mut model, &train_set, val_set.as_ref(), &cfg.train, |log, _| {
        writeln!(log_file, "{}", serde_json::to_string(log)?)?;
        Ok(ControlFlow::Continue(()))
    })?;
    log_file.flush()?;
    let meta = json!({
        "records": stores.iter().map(|s| s.name.clone()).collect::<Vec<_>>(),
        "fold": fold,
        "folds_k": cfg.folds.k,
        "epochs_trained": logs.len(),
        "train": cfg.train,
    });
    network::save_checkpoint(&out.join("model.mrn"), &model, meta)
}

pub fn predict(cfg: &RunConfig, model_path: &Path, stores_dir: &Path, out: &Path) -> Result<()> {
    let (model, _) = network::load_checkpoint(model_path).map_err(|e| match e {
        Error::Io(io) => Error::Contract {
            path: model_path.to_path_buf(),
            location: "open".into(),
            reason: io.to_string(),
        },
        other => other,
    })?;
    if model.config().backbone.input_length != EPOCH_LEN {
        return Err(Error::Config(format!(
            "{} expects {}-sample epochs, stores hold {EPOCH_LEN}",
            model_path.display(),
            model.config().backbone.input_length
        )));
    }
    std::fs::create_dir_all(out)?;
    for s in io::read_stores(stores_dir)? {
        let probs = trainer::predict_dataset(&model, &s.to_dataset(), cfg.train.batch_size)?;
        let rows: Vec<[f32; NUM_STAGES]> = probs
            .into_iter()
            .map(|p| p.try_into().expect("five confidences"))
            .collect();
        info!("{}: {} epochs predicted", s.name, rows.len());
        store::write_predictions(&out.join(format!("{}.csv", s.name)), &rows)?;
    }
    cfg.write_echo(out)
}

fn read_confidences(path: &Path) -> Result<Vec<[f64; NUM_STAGES]>> {
    Ok(store::read_predictions(path)?
        .into_iter()
        .map(|p| p.map(f64::from))
        .collect())
}

pub fn correct(
    cfg: &RunConfig,
    predictions: &Path,
    train_stores: Option<&Path>,
    matrix: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let fixed = matrix.map(|m| store::read_matrix(m).and_then(ProcessedMatrix::new)).transpose()?;
    let hypnograms: Vec<(String, Vec<usize>)> = match train_stores {
        Some(dir) => io::read_store_labels(dir)?
            .into_iter()
            .map(|(n, l)| (n, labels_to_indices(&l)))
            .collect(),
        None => Vec::new(),
    };
    std::fs::create_dir_all(out.join("matrices"))?;
    for path in io::files_with_extension(predictions, "csv")? {
        let name = stem(&path);
        let probs = read_confidences(&path)?;
        let m = match &fixed {
            Some(m) => m.clone(),
            None => {
                let others: Vec<&[usize]> = hypnograms
                    .iter()
                    .filter(|(n, _)| *n != name)
                    .map(|(_, l)| l.as_slice())
                    .collect();
                let counts = msc::count_transitions(&others)?;
                msc::compress(&counts, cfg.msc.compression, cfg.msc.r, cfg.msc.laplace)?
            }
        };
        let raw: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
        let corrected = msc::msc_apply(&probs, &raw, &m, &cfg.msc)?;
        info!(
            "{name}: transitions {} -> {}, {} epochs changed",
            transition_count(&raw),
            transition_count(&corrected),
            raw.iter().zip(&corrected).filter(|(a, b)| a != b).count()
        );
        let stages: Vec<Stage> = corrected.iter().map(|&i| Stage::ALL[i]).collect();
        store::write_labels(&out.join(format!("{name}.csv")), &stages)?;
        store::write_matrix(&out.join("matrices").join(format!("{name}.csv")), &m.rows)?;
    }
    cfg.write_echo(out)
}

fn corrected_labels(dir: &Path, name: &str) -> Result<Vec<usize>> {
    Ok(labels_to_indices(&store::read_labels(&dir.join(format!("{name}.csv")))?))
}

fn length_mismatch(path: PathBuf, got: usize, want: usize) -> Error {
    Error::Contract {
        path,
        location: format!("line {}", got.min(want) + 2),
        reason: format!("{got} epochs, the record has {want}"),
    }
}

/// Scores whole records, or with `fold` only that fold's held-out span of each record.
pub fn eval(
    cfg: &RunConfig,
    stores: &Path,
    predictions: &Path,
    corrected: Option<&Path>,
    fold: Option<usize>,
    out: &Path,
) -> Result<()> {
    let labels = io::read_store_labels(stores)?;
    let spans: Option<BTreeMap<String, std::ops::Range<usize>>> = match fold {
        Some(f) => {
            let lengths: Vec<usize> = labels.iter().map(|(_, l)| l.len()).collect();
            let plan = trainer::make_folds(&lengths, cfg.folds.k)?
                .into_iter()
                .nth(f)
                .ok_or_else(|| Error::Config(format!("fold {f} out of range for folds.k = {}", cfg.folds.k)))?;
            Some(labels.iter().map(|(n, _)| n.clone()).zip(plan.test_spans).collect())
        }
        None => None,
    };
    let truth_by_name: BTreeMap<String, Vec<usize>> =
        labels.into_iter().map(|(n, l)| (n, labels_to_indices(&l))).collect();
    let (mut truth_all, mut raw_all, mut final_all) = (Vec::new(), Vec::new(), Vec::new());
    let (mut trans_raw, mut trans_corr) = (0, 0);
    let mut per_record = Vec::new();
    for path in io::files_with_extension(predictions, "csv")? {
        let name = stem(&path);
        let truth = truth_by_name.get(&name).ok_or_else(|| Error::Contract {
            path: path.clone(),
            location: "file name".into(),
            reason: format!("no epoch store named `{name}` in {}", stores.display()),
        })?;
        let raw: Vec<usize> = read_confidences(&path)?.iter().map(|p| argmax(p)).collect();
        if raw.len() != truth.len() {
            return Err(length_mismatch(path, raw.len(), truth.len()));
        }
        let fin = match corrected {
            Some(dir) => {
                let c = corrected_labels(dir, &name)?;
                if c.len() != truth.len() {
                    return Err(length_mismatch(dir.join(format!("{name}.csv")), c.len(), truth.len()));
                }
                c
            }
            None => raw.clone(),
        };
        let span = spans.as_ref().map_or(0..truth.len(), |m| m[&name].clone());
        if span.is_empty() {
            continue;
        }
        let (truth, raw, fin) = (&truth[span.clone()], raw[span.clone()].to_vec(), fin[span].to_vec());
        let r = metrics::report(truth, &fin, corrected.map(|_| raw.as_slice()))?;
        trans_raw += r.transitions_raw;
        trans_corr += r.transitions_corrected.unwrap_or(0);
        per_record.push(json!({
            "record": name,
            "epochs": truth.len(),
            "acc": r.acc,
            "mf1": r.mf1,
            "transitions_raw": r.transitions_raw,
            "transitions_corrected": r.transitions_corrected,
        }));
        truth_all.extend_from_slice(truth);
        raw_all.extend(raw);
        final_all.extend(fin);
    }
    if truth_all.is_empty() {
        return Err(Error::Contract {
            path: predictions.to_path_buf(),
            location: "directory".into(),
            reason: "no prediction CSVs".into(),
        });
    }
    // pooled scores; transitions are summed per record so boundaries between
    // records never count as transitions
    let mut report = metrics::report(&truth_all, &final_all, corrected.map(|_| raw_all.as_slice()))?;
    report.transitions_raw = trans_raw;
    report.transitions_corrected = corrected.map(|_| trans_corr);
    let mut doc = serde_json::to_value(&report)?;
    doc["epochs"] = json!(truth_all.len());
    doc["records"] = json!(per_record);
    io::write_json(out, &doc)?;
    info!("acc {:.4}  mf1 {:.4}", report.acc, report.mf1);
    cfg.write_echo(&parent_dir(out))
}

pub fn synth(cfg: &RunConfig, out: &Path, records: usize, as_edf: bool) -> Result<()> {
    std::fs::create_dir_all(out)?;
    for r in 0..records {
        let seed = derive_seed(cfg.synth.seed, r as u64);
        let name = format!("SYN{r:03}");
        if as_edf {
            synth::write_edf_pair(out, &name, &cfg.synth, seed)?;
        } else {
            let s = synth::synth_record(&cfg.synth, &name, seed)?;
            store::write_store(&out.join(&name), &s)?;
        }
    }
    info!("{records} synthetic records written to {}", out.display());
    cfg.write_echo(out)
}

pub fn bench(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let rows = synth::msc_benchmark(&cfg.bench, &cfg.synth.transitions, &cfg.msc)?;
    let mut table = format!("{:>20} {:>9} {:>9} {:>8} {:>8}\n", "seed", "raw acc", "corr acc", "raw tr", "corr tr");
    for r in &rows {
        table += &format!(
            "{:>20} {:>9.4} {:>9.4} {:>8} {:>8}\n",
            r.seed, r.raw_acc, r.corrected_acc, r.raw_transitions, r.corrected_transitions
        );
    }
    let n = rows.len().max(1) as f64;
    let raw = rows.iter().map(|r| r.raw_acc).sum::<f64>() / n;
    let corr = rows.iter().map(|r| r.corrected_acc).sum::<f64>() / n;
    let improved_all = rows.iter().all(|r| r.corrected_acc > r.raw_acc);
    table += &format!("{:>20} {raw:>9.4} {corr:>9.4}   gain {:+.2} pp\n", "mean", 100.0 * (corr - raw));
    // a closed pipe (`mrnet bench | head`) is not an error
    match std::io::stdout().lock().write_all(table.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
        _ => {}
    }
    if let Some(path) = out {
        let doc = json!({
            "rows": rows,
            "mean_raw_acc": raw,
            "mean_corrected_acc": corr,
            "mean_gain_pp": 100.0 * (corr - raw),
            "improved_on_every_seed": improved_all,
        });
        io::write_json(path, &doc)?;
        cfg.write_echo(&parent_dir(path))?;
    }
    Ok(())
}

pub fn plot(
    cfg: &RunConfig,
    stores: &Path,
    predictions: Option<&Path>,
    corrected: Option<&Path>,
    out: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    for (name, truth) in io::read_store_labels(stores)? {
        let mut lanes = vec![Lane {
            kind: LaneKind::Truth,
            labels: labels_to_indices(&truth),
        }];
        if let Some(dir) = predictions {
            let path = dir.join(format!("{name}.csv"));
            if path.is_file() {
                lanes.push(Lane {
                    kind: LaneKind::Raw,
                    labels: read_confidences(&path)?.iter().map(|p| argmax(p)).collect(),
                });
            }
        }
        if let Some(dir) = corrected {
            if dir.join(format!("{name}.csv")).is_file() {
                lanes.push(Lane {
                    kind: LaneKind::Corrected,
                    labels: corrected_labels(dir, &name)?,
                });
            }
        }
        std::fs::write(out.join(format!("{name}.svg")), plot::hypnogram_svg(&name, &lanes, &cfg.plot)?)?;
        std::fs::write(out.join(format!("{name}.txt")), plot::hypnogram_text(&name, &lanes, &cfg.plot)?)?;
        info!("{name}: {} lanes", lanes.len());
    }
    cfg.write_echo(out)
}

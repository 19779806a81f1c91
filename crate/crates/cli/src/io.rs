use std::path::{Path, PathBuf};

use mrnet::store::{self, EpochStore};
use mrnet::{Error, Result, Stage};

fn unreadable(path: &Path, e: std::io::Error) -> Error {
    Error::Contract {
        path: path.to_path_buf(),
        location: "open".into(),
        reason: e.to_string(),
    }
}

/// Regular files in `dir` whose extension matches `ext` (case-insensitive), sorted.
pub fn files_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| unreadable(dir, e))? {
        let path = entry.map_err(|e| unreadable(dir, e))?.path();
        let matches = path
            .extension()
            .is_some_and(|x| x.to_string_lossy().eq_ignore_ascii_case(ext));
        if matches && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn store_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let dirs = store::list_stores(root).map_err(|e| match e {
        Error::Io(io) => unreadable(root, io),
        other => other,
    })?;
    if dirs.is_empty() {
        return Err(Error::Contract {
            path: root.to_path_buf(),
            location: "directory".into(),
            reason: format!("no epoch stores (subdirectories with {})", store::EPOCHS_FILE),
        });
    }
    Ok(dirs)
}

pub fn read_stores(root: &Path) -> Result<Vec<EpochStore>> {
    store_dirs(root)?
        .iter()
        .map(|d| {
            store::read_store(d).map_err(|e| match e {
                Error::Io(io) => unreadable(d, io),
                other => other,
            })
        })
        .collect()
}

/// `(record name, labels)` without loading the samples.
pub fn read_store_labels(root: &Path) -> Result<Vec<(String, Vec<Stage>)>> {
    store_dirs(root)?
        .iter()
        .map(|d| {
            let path = d.join(store::LABELS_FILE);
            let labels = store::read_labels(&path).map_err(|e| match e {
                Error::Io(io) => unreadable(&path, io),
                other => other,
            })?;
            Ok((d.file_name().unwrap().to_string_lossy().into_owned(), labels))
        })
        .collect()
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Directory that receives `config.echo` for an output file.
pub fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

pub fn labels_to_indices(labels: &[Stage]) -> Vec<usize> {
    labels.iter().map(|s| s.index()).collect()
}

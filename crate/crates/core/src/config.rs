//! Run configuration: every module's settings under one tree, addressable by
//! dotted keys such as `msc.r` or `synth.profiles.2.amplitude`.
//!
//! Files are UTF-8 `key = value` lines. Lines whose first non-blank character
//! is `#` are comments (a `#` later in a line is part of the value, so colors
//! like `#1f77b4` work). Values are read as JSON when they parse as JSON and
//! as bare strings otherwise.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::edf::EpochOptions;
use crate::error::{Error, Result};
use crate::msc::MscConfig;
use crate::network::ModelConfig;
use crate::plot::PlotStyle;
use crate::synth::{BenchConfig, SynthConfig};
use crate::trainer::TrainConfig;

/// Environment variable naming a default config file.
pub const CONFIG_ENV: &str = "MRNET_CONFIG";

/// File name of the effective configuration written next to every output.
pub const ECHO_FILE: &str = "config.echo";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    pub channel: String,
    /// Keep at most this many minutes of wake before the first and after the
    /// last sleep epoch; `null` keeps everything.
    pub trim_wake_minutes: Option<f64>,
    pub epoch: EpochOptions,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            channel: "EEG Fpz-Cz".into(),
            trim_wake_minutes: None,
            epoch: EpochOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldConfig {
    pub k: usize,
}

impl Default for FoldConfig {
    fn default() -> Self {
        FoldConfig { k: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub folds: FoldConfig,
    pub msc: MscConfig,
    pub ingest: IngestConfig,
    pub synth: SynthConfig,
    pub bench: BenchConfig,
    pub plot: PlotStyle,
}

fn to_tree(cfg: &RunConfig) -> Value {
    serde_json::to_value(cfg).expect("config serialises")
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

impl RunConfig {
    /// Sets one dotted key. Unknown keys and ill-typed values are errors and
    /// leave the configuration unchanged.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let mut tree = to_tree(self);
        let mut node = &mut tree;
        for part in key.trim().split('.') {
            let next = match node {
                Value::Object(map) => map.get_mut(part),
                Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                _ => None,
            };
            node = next.ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
        }
        *node = parse_value(raw.trim());
        *self = serde_json::from_value(tree).map_err(|e| Error::Config(format!("`{key}` = `{raw}`: {e}")))?;
        Ok(())
    }

    /// Applies `key = value` lines; `origin` is used in error messages.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let contract = |reason: String| Error::Contract {
                path: origin.to_path_buf(),
                location: format!("line {}", i + 1),
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| contract(format!("expected `key = value`, got `{line}`")))?;
            self.set(key.trim(), value.trim()).map_err(|e| contract(e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Contract {
            path: path.to_path_buf(),
            location: "open".into(),
            reason: e.to_string(),
        })?;
        self.apply_text(&text, path)
    }

    /// Defaults, then the config file (`file`, or the one named by
    /// [`CONFIG_ENV`]), then `overrides` in order.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        Self::load_onto(RunConfig::default(), file, overrides)
    }

    /// [`RunConfig::load`] starting from `base` instead of the defaults.
    pub fn load_onto(base: RunConfig, file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = base;
        let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        if let Some(path) = file.map(Path::to_path_buf).or(from_env) {
            cfg.apply_file(&path)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.msc.validate()?;
        self.synth.validate()?;
        if self.folds.k == 0 {
            return Err(Error::Config("folds.k must be at least 1".into()));
        }
        if self.train.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        Ok(())
    }

    /// Every leaf as a sorted `key = value` line; feeding the text back
    /// through [`RunConfig::apply_text`] reproduces the configuration.
    pub fn echo(&self) -> String {
        let mut lines = Vec::new();
        flatten("", &to_tree(self), &mut lines);
        lines.sort();
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    pub fn write_echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(ECHO_FILE), self.echo())?;
        Ok(())
    }

    /// All dotted keys, sorted.
    pub fn keys(&self) -> Vec<String> {
        let mut lines = Vec::new();
        flatten("", &to_tree(self), &mut lines);
        let mut keys: Vec<String> = lines.into_iter().map(|l| l.split(" = ").next().unwrap().to_string()).collect();
        keys.sort();
        keys
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<String>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                flatten(&join(k), child, out);
            }
        }
        Value::Array(items) if items.iter().any(Value::is_object) => {
            for (i, child) in items.iter().enumerate() {
                flatten(&join(&i.to_string()), child, out);
            }
        }
        // bare strings so that `#` colors and labels read naturally
        Value::String(s) if serde_json::from_str::<Value>(s).is_err() && s.trim() == s && !s.is_empty() => {
            out.push(format!("{prefix} = {s}"))
        }
        other => out.push(format!("{prefix} = {other}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msc::Compression;

    #[test]
    fn dotted_keys_reach_every_module() {
        let mut c = RunConfig::default();
        c.set("msc.r", "3.5").unwrap();
        c.set("msc.compression", "log").unwrap();
        c.set("model.backbone.base_channels", "16").unwrap();
        c.set("synth.profiles.2.amplitude", "40").unwrap();
        c.set("ingest.channel", "EEG Pz-Oz").unwrap();
        c.set("ingest.trim_wake_minutes", "30").unwrap();
        c.set("plot.raw_color", "#ff0000").unwrap();
        assert_eq!(c.msc.r, 3.5);
        assert_eq!(c.msc.compression, Compression::Log1p);
        assert_eq!(c.model.backbone.base_channels, 16);
        assert_eq!(c.synth.profiles[2].amplitude, 40.0);
        assert_eq!(c.ingest.channel, "EEG Pz-Oz");
        assert_eq!(c.ingest.trim_wake_minutes, Some(30.0));
        assert_eq!(c.plot.raw_color, "#ff0000");
    }

    #[test]
    fn unknown_keys_and_bad_types_fail_without_side_effects() {
        let mut c = RunConfig::default();
        assert!(c.set("msc.q", "1").unwrap_err().to_string().contains("unknown key `msc.q`"));
        assert!(c.set("msc.r.x", "1").is_err());
        assert!(c.set("msc.n", "four").is_err());
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn file_errors_carry_line_numbers() {
        let mut c = RunConfig::default();
        let text = "# comment\nmsc.a = 2\n\nmsc.nope = 1\n";
        let err = c.apply_text(text, Path::new("run.cfg")).unwrap_err().to_string();
        assert!(err.starts_with("run.cfg: line 4:"), "{err}");
        let err = c.apply_text("just words", Path::new("x")).unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.set("train.seed", "99").unwrap();
        c.set("plot.truth_color", "#123456").unwrap();
        c.set("ingest.channel", "EEG Fpz-Cz").unwrap();
        let text = c.echo();
        assert!(text.contains("msc.r = 4.2\n"));
        assert!(text.contains("plot.truth_color = #123456\n"));
        let mut back = RunConfig::default();
        back.apply_text(&text, Path::new("echo")).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.keys().len(), text.lines().count());
    }

    #[test]
    fn overrides_win_over_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.cfg");
        std::fs::write(&path, "msc.r = 2\nmsc.a = 2\n").unwrap();
        let c = RunConfig::load(Some(&path), &[("msc.r".into(), "3".into())]).unwrap();
        assert_eq!((c.msc.r, c.msc.a), (3.0, 2.0));
    }
}

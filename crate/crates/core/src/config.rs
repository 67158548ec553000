//! Run configuration: model family, architecture overrides, training
//! settings and exactly one data source, read from JSON.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{generate_synthetic, load_idx, split, LabeledDataset, SynthTaskSpec};
use crate::error::{Error, Result};
use crate::models::{family_spec, ArchConfig, ModelFamily, NetworkSpec};
use crate::train::TrainConfig;

/// Explicit IDX image/label files. Without a test pair the test split is
/// carved out of the training files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSource {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Generated in memory.
    Synthetic(SynthTaskSpec),
    Idx(IdxSource),
    /// A directory written by `synth-data`.
    Dir(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub val_fraction: f64,
    /// Only used when the source has no separate test files.
    pub test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            val_fraction: 0.15,
            test_fraction: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub family: ModelFamily,
    pub arch: ArchConfig,
    /// `train.seed` is replaced by the run seed.
    pub train: TrainConfig,
    pub data: DataSource,
    pub splits: SplitConfig,
    pub output_dir: PathBuf,
    /// Drives weight init, dropout, shuffling and splitting.
    pub seed: u64,
}

/// Train, validation and test partitions.
#[derive(Clone, Debug)]
pub struct RunData {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

const FIELDS: [&str; 7] = ["family", "arch", "train", "data", "splits", "output_dir", "seed"];
const REQUIRED: [&str; 3] = ["family", "data", "output_dir"];
const SOURCES: [&str; 3] = ["synthetic", "idx", "dir"];

fn field<T: DeserializeOwned>(obj: &serde_json::Map<String, Value>, key: &str, errs: &mut Vec<String>) -> Option<T> {
    let v = obj.get(key)?;
    serde_json::from_value(v.clone())
        .map_err(|e| errs.push(format!("{key}: {e}")))
        .ok()
}

impl RunConfig {
    /// Checks a JSON document field by field and reports every offending
    /// field at once as [`Error::Schema`].
    pub fn from_value(value: &Value) -> Result<Self> {
        let Some(obj) = value.as_object() else {
            return Err(Error::Schema(vec!["<root>: expected a JSON object".into()]));
        };
        let mut errs = Vec::new();
        for key in obj.keys() {
            if !FIELDS.contains(&key.as_str()) {
                errs.push(format!("{key}: unknown field"));
            }
        }
        for key in REQUIRED {
            if !obj.contains_key(key) {
                errs.push(format!("{key}: missing required field"));
            }
        }
        if let Some(data) = obj.get("data") {
            match data.as_object() {
                Some(d) if d.len() == 1 && SOURCES.contains(&d.keys().next().unwrap().as_str()) => {}
                _ => errs.push(format!(
                    "data: expected an object with exactly one of {}",
                    SOURCES.map(|s| format!("`{s}`")).join(", ")
                )),
            }
        }
        let family = field(obj, "family", &mut errs);
        let arch = field(obj, "arch", &mut errs);
        let train = field(obj, "train", &mut errs);
        let data = if errs.iter().any(|e| e.starts_with("data:")) {
            None
        } else {
            field(obj, "data", &mut errs)
        };
        let splits = field(obj, "splits", &mut errs);
        let output_dir = field(obj, "output_dir", &mut errs);
        let seed = field(obj, "seed", &mut errs);
        if !errs.is_empty() {
            return Err(Error::Schema(errs));
        }
        let cfg = RunConfig {
            family: family.unwrap(),
            arch: arch.unwrap_or_default(),
            train: train.unwrap_or_default(),
            data: data.unwrap(),
            splits: splits.unwrap_or_default(),
            output_dir: output_dir.unwrap(),
            seed: seed.unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| Error::Schema(vec![format!("<root>: {e}")]))?;
        Self::from_value(&value)
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        match &mut self.data {
            DataSource::Synthetic(_) => {}
            DataSource::Dir(d) => fix(d),
            DataSource::Idx(s) => {
                fix(&mut s.train_images);
                fix(&mut s.train_labels);
                if let Some(p) = &mut s.test_images {
                    fix(p);
                }
                if let Some(p) = &mut s.test_labels {
                    fix(p);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        let SplitConfig {
            val_fraction: v,
            test_fraction: t,
        } = self.splits;
        if !(v > 0.0 && t >= 0.0 && v + t < 1.0) {
            return Err(Error::Config(format!(
                "splits need 0 < val_fraction, 0 <= test_fraction and a sum below 1, got {v} and {t}"
            )));
        }
        match &self.data {
            DataSource::Synthetic(s) => s.validate(),
            DataSource::Idx(s) if s.test_images.is_some() != s.test_labels.is_some() => Err(
                Error::Config("idx source: give both test_images and test_labels or neither".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Train config with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// Loads or generates the data and splits it.
    pub fn load_data(&self) -> Result<RunData> {
        let (pool, test) = match &self.data {
            DataSource::Synthetic(s) => (generate_synthetic(s)?, None),
            DataSource::Dir(dir) => {
                let (train, test) = load_data_dir(dir)?;
                (train, Some(test))
            }
            DataSource::Idx(s) => {
                let n = s.class_names.as_ref().map(Vec::len);
                let mut train = load_idx(&s.train_images, &s.train_labels, n)?;
                let mut test = match (&s.test_images, &s.test_labels) {
                    (Some(i), Some(l)) => Some(load_idx(i, l, n)?),
                    _ => None,
                };
                if n.is_none() {
                    let k = train.n_classes().max(test.as_ref().map_or(0, |t| t.n_classes()));
                    train = train.with_class_count(k)?;
                    test = test.map(|t| t.with_class_count(k)).transpose()?;
                }
                if let Some(names) = &s.class_names {
                    train = train.with_class_names(names.clone())?;
                    test = test.map(|t| t.with_class_names(names.clone())).transpose()?;
                }
                (train, test)
            }
        };
        let SplitConfig {
            val_fraction: v,
            test_fraction: t,
        } = self.splits;
        match test {
            Some(test) => {
                let mut parts = split(&pool, &[1.0 - v, v], self.seed)?.into_iter();
                Ok(RunData {
                    train: parts.next().unwrap().with_split_tag("train"),
                    val: parts.next().unwrap().with_split_tag("val"),
                    test: test.with_split_tag("test"),
                })
            }
            None => {
                let mut parts = split(&pool, &[1.0 - v - t, v, t], self.seed)?.into_iter();
                Ok(RunData {
                    train: parts.next().unwrap(),
                    val: parts.next().unwrap(),
                    test: parts.next().unwrap(),
                })
            }
        }
    }

    /// Network for this run on images of `input_shape`.
    pub fn network_spec(&self, input_shape: [usize; 3], n_classes: usize) -> Result<NetworkSpec> {
        family_spec(self.family, input_shape, n_classes, &self.arch, self.seed)
    }

    /// Image shape and class count without loading the full data when the
    /// source is synthetic.
    pub fn data_shape(&self) -> Result<([usize; 3], usize)> {
        match &self.data {
            DataSource::Synthetic(s) => Ok(([s.size, s.size, 1], s.task.n_classes())),
            _ => {
                let d = self.load_data()?;
                Ok((d.train.image_shape(), d.train.n_classes()))
            }
        }
    }
}

/// Manifest written next to the IDX files by `synth-data`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub generator: SynthTaskSpec,
    pub class_names: Vec<String>,
    pub test_fraction: f64,
    pub files: Vec<ManifestFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub name: String,
    pub split: String,
    pub count: usize,
    /// Lowercase hex SHA-256 of the file bytes.
    pub sha256: String,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn idx_file_names(split: &str) -> (String, String) {
    (format!("{split}-images.idx"), format!("{split}-labels.idx"))
}

pub fn read_manifest(dir: &Path) -> Result<DataManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// One split (`train` or `test`) of a `synth-data` directory. Class names
/// come from the manifest when there is one.
pub fn load_data_split(dir: &Path, split: &str, n_classes: Option<usize>) -> Result<LabeledDataset> {
    let (img, lbl) = idx_file_names(split);
    let names = match dir.join(MANIFEST_FILE).exists() {
        true => Some(read_manifest(dir)?.class_names),
        false => None,
    };
    let n = names.as_ref().map(Vec::len).or(n_classes);
    let data = load_idx(dir.join(img), dir.join(lbl), n)?;
    let data = match names {
        Some(names) => data.with_class_names(names)?,
        None => data,
    };
    Ok(data.with_split_tag(split))
}

fn load_data_dir(dir: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
    let train = load_data_split(dir, "train", None)?;
    let test = load_data_split(dir, "test", Some(train.n_classes()))?;
    let k = train.n_classes().max(test.n_classes());
    Ok((train.with_class_count(k)?, test.with_class_count(k)?))
}

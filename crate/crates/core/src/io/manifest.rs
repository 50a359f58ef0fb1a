use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{decode_container, load_dataset, load_model, save_dataset, save_model, DATASET_MAGIC, FORMAT_VERSION, MODEL_MAGIC};
use crate::error::{Error, Result};
use crate::eval::ZooEntry;
use crate::nn::{LabeledDataset, Network};
use crate::zoo::ZooModel;

/// One model of a manifest. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub model_id: String,
    pub model: PathBuf,
    /// Training set the data-dependent measures are evaluated on.
    pub dataset: PathBuf,
    /// Strings, integers or booleans; floats are rejected as non-discrete.
    pub hyperparams: BTreeMap<String, Value>,
    pub train_error: f64,
    pub test_error: f64,
    #[serde(default)]
    pub measure_values: BTreeMap<String, f64>,
}

impl ManifestEntry {
    pub fn to_zoo_entry(&self) -> Result<ZooEntry> {
        let hyperparams = self
            .hyperparams
            .iter()
            .map(|(k, v)| {
                let tag = match v {
                    Value::String(s) => s.clone(),
                    Value::Bool(b) => b.to_string(),
                    Value::Number(n) if n.is_i64() || n.is_u64() => n.to_string(),
                    _ => return Err(Error::NonDiscreteHyperparam { key: k.clone() }),
                };
                Ok((k.clone(), tag))
            })
            .collect::<Result<_>>()?;
        Ok(ZooEntry {
            model_id: self.model_id.clone(),
            hyperparams,
            train_error: self.train_error,
            test_error: self.test_error,
            measure_values: self.measure_values.clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZooManifest {
    pub format_version: u32,
    /// Free-form description of how the zoo was produced.
    pub task: Value,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl ZooManifest {
    pub fn new(task: Value, entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            task,
            entries,
            base_dir: base_dir.into(),
        }
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, relative: &Path) -> PathBuf {
        self.base_dir.join(relative)
    }

    /// Parses a manifest without touching the files it references.
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut m: ZooManifest = serde_json::from_str(text)?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: m.format_version,
                expected: FORMAT_VERSION,
            });
        }
        m.base_dir = base_dir.into();
        m.zoo_entries()?;
        Ok(m)
    }

    /// Loads a manifest and checksum-verifies every model and dataset file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self::from_json(&std::fs::read_to_string(path)?, base)?;
        for e in &m.entries {
            decode_container(MODEL_MAGIC, &std::fs::read(m.resolve(&e.model))?)?;
        }
        let datasets: std::collections::BTreeSet<&PathBuf> = m.entries.iter().map(|e| &e.dataset).collect();
        for d in datasets {
            decode_container(DATASET_MAGIC, &std::fs::read(m.resolve(d))?)?;
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Entries in scoring form; checks uniform keys and discrete tags.
    pub fn zoo_entries(&self) -> Result<Vec<ZooEntry>> {
        let entries = self
            .entries
            .iter()
            .map(ManifestEntry::to_zoo_entry)
            .collect::<Result<Vec<_>>>()?;
        crate::eval::hyperparam_keys(&entries)?;
        Ok(entries)
    }
}

/// Writes `models/<id>.ggm`, `data/train-<k>.ggd` and `manifest.json`
/// under `dir`. Models sharing a training set share one dataset file.
pub fn write_zoo(dir: impl AsRef<Path>, task: Value, models: &[ZooModel]) -> Result<ZooManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("models"))?;
    std::fs::create_dir_all(dir.join("data"))?;
    let mut written: Vec<(Arc<LabeledDataset<f32>>, PathBuf)> = Vec::new();
    let mut entries = Vec::with_capacity(models.len());
    for m in models {
        let dataset = match written.iter().find(|(d, _)| Arc::ptr_eq(d, &m.train_data)) {
            Some((_, p)) => p.clone(),
            None => {
                let rel = PathBuf::from(format!("data/train-{}.ggd", written.len()));
                save_dataset(&m.train_data, dir.join(&rel))?;
                written.push((Arc::clone(&m.train_data), rel.clone()));
                rel
            }
        };
        let model = PathBuf::from(format!("models/{}.ggm", m.entry.model_id));
        save_model(&m.network, dir.join(&model))?;
        entries.push(ManifestEntry {
            model_id: m.entry.model_id.clone(),
            model,
            dataset,
            hyperparams: m
                .entry
                .hyperparams
                .iter()
                .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                .collect(),
            train_error: m.entry.train_error,
            test_error: m.entry.test_error,
            measure_values: m.entry.measure_values.clone(),
        });
    }
    let manifest = ZooManifest::new(task, entries, dir);
    manifest.save(dir.join("manifest.json"))?;
    Ok(manifest)
}

/// A loaded zoo member: scoring entry, network and training set.
pub type LoadedModel = (ZooEntry, Network<f32>, Arc<LabeledDataset<f32>>);

/// Loads every network and training set; identical dataset paths are
/// loaded once and shared.
pub fn load_zoo_models(manifest: &ZooManifest) -> Result<Vec<LoadedModel>> {
    let entries = manifest.zoo_entries()?;
    let mut cache: BTreeMap<PathBuf, Arc<LabeledDataset<f32>>> = BTreeMap::new();
    let mut out = Vec::with_capacity(entries.len());
    for (entry, m) in entries.into_iter().zip(&manifest.entries) {
        let data = match cache.get(&m.dataset) {
            Some(d) => Arc::clone(d),
            None => {
                let d = Arc::new(load_dataset(manifest.resolve(&m.dataset))?);
                cache.insert(m.dataset.clone(), Arc::clone(&d));
                d
            }
        };
        let net = load_model(manifest.resolve(&m.model))?;
        data.check_compatible(&net)?;
        out.push((entry, net, data));
    }
    Ok(out)
}

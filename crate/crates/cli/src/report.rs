//! JSON reports and their flat CSV counterparts.
//!
//! Struct fields serialize in declaration order and free-form maps are
//! `BTreeMap`s, so two reports from the same inputs differ only in their
//! `wall_time_s` fields.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use gengap_core::zoo::ZooPlan;
use gengap_core::CmiScore;
use serde::Serialize;

use crate::measures::{MeasureName, MeasureOutcome, MeasureSettings};

#[derive(Clone, Debug, Serialize)]
pub struct ModelSummary {
    pub affine_layers: usize,
    pub num_classes: usize,
    pub parameters: usize,
    pub examples: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct MeasureReport {
    pub model: String,
    pub data: String,
    pub summary: ModelSummary,
    pub settings: MeasureSettings,
    pub measures: Vec<MeasureOutcome>,
    pub wall_time_s: f64,
}

impl MeasureReport {
    pub fn has_failures(&self) -> bool {
        self.measures.iter().any(|m| m.error.is_some())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScoreSection {
    pub measure: MeasureName,
    pub models: usize,
    pub score: Option<CmiScore>,
    /// Kendall's tau-b between measure and gap across the whole zoo.
    pub kendall_tau: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScoreReport {
    pub manifest: String,
    pub max_condition_size: usize,
    pub sections: Vec<ScoreSection>,
}

impl ScoreReport {
    pub fn has_failures(&self) -> bool {
        self.sections.iter().any(|s| s.error.is_some())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ZooModelRow {
    pub model_id: String,
    pub hyperparams: BTreeMap<String, String>,
    pub train_error: f64,
    pub test_error: f64,
    pub gap: f64,
    pub reached_target: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GenZooReport {
    pub manifest: String,
    pub plan: ZooPlan,
    pub models: Vec<ZooModelRow>,
    /// Population standard deviation of the generalization gap.
    pub gap_std: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelMeasures {
    pub model_id: String,
    pub measures: Vec<MeasureOutcome>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AllReport {
    pub zoo: GenZooReport,
    pub settings: MeasureSettings,
    pub per_model: Vec<ModelMeasures>,
    pub scores: ScoreReport,
    pub wall_time_s: f64,
}

impl AllReport {
    pub fn has_failures(&self) -> bool {
        self.per_model.iter().flat_map(|m| &m.measures).any(|o| o.error.is_some()) || self.scores.has_failures()
    }

    /// Measure value of `model_id`, if it was computed.
    pub fn value(&self, model_id: &str, measure: MeasureName) -> Option<f64> {
        self.per_model
            .iter()
            .find(|m| m.model_id == model_id)?
            .measures
            .iter()
            .find(|o| o.measure == measure)?
            .value
    }
}

pub fn write_json<T: Serialize>(report: &T, path: Option<&Path>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finish(w: csv::Writer<std::fs::File>, path: &Path) -> anyhow::Result<()> {
    w.into_inner()
        .map_err(|e| anyhow::anyhow!("{e}"))
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn measure_csv(report: &MeasureReport, path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["measure", "value", "error", "wall_time_s"])?;
    for m in &report.measures {
        w.write_record([
            m.measure.as_str(),
            &opt(m.value),
            m.error.as_deref().unwrap_or(""),
            &m.wall_time_s.to_string(),
        ])?;
    }
    finish(w, path)
}

pub fn score_csv(report: &ScoreReport, path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["measure", "models", "score", "min_subset", "kendall_tau", "error"])?;
    for s in &report.sections {
        w.write_record([
            s.measure.as_str(),
            &s.models.to_string(),
            &opt(s.score.as_ref().map(|c| c.score)),
            &s.score.as_ref().map(|c| c.min_subset.join("+")).unwrap_or_default(),
            &opt(s.kendall_tau),
            s.error.as_deref().unwrap_or(""),
        ])?;
    }
    finish(w, path)
}

pub fn zoo_csv(report: &GenZooReport, path: &Path) -> anyhow::Result<()> {
    let keys: Vec<&String> = report.models.first().map(|m| m.hyperparams.keys().collect()).unwrap_or_default();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["model_id"];
    header.extend(keys.iter().map(|k| k.as_str()));
    header.extend(["train_error", "test_error", "gap", "reached_target"]);
    w.write_record(&header)?;
    for m in &report.models {
        let mut row = vec![m.model_id.clone()];
        row.extend(keys.iter().map(|k| m.hyperparams[*k].clone()));
        row.extend([
            m.train_error.to_string(),
            m.test_error.to_string(),
            m.gap.to_string(),
            m.reached_target.to_string(),
        ]);
        w.write_record(&row)?;
    }
    finish(w, path)
}

/// One row per model: errors, gap and every measure value (empty on error).
pub fn all_csv(report: &AllReport, measures: &[MeasureName], path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["model_id", "train_error", "test_error", "gap"];
    header.extend(measures.iter().map(|m| m.as_str()));
    w.write_record(&header)?;
    for m in &report.zoo.models {
        let mut row = vec![m.model_id.clone(), m.train_error.to_string(), m.test_error.to_string(), m.gap.to_string()];
        row.extend(measures.iter().map(|&name| opt(report.value(&m.model_id, name))));
        w.write_record(&row)?;
    }
    finish(w, path)
}

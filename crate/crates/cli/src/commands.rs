use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use gengap_core::io::{load_dataset, load_model, write_zoo, ZooManifest};
use gengap_core::zoo::{build_plan, ZooModel, ZooPlan};
use gengap_core::{conditional_mi_score, generalization_gap, rank_correlation, ZooEntry};
use rayon::prelude::*;

use crate::measures::{compute_measures, MeasureName, MeasureSettings};
use crate::report::{
    AllReport, GenZooReport, MeasureReport, ModelMeasures, ModelSummary, ScoreReport, ScoreSection, ZooModelRow,
};

/// Runs `f` on a pool of `workers` threads (0 picks the machine's
/// parallelism).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> anyhow::Result<R> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    Ok(pool.install(f))
}

/// Loads one model and dataset and evaluates `measures` in f64. Load
/// failures are fatal; measure failures are recorded per measure.
pub fn run_measure(
    model: &Path,
    data: &Path,
    measures: &[MeasureName],
    settings: &MeasureSettings,
) -> anyhow::Result<MeasureReport> {
    let start = Instant::now();
    let net = load_model(model).with_context(|| format!("loading model {}", model.display()))?;
    let dataset = load_dataset(data).with_context(|| format!("loading dataset {}", data.display()))?;
    dataset.check_compatible(&net).context("model and dataset do not fit together")?;
    let (net, dataset) = (net.cast::<f64>(), dataset.cast::<f64>());
    let outcomes = compute_measures(&net, &dataset, measures, settings);
    Ok(MeasureReport {
        model: model.display().to_string(),
        data: data.display().to_string(),
        summary: ModelSummary {
            affine_layers: net.depth(),
            num_classes: net.num_classes(),
            parameters: net.parameter_count(),
            examples: dataset.len(),
        },
        settings: *settings,
        measures: outcomes,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// One independent section per measure.
pub fn score_entries(entries: &[ZooEntry], measures: &[MeasureName], max_condition_size: usize) -> Vec<ScoreSection> {
    measures
        .iter()
        .map(|&m| {
            let scored = conditional_mi_score(entries, m.as_str(), max_condition_size)
                .and_then(|s| Ok((s, rank_correlation(entries, m.as_str())?)));
            match scored {
                Ok((score, tau)) => ScoreSection {
                    measure: m,
                    models: entries.len(),
                    score: Some(score),
                    kendall_tau: Some(tau),
                    error: None,
                },
                Err(e) => ScoreSection {
                    measure: m,
                    models: entries.len(),
                    score: None,
                    kendall_tau: None,
                    error: Some(match e {
                        gengap_core::Error::MissingMeasure { .. } => {
                            format!("{e}; run `gengap measure` (or `gengap all`) to fill them in")
                        }
                        _ => e.to_string(),
                    }),
                },
            }
        })
        .collect()
}

/// Known measures present on at least one manifest entry, in canonical order.
pub fn measures_in(entries: &[ZooEntry]) -> Vec<MeasureName> {
    MeasureName::ALL
        .into_iter()
        .filter(|m| entries.iter().any(|e| e.measure_values.contains_key(m.as_str())))
        .collect()
}

pub fn run_score(
    manifest_path: &Path,
    measures: Option<&[MeasureName]>,
    max_condition_size: usize,
) -> anyhow::Result<ScoreReport> {
    let manifest =
        ZooManifest::load(manifest_path).with_context(|| format!("loading manifest {}", manifest_path.display()))?;
    let entries = manifest.zoo_entries()?;
    let measures = match measures {
        Some(m) => m.to_vec(),
        None => {
            let found = measures_in(&entries);
            anyhow::ensure!(
                !found.is_empty(),
                "manifest has no measure values; pass --measures or run `gengap all` first"
            );
            found
        }
    };
    Ok(ScoreReport {
        manifest: manifest_path.display().to_string(),
        max_condition_size,
        sections: score_entries(&entries, &measures, max_condition_size),
    })
}

fn zoo_report(plan: &ZooPlan, models: &[ZooModel], manifest: &Path, secs: f64) -> GenZooReport {
    let rows: Vec<ZooModelRow> = models
        .iter()
        .map(|m| ZooModelRow {
            model_id: m.entry.model_id.clone(),
            hyperparams: m.entry.hyperparams.clone(),
            train_error: m.entry.train_error,
            test_error: m.entry.test_error,
            gap: generalization_gap(&m.entry),
            reached_target: m.reached_target,
        })
        .collect();
    let n = rows.len().max(1) as f64;
    let mean = rows.iter().map(|r| r.gap).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r.gap - mean).powi(2)).sum::<f64>() / n;
    let unfit = rows.iter().filter(|r| !r.reached_target).count();
    if unfit > 0 {
        log::warn!("{unfit} of {} models did not reach the target training accuracy", rows.len());
    }
    GenZooReport {
        manifest: manifest.display().to_string(),
        plan: plan.clone(),
        models: rows,
        gap_std: var.sqrt(),
        wall_time_s: secs,
    }
}

fn task_descriptor(plan: &ZooPlan) -> serde_json::Value {
    serde_json::to_value(plan).expect("plans serialize")
}

/// Trains the plan and writes models, datasets and `manifest.json` to `dir`.
pub fn run_gen_zoo(plan: &ZooPlan, dir: &Path) -> anyhow::Result<(GenZooReport, Vec<ZooModel>)> {
    let start = Instant::now();
    let models = build_plan(plan).context("training the zoo")?;
    write_zoo(dir, task_descriptor(plan), &models).with_context(|| format!("writing zoo to {}", dir.display()))?;
    let report = zoo_report(plan, &models, &dir.join("manifest.json"), start.elapsed().as_secs_f64());
    Ok((report, models))
}

/// Generates the zoo, evaluates every measure on every model, stores the
/// values in the manifest and scores each measure.
pub fn run_all(
    plan: &ZooPlan,
    measures: &[MeasureName],
    settings: &MeasureSettings,
    max_condition_size: usize,
    dir: &Path,
) -> anyhow::Result<AllReport> {
    let start = Instant::now();
    let (zoo, mut models) = run_gen_zoo(plan, dir)?;
    let per_model: Vec<ModelMeasures> = models
        .par_iter()
        .map(|m| {
            let net = m.network.cast::<f64>();
            let data = m.train_data.cast::<f64>();
            ModelMeasures {
                model_id: m.entry.model_id.clone(),
                measures: compute_measures(&net, &data, measures, settings),
            }
        })
        .collect();
    for (m, row) in models.iter_mut().zip(&per_model) {
        m.entry.measure_values = row
            .measures
            .iter()
            .filter_map(|o| Some((o.measure.as_str().to_string(), o.value?)))
            .collect::<BTreeMap<_, _>>();
    }
    let manifest_path = dir.join("manifest.json");
    write_zoo(dir, task_descriptor(plan), &models)?;
    let entries: Vec<ZooEntry> = models.iter().map(|m| m.entry.clone()).collect();
    let scores = ScoreReport {
        manifest: manifest_path.display().to_string(),
        max_condition_size,
        sections: score_entries(&entries, measures, max_condition_size),
    };
    Ok(AllReport {
        zoo,
        settings: *settings,
        per_model,
        scores,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

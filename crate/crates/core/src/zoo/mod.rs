//! Desk-scale model zoos: synthetic tasks, a plain SGD trainer and
//! hyperparameter sweeps.

mod task;
mod train;

pub use task::{generate_task, generate_task_with_clean_labels, SyntheticTaskSpec, TaskGenerator, TaskSplit};
pub use train::{error_rate, init_mlp, train_model, TrainConfig, TrainedModel};

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ZooEntry;
use crate::nn::{LabeledDataset, Network};

/// A trained zoo member with the training data its measures are computed on.
#[derive(Clone, Debug)]
pub struct ZooModel {
    pub entry: ZooEntry,
    pub network: Network<f32>,
    pub train_data: Arc<LabeledDataset<f32>>,
    pub reached_target: bool,
}

fn format_tag(v: f64) -> String {
    format!("{v}")
}

/// Trains every config of `sweep` on `task` and tags the results with
/// depth, width, label noise and learning rate.
pub fn build_zoo(task: &SyntheticTaskSpec, sweep: &[TrainConfig]) -> Result<Vec<ZooModel>> {
    if sweep.len() < 2 {
        return Err(Error::InvalidConfig("a zoo sweep needs at least two configs".into()));
    }
    let (train, test) = generate_task(task)?;
    let train = Arc::new(train);
    sweep
        .par_iter()
        .map(|cfg| {
            let trained = train_model(&train, &test, cfg)?;
            let hyperparams = BTreeMap::from([
                ("depth".to_string(), cfg.depth.to_string()),
                ("width".to_string(), cfg.width.to_string()),
                ("label_noise".to_string(), format_tag(task.label_noise_fraction)),
                ("learning_rate".to_string(), format_tag(cfg.learning_rate)),
            ]);
            Ok(ZooModel {
                entry: ZooEntry {
                    model_id: format!(
                        "t{}-n{}-d{}-w{}-lr{}-s{}",
                        task.seed,
                        format_tag(task.label_noise_fraction),
                        cfg.depth,
                        cfg.width,
                        format_tag(cfg.learning_rate),
                        cfg.seed
                    ),
                    hyperparams,
                    train_error: trained.train_error,
                    test_error: trained.test_error,
                    measure_values: BTreeMap::new(),
                },
                network: trained.network,
                train_data: Arc::clone(&train),
                reached_target: trained.reached_target,
            })
        })
        .collect()
}

/// A full sweep: label-noise levels × replicates of one base task, each
/// trained over depths × widths × learning rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZooPlan {
    pub base_task: SyntheticTaskSpec,
    pub label_noise_levels: Vec<f64>,
    pub depths: Vec<usize>,
    pub widths: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub replicates: usize,
    pub train: TrainConfig,
    pub seed: u64,
}

impl ZooPlan {
    /// 3 noise levels × 3 depths × 2 widths × 3 replicates.
    pub fn default_with_seed(seed: u64) -> Self {
        Self {
            base_task: SyntheticTaskSpec {
                generator: TaskGenerator::GaussianBlobs,
                input_dim: 8,
                num_classes: 4,
                n_train: 100,
                n_test: 500,
                label_noise_fraction: 0.0,
                seed,
                class_separation: 0.6,
            },
            label_noise_levels: vec![0.0, 0.25, 0.5],
            depths: vec![1, 2, 3],
            widths: vec![8, 32],
            learning_rates: vec![0.1],
            replicates: 3,
            train: TrainConfig {
                epochs: 1000,
                batch_size: 16,
                learning_rate: 0.1,
                depth: 1,
                width: 8,
                seed,
                target_train_accuracy: 0.99,
            },
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.label_noise_levels.len() * self.depths.len() * self.widths.len() * self.learning_rates.len() * self.replicates
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Task spec of replicate `r` at noise level `noise`.
    pub fn task(&self, noise: f64, replicate: usize) -> SyntheticTaskSpec {
        SyntheticTaskSpec {
            label_noise_fraction: noise,
            seed: crate::rng::split_seed(self.seed, &[0x7a5c, replicate as u64]),
            ..self.base_task.clone()
        }
    }

    pub fn sweep(&self, replicate: usize) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &depth in &self.depths {
            for &width in &self.widths {
                for &learning_rate in &self.learning_rates {
                    out.push(TrainConfig {
                        depth,
                        width,
                        learning_rate,
                        seed: crate::rng::split_seed(self.seed, &[0x7ea1, replicate as u64, depth as u64, width as u64]),
                        ..self.train.clone()
                    });
                }
            }
        }
        out
    }
}

/// Builds every task of the plan, in canonical (noise, replicate) order.
pub fn build_plan(plan: &ZooPlan) -> Result<Vec<ZooModel>> {
    let mut models = Vec::with_capacity(plan.len());
    for &noise in &plan.label_noise_levels {
        for r in 0..plan.replicates {
            models.extend(build_zoo(&plan.task(noise, r), &plan.sweep(r))?);
        }
    }
    Ok(models)
}

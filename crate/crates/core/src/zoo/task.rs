use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LabeledDataset, Shape};
use crate::rng::{keyed_rng, standard_normal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskGenerator {
    /// Isotropic unit-variance Gaussian clusters.
    GaussianBlobs,
    /// Interleaved spiral arms in the first two coordinates.
    TwoSpirals,
    /// Standard Gaussian inputs labelled by a random linear teacher.
    RandomLabelFraction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub generator: TaskGenerator,
    pub input_dim: usize,
    pub num_classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Fraction of training labels replaced by a different, random class.
    pub label_noise_fraction: f64,
    pub seed: u64,
    /// Blob mean scale (per coordinate) or spiral radius.
    pub class_separation: f64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            generator: TaskGenerator::GaussianBlobs,
            input_dim: 2,
            num_classes: 2,
            n_train: 200,
            n_test: 200,
            label_noise_fraction: 0.0,
            seed: 0,
            class_separation: 3.0,
        }
    }
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("a task needs at least two classes".into()));
        }
        if self.input_dim == 0 || (self.generator == TaskGenerator::TwoSpirals && self.input_dim < 2) {
            return Err(Error::InvalidConfig(format!("input_dim {} too small", self.input_dim)));
        }
        if self.n_train < self.num_classes || self.n_test < self.num_classes {
            return Err(Error::InvalidConfig("n_train and n_test must be at least num_classes".into()));
        }
        if !(0.0..=1.0).contains(&self.label_noise_fraction) {
            return Err(Error::InvalidConfig(format!(
                "label_noise_fraction {} outside [0, 1]",
                self.label_noise_fraction
            )));
        }
        if !(self.class_separation > 0.0 && self.class_separation.is_finite()) {
            return Err(Error::InvalidConfig("class_separation must be positive".into()));
        }
        Ok(())
    }
}

const STREAM_PARAMS: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_TEST: u64 = 3;
const STREAM_NOISE: u64 = 4;

enum Sampler {
    Blobs(Vec<Vec<f64>>),
    Spirals,
    Teacher(Vec<Vec<f64>>),
}

impl Sampler {
    fn new(spec: &SyntheticTaskSpec) -> Self {
        let mut rng = keyed_rng(spec.seed, &[STREAM_PARAMS]);
        let d = spec.input_dim;
        match spec.generator {
            TaskGenerator::GaussianBlobs => {
                let means = if spec.num_classes == 2 {
                    vec![vec![spec.class_separation; d], vec![-spec.class_separation; d]]
                } else {
                    (0..spec.num_classes)
                        .map(|_| {
                            let u: Vec<f64> = standard_normal(&mut rng, d);
                            let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                            let scale = spec.class_separation * (d as f64).sqrt() / n;
                            u.into_iter().map(|v| v * scale).collect()
                        })
                        .collect()
                };
                Sampler::Blobs(means)
            }
            TaskGenerator::TwoSpirals => Sampler::Spirals,
            TaskGenerator::RandomLabelFraction => {
                Sampler::Teacher((0..spec.num_classes).map(|_| standard_normal(&mut rng, d)).collect())
            }
        }
    }

    fn sample<R: Rng>(&self, spec: &SyntheticTaskSpec, rng: &mut R, n: usize) -> (Vec<Vec<f32>>, Vec<usize>) {
        let d = spec.input_dim;
        let c = spec.num_classes;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for i in 0..n {
            match self {
                Sampler::Blobs(means) => {
                    let y = i % c;
                    let z: Vec<f64> = standard_normal(rng, d);
                    xs.push(z.iter().zip(&means[y]).map(|(a, m)| (a + m) as f32).collect());
                    ys.push(y);
                }
                Sampler::Spirals => {
                    let y = i % c;
                    let t: f64 = rng.random::<f64>();
                    let angle = 3.0 * std::f64::consts::PI * t + 2.0 * std::f64::consts::PI * y as f64 / c as f64;
                    let r = spec.class_separation * t;
                    let z: Vec<f64> = standard_normal(rng, d);
                    let mut x: Vec<f32> = z.iter().map(|v| (0.1 * v) as f32).collect();
                    x[0] += (r * angle.cos()) as f32;
                    x[1] += (r * angle.sin()) as f32;
                    xs.push(x);
                    ys.push(y);
                }
                Sampler::Teacher(w) => {
                    let x: Vec<f64> = standard_normal(rng, d);
                    let y = w
                        .iter()
                        .map(|row| row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>())
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(&b.1))
                        .map(|(k, _)| k)
                        .unwrap();
                    xs.push(x.into_iter().map(|v| v as f32).collect());
                    ys.push(y);
                }
            }
        }
        (xs, ys)
    }
}

/// Replaces exactly `round(fraction · n)` labels with a different class.
fn corrupt_labels(labels: &mut [usize], num_classes: usize, fraction: f64, seed: u64) {
    let count = (fraction * labels.len() as f64).round() as usize;
    if count == 0 {
        return;
    }
    let mut rng = keyed_rng(seed, &[STREAM_NOISE]);
    let mut idx = index::sample(&mut rng, labels.len(), count).into_vec();
    idx.sort_unstable();
    for i in idx {
        let shift = rng.random_range(1..num_classes);
        labels[i] = (labels[i] + shift) % num_classes;
    }
}

pub type TaskSplit = (LabeledDataset<f32>, LabeledDataset<f32>);

/// Deterministic `(train, test)` split; label noise touches the training
/// split only.
pub fn generate_task(spec: &SyntheticTaskSpec) -> Result<TaskSplit> {
    Ok(generate_task_with_clean_labels(spec)?.0)
}

/// As [`generate_task`], also returning the uncorrupted training labels.
pub fn generate_task_with_clean_labels(
    spec: &SyntheticTaskSpec,
) -> Result<(TaskSplit, Vec<usize>)> {
    spec.validate()?;
    let sampler = Sampler::new(spec);
    let shape = Shape::Vector(spec.input_dim);
    let (train_x, clean) = sampler.sample(spec, &mut keyed_rng(spec.seed, &[STREAM_TRAIN]), spec.n_train);
    let (test_x, test_y) = sampler.sample(spec, &mut keyed_rng(spec.seed, &[STREAM_TEST]), spec.n_test);
    let mut train_y = clean.clone();
    corrupt_labels(&mut train_y, spec.num_classes, spec.label_noise_fraction, spec.seed);
    Ok((
        (
            LabeledDataset::new(train_x, train_y, shape, spec.num_classes)?,
            LabeledDataset::new(test_x, test_y, shape, spec.num_classes)?,
        ),
        clean,
    ))
}

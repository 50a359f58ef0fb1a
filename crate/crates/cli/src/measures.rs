//! Name-based dispatch over the eight complexity measures.

use std::time::Instant;

use clap::ValueEnum;
use gengap_core::margin::{all_layer_margin_measure, input_layer_margin_measure};
use gengap_core::noise::{noise_stability_layer_measures, noise_stability_output_measures};
use gengap_core::{
    fast_log_spec, margin_jacobian, LabeledDataset, MarginSolverConfig, Network, NoiseConfig, NoiseStabilityResult,
    OutputMarginConfig, PowerMethodConfig, Scalar, SubsampleConfig,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureName {
    MeanNoiseStability,
    GeometricMeanNoiseStability,
    MeanNoiseStabilityOutput,
    GeometricMeanNoiseStabilityOutput,
    InputLayerMargin,
    AllLayerMargin,
    MarginJacobian,
    FastLogSpec,
}

impl MeasureName {
    pub const ALL: [MeasureName; 8] = [
        MeasureName::MeanNoiseStability,
        MeasureName::GeometricMeanNoiseStability,
        MeasureName::MeanNoiseStabilityOutput,
        MeasureName::GeometricMeanNoiseStabilityOutput,
        MeasureName::InputLayerMargin,
        MeasureName::AllLayerMargin,
        MeasureName::MarginJacobian,
        MeasureName::FastLogSpec,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MeasureName::MeanNoiseStability => "mean-noise-stability",
            MeasureName::GeometricMeanNoiseStability => "geometric-mean-noise-stability",
            MeasureName::MeanNoiseStabilityOutput => "mean-noise-stability-output",
            MeasureName::GeometricMeanNoiseStabilityOutput => "geometric-mean-noise-stability-output",
            MeasureName::InputLayerMargin => "input-layer-margin",
            MeasureName::AllLayerMargin => "all-layer-margin",
            MeasureName::MarginJacobian => "margin-jacobian",
            MeasureName::FastLogSpec => "fast-log-spec",
        }
    }
}

impl std::fmt::Display for MeasureName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MeasureName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        MeasureName::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            let known: Vec<&str> = MeasureName::ALL.iter().map(|m| m.as_str()).collect();
            format!("unknown measure `{s}` (known: {})", known.join(", "))
        })
    }
}

/// Every knob the measures read, echoed verbatim into reports.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasureSettings {
    pub noise: NoiseConfig,
    pub margin_solver: MarginSolverConfig,
    pub subsample: SubsampleConfig,
    pub power_method: PowerMethodConfig,
    pub output_margin: OutputMarginConfig,
}

impl MeasureSettings {
    /// Defaults with every stochastic component keyed on `seed`.
    pub fn with_seed(seed: u64) -> Self {
        let mut s = Self::default();
        s.noise.seed = seed;
        s.margin_solver.seed = seed;
        s.subsample.seed = seed;
        s.power_method.seed = seed;
        s
    }
}

/// Result of one measure on one model. Exactly one of `value` / `error`
/// is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureOutcome {
    pub measure: MeasureName,
    pub value: Option<f64>,
    pub error: Option<String>,
    pub wall_time_s: f64,
    pub diagnostics: Value,
}

impl MeasureOutcome {
    fn from_result(measure: MeasureName, result: anyhow::Result<(f64, Value)>, wall_time_s: f64) -> Self {
        let result = result.and_then(|(v, d)| {
            anyhow::ensure!(v.is_finite(), "measure evaluated to a non-finite value ({v})");
            Ok((v, d))
        });
        match result {
            Ok((v, diagnostics)) => Self {
                measure,
                value: Some(v),
                error: None,
                wall_time_s,
                diagnostics,
            },
            Err(e) => Self {
                measure,
                value: None,
                error: Some(format!("{e:#}")),
                wall_time_s,
                diagnostics: Value::Null,
            },
        }
    }
}

fn noise_diag(r: &NoiseStabilityResult) -> Value {
    let entries: usize = r.per_layer.iter().map(Vec::len).sum();
    json!({
        "examples": r.per_layer.len(),
        "noise_samples_per_entry": r.num_noise_samples,
        "monte_carlo_draws": entries * r.num_noise_samples,
    })
}

type Computed = anyhow::Result<(f64, Value)>;

fn noise_pair(
    pair: gengap_core::Result<(NoiseStabilityResult, gengap_core::Result<NoiseStabilityResult>)>,
) -> (Computed, Computed) {
    match pair {
        Ok((mean, geo)) => (
            Ok((mean.aggregate, noise_diag(&mean))),
            geo.map(|g| (g.aggregate, noise_diag(&g))).map_err(Into::into),
        ),
        Err(e) => {
            let msg = format!("{e}");
            (Err(anyhow::anyhow!(msg.clone())), Err(anyhow::anyhow!(msg)))
        }
    }
}

/// Evaluates `names` on one model, in the order given. Mean and geometric
/// noise variants of the same kind share one set of draws and one timing.
pub fn compute_measures<T: Scalar>(
    net: &Network<T>,
    data: &LabeledDataset<T>,
    names: &[MeasureName],
    s: &MeasureSettings,
) -> Vec<MeasureOutcome> {
    use MeasureName::*;
    let wants = |a: MeasureName, b: MeasureName| names.contains(&a) || names.contains(&b);
    let timed = |f: &dyn Fn() -> Computed| {
        let t = Instant::now();
        let r = f();
        (r, t.elapsed().as_secs_f64())
    };

    let mut layer_noise = None;
    if wants(MeanNoiseStability, GeometricMeanNoiseStability) {
        let t = Instant::now();
        let pair = noise_pair(noise_stability_layer_measures(net, data, &s.noise));
        layer_noise = Some((pair, t.elapsed().as_secs_f64()));
    }
    let mut output_noise = None;
    if wants(MeanNoiseStabilityOutput, GeometricMeanNoiseStabilityOutput) {
        let t = Instant::now();
        let pair = noise_pair(noise_stability_output_measures(net, data, &s.noise));
        output_noise = Some((pair, t.elapsed().as_secs_f64()));
    }

    let mut out = Vec::with_capacity(names.len());
    for &name in names {
        let (result, secs) = match name {
            MeanNoiseStability | GeometricMeanNoiseStability => {
                let ((mean, geo), secs) = layer_noise.as_ref().unwrap();
                let r = if name == MeanNoiseStability { mean } else { geo };
                (clone_computed(r), *secs)
            }
            MeanNoiseStabilityOutput | GeometricMeanNoiseStabilityOutput => {
                let ((mean, geo), secs) = output_noise.as_ref().unwrap();
                let r = if name == MeanNoiseStabilityOutput { mean } else { geo };
                (clone_computed(r), *secs)
            }
            InputLayerMargin => timed(&|| {
                let m = input_layer_margin_measure(net, data, &s.subsample)?;
                Ok((m.value, json!({"examples": m.evaluated, "degenerate_examples": m.failures})))
            }),
            AllLayerMargin => timed(&|| {
                let m = all_layer_margin_measure(net, data, &s.margin_solver, &s.subsample)?;
                Ok((
                    m.value,
                    json!({
                        "examples": m.evaluated,
                        "solver_failures": m.failures,
                        "restarts_run": m.restarts,
                        "gradient_steps": m.gradient_steps,
                    }),
                ))
            }),
            MarginJacobian => timed(&|| {
                let m = margin_jacobian(net, data, &s.output_margin)?;
                Ok((
                    m.value,
                    json!({"gamma_out": m.gamma_out, "margin_term": m.margin_term, "jacobian_term": m.jacobian_term}),
                ))
            }),
            FastLogSpec => timed(&|| {
                let m = fast_log_spec(net, data, &s.power_method, &s.output_margin)?;
                Ok((
                    m.value,
                    json!({
                        "gamma_out": m.gamma_out,
                        "layer_norms": m.layer_norms,
                        "power_iterations": m.iterations,
                        "converged": m.converged,
                    }),
                ))
            }),
        };
        out.push(MeasureOutcome::from_result(name, result, secs));
    }
    out
}

fn clone_computed(r: &Computed) -> Computed {
    match r {
        Ok(v) => Ok(v.clone()),
        Err(e) => Err(anyhow::anyhow!("{e:#}")),
    }
}

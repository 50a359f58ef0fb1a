//! All-layer margin: the smallest joint perturbation of every affine
//! layer's output that flips the prediction.
//!
//! With `g_0 = x` the perturbed network is
//!
//! ```text
//! g_j = f_j(g_{j-1}) + δ_j ‖g_{j-1}‖,     F(x, δ) = g_l
//! ```
//!
//! where `f_j` covers every layer after affine layer `j − 1` up to and
//! including affine layer `j`. The solver bisects on the radius `‖δ‖` and,
//! at each radius, runs projected gradient ascent of the cross-entropy of
//! `F(x, δ)` on the sphere of that radius. A radius counts as feasible only
//! when a perturbed forward pass shows a flipped argmax.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{logit_margin, Network};
use crate::rng::{content_key, keyed_rng, standard_normal};
use crate::scalar::{norm, norm_sq, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginSolverConfig {
    /// Gradient steps per restart and radius.
    pub max_steps: usize,
    /// Step length as a fraction of the current radius.
    pub step_size: f64,
    pub num_restarts: usize,
    pub seed: u64,
    /// Bisection stops once `hi − lo ≤ tolerance · hi`.
    pub tolerance: f64,
    pub bisection_steps: usize,
    /// Upper end of the initial radius bracket `[0, initial_radius]`.
    pub initial_radius: f64,
}

impl Default for MarginSolverConfig {
    fn default() -> Self {
        Self {
            max_steps: 40,
            step_size: 0.25,
            num_restarts: 3,
            seed: 0,
            tolerance: 1e-4,
            bisection_steps: 12,
            initial_radius: 10.0,
        }
    }
}

impl MarginSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 || self.num_restarts == 0 {
            return Err(Error::InvalidConfig("max_steps and num_restarts must be positive".into()));
        }
        for (name, v) in [
            ("step_size", self.step_size),
            ("tolerance", self.tolerance),
            ("initial_radius", self.initial_radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-layer perturbations `δ_1..δ_l`, each shaped like its affine layer's
/// (flattened) output.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationVector<T> {
    deltas: Vec<Vec<T>>,
    norm: f64,
}

impl<T: Scalar> PerturbationVector<T> {
    pub fn new(deltas: Vec<Vec<T>>) -> Self {
        let norm = deltas.iter().map(|d| norm_sq(d)).sum::<f64>().sqrt();
        Self { deltas, norm }
    }

    pub fn zeros(net: &Network<T>) -> Self {
        Self::new(delta_lengths(net).into_iter().map(|n| vec![T::zero(); n]).collect())
    }

    pub fn deltas(&self) -> &[Vec<T>] {
        &self.deltas
    }

    /// `sqrt(Σ_j ‖δ_j‖²)`.
    pub fn norm(&self) -> f64 {
        self.norm
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverStatus {
    /// A verified misclassifying perturbation was found.
    Found,
    /// The unperturbed input is already misclassified; margin 0.
    AlreadyMisclassified,
    /// Nothing flipped the prediction within the budget; margin is `+∞`.
    Failed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AllLayerMargin<T> {
    /// Upper bound on the all-layer margin (`+∞` when the solver failed).
    pub margin: f64,
    pub perturbation: PerturbationVector<T>,
    pub status: SolverStatus,
    /// Radii at which gradient ascent was run.
    pub radii_tried: usize,
    pub restarts_run: usize,
    pub gradient_steps: usize,
}

fn delta_lengths<T: Scalar>(net: &Network<T>) -> Vec<usize> {
    (1..=net.depth())
        .map(|j| net.shape_at(net.affine_layer_index(j).unwrap() + 1).len())
        .collect()
}

/// Intermediate values of one perturbed forward pass.
struct PerturbedPass<T> {
    /// `values[k]` enters layer `k`; the last entry is `F(x, δ)`.
    values: Vec<Vec<T>>,
    /// `‖g_{j-1}‖` for `j = 1..=l`.
    scales: Vec<f64>,
}

fn run_perturbed<T: Scalar>(net: &Network<T>, x: &[T], deltas: &[Vec<T>]) -> Result<PerturbedPass<T>> {
    if x.len() != net.input_shape().len() {
        return Err(Error::ShapeMismatch {
            layer: 0,
            expected: net.input_shape().to_string(),
            found: format!("{} values", x.len()),
        });
    }
    let lengths = delta_lengths(net);
    if deltas.len() != lengths.len() || deltas.iter().zip(&lengths).any(|(d, &n)| d.len() != n) {
        return Err(Error::InvalidConfig("perturbation shapes do not match the network".into()));
    }
    let mut values = Vec::with_capacity(net.layers().len() + 1);
    values.push(x.to_vec());
    let mut scales = Vec::with_capacity(lengths.len());
    let mut prev_norm = norm(x);
    let mut j = 0;
    for (k, layer) in net.layers().iter().enumerate() {
        let mut out = layer.forward(&values[k], net.shape_at(k));
        if layer.is_affine() {
            for (o, d) in out.iter_mut().zip(&deltas[j]) {
                *o = T::narrow(o.widen() + d.widen() * prev_norm);
            }
            scales.push(prev_norm);
            prev_norm = norm(&out);
            j += 1;
        }
        values.push(out);
    }
    Ok(PerturbedPass { values, scales })
}

/// Logits `F(x, δ)` of the perturbed network.
pub fn perturbed_forward<T: Scalar>(net: &Network<T>, x: &[T], perturbation: &PerturbationVector<T>) -> Result<Vec<T>> {
    Ok(run_perturbed(net, x, perturbation.deltas())?.values.pop().unwrap())
}

/// True when some competing class strictly beats the true class.
pub fn flips_prediction<T: Scalar>(logits: &[T], y: usize) -> bool {
    logit_margin(logits, y).is_ok_and(|m| m < 0.0)
}

/// Objective maximized over the perturbation sphere.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Objective {
    /// Cross-entropy against the true label.
    CrossEntropy,
    /// Best competing logit minus the true logit.
    LogitMargin,
}

/// Value of `objective` at `F(x, δ)` and its gradient with respect to every
/// `δ_j`.
fn loss_gradient<T: Scalar>(
    net: &Network<T>,
    pass: &PerturbedPass<T>,
    deltas: &[Vec<T>],
    y: usize,
    objective: Objective,
) -> (f64, Vec<Vec<T>>) {
    let logits = pass.values.last().unwrap();
    let (loss, mut grad) = match objective {
        Objective::CrossEntropy => {
            let max = logits.iter().map(|v| v.widen()).fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|v| (v.widen() - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            let grad: Vec<T> = exps
                .iter()
                .enumerate()
                .map(|(k, e)| T::narrow(e / total - if k == y { 1.0 } else { 0.0 }))
                .collect();
            (total.ln() + max - logits[y].widen(), grad)
        }
        Objective::LogitMargin => {
            let rival = (0..logits.len())
                .filter(|&k| k != y)
                .max_by(|&a, &b| logits[a].widen().total_cmp(&logits[b].widen()).then(b.cmp(&a)))
                .expect("at least two classes");
            let mut grad = vec![T::zero(); logits.len()];
            grad[rival] = T::one();
            grad[y] = -T::one();
            (logits[rival].widen() - logits[y].widen(), grad)
        }
    };

    let layers = net.layers();
    let l = net.depth();
    let mut grads = vec![Vec::new(); l];
    let mut pending: Option<(usize, Vec<f64>)> = None;
    let mut j = l;
    for k in (0..layers.len()).rev() {
        if let Some((pos, extra)) = pending.take() {
            if pos == k + 1 {
                for (g, e) in grad.iter_mut().zip(&extra) {
                    *g = T::narrow(g.widen() + e);
                }
            } else {
                pending = Some((pos, extra));
            }
        }
        if layers[k].is_affine() {
            let scale = pass.scales[j - 1];
            grads[j - 1] = grad.iter().map(|g| T::narrow(g.widen() * scale)).collect();
            // δ_j ‖g_{j-1}‖ also depends on g_{j-1} through its norm.
            if j >= 2 && scale > 0.0 {
                let s: f64 = grad.iter().zip(&deltas[j - 1]).map(|(g, d)| g.widen() * d.widen()).sum();
                let pos = net.affine_layer_index(j - 1).unwrap() + 1;
                let extra = pass.values[pos].iter().map(|v| s * v.widen() / scale).collect();
                pending = Some((pos, extra));
            }
            j -= 1;
        }
        if k > 0 {
            grad = layers[k].backward_input(&pass.values[k], net.shape_at(k), &grad);
        }
    }
    (loss, grads)
}

/// Gradient of the cross-entropy of `F(x, δ)` with respect to `δ`.
pub fn perturbation_loss_gradient<T: Scalar>(
    net: &Network<T>,
    x: &[T],
    y: usize,
    perturbation: &PerturbationVector<T>,
) -> Result<(f64, Vec<Vec<T>>)> {
    let pass = run_perturbed(net, x, perturbation.deltas())?;
    Ok(loss_gradient(net, &pass, perturbation.deltas(), y, Objective::CrossEntropy))
}

fn rescale<T: Scalar>(deltas: &mut [Vec<T>], radius: f64) -> bool {
    let n = deltas.iter().map(|d| norm_sq(d)).sum::<f64>().sqrt();
    if !(n > 0.0 && n.is_finite()) {
        return false;
    }
    let s = radius / n;
    for v in deltas.iter_mut().flatten() {
        *v = T::narrow(v.widen() * s);
    }
    true
}

struct AscentStats {
    restarts: usize,
    steps: usize,
}

/// Projected gradient ascent of `objective` on the sphere `‖δ‖ = radius`
/// from `start`. Returns the first verified misclassifying iterate.
#[allow(clippy::too_many_arguments)]
fn ascend<T: Scalar>(
    net: &Network<T>,
    x: &[T],
    y: usize,
    radius: f64,
    mut deltas: Vec<Vec<T>>,
    objective: Objective,
    cfg: &MarginSolverConfig,
    stats: &mut AscentStats,
) -> Result<Option<Vec<Vec<T>>>> {
    if !rescale(&mut deltas, radius) {
        return Ok(None);
    }
    for _ in 0..cfg.max_steps {
        let pass = run_perturbed(net, x, &deltas)?;
        if flips_prediction(pass.values.last().unwrap(), y) {
            return Ok(Some(deltas));
        }
        stats.steps += 1;
        let (_, mut grad) = loss_gradient(net, &pass, &deltas, y, objective);
        if !rescale(&mut grad, cfg.step_size * radius) {
            return Ok(None);
        }
        for (d, g) in deltas.iter_mut().flatten().zip(grad.iter().flatten()) {
            *d += *g;
        }
        if !rescale(&mut deltas, radius) {
            return Ok(None);
        }
    }
    let pass = run_perturbed(net, x, &deltas)?;
    Ok(flips_prediction(pass.values.last().unwrap(), y).then_some(deltas))
}

/// Tries every restart at one radius. Restart 0 starts from the objective's
/// gradient at `δ = 0`, later restarts from keyed random directions; each
/// start is ascended on the cross-entropy and then on the logit margin.
fn ascend_at_radius<T: Scalar>(
    net: &Network<T>,
    x: &[T],
    y: usize,
    radius: f64,
    cfg: &MarginSolverConfig,
    stats: &mut AscentStats,
) -> Result<Option<Vec<Vec<T>>>> {
    let lengths = delta_lengths(net);
    let total_len: usize = lengths.iter().sum();
    let x_key = content_key(x);
    let zeros: Vec<Vec<T>> = lengths.iter().map(|&n| vec![T::zero(); n]).collect();
    for restart in 0..cfg.num_restarts {
        stats.restarts += 1;
        for objective in [Objective::CrossEntropy, Objective::LogitMargin] {
            let start = if restart == 0 {
                let pass = run_perturbed(net, x, &zeros)?;
                loss_gradient(net, &pass, &zeros, y, objective).1
            } else {
                let mut rng = keyed_rng(cfg.seed, &[x_key, restart as u64]);
                let flat = standard_normal::<T, _>(&mut rng, total_len);
                let mut it = flat.into_iter();
                lengths.iter().map(|&n| it.by_ref().take(n).collect()).collect()
            };
            if let Some(found) = ascend(net, x, y, radius, start, objective, cfg, stats)? {
                return Ok(Some(found));
            }
        }
    }
    Ok(None)
}

/// Upper bound on the all-layer margin of `(x, y)`.
pub fn all_layer_margin<T: Scalar>(net: &Network<T>, x: &[T], y: usize, cfg: &MarginSolverConfig) -> Result<AllLayerMargin<T>> {
    cfg.validate()?;
    if net.depth() == 0 {
        return Err(Error::NoAffineLayers);
    }
    let clean = run_perturbed(net, x, PerturbationVector::zeros(net).deltas())?;
    if logit_margin(clean.values.last().unwrap(), y)? <= 0.0 {
        return Ok(AllLayerMargin {
            margin: 0.0,
            perturbation: PerturbationVector::zeros(net),
            status: SolverStatus::AlreadyMisclassified,
            radii_tried: 0,
            restarts_run: 0,
            gradient_steps: 0,
        });
    }
    let mut stats = AscentStats { restarts: 0, steps: 0 };
    let mut radii = 1;
    let mut hi = cfg.initial_radius;
    let mut lo = 0.0;
    let Some(mut best) = ascend_at_radius(net, x, y, hi, cfg, &mut stats)? else {
        return Ok(AllLayerMargin {
            margin: f64::INFINITY,
            perturbation: PerturbationVector::zeros(net),
            status: SolverStatus::Failed,
            radii_tried: radii,
            restarts_run: stats.restarts,
            gradient_steps: stats.steps,
        });
    };
    for _ in 0..cfg.bisection_steps {
        if hi - lo <= cfg.tolerance * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        radii += 1;
        match ascend_at_radius(net, x, y, mid, cfg, &mut stats)? {
            Some(d) => {
                hi = mid;
                best = d;
            }
            None => lo = mid,
        }
    }
    let perturbation = PerturbationVector::new(best);
    Ok(AllLayerMargin {
        margin: perturbation.norm(),
        perturbation,
        status: SolverStatus::Found,
        radii_tried: radii,
        restarts_run: stats.restarts,
        gradient_steps: stats.steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{predict, Dense, Layer, Shape};

    fn two_layer() -> Network<f64> {
        Network::new(
            vec![
                Layer::Dense(Dense::new(vec![0.5, -1.0, 1.5, 0.3, -0.7, 0.2], vec![0.1, -0.2, 0.3], 2, 3)),
                Layer::Relu,
                Layer::Dense(Dense::new(vec![1.0, -0.5, 0.8, -0.3, 0.9, 0.4], vec![0.0, 0.1], 3, 2)),
            ],
            Shape::Vector(2),
            2,
        )
        .unwrap()
    }

    #[test]
    fn zero_perturbation_reproduces_forward() {
        let net = two_layer();
        let x = [0.4, -0.9];
        let f = perturbed_forward(&net, &x, &PerturbationVector::zeros(&net)).unwrap();
        assert_eq!(f, predict(&net, &x).unwrap());
    }

    #[test]
    fn loss_gradient_matches_central_differences() {
        let net = two_layer();
        let x = [0.4, -0.9];
        let p = PerturbationVector::new(vec![vec![0.05, -0.1, 0.2], vec![0.3, -0.2]]);
        let (_, g) = perturbation_loss_gradient(&net, &x, 0, &p).unwrap();
        let h = 1e-6;
        for j in 0..2 {
            for i in 0..p.deltas()[j].len() {
                let mut plus = p.deltas().to_vec();
                plus[j][i] += h;
                let mut minus = p.deltas().to_vec();
                minus[j][i] -= h;
                let lp = perturbation_loss_gradient(&net, &x, 0, &PerturbationVector::new(plus)).unwrap().0;
                let lm = perturbation_loss_gradient(&net, &x, 0, &PerturbationVector::new(minus)).unwrap().0;
                let fd = (lp - lm) / (2.0 * h);
                assert!((fd - g[j][i]).abs() < 1e-6, "δ[{j}][{i}]: fd {fd} vs {}", g[j][i]);
            }
        }
    }

    #[test]
    fn misclassified_input_gives_zero() {
        let net = two_layer();
        let x = [0.4, -0.9];
        let y = if flips_prediction(&predict(&net, &x).unwrap(), 0) { 0 } else { 1 };
        let r = all_layer_margin(&net, &x, y, &MarginSolverConfig::default()).unwrap();
        assert_eq!(r.status, SolverStatus::AlreadyMisclassified);
        assert_eq!(r.margin, 0.0);
        assert_eq!(r.perturbation.norm(), 0.0);
    }

    #[test]
    fn single_layer_closed_form() {
        // z = (2, 0), ‖x‖ = 1: optimum √2.
        let net = Network::new(
            vec![Layer::Dense(Dense::new(vec![2.0, 0.0, 0.0, 0.0], vec![0.0, 0.0], 2, 2))],
            Shape::Vector(2),
            2,
        )
        .unwrap();
        let r = all_layer_margin(&net, &[1.0, 0.0], 0, &MarginSolverConfig::default()).unwrap();
        assert_eq!(r.status, SolverStatus::Found);
        let opt = 2f64.sqrt();
        assert!(r.margin >= opt - 1e-6 && r.margin <= 1.05 * opt, "{}", r.margin);
        assert!(flips_prediction(&perturbed_forward(&net, &[1.0, 0.0], &r.perturbation).unwrap(), 0));
    }
}

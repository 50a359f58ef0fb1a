//! Scoring a complexity measure against a model zoo.
//!
//! The main score is a conditional mutual information between the sign of
//! the measure difference and the sign of the generalization-gap difference
//! over model pairs, conditioned on groups of hyperparameters and minimized
//! over those groups. Kendall's tau-b is reported alongside as a plain rank
//! diagnostic.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One trained model with its hyperparameter tags and errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZooEntry {
    pub model_id: String,
    /// Discrete hyperparameter tags.
    pub hyperparams: BTreeMap<String, String>,
    pub train_error: f64,
    pub test_error: f64,
    #[serde(default)]
    pub measure_values: BTreeMap<String, f64>,
}

pub fn generalization_gap(entry: &ZooEntry) -> f64 {
    entry.test_error - entry.train_error
}

/// Conditional MI for one conditioning subset.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubsetScore {
    pub subset: Vec<String>,
    /// `I(sign Δmeasure; sign Δgap | subset)` in nats.
    pub mi_nats: f64,
    /// `100 · mi_nats`.
    pub score: f64,
    pub cells_used: usize,
    pub cells_skipped: usize,
    /// Unordered pairs that entered the estimate.
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CmiScore {
    pub measure: String,
    /// `100 · min_S I(sign Δmeasure; sign Δgap | S)`.
    pub score: f64,
    pub min_subset: Vec<String>,
    pub per_condition: Vec<SubsetScore>,
}

/// Hyperparameter keys of a zoo, checked to be identical across entries.
pub fn hyperparam_keys(zoo: &[ZooEntry]) -> Result<Vec<String>> {
    let Some(first) = zoo.first() else {
        return Ok(Vec::new());
    };
    let keys: Vec<String> = first.hyperparams.keys().cloned().collect();
    for e in zoo {
        if !e.hyperparams.keys().eq(keys.iter()) {
            return Err(Error::InconsistentHyperparams(format!(
                "model `{}` has keys {:?}, expected {:?}",
                e.model_id,
                e.hyperparams.keys().collect::<Vec<_>>(),
                keys
            )));
        }
    }
    Ok(keys)
}

/// All subsets of `keys` with at most `max_size` elements, smallest first.
pub fn conditioning_subsets(keys: &[String], max_size: usize) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<(usize, Vec<String>)> = vec![(0, Vec::new())];
    for _ in 0..max_size.min(keys.len()) {
        let mut next = Vec::new();
        for (start, subset) in &frontier {
            for (i, k) in keys.iter().enumerate().skip(*start) {
                let mut s = subset.clone();
                s.push(k.clone());
                next.push((i + 1, s));
            }
        }
        out.extend(next.iter().map(|(_, s)| s.clone()));
        frontier = next;
    }
    out
}

fn sign(v: f64) -> Option<usize> {
    match v.partial_cmp(&0.0) {
        Some(Ordering::Greater) => Some(1),
        Some(Ordering::Less) => Some(0),
        _ => None,
    }
}

fn entropy(counts: &[f64], total: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.ln()
        })
        .sum()
}

/// Plug-in mutual information of a 2×2 contingency table, in nats.
fn plugin_mi(table: &[[f64; 2]; 2]) -> f64 {
    let total: f64 = table.iter().flatten().sum();
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let joint: Vec<f64> = table.iter().flatten().copied().collect();
    (entropy(&rows, total) + entropy(&cols, total) - entropy(&joint, total)).max(0.0)
}

/// Minimum cell size, in usable unordered pairs.
const MIN_CELL_PAIRS: usize = 2;

fn subset_score(values: &[(f64, f64)], cells: &BTreeMap<Vec<&str>, Vec<usize>>, subset: &[String]) -> SubsetScore {
    let mut weighted = 0.0;
    let mut pairs_total = 0usize;
    let mut used = 0;
    let mut skipped = 0;
    for members in cells.values() {
        // Each unordered pair enters in both orientations, so the gap sign
        // is symmetric within every cell.
        let mut table = [[0.0f64; 2]; 2];
        let mut pairs = 0usize;
        for (a, &i) in members.iter().enumerate() {
            for &k in &members[a + 1..] {
                let (mi, gi) = values[i];
                let (mk, gk) = values[k];
                if let (Some(sm), Some(sg)) = (sign(mi - mk), sign(gi - gk)) {
                    table[sm][sg] += 1.0;
                    table[1 - sm][1 - sg] += 1.0;
                    pairs += 1;
                }
            }
        }
        if pairs < MIN_CELL_PAIRS {
            skipped += 1;
            continue;
        }
        used += 1;
        weighted += pairs as f64 * plugin_mi(&table);
        pairs_total += pairs;
    }
    let mi = if pairs_total > 0 {
        weighted / pairs_total as f64
    } else {
        f64::NAN
    };
    SubsetScore {
        subset: subset.to_vec(),
        mi_nats: mi,
        score: 100.0 * mi,
        cells_used: used,
        cells_skipped: skipped,
        pairs: pairs_total,
    }
}

fn measure_and_gap(zoo: &[ZooEntry], measure: &str) -> Result<Vec<(f64, f64)>> {
    let missing: Vec<String> = zoo
        .iter()
        .filter(|e| !e.measure_values.get(measure).is_some_and(|v| v.is_finite()))
        .map(|e| e.model_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingMeasure {
            measure: measure.to_string(),
            model_ids: missing,
        });
    }
    Ok(zoo
        .iter()
        .map(|e| (e.measure_values[measure], generalization_gap(e)))
        .collect())
}

/// Conditional-mutual-information score of `measure` over `zoo`.
///
/// For every hyperparameter subset `S` with `|S| ≤ max_condition_size`
/// (including the empty set), models are grouped into cells agreeing on
/// `S`; within each cell every unordered pair with non-zero measure and gap
/// differences contributes the sign pair `(sign Δmeasure, sign Δgap)` in
/// both orientations. The plug-in MI of each cell is averaged with weights
/// proportional to its pair count. Cells with fewer than two usable pairs
/// are skipped. The score is `100 ×` the minimum over subsets.
pub fn conditional_mi_score(zoo: &[ZooEntry], measure: &str, max_condition_size: usize) -> Result<CmiScore> {
    if zoo.len() < 2 {
        return Err(Error::DegenerateZoo(format!("{} model(s); at least 2 required", zoo.len())));
    }
    let keys = hyperparam_keys(zoo)?;
    let values = measure_and_gap(zoo, measure)?;
    let mut per_condition = Vec::new();
    for subset in conditioning_subsets(&keys, max_condition_size) {
        let mut cells: BTreeMap<Vec<&str>, Vec<usize>> = BTreeMap::new();
        for (i, e) in zoo.iter().enumerate() {
            let key = subset.iter().map(|k| e.hyperparams[k].as_str()).collect();
            cells.entry(key).or_default().push(i);
        }
        let s = subset_score(&values, &cells, &subset);
        if s.cells_skipped > 0 {
            log::warn!(
                "measure {measure}: {} cell(s) skipped under {:?} (fewer than {MIN_CELL_PAIRS} usable pairs)",
                s.cells_skipped,
                subset
            );
        }
        per_condition.push(s);
    }
    let best = per_condition
        .iter()
        .filter(|s| s.cells_used > 0)
        .min_by(|a, b| a.mi_nats.total_cmp(&b.mi_nats))
        .ok_or_else(|| Error::DegenerateZoo(format!("no conditioning cell has {MIN_CELL_PAIRS} usable pairs")))?;
    Ok(CmiScore {
        measure: measure.to_string(),
        score: best.score,
        min_subset: best.subset.clone(),
        per_condition: per_condition.clone(),
    })
}

/// Kendall's tau-b between measure values and gaps across the whole zoo.
pub fn rank_correlation(zoo: &[ZooEntry], measure: &str) -> Result<f64> {
    if zoo.len() < 2 {
        return Err(Error::DegenerateZoo(format!("{} model(s); at least 2 required", zoo.len())));
    }
    let values = measure_and_gap(zoo, measure)?;
    let (m, g): (Vec<f64>, Vec<f64>) = values.into_iter().unzip();
    Ok(kendall_tau_b(&m, &g))
}

/// Kendall's tau-b in `O(n log n)` (Knight's algorithm). Returns 0 when
/// either variable is constant.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "kendall_tau_b needs equal-length inputs");
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let pairs = |n: u64| n * n.saturating_sub(1) / 2;
    let n0 = pairs(n as u64);

    // Ties in x, and joint ties in (x, y).
    let mut ties_x = 0u64;
    let mut ties_xy = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        ties_x += pairs((j - i) as u64);
        let mut a = i;
        while a < j {
            let mut b = a + 1;
            while b < j && y[idx[b]] == y[idx[a]] {
                b += 1;
            }
            ties_xy += pairs((b - a) as u64);
            a = b;
        }
        i = j;
    }

    // Count discordant pairs as inversions of y under the x ordering.
    let mut ys: Vec<f64> = idx.iter().map(|&k| y[k]).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);

    let mut ties_y = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && ys[j] == ys[i] {
            j += 1;
        }
        ties_y += pairs((j - i) as u64);
        i = j;
    }

    let concordant_minus_discordant =
        n0 as f64 - ties_x as f64 - ties_y as f64 + ties_xy as f64 - 2.0 * swaps as f64;
    let denom = ((n0 - ties_x) as f64 * (n0 - ties_y) as f64).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        concordant_minus_discordant / denom
    }
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = {
        let (l, r) = v.split_at_mut(mid);
        merge_count(l, &mut buf[..mid]) + merge_count(r, &mut buf[mid..])
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            count += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    count
}

/// Distinct values of a hyperparameter across the zoo.
pub fn hyperparam_values<'a>(zoo: &'a [ZooEntry], key: &str) -> BTreeSet<&'a str> {
    zoo.iter().filter_map(|e| e.hyperparams.get(key).map(String::as_str)).collect()
}

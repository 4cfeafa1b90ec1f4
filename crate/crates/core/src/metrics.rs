//! External clustering metrics, restart aggregation and the generalization
//! bound of the learned clustering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;
use crate::spectral::{ClusterLabels, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub acc: f64,
    pub nmi: f64,
    pub purity: f64,
}

impl MetricTriple {
    pub fn evaluate(pred: &ClusterLabels, truth: &ClusterLabels) -> Result<Self> {
        Ok(Self {
            acc: clustering_accuracy(pred, truth)?,
            nmi: nmi(pred, truth)?,
            purity: purity(pred, truth)?,
        })
    }
}

/// Contingency table between two labelings with ids compacted to `0..r` and
/// `0..c` in increasing order of the original id.
struct Contingency {
    counts: Vec<Vec<usize>>,
    n: usize,
}

impl Contingency {
    fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::DimensionMismatch(format!(
                "label length mismatch: predicted {} vs truth {}",
                pred.len(),
                truth.len()
            )));
        }
        if pred.is_empty() {
            return Err(Error::InvalidInput("empty label vectors".into()));
        }
        let rows = compact(pred);
        let cols = compact(truth);
        let mut counts = vec![vec![0usize; cols.len()]; rows.len()];
        for (p, t) in pred.iter().zip(truth) {
            counts[rows[p]][cols[t]] += 1;
        }
        Ok(Self { counts, n: pred.len() })
    }

    fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<usize> {
        let c = self.counts[0].len();
        (0..c).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }
}

fn compact(labels: &[usize]) -> BTreeMap<usize, usize> {
    let mut ids: BTreeMap<usize, usize> = labels.iter().map(|&l| (l, 0)).collect();
    for (i, v) in ids.values_mut().enumerate() {
        *v = i;
    }
    ids
}

/// Best one-to-one matching of predicted clusters to classes (Hungarian
/// assignment on the contingency table), as a fraction of samples.
pub fn clustering_accuracy(pred: &ClusterLabels, truth: &ClusterLabels) -> Result<f64> {
    let table = Contingency::new(pred.as_slice(), truth.as_slice())?;
    let size = table.counts.len().max(table.counts[0].len());
    let mut cost = vec![vec![0i64; size]; size];
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            cost[i][j] = -(c as i64);
        }
    }
    let assignment = min_cost_assignment(&cost);
    let matched: i64 = assignment.iter().enumerate().map(|(i, &j)| -cost[i][j]).sum();
    Ok(matched as f64 / table.n as f64)
}

/// Hungarian algorithm (shortest augmenting paths with potentials) on a
/// square cost matrix; returns the column assigned to each row.
fn min_cost_assignment(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    const INF: i64 = i64::MAX / 4;
    // 1-based arrays; index 0 is the virtual start column
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut min_v = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < min_v[j] {
                    min_v[j] = cur;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            assignment[row_of[j] - 1] = j - 1;
        }
    }
    assignment
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    let mut terms: Vec<f64> = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// `I(P; T) / sqrt(H(P) · H(T))` with natural logarithms; 0 when either
/// entropy vanishes. Terms are summed in sorted order so the result is exactly
/// symmetric in its arguments.
pub fn nmi(pred: &ClusterLabels, truth: &ClusterLabels) -> Result<f64> {
    let table = Contingency::new(pred.as_slice(), truth.as_slice())?;
    let n = table.n as f64;
    let rows = table.row_sums();
    let cols = table.col_sums();
    let mut terms = Vec::new();
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                terms.push(c / n * (n * c / (rows[i] as f64 * cols[j] as f64)).ln());
            }
        }
    }
    terms.sort_by(f64::total_cmp);
    let mi: f64 = terms.iter().sum();
    let hp = entropy(&rows, table.n);
    let ht = entropy(&cols, table.n);
    let denom = (hp * ht).sqrt();
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// Fraction of samples belonging to the majority class of their cluster.
pub fn purity(pred: &ClusterLabels, truth: &ClusterLabels) -> Result<f64> {
    let table = Contingency::new(pred.as_slice(), truth.as_slice())?;
    let hits: usize = table.counts.iter().map(|r| r.iter().copied().max().unwrap_or(0)).sum();
    Ok(hits as f64 / table.n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (0 for a single run).
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        if values.iter().all(|v| *v == values[0]) {
            return Self { mean: values[0], std: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let std = if count < 2 {
            0.0
        } else {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (count - 1) as f64).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub acc: MeanStd,
    pub nmi: MeanStd,
    pub purity: MeanStd,
    pub count: usize,
}

pub fn aggregate(runs: &[MetricTriple]) -> AggregateReport {
    let pick = |f: fn(&MetricTriple) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>());
    AggregateReport {
        acc: pick(|r| r.acc),
        nmi: pick(|r| r.nmi),
        purity: pick(|r| r.purity),
        count: runs.len(),
    }
}

/// Scalar inputs of the generalization bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Empirical clustering error `(1/n) Σ f(x_i)` or an upper bound of it.
    pub empirical_term: f64,
    /// Bound on every base kernel entry, `|K_p(x, x')| ≤ b`.
    pub b: f64,
    pub k: usize,
    pub n: usize,
    /// Failure probability, in (0, 1).
    pub delta: f64,
}

/// `empirical + sqrt(π/2)·b·k/√n + (1 + b)·sqrt(ln(1/δ) / (2n))`, which holds
/// with probability at least `1 − δ`.
pub fn generalization_bound(bi: &BoundInputs) -> Result<f64> {
    if !(bi.delta > 0.0 && bi.delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {}", bi.delta)));
    }
    if bi.b.is_nan() || bi.b <= 0.0 {
        return Err(Error::InvalidInput(format!("kernel bound b must be positive, got {}", bi.b)));
    }
    if bi.n == 0 {
        return Err(Error::InvalidInput("sample count n must be at least 1".into()));
    }
    let n = bi.n as f64;
    let complexity = (std::f64::consts::PI / 2.0).sqrt() * bi.b * bi.k as f64 / n.sqrt();
    let confidence = (1.0 + bi.b) * ((1.0 / bi.delta).ln() / (2.0 * n)).sqrt();
    Ok(bi.empirical_term + complexity + confidence)
}

/// `1 − Tr(K_γ H Hᵀ) / n`, an upper bound of the empirical clustering error.
/// Negative values are possible when kernels are not bounded by 1; they are
/// returned as-is with a warning.
pub fn empirical_alignment_upper_bound(km_combined: &KernelMatrix, p: &Partition, n: usize) -> Result<f64> {
    if km_combined.n() != p.n() || n != p.n() {
        return Err(Error::DimensionMismatch(format!(
            "kernel is {}x{}, partition has {} rows, n = {n}",
            km_combined.n(),
            km_combined.n(),
            p.n()
        )));
    }
    let value = 1.0 - p.alignment(km_combined.values()) / n as f64;
    if value < 0.0 {
        log::warn!("empirical alignment bound is negative ({value}); kernels are not bounded by 1");
    }
    Ok(value)
}

//! Relaxed kernel k-means and spectral rounding.
//!
//! The relaxed problem `max_H Tr(K H Hᵀ)` subject to `HᵀH = I_k` is solved by
//! the top-k eigenvectors of `K` (Ky Fan). Hard labels come from Lloyd's
//! k-means on the row-normalized eigenvector embedding.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;
use crate::linalg;

pub const ORTHONORMAL_TOL: f64 = 1e-8;
pub const LLOYD_MAX_ITER: usize = 300;
pub const LLOYD_SHIFT_TOL: f64 = 1e-9;

/// Column-orthonormal `n × k` relaxed partition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    h: DMatrix<f64>,
}

impl Partition {
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        if h.ncols() == 0 || h.ncols() > h.nrows() {
            return Err(Error::InvalidInput(format!(
                "partition matrix must be n x k with 1 <= k <= n, got {}x{}",
                h.nrows(),
                h.ncols()
            )));
        }
        let dev = orthonormality_error(&h);
        if dev.is_nan() || dev > ORTHONORMAL_TOL {
            return Err(Error::InvalidInput(format!("partition columns not orthonormal (‖HᵀH − I‖_F = {dev:e})")));
        }
        Ok(Self { h })
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    pub fn k(&self) -> usize {
        self.h.ncols()
    }

    /// `Tr(K H Hᵀ)`.
    pub fn alignment(&self, km: &DMatrix<f64>) -> f64 {
        linalg::alignment(km, &self.h)
    }
}

/// `‖HᵀH − I‖_F`.
pub fn orthonormality_error(h: &DMatrix<f64>) -> f64 {
    let gram = h.transpose() * h;
    let k = gram.nrows();
    (gram - DMatrix::<f64>::identity(k, k)).norm()
}

#[derive(Debug, Clone)]
pub struct EigenSolution {
    pub partition: Partition,
    /// Sum of the `k` largest eigenvalues.
    pub objective: f64,
    /// `λ_k − λ_{k+1}`.
    pub eigen_gap: f64,
}

/// Hard cluster assignments with values in `[0, k)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClusterLabels {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterLabels {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidInput("empty label vector".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidInput(format!("label {bad} out of range for k = {k}")));
        }
        Ok(Self { labels, k })
    }

    /// Labels with `k` inferred as `max + 1`.
    pub fn from_vec(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(labels, k)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn distinct(&self) -> usize {
        let mut seen = vec![false; self.k];
        self.labels.iter().for_each(|&l| seen[l] = true);
        seen.into_iter().filter(|s| *s).count()
    }
}

/// Top-k eigenspace of `km`, maximizing `Tr(K H Hᵀ)` over orthonormal `H`.
pub fn solve_relaxed_kkm(km: &KernelMatrix, k: usize) -> Result<EigenSolution> {
    solve_relaxed_matrix(km.values(), k)
}

pub(crate) fn solve_relaxed_matrix(values: &DMatrix<f64>, k: usize) -> Result<EigenSolution> {
    let n = values.nrows();
    check_k(k, n)?;
    let eig = linalg::symmetric_eigen(values)?;
    let h = eig.vectors.columns(0, k).into_owned();
    let objective = eig.values[..k].iter().sum();
    let eigen_gap = eig.values[k - 1] - eig.values[k];
    Ok(EigenSolution {
        partition: Partition { h },
        objective,
        eigen_gap,
    })
}

/// Sum of the `k` largest eigenvalues, without eigenvectors.
pub(crate) fn top_k_eigensum(values: &DMatrix<f64>, k: usize) -> Result<f64> {
    check_k(k, values.nrows())?;
    let ev = linalg::symmetric_eigenvalues(values)?;
    Ok(ev[..k].iter().sum())
}

pub(crate) fn check_k(k: usize, n: usize) -> Result<()> {
    if k < 1 || k >= n {
        return Err(Error::InvalidInput(format!("cluster count k = {k} must satisfy 1 <= k < n = {n}")));
    }
    Ok(())
}

/// Rounds a relaxed partition to hard labels: rows are scaled to unit norm
/// (zero rows are kept), then Lloyd's k-means is run `restarts` times from
/// k-means++ seeds and the lowest within-cluster sum of squares wins.
///
/// Restart `r` draws from stream `r` of a ChaCha8 generator seeded with
/// `rng_seed`, so each restart is reproducible on its own.
pub fn discretize(p: &Partition, restarts: usize, rng_seed: u64) -> Result<ClusterLabels> {
    if restarts == 0 {
        return Err(Error::InvalidInput("discretize needs at least one restart".into()));
    }
    let k = p.k();
    let points = normalized_rows(p.h());

    let mut best: Option<(f64, Vec<usize>)> = None;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(r as u64);
        let (cost, assign) = lloyd(&points, k, &mut rng);
        // strict `<` keeps the lowest restart index on ties
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, assign));
        }
    }
    let (_, assign) = best.expect("restarts >= 1");
    ClusterLabels::new(canonical_relabel(&assign, k), k)
}

fn normalized_rows(h: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..h.nrows())
        .map(|i| {
            let row: Vec<f64> = h.row(i).iter().copied().collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.into_iter().map(|v| v / norm).collect()
            } else {
                row
            }
        })
        .collect()
}

/// Renames clusters in order of first appearance.
fn canonical_relabel(assign: &[usize], k: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    assign
        .iter()
        .map(|&a| {
            if map[a] == usize::MAX {
                map[a] = next;
                next += 1;
            }
            map[a]
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[idx].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// One Lloyd run; returns (within-cluster sum of squares, assignment).
fn lloyd<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> (f64, Vec<usize>) {
    let n = points.len();
    let dim = points.first().map_or(0, Vec::len);
    let mut centroids = kmeans_pp(points, k, rng);
    let mut assign = vec![0usize; n];
    let mut dist = vec![0.0; n];

    for _ in 0..LLOYD_MAX_ITER {
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            assign[i] = c;
            dist[i] = d;
        }
        repair_empty_clusters(points, &mut centroids, &mut assign, &mut dist);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assign) {
            counts[c] += 1;
            sums[c].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        let mut shift = 0.0_f64;
        for c in 0..k {
            let updated: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&updated, &centroids[c]).sqrt());
            centroids[c] = updated;
        }
        if shift <= LLOYD_SHIFT_TOL {
            break;
        }
    }

    let mut cost = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (c, d) = nearest(p, &centroids);
        assign[i] = c;
        cost += d;
    }
    (cost, assign)
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty_clusters(points: &[Vec<f64>], centroids: &mut [Vec<f64>], assign: &mut [usize], dist: &mut [f64]) {
    let k = centroids.len();
    loop {
        let mut counts = vec![0usize; k];
        assign.iter().for_each(|&c| counts[c] += 1);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let donor = (0..points.len())
            .filter(|&i| counts[assign[i]] > 1)
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
        let Some(i) = donor else {
            return;
        };
        assign[i] = empty;
        dist[i] = 0.0;
        centroids[empty] = points[i].clone();
    }
}

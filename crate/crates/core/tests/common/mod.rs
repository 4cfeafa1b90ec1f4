//! Independent reference implementations used only by the integration tests.
//! None of these call into the library's numerical code.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use simplemkkm::{KernelMatrix, KernelSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = gaussian_matrix(n, n, rng);
    (&a + a.transpose()) * 0.5
}

/// `AAᵀ` with `A` of shape `n × rank`, scaled to trace `n`.
pub fn random_psd(n: usize, rank: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = gaussian_matrix(n, rank, rng);
    let g = &a * a.transpose();
    let t = g.trace();
    g * (n as f64 / t)
}

pub fn random_kernel_set(n: usize, m: usize, rng: &mut ChaCha8Rng) -> KernelSet {
    let kernels = (0..m)
        .map(|p| {
            let rank = rng.random_range(2..=n);
            KernelMatrix::new(format!("k{p}"), random_psd(n, rank, rng)).unwrap()
        })
        .collect();
    KernelSet::new(kernels).unwrap()
}

/// A point drawn uniformly from the open simplex (normalized exponentials).
pub fn random_simplex_point(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let e: Vec<f64> = (0..m).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Cyclic Jacobi eigenvalue iteration; eigenvalues sorted descending.
pub fn jacobi_eigenvalues(matrix: &DMatrix<f64>) -> Vec<f64> {
    let n = matrix.nrows();
    let mut a = matrix.clone();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
        }
        let scale: f64 = a.iter().map(|v| v * v).sum();
        if off <= 1e-30 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    a[(r, p)] = c * arp - s * arq;
                    a[(r, q)] = s * arp + c * arq;
                }
                for r in 0..n {
                    let apr = a[(p, r)];
                    let aqr = a[(q, r)];
                    a[(p, r)] = c * apr - s * aqr;
                    a[(q, r)] = s * apr + c * aqr;
                }
            }
        }
    }
    let mut values: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    values.sort_by(|x, y| y.total_cmp(x));
    values
}

pub fn top_k_sum(matrix: &DMatrix<f64>, k: usize) -> f64 {
    jacobi_eigenvalues(matrix).iter().take(k).sum()
}

pub fn squared_sum(ks: &KernelSet, gamma: &[f64]) -> DMatrix<f64> {
    let n = ks.n();
    let mut acc = DMatrix::zeros(n, n);
    for (g, km) in gamma.iter().zip(ks.kernels()) {
        acc += km.values() * (g * g);
    }
    acc
}

/// `J(γ)` from the Jacobi oracle.
pub fn oracle_objective(ks: &KernelSet, gamma: &[f64], k: usize) -> f64 {
    top_k_sum(&squared_sum(ks, gamma), k)
}

pub fn spectral_norm(matrix: &DMatrix<f64>) -> f64 {
    jacobi_eigenvalues(matrix).iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Minimizer of `Σ γ_p² a_p` over the simplex by projected gradient descent.
pub fn simplex_qp_oracle(a: &[f64]) -> Vec<f64> {
    let m = a.len();
    let lipschitz = 2.0 * a.iter().fold(0.0_f64, |acc, v| acc.max(*v));
    let step = 1.0 / lipschitz;
    let mut x = vec![1.0 / m as f64; m];
    for _ in 0..200_000 {
        let y: Vec<f64> = x.iter().zip(a).map(|(xi, ai)| xi - step * 2.0 * ai * xi).collect();
        let next = project_simplex(&y);
        let shift = next.iter().zip(&x).fold(0.0_f64, |acc, (p, q)| acc.max((p - q).abs()));
        x = next;
        if shift < 1e-16 {
            break;
        }
    }
    x
}

fn permutations(items: &mut Vec<usize>, start: usize, visit: &mut dyn FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permutations(items, start + 1, visit);
        items.swap(start, i);
    }
}

/// Best accuracy over every injective relabeling of the predicted ids.
pub fn brute_force_accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let size = pred.iter().chain(truth).copied().max().unwrap_or(0) + 1;
    let mut best = 0usize;
    let mut ids: Vec<usize> = (0..size).collect();
    permutations(&mut ids, 0, &mut |perm| {
        let hits = pred.iter().zip(truth).filter(|(p, t)| perm[**p] == **t).count();
        best = best.max(hits);
    });
    best as f64 / pred.len() as f64
}

/// Random `n × k` matrix with orthonormal columns (Gram-Schmidt).
pub fn random_orthonormal(n: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut q = gaussian_matrix(n, k, rng);
    for j in 0..k {
        for i in 0..j {
            let proj = q.column(i).dot(&q.column(j));
            let qi = q.column(i).clone_owned();
            q.column_mut(j).axpy(-proj, &qi, 1.0);
        }
        let norm = q.column(j).norm();
        q.column_mut(j).scale_mut(1.0 / norm);
    }
    q
}

//! Comparison algorithms: uniform-weight kernel k-means, MKKM, MKKM-MM and
//! KAMM-A. All of them return the same [`SolveResult`] as SimpleMKKM.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::kernel::{BallWeights, KernelSet, SimplexWeights};
use crate::linalg;
use crate::simple_mkkm::{IterationRecord, KernelWeights, SolveResult, SolverOptions, SolverTrace};
use crate::spectral::{self, check_k, discretize, EigenSolution};

/// Coefficients at or below this value are treated as degenerate.
pub const DEGENERATE_COEFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AltRecord {
    pub iter: usize,
    pub objective: f64,
    pub gamma: Vec<f64>,
    pub eigen_gap: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AltTrace {
    pub iterations: Vec<AltRecord>,
    pub converged: bool,
    /// Some weight update hit a degenerate coefficient vector.
    pub degenerate: bool,
}

impl AltTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.objective).collect()
    }

    fn to_solver_trace(&self) -> SolverTrace {
        SolverTrace {
            iterations: self
                .iterations
                .iter()
                .map(|r| IterationRecord {
                    iter: r.iter,
                    objective: r.objective,
                    gamma: r.gamma.clone(),
                    alpha: 1.0,
                    eigen_gap: r.eigen_gap,
                    reduced_grad_norm: 0.0,
                    clipped: false,
                })
                .collect(),
        }
    }
}

/// Minimizer of `Σ_p γ_p² a_p` over the simplex for positive `a`:
/// `γ_p = (1/a_p) / Σ_q (1/a_q)`.
///
/// When some `a_p ≤ 1e-12` the objective can be driven to zero by putting all
/// weight on those kernels; they share it equally and the flag is set.
pub fn inverse_weight_update(a: &[f64]) -> (SimplexWeights, bool) {
    let degenerate: Vec<bool> = a.iter().map(|&v| v <= DEGENERATE_COEFF).collect();
    let hits = degenerate.iter().filter(|d| **d).count();
    if hits > 0 {
        let share = 1.0 / hits as f64;
        let gamma = degenerate.iter().map(|&d| if d { share } else { 0.0 }).collect();
        return (SimplexWeights::new(gamma).expect("vertex weights"), true);
    }
    let inv: Vec<f64> = a.iter().map(|v| 1.0 / v).collect();
    let total: f64 = inv.iter().sum();
    let gamma = inv.iter().map(|v| v / total).collect::<Vec<_>>();
    (SimplexWeights::project(&gamma).expect("positive weights"), false)
}

/// Maximizer of `γᵀb` over the nonnegative unit ball: `b⁺ / ‖b⁺‖₂` with
/// negatives clipped. A zero vector falls back to `1/√m` and sets the flag.
pub fn ball_weight_update(b: &[f64]) -> (BallWeights, bool) {
    let clipped: Vec<f64> = b.iter().map(|&v| v.max(0.0)).collect();
    let norm = clipped.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= DEGENERATE_COEFF {
        let u = 1.0 / (b.len() as f64).sqrt();
        return (BallWeights::new(vec![u; b.len()]).expect("uniform ball weights"), true);
    }
    let gamma: Vec<f64> = clipped.iter().map(|v| v / norm).collect();
    let renorm = gamma.iter().map(|v| v * v).sum::<f64>().sqrt();
    let gamma = if renorm > 1.0 { gamma.iter().map(|v| v / renorm).collect() } else { gamma };
    (BallWeights::new(gamma).expect("unit-ball weights"), false)
}

fn max_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

fn residual(ks: &KernelSet, h: &DMatrix<f64>) -> Vec<f64> {
    ks.kernels()
        .iter()
        .map(|km| km.trace() - linalg::alignment(km.values(), h))
        .collect()
}

fn alignments(ks: &KernelSet, h: &DMatrix<f64>) -> Vec<f64> {
    ks.kernels().iter().map(|km| linalg::alignment(km.values(), h)).collect()
}

fn finish(
    sol: EigenSolution,
    weights: KernelWeights,
    objective: f64,
    trace: &AltTrace,
    opts: &SolverOptions,
    seed: u64,
) -> Result<SolveResult> {
    let labels = discretize(&sol.partition, opts.rounding_restarts, seed)?;
    Ok(SolveResult {
        weights,
        partition: sol.partition,
        labels,
        objective,
        trace: trace.to_solver_trace(),
        converged: trace.converged,
    })
}

/// Kernel k-means on the uniform average `(1/m) Σ_p K_p`.
pub fn avg_kkm(ks: &KernelSet, k: usize, opts: &SolverOptions, seed: u64) -> Result<SolveResult> {
    opts.validate()?;
    check_k(k, ks.n())?;
    let m = ks.m();
    let gamma = SimplexWeights::uniform(m);
    let combined = ks.weighted_sum(gamma.as_slice())?;
    let sol = spectral::solve_relaxed_matrix(&combined, k)?;
    let trace = AltTrace {
        iterations: vec![AltRecord {
            iter: 1,
            objective: sol.objective,
            gamma: gamma.as_slice().to_vec(),
            eigen_gap: sol.eigen_gap,
        }],
        converged: true,
        degenerate: false,
    };
    let objective = sol.objective;
    finish(sol, KernelWeights::Simplex(gamma), objective, &trace, opts, seed)
}

/// MKKM by alternating minimization of `Tr(K_γ (I − HHᵀ))`:
/// H-step by top-k eigenvectors of `K_γ`, γ-step by the closed form of
/// [`inverse_weight_update`] applied to `a_p = Tr(K_p (I − HHᵀ))`.
pub fn mkkm(ks: &KernelSet, k: usize, opts: &SolverOptions, seed: u64) -> Result<(SolveResult, AltTrace)> {
    opts.validate()?;
    check_k(k, ks.n())?;
    let mut gamma = SimplexWeights::uniform(ks.m());
    let mut trace = AltTrace::default();

    for t in 1..=opts.max_iter {
        let combined = ks.weighted_sum(&squares(gamma.as_slice()))?;
        let sol = spectral::solve_relaxed_matrix(&combined, k)?;
        trace.iterations.push(AltRecord {
            iter: t,
            objective: linalg::trace(&combined) - sol.objective,
            gamma: gamma.as_slice().to_vec(),
            eigen_gap: sol.eigen_gap,
        });
        let a = residual(ks, sol.partition.h());
        let (next, degenerate) = inverse_weight_update(&a);
        trace.degenerate |= degenerate;
        let change = max_change(next.as_slice(), gamma.as_slice());
        gamma = next;
        if change <= opts.tol {
            trace.converged = true;
            break;
        }
    }

    let combined = ks.weighted_sum(&squares(gamma.as_slice()))?;
    let sol = spectral::solve_relaxed_matrix(&combined, k)?;
    let objective = linalg::trace(&combined) - sol.objective;
    let res = finish(sol, KernelWeights::Simplex(gamma), objective, &trace, opts, seed)?;
    Ok((res, trace))
}

/// MKKM-MM: `min_H max_{γ ∈ Θ} Tr(W_γ (I − HHᵀ))` with `W_γ = Σ γ_p K_p` and
/// `Θ` the nonnegative unit ball, solved by alternation from `γ = 1/√m`.
pub fn mkkm_mm(ks: &KernelSet, k: usize, opts: &SolverOptions, seed: u64) -> Result<(SolveResult, AltTrace)> {
    opts.validate()?;
    check_k(k, ks.n())?;
    let m = ks.m();
    let mut gamma = BallWeights::new(vec![1.0 / (m as f64).sqrt(); m])?;
    let mut trace = AltTrace::default();

    for t in 1..=opts.max_iter {
        let combined = ks.weighted_sum(gamma.as_slice())?;
        let sol = spectral::solve_relaxed_matrix(&combined, k)?;
        trace.iterations.push(AltRecord {
            iter: t,
            objective: linalg::trace(&combined) - sol.objective,
            gamma: gamma.as_slice().to_vec(),
            eigen_gap: sol.eigen_gap,
        });
        let b = residual(ks, sol.partition.h());
        let (next, degenerate) = ball_weight_update(&b);
        trace.degenerate |= degenerate;
        let change = max_change(next.as_slice(), gamma.as_slice());
        gamma = next;
        if change <= opts.tol {
            trace.converged = true;
            break;
        }
    }

    let combined = ks.weighted_sum(gamma.as_slice())?;
    let sol = spectral::solve_relaxed_matrix(&combined, k)?;
    let objective = linalg::trace(&combined) - sol.objective;
    let res = finish(sol, KernelWeights::Ball(gamma), objective, &trace, opts, seed)?;
    Ok((res, trace))
}

/// KAMM-A: alternate `H ← argmax Tr(K_γ HHᵀ)` with
/// `γ ← argmin_Δ Σ γ_p² c_p`, `c_p = Tr(K_p HHᵀ)`.
pub fn kamm_a(ks: &KernelSet, k: usize, opts: &SolverOptions, seed: u64) -> Result<(SolveResult, AltTrace)> {
    opts.validate()?;
    check_k(k, ks.n())?;
    let mut gamma = SimplexWeights::uniform(ks.m());
    let mut trace = AltTrace::default();

    for t in 1..=opts.max_iter {
        let combined = ks.weighted_sum(&squares(gamma.as_slice()))?;
        let sol = spectral::solve_relaxed_matrix(&combined, k)?;
        trace.iterations.push(AltRecord {
            iter: t,
            objective: sol.objective,
            gamma: gamma.as_slice().to_vec(),
            eigen_gap: sol.eigen_gap,
        });
        let c = alignments(ks, sol.partition.h());
        let (next, degenerate) = inverse_weight_update(&c);
        trace.degenerate |= degenerate;
        let change = max_change(next.as_slice(), gamma.as_slice());
        gamma = next;
        if change <= opts.tol {
            trace.converged = true;
            break;
        }
    }

    let combined = ks.weighted_sum(&squares(gamma.as_slice()))?;
    let sol = spectral::solve_relaxed_matrix(&combined, k)?;
    let objective = sol.objective;
    let res = finish(sol, KernelWeights::Simplex(gamma), objective, &trace, opts, seed)?;
    Ok((res, trace))
}

fn squares(gamma: &[f64]) -> Vec<f64> {
    gamma.iter().map(|g| g * g).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelMatrix;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15)
    }

    #[test]
    fn inverse_update_examples() {
        let (g, deg) = inverse_weight_update(&[1.0, 1.0]);
        assert_eq!(g.as_slice(), &[0.5, 0.5]);
        assert!(!deg);
        let (g, _) = inverse_weight_update(&[1.0, 3.0]);
        assert!(close(g.as_slice(), &[0.75, 0.25]));
        let (g, _) = inverse_weight_update(&[2.0, 2.0]);
        assert_eq!(g.as_slice(), &[0.5, 0.5]);
        let (g, _) = inverse_weight_update(&[1.0, 4.0]);
        assert!(close(g.as_slice(), &[0.8, 0.2]));
    }

    #[test]
    fn inverse_update_degenerate_goes_to_vertex() {
        let (g, deg) = inverse_weight_update(&[3.0, 0.0, 2.0]);
        assert_eq!(g.as_slice(), &[0.0, 1.0, 0.0]);
        assert!(deg);
        let (g, _) = inverse_weight_update(&[-1e-14, 1.0, 0.0]);
        assert_eq!(g.as_slice(), &[0.5, 0.0, 0.5]);
    }

    #[test]
    fn ball_update_examples() {
        let (g, deg) = ball_weight_update(&[3.0, 4.0]);
        assert!(close(g.as_slice(), &[0.6, 0.8]));
        assert!(!deg);
        let (g, _) = ball_weight_update(&[1.0, 0.0]);
        assert_eq!(g.as_slice(), &[1.0, 0.0]);
        let (g, deg) = ball_weight_update(&[0.0, -2.0]);
        assert!(deg);
        assert!(close(g.as_slice(), &[std::f64::consts::FRAC_1_SQRT_2; 2]));
        let (g, _) = ball_weight_update(&[-1.0, 2.0]);
        assert_eq!(g.as_slice(), &[0.0, 1.0]);
    }

    fn smooth(n: usize, width: f64) -> KernelMatrix {
        KernelMatrix::new(
            "rbf",
            DMatrix::from_fn(n, n, |i, j| (-((i as f64 - j as f64).powi(2)) / width).exp()),
        )
        .unwrap()
    }

    #[test]
    fn single_kernel_reduces_to_kernel_kmeans() {
        let km = smooth(8, 6.0);
        let ks = KernelSet::new(vec![km.clone()]).unwrap();
        let opts = SolverOptions::default();
        let direct = spectral::solve_relaxed_kkm(&km, 2).unwrap();
        let (r, _) = mkkm(&ks, 2, &opts, 0).unwrap();
        assert_eq!(r.weights.as_slice(), &[1.0]);
        assert_eq!(r.partition, direct.partition);
        let (r, _) = kamm_a(&ks, 2, &opts, 0).unwrap();
        assert_eq!(r.weights.as_slice(), &[1.0]);
        let (r, t) = mkkm_mm(&ks, 2, &opts, 0).unwrap();
        assert_eq!(r.weights.as_slice(), &[1.0]);
        assert!(t.converged);
        let r = avg_kkm(&ks, 2, &opts, 0).unwrap();
        assert_eq!(r.partition, direct.partition);
    }

    #[test]
    fn avg_kkm_duplicate_kernels() {
        let km = smooth(8, 5.0);
        let opts = SolverOptions::default();
        let one = avg_kkm(&KernelSet::new(vec![km.clone()]).unwrap(), 3, &opts, 9).unwrap();
        let two = avg_kkm(&KernelSet::new(vec![km.clone(), km]).unwrap(), 3, &opts, 9).unwrap();
        assert_eq!(one.labels, two.labels);
        assert_eq!(one.objective, two.objective);
    }

    #[test]
    fn mkkm_mm_identical_kernels_uniform() {
        let km = smooth(7, 3.0);
        let ks = KernelSet::new(vec![km.clone(), km.clone(), km]).unwrap();
        let (r, _) = mkkm_mm(&ks, 2, &SolverOptions::default(), 0).unwrap();
        for &g in r.weights.as_slice() {
            assert!((g - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn mkkm_objective_monotone() {
        let ks = KernelSet::new(vec![smooth(12, 2.0), smooth(12, 20.0), KernelMatrix::identity("i", 12)]).unwrap();
        let (_, t) = mkkm(&ks, 3, &SolverOptions::default(), 0).unwrap();
        let obj = t.objectives();
        assert!(obj.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{obj:?}");
    }
}

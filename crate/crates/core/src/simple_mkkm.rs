//! SimpleMKKM: minimize `J(γ) = max_H Tr(K_γ H Hᵀ)` over the simplex with
//! reduced gradient descent.
//!
//! `J` is the optimal value of a kernel k-means relaxation, so it equals the
//! sum of the k largest eigenvalues of `K_γ = Σ γ_p² K_p`. Its gradient is
//! `∂J/∂γ_p = 2 γ_p Tr(K_p H* H*ᵀ)` with `H*` the top-k eigenvectors. Each outer
//! iteration eliminates the equality constraint through a pivot coordinate
//! `u` (the largest weight), builds a feasible descent direction, and takes an
//! Armijo backtracking step capped so no weight turns negative.
//!
//! The same machinery run as ascent (`solve_kamm_r`) maximizes `J` over γ.

use crate::error::{Error, Result};
use crate::kernel::{squared_combination, BallWeights, KernelSet, SimplexWeights};
use crate::spectral::{self, check_k, discretize, ClusterLabels, Partition};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Stop once `max_p |γ_p⁽ᵗ⁺¹⁾ − γ_p⁽ᵗ⁾| ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub max_backtracks: usize,
    /// Lloyd restarts used when rounding the final partition.
    pub rounding_restarts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 100,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            max_backtracks: 30,
            rounding_restarts: 10,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidInput(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::InvalidInput(format!("armijo_c must lie in (0, 1), got {}", self.armijo_c)));
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return Err(Error::InvalidInput(format!(
                "armijo_shrink must lie in (0, 1), got {}",
                self.armijo_shrink
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be at least 1".into()));
        }
        if self.rounding_restarts == 0 {
            return Err(Error::InvalidInput("rounding_restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// One outer iteration, recorded before the step is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub gamma: Vec<f64>,
    /// Accepted step length (0 when no step was taken).
    pub alpha: f64,
    pub eigen_gap: f64,
    /// `‖∇_red J‖_∞` at this iterate.
    pub reduced_grad_norm: f64,
    /// Some zero weight had its direction component clipped.
    pub clipped: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverTrace {
    pub iterations: Vec<IterationRecord>,
}

impl SolverTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.objective).collect()
    }
}

/// Learned weights: simplex weights for the squared combination, or unit-ball
/// weights for the linear combination used by MKKM-MM.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelWeights {
    Simplex(SimplexWeights),
    Ball(BallWeights),
}

impl KernelWeights {
    pub fn as_slice(&self) -> &[f64] {
        match self {
            KernelWeights::Simplex(w) => w.as_slice(),
            KernelWeights::Ball(w) => w.as_slice(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub weights: KernelWeights,
    pub partition: Partition,
    pub labels: ClusterLabels,
    /// Final value of the algorithm's own criterion. For SimpleMKKM,
    /// KAMM-R and KAMM-A this is `J(γ*)`; for MKKM and MKKM-MM it is
    /// `Tr(K(I − HHᵀ))` of the learned combination; for Avg-KKM it is the
    /// top-k eigensum of the uniform combination.
    pub objective: f64,
    pub trace: SolverTrace,
    pub converged: bool,
}

impl SolveResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// `J`, its gradient and the eigen gap at `γ`, with the maximizing partition.
#[derive(Debug, Clone)]
pub struct ObjectiveGrad {
    pub objective: f64,
    pub grad: Vec<f64>,
    pub eigen_gap: f64,
    pub partition: Partition,
}

/// `J(γ)` for an arbitrary coefficient vector (eigenvalues only).
pub fn objective(ks: &KernelSet, gamma: &[f64], k: usize) -> Result<f64> {
    let combined = squared_combination(ks, gamma)?;
    spectral::top_k_eigensum(&combined, k)
}

pub fn objective_and_grad(ks: &KernelSet, w: &SimplexWeights, k: usize) -> Result<ObjectiveGrad> {
    objective_and_grad_raw(ks, w.as_slice(), k)
}

/// Gradient evaluation at an arbitrary coefficient vector; the formula
/// `2 γ_p Tr(K_p H* H*ᵀ)` holds off the simplex too.
pub fn objective_and_grad_raw(ks: &KernelSet, gamma: &[f64], k: usize) -> Result<ObjectiveGrad> {
    let combined = squared_combination(ks, gamma)?;
    let sol = spectral::solve_relaxed_matrix(&combined, k)?;
    let grad = gamma
        .iter()
        .zip(ks.kernels())
        .map(|(&g, km)| {
            if g == 0.0 {
                0.0
            } else {
                2.0 * g * sol.partition.alignment(km.values())
            }
        })
        .collect();
    Ok(ObjectiveGrad {
        objective: sol.objective,
        grad,
        eigen_gap: sol.eigen_gap,
        partition: sol.partition,
    })
}

/// Index of the largest weight; the first one on ties.
pub fn pivot_index(w: &SimplexWeights) -> usize {
    let g = w.as_slice();
    let mut u = 0;
    for (p, &v) in g.iter().enumerate() {
        if v > g[u] {
            u = p;
        }
    }
    u
}

/// Reduced gradient with respect to pivot `u`:
/// `rg_p = g_p − g_u` for `p ≠ u` and `rg_u = Σ_{p≠u} (g_u − g_p)`.
pub fn reduced_gradient(grad: &[f64], w: &SimplexWeights) -> (Vec<f64>, usize) {
    let u = pivot_index(w);
    let gu = grad[u];
    let mut rg: Vec<f64> = grad.iter().map(|&g| g - gu).collect();
    rg[u] = grad
        .iter()
        .enumerate()
        .filter(|&(p, _)| p != u)
        .map(|(_, &g)| gu - g)
        .sum();
    (rg, u)
}

/// Feasible descent direction. Components with `γ_p = 0` and `rg_p > 0` are
/// frozen at zero; the pivot component absorbs the rest so `Σ d_p = 0`.
pub fn descent_direction(rg: &[f64], w: &SimplexWeights, u: usize) -> Vec<f64> {
    direction_with_clipping(rg, w, u).0
}

fn direction_with_clipping(rg: &[f64], w: &SimplexWeights, u: usize) -> (Vec<f64>, bool) {
    let gamma = w.as_slice();
    let mut d = vec![0.0; rg.len()];
    let mut clipped = false;
    for p in 0..rg.len() {
        if p == u {
            continue;
        }
        if gamma[p] == 0.0 && rg[p] > 0.0 {
            clipped = true;
        } else {
            d[p] = -rg[p];
        }
    }
    d[u] = -d
        .iter()
        .enumerate()
        .filter(|&(p, _)| p != u)
        .map(|(_, v)| v)
        .sum::<f64>();
    (d, clipped)
}

/// Largest `α` keeping `γ + α d ≥ 0`, with the index that hits zero first.
pub fn max_feasible_step(w: &SimplexWeights, d: &[f64]) -> (f64, Option<usize>) {
    let mut best = (f64::INFINITY, None);
    for (p, (&g, &dp)) in w.as_slice().iter().zip(d).enumerate() {
        if dp < 0.0 {
            let a = g / -dp;
            if a < best.0 {
                best = (a, Some(p));
            }
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct LineSearch {
    pub alpha: f64,
    pub objective: f64,
    /// The accepted iterate (`None` when `alpha == 0`).
    pub gamma: Option<SimplexWeights>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sense {
    Minimize,
    Maximize,
}

impl Sense {
    fn sign(self) -> f64 {
        match self {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        }
    }
}

/// Backtracking Armijo search along `d` from `γ`.
///
/// Trial steps are `α₀ · shrinkⁱ` for `i < max_backtracks`, with
/// `α₀ = min(α_max, 1/‖d‖_∞)` and `α_max` the feasibility cap. The first step
/// with `J(γ + αd) ≤ J0 + c·α·gradᵀd` is accepted.
pub fn line_search_armijo(
    ks: &KernelSet,
    w: &SimplexWeights,
    d: &[f64],
    j0: f64,
    grad: &[f64],
    k: usize,
    opts: &SolverOptions,
) -> Result<LineSearch> {
    line_search(ks, w, d, j0, grad, k, opts, Sense::Minimize)
}

#[allow(clippy::too_many_arguments)]
fn line_search(
    ks: &KernelSet,
    w: &SimplexWeights,
    d: &[f64],
    j0: f64,
    grad: &[f64],
    k: usize,
    opts: &SolverOptions,
    sense: Sense,
) -> Result<LineSearch> {
    let no_step = LineSearch {
        alpha: 0.0,
        objective: j0,
        gamma: None,
    };
    let d_inf = d.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if d_inf == 0.0 {
        return Ok(no_step);
    }
    let s = sense.sign();
    let f0 = s * j0;
    let slope: f64 = s * grad.iter().zip(d).map(|(g, dp)| g * dp).sum::<f64>();
    let (alpha_max, blocking) = max_feasible_step(w, d);
    let mut alpha = alpha_max.min(1.0 / d_inf);

    for _ in 0..opts.max_backtracks {
        let candidate = take_step(w, d, alpha, alpha_max, blocking)?;
        let j = objective(ks, candidate.as_slice(), k)?;
        if !j.is_finite() {
            return Err(Error::Numeric(format!("objective is {j} at step {alpha}")));
        }
        if s * j <= f0 + opts.armijo_c * alpha * slope {
            return Ok(LineSearch {
                alpha,
                objective: j,
                gamma: Some(candidate),
            });
        }
        alpha *= opts.armijo_shrink;
    }
    Ok(no_step)
}

fn take_step(
    w: &SimplexWeights,
    d: &[f64],
    alpha: f64,
    alpha_max: f64,
    blocking: Option<usize>,
) -> Result<SimplexWeights> {
    let mut raw: Vec<f64> = w.as_slice().iter().zip(d).map(|(g, dp)| g + alpha * dp).collect();
    if alpha == alpha_max {
        if let Some(b) = blocking {
            raw[b] = 0.0;
        }
    }
    SimplexWeights::project(&raw)
}

/// Runs reduced gradient descent from the uniform weights.
///
/// Restart randomness only enters through the rounding of the final
/// partition, which uses `rng_seed`.
pub fn solve(ks: &KernelSet, k: usize, opts: &SolverOptions, rng_seed: u64) -> Result<SolveResult> {
    run(ks, k, opts, rng_seed, Sense::Minimize)
}

/// Reduced gradient ascent on the same objective (maximize over γ and H).
pub fn solve_kamm_r(ks: &KernelSet, k: usize, opts: &SolverOptions, rng_seed: u64) -> Result<SolveResult> {
    run(ks, k, opts, rng_seed, Sense::Maximize)
}

fn run(ks: &KernelSet, k: usize, opts: &SolverOptions, rng_seed: u64, sense: Sense) -> Result<SolveResult> {
    opts.validate()?;
    check_k(k, ks.n())?;
    let s = sense.sign();
    let mut gamma = SimplexWeights::uniform(ks.m());
    let mut trace = SolverTrace::default();
    let mut converged = false;

    for t in 1..=opts.max_iter {
        let og = objective_and_grad(ks, &gamma, k)?;
        if og.eigen_gap < 1e-8 {
            log::debug!("iteration {t}: near-degenerate eigen gap {:e}", og.eigen_gap);
        }
        let oriented: Vec<f64> = og.grad.iter().map(|g| s * g).collect();
        let (rg, u) = reduced_gradient(&oriented, &gamma);
        let (d, clipped) = direction_with_clipping(&rg, &gamma, u);
        let ls = line_search(ks, &gamma, &d, og.objective, &og.grad, k, opts, sense)?;

        trace.iterations.push(IterationRecord {
            iter: t,
            objective: og.objective,
            gamma: gamma.as_slice().to_vec(),
            alpha: ls.alpha,
            eigen_gap: og.eigen_gap,
            reduced_grad_norm: rg.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())),
            clipped,
        });

        let Some(next) = ls.gamma else {
            // zero direction or exhausted backtracking: no further progress
            converged = true;
            break;
        };
        let change = next
            .as_slice()
            .iter()
            .zip(gamma.as_slice())
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        gamma = next;
        if change <= opts.tol {
            converged = true;
            break;
        }
    }

    let combined = squared_combination(ks, gamma.as_slice())?;
    let sol = spectral::solve_relaxed_matrix(&combined, k)?;
    let labels = discretize(&sol.partition, opts.rounding_restarts, rng_seed)?;
    Ok(SolveResult {
        weights: KernelWeights::Simplex(gamma),
        partition: sol.partition,
        labels,
        objective: sol.objective,
        trace,
        converged,
    })
}

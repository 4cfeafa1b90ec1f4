//! Kernel matrices, kernel sets and the two weighted combination rules.
//!
//! A [`KernelMatrix`] is always square, finite and exactly symmetric: the
//! constructor symmetrizes its input as `(K + Kᵀ) / 2`. Positive
//! semidefiniteness is checked (and optionally repaired) by
//! [`validate_and_repair`].

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// Absolute tolerance below which an input is considered symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Relative PSD tolerance: `λ_min ≥ −PSD_TOL · λ_max`.
pub const PSD_TOL: f64 = 1e-8;
/// Tolerance on `Σγ = 1` for simplex weights.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    name: String,
    values: DMatrix<f64>,
}

impl KernelMatrix {
    /// Builds a kernel matrix, rejecting non-square or non-finite input and
    /// symmetrizing whatever asymmetry is present.
    pub fn new(name: impl Into<String>, values: DMatrix<f64>) -> Result<Self> {
        let name = name.into();
        check_square_finite(&name, &values)?;
        let values = if is_exactly_symmetric(&values) {
            values
        } else {
            linalg::symmetrize(&values)
        };
        Ok(Self { name, values })
    }

    pub fn identity(name: impl Into<String>, n: usize) -> Self {
        Self {
            name: name.into(),
            values: DMatrix::identity(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.values)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Spectral norm (largest absolute eigenvalue).
    pub fn spectral_norm(&self) -> Result<f64> {
        let ev = linalg::symmetric_eigenvalues(&self.values)?;
        Ok(ev.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())))
    }
}

fn check_square_finite(name: &str, values: &DMatrix<f64>) -> Result<()> {
    if values.nrows() != values.ncols() {
        return Err(Error::NotSquare {
            name: name.to_string(),
            rows: values.nrows(),
            cols: values.ncols(),
        });
    }
    if values.nrows() == 0 {
        return Err(Error::InvalidInput(format!("matrix `{name}` is empty")));
    }
    let n = values.nrows();
    for j in 0..n {
        for i in 0..n {
            if !values[(i, j)].is_finite() {
                return Err(Error::NonFinite {
                    name: name.to_string(),
                    row: i,
                    col: j,
                });
            }
        }
    }
    Ok(())
}

fn is_exactly_symmetric(values: &DMatrix<f64>) -> bool {
    let n = values.nrows();
    (0..n).all(|i| (0..i).all(|j| values[(i, j)] == values[(j, i)]))
}

fn max_asymmetry(values: &DMatrix<f64>) -> f64 {
    let n = values.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((values[(i, j)] - values[(j, i)]).abs());
        }
    }
    worst
}

/// What [`validate_and_repair`] found and changed.
#[derive(Debug, Clone, PartialEq)]
pub struct RepairReport {
    pub name: String,
    /// Largest `|K_ij − K_ji|` of the raw input.
    pub max_asymmetry: f64,
    /// Input differed from its transpose, so symmetrization changed entries.
    pub symmetrized: bool,
    /// Input asymmetry exceeded [`SYMMETRY_TOL`].
    pub asymmetry_warning: bool,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Eigenvalues above `n · ε · λ_max`.
    pub rank_estimate: usize,
    /// PSD within [`PSD_TOL`] before any repair.
    pub psd: bool,
    /// Number of negative eigenvalues clipped to zero (0 when not repaired).
    pub clipped_eigenvalues: usize,
    pub repaired: bool,
}

/// Symmetrizes `values` and checks positive semidefiniteness. With `repair`
/// set, an indefinite matrix is rebuilt from its eigendecomposition with the
/// negative eigenvalues clipped to zero.
pub fn validate_and_repair(
    name: impl Into<String>,
    values: DMatrix<f64>,
    repair: bool,
) -> Result<(KernelMatrix, RepairReport)> {
    let name = name.into();
    check_square_finite(&name, &values)?;
    let asym = max_asymmetry(&values);
    let km = KernelMatrix::new(name.clone(), values)?;
    let n = km.n();

    let eig = linalg::symmetric_eigen(km.values())?;
    let max_ev = eig.values[0];
    let min_ev = *eig.values.last().expect("n >= 1");
    let scale = max_ev.abs().max(min_ev.abs());
    let psd = min_ev >= -PSD_TOL * scale.max(f64::MIN_POSITIVE);
    let rank_tol = n as f64 * f64::EPSILON * scale;
    let rank_estimate = eig.values.iter().filter(|&&v| v > rank_tol).count();

    let mut report = RepairReport {
        name: name.clone(),
        max_asymmetry: asym,
        symmetrized: asym > 0.0,
        asymmetry_warning: asym > SYMMETRY_TOL,
        min_eigenvalue: min_ev,
        max_eigenvalue: max_ev,
        rank_estimate,
        psd,
        clipped_eigenvalues: 0,
        repaired: false,
    };

    if psd || !repair {
        return Ok((km, report));
    }

    let clipped: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();
    report.clipped_eigenvalues = eig.values.iter().filter(|&&v| v < 0.0).count();
    report.repaired = true;
    let v = &eig.vectors;
    let mut scaled = v.clone();
    for (c, &lambda) in clipped.iter().enumerate() {
        scaled.column_mut(c).scale_mut(lambda);
    }
    let rebuilt = &scaled * v.transpose();
    let km = KernelMatrix::new(name, linalg::symmetrize(&rebuilt))?;
    Ok((km, report))
}

/// Returns `K · (n / Tr(K))`, so the result has trace `n`.
pub fn trace_normalize(km: &KernelMatrix) -> Result<KernelMatrix> {
    let tr = km.trace();
    if tr.is_nan() || tr <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "kernel `{}` has non-positive trace {tr}; cannot trace-normalize",
            km.name
        )));
    }
    let n = km.n() as f64;
    if tr == n {
        return Ok(km.clone());
    }
    Ok(KernelMatrix {
        name: km.name.clone(),
        values: &km.values * (n / tr),
    })
}

/// An ordered, non-empty list of kernels over the same `n` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet {
    kernels: Vec<KernelMatrix>,
}

impl KernelSet {
    pub fn new(kernels: Vec<KernelMatrix>) -> Result<Self> {
        let first = kernels
            .first()
            .ok_or_else(|| Error::InvalidInput("a kernel set needs at least one kernel".into()))?;
        let n = first.n();
        if let Some(bad) = kernels.iter().find(|k| k.n() != n) {
            return Err(Error::DimensionMismatch(format!(
                "kernel `{}` is {}x{}, expected {n}x{n}",
                bad.name,
                bad.n(),
                bad.n()
            )));
        }
        Ok(Self { kernels })
    }

    pub fn n(&self) -> usize {
        self.kernels[0].n()
    }

    pub fn m(&self) -> usize {
        self.kernels.len()
    }

    pub fn kernels(&self) -> &[KernelMatrix] {
        &self.kernels
    }

    pub fn get(&self, p: usize) -> &KernelMatrix {
        &self.kernels[p]
    }

    pub fn names(&self) -> Vec<String> {
        self.kernels.iter().map(|k| k.name.clone()).collect()
    }

    /// Trace-normalizes every member.
    pub fn trace_normalized(&self) -> Result<Self> {
        let kernels = self
            .kernels
            .iter()
            .map(trace_normalize)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { kernels })
    }

    /// `Σ_p c_p K_p` for arbitrary real coefficients.
    pub fn weighted_sum(&self, coeffs: &[f64]) -> Result<DMatrix<f64>> {
        if coeffs.len() != self.m() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} kernels",
                coeffs.len(),
                self.m()
            )));
        }
        let n = self.n();
        let mut acc: DMatrix<f64> = DMatrix::zeros(n, n);
        for (c, km) in coeffs.iter().zip(&self.kernels) {
            if *c != 0.0 {
                acc.zip_apply(&km.values, |a, b| *a += *c * b);
            }
        }
        Ok(acc)
    }
}

/// Kernel weights on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(gamma: Vec<f64>) -> Result<Self> {
        if gamma.is_empty() {
            return Err(Error::InvalidInput("empty weight vector".into()));
        }
        if let Some(g) = gamma.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(Error::InvalidInput(format!("simplex weight {g} is negative or non-finite")));
        }
        let s: f64 = gamma.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidInput(format!("simplex weights sum to {s}, not 1")));
        }
        Ok(Self(gamma))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    /// Clips negatives to zero and rescales to sum exactly to one (up to
    /// rounding). Fails when nothing positive remains.
    pub fn project(raw: &[f64]) -> Result<Self> {
        let clipped: Vec<f64> = raw.iter().map(|&g| if g > 0.0 { g } else { 0.0 }).collect();
        let s: f64 = clipped.iter().sum();
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::Numeric(format!("cannot project {raw:?} onto the simplex")));
        }
        Ok(Self(clipped.into_iter().map(|g| g / s).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Nonnegative kernel weights inside the Euclidean unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct BallWeights(Vec<f64>);

impl BallWeights {
    pub fn new(gamma: Vec<f64>) -> Result<Self> {
        if gamma.is_empty() {
            return Err(Error::InvalidInput("empty weight vector".into()));
        }
        if let Some(g) = gamma.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(Error::InvalidInput(format!("ball weight {g} is negative or non-finite")));
        }
        let norm = gamma.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > 1.0 + SIMPLEX_TOL {
            return Err(Error::InvalidInput(format!("ball weights have norm {norm} > 1")));
        }
        Ok(Self(gamma))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// `Σ_p γ_p² K_p` for raw coefficients (no simplex requirement).
pub fn squared_combination(ks: &KernelSet, gamma: &[f64]) -> Result<DMatrix<f64>> {
    let sq: Vec<f64> = gamma.iter().map(|g| g * g).collect();
    ks.weighted_sum(&sq)
}

/// `K_γ = Σ_p γ_p² K_p`.
pub fn combine_squared(ks: &KernelSet, w: &SimplexWeights) -> Result<KernelMatrix> {
    let values = squared_combination(ks, w.as_slice())?;
    Ok(KernelMatrix {
        name: "combined".into(),
        values,
    })
}

/// `W_γ = Σ_p γ_p K_p`.
pub fn combine_linear(ks: &KernelSet, w: &BallWeights) -> Result<KernelMatrix> {
    let values = ks.weighted_sum(w.as_slice())?;
    Ok(KernelMatrix {
        name: "combined".into(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn set(ms: Vec<DMatrix<f64>>) -> KernelSet {
        KernelSet::new(
            ms.into_iter()
                .enumerate()
                .map(|(i, m)| KernelMatrix::new(format!("k{i}"), m).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn squared_single_kernel_identity() {
        let k = dmatrix![2.0, 0.5; 0.5, 1.0];
        let ks = set(vec![k.clone()]);
        let out = combine_squared(&ks, &SimplexWeights::new(vec![1.0]).unwrap()).unwrap();
        assert_eq!(out.values(), &k);
    }

    #[test]
    fn squared_two_identities() {
        let ks = set(vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2) * 2.0]);
        let out = combine_squared(&ks, &SimplexWeights::new(vec![0.5, 0.5]).unwrap()).unwrap();
        assert_eq!(out.values(), &(DMatrix::identity(2, 2) * 0.75));
    }

    #[test]
    fn squared_vertex_annihilates_other_kernel() {
        let k1 = dmatrix![1.0, 0.25; 0.25, 3.0];
        let ks = set(vec![k1.clone(), dmatrix![7.0, -1.0; -1.0, 9.0]]);
        let out = combine_squared(&ks, &SimplexWeights::new(vec![1.0, 0.0]).unwrap()).unwrap();
        assert_eq!(out.values(), &k1);
    }

    #[test]
    fn linear_cases() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        let ks = set(vec![i2.clone(), i2.clone()]);
        let out = combine_linear(&ks, &BallWeights::new(vec![1.0, 0.0]).unwrap()).unwrap();
        assert_eq!(out.values(), &i2);

        let r = std::f64::consts::FRAC_1_SQRT_2;
        let out = combine_linear(&ks, &BallWeights::new(vec![r, r]).unwrap()).unwrap();
        assert!((out.values() - &i2 * 2f64.sqrt()).abs().max() < 1e-15);

        let out = combine_linear(&ks, &BallWeights::new(vec![0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(out.values(), &DMatrix::zeros(2, 2));
    }

    #[test]
    fn combination_length_mismatch() {
        let ks = set(vec![DMatrix::identity(2, 2)]);
        let err = combine_squared(&ks, &SimplexWeights::uniform(2)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
        let err = combine_linear(&ks, &BallWeights::new(vec![0.5, 0.5]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn validate_symmetric_psd_is_untouched() {
        let k = dmatrix![2.0, 0.3, 0.1; 0.3, 1.5, 0.2; 0.1, 0.2, 1.0];
        let (out, report) = validate_and_repair("k", k.clone(), true).unwrap();
        assert_eq!(out.values(), &k);
        assert!(report.psd);
        assert!(!report.repaired);
        assert!(!report.symmetrized);
    }

    #[test]
    fn validate_symmetrizes() {
        let (out, report) = validate_and_repair("k", dmatrix![1.0, 0.1; 0.3, 1.0], false).unwrap();
        assert!((out.values()[(0, 1)] - 0.2).abs() < 1e-15);
        assert_eq!(out.values()[(0, 1)], out.values()[(1, 0)]);
        assert!(report.symmetrized);
        assert!(report.asymmetry_warning);
    }

    #[test]
    fn validate_clips_negative_eigenvalue() {
        let (out, report) = validate_and_repair("k", dmatrix![1.0, 0.0; 0.0, -0.5], true).unwrap();
        assert!((out.values() - dmatrix![1.0, 0.0; 0.0, 0.0]).abs().max() < 1e-15);
        assert!(report.repaired);
        assert_eq!(report.clipped_eigenvalues, 1);
        assert!(!report.psd);

        let (out, report) = validate_and_repair("k", dmatrix![1.0, 0.0; 0.0, -0.5], false).unwrap();
        assert_eq!(out.values()[(1, 1)], -0.5);
        assert!(!report.repaired);
    }

    #[test]
    fn validate_rejects_bad_input() {
        let err = validate_and_repair("k", DMatrix::zeros(2, 3), false).unwrap_err();
        assert!(matches!(err, Error::NotSquare { .. }));
        let err = validate_and_repair("k", dmatrix![1.0, f64::NAN; 0.0, 1.0], false).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 0, col: 1, .. }));
        let err = KernelMatrix::new("k", dmatrix![f64::INFINITY]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn trace_normalize_cases() {
        let i3 = KernelMatrix::identity("i", 3);
        assert_eq!(trace_normalize(&i3).unwrap(), i3);

        let k = KernelMatrix::new("k", DMatrix::identity(4, 4) * 2.0).unwrap();
        assert_eq!(trace_normalize(&k).unwrap().values(), &DMatrix::identity(4, 4));

        let k = KernelMatrix::new("k", dmatrix![3.0, 0.0; 0.0, 1.0]).unwrap();
        assert_eq!(trace_normalize(&k).unwrap().values(), &dmatrix![1.5, 0.0; 0.0, 0.5]);

        let z = KernelMatrix::new("z", DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(trace_normalize(&z), Err(Error::InvalidInput(_))));
        let neg = KernelMatrix::new("neg", -DMatrix::identity(2, 2)).unwrap();
        assert!(trace_normalize(&neg).is_err());
    }

    #[test]
    fn kernel_set_invariants() {
        assert!(KernelSet::new(vec![]).is_err());
        let err = KernelSet::new(vec![KernelMatrix::identity("a", 3), KernelMatrix::identity("b", 4)]).unwrap_err();
        assert!(err.to_string().contains("`b`"));
    }

    #[test]
    fn weight_invariants() {
        assert!(SimplexWeights::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexWeights::new(vec![-0.1, 1.1]).is_err());
        assert!(SimplexWeights::new(vec![0.25, 0.75]).is_ok());
        assert!(BallWeights::new(vec![0.8, 0.8]).is_err());
        assert!(BallWeights::new(vec![0.6, 0.8]).is_ok());
        assert!(BallWeights::new(vec![-0.1, 0.0]).is_err());
        let p = SimplexWeights::project(&[2.0, -1.0, 2.0]).unwrap();
        assert_eq!(p.as_slice(), &[0.5, 0.0, 0.5]);
    }
}

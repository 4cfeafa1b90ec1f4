//! Kernel-set persistence and synthetic benchmark generation.
//!
//! A dataset directory holds a `manifest.toml`, one file per kernel and an
//! optional labels file:
//!
//! ```toml
//! n = 4
//! m = 1
//! k_true = 2                  # optional
//! labels_path = "labels.txt"  # optional, one integer label per line
//! repair_psd = false          # optional, clip negative eigenvalues on load
//! trace_normalize = true      # optional, default true: scale each kernel to trace n
//!
//! [[kernels]]
//! name = "rbf"
//! path = "rbf.kmx"
//! format = "kmx"              # or "csv"
//! ```
//!
//! Paths are relative to the manifest's directory.
//!
//! `kmx` is a bit-exact binary layout: the 8-byte magic `KMXMAT01`, the
//! dimension `n` as a little-endian `u32`, then `n·n` little-endian IEEE-754
//! `f64` values in row-major order. CSV files have no header, one matrix row
//! per line, comma-separated decimal floats.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{trace_normalize, validate_and_repair, KernelMatrix, KernelSet, RepairReport};
use crate::spectral::ClusterLabels;

pub const KMX_MAGIC: &[u8; 8] = b"KMXMAT01";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const LABELS_FILE: &str = "labels.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFormat {
    Csv,
    Kmx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelEntry {
    pub name: String,
    pub path: String,
    pub format: KernelFormat,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_true: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<String>,
    #[serde(default)]
    pub repair_psd: bool,
    #[serde(default = "default_true")]
    pub trace_normalize: bool,
    pub kernels: Vec<KernelEntry>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::malformed("manifest", path, e))?;
        if manifest.m == 0 || manifest.kernels.is_empty() {
            return Err(Error::malformed("manifest", path, "at least one kernel is required"));
        }
        if manifest.m != manifest.kernels.len() {
            return Err(Error::malformed(
                "manifest",
                path,
                format!("m = {} but {} kernel entries are listed", manifest.m, manifest.kernels.len()),
            ));
        }
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::malformed("manifest", path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Everything read from a manifest directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub kernels: KernelSet,
    pub labels: Option<ClusterLabels>,
    /// Validation report per kernel, in manifest order.
    pub reports: Vec<RepairReport>,
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads the kernels and labels named by a manifest.
pub fn load(manifest_path: &Path) -> Result<(KernelSet, Option<ClusterLabels>)> {
    let ds = load_dataset(manifest_path)?;
    Ok((ds.kernels, ds.labels))
}

pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = Manifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let mut kernels = Vec::with_capacity(manifest.m);
    let mut reports = Vec::with_capacity(manifest.m);
    for entry in &manifest.kernels {
        let path = resolve(base, &entry.path);
        let raw = match entry.format {
            KernelFormat::Kmx => read_kmx(&path)?,
            KernelFormat::Csv => read_csv(&path)?,
        };
        if raw.nrows() != manifest.n || raw.ncols() != manifest.n {
            return Err(Error::DimensionMismatch(format!(
                "kernel `{}` ({}) is {}x{} but the manifest declares n = {}",
                entry.name,
                path.display(),
                raw.nrows(),
                raw.ncols(),
                manifest.n
            )));
        }
        let (km, report) = validate_and_repair(entry.name.clone(), raw, manifest.repair_psd)?;
        if report.asymmetry_warning {
            log::warn!(
                "kernel `{}` was asymmetric (max |K - Kᵀ| = {:e}); symmetrized",
                entry.name,
                report.max_asymmetry
            );
        }
        let km = if manifest.trace_normalize { trace_normalize(&km)? } else { km };
        kernels.push(km);
        reports.push(report);
    }
    let kernels = KernelSet::new(kernels)?;

    let labels = match &manifest.labels_path {
        Some(rel) => {
            let path = resolve(base, rel);
            let labels = read_labels(&path)?;
            if labels.len() != manifest.n {
                return Err(Error::DimensionMismatch(format!(
                    "labels file {} has {} entries but n = {}",
                    path.display(),
                    labels.len(),
                    manifest.n
                )));
            }
            Some(labels)
        }
        None => None,
    };

    Ok(Dataset {
        manifest,
        kernels,
        labels,
        reports,
    })
}

fn file_stem(p: usize, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{p:02}_{clean}")
}

/// Writes every kernel as `kmx` plus a manifest (and labels, when given) into
/// `dir`. Loading the result reproduces the kernel values bit for bit.
pub fn save(ks: &KernelSet, labels: Option<&ClusterLabels>, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(ks.m());
    for (p, km) in ks.kernels().iter().enumerate() {
        let file = format!("{}.kmx", file_stem(p, km.name()));
        write_kmx(&dir.join(&file), km.values())?;
        entries.push(KernelEntry {
            name: km.name().to_string(),
            path: file,
            format: KernelFormat::Kmx,
        });
    }
    let (labels_path, k_true) = match labels {
        Some(l) => {
            if l.len() != ks.n() {
                return Err(Error::DimensionMismatch(format!("{} labels for n = {}", l.len(), ks.n())));
            }
            write_labels(&dir.join(LABELS_FILE), l)?;
            (Some(LABELS_FILE.to_string()), Some(l.distinct()))
        }
        None => (None, None),
    };
    let manifest = Manifest {
        n: ks.n(),
        m: ks.m(),
        k_true,
        labels_path,
        repair_psd: false,
        // stored values are final; rescaling on load would break bit-exactness
        trace_normalize: false,
        kernels: entries,
    };
    manifest.write(&dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

pub fn write_kmx(path: &Path, values: &DMatrix<f64>) -> Result<()> {
    let n = values.nrows();
    if n != values.ncols() {
        return Err(Error::NotSquare {
            name: path.display().to_string(),
            rows: n,
            cols: values.ncols(),
        });
    }
    let n32 = u32::try_from(n).map_err(|_| Error::InvalidInput(format!("n = {n} does not fit in u32")))?;
    let mut buf = Vec::with_capacity(12 + 8 * n * n);
    buf.extend_from_slice(KMX_MAGIC);
    buf.extend_from_slice(&n32.to_le_bytes());
    for i in 0..n {
        for j in 0..n {
            buf.extend_from_slice(&values[(i, j)].to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_kmx(path: &Path) -> Result<DMatrix<f64>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[..8] != KMX_MAGIC {
        return Err(Error::malformed("kmx header", path, "missing KMXMAT01 magic"));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let expected = 12 + 8 * n * n;
    if bytes.len() != expected {
        return Err(Error::malformed(
            "kmx body",
            path,
            format!("expected {expected} bytes for n = {n}, found {}", bytes.len()),
        ));
    }
    let mut values = DMatrix::zeros(n, n);
    for (idx, chunk) in bytes[12..].chunks_exact(8).enumerate() {
        values[(idx / n, idx % n)] = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
    }
    Ok(values)
}

/// Writes a matrix as CSV using shortest round-trip float formatting.
pub fn write_csv(path: &Path, values: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for i in 0..values.nrows() {
        let row: Vec<String> = values.row(i).iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = read_text(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|field| {
                field.trim().parse::<f64>().map_err(|e| {
                    Error::malformed("csv", path, format!("line {}: `{}`: {e}", lineno + 1, field.trim()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::malformed(
            "csv",
            path,
            format!("row {} has {} fields, expected {ncols}", i + 1, r.len()),
        ));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn write_labels(path: &Path, labels: &ClusterLabels) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels.as_slice() {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<ClusterLabels> {
    let text = read_text(path)?;
    let labels = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.parse::<usize>()
                .map_err(|e| Error::malformed("labels", path, format!("entry {}: `{l}`: {e}", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    ClusterLabels::from_vec(labels)
}

/// Kernel built on the generated feature points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum KernelRecipe {
    /// `exp(−‖x − y‖² / (2σ²))`.
    Rbf { sigma: f64 },
    /// `(xᵀy / dim + 1)^degree`.
    Polynomial { degree: u32 },
    /// `xᵀy` on centered points.
    Linear,
    /// `xᵀy` after scaling each point to unit norm, so `|K| ≤ 1`.
    Cosine,
}

impl KernelRecipe {
    fn name(&self) -> String {
        match self {
            KernelRecipe::Rbf { sigma } => format!("rbf_s{sigma}"),
            KernelRecipe::Polynomial { degree } => format!("poly_d{degree}"),
            KernelRecipe::Linear => "linear".into(),
            KernelRecipe::Cosine => "cosine".into(),
        }
    }
}

/// Gaussian-mixture benchmark with several kernel views of the same points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_per_cluster: usize,
    pub k: usize,
    pub dim: usize,
    /// Distance of each cluster mean from the origin, in units of the
    /// within-cluster standard deviation (1).
    pub separation: f64,
    pub kernels: Vec<KernelRecipe>,
    #[serde(default)]
    pub noise_kernels: usize,
    /// Rows of the Gaussian factor `A` of each noise kernel `AᵀA`; defaults to
    /// `n` (full rank).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_rank: Option<usize>,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub trace_normalize: bool,
}

impl SyntheticSpec {
    pub fn read(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let spec: SyntheticSpec = toml::from_str(&text).map_err(|e| Error::malformed("synthetic spec", path, e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn n(&self) -> usize {
        self.n_per_cluster * self.k
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(format!("synthetic spec: {msg}")));
        if self.kernels.is_empty() {
            return bad("at least one informative kernel recipe is required".into());
        }
        if !(self.separation.is_finite() && self.separation > 0.0) {
            return bad(format!("separation must be positive, got {}", self.separation));
        }
        if self.k == 0 || self.n_per_cluster == 0 || self.dim == 0 {
            return bad("k, n_per_cluster and dim must all be at least 1".into());
        }
        if self.n() < 2 {
            return bad("need at least two samples".into());
        }
        if self.noise_rank == Some(0) {
            return bad("noise_rank must be at least 1".into());
        }
        for r in &self.kernels {
            match r {
                KernelRecipe::Rbf { sigma } if sigma.is_nan() || *sigma <= 0.0 => return bad(format!("rbf sigma must be positive, got {sigma}")),
                KernelRecipe::Polynomial { degree: 0 } => return bad("polynomial degree must be at least 1".into()),
                _ => {}
            }
        }
        Ok(())
    }
}

/// Cluster-major sample matrix (rows are points) and its labels.
fn sample_points(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, Vec<usize>) {
    let directions: Vec<Vec<f64>> = (0..spec.k)
        .map(|c| {
            if spec.k <= spec.dim {
                let mut e = vec![0.0; spec.dim];
                e[c] = 1.0;
                e
            } else {
                let v: Vec<f64> = (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                v.into_iter().map(|x| x / norm).collect()
            }
        })
        .collect();

    let n = spec.n();
    let mut x = DMatrix::zeros(n, spec.dim);
    let mut labels = Vec::with_capacity(n);
    for (c, dir) in directions.iter().enumerate() {
        for s in 0..spec.n_per_cluster {
            let i = c * spec.n_per_cluster + s;
            for (d, mu) in dir.iter().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                x[(i, d)] = spec.separation * mu + z;
            }
            labels.push(c);
        }
    }
    for d in 0..spec.dim {
        let mean = x.column(d).mean();
        x.column_mut(d).add_scalar_mut(-mean);
    }
    (x, labels)
}

fn build_kernel(recipe: &KernelRecipe, x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let dim = x.ncols() as f64;
    match recipe {
        KernelRecipe::Rbf { sigma } => {
            let denom = 2.0 * sigma * sigma;
            DMatrix::from_fn(n, n, |i, j| {
                let d2: f64 = x.row(i).iter().zip(x.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / denom).exp()
            })
        }
        KernelRecipe::Polynomial { degree } => {
            let gram = x * x.transpose();
            gram.map(|v| (v / dim + 1.0).powi(*degree as i32))
        }
        KernelRecipe::Linear => x * x.transpose(),
        KernelRecipe::Cosine => {
            let mut xn = x.clone();
            for mut row in xn.row_iter_mut() {
                let norm = row.norm();
                if norm > 0.0 {
                    row /= norm;
                }
            }
            &xn * xn.transpose()
        }
    }
}

/// Samples `k` isotropic Gaussian clusters and builds every recipe's kernel
/// on the same points, followed by `noise_kernels` Gram matrices `AᵀA` of
/// standard-normal factors. Deterministic given `spec.seed`.
pub fn generate(spec: &SyntheticSpec) -> Result<(KernelSet, ClusterLabels)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (x, labels) = sample_points(spec, &mut rng);
    let n = spec.n();

    let mut kernels = Vec::with_capacity(spec.kernels.len() + spec.noise_kernels);
    for recipe in &spec.kernels {
        kernels.push(KernelMatrix::new(recipe.name(), build_kernel(recipe, &x))?);
    }
    let rank = spec.noise_rank.unwrap_or(n);
    for q in 0..spec.noise_kernels {
        let a = DMatrix::from_fn(rank, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let gram = a.transpose() * &a;
        // noise views are always put on the common trace-n scale
        let km = trace_normalize(&KernelMatrix::new(format!("noise_{q}"), gram)?)?;
        kernels.push(km);
    }
    if spec.trace_normalize {
        kernels = kernels.iter().map(trace_normalize).collect::<Result<_>>()?;
    }
    Ok((KernelSet::new(kernels)?, ClusterLabels::new(labels, spec.k)?))
}

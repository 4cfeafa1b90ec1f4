use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DMatrix;
use simplemkkm::data_io::{load, write_csv, KernelRecipe, SyntheticSpec, MANIFEST_FILE};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simplemkkm")).args(args).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn separable_spec(dir: &Path, kernels: Vec<KernelRecipe>) -> std::path::PathBuf {
    let spec = SyntheticSpec {
        n_per_cluster: 12,
        k: 3,
        dim: 3,
        separation: 10.0,
        kernels,
        noise_kernels: 0,
        noise_rank: None,
        seed: 9,
        trace_normalize: true,
    };
    let path = dir.join("spec.toml");
    fs::write(&path, toml::to_string(&spec).unwrap()).unwrap();
    path
}

#[test]
fn avg_kkm_recovers_separable_clusters() {
    let dir = tempfile::tempdir().unwrap();
    let spec = separable_spec(dir.path(), vec![KernelRecipe::Rbf { sigma: 2.0 }, KernelRecipe::Linear]);
    let out = dir.path().join("out");
    let o = bin(&["run", "--algo", "avg-kkm", "--restarts", "3", "--spec", path_str(&spec), "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let results: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(results["aggregate"]["acc"]["mean"], 1.0);
    assert_eq!(results["aggregate"]["acc"]["std"], 0.0);
    for file in ["results.csv", "aggregate.csv", "weights.csv", "trace.csv"] {
        assert!(out.join(file).exists(), "{file} missing");
    }
}

#[test]
fn single_kernel_trace_has_one_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let spec = separable_spec(dir.path(), vec![KernelRecipe::Rbf { sigma: 2.0 }]);
    let out = dir.path().join("out");
    let o = bin(&["run", "--algo", "simplemkkm", "--restarts", "1", "--spec", path_str(&spec), "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next().unwrap(), "restart,iter,objective,alpha,gamma_0,eigen_gap");
    assert_eq!(lines.count(), 1);
}

#[test]
fn no_trace_skips_the_trace_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = separable_spec(dir.path(), vec![KernelRecipe::Linear, KernelRecipe::Cosine]);
    let out = dir.path().join("out");
    let o = bin(&["run", "--algo", "mkkm", "--restarts", "2", "--no-trace", "--spec", path_str(&spec), "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!out.join("trace.csv").exists());
}

#[test]
fn bench_writes_one_row_per_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    let spec = separable_spec(dir.path(), vec![KernelRecipe::Rbf { sigma: 2.0 }, KernelRecipe::Linear]);
    let out = dir.path().join("bench");
    let o = bin(&["bench", "--algo", "simplemkkm,mkkm", "--restarts", "2", "--spec", path_str(&spec), "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn unknown_or_missing_algorithms_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let spec = separable_spec(dir.path(), vec![KernelRecipe::Linear]);
    let out = dir.path().join("bench");
    let unknown = bin(&["bench", "--algo", "simplemkkm,nope", "--spec", path_str(&spec), "--out", path_str(&out)]);
    assert_eq!(unknown.status.code(), Some(2));
    let empty = bin(&["bench", "--algo", "", "--spec", path_str(&spec), "--out", path_str(&out)]);
    assert_eq!(empty.status.code(), Some(2));
}

#[test]
fn gen_output_loads_and_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = separable_spec(dir.path(), vec![KernelRecipe::Rbf { sigma: 1.0 }, KernelRecipe::Polynomial { degree: 2 }]);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = bin(&["gen", "--spec", path_str(&spec), "--out", path_str(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ks, labels) = load(&a.join(MANIFEST_FILE)).unwrap();
    assert_eq!((ks.n(), ks.m()), (36, 2));
    assert_eq!(labels.unwrap().distinct(), 3);
    let (other, _) = load(&b.join(MANIFEST_FILE)).unwrap();
    for (x, y) in ks.kernels().iter().zip(other.kernels()) {
        assert_eq!(x.values(), y.values());
    }
}

#[test]
fn bad_spec_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.toml");
    fs::write(&spec, "n_per_cluster = 0\nk = 3\ndim = 2\nseparation = 1.0\nkernels = []\nseed = 1\n").unwrap();
    let o = bin(&["gen", "--spec", path_str(&spec), "--out", path_str(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_manifest_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.toml");
    let o = bin(&["run", "--algo", "mkkm", "--k", "2", "--manifest", path_str(&missing), "--out", path_str(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn inspect_reports_kernels_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    write_csv(&dir.path().join("eye.csv"), &DMatrix::identity(4, 4)).unwrap();
    let mut skew = DMatrix::from_element(4, 4, 0.5);
    skew.fill_diagonal(1.0);
    skew[(0, 1)] += 1e-6;
    write_csv(&dir.path().join("skew.csv"), &skew).unwrap();
    let manifest = dir.path().join(MANIFEST_FILE);
    fs::write(
        &manifest,
        "n = 4\nm = 2\ntrace_normalize = false\n\n[[kernels]]\nname = \"eye\"\npath = \"eye.csv\"\nformat = \"csv\"\n\n\
         [[kernels]]\nname = \"skew\"\npath = \"skew.csv\"\nformat = \"csv\"\n",
    )
    .unwrap();
    let o = bin(&["inspect", "--manifest", path_str(&manifest)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let eye = text.lines().find(|l| l.contains("`eye`")).unwrap();
    assert!(eye.contains("trace 4") && eye.contains("psd ok"), "{eye}");
    assert!(text.contains("warning: asymmetric input"), "{text}");
    assert!(text.contains("labels: none"), "{text}");
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn manifest(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn packaged_spec() -> PathBuf {
    manifest("specs/curie_weiss_n10.toml")
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ising-causal"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

/// `(de, de_se, ie, ie_se)` from the first row of an effects CSV.
fn effects(path: &Path) -> (f64, f64, f64, f64) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema=causal-ising/effects/1"));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| -> f64 { row[header.iter().position(|h| *h == name).unwrap()].parse().unwrap() };
    (col("de"), col("de_se"), col("ie"), col("ie_se"))
}

#[test]
fn oracle_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = packaged_spec();
    let out = run(&["oracle", spec.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = std::fs::read(dir.path().join("oracle.csv")).unwrap();
    let golden = std::fs::read(manifest("golden/curie_weiss_n10_oracle.csv")).unwrap();
    assert_eq!(got, golden);
    assert!(dir.path().join("oracle.meta.json").exists());
}

#[test]
fn block_estimate_agrees_with_golden_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let spec = packaged_spec();
    let out = run(&["estimate", spec.to_str().unwrap(), "--method", "block"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (de, de_se, ie, ie_se) = effects(&dir.path().join("block.csv"));
    let (gde, _, gie, _) = effects(&manifest("golden/curie_weiss_n10_oracle.csv"));
    assert!((de - gde).abs() <= 3.0 * de_se, "{de} ± {de_se} vs {gde}");
    assert!((ie - gie).abs() <= 3.0 * ie_se, "{ie} ± {ie_se} vs {gie}");
}

#[test]
fn reruns_are_byte_identical() {
    let spec = packaged_spec();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert!(run(&["estimate", spec.to_str().unwrap(), "--method", "glauber"], d.path()).status.success());
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("glauber.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn missing_seed_fails_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(packaged_spec()).unwrap();
    let broken: String = text.lines().filter(|l| !l.starts_with("seed")).map(|l| format!("{l}\n")).collect();
    let spec = dir.path().join("broken.toml");
    std::fs::write(&spec, broken).unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&["oracle", spec.to_str().unwrap()], &out_dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
    assert!(!out_dir.exists());
}

#[test]
fn method_precondition_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let spec = packaged_spec();
    let out = run(&["estimate", spec.to_str().unwrap(), "--method", "amp"], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(3));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn generated_data_round_trips_through_fit() {
    let dir = tempfile::tempdir().unwrap();
    let spec = packaged_spec();
    assert!(run(&["generate", spec.to_str().unwrap()], dir.path()).status.success());
    let fit_dir = dir.path().join("fit");
    let out = Command::new(env!("CARGO_BIN_EXE_ising-causal"))
        .args(["fit", spec.to_str().unwrap(), "--data"])
        .arg(dir.path())
        .arg("--out")
        .arg(&fit_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(fit_dir.join("fit.csv")).unwrap();
    assert!(text.starts_with("# schema=causal-ising/fit/1\nn,seed,tau_hat"));
}

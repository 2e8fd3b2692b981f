use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hardy-vss"))
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

const SMALL: &str = "grid.n = 256
grid.grading = 4
evolve.record_times = 1e-3, 1e-2, 0.1, 1
source.epsilons = 1e-2, 1e-3
sweep.epsilons = 0.01, 0.005
sweep.p_values = 1.6, 1.7
verify.criteria = 1, 4
";

#[test]
fn derive_writes_tagged_exponents() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d");
    let o = run(&["derive"], &out);
    assert!(o.status.success());
    let s = summary(&out);
    assert_eq!(s["experiment"], "derive");
    assert_eq!(s["derived"]["lambda"]["value"], 0.0);
    assert_eq!(s["derived"]["lambda"]["provenance"], "reference");
    let p_star = s["derived"]["p_star"]["value"].as_f64().unwrap();
    assert!((p_star - 5.0 / 3.0).abs() < 1e-12);
    assert_eq!(s["config"]["problem"]["p"]["provenance"], "input");
}

#[test]
fn critical_kappa_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "problem.kappa = 0.25\n");
    let o = run(&["derive", "--config", cfg.to_str().unwrap()], &tmp.path().join("d"));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("kappa < ((N-2)/2)^2"), "{err}");
}

#[test]
fn config_errors_cite_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "# comment\ngrid.n = x\n");
    let o = run(&["derive", "--config", cfg.to_str().unwrap()], &tmp.path().join("d"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config line 2"));

    let cfg = write_config(tmp.path(), "grid.nn = 3\n");
    let o = run(&["derive", "--config", cfg.to_str().unwrap()], &tmp.path().join("d"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config line 1"));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let cfg = cfg.to_str().unwrap();
    for verb in ["kernel", "source", "sweep"] {
        let (a, b) = (tmp.path().join(format!("{verb}_a")), tmp.path().join(format!("{verb}_b")));
        assert!(run(&[verb, "--config", cfg], &a).status.success(), "{verb}");
        assert!(run(&[verb, "--config", cfg, "--jobs", "2"], &b).status.success(), "{verb}");
        let read = |d: &Path| std::fs::read(d.join("summary.json")).unwrap();
        assert_eq!(read(&a), read(&b), "{verb} summary differs between runs");
    }
}

#[test]
fn compare_identical_different_and_mismatched() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&["derive"], &a).status.success());
    assert!(run(&["derive"], &b).status.success());
    let cmp = tmp.path().join("cmp");
    let o = bin().args(["compare"]).arg(&a).arg(&b).arg("--out").arg(&cmp).output().unwrap();
    assert!(o.status.success());
    let rep = summary_named(&cmp, "compare.json");
    assert_eq!(rep["differences"].as_array().unwrap().len(), 0);
    assert!(rep["fields_compared"].as_u64().unwrap() > 10);

    let cfg = write_config(tmp.path(), "problem.p = 1.55\n");
    let c = tmp.path().join("c");
    assert!(run(&["derive", "--config", cfg.to_str().unwrap()], &c).status.success());
    let o = bin().args(["compare"]).arg(&a).arg(&c).arg("--out").arg(&cmp).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let rep = summary_named(&cmp, "compare.json");
    let diffs = rep["differences"].as_array().unwrap();
    let p = diffs.iter().find(|d| d["path"] == "config.problem.p").expect("p flagged");
    assert_eq!(p["parameter_change"], true);

    let k = tmp.path().join("k");
    let cfg = write_config(tmp.path(), SMALL);
    assert!(run(&["kernel", "--config", cfg.to_str().unwrap()], &k).status.success());
    let o = bin().args(["compare"]).arg(&a).arg(&k).arg("--out").arg(&cmp).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("SchemaMismatch"));
}

fn summary_named(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn experiments_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let cfg = cfg.to_str().unwrap();
    let cases: [(&str, &[&str]); 5] = [
        ("kernel", &["kernel.csv", "kernel_exact.csv"]),
        ("evolve", &["snapshots.csv", "diagnostics.csv"]),
        ("profile", &["profile_variational.csv", "profile_shooting.csv"]),
        ("sweep", &["sweep.csv", "sweep_probe.csv"]),
        ("verify", &["reports.txt", "reports.json"]),
    ];
    for (verb, files) in cases {
        let dir = tmp.path().join(verb);
        let o = run(&[verb, "--config", cfg], &dir);
        assert!(o.status.success(), "{verb}: {}", String::from_utf8_lossy(&o.stderr));
        for f in files {
            assert!(dir.join(f).is_file(), "{verb} did not write {f}");
        }
        assert_eq!(summary(&dir)["experiment"], verb);
    }
    let verify = String::from_utf8_lossy(&run(&["verify", "--config", cfg], &tmp.path().join("v")).stdout).to_string();
    assert!(verify.lines().any(|l| l.starts_with("PASS C01")));
    assert!(verify.lines().any(|l| l.starts_with("PASS C04")));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ritt-lab"));
    c.env_remove("RITT_LAB_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

const ALPHA: &str = r#"{
  "version": 1,
  "seed": 5,
  "experiments": [
    {
      "name": "alpha",
      "family": {"family": "alpha_frac", "alpha": 0.5, "N": 4096},
      "diagnostics": ["ritt_table", "half_table", "sector_report"],
      "n_grid": [1, 2, 4, 8, 16]
    }
  ]
}"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn ritt_table_rows_follow_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", ALPHA);
    let out = dir.path().join("o");
    let o = run(&["diag", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("alpha/ritt_table.csv")).unwrap();
    let idx: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(idx, vec![1.0, 2.0, 4.0, 8.0, 16.0]);
    // 17 significant digits in every numeric cell
    let cell = csv.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    assert_eq!(cell.split('e').next().unwrap().replace('.', "").len(), 17);
}

#[test]
fn invalid_alpha_exits_nonzero_naming_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &ALPHA.replace("\"alpha\": 0.5", "\"alpha\": 1.5"));
    let o = run(&["diag", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 7") && err.contains("experiments[0].family.alpha"), "{err}");
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let text = ALPHA.replace(
        "\n  ]\n}",
        r#",
    {
      "name": "ops",
      "operator_suite": {
        "matrix": {"kind": "random_normal", "d": 3, "count": 3},
        "checks": ["ritt_scan", "kreiss_scan"],
        "angles": 32
      }
    }
  ]
}"#,
    );
    let cfg = write(dir.path(), "c.json", &text);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&["run", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap(), "--threads", "1"]).status.success());
    let o = bin()
        .env("RITT_LAB_THREADS", "4")
        .args(["run", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(fs::read(a.join("MANIFEST.json")).unwrap(), fs::read(b.join("MANIFEST.json")).unwrap());
    for f in ["alpha/ritt_table.csv", "ops/ritt_scan_2.csv", "ops/kreiss_scan_0.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn direct_and_fft_runs_compare_equal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("methods.json");
    let d = dir.path().join("d");
    let f = dir.path().join("f");
    for (m, out) in [("direct", &d), ("fft", &f)] {
        let o = run(&["diag", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--method", m]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ma, mb) = (d.join("MANIFEST.json"), f.join("MANIFEST.json"));
    let o = run(&["compare", ma.to_str().unwrap(), mb.to_str().unwrap(), "--tol", "1e-10", "--bounds", "consistent"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    // the certified bounds themselves differ by the backends' error slack
    let o = run(&["compare", ma.to_str().unwrap(), mb.to_str().unwrap(), "--tol", "1e-10"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn compare_lists_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", ALPHA);
    let small = write(
        dir.path(),
        "s.json",
        &ALPHA.replace(r#""ritt_table", "half_table", "sector_report""#, r#""ritt_table""#),
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&["diag", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]).status.success());
    assert!(run(&["diag", "--config", small.to_str().unwrap(), "--out", b.to_str().unwrap()]).status.success());
    let o = run(&["compare", a.join("MANIFEST.json").to_str().unwrap(), b.join("MANIFEST.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("alpha/half_table.csv") && text.contains("missing_in_b"), "{text}");
    assert!(text.lines().any(|l| l.starts_with("alpha/ritt_table.csv") && l.contains("identical")), "{text}");
}

#[test]
fn family_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "f.json", r#"{"family": "poisson", "s": 2.5}"#);
    let out = dir.path().join("p");
    let o = run(&["family", "--config", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let f = ritt_lab::seq::ProbSeq::read_csv(std::io::BufReader::new(fs::File::open(out.join("sequence.csv")).unwrap())).unwrap();
    assert!((f.get(2) - 2.5f64.powi(2) / 2.0 * (-2.5f64).exp()).abs() < 1e-15);
}

#[test]
fn shipped_configs_parse() {
    for name in ["reproduce.json", "methods.json"] {
        let cfg = ritt_lab::experiment::ExperimentConfig::load(&configs_dir().join(name)).unwrap();
        assert!(!cfg.experiments.is_empty());
    }
}

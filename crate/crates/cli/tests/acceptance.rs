//! CLI acceptance: manifest replay determinism (criterion 11), the CSV
//! round-trip invariant, exit codes, and the per-command fixtures.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_loewner")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("loewner-accept-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

/// Parse each numeric CSV cell and re-emit it; the bytes must not change.
fn assert_csv_round_trips(path: &Path) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let mut rebuilt = format!("{header}\n");
    for line in lines {
        let cells: Vec<String> = line
            .split(',')
            .map(|cell| {
                let v: f64 = cell
                    .parse()
                    .unwrap_or_else(|_| panic!("non-numeric cell {cell} in {path:?}"));
                format!("{v}")
            })
            .collect();
        rebuilt.push_str(&cells.join(","));
        rebuilt.push('\n');
    }
    assert_eq!(text, rebuilt, "csv did not round-trip: {path:?}");
}

fn manifest_digests(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["outputs"].clone()
}

#[test]
fn criterion_11_manifest_replay_is_byte_identical() {
    let cases: Vec<(&str, Vec<&str>)> = vec![
        (
            "trace",
            vec![
                "trace", "--seed", "42", "--kappa", "2", "--n", "128", "--fine-n", "8192",
            ],
        ),
        (
            "compare",
            vec![
                "compare-kappa",
                "--seed",
                "7",
                "--kappa",
                "2",
                "--kappa-seq",
                "2.5,2.25",
                "--fine-n",
                "2048",
                "--reference-n",
                "128",
            ],
        ),
        (
            "rough",
            vec![
                "roughpath",
                "--mode",
                "lift-check",
                "--mesh",
                "1024",
            ],
        ),
        ("driver", vec!["driver", "--fine-n", "1024", "--interp-n", "32"]),
        ("slit", vec!["slit-grid", "--c", "3"]),
    ];
    for (name, mut args) in cases {
        let dir = tmp(&format!("replay-{name}"));
        let dir_s = dir.display().to_string();
        args.push("--out");
        args.push(&dir_s);
        run_ok(&args);
        let manifest = dir.join("manifest.json");
        let replay_dir = tmp(&format!("replay-{name}-out"));
        let out = run_ok(&[
            "replay",
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            replay_dir.to_str().unwrap(),
        ]);
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(
            stdout.contains("byte-identically"),
            "replay of {name} not byte-identical:\n{stdout}"
        );
        // Every recorded CSV matches byte for byte on disk too.
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            let fname = p.file_name().unwrap().to_str().unwrap().to_string();
            if fname.ends_with(".csv") {
                let a = std::fs::read(&p).unwrap();
                let b = std::fs::read(replay_dir.join(&fname)).unwrap();
                assert_eq!(a, b, "{name}/{fname} differs after replay");
            }
        }
    }
    println!("criterion 11 manifest-replay: PASS (5 commands re-ran byte-identically)");
}

#[test]
fn replay_with_a_tampered_digest_exits_1() {
    let dir = tmp("tamper");
    run_ok(&[
        "trace", "--n", "64", "--fine-n", "1024", "--out", dir.to_str().unwrap(),
    ]);
    let path = dir.join("manifest.json");
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    v["outputs"]["trace.csv"] = serde_json::json!("0".repeat(64));
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    let out = run(&["replay", "--manifest", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("MISMATCH"));
}

#[test]
fn rerunning_a_command_reproduces_digests() {
    let d1 = tmp("rerun-1");
    let d2 = tmp("rerun-2");
    for d in [&d1, &d2] {
        run_ok(&[
            "trace", "--seed", "42", "--kappa", "2", "--n", "256", "--fine-n", "8192", "--out",
            d.to_str().unwrap(),
        ]);
    }
    assert_eq!(manifest_digests(&d1), manifest_digests(&d2));
}

#[test]
fn trace_csv_header_is_pinned() {
    let dir = tmp("header");
    run_ok(&[
        "trace", "--n", "64", "--fine-n", "1024", "--out",
        dir.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
    assert!(text.starts_with("t,re,im\n"));
    assert_csv_round_trips(&dir.join("trace.csv"));
}

#[test]
fn zero_kappa_svg_shows_a_vertical_segment() {
    let dir = tmp("vertical");
    run_ok(&[
        "trace", "--kappa", "0", "--n", "64", "--fine-n", "1024", "--format", "svg", "--out",
        dir.to_str().unwrap(),
    ]);
    let svg = std::fs::read_to_string(dir.join("trace.svg")).unwrap();
    let points = svg
        .split("points=\"")
        .nth(1)
        .and_then(|rest| rest.split('"').next())
        .expect("svg contains a polyline");
    let xs: Vec<f64> = points
        .split_whitespace()
        .map(|pair| pair.split(',').next().unwrap().parse().unwrap())
        .collect();
    let (lo, hi) = xs
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
    assert!(
        hi - lo < 1.0,
        "vertical trace should collapse to one pixel column, spread {}",
        hi - lo
    );
}

#[test]
fn out_of_regime_kappa_is_refused_with_exit_2() {
    let dir = tmp("regime");
    let out = run(&[
        "compare-kappa", "--kappa", "3", "--out", dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("8/3"), "refusal should explain the regime: {err}");
}

#[test]
fn p_outside_the_interval_is_a_usage_error() {
    for p in ["2", "3.5"] {
        let dir = tmp(&format!("badp-{p}"));
        let out = run(&[
            "roughpath", "--mode", "rde", "--p", p, "--out", dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(2), "p = {p} must be refused");
    }
}

#[test]
fn unknown_flags_exit_2() {
    let out = run(&["trace", "--no-such-flag", "1", "--out", "/tmp/x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn lift_check_residuals_stay_tiny() {
    let dir = tmp("liftcheck");
    run_ok(&[
        "roughpath", "--mode", "lift-check", "--mesh", "4096", "--out",
        dir.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(dir.join("lift_check.csv")).unwrap();
    for line in text.lines().skip(1) {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cells[2] <= 1e-12, "chen residual too big: {line}");
        assert!(cells[3] <= 1e-12, "geometric residual too big: {line}");
        assert!(
            cells[4].is_finite() && cells[4] > 0.0 && cells[5].is_finite() && cells[5] > 0.0,
            "control calibration columns must be positive and finite: {line}"
        );
    }
    assert_csv_round_trips(&dir.join("lift_check.csv"));
}

#[test]
fn rde_with_zero_kappa_reports_the_analytic_deviation() {
    let dir = tmp("rde0");
    run_ok(&[
        "roughpath", "--mode", "rde", "--kappa", "0", "--mesh", "4096", "--steps", "4096",
        "--out", dir.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(dir.join("rde.csv")).unwrap();
    assert!(text.starts_with("t,re,im,exact_re,exact_im,abs_err\n"));
    let max_err = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .fold(0.0f64, f64::max);
    assert!(max_err <= 1e-6, "analytic deviation column peaked at {max_err}");
    assert_csv_round_trips(&dir.join("rde.csv"));
}

#[test]
fn compare_kappa_emits_report_and_decreasing_columns() {
    let dir = tmp("compare");
    run_ok(&[
        "compare-kappa", "--seed", "42", "--kappa", "2", "--kappa-seq", "+2^-1..4", "--fine-n",
        "4096", "--reference-n", "256", "--out", dir.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(dir.join("report.csv")).unwrap();
    assert!(text.starts_with("j,kappa_j,n_j,sup_dist,approx_sup_dist\n"));
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.windows(2).all(|w| w[1][3] <= w[0][3]));
    assert!(dir.join("report.svg").exists());
    assert_csv_round_trips(&dir.join("report.csv"));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tmp("config");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "kappa=0.5\nn=64\nfine-n=1024\n").unwrap();
    let out_dir = tmp("config-out");
    run_ok(&[
        "trace", "--kappa", "1.5", "--config", cfg.to_str().unwrap(), "--out",
        out_dir.to_str().unwrap(),
    ]);
    let manifest = std::fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    let args: Vec<String> = v["args"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a.as_str().unwrap().to_string())
        .collect();
    let find = |flag: &str| {
        let i = args.iter().position(|a| a == flag).unwrap();
        args[i + 1].clone()
    };
    assert_eq!(find("--kappa"), "1.5", "explicit flag must win");
    assert_eq!(find("--n"), "64", "config value must fill the gap");
    assert_eq!(find("--fine-n"), "1024");
}

#[test]
fn every_output_directory_has_exactly_one_manifest() {
    let dir = tmp("singleton");
    run_ok(&[
        "driver", "--fine-n", "512", "--out", dir.to_str().unwrap(),
    ]);
    let manifests = std::fs::read_dir(&dir)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .contains("manifest")
        })
        .count();
    assert_eq!(manifests, 1);
    assert_csv_round_trips(&dir.join("driver.csv"));
}

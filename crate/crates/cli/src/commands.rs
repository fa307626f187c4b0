//! Command implementations. Every command resolves its flags, validates,
//! computes, and emits files through an [`OutputSet`] so the manifest
//! records a digest for each artifact.

use std::path::Path;

use num_complex::Complex64;

use loewner_core::analysis::{continuity_experiment, ContinuityConfig};
use loewner_core::conformal::{HalfPlanePoint, MapChain, SlitMapParams};
use loewner_core::driver::{sample_brownian, scale_driver, sqrt_interpolate};
use loewner_core::roughpath::{
    kappa_lift_continuity, lift_level2, rde_kappa_continuity, rde_z0_continuity,
    solve_rde_backward, Level2Block,
};
use loewner_core::trace::build_trace;

use crate::manifest::{sha256_hex, OutputSet, RunManifest};
use crate::svg::{line_plot, Series, COLORS};
use crate::{
    Cli, CliError, Command, CompareArgs, DriverArgs, ReplayArgs, RoughArgs, RoughMode,
    SlitGridArgs, TraceArgs, TraceFormat,
};

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Trace(a) => run_trace(&a),
        Command::CompareKappa(a) => run_compare(&a),
        Command::Roughpath(a) => run_rough(&a),
        Command::Driver(a) => run_driver(&a),
        Command::SlitGrid(a) => run_slit_grid(&a),
        Command::Replay(a) => run_replay(&a),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn require_power_of_two(name: &str, n: usize) -> Result<(), CliError> {
    if n == 0 || n & (n - 1) != 0 {
        return Err(usage(format!("--{name} must be a power of two, got {n}")));
    }
    Ok(())
}

fn parse_z0(s: &str) -> Result<HalfPlanePoint, CliError> {
    let (re, im) = s
        .split_once(',')
        .ok_or_else(|| usage(format!("--z0 expects \"re,im\", got {s}")))?;
    let re: f64 = re
        .trim()
        .parse()
        .map_err(|_| usage(format!("bad real part in --z0: {s}")))?;
    let im: f64 = im
        .trim()
        .parse()
        .map_err(|_| usage(format!("bad imaginary part in --z0: {s}")))?;
    HalfPlanePoint::new(re, im).map_err(|e| usage(format!("--z0: {e}")))
}

/// Either a comma list of values or a geometric spec `+2^-A..B` meaning
/// `kappa ± 2^-j` for `j = A..=B`.
pub fn parse_kappa_seq(spec: &str, kappa: f64) -> Result<Vec<f64>, CliError> {
    let spec = spec.trim();
    if let Some(rest) = spec.strip_prefix('+').or_else(|| spec.strip_prefix('-')) {
        if let Some(range) = rest.strip_prefix("2^-") {
            let (a, b) = range
                .split_once("..")
                .ok_or_else(|| usage(format!("geometric spec needs A..B: {spec}")))?;
            let a: i32 = a
                .parse()
                .map_err(|_| usage(format!("bad exponent in {spec}")))?;
            let b: i32 = b
                .parse()
                .map_err(|_| usage(format!("bad exponent in {spec}")))?;
            if a < 1 || b < a {
                return Err(usage(format!("exponent range must satisfy 1 <= A <= B: {spec}")));
            }
            let sign = if spec.starts_with('-') { -1.0 } else { 1.0 };
            return Ok((a..=b).map(|j| kappa + sign * 2.0f64.powi(-j)).collect());
        }
    }
    spec.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("bad kappa value: {tok}")))
        })
        .collect()
}

fn check_regime(label: &str, kappa: f64) -> Result<(), CliError> {
    if !(kappa > 0.0 && kappa < 8.0 / 3.0) {
        return Err(usage(format!(
            "{label} = {kappa} refused: the trace-continuity regime is kappa in (0, 8/3)"
        )));
    }
    Ok(())
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

// ---------------------------------------------------------------------------
// trace

fn trace_to_args(a: &TraceArgs) -> Vec<String> {
    let mut v = vec![
        "--seed".into(),
        a.seed.to_string(),
        "--kappa".into(),
        fmt_f64(a.kappa),
        "--n".into(),
        a.n.to_string(),
        "--t-horizon".into(),
        fmt_f64(a.t_horizon),
        "--fine-n".into(),
        a.fine_n.to_string(),
        "--format".into(),
        match a.format {
            TraceFormat::Csv => "csv".into(),
            TraceFormat::Svg => "svg".into(),
            TraceFormat::Json => "json".into(),
        },
    ];
    if let Some(y) = a.y_tip {
        v.push("--y-tip".into());
        v.push(fmt_f64(y));
    }
    v
}

fn run_trace(a: &TraceArgs) -> Result<(), CliError> {
    require_power_of_two("n", a.n)?;
    require_power_of_two("fine-n", a.fine_n)?;
    if a.n > a.fine_n {
        return Err(usage(format!(
            "--n {} exceeds the fine mesh {}",
            a.n, a.fine_n
        )));
    }
    if !(a.kappa >= 0.0) {
        return Err(usage(format!("--kappa must be nonnegative, got {}", a.kappa)));
    }
    if !(a.t_horizon > 0.0) {
        return Err(usage("--t-horizon must be positive".to_string()));
    }

    let b = sample_brownian(a.seed, a.fine_n, a.t_horizon).map_err(numerical)?;
    let d = scale_driver(&b, a.kappa).map_err(numerical)?;
    let interp = sqrt_interpolate(&d, a.n).map_err(numerical)?;
    let trace = build_trace(&interp, a.y_tip).map_err(numerical)?;

    let mut out = OutputSet::new(&a.out, "trace", trace_to_args(a), Some(a.seed));
    match a.format {
        TraceFormat::Csv => {
            let mut buf = Vec::new();
            trace.write_csv(&mut buf)?;
            out.emit("trace.csv", &buf)?;
        }
        TraceFormat::Svg => {
            let pts: Vec<(f64, f64)> = trace
                .points()
                .iter()
                .map(|p| (p.re(), p.im()))
                .collect();
            let svg = line_plot(
                &[Series {
                    label: format!("kappa={}", a.kappa),
                    points: pts,
                    color: COLORS[0],
                }],
                "approximate trace",
                "Re",
                "Im",
            );
            out.emit("trace.svg", svg.as_bytes())?;
        }
        TraceFormat::Json => {
            let doc = serde_json::json!({
                "meta": trace.meta(),
                "t": trace.times(),
                "re": trace.points().iter().map(|p| p.re()).collect::<Vec<_>>(),
                "im": trace.points().iter().map(|p| p.im()).collect::<Vec<_>>(),
            });
            let mut text = serde_json::to_string_pretty(&doc).map_err(numerical)?;
            text.push('\n');
            out.emit("trace.json", text.as_bytes())?;
        }
    }
    out.finish()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// compare-kappa

fn compare_to_args(a: &CompareArgs) -> Vec<String> {
    vec![
        "--seed".into(),
        a.seed.to_string(),
        "--kappa".into(),
        fmt_f64(a.kappa),
        "--kappa-seq".into(),
        a.kappa_seq.clone(),
        "--fine-n".into(),
        a.fine_n.to_string(),
        "--reference-n".into(),
        a.reference_n.to_string(),
        "--t-horizon".into(),
        fmt_f64(a.t_horizon),
    ]
}

fn run_compare(a: &CompareArgs) -> Result<(), CliError> {
    require_power_of_two("fine-n", a.fine_n)?;
    require_power_of_two("reference-n", a.reference_n)?;
    check_regime("--kappa", a.kappa)?;
    let seq = parse_kappa_seq(&a.kappa_seq, a.kappa)?;
    for k in &seq {
        check_regime("--kappa-seq entry", *k)?;
    }
    let cfg = ContinuityConfig {
        fine_n: a.fine_n,
        reference_n: a.reference_n,
        t_horizon: a.t_horizon,
    };
    let report = continuity_experiment(a.seed, a.kappa, &seq, &cfg).map_err(numerical)?;
    for f in &report.failures {
        eprintln!("leg j={} (kappa_j={}) failed: {}", f.j, f.kappa_j, f.message);
    }
    if report.rows.is_empty() {
        return Err(CliError::Numerical("every experiment leg failed".into()));
    }

    let mut out = OutputSet::new(&a.out, "compare-kappa", compare_to_args(a), Some(a.seed));
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    out.emit("report.csv", &csv)?;

    let series: Vec<Series> = [
        ("sup_dist", 0usize),
        ("approx_sup_dist", 1usize),
    ]
    .iter()
    .map(|(label, idx)| Series {
        label: label.to_string(),
        points: report
            .rows
            .iter()
            .map(|r| {
                let d = if *idx == 0 { r.sup_dist } else { r.approx_sup_dist };
                (r.j as f64, d.max(1e-300).log10())
            })
            .collect(),
        color: COLORS[*idx],
    })
    .collect();
    let svg = line_plot(
        &series,
        &format!("trace distance vs j (kappa={}, seed={})", a.kappa, a.seed),
        "j",
        "log10 sup distance",
    );
    out.emit("report.svg", svg.as_bytes())?;
    out.finish()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// roughpath

fn rough_to_args(a: &RoughArgs) -> Vec<String> {
    vec![
        "--mode".into(),
        match a.mode {
            RoughMode::LiftCheck => "lift-check".into(),
            RoughMode::KappaContinuity => "kappa-continuity".into(),
            RoughMode::Rde => "rde".into(),
            RoughMode::RdeContinuity => "rde-continuity".into(),
        },
        "--seed".into(),
        a.seed.to_string(),
        "--kappa".into(),
        fmt_f64(a.kappa),
        "--kappa-seq".into(),
        a.kappa_seq.clone(),
        "--p".into(),
        fmt_f64(a.p),
        "--mesh".into(),
        a.mesh.to_string(),
        "--steps".into(),
        a.steps.to_string(),
        "--z0".into(),
        a.z0.clone(),
        "--t-horizon".into(),
        fmt_f64(a.t_horizon),
    ]
}

fn run_rough(a: &RoughArgs) -> Result<(), CliError> {
    if !(a.p > 2.0 && a.p <= 3.0) {
        return Err(usage(format!("--p must lie in (2, 3], got {}", a.p)));
    }
    require_power_of_two("mesh", a.mesh)?;
    require_power_of_two("steps", a.steps)?;
    if !(a.kappa >= 0.0) {
        return Err(usage(format!("--kappa must be nonnegative, got {}", a.kappa)));
    }
    let b = sample_brownian(a.seed, a.mesh, a.t_horizon).map_err(numerical)?;
    let d = scale_driver(&b, a.kappa).map_err(numerical)?;
    let mut out = OutputSet::new(&a.out, "roughpath", rough_to_args(a), Some(a.seed));
    match a.mode {
        RoughMode::LiftCheck => {
            let lift = lift_level2(&d, a.p).map_err(numerical)?;
            let finest = lift.blocks_at(0).to_vec();
            // Control calibration against ω(s,t) = K(t−s); unit K when the
            // driver is degenerate.
            let control_k = if a.kappa > 0.0 { a.kappa.sqrt() } else { 1.0 };
            let mut csv = String::from(
                "level,intervals,chen_residual,geometric_residual,\
                 control_ratio_level1,control_ratio_level2\n",
            );
            for level in 0..lift.depth() {
                let len = 1usize << level;
                let om = control_k * lift.dt_at(level);
                let w1 = om.powf(1.0 / a.p);
                let w2 = om.powf(2.0 / a.p);
                let mut chen = 0.0f64;
                let mut geo = 0.0f64;
                let mut r1 = 0.0f64;
                let mut r2 = 0.0f64;
                for (i, blk) in lift.blocks_at(level).iter().enumerate() {
                    let direct = finest[i * len..(i + 1) * len]
                        .iter()
                        .fold(Level2Block::default(), |acc, b| acc.chen(b));
                    let d1 = (direct.inc[0] - blk.inc[0]).abs()
                        + (direct.inc[1] - blk.inc[1]).abs();
                    let d2: f64 = (0..2)
                        .flat_map(|r| (0..2).map(move |c| (r, c)))
                        .map(|(r, c)| (direct.area[r][c] - blk.area[r][c]).abs())
                        .sum();
                    chen = chen.max(d1.max(d2));
                    geo = geo.max(blk.geometric_residual());
                    r1 = r1.max(blk.norm_level1() / w1);
                    r2 = r2.max(blk.norm_level2() / w2);
                }
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    level,
                    lift.blocks_at(level).len(),
                    chen,
                    geo,
                    r1,
                    r2
                ));
            }
            out.emit("lift_check.csv", csv.as_bytes())?;
        }
        RoughMode::KappaContinuity => {
            if !(a.kappa > 0.0) {
                return Err(usage("kappa-continuity needs --kappa > 0".to_string()));
            }
            let seq = parse_kappa_seq(&a.kappa_seq, a.kappa)?;
            let rows = kappa_lift_continuity(&b, a.kappa, &seq, a.p).map_err(numerical)?;
            let mut csv =
                String::from("j,kappa_n,a_n,max_ratio_level1,max_ratio_level2,dp_dist\n");
            for (j, r) in rows.iter().enumerate() {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    j + 1,
                    r.kappa_n,
                    r.a_n,
                    r.max_ratio_level1,
                    r.max_ratio_level2,
                    r.dp_dist
                ));
            }
            out.emit("kappa_continuity.csv", csv.as_bytes())?;
        }
        RoughMode::Rde => {
            let z0 = parse_z0(&a.z0)?;
            if z0.as_complex().norm() == 0.0 {
                return Err(usage("--z0 must satisfy |z0| > 0".to_string()));
            }
            let lift = lift_level2(&d, a.p).map_err(numerical)?;
            let steps = a.steps.min(a.mesh);
            let traj = solve_rde_backward(&lift, z0, steps).map_err(numerical)?;
            let mut csv = String::new();
            if a.kappa == 0.0 {
                csv.push_str("t,re,im,exact_re,exact_im,abs_err\n");
                let z0c = z0.as_complex();
                for (t, z) in traj.times().iter().zip(traj.points()) {
                    let mut s = (z0c * z0c - 4.0 * t).sqrt();
                    if s.im < 0.0 {
                        s = -s;
                    }
                    csv.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        t,
                        z.re,
                        z.im,
                        s.re,
                        s.im,
                        (z - s).norm()
                    ));
                }
            } else {
                csv.push_str("t,re,im\n");
                for (t, z) in traj.times().iter().zip(traj.points()) {
                    csv.push_str(&format!("{},{},{}\n", t, z.re, z.im));
                }
            }
            out.emit("rde.csv", csv.as_bytes())?;
        }
        RoughMode::RdeContinuity => {
            if !(a.kappa > 0.0) {
                return Err(usage("rde-continuity needs --kappa > 0".to_string()));
            }
            let z0 = parse_z0(&a.z0)?;
            if z0.as_complex().norm() == 0.0 {
                return Err(usage("--z0 must satisfy |z0| > 0".to_string()));
            }
            let seq = parse_kappa_seq(&a.kappa_seq, a.kappa)?;
            let steps = a.steps.min(a.mesh);
            let rows =
                rde_kappa_continuity(&b, a.kappa, &seq, z0, a.p, steps).map_err(numerical)?;
            let mut csv = String::from("j,kappa_n,sup_dist,pvar_dist\n");
            for (j, r) in rows.iter().enumerate() {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    j + 1,
                    r.kappa_n,
                    r.sup_dist,
                    r.pvar_dist
                ));
            }
            out.emit("rde_continuity.csv", csv.as_bytes())?;
            let offsets: Vec<f64> = (1..=8).map(|j| 2.0f64.powi(-j)).collect();
            let zrows =
                rde_z0_continuity(&b, a.kappa, z0, &offsets, a.p, steps).map_err(numerical)?;
            let mut zcsv = String::from("j,offset,sup_dist,pvar_dist\n");
            for (j, r) in zrows.iter().enumerate() {
                zcsv.push_str(&format!(
                    "{},{},{},{}\n",
                    j + 1,
                    r.offset,
                    r.sup_dist,
                    r.pvar_dist
                ));
            }
            out.emit("rde_z0.csv", zcsv.as_bytes())?;
        }
    }
    out.finish()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// driver

fn driver_to_args(a: &DriverArgs) -> Vec<String> {
    let mut v = vec![
        "--seed".into(),
        a.seed.to_string(),
        "--kappa".into(),
        fmt_f64(a.kappa),
        "--fine-n".into(),
        a.fine_n.to_string(),
        "--t-horizon".into(),
        fmt_f64(a.t_horizon),
    ];
    if let Some(n) = a.interp_n {
        v.push("--interp-n".into());
        v.push(n.to_string());
    }
    v
}

fn run_driver(a: &DriverArgs) -> Result<(), CliError> {
    if !(a.kappa >= 0.0) {
        return Err(usage(format!("--kappa must be nonnegative, got {}", a.kappa)));
    }
    let b = sample_brownian(a.seed, a.fine_n, a.t_horizon).map_err(numerical)?;
    let d = scale_driver(&b, a.kappa).map_err(numerical)?;
    let d = match a.interp_n {
        Some(n) => sqrt_interpolate(&d, n).map_err(|e| usage(e.to_string()))?,
        None => d,
    };
    let mut out = OutputSet::new(&a.out, "driver", driver_to_args(a), Some(a.seed));
    let mut csv = Vec::new();
    d.write_csv(&mut csv)?;
    out.emit("driver.csv", &csv)?;
    let mut json = serde_json::to_string_pretty(&d.manifest()).map_err(numerical)?;
    json.push('\n');
    out.emit("driver.json", json.as_bytes())?;
    out.finish()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// slit-grid

fn slit_grid_to_args(a: &SlitGridArgs) -> Vec<String> {
    vec![
        "--c".into(),
        fmt_f64(a.c),
        "--tau".into(),
        fmt_f64(a.tau),
        "--shift".into(),
        fmt_f64(a.shift),
    ]
}

fn run_slit_grid(a: &SlitGridArgs) -> Result<(), CliError> {
    let block = SlitMapParams::new(a.c, a.tau, a.shift).map_err(|e| usage(e.to_string()))?;
    let chain = MapChain::new(vec![block]);
    let mut out = OutputSet::new(&a.out, "slit-grid", slit_grid_to_args(a), None);
    let mut csv = String::from("re_in,im_in,re_out,im_out\n");
    for iy in 0..16 {
        for ix in 0..25 {
            let w = Complex64::new(
                -3.0 + 6.0 * ix as f64 / 24.0,
                0.05 + 1.95 * iy as f64 / 15.0,
            );
            let z = block.apply(w);
            csv.push_str(&format!("{},{},{},{}\n", w.re, w.im, z.re, z.im));
        }
    }
    out.emit("grid.csv", csv.as_bytes())?;
    let mut json = chain.to_json().map_err(numerical)?;
    json.push('\n');
    out.emit("chain.json", json.as_bytes())?;
    out.finish()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// replay

fn run_replay(a: &ReplayArgs) -> Result<(), CliError> {
    let recorded = RunManifest::load(&a.manifest)
        .map_err(|e| usage(format!("cannot load manifest {}: {e}", a.manifest.display())))?;
    let out_dir = match &a.out {
        Some(p) => p.clone(),
        None => {
            let parent = a.manifest.parent().unwrap_or(Path::new("."));
            parent.join("replay")
        }
    };
    let mut argv: Vec<String> = vec!["loewner".into(), recorded.command.clone()];
    argv.extend(recorded.args.iter().cloned());
    argv.push("--out".into());
    argv.push(out_dir.display().to_string());
    let cli = <Cli as clap::Parser>::try_parse_from(&argv)
        .map_err(|e| usage(format!("manifest does not parse as a command: {e}")))?;
    run(cli.command)?;

    let mut mismatches = 0usize;
    for (name, digest) in &recorded.outputs {
        let bytes = std::fs::read(out_dir.join(name))?;
        let got = sha256_hex(&bytes);
        if got == *digest {
            println!("{name}: match ({digest})");
        } else {
            println!("{name}: MISMATCH (recorded {digest}, got {got})");
            mismatches += 1;
        }
    }
    if mismatches > 0 {
        return Err(CliError::Numerical(format!(
            "{mismatches} output(s) differ from the recorded digests"
        )));
    }
    println!(
        "replay of '{}' reproduced {} output(s) byte-identically",
        recorded.command,
        recorded.outputs.len()
    );
    Ok(())
}

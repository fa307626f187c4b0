//! Quantitative bounds and the continuity-in-κ experiment.
//!
//! The pieces assembled here compare two Loewner evolutions driven by
//! `√κ₁ B` and the square-root interpolation of `√κ₂ B` on the same Brownian
//! sample: the driver distance ε, the hyperbolic distance used to transport
//! closeness estimates to the tip, the backward-flow closeness bound with a
//! real-part correction, the error terms Ψ and Φ, an empirical estimate of
//! the derivative-growth exponent β, convergence-rate fitting, mesh
//! selection, and the top-level experiment that tabulates trace distances
//! along a sequence κ_j → κ.

use serde::Serialize;
use thiserror::Error;

use crate::conformal::HalfPlanePoint;
use crate::driver::{
    sample_brownian, scale_driver, sqrt_interpolate, DriverKind, DriverPath,
};
use crate::trace::{build_trace, reference_trace, TraceError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("drivers live on different meshes")]
    MeshMismatch,
    #[error(transparent)]
    Driver(#[from] crate::driver::DriverError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Sup distance between two drivers on their common mesh, with the two-term
/// split into interpolation error and κ-gap when both drivers come from the
/// same Brownian sample.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DriverDistance {
    pub epsilon: f64,
    /// `sup |λⁿ_{κ₂} − √κ₂ B|`, when identifiable from the metadata.
    pub interpolation_part: Option<f64>,
    /// `|√κ₁ − √κ₂| · sup |B|`, when identifiable from the metadata.
    pub kappa_gap_part: Option<f64>,
}

pub fn driver_distance(d1: &DriverPath, d2: &DriverPath) -> Result<DriverDistance, AnalysisError> {
    if d1.resolution() != d2.resolution() || d1.t_horizon() != d2.t_horizon() {
        return Err(AnalysisError::MeshMismatch);
    }
    let epsilon = d1
        .values()
        .iter()
        .zip(d2.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));

    let mut interpolation_part = None;
    let mut kappa_gap_part = None;
    if let (Some(k2), Some(k1), Some(s1), Some(s2)) =
        (d1.meta().kappa, d2.meta().kappa, d1.meta().seed, d2.meta().seed)
    {
        // Split available for λⁿ_{κ₂} against the raw driver √κ₁ B of the
        // same sample.
        if s1 == s2
            && d1.meta().kind == DriverKind::SqrtInterpolated
            && d2.meta().kind == DriverKind::RawBrownian
            && k1 > 0.0
        {
            let rescale = (k2 / k1).sqrt();
            let interp = d1
                .values()
                .iter()
                .zip(d2.values())
                .fold(0.0f64, |m, (a, b)| m.max((a - b * rescale).abs()));
            let sup_b = d2.sup_abs() / k1.sqrt();
            interpolation_part = Some(interp);
            kappa_gap_part = Some((k1.sqrt() - k2.sqrt()).abs() * sup_b);
        }
    }
    Ok(DriverDistance {
        epsilon,
        interpolation_part,
        kappa_gap_part,
    })
}

/// Hyperbolic distance in the upper half-plane,
/// `arccosh(1 + |z−w|² / (2 Im z Im w))`.
pub fn hyperbolic_distance(z: HalfPlanePoint, w: HalfPlanePoint) -> Result<f64, AnalysisError> {
    if z.im() <= 0.0 || w.im() <= 0.0 {
        return Err(AnalysisError::InvalidArgument(
            "hyperbolic distance needs interior points".into(),
        ));
    }
    let dz = z.as_complex() - w.as_complex();
    let u = dz.norm_sqr() / (2.0 * z.im() * w.im());
    // arccosh(1 + u) evaluated stably for small u.
    Ok((u + (u * (2.0 + u)).sqrt()).ln_1p())
}

/// Closeness bound for two backward flows with driver distance `eps`,
/// starting heights `y` and a real-part offset between the starting points:
///
/// ```text
/// |h⁽¹⁾_T(u₁) − h⁽²⁾_T(u₂)|
///   ≤ |Re u₁ − Re u₂| · I/y + eps · exp[ ½√(log A₁ · log A₂) + log log(I/y) ],
/// I = √(4T + y²),  A_k = I · |h⁽ᵏ⁾_T'(u_k)| / y.
/// ```
///
/// Domain guards: `log A_k` is floored at 0 and the ratio inside the
/// iterated logarithm at `e`; both floors only enlarge the bound.
pub fn closeness_bound(
    eps: f64,
    t_horizon: f64,
    y: f64,
    re_offset: f64,
    deriv1: f64,
    deriv2: f64,
) -> Result<f64, AnalysisError> {
    if !(y > 0.0) {
        return Err(AnalysisError::InvalidArgument(format!(
            "height y must be positive, got {y}"
        )));
    }
    if !(t_horizon >= 0.0) || !(eps >= 0.0) || !(deriv1 > 0.0) || !(deriv2 > 0.0) {
        return Err(AnalysisError::InvalidArgument(
            "need T ≥ 0, eps ≥ 0 and positive derivative magnitudes".into(),
        ));
    }
    let i_ty = (4.0 * t_horizon + y * y).sqrt();
    let ratio = i_ty / y;
    let log_a1 = (ratio * deriv1).ln().max(0.0);
    let log_a2 = (ratio * deriv2).ln().max(0.0);
    let loglog = ratio.max(std::f64::consts::E).ln().ln();
    Ok(re_offset.abs() * ratio + eps * (0.5 * (log_a1 * log_a2).sqrt() + loglog).exp())
}

/// The subpower family `φ(n) = (ln n)^q` used in the error terms.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SubpowerLog {
    pub q: f64,
}

impl Default for SubpowerLog {
    fn default() -> Self {
        SubpowerLog { q: 1.0 }
    }
}

impl SubpowerLog {
    pub fn eval(&self, n: usize) -> f64 {
        (n as f64).ln().powf(self.q)
    }
}

/// The two κ-gap error terms:
///
/// ```text
/// Ψ(n) = |√κ₁ − √κ₂| · ĉ · 2√2 · √n · φ(n)
/// Φ(n) = c · |√κ₁ − √κ₂| · exp[ √((1+β₁)/2) · ln(c φ(n)√n) + ln ln(2√(2n) φ(n)) ]
/// ```
///
/// Both vanish when κ₁ = κ₂ and are linear in `|√κ₁ − √κ₂]`.
pub fn gap_error_terms(
    kappa1: f64,
    kappa2: f64,
    n: usize,
    beta1: f64,
    phi: SubpowerLog,
    c_hat: f64,
    c: f64,
) -> Result<(f64, f64), AnalysisError> {
    if n < 2 {
        return Err(AnalysisError::InvalidArgument(format!(
            "need n ≥ 2, got {n}"
        )));
    }
    if !(beta1 > 0.0 && beta1 < 1.0) {
        return Err(AnalysisError::InvalidArgument(format!(
            "beta must lie in (0,1), got {beta1}"
        )));
    }
    let gap = (kappa1.sqrt() - kappa2.sqrt()).abs();
    let nf = n as f64;
    let phi_n = phi.eval(n);
    let psi = gap * c_hat * 2.0 * 2.0f64.sqrt() * nf.sqrt() * phi_n;
    let exponent = ((1.0 + beta1) / 2.0).sqrt() * (c * phi_n * nf.sqrt()).ln()
        + (2.0 * (2.0 * nf).sqrt() * phi_n).ln().ln();
    let phi_term = c * gap * exponent.exp();
    Ok((psi, phi_term))
}

/// Empirical estimate of the inverse-map derivative growth
/// `sup_{t,κ} |f̂'_t(iy)| ≈ c₀ y^{−β}`.
#[derive(Debug, Clone, Serialize)]
pub struct BetaEstimate {
    pub beta: f64,
    pub c0: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct BetaOptions {
    /// Coarse resolution of the chains used for the sweep.
    pub n: usize,
    /// Number of κ samples across the range.
    pub kappa_samples: usize,
    /// Evaluate at every `t_stride`-th coarse knot.
    pub t_stride: usize,
    /// Heights `y`; must contain at least two distinct values in (0, 1].
    ///
    /// Heights below the chain resolution floor `4/√n` are dropped before
    /// fitting: underneath that scale the evaluation point sees only the
    /// smooth core of the innermost block, whose derivative vanishes
    /// linearly at the tip preimage, and the growth law breaks down.
    pub y_grid: Vec<f64>,
}

impl Default for BetaOptions {
    fn default() -> Self {
        BetaOptions {
            n: 1024,
            kappa_samples: 5,
            t_stride: 2,
            y_grid: (1..=6).map(|k| 2.0f64.powi(-k)).collect(),
        }
    }
}

pub fn estimate_beta(
    b: &crate::driver::BrownianSample,
    kappa_min: f64,
    kappa_max: f64,
    opts: &BetaOptions,
) -> Result<BetaEstimate, AnalysisError> {
    if !(kappa_min > 0.0) || !(kappa_max < 8.0 / 3.0) || kappa_min > kappa_max {
        return Err(AnalysisError::InvalidArgument(format!(
            "kappa range [{kappa_min}, {kappa_max}] must sit inside (0, 8/3)"
        )));
    }
    let floor = 4.0 / (opts.n as f64).sqrt();
    let mut ys: Vec<f64> = opts.y_grid.clone();
    ys.retain(|y| *y >= floor && *y <= 1.0);
    ys.dedup_by(|a, b| a == b);
    if ys.len() < 2 {
        return Err(AnalysisError::InvalidArgument(format!(
            "degenerate y-grid: need at least two heights in [{floor}, 1]"
        )));
    }
    let kappas: Vec<f64> = if opts.kappa_samples <= 1 {
        vec![kappa_min]
    } else {
        (0..opts.kappa_samples)
            .map(|i| {
                kappa_min + (kappa_max - kappa_min) * i as f64 / (opts.kappa_samples - 1) as f64
            })
            .collect()
    };

    let mut sup_per_y = vec![0.0f64; ys.len()];
    for kappa in &kappas {
        let d = scale_driver(b, *kappa)?;
        let interp = sqrt_interpolate(&d, opts.n)?;
        let blocks = crate::trace::coarse_blocks(&interp)?;
        for k in (1..=opts.n).step_by(opts.t_stride.max(1)) {
            let b_last = &blocks[k - 1];
            let lambda = b_last.shift + b_last.c * b_last.tau.sqrt();
            for (iy, y) in ys.iter().enumerate() {
                let mut w = num_complex::Complex64::new(lambda, *y);
                let mut deriv = num_complex::Complex64::new(1.0, 0.0);
                for blk in blocks[..k].iter().rev() {
                    deriv *= blk.derivative(w);
                    w = blk.apply(w);
                }
                let m = deriv.norm();
                if m.is_finite() {
                    sup_per_y[iy] = sup_per_y[iy].max(m);
                }
            }
        }
    }

    // Least squares of ln sup against ln(1/y).
    let pts: Vec<(f64, f64)> = ys
        .iter()
        .zip(&sup_per_y)
        .map(|(y, s)| ((1.0 / y).ln(), s.ln()))
        .collect();
    let m = pts.len() as f64;
    let mx: f64 = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my: f64 = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let beta = sxy / sxx;
    let intercept = my - beta * mx;
    let residual = (pts
        .iter()
        .map(|p| {
            let e = p.1 - (beta * p.0 + intercept);
            e * e
        })
        .sum::<f64>()
        / m)
        .sqrt();
    let (y_min, y_max) = ys.iter().fold((f64::MAX, f64::MIN), |(lo, hi), y| {
        (lo.min(*y), hi.max(*y))
    });
    Ok(BetaEstimate {
        beta,
        c0: intercept.exp(),
        y_min,
        y_max,
        residual,
    })
}

/// Log-log convergence-rate fit of sup distances against resolution.
#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Number of nonpositive distances excluded from the fit.
    pub excluded: usize,
}

pub fn rate_fit(resolutions: &[usize], dists: &[f64]) -> Result<RateFit, AnalysisError> {
    if resolutions.len() != dists.len() {
        return Err(AnalysisError::InvalidArgument(
            "resolutions and distances must have equal lengths".into(),
        ));
    }
    if resolutions.len() < 4 {
        return Err(AnalysisError::InvalidArgument(format!(
            "need at least 4 resolutions, got {}",
            resolutions.len()
        )));
    }
    let pts: Vec<(f64, f64)> = resolutions
        .iter()
        .zip(dists)
        .filter(|(_, d)| **d > 0.0)
        .map(|(n, d)| ((*n as f64).ln(), d.ln()))
        .collect();
    let excluded = resolutions.len() - pts.len();
    if pts.len() < 2 {
        return Err(AnalysisError::InvalidArgument(
            "fewer than two positive distances to fit".into(),
        ));
    }
    let m = pts.len() as f64;
    let mx: f64 = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my: f64 = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        excluded,
    })
}

/// Theoretical decay exponent of the trace approximation,
/// `−(1/2)(1 − √((1+β)/2))`, for comparison with fitted slopes.
pub fn theoretical_rate_exponent(beta: f64) -> f64 {
    -0.5 * (1.0 - ((1.0 + beta) / 2.0).sqrt())
}

pub const MIN_MESH: usize = 32;
pub const MAX_MESH: usize = 1 << 14;

/// Coarse resolution for a κ-gap `gap_s = |√κ − √κ_j|`:
/// `n = clamp(2^⌈1.5 log₂(1/gap_s)⌉, 32, 2¹⁴)`.
///
/// Since `n = O(gap_s^{−1.5}) = o(gap_s^{−2})`, the product
/// `gap_s · √n · log n` tends to zero as the gap closes (the ceiling makes
/// the decay eventually monotone rather than strictly monotone).
pub fn choose_mesh(gap_s: f64) -> usize {
    if !(gap_s > 0.0) {
        return MAX_MESH;
    }
    let raw = (1.5 * (1.0 / gap_s).log2()).ceil();
    if raw <= 5.0 {
        return MIN_MESH;
    }
    if raw >= 14.0 {
        return MAX_MESH;
    }
    1usize << raw as u32
}

/// One row of the continuity experiment.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ContinuityRow {
    pub j: usize,
    pub kappa_j: f64,
    pub n_j: usize,
    /// Reference-trace distance `sup_t |γ^{κ_j} − γ^κ|` (proxy).
    pub sup_dist: f64,
    /// Approximation distance `sup_t |γ^{n,κ_j} − γ^{n,κ}|`.
    pub approx_sup_dist: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityFailure {
    pub j: usize,
    pub kappa_j: f64,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityReport {
    pub kappa: f64,
    pub seed: u64,
    pub fine_n: usize,
    pub reference_n: usize,
    pub rows: Vec<ContinuityRow>,
    pub failures: Vec<ContinuityFailure>,
}

impl ContinuityReport {
    /// CSV with header `j,kappa_j,n_j,sup_dist,approx_sup_dist`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "j,kappa_j,n_j,sup_dist,approx_sup_dist")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.j, r.kappa_j, r.n_j, r.sup_dist, r.approx_sup_dist
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ContinuityConfig {
    /// Fine dyadic mesh carrying the Brownian sample.
    pub fine_n: usize,
    /// Fixed resolution of the reference traces standing in for the exact
    /// ones; the per-j approximation resolution comes from [`choose_mesh`].
    pub reference_n: usize,
    pub t_horizon: f64,
}

impl Default for ContinuityConfig {
    fn default() -> Self {
        ContinuityConfig {
            fine_n: 1 << 16,
            reference_n: 4096,
            t_horizon: 1.0,
        }
    }
}

/// Geometric sequence `κ_j = κ + sign · 2^{−j}` for `j = 1..=count`.
pub fn geometric_kappa_seq(kappa: f64, sign: f64, count: usize) -> Vec<f64> {
    (1..=count)
        .map(|j| kappa + sign.signum() * 2.0f64.powi(-(j as i32)))
        .collect()
}

fn check_regime(label: &str, kappa: f64) -> Result<(), AnalysisError> {
    if !(kappa > 0.0 && kappa < 8.0 / 3.0) {
        return Err(AnalysisError::InvalidArgument(format!(
            "{label} = {kappa} outside the regime (0, 8/3)"
        )));
    }
    Ok(())
}

/// The coupled-driver continuity experiment: for each κ_j the coarse mesh
/// comes from [`choose_mesh`], the approximation column compares the two
/// interpolated traces at that mesh, and the reference column compares
/// fixed-resolution reference traces. Per-j failures are collected without
/// aborting the remaining legs.
pub fn continuity_experiment(
    seed: u64,
    kappa: f64,
    kappa_seq: &[f64],
    cfg: &ContinuityConfig,
) -> Result<ContinuityReport, AnalysisError> {
    check_regime("kappa", kappa)?;
    for k in kappa_seq {
        check_regime("kappa_j", *k)?;
    }
    let b = sample_brownian(seed, cfg.fine_n, cfg.t_horizon)?;
    let base = scale_driver(&b, kappa)?;
    let reference_n = cfg.reference_n.min(cfg.fine_n);
    let ref_base = reference_trace(&b, kappa, reference_n, None)?;

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (idx, kappa_j) in kappa_seq.iter().enumerate() {
        let j = idx + 1;
        let gap_s = (kappa.sqrt() - kappa_j.sqrt()).abs();
        let n_j = choose_mesh(gap_s).min(cfg.fine_n);
        let leg = (|| -> Result<ContinuityRow, AnalysisError> {
            let d_j = scale_driver(&b, *kappa_j)?;
            let approx_j = build_trace(&sqrt_interpolate(&d_j, n_j)?, None)?;
            let approx_b = build_trace(&sqrt_interpolate(&base, n_j)?, None)?;
            let approx_sup_dist = approx_j.sup_distance(&approx_b)?;
            let ref_j = reference_trace(&b, *kappa_j, reference_n, None)?;
            let sup_dist = ref_j.sup_distance(&ref_base)?;
            Ok(ContinuityRow {
                j,
                kappa_j: *kappa_j,
                n_j,
                sup_dist,
                approx_sup_dist,
            })
        })();
        match leg {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(ContinuityFailure {
                j,
                kappa_j: *kappa_j,
                message: e.to_string(),
            }),
        }
    }
    Ok(ContinuityReport {
        kappa,
        seed,
        fine_n: cfg.fine_n,
        reference_n,
        rows,
        failures,
    })
}

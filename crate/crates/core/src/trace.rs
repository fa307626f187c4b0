//! Trace construction from square-root chains.
//!
//! The approximate trace of a sqrt-interpolated driver is evaluated at the
//! coarse knots and midpoints as `γⁿ(t) = F_t(λⁿ(t) + i·y_tip)`, where `F_t`
//! is the composition of the explicit inverse blocks covering `[0, t]`. The
//! evaluation point sits directly above the critical preimage of the newest
//! block, so the tip offset enters only quadratically and a small `y_tip`
//! (default `10⁻³/√n`) is enough.
//!
//! A reference trace is the same construction at a much higher resolution;
//! it stands in for the exact trace and is documented as a proxy, not truth.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::conformal::{block_for_interval, ConformalError, HalfPlanePoint, SlitMapParams};
use crate::driver::{sqrt_interpolate, BrownianSample, DriverKind, DriverPath};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("driver must be sqrt-interpolated to build a trace")]
    NotInterpolated,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Driver(#[from] crate::driver::DriverError),
    #[error("tip evaluation failed at t = {t} after {attempts} retries")]
    TipEvaluation { t: f64, attempts: usize },
    #[error("traces live on incomparable meshes ({a} vs {b} points)")]
    MeshMismatch { a: usize, b: usize },
}

/// Default tip height for resolution `n`.
pub fn default_y_tip(n: usize) -> f64 {
    1e-3 / (n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceMeta {
    pub kappa: Option<f64>,
    pub n: usize,
    pub seed: Option<u64>,
    pub y_tip: f64,
}

/// A time-indexed curve in the closed upper half-plane.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceCurve {
    times: Vec<f64>,
    points: Vec<HalfPlanePoint>,
    meta: TraceMeta,
}

impl TraceCurve {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[HalfPlanePoint] {
        &self.points
    }

    pub fn meta(&self) -> &TraceMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Serialize to CSV with header `t,re,im`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,re,im")?;
        for (t, p) in self.times.iter().zip(&self.points) {
            writeln!(w, "{},{},{}", t, p.re(), p.im())?;
        }
        Ok(())
    }

    /// Sup distance over the common evaluation mesh.
    ///
    /// The meshes must be nested: one point count minus one divides the
    /// other. Comparison happens at the coarser curve's times.
    pub fn sup_distance(&self, other: &TraceCurve) -> Result<f64, TraceError> {
        let (coarse, fine) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        if coarse.len() < 2 || (fine.len() - 1) % (coarse.len() - 1) != 0 {
            return Err(TraceError::MeshMismatch {
                a: self.len(),
                b: other.len(),
            });
        }
        let stride = (fine.len() - 1) / (coarse.len() - 1);
        let mut sup = 0.0f64;
        for (i, p) in coarse.points.iter().enumerate() {
            let q = &fine.points[i * stride];
            sup = sup.max((p.as_complex() - q.as_complex()).norm());
        }
        Ok(sup)
    }
}

/// Principal-axis fit of the angle of a ray trace through the origin.
///
/// Points with `t < 0.05·T` are dropped so the tip offset at the base does
/// not bias the fit. The result lies in `[0, π)` for half-plane curves.
pub fn fit_ray_angle(trace: &TraceCurve) -> f64 {
    let t_min = 0.05 * trace.times.last().copied().unwrap_or(0.0);
    let pts: Vec<Complex64> = trace
        .times
        .iter()
        .zip(&trace.points)
        .filter(|(t, _)| **t >= t_min)
        .map(|(_, p)| p.as_complex())
        .collect();
    let sxy: f64 = pts.iter().map(|p| p.re * p.im).sum();
    let sxx_yy: f64 = pts.iter().map(|p| p.re * p.re - p.im * p.im).sum();
    let axis = 0.5 * (2.0 * sxy).atan2(sxx_yy);
    let mean: Complex64 = pts.iter().sum::<Complex64>() / pts.len().max(1) as f64;
    let dir = Complex64::from_polar(1.0, axis);
    let angle = if dir.re * mean.re + dir.im * mean.im >= 0.0 {
        axis
    } else {
        axis + std::f64::consts::PI
    };
    angle.rem_euclid(2.0 * std::f64::consts::PI)
}

/// Coarse building blocks of a sqrt-interpolated driver, one per interval.
pub fn coarse_blocks(d: &DriverPath) -> Result<Vec<SlitMapParams>, TraceError> {
    if d.meta().kind != DriverKind::SqrtInterpolated {
        return Err(TraceError::NotInterpolated);
    }
    let n = d.meta().coarse_n.expect("interpolated driver has coarse_n");
    let stride = d.resolution() / n;
    let tau = d.t_horizon() / n as f64;
    Ok((0..n)
        .map(|k| block_for_interval(d, k, stride, tau))
        .collect())
}

/// Evaluate the chain of `blocks[..k_full]` plus an optional partial block
/// at the point `λ + i·y` above the current driver value, with the retry
/// contract on non-finite output.
fn tip_eval(
    blocks: &[SlitMapParams],
    k_full: usize,
    partial: Option<&SlitMapParams>,
    y_tip: f64,
    t: f64,
) -> Result<Complex64, TraceError> {
    let lambda = match partial {
        Some(p) => p.shift + p.c * p.tau.sqrt(),
        None if k_full == 0 => blocks.first().map_or(0.0, |b| b.shift),
        None => {
            let b = &blocks[k_full - 1];
            b.shift + b.c * b.tau.sqrt()
        }
    };
    let mut y = y_tip;
    for _ in 0..3 {
        let mut w = Complex64::new(lambda, y);
        if let Some(p) = partial {
            w = p.apply(w);
        }
        for b in blocks[..k_full].iter().rev() {
            w = b.apply(w);
        }
        if w.re.is_finite() && w.im.is_finite() {
            return Ok(w);
        }
        y *= 2.0;
    }
    Err(TraceError::TipEvaluation { t, attempts: 3 })
}

/// Build the approximate trace of a sqrt-interpolated driver, evaluated at
/// the coarse knots and midpoints (`2n + 1` mesh times).
pub fn build_trace(d: &DriverPath, y_tip: Option<f64>) -> Result<TraceCurve, TraceError> {
    let blocks = coarse_blocks(d)?;
    let n = blocks.len();
    let tau = d.t_horizon() / n as f64;
    let y_tip = y_tip.unwrap_or_else(|| default_y_tip(n));
    if !(y_tip > 0.0) {
        return Err(TraceError::InvalidArgument(format!(
            "y_tip must be positive, got {y_tip}"
        )));
    }
    let mut times = Vec::with_capacity(2 * n + 1);
    let mut points = Vec::with_capacity(2 * n + 1);
    for m in 0..=2 * n {
        let t = m as f64 * d.t_horizon() / (2 * n) as f64;
        let k_full = m / 2;
        let partial = if m % 2 == 1 {
            let b = &blocks[k_full];
            Some(SlitMapParams {
                c: b.c,
                tau: tau / 2.0,
                shift: b.shift,
            })
        } else {
            None
        };
        let z = tip_eval(&blocks, k_full, partial.as_ref(), y_tip, t)?;
        times.push(t);
        points.push(HalfPlanePoint::from_complex(z)?);
    }
    Ok(TraceCurve {
        times,
        points,
        meta: TraceMeta {
            kappa: d.meta().kappa,
            n,
            seed: d.meta().seed,
            y_tip,
        },
    })
}

/// High-resolution stand-in for the exact trace: the same pipeline run at
/// `n_ref` coarse knots on the sample's fine mesh.
pub fn reference_trace(
    b: &BrownianSample,
    kappa: f64,
    n_ref: usize,
    y_tip: Option<f64>,
) -> Result<TraceCurve, TraceError> {
    let d = crate::driver::scale_driver(b, kappa)?;
    let interp = sqrt_interpolate(&d, n_ref)?;
    build_trace(&interp, y_tip)
}

/// The near-tip window `{ |x| ≤ φ(n)/√n, 1/(√n φ(n)) ≤ y ≤ c/√n }`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TipBox {
    pub n: usize,
    pub c: f64,
    pub phi_n: f64,
}

impl TipBox {
    pub fn new(n: usize, c: f64, phi_n: f64) -> Self {
        TipBox { n, c, phi_n }
    }

    /// The box is empty when its floor exceeds its ceiling.
    pub fn is_degenerate(&self) -> bool {
        self.phi_n < 1.0 / self.c
    }

    pub fn contains(&self, z: Complex64) -> bool {
        let rn = (self.n as f64).sqrt();
        z.re.abs() <= self.phi_n / rn && z.im >= 1.0 / (rn * self.phi_n) && z.im <= self.c / rn
    }
}

/// Outcome of scanning the mapped-forward curve near one coarse knot.
#[derive(Debug, Clone, Serialize)]
pub struct TipBoxReport {
    pub degenerate: bool,
    /// First `s ∈ (0, 2/n]` with `γ_k(s)` inside the box, if any.
    pub witness_s: Option<f64>,
    /// Whether every sampled `r ∈ [1/n, 2/n]` lands inside the box.
    pub all_in_second_window: bool,
    pub samples: usize,
}

/// Scan `γ_k(s) = g_{t_k}(γ(t_k + s)) − λ(t_k)` for `s ∈ (0, 2/n]`.
///
/// For a chain-built trace the forward map `g_{t_k}` cancels against the
/// first `k` blocks, so the scan only composes the blocks after `t_k`,
/// evaluated at the driver's fine mesh offsets.
pub fn tip_box_check(
    d: &DriverPath,
    k: usize,
    tip_box: &TipBox,
    y_tip: Option<f64>,
) -> Result<TipBoxReport, TraceError> {
    let blocks = coarse_blocks(d)?;
    let n = blocks.len();
    if k + 2 > n {
        return Err(TraceError::InvalidArgument(format!(
            "knot index {k} needs the window [t_k, t_k + 2/n] inside [0, T] (n = {n})"
        )));
    }
    if tip_box.is_degenerate() {
        return Ok(TipBoxReport {
            degenerate: true,
            witness_s: None,
            all_in_second_window: false,
            samples: 0,
        });
    }
    let y_tip = y_tip.unwrap_or_else(|| default_y_tip(n));
    let stride = d.resolution() / n;
    let tau = d.t_horizon() / n as f64;
    let lambda_k = blocks[k].shift;
    let mut witness = None;
    let mut all_in = true;
    let mut samples = 0usize;
    for j in 1..=2 * stride {
        let s = j as f64 * d.dt();
        let full_after = j / stride;
        let rem_steps = j % stride;
        let mut w = if rem_steps > 0 {
            let b = &blocks[k + full_after];
            let p = SlitMapParams {
                c: b.c,
                tau: rem_steps as f64 * d.dt(),
                shift: b.shift,
            };
            p.apply(Complex64::new(p.shift + p.c * p.tau.sqrt(), y_tip))
        } else {
            let b = &blocks[k + full_after - 1];
            Complex64::new(b.shift + b.c * tau.sqrt(), y_tip)
        };
        for b in blocks[k..k + full_after].iter().rev() {
            w = b.apply(w);
        }
        let mapped = w - lambda_k;
        samples += 1;
        let inside = tip_box.contains(mapped);
        if inside && witness.is_none() {
            witness = Some(s);
        }
        if j >= stride && !inside {
            all_in = false;
        }
    }
    Ok(TipBoxReport {
        degenerate: false,
        witness_s: witness,
        all_in_second_window: all_in,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{sample_brownian, scale_driver};
    use approx::assert_relative_eq;

    fn interpolated(seed: u64, kappa: f64, fine: usize, n: usize) -> DriverPath {
        let b = sample_brownian(seed, fine, 1.0).unwrap();
        let d = scale_driver(&b, kappa).unwrap();
        sqrt_interpolate(&d, n).unwrap()
    }

    #[test]
    fn vertical_trace_is_the_segment_two_i_sqrt_t() {
        let d = DriverPath::from_fn(|_| 0.0, 256, 1.0).unwrap();
        let interp = sqrt_interpolate(&d, 16).unwrap();
        let trace = build_trace(&interp, None).unwrap();
        let tol = 1.5 * trace.meta().y_tip;
        for (t, p) in trace.times().iter().zip(trace.points()) {
            assert!(p.re().abs() < 1e-6, "vertical trace drifted: {}", p.re());
            assert_relative_eq!(p.im(), 2.0 * t.sqrt(), epsilon = tol);
        }
        let last = trace.points().last().unwrap();
        assert_relative_eq!(last.im(), 2.0, epsilon = 1e-4);
    }

    #[test]
    fn trace_starts_at_the_driver_within_tip_tolerance() {
        let d = interpolated(42, 2.0, 1024, 64);
        let trace = build_trace(&d, None).unwrap();
        let start = trace.points()[0].as_complex();
        let lambda0 = Complex64::new(d.values()[0], 0.0);
        assert!((start - lambda0).norm() <= 2.0 * trace.meta().y_tip);
    }

    #[test]
    fn single_block_trace_is_straight_with_the_predicted_angle() {
        let c = 3.0;
        let d = DriverPath::from_fn(|t: f64| c * t.sqrt(), 512, 1.0).unwrap();
        let interp = sqrt_interpolate(&d, 1).unwrap();
        let trace = build_trace(&interp, None).unwrap();
        let alpha = crate::conformal::slit_angle(c);
        let angle = fit_ray_angle(&trace);
        assert!(
            (angle - alpha * std::f64::consts::PI).abs() < 1e-3,
            "fitted angle {angle} vs expected {}",
            alpha * std::f64::consts::PI
        );
    }

    #[test]
    fn single_block_trace_length_scales_like_sqrt_t() {
        let d = DriverPath::from_fn(|t: f64| 2.0 * t.sqrt(), 512, 1.0).unwrap();
        let interp = sqrt_interpolate(&d, 1).unwrap();
        let trace = build_trace(&interp, None).unwrap();
        let pts: Vec<(f64, f64)> = trace
            .times()
            .iter()
            .zip(trace.points())
            .filter(|(t, _)| **t >= 0.25)
            .map(|(t, p)| (t.ln(), p.as_complex().norm().ln()))
            .collect();
        let (slope, r2) = linfit(&pts);
        assert!((slope - 0.5).abs() < 1e-3, "growth exponent {slope}");
        assert!(r2 > 0.999, "fit quality {r2}");
    }

    #[test]
    fn refinement_brings_consecutive_traces_closer() {
        let b = sample_brownian(42, 1024, 1.0).unwrap();
        let d = scale_driver(&b, 2.0).unwrap();
        let t64 = build_trace(&sqrt_interpolate(&d, 64).unwrap(), None).unwrap();
        let t128 = build_trace(&sqrt_interpolate(&d, 128).unwrap(), None).unwrap();
        let t256 = build_trace(&sqrt_interpolate(&d, 256).unwrap(), None).unwrap();
        let d1 = t64.sup_distance(&t128).unwrap();
        let d2 = t128.sup_distance(&t256).unwrap();
        assert!(d1 > 0.0 && d2 > 0.0);
        assert!(d2 < d1, "refinement did not contract: {d1} -> {d2}");
    }

    #[test]
    fn reference_trace_for_zero_kappa_is_vertical() {
        let b = sample_brownian(42, 4096, 1.0).unwrap();
        let trace = reference_trace(&b, 0.0, 256, None).unwrap();
        for (t, p) in trace.times().iter().zip(trace.points()) {
            assert!(p.re().abs() < 1e-8);
            assert_relative_eq!(p.im(), 2.0 * t.sqrt(), epsilon = 1e-4);
        }
    }

    #[test]
    fn reference_refinement_tightens_the_proxy() {
        // Two high-resolution references sit closer to each other than the
        // coarse curve sits to either, so the proxy error is dominated by
        // the coarse term.
        let b = sample_brownian(42, 1 << 13, 1.0).unwrap();
        let coarse = reference_trace(&b, 2.0, 128, None).unwrap();
        let ref_a = reference_trace(&b, 2.0, 2048, None).unwrap();
        let ref_b = reference_trace(&b, 2.0, 4096, None).unwrap();
        let d_coarse = coarse.sup_distance(&ref_a).unwrap();
        let d_refs = ref_a.sup_distance(&ref_b).unwrap();
        assert!(
            d_refs < d_coarse,
            "reference refinement did not tighten: {d_refs} vs {d_coarse}"
        );
    }

    #[test]
    fn modulus_of_continuity_scan_fits_a_finite_prefactor() {
        // Empirical Hölder-type modulus: |γ(t+s) − γ(t)| ≤ C·y^{1−β} over
        // s ≤ y². The scan fits C; report-style, only finiteness is pinned.
        let b = sample_brownian(42, 1 << 13, 1.0).unwrap();
        let trace = reference_trace(&b, 2.0, 512, None).unwrap();
        let dt = trace.times()[1] - trace.times()[0];
        let beta = 0.5;
        let mut c_fit = 0.0f64;
        for k in 2..=5u32 {
            let y = 2.0f64.powi(-(k as i32));
            let window = ((y * y / dt) as usize).max(1);
            let pts = trace.points();
            let mut modulus = 0.0f64;
            for i in 0..pts.len() {
                for j in i + 1..(i + 1 + window).min(pts.len()) {
                    modulus =
                        modulus.max((pts[j].as_complex() - pts[i].as_complex()).norm());
                }
            }
            c_fit = c_fit.max(modulus / y.powf(1.0 - beta));
        }
        assert!(c_fit.is_finite() && c_fit > 0.0);
        println!("modulus scan prefactor C = {c_fit:.3} at beta = {beta}");
    }

    #[test]
    fn sup_distance_requires_nested_meshes() {
        let d1 = interpolated(42, 2.0, 1024, 64);
        let d2 = interpolated(42, 2.0, 1024, 128);
        let d3 = interpolated(42, 2.0, 960, 96);
        let t1 = build_trace(&d1, None).unwrap();
        let t2 = build_trace(&d2, None).unwrap();
        let t3 = build_trace(&d3, None).unwrap();
        assert!(t1.sup_distance(&t2).is_ok());
        assert!(t1.sup_distance(&t3).is_err());
        assert_eq!(t1.sup_distance(&t1).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_box_is_reported() {
        let d = interpolated(42, 2.0, 1024, 64);
        let bx = TipBox::new(64, 2.0, 0.3);
        assert!(bx.is_degenerate());
        let report = tip_box_check(&d, 3, &bx, None).unwrap();
        assert!(report.degenerate);
        assert!(report.witness_s.is_none());
    }

    #[test]
    fn vertical_slit_box_membership_matches_the_closed_form() {
        // For the zero driver γ_k(s) = 2i√s up to tip error, so membership
        // is 1/(√n φ) ≤ 2√s ≤ c/√n.
        let d = DriverPath::from_fn(|_| 0.0, 4096, 1.0).unwrap();
        let n = 64usize;
        let interp = sqrt_interpolate(&d, n).unwrap();
        let c = 2.0 * 2.0f64.sqrt();
        let phi = (n as f64).ln();
        let bx = TipBox::new(n, c, phi);
        let report = tip_box_check(&interp, 5, &bx, None).unwrap();
        assert!(!report.degenerate);
        let s = report.witness_s.expect("vertical slit must produce a witness");
        let rn = (n as f64).sqrt();
        let lo = 1.0 / (rn * phi);
        let hi = c / rn;
        let height = 2.0 * s.sqrt();
        assert!(
            height >= lo * 0.9 && height <= hi * 1.1,
            "witness height {height} outside [{lo}, {hi}]"
        );
    }

    #[test]
    fn brownian_box_witness_found_at_desk_scale() {
        let d = interpolated(42, 2.0, 1 << 14, 256);
        let bx = TipBox::new(256, 2.0 * 2.0f64.sqrt(), (256f64).ln());
        let report = tip_box_check(&d, 100, &bx, None).unwrap();
        assert!(report.samples > 0);
        assert!(
            report.witness_s.is_some(),
            "no witness in [0, 2/n] for the sampled path"
        );
    }

    #[test]
    fn tip_box_check_rejects_out_of_range_knots() {
        let d = interpolated(42, 2.0, 1024, 64);
        let bx = TipBox::new(64, 2.0 * 2.0f64.sqrt(), 4.0);
        assert!(tip_box_check(&d, 63, &bx, None).is_err());
    }

    fn linfit(pts: &[(f64, f64)]) -> (f64, f64) {
        let m = pts.len() as f64;
        let mx: f64 = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my: f64 = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let syy: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
        (sxy / sxx, (sxy * sxy) / (sxx * syy))
    }
}

//! Exact single-slit building blocks and their compositions.
//!
//! For a driver `c√s + d` on an interval of length `τ` the forward Loewner
//! map has an explicit inverse: with
//!
//! ```text
//! α = 1/2 − c / (2√(16 + c²)),
//! a = 2√(τ α/(1−α)),   b = 2√(τ (1−α)/α),
//! ```
//!
//! the map `f̂(w) = (w + a)^{1−α} (w − b)^α` sends the upper half-plane onto
//! the half-plane minus a straight segment from 0 of angle `απ`, with
//! hydrodynamic normalization `f̂(w) = w + O(1/w)` and half-plane capacity
//! `2τ` (so `f̂(w) = w − 2τ/w + …` at infinity). The constants follow from
//! matching the constant and `1/w` coefficients: `(1−α)a = αb` and
//! `(1−α)a² + αb² = 4τ`. Shifted drivers conjugate by the translation
//! `w ↦ f̂(w − d) + d`, so composites stay hydrodynamically normalized.
//!
//! Powers use the principal branch, which keeps arguments in `[0, π]` on the
//! closed half-plane. The two finite branch points `−a` and `b` (in shifted
//! coordinates) are the feet of the slit.
//!
//! The explicit constants are pinned by an independent oracle: integrating
//! the forward Loewner ODE with driver `c√s` (see [`crate::ode`]) must
//! reproduce the block map. Tests enforce that before anything else trusts
//! this module.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{DriverKind, DriverPath};

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("singular input at map stage {stage}: point at a branch point")]
    SingularInput { stage: usize },
    #[error("point swallowed near t = {t_estimate}")]
    Swallowed { t_estimate: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// A point in the closed upper half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlanePoint {
    re: f64,
    im: f64,
}

impl HalfPlanePoint {
    pub fn new(re: f64, im: f64) -> Result<Self, ConformalError> {
        if !re.is_finite() || !im.is_finite() {
            return Err(ConformalError::InvalidArgument(format!(
                "coordinates must be finite, got {re} + {im}i"
            )));
        }
        if im < 0.0 {
            return Err(ConformalError::InvalidArgument(format!(
                "imaginary part must be nonnegative, got {im}"
            )));
        }
        // Normalize -0.0 so principal-branch arguments stay in [0, π].
        Ok(HalfPlanePoint {
            re,
            im: if im == 0.0 { 0.0 } else { im },
        })
    }

    /// Accepts a tiny negative imaginary part (roundoff from conformal
    /// arithmetic) and clamps it to the boundary.
    pub fn from_complex(z: Complex64) -> Result<Self, ConformalError> {
        if z.im < 0.0 && z.im > -1e-12 * (1.0 + z.norm()) {
            HalfPlanePoint::new(z.re, 0.0)
        } else {
            HalfPlanePoint::new(z.re, z.im)
        }
    }

    pub fn re(&self) -> f64 {
        self.re
    }

    pub fn im(&self) -> f64 {
        self.im
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// Slit angle `α(c) = 1/2 − c / (2√(16 + c²))`, the angle/π of the straight
/// trace produced by the driver `c√t`. Strictly decreasing, `α(0) = 1/2`.
pub fn slit_angle(c: f64) -> f64 {
    0.5 - 0.5 * c / (16.0 + c * c).sqrt()
}

/// One square-root building block: driver `c√s + shift` over a time interval
/// of length `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlitMapParams {
    pub c: f64,
    pub tau: f64,
    pub shift: f64,
}

impl SlitMapParams {
    pub fn new(c: f64, tau: f64, shift: f64) -> Result<Self, ConformalError> {
        if !c.is_finite() || !shift.is_finite() {
            return Err(ConformalError::InvalidArgument(
                "block coefficients must be finite".into(),
            ));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(ConformalError::InvalidArgument(format!(
                "block duration must be positive, got {tau}"
            )));
        }
        Ok(SlitMapParams { c, tau, shift })
    }

    pub fn alpha(&self) -> f64 {
        slit_angle(self.c)
    }

    /// Branch points `(−a, b)` of the inverse map in shifted coordinates.
    pub fn branch_offsets(&self) -> (f64, f64) {
        let alpha = self.alpha();
        let a = 2.0 * (self.tau * alpha / (1.0 - alpha)).sqrt();
        let b = 2.0 * (self.tau * (1.0 - alpha) / alpha).sqrt();
        (a, b)
    }

    /// Half-plane capacity of the block, `2τ`.
    pub fn capacity(&self) -> f64 {
        2.0 * self.tau
    }

    /// Tip of the slit (trace endpoint of the block), in absolute
    /// coordinates: `shift + L·exp(iαπ)` with `L ∝ √τ`.
    pub fn slit_tip(&self) -> Complex64 {
        let alpha = self.alpha();
        let len = 2.0
            * self.tau.sqrt()
            * (1.0 - alpha).powf(0.5 - alpha)
            * alpha.powf(alpha - 0.5);
        self.shift + Complex64::from_polar(len, alpha * std::f64::consts::PI)
    }

    /// Inverse map of the block, `w ↦ f̂(w − shift) + shift`.
    ///
    /// Assumes `Im w ≥ 0`; does not test for branch-point hits. The result
    /// has `Im ≥ 0` whenever the input does.
    pub fn apply(&self, w: Complex64) -> Complex64 {
        let alpha = self.alpha();
        let (a, b) = self.branch_offsets();
        let im = if w.im == 0.0 { 0.0 } else { w.im };
        let wt = Complex64::new(w.re - self.shift, im);
        let la = (wt + a).ln();
        let lb = (wt - b).ln();
        let z = (la * (1.0 - alpha) + lb * alpha).exp();
        let zi = if w.im >= 0.0 && z.im < 0.0 { 0.0 } else { z.im };
        Complex64::new(z.re + self.shift, zi)
    }

    /// Complex derivative of the inverse map at `w`, via
    /// `f̂'(w̃) = f̂(w̃) · ((1−α)/(w̃+a) + α/(w̃−b))`.
    pub fn derivative(&self, w: Complex64) -> Complex64 {
        let alpha = self.alpha();
        let (a, b) = self.branch_offsets();
        let im = if w.im == 0.0 { 0.0 } else { w.im };
        let wt = Complex64::new(w.re - self.shift, im);
        let la = (wt + a).ln();
        let lb = (wt - b).ln();
        let f = (la * (1.0 - alpha) + lb * alpha).exp();
        f * ((1.0 - alpha) / (wt + a) + alpha / (wt - b))
    }

    fn hits_branch_point(&self, w: Complex64) -> bool {
        if w.im > 0.0 {
            return false;
        }
        let (a, b) = self.branch_offsets();
        let x = w.re - self.shift;
        let tol = 1e-12;
        (x + a).abs() <= tol * (1.0 + a) || (x - b).abs() <= tol * (1.0 + b)
    }
}

/// Checked single-block evaluation with the contract errors surfaced.
pub fn slit_map_inverse(
    p: &SlitMapParams,
    w: HalfPlanePoint,
) -> Result<HalfPlanePoint, ConformalError> {
    let z = w.as_complex();
    if p.hits_branch_point(z) {
        return Err(ConformalError::SingularInput { stage: 0 });
    }
    HalfPlanePoint::from_complex(p.apply(z))
}

/// An ordered chain of blocks covering `[0, t]`, first block first.
///
/// Composition applies the blocks in reverse time order (the last block is
/// innermost), which realizes the inverse `g_t^{-1}` of the Loewner map of
/// the concatenated driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MapChain {
    blocks: Vec<SlitMapParams>,
}

impl MapChain {
    pub fn new(blocks: Vec<SlitMapParams>) -> Self {
        MapChain { blocks }
    }

    pub fn empty() -> Self {
        MapChain { blocks: Vec::new() }
    }

    /// Chain of the full and (possibly) partial blocks of a sqrt-interpolated
    /// driver up to time `t_end`.
    pub fn from_driver(d: &DriverPath, t_end: f64) -> Result<Self, ConformalError> {
        if d.meta().kind != DriverKind::SqrtInterpolated {
            return Err(ConformalError::InvalidArgument(
                "chain construction requires a sqrt-interpolated driver".into(),
            ));
        }
        let n = d.meta().coarse_n.expect("interpolated driver has coarse_n");
        if !(0.0..=d.t_horizon() * (1.0 + 1e-12)).contains(&t_end) {
            return Err(ConformalError::InvalidArgument(format!(
                "t_end {t_end} outside [0, {}]",
                d.t_horizon()
            )));
        }
        let tau = d.t_horizon() / n as f64;
        let stride = d.resolution() / n;
        let full = ((t_end / tau) as usize).min(n);
        let mut blocks = Vec::with_capacity(full + 1);
        for k in 0..full {
            blocks.push(block_for_interval(d, k, stride, tau));
        }
        let rem = t_end - full as f64 * tau;
        if rem > 1e-15 && full < n {
            let b = block_for_interval(d, full, stride, tau);
            blocks.push(SlitMapParams {
                c: b.c,
                tau: rem,
                shift: b.shift,
            });
        }
        Ok(MapChain { blocks })
    }

    pub fn blocks(&self) -> &[SlitMapParams] {
        &self.blocks
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Total half-plane capacity, `2 Σ τ`.
    pub fn total_capacity(&self) -> f64 {
        2.0 * self.blocks.iter().map(|b| b.tau).sum::<f64>()
    }

    /// Unchecked composition for interior points.
    pub fn apply(&self, w: Complex64) -> Complex64 {
        self.blocks.iter().rev().fold(w, |z, b| b.apply(z))
    }

    /// Checked composition; a branch-point hit reports the failing stage.
    pub fn compose(&self, w: HalfPlanePoint) -> Result<HalfPlanePoint, ConformalError> {
        let mut z = w.as_complex();
        for (stage, b) in self.blocks.iter().enumerate().rev() {
            if b.hits_branch_point(z) {
                return Err(ConformalError::SingularInput { stage });
            }
            z = b.apply(z);
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(ConformalError::Numerical(format!(
                    "non-finite value at stage {stage}"
                )));
            }
        }
        HalfPlanePoint::from_complex(z)
    }

    /// Chain-rule derivative of the composition at an interior point.
    pub fn derivative(&self, w: HalfPlanePoint) -> Result<Complex64, ConformalError> {
        if w.im() <= 0.0 {
            return Err(ConformalError::InvalidArgument(
                "derivative requires Im w > 0".into(),
            ));
        }
        Ok(self.derivative_unchecked(w.as_complex()))
    }

    pub fn derivative_unchecked(&self, w: Complex64) -> Complex64 {
        let mut z = w;
        let mut deriv = Complex64::new(1.0, 0.0);
        for b in self.blocks.iter().rev() {
            deriv *= b.derivative(z);
            z = b.apply(z);
        }
        deriv
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// Block for the `k`-th coarse interval of a sqrt-interpolated driver.
pub(crate) fn block_for_interval(
    d: &DriverPath,
    k: usize,
    stride: usize,
    tau: f64,
) -> SlitMapParams {
    let anchor = d.values()[k * stride];
    let inc = d.values()[(k + 1) * stride] - anchor;
    SlitMapParams {
        c: inc / tau.sqrt(),
        tau,
        shift: anchor,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{sample_brownian, scale_driver, sqrt_interpolate};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn slit_angle_reference_values() {
        assert_eq!(slit_angle(0.0), 0.5);
        assert_relative_eq!(slit_angle(3.0), 0.2, epsilon = 1e-15);
        assert_relative_eq!(slit_angle(-3.0), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn vertical_block_is_the_sqrt_map() {
        let p = SlitMapParams::new(0.0, 0.7, 0.0).unwrap();
        for y in [0.1, 0.5, 2.0, 10.0] {
            let got = p.apply(Complex64::new(0.0, y));
            let want = Complex64::new(0.0, (y * y + 4.0 * 0.7).sqrt());
            assert_relative_eq!(got.re, want.re, epsilon = 1e-12);
            assert_relative_eq!(got.im, want.im, max_relative = 1e-12);
        }
    }

    #[test]
    fn tiny_block_is_near_identity() {
        let p = SlitMapParams::new(2.0, 1e-12, 0.3).unwrap();
        for w in [Complex64::new(0.4, 0.6), Complex64::new(-1.0, 2.0)] {
            assert!((p.apply(w) - w).norm() < 1e-6);
        }
    }

    #[test]
    fn slit_tip_for_vertical_block() {
        let p = SlitMapParams::new(0.0, 0.25, 1.5).unwrap();
        let tip = p.slit_tip();
        assert_relative_eq!(tip.re, 1.5, epsilon = 1e-12);
        assert_relative_eq!(tip.im, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn branch_points_are_rejected_as_singular() {
        let p = SlitMapParams::new(1.0, 0.5, 0.0).unwrap();
        let (a, b) = p.branch_offsets();
        for x in [-a, b] {
            let w = HalfPlanePoint::new(x, 0.0).unwrap();
            assert!(matches!(
                slit_map_inverse(&p, w),
                Err(ConformalError::SingularInput { .. })
            ));
        }
        let w = HalfPlanePoint::new(b + 1.0, 0.0).unwrap();
        assert!(slit_map_inverse(&p, w).is_ok());
    }

    #[test]
    fn half_plane_point_rejects_lower_half_plane() {
        assert!(HalfPlanePoint::new(0.0, -0.1).is_err());
        assert!(HalfPlanePoint::new(f64::NAN, 0.0).is_err());
        let p = HalfPlanePoint::new(1.0, 0.0).unwrap();
        assert_eq!(p.im(), 0.0);
    }

    #[test]
    fn empty_chain_is_identity_with_unit_derivative() {
        let chain = MapChain::empty();
        let w = HalfPlanePoint::new(0.3, 0.4).unwrap();
        assert_eq!(chain.compose(w).unwrap(), w);
        assert_eq!(chain.derivative(w).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(chain.total_capacity(), 0.0);
    }

    #[test]
    fn two_vertical_blocks_compose_like_one() {
        let chain = MapChain::new(vec![
            SlitMapParams::new(0.0, 0.5, 0.0).unwrap(),
            SlitMapParams::new(0.0, 0.5, 0.0).unwrap(),
        ]);
        for y in [0.2, 1.0, 3.0] {
            let got = chain.apply(Complex64::new(0.0, y));
            assert_relative_eq!(got.im, (y * y + 4.0).sqrt(), max_relative = 1e-12);
            assert!(got.re.abs() < 1e-12);
        }
        assert_relative_eq!(chain.total_capacity(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn single_vertical_block_derivative_modulus() {
        let tau = 0.3;
        let p = SlitMapParams::new(0.0, tau, 0.0).unwrap();
        for y in [0.1, 0.7, 2.0] {
            let d = p.derivative(Complex64::new(0.0, y));
            assert_relative_eq!(
                d.norm(),
                y / (y * y + 4.0 * tau).sqrt(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn chain_derivative_matches_finite_differences() {
        let b = sample_brownian(42, 512, 1.0).unwrap();
        let d = scale_driver(&b, 2.0).unwrap();
        let interp = sqrt_interpolate(&d, 8).unwrap();
        let chain = MapChain::from_driver(&interp, 1.0).unwrap();
        let w = Complex64::new(0.3, 0.2);
        let h = 1e-6;
        let fd = (chain.apply(w + h) - chain.apply(w - h)) / (2.0 * h);
        let an = chain.derivative_unchecked(w);
        assert!(
            (fd - an).norm() / an.norm() < 1e-5,
            "finite difference {fd} vs analytic {an}"
        );
    }

    #[test]
    fn chain_derivative_obeys_the_half_plane_growth_bound() {
        // Any conformal self-map of the half-plane obeys a Koebe-type bound
        // |F'(x + iy)| ≤ C(1/y + 1); the chains must not grow faster.
        for seed in [1u64, 42] {
            let b = sample_brownian(seed, 4096, 1.0).unwrap();
            let d = scale_driver(&b, 2.0).unwrap();
            let interp = sqrt_interpolate(&d, 64).unwrap();
            let chain = MapChain::from_driver(&interp, 1.0).unwrap();
            let lambda_end = *interp.values().last().unwrap();
            for y in [1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0] {
                let deriv = chain
                    .derivative_unchecked(Complex64::new(lambda_end, y))
                    .norm();
                assert!(
                    deriv <= 8.0 * (1.0 / y + 1.0),
                    "derivative {deriv} breaks the 1/y growth bound at y = {y}"
                );
            }
        }
    }

    #[test]
    fn chain_capacity_from_large_w_expansion() {
        let b = sample_brownian(42, 1024, 1.0).unwrap();
        let d = scale_driver(&b, 2.0).unwrap();
        let interp = sqrt_interpolate(&d, 64).unwrap();
        let chain = MapChain::from_driver(&interp, 1.0).unwrap();
        let w = Complex64::new(0.0, 1000.0);
        let fitted = -(w * (chain.apply(w) - w)).re;
        assert_relative_eq!(fitted, chain.total_capacity(), max_relative = 0.01);
    }

    #[test]
    fn hydrodynamic_normalization_decays_at_infinity() {
        let p = SlitMapParams::new(2.5, 0.8, 0.0).unwrap();
        let cap = p.capacity();
        for r in [100.0, 300.0, 1000.0] {
            let w = Complex64::new(0.3 * r, 0.954 * r);
            let dev = (p.apply(w) - w).norm();
            assert!(
                dev <= 1.1 * cap / w.norm(),
                "|f(w) - w| = {dev} too large at |w| = {r}"
            );
        }
    }

    #[test]
    fn partial_chain_from_driver_covers_requested_time() {
        let b = sample_brownian(1, 256, 1.0).unwrap();
        let d = scale_driver(&b, 1.0).unwrap();
        let interp = sqrt_interpolate(&d, 8).unwrap();
        let chain = MapChain::from_driver(&interp, 0.3125).unwrap();
        // 0.3125 = 2 full intervals of 1/8 plus a remainder of 1/16.
        assert_eq!(chain.blocks().len(), 3);
        assert_relative_eq!(chain.total_capacity(), 2.0 * 0.3125, epsilon = 1e-12);
        let values = interp.values();
        assert_eq!(chain.blocks()[1].shift, values[256 / 8]);
    }

    #[test]
    fn chain_json_round_trip() {
        let chain = MapChain::new(vec![
            SlitMapParams::new(1.0, 0.5, 0.0).unwrap(),
            SlitMapParams::new(-0.3, 0.5, 0.8).unwrap(),
        ]);
        let json = chain.to_json().unwrap();
        let back = MapChain::from_json(&json).unwrap();
        assert_eq!(chain, back);
    }

    proptest! {
        #[test]
        fn alpha_is_in_unit_interval_and_antisymmetric(c in -50.0f64..50.0) {
            let a = slit_angle(c);
            prop_assert!(a > 0.0 && a < 1.0);
            prop_assert!((slit_angle(-c) - (1.0 - a)).abs() < 1e-12);
        }

        #[test]
        fn alpha_is_strictly_decreasing(c1 in -20.0f64..20.0, gap in 0.01f64..5.0) {
            prop_assert!(slit_angle(c1 + gap) < slit_angle(c1));
        }

        #[test]
        fn blocks_preserve_the_upper_half_plane(
            c in -5.0f64..5.0,
            tau in 1e-4f64..2.0,
            shift in -3.0f64..3.0,
            re in -5.0f64..5.0,
            im in 0.0f64..5.0,
        ) {
            let p = SlitMapParams::new(c, tau, shift).unwrap();
            let z = p.apply(Complex64::new(re, im));
            prop_assert!(z.im >= 0.0, "image {z} left the half-plane");
            prop_assert!(z.re.is_finite() && z.im.is_finite());
        }
    }
}

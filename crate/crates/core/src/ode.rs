//! Adaptive integration of the forward and backward Loewner equations.
//!
//! The forward evolution solves `∂_t g = 2/(g − λ(t))`, the backward one
//! `∂_t h = −2/(h − λ(t))`. Both vector fields blow up where the solution
//! meets the driver, so the integrator is an embedded Dormand–Prince 5(4)
//! pair with step control and a swallow-radius guard: trajectories entering
//! a small disk around the driver value terminate with an error carrying the
//! blow-up time estimate.
//!
//! This integrator is deliberately independent of the closed-form slit maps
//! in [`crate::conformal`]; it is the oracle those formulas are checked
//! against.

use num_complex::Complex64;

use crate::conformal::{ConformalError, HalfPlanePoint};
use crate::driver::DriverPath;

/// Integration controls.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Largest step the controller may take. `None` leaves it to the horizon.
    pub max_step: Option<f64>,
    /// Terminate with [`ConformalError::Swallowed`] when the state comes
    /// within this distance of the driver.
    pub swallow_radius: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            max_step: None,
            swallow_radius: 1e-7,
            max_steps: 50_000_000,
        }
    }
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 5179.0 / 57600.0;
const E3: f64 = 7571.0 / 16695.0;
const E4: f64 = 393.0 / 640.0;
const E5: f64 = -92097.0 / 339200.0;
const E6: f64 = 187.0 / 2100.0;
const E7: f64 = 1.0 / 40.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

/// Integrate `dy/dt = coeff/(y − λ(t))` from `y(0) = z0` to `t_end`.
///
/// `coeff` is `+2` for the forward equation and `−2` for the backward one.
pub fn integrate_loewner<F: Fn(f64) -> f64>(
    driver: F,
    coeff: f64,
    z0: Complex64,
    t_end: f64,
    opts: &OdeOptions,
) -> Result<Complex64, ConformalError> {
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(ConformalError::InvalidArgument(format!(
            "integration time must be nonnegative, got {t_end}"
        )));
    }
    if t_end == 0.0 {
        return Ok(z0);
    }
    let f = |t: f64, y: Complex64| -> Complex64 {
        let d = y - driver(t);
        Complex64::new(coeff, 0.0) / d
    };
    let max_step = opts.max_step.unwrap_or(t_end).min(t_end);
    let h_floor = 1e-14 * t_end.max(1.0);

    let mut t = 0.0f64;
    let mut y = z0;
    let d0 = (y - driver(0.0)).norm();
    if d0 <= opts.swallow_radius {
        return Err(ConformalError::Swallowed { t_estimate: 0.0 });
    }
    let mut h = max_step.min(0.01 * d0 * d0 / coeff.abs()).max(h_floor);

    for _ in 0..opts.max_steps {
        if t >= t_end {
            return Ok(y);
        }
        if (y - driver(t)).norm() <= opts.swallow_radius {
            return Err(ConformalError::Swallowed { t_estimate: t });
        }
        h = h.min(t_end - t).min(max_step);

        let k1 = f(t, y);
        let k2 = f(t + C2 * h, y + k1 * (A21 * h));
        let k3 = f(t + C3 * h, y + k1 * (A31 * h) + k2 * (A32 * h));
        let k4 = f(t + C4 * h, y + k1 * (A41 * h) + k2 * (A42 * h) + k3 * (A43 * h));
        let k5 = f(
            t + C5 * h,
            y + k1 * (A51 * h) + k2 * (A52 * h) + k3 * (A53 * h) + k4 * (A54 * h),
        );
        let k6 = f(
            t + h,
            y + k1 * (A61 * h) + k2 * (A62 * h) + k3 * (A63 * h) + k4 * (A64 * h)
                + k5 * (A65 * h),
        );
        let y5 = y + (k1 * B1 + k3 * B3 + k4 * B4 + k5 * B5 + k6 * B6) * h;
        let k7 = f(t + h, y5);
        let y4 = y + (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * h;

        let scale = opts.abs_tol + opts.rel_tol * y.norm().max(y5.norm());
        let err = (y5 - y4).norm() / scale;

        let finite = y5.re.is_finite() && y5.im.is_finite();
        if finite && err <= 1.0 {
            t += h;
            y = y5;
            let grow = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).min(5.0)
            };
            h *= grow.clamp(1.0, 5.0);
        } else {
            let shrink = if finite && err.is_finite() {
                (0.9 * err.powf(-0.2)).max(0.2)
            } else {
                0.2
            };
            h *= shrink;
            if h < h_floor {
                // The controller cannot meet the tolerance; the trajectory
                // is collapsing onto the driver.
                return Err(ConformalError::Swallowed { t_estimate: t });
            }
        }
    }
    Err(ConformalError::Numerical(format!(
        "step budget exhausted at t = {t}"
    )))
}

fn driver_capped_opts(d: &DriverPath, opts: &OdeOptions) -> OdeOptions {
    // Sampled drivers are only piecewise smooth; keep steps at the knot
    // spacing so stage evaluations never straddle more than one kink.
    let cap = d.dt();
    OdeOptions {
        max_step: Some(opts.max_step.map_or(cap, |m| m.min(cap))),
        ..*opts
    }
}

/// Forward Loewner map `g_t(z)` for a sampled driver.
pub fn forward_ode(
    d: &DriverPath,
    z: HalfPlanePoint,
    t: f64,
    opts: &OdeOptions,
) -> Result<HalfPlanePoint, ConformalError> {
    check_horizon(d, t)?;
    let o = driver_capped_opts(d, opts);
    let g = integrate_loewner(|s| d.eval(s), 2.0, z.as_complex(), t, &o)?;
    HalfPlanePoint::from_complex(g)
}

/// Backward Loewner map `h_t(z)` for a sampled driver.
pub fn backward_ode(
    d: &DriverPath,
    z: HalfPlanePoint,
    t: f64,
    opts: &OdeOptions,
) -> Result<HalfPlanePoint, ConformalError> {
    check_horizon(d, t)?;
    if z.im() == 0.0 && (z.re() - d.eval(0.0)).abs() <= opts.swallow_radius {
        return Err(ConformalError::InvalidArgument(
            "backward evolution started at the singularity z = λ(0)".into(),
        ));
    }
    let o = driver_capped_opts(d, opts);
    let h = integrate_loewner(|s| d.eval(s), -2.0, z.as_complex(), t, &o)?;
    HalfPlanePoint::from_complex(h)
}

/// Inverse Loewner map `g_t^{-1}(w)` computed by running the backward
/// evolution with the time-reversed driver `s ↦ λ(t − s)`.
pub fn ode_inverse(
    d: &DriverPath,
    w: HalfPlanePoint,
    t: f64,
    opts: &OdeOptions,
) -> Result<HalfPlanePoint, ConformalError> {
    check_horizon(d, t)?;
    let o = driver_capped_opts(d, opts);
    let z = integrate_loewner(|s| d.eval(t - s), -2.0, w.as_complex(), t, &o)?;
    HalfPlanePoint::from_complex(z)
}

/// Inverse map for an arbitrary driver function, same reversal trick.
pub fn ode_inverse_with<F: Fn(f64) -> f64>(
    driver: F,
    w: Complex64,
    t: f64,
    opts: &OdeOptions,
) -> Result<Complex64, ConformalError> {
    integrate_loewner(|s| driver(t - s), -2.0, w, t, opts)
}

fn check_horizon(d: &DriverPath, t: f64) -> Result<(), ConformalError> {
    if !(0.0..=d.t_horizon() * (1.0 + 1e-12)).contains(&t) {
        return Err(ConformalError::InvalidArgument(format!(
            "time {t} outside the driver horizon [0, {}]",
            d.t_horizon()
        )));
    }
    Ok(())
}

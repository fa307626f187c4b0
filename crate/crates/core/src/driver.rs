//! Driving functions for Loewner evolutions.
//!
//! Everything here lives on a uniform mesh over `[0, T]`. A Brownian sample
//! provides one source of randomness per seed; drivers for different
//! diffusivities are obtained by scaling the *same* sample by `√κ`, which is
//! the coupling that lets trace differences isolate the κ-dependence.
//!
//! The square-root interpolation replaces a driver `λ` on each coarse
//! interval `[t_k, t_{k+1}]` by
//!
//! ```text
//! λⁿ(t) = (λ(t_{k+1}) − λ(t_k)) · √((t − t_k)/τ) + λ(t_k),  τ = T/n,
//! ```
//!
//! a piecewise square-root function that coincides with `λ` at every coarse
//! knot. Drivers of the form `c√t + d` are fixed points of this scheme.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DriverError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("coarse resolution {coarse} does not divide fine resolution {fine}")]
    MeshMismatch { coarse: usize, fine: usize },
}

/// How the values of a [`DriverPath`] were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriverKind {
    #[serde(rename = "raw-brownian")]
    RawBrownian,
    #[serde(rename = "sqrt-interpolated")]
    SqrtInterpolated,
    #[serde(rename = "analytic")]
    Analytic,
}

/// Provenance carried along with a driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverMeta {
    pub seed: Option<u64>,
    pub kappa: Option<f64>,
    pub kind: DriverKind,
    /// Coarse knot count for sqrt-interpolated drivers.
    pub coarse_n: Option<usize>,
}

/// One sampled Brownian path on a uniform mesh of `n` intervals over `[0, T]`.
///
/// Increments are i.i.d. `N(0, T/n)`, drawn from a ChaCha12 stream keyed by
/// `seed` through the ziggurat sampler behind `rand_distr::StandardNormal`.
/// Regenerating with the same `(seed, n, T)` reproduces the path bit-exactly.
#[derive(Debug, Clone)]
pub struct BrownianSample {
    seed: u64,
    n: usize,
    t_horizon: f64,
    increments: Vec<f64>,
    values: Vec<f64>,
}

impl BrownianSample {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn t_horizon(&self) -> f64 {
        self.t_horizon
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Path values at the mesh knots, `values[0] = 0`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Sample a Brownian path; deterministic in `seed`.
pub fn sample_brownian(seed: u64, n: usize, t_horizon: f64) -> Result<BrownianSample, DriverError> {
    if n == 0 {
        return Err(DriverError::InvalidArgument(
            "resolution n must be at least 1".into(),
        ));
    }
    if !(t_horizon > 0.0) || !t_horizon.is_finite() {
        return Err(DriverError::InvalidArgument(format!(
            "time horizon must be positive and finite, got {t_horizon}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let scale = (t_horizon / n as f64).sqrt();
    let increments: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
        .collect();
    let mut values = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    values.push(0.0);
    for dx in &increments {
        acc += dx;
        values.push(acc);
    }
    Ok(BrownianSample {
        seed,
        n,
        t_horizon,
        increments,
        values,
    })
}

/// A real-valued driver sampled on a uniform mesh `t_i = i·T/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverPath {
    n: usize,
    t_horizon: f64,
    values: Vec<f64>,
    meta: DriverMeta,
}

impl DriverPath {
    /// Sample an arbitrary function on a uniform mesh (kind `Analytic`).
    pub fn from_fn<F: Fn(f64) -> f64>(
        f: F,
        n: usize,
        t_horizon: f64,
    ) -> Result<Self, DriverError> {
        if n == 0 {
            return Err(DriverError::InvalidArgument("n must be at least 1".into()));
        }
        if !(t_horizon > 0.0) {
            return Err(DriverError::InvalidArgument(
                "time horizon must be positive".into(),
            ));
        }
        let values = (0..=n).map(|i| f(i as f64 * t_horizon / n as f64)).collect();
        Ok(DriverPath {
            n,
            t_horizon,
            values,
            meta: DriverMeta {
                seed: None,
                kappa: None,
                kind: DriverKind::Analytic,
                coarse_n: None,
            },
        })
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn t_horizon(&self) -> f64 {
        self.t_horizon
    }

    pub fn dt(&self) -> f64 {
        self.t_horizon / self.n as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.t_horizon / self.n as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn meta(&self) -> &DriverMeta {
        &self.meta
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Driver value at arbitrary `t`, clamped to `[0, T]`.
    ///
    /// Sqrt-interpolated drivers are evaluated with the exact square-root
    /// formula anchored at their coarse knots; other kinds interpolate
    /// linearly between fine knots. Values at mesh knots are exact.
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.t_horizon);
        match (self.meta.kind, self.meta.coarse_n) {
            (DriverKind::SqrtInterpolated, Some(nc)) => {
                let tau = self.t_horizon / nc as f64;
                let k = ((t / tau) as usize).min(nc - 1);
                let stride = self.n / nc;
                let anchor = self.values[k * stride];
                let inc = self.values[(k + 1) * stride] - anchor;
                let frac = ((t - k as f64 * tau) / tau).clamp(0.0, 1.0);
                anchor + inc * frac.sqrt()
            }
            _ => {
                let h = self.dt();
                let i = ((t / h) as usize).min(self.n - 1);
                let frac = (t - self.time(i)) / h;
                self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
            }
        }
    }

    /// Serialize to CSV with header `t,value`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", self.time(i), v)?;
        }
        Ok(())
    }

    pub fn manifest(&self) -> DriverManifest {
        DriverManifest {
            seed: self.meta.seed,
            kappa: self.meta.kappa,
            n: self.n,
            t_horizon: self.t_horizon,
            kind: self.meta.kind,
        }
    }
}

/// JSON manifest for a serialized driver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriverManifest {
    pub seed: Option<u64>,
    pub kappa: Option<f64>,
    pub n: usize,
    #[serde(rename = "T")]
    pub t_horizon: f64,
    pub kind: DriverKind,
}

/// Driver `√κ · B` on the sample's mesh. One seed, many κ.
pub fn scale_driver(b: &BrownianSample, kappa: f64) -> Result<DriverPath, DriverError> {
    if !(kappa >= 0.0) {
        return Err(DriverError::InvalidArgument(format!(
            "kappa must be nonnegative, got {kappa}"
        )));
    }
    let s = kappa.sqrt();
    Ok(DriverPath {
        n: b.n,
        t_horizon: b.t_horizon,
        values: b.values.iter().map(|v| s * v).collect(),
        meta: DriverMeta {
            seed: Some(b.seed),
            kappa: Some(kappa),
            kind: DriverKind::RawBrownian,
            coarse_n: None,
        },
    })
}

/// Piecewise square-root interpolation of `d` with `n_coarse` coarse knots,
/// resampled on `d`'s fine mesh.
///
/// The coarse knots must lie on the fine mesh, so `n_coarse` has to divide
/// the fine resolution. The output agrees with `d` at every coarse knot
/// bit-exactly.
pub fn sqrt_interpolate(d: &DriverPath, n_coarse: usize) -> Result<DriverPath, DriverError> {
    if n_coarse == 0 {
        return Err(DriverError::InvalidArgument(
            "coarse resolution must be at least 1".into(),
        ));
    }
    if !d.n.is_multiple_of(n_coarse) {
        return Err(DriverError::MeshMismatch {
            coarse: n_coarse,
            fine: d.n,
        });
    }
    let stride = d.n / n_coarse;
    let mut values = Vec::with_capacity(d.n + 1);
    for k in 0..n_coarse {
        let anchor = d.values[k * stride];
        let inc = d.values[(k + 1) * stride] - anchor;
        for j in 0..stride {
            let frac = j as f64 / stride as f64;
            values.push(anchor + inc * frac.sqrt());
        }
    }
    values.push(d.values[d.n]);
    Ok(DriverPath {
        n: d.n,
        t_horizon: d.t_horizon,
        values,
        meta: DriverMeta {
            seed: d.meta.seed,
            kappa: d.meta.kappa,
            kind: DriverKind::SqrtInterpolated,
            coarse_n: Some(n_coarse),
        },
    })
}

/// Modulus of continuity `sup { |λ(t) − λ(s)| : |t − s| ≤ δ }` over mesh pairs.
///
/// Computed exactly on the discrete mesh with a sliding window in O(n).
pub fn osc(d: &DriverPath, delta: f64) -> Result<f64, DriverError> {
    if !(delta > 0.0) {
        return Err(DriverError::InvalidArgument(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if delta > d.t_horizon * (1.0 + 1e-12) {
        return Err(DriverError::InvalidArgument(format!(
            "delta {delta} exceeds the horizon {}",
            d.t_horizon
        )));
    }
    // Window radius in mesh steps; tiny relative slack so that exact
    // multiples of dt are not truncated by rounding.
    let w = ((delta / d.dt()) * (1.0 + 1e-12)).floor() as usize;
    if w == 0 {
        return Ok(0.0);
    }
    let v = &d.values;
    let mut max_dq: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    let mut min_dq: std::collections::VecDeque<usize> = std::collections::VecDeque::new();
    let mut best = 0.0f64;
    for i in 0..v.len() {
        while let Some(&j) = max_dq.back() {
            if v[j] <= v[i] {
                max_dq.pop_back();
            } else {
                break;
            }
        }
        max_dq.push_back(i);
        while let Some(&j) = min_dq.back() {
            if v[j] >= v[i] {
                min_dq.pop_back();
            } else {
                break;
            }
        }
        min_dq.push_back(i);
        if i >= w {
            while *max_dq.front().unwrap() + w < i {
                max_dq.pop_front();
            }
            while *min_dq.front().unwrap() + w < i {
                min_dq.pop_front();
            }
            best = best.max(v[*max_dq.front().unwrap()] - v[*min_dq.front().unwrap()]);
        }
    }
    Ok(best)
}

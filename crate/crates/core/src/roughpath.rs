//! Level-2 rough-path machinery for the backward Loewner equation.
//!
//! The driving signal is the plane path `X_t = (t, W_t)` with `W = √κ·B`.
//! Its canonical geometric level-2 lift stores, per interval `[s, t]`,
//!
//! ```text
//! X¹ = (Δt, ΔW),    X²[i][j] = ∫_s^t (X^i_v − X^i_s) dX^j_v,
//! ```
//!
//! built at the finest mesh from left-point sums with the shuffle correction
//! `X²[1][0] = Δt·ΔW − X²[0][1]`, then aggregated through a dyadic pyramid
//! with Chen's identity `X_{s,u} = X_{s,t} ⊗ X_{t,u}`. The symmetric part of
//! `X²` therefore equals `½ X¹ ⊗ X¹` on every interval, which is the
//! geometric (shuffle) identity.
//!
//! Norms follow the projective convention: the ℓ¹ norm of the coordinates at
//! each level. The `d_p` metric takes, per level `i`, the partition sup of
//! `Σ ‖X^i − Y^i‖^{p/i}` raised to `i/p`, maximized over levels; partitions
//! range over the stored mesh, so the computed value is the exact discrete
//! metric there and a lower bound for the continuum one.
//!
//! The backward equation `dZ = −2/Z dt − dW` has a constant noise field, so
//! its Itô and Stratonovich solutions coincide and the level-2 (Davie-type)
//! step
//!
//! ```text
//! Z ← Z − (2/Z)Δt − ΔW − (4/Z³)·X²[0][0] − (2/Z²)·X²[1][0]
//! ```
//!
//! solves the rough differential equation started away from the origin.

// Index loops over the 2x2 level-2 blocks read better than iterator
// chains here.
#![allow(clippy::needless_range_loop)]

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::conformal::HalfPlanePoint;
use crate::driver::{scale_driver, BrownianSample, DriverPath};

#[derive(Debug, Error)]
pub enum RoughPathError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("mesh is not uniform dyadic (len {0})")]
    NonDyadicMesh(usize),
    #[error("operands live on different grids or exponents")]
    Mismatch,
    #[error("trajectory crossed the real axis at t = {t}")]
    CrossedRealAxis { t: f64 },
    #[error("trajectory reached the origin at t = {t}")]
    Singular { t: f64 },
}

pub const DEFAULT_P: f64 = 2.5;

/// Level-1 increment and level-2 iterated-integral block of one interval.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Level2Block {
    pub inc: [f64; 2],
    pub area: [[f64; 2]; 2],
}

impl Level2Block {
    /// Chen product of adjacent intervals.
    pub fn chen(&self, right: &Level2Block) -> Level2Block {
        let mut area = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                area[i][j] = self.area[i][j] + right.area[i][j] + self.inc[i] * right.inc[j];
            }
        }
        Level2Block {
            inc: [self.inc[0] + right.inc[0], self.inc[1] + right.inc[1]],
            area,
        }
    }

    /// ℓ¹ norm of the level-1 part.
    pub fn norm_level1(&self) -> f64 {
        self.inc[0].abs() + self.inc[1].abs()
    }

    /// ℓ¹ norm of the level-2 part.
    pub fn norm_level2(&self) -> f64 {
        self.area.iter().flatten().map(|a| a.abs()).sum()
    }

    /// Largest entry of `sym(X²) − ½ X¹ ⊗ X¹`.
    pub fn geometric_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                let sym = 0.5 * (self.area[i][j] + self.area[j][i]);
                worst = worst.max((sym - 0.5 * self.inc[i] * self.inc[j]).abs());
            }
        }
        worst
    }

    fn sub_norms(&self, other: &Level2Block) -> (f64, f64) {
        let l1 = (self.inc[0] - other.inc[0]).abs() + (self.inc[1] - other.inc[1]).abs();
        let mut l2 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                l2 += (self.area[i][j] - other.area[i][j]).abs();
            }
        }
        (l1, l2)
    }
}

/// The control family `ω(s,t) = K·(t − s)`; superadditivity holds with
/// equality and `ω(t,t) = 0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ControlFn {
    pub k: f64,
}

impl ControlFn {
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        self.k * (t - s).max(0.0)
    }
}

/// Level-2 lift of `(t, W_t)` over a dyadic grid, stored as a pyramid:
/// `levels[0]` holds the finest intervals, each next level merges pairs.
#[derive(Debug, Clone)]
pub struct Level2RoughPath {
    t_horizon: f64,
    kappa: Option<f64>,
    p: f64,
    levels: Vec<Vec<Level2Block>>,
}

impl Level2RoughPath {
    pub fn t_horizon(&self) -> f64 {
        self.t_horizon
    }

    pub fn kappa(&self) -> Option<f64> {
        self.kappa
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Number of finest-grid intervals.
    pub fn grid_len(&self) -> usize {
        self.levels[0].len()
    }

    /// Number of pyramid levels (finest is level 0).
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn blocks_at(&self, level: usize) -> &[Level2Block] {
        &self.levels[level]
    }

    /// Interval length at a pyramid level.
    pub fn dt_at(&self, level: usize) -> f64 {
        self.t_horizon / self.levels[level].len() as f64
    }

    /// The full-interval block `X_{0,T}`.
    pub fn full(&self) -> Level2Block {
        *self.levels.last().unwrap().first().unwrap()
    }

    /// Prefix blocks `X_{0, t_i}` on the finest grid, for O(1) interval
    /// queries via Chen subtraction.
    fn prefixes(&self) -> Vec<Level2Block> {
        let mut out = Vec::with_capacity(self.grid_len() + 1);
        out.push(Level2Block::default());
        let mut acc = Level2Block::default();
        for b in &self.levels[0] {
            acc = acc.chen(b);
            out.push(acc);
        }
        out
    }
}

fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// Canonical geometric level-2 lift of a sampled driver path interpreted as
/// the second component of `(t, W_t)`.
pub fn lift_level2(d: &DriverPath, p: f64) -> Result<Level2RoughPath, RoughPathError> {
    if !(p > 2.0 && p <= 3.0) {
        return Err(RoughPathError::InvalidArgument(format!(
            "p must lie in (2, 3], got {p}"
        )));
    }
    let n = d.resolution();
    if !is_power_of_two(n) {
        return Err(RoughPathError::NonDyadicMesh(n));
    }
    let dt = d.dt();
    let v = d.values();
    let finest: Vec<Level2Block> = (0..n)
        .map(|i| {
            let dw = v[i + 1] - v[i];
            // Left-point cross integral over a single step vanishes; the
            // shuffle correction puts the whole area into ∫ ΔW dt.
            Level2Block {
                inc: [dt, dw],
                area: [[0.5 * dt * dt, 0.0], [dt * dw, 0.5 * dw * dw]],
            }
        })
        .collect();
    let mut levels = vec![finest];
    while levels.last().unwrap().len() > 1 {
        let prev = levels.last().unwrap();
        let next: Vec<Level2Block> = prev
            .chunks_exact(2)
            .map(|pair| pair[0].chen(&pair[1]))
            .collect();
        levels.push(next);
    }
    Ok(Level2RoughPath {
        t_horizon: d.t_horizon(),
        kappa: d.meta().kappa,
        p,
        levels,
    })
}

/// Exact discrete p-variation over all sub-partitions of the mesh,
/// `sup_D (Σ d(x_{t_i}, x_{t_{i+1}})^p)^{1/p}`, by O(m²) dynamic
/// programming. Equals the total variation for p = 1.
pub fn p_variation<T, F>(path: &[T], p: f64, dist: F) -> Result<f64, RoughPathError>
where
    F: Fn(&T, &T) -> f64,
{
    if p < 1.0 {
        return Err(RoughPathError::InvalidArgument(format!(
            "p must be at least 1, got {p}"
        )));
    }
    if path.len() < 2 {
        return Err(RoughPathError::InvalidArgument(
            "path needs at least two points".into(),
        ));
    }
    let m = path.len();
    let mut best = vec![0.0f64; m];
    for j in 1..m {
        let mut b = 0.0f64;
        for i in 0..j {
            let cand = best[i] + dist(&path[i], &path[j]).powf(p);
            if cand > b {
                b = cand;
            }
        }
        best[j] = b;
    }
    Ok(best[m - 1].powf(1.0 / p))
}

/// The metric `d_p(X, Y) = max_i sup_D (Σ ‖X^i − Y^i‖^{p/i})^{i/p}` over
/// partitions of the stored grid, levels i = 1, 2.
pub fn dp_distance(x: &Level2RoughPath, y: &Level2RoughPath) -> Result<f64, RoughPathError> {
    if x.grid_len() != y.grid_len() || x.p != y.p || x.t_horizon != y.t_horizon {
        return Err(RoughPathError::Mismatch);
    }
    let px = x.prefixes();
    let py = y.prefixes();
    let m = x.grid_len() + 1;
    let p = x.p;
    let mut worst = 0.0f64;
    for level in 1..=2usize {
        let exponent = p / level as f64;
        // weight(i, j) = ‖X^level_{t_i,t_j} − Y^level_{t_i,t_j}‖^{p/level}
        let weight = |i: usize, j: usize| -> f64 {
            let bx = interval_block(&px, i, j);
            let by = interval_block(&py, i, j);
            let (l1, l2) = bx.sub_norms(&by);
            let nrm = if level == 1 { l1 } else { l2 };
            nrm.powf(exponent)
        };
        let mut best = vec![0.0f64; m];
        for j in 1..m {
            let mut b = 0.0f64;
            for i in 0..j {
                let cand = best[i] + weight(i, j);
                if cand > b {
                    b = cand;
                }
            }
            best[j] = b;
        }
        worst = worst.max(best[m - 1].powf(1.0 / exponent));
    }
    Ok(worst)
}

/// Block of `[t_i, t_j]` from prefix blocks: Chen subtraction
/// `X_{i,j} = X_{0,i}^{-1} ⊗ X_{0,j}` at level 2.
fn interval_block(prefix: &[Level2Block], i: usize, j: usize) -> Level2Block {
    let a = &prefix[i];
    let b = &prefix[j];
    let inc = [b.inc[0] - a.inc[0], b.inc[1] - a.inc[1]];
    let mut area = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            area[r][c] = b.area[r][c] - a.area[r][c] - a.inc[r] * inc[c];
        }
    }
    Level2Block { inc, area }
}

/// One row of the lift-continuity table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LiftContinuityRow {
    pub kappa_n: f64,
    /// `a_n = (√κ − √κ_n)/√κ`, the convergence-rate sequence.
    pub a_n: f64,
    /// `max ‖X(κ_n)¹ − X(κ)¹‖ / (|a_n| ω^{1/p})` over all pyramid intervals.
    pub max_ratio_level1: f64,
    /// Same at level 2 with exponent 2/p.
    pub max_ratio_level2: f64,
    pub dp_dist: f64,
}

/// Per-interval verification that the lifted paths converge in p-variation
/// with control `ω(s,t) = √κ(t−s)` and rate `a_n`.
pub fn kappa_lift_continuity(
    b: &BrownianSample,
    kappa: f64,
    kappa_seq: &[f64],
    p: f64,
) -> Result<Vec<LiftContinuityRow>, RoughPathError> {
    if !(kappa > 0.0) {
        return Err(RoughPathError::InvalidArgument(
            "kappa must be positive".into(),
        ));
    }
    let base = lift_scaled(b, kappa, p)?;
    let control = ControlFn { k: kappa.sqrt() };
    let mut rows = Vec::with_capacity(kappa_seq.len());
    for kappa_n in kappa_seq {
        if !(*kappa_n > 0.0) {
            return Err(RoughPathError::InvalidArgument(
                "kappa_n must be positive".into(),
            ));
        }
        let lift_n = lift_scaled(b, *kappa_n, p)?;
        let a_n = (kappa.sqrt() - kappa_n.sqrt()) / kappa.sqrt();
        let denom = a_n.abs();
        let mut r1 = 0.0f64;
        let mut r2 = 0.0f64;
        for level in 0..base.depth() {
            let dt = base.dt_at(level);
            let om = control.eval(0.0, dt);
            let w1 = denom * om.powf(1.0 / p);
            let w2 = denom * om.powf(2.0 / p);
            for (bx, by) in base.levels[level].iter().zip(&lift_n.levels[level]) {
                let (l1, l2) = bx.sub_norms(by);
                if w1 > 0.0 {
                    r1 = r1.max(l1 / w1);
                }
                if w2 > 0.0 {
                    r2 = r2.max(l2 / w2);
                }
            }
        }
        let dp = dp_distance(&base, &lift_n)?;
        rows.push(LiftContinuityRow {
            kappa_n: *kappa_n,
            a_n,
            max_ratio_level1: r1,
            max_ratio_level2: r2,
            dp_dist: dp,
        });
    }
    Ok(rows)
}

fn lift_scaled(b: &BrownianSample, kappa: f64, p: f64) -> Result<Level2RoughPath, RoughPathError> {
    let d = scale_driver(b, kappa)
        .map_err(|e| RoughPathError::InvalidArgument(e.to_string()))?;
    lift_level2(&d, p)
}

/// Bound on the Lip(k) data of the field `−2/z` away from the origin:
/// the j-th derivative is `±2·j!/z^{j+1}`, so on `|z| ≥ δ` every grade is
/// bounded by `M = 2·max_{j ≤ k} j!/δ^{j+1}`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LipGammaBound {
    pub delta: f64,
    pub order: usize,
    pub bound: f64,
}

pub fn lip_gamma_bound(delta: f64, order: usize) -> Result<LipGammaBound, RoughPathError> {
    if !(delta > 0.0) {
        return Err(RoughPathError::InvalidArgument(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if !(1..=4).contains(&order) {
        return Err(RoughPathError::InvalidArgument(format!(
            "supported Lip grades are 1..=4, got {order}"
        )));
    }
    let mut fact = 1.0f64;
    let mut worst = 0.0f64;
    for j in 0..=order {
        if j > 0 {
            fact *= j as f64;
        }
        worst = worst.max(fact / delta.powi(j as i32 + 1));
    }
    Ok(LipGammaBound {
        delta,
        order,
        bound: 2.0 * worst,
    })
}

/// Discrete solution of the backward rough differential equation.
#[derive(Debug, Clone)]
pub struct RdeTrajectory {
    times: Vec<f64>,
    points: Vec<Complex64>,
}

impl RdeTrajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn last(&self) -> Complex64 {
        *self.points.last().unwrap()
    }

    /// Sup distance at shared times; meshes must be nested.
    pub fn sup_distance(&self, other: &RdeTrajectory) -> Result<f64, RoughPathError> {
        let (coarse, fine) = if self.times.len() <= other.times.len() {
            (self, other)
        } else {
            (other, self)
        };
        if (fine.times.len() - 1) % (coarse.times.len() - 1) != 0 {
            return Err(RoughPathError::Mismatch);
        }
        let stride = (fine.times.len() - 1) / (coarse.times.len() - 1);
        let mut sup = 0.0f64;
        for (i, p) in coarse.points.iter().enumerate() {
            sup = sup.max((p - fine.points[i * stride]).norm());
        }
        Ok(sup)
    }

    /// Discrete p-variation of the difference path, on shared times.
    pub fn pvar_distance(&self, other: &RdeTrajectory, p: f64) -> Result<f64, RoughPathError> {
        let (coarse, fine) = if self.times.len() <= other.times.len() {
            (self, other)
        } else {
            (other, self)
        };
        if (fine.times.len() - 1) % (coarse.times.len() - 1) != 0 {
            return Err(RoughPathError::Mismatch);
        }
        let stride = (fine.times.len() - 1) / (coarse.times.len() - 1);
        let diff: Vec<Complex64> = coarse
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| p - fine.points[i * stride])
            .collect();
        p_variation(&diff, p, |a, b| (a - b).norm())
    }

    /// Whether the imaginary part never decreases along the trajectory.
    pub fn im_nondecreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].im >= w[0].im - 1e-14)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,re,im")?;
        for (t, p) in self.times.iter().zip(&self.points) {
            writeln!(w, "{},{},{}", t, p.re, p.im)?;
        }
        Ok(())
    }
}

fn davie_step(z: Complex64, blk: &Level2Block) -> Complex64 {
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    z - inv * (2.0 * blk.inc[0]) - blk.inc[1] - inv2 * inv * (4.0 * blk.area[0][0])
        - inv2 * (2.0 * blk.area[1][0])
}

/// Level-2 (Davie-type) increment scheme for `dZ = −2/Z dt − dW` along the
/// lifted path, run at `steps` uniform increments of the grid.
///
/// If a step would cross the real axis the scheme descends the dyadic
/// pyramid for that window (step halving); reaching the finest level without
/// a valid step is an error. The vector field blows up at the origin, so the
/// start must satisfy `|z0| > 0`.
pub fn solve_rde_backward(
    x: &Level2RoughPath,
    z0: HalfPlanePoint,
    steps: usize,
) -> Result<RdeTrajectory, RoughPathError> {
    let n = x.grid_len();
    if steps == 0 || steps > n || !n.is_multiple_of(steps) || !is_power_of_two(n / steps) {
        return Err(RoughPathError::InvalidArgument(format!(
            "steps {steps} must dyadically divide the grid ({n} intervals)"
        )));
    }
    let z0c = z0.as_complex();
    if z0c.norm() == 0.0 {
        return Err(RoughPathError::InvalidArgument(
            "start must satisfy |z0| > 0".into(),
        ));
    }
    let level = (n / steps).trailing_zeros() as usize;
    let dt = x.t_horizon / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut points = Vec::with_capacity(steps + 1);
    times.push(0.0);
    points.push(z0c);
    let mut z = z0c;
    for k in 0..steps {
        z = advance(x, level, k, z, (k as f64) * dt)?;
        times.push((k + 1) as f64 * dt);
        points.push(z);
    }
    Ok(RdeTrajectory { times, points })
}

fn advance(
    x: &Level2RoughPath,
    level: usize,
    idx: usize,
    z: Complex64,
    t: f64,
) -> Result<Complex64, RoughPathError> {
    if z.norm() < 1e-12 {
        return Err(RoughPathError::Singular { t });
    }
    let blk = &x.levels[level][idx];
    let next = davie_step(z, blk);
    let ok = next.re.is_finite() && next.im.is_finite() && next.im >= 0.0;
    if ok {
        return Ok(next);
    }
    if level == 0 {
        return Err(RoughPathError::CrossedRealAxis { t });
    }
    let half = x.dt_at(level) / 2.0;
    let mid = advance(x, level - 1, 2 * idx, z, t)?;
    advance(x, level - 1, 2 * idx + 1, mid, t + half)
}

/// One row of the RDE κ-continuity table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RdeContinuityRow {
    pub kappa_n: f64,
    pub sup_dist: f64,
    pub pvar_dist: f64,
}

pub fn rde_kappa_continuity(
    b: &BrownianSample,
    kappa: f64,
    kappa_seq: &[f64],
    z0: HalfPlanePoint,
    p: f64,
    steps: usize,
) -> Result<Vec<RdeContinuityRow>, RoughPathError> {
    let base = solve_rde_backward(&lift_scaled(b, kappa, p)?, z0, steps)?;
    kappa_seq
        .iter()
        .map(|kappa_n| {
            let traj = solve_rde_backward(&lift_scaled(b, *kappa_n, p)?, z0, steps)?;
            Ok(RdeContinuityRow {
                kappa_n: *kappa_n,
                sup_dist: base.sup_distance(&traj)?,
                pvar_dist: base.pvar_distance(&traj, p)?,
            })
        })
        .collect()
}

/// One row of the starting-point continuity table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RdeZ0Row {
    pub offset: f64,
    pub sup_dist: f64,
    pub pvar_dist: f64,
}

/// Perturb the start by `offset·i` and compare solutions at fixed κ.
pub fn rde_z0_continuity(
    b: &BrownianSample,
    kappa: f64,
    z0: HalfPlanePoint,
    offsets: &[f64],
    p: f64,
    steps: usize,
) -> Result<Vec<RdeZ0Row>, RoughPathError> {
    let lift = lift_scaled(b, kappa, p)?;
    let base = solve_rde_backward(&lift, z0, steps)?;
    offsets
        .iter()
        .map(|off| {
            let start = HalfPlanePoint::new(z0.re(), z0.im() + off)
                .map_err(|e| RoughPathError::InvalidArgument(e.to_string()))?;
            let traj = solve_rde_backward(&lift, start, steps)?;
            Ok(RdeZ0Row {
                offset: *off,
                sup_dist: base.sup_distance(&traj)?,
                pvar_dist: base.pvar_distance(&traj, p)?,
            })
        })
        .collect()
}

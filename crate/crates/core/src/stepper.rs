//! Implicit-midpoint time stepping for `ü + B(t)u̇ + A(t)u = f`.
//!
//! The second-order problem is written for `(u, v = u̇)` and advanced with the
//! implicit midpoint rule; forms and forcing are evaluated at step midpoints
//! only. The horizon is cut at the certified splitting length and at every
//! form breakpoint, so no step straddles a discontinuity.

use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::forms::{self, DiscreteFormFamily, FormBounds, GramPair};

/// Right-hand side `t ↦ f(t)` as coefficients of a functional on the basis.
pub type Forcing = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Damped,
    Wave,
}

#[derive(Clone)]
pub struct Scenario {
    pub a: DiscreteFormFamily,
    /// Damping family; ignored in wave mode.
    pub b: Option<DiscreteFormFamily>,
    pub grams: GramPair,
    pub u0: DVector<f64>,
    pub u1: DVector<f64>,
    pub f: Forcing,
    pub horizon: f64,
    pub dt: f64,
    pub mode: Mode,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("dim", &self.dim())
            .field("horizon", &self.horizon)
            .field("dt", &self.dt)
            .field("mode", &self.mode)
            .finish()
    }
}

impl Scenario {
    pub fn dim(&self) -> usize {
        self.grams.dim()
    }

    /// Zero forcing of the right dimension.
    pub fn zero_forcing(dim: usize) -> Forcing {
        Arc::new(move |_| DVector::zeros(dim))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let check = |found: usize, context: &'static str| {
            if found != n {
                Err(Error::DimensionMismatch { expected: n, found, context })
            } else {
                Ok(())
            }
        };
        check(self.a.dim(), "stiffness family")?;
        if let Some(b) = &self.b {
            check(b.dim(), "damping family")?;
        }
        if self.mode == Mode::Damped && self.b.is_none() {
            return Err(Error::InvalidArgument("damped mode needs a damping family".into()));
        }
        check(self.u0.len(), "initial value")?;
        check(self.u1.len(), "initial velocity")?;
        check((self.f)(0.0).len(), "forcing")?;
        if !(self.horizon > 0.0) || !(self.dt > 0.0) || self.dt > self.horizon * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < dt <= T, got dt = {}, T = {}",
                self.dt, self.horizon
            )));
        }
        if (self.a.horizon() - self.horizon).abs() > 1e-12 * self.horizon {
            return Err(Error::InvalidArgument("family horizon differs from scenario horizon".into()));
        }
        Ok(())
    }

    fn damping_at(&self, t: f64) -> Result<DMatrix<f64>> {
        match (&self.b, self.mode) {
            (Some(b), Mode::Damped) => b.at(t),
            _ => Ok(DMatrix::zeros(self.dim(), self.dim())),
        }
    }

    fn hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.mode.hash(&mut h);
        self.dim().hash(&mut h);
        for x in [self.horizon, self.dt] {
            x.to_bits().hash(&mut h);
        }
        let f0 = (self.f)(0.0);
        let ft = (self.f)(self.horizon);
        for v in [&self.u0, &self.u1, &f0, &ft] {
            for x in v.iter() {
                x.to_bits().hash(&mut h);
            }
        }
        for fam in std::iter::once(&self.a).chain(self.b.iter()) {
            if let Ok(m) = fam.at(0.0) {
                for x in m.iter() {
                    x.to_bits().hash(&mut h);
                }
            }
        }
        h.finish()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryMeta {
    pub scenario_hash: u64,
    pub solver: &'static str,
    pub dt: f64,
    /// Exponential shift that was applied and undone.
    pub shift: f64,
    /// Restart points `0 = s₀ < … < s_k = T`.
    pub splits: Vec<f64>,
}

/// Discrete solution on a piecewise-uniform grid.
///
/// `uddot` holds coefficients `M_H⁻¹(f − B u̇ − A u)`, i.e. the
/// H-Riesz representative of the equation residual at each node.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub u: Vec<DVector<f64>>,
    pub udot: Vec<DVector<f64>>,
    pub uddot: Vec<DVector<f64>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Linear interpolation of `u` and `u̇` at `t`.
    pub fn sample(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let n = self.times.len();
        let k = match self.times.iter().position(|&s| s > t) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => n - 2,
        };
        let k = k.min(n.saturating_sub(2));
        if n < 2 {
            return (self.u[0].clone(), self.udot[0].clone());
        }
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let s = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        (
            &self.u[k] * (1.0 - s) + &self.u[k + 1] * s,
            &self.udot[k] * (1.0 - s) + &self.udot[k + 1] * s,
        )
    }
}

/// How the exponential shift `u = e^{wt}ũ` is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShiftPolicy {
    /// Smallest certified shift on the search grid (zero for coercive families).
    Auto,
    Off,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOptions {
    pub use_splits: bool,
    pub shift: ShiftPolicy,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self { use_splits: true, shift: ShiftPolicy::Auto }
    }
}

/// `min{α²/M², α/(√2 M)}`.
pub fn splitting_length(bounds: &FormBounds) -> f64 {
    let (a, m) = (bounds.alpha, bounds.m);
    (a * a / (m * m)).min(a / (std::f64::consts::SQRT_2 * m))
}

/// `ceil(T / (0.9 T₀))` equal pieces of `[0, T]`, merged with the breakpoints
/// carried by `bounds`.
pub fn horizon_splits(bounds: &FormBounds, horizon: f64) -> Vec<f64> {
    let t0 = splitting_length(bounds);
    let n = ((horizon / (0.9 * t0)).ceil() as usize).max(1);
    let mut cuts: Vec<f64> = (0..=n).map(|k| horizon * k as f64 / n as f64).collect();
    cuts[n] = horizon;
    match &bounds.breakpoints {
        Some(bp) => forms::merge_cuts(&cuts, bp),
        None => cuts,
    }
}

fn require(f: &DiscreteFormFamily, what: &'static str) -> Result<FormBounds> {
    f.bounds.clone().ok_or(Error::NotCertified(what))
}

/// Families of the shifted problem with their bounds.
struct Prepared {
    w: f64,
    a: DiscreteFormFamily,
    b: Option<DiscreteFormFamily>,
    bounds: FormBounds,
}

fn prepare(sc: &Scenario, policy: ShiftPolicy) -> Result<Prepared> {
    let ba = require(&sc.a, "stiffness family has no bounds")?;
    let zero_b = || {
        DiscreteFormFamily::constant(DMatrix::zeros(sc.dim(), sc.dim()), sc.horizon)
    };
    let b_orig = match sc.mode {
        Mode::Damped => Some(sc.b.clone().expect("validated")),
        Mode::Wave => None,
    };
    let bb = match &b_orig {
        Some(b) => Some(require(b, "damping family has no bounds")?),
        None => None,
    };
    let combined = |a: &FormBounds, b: &Option<FormBounds>| match b {
        Some(b) => a.combine(b),
        None => a.clone(),
    };
    let explicit = |w: f64| -> Result<Prepared> {
        let b = b_orig.clone().unwrap_or_else(zero_b);
        let a_w = sc.a.plus_family(&b, w)?.plus_matrix(&sc.grams.mass_h, w * w);
        let b_w = b.plus_matrix(&sc.grams.mass_h, 2.0 * w);
        let samples = forms::merge_cuts(&sc.a.certificate_samples(), &b.certificate_samples());
        let mut bounds = forms::estimate_bounds(&a_w, &sc.grams, &samples)?;
        if sc.mode == Mode::Damped || w > 0.0 {
            bounds = bounds.combine(&forms::estimate_bounds(&b_w, &sc.grams, &samples)?);
        }
        Ok(Prepared { w, a: a_w, b: Some(b_w), bounds: with_family_breakpoints(bounds, sc) })
    };
    match policy {
        ShiftPolicy::Off => Ok(Prepared {
            w: 0.0,
            a: sc.a.clone(),
            b: b_orig.clone(),
            bounds: with_family_breakpoints(combined(&ba, &bb), sc),
        }),
        ShiftPolicy::Fixed(w) => {
            if !(w >= 0.0) {
                return Err(Error::InvalidArgument(format!("shift must be nonnegative, got {w}")));
            }
            explicit(w)
        }
        ShiftPolicy::Auto => match sc.mode {
            Mode::Damped => {
                let b = b_orig.clone().expect("validated");
                let s = forms::coercivity_shift(&sc.a, &b, &sc.grams)?;
                if s.w == 0.0 {
                    return Ok(Prepared {
                        w: 0.0,
                        a: sc.a.clone(),
                        b: Some(b),
                        bounds: with_family_breakpoints(combined(&ba, &bb), sc),
                    });
                }
                let bounds = require(&s.a, "shifted stiffness")?.combine(&require(&s.b, "shifted damping")?);
                Ok(Prepared { w: s.w, a: s.a, b: Some(s.b), bounds: with_family_breakpoints(bounds, sc) })
            }
            Mode::Wave => {
                let (w, a_w) = forms::coercivity_shift_undamped(&sc.a, &sc.grams)?;
                let bounds = require(&a_w, "shifted stiffness")?;
                let b = (w > 0.0).then(|| zero_b().plus_matrix(&sc.grams.mass_h, 2.0 * w));
                Ok(Prepared { w, a: a_w, b, bounds: with_family_breakpoints(bounds, sc) })
            }
        },
    }
}

fn with_family_breakpoints(mut bounds: FormBounds, sc: &Scenario) -> FormBounds {
    let mut bp = sc.a.breakpoints();
    if let Some(b) = &sc.b {
        bp = forms::merge_cuts(&bp, &b.breakpoints());
    }
    bounds.breakpoints = Some(match bounds.breakpoints {
        Some(x) => forms::merge_cuts(&x, &bp),
        None => bp,
    });
    bounds
}

/// Damped problem `ü + B u̇ + A u = f`.
pub fn solve_damped(sc: &Scenario, opts: StepOptions) -> Result<Trajectory> {
    sc.validate()?;
    if sc.mode != Mode::Damped {
        return Err(Error::InvalidArgument("solve_damped needs a damped scenario".into()));
    }
    integrate(sc, opts, "implicit-midpoint/damped")
}

/// Undamped problem `ü + A u = f` with symmetric `A`.
pub fn solve_wave(sc: &Scenario, opts: StepOptions) -> Result<Trajectory> {
    sc.validate()?;
    if sc.mode != Mode::Wave {
        return Err(Error::InvalidArgument("solve_wave needs a wave scenario".into()));
    }
    if !sc.a.is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    integrate(sc, opts, "implicit-midpoint/wave")
}

/// Piecewise-uniform grid: each cut interval gets `round(len/dt)` steps.
fn build_grid(cuts: &[f64], dt: f64) -> Vec<f64> {
    let mut times = vec![cuts[0]];
    for w in cuts.windows(2) {
        let len = w[1] - w[0];
        let n = ((len / dt).round() as usize).max(1);
        for k in 1..n {
            times.push(w[0] + len * k as f64 / n as f64);
        }
        times.push(w[1]);
    }
    times
}

fn integrate(sc: &Scenario, opts: StepOptions, solver: &'static str) -> Result<Trajectory> {
    let prep = prepare(sc, opts.shift)?;
    // Restarts finer than the step cannot be resolved by the grid; restarting
    // a one-step method at a node is the same as continuing, so only the
    // form breakpoints are kept then.
    let pieces = (sc.horizon / (0.9 * splitting_length(&prep.bounds))).ceil();
    let cuts = if opts.use_splits && sc.horizon / pieces >= sc.dt * (1.0 - 1e-9) {
        horizon_splits(&prep.bounds, sc.horizon)
    } else {
        with_family_breakpoints(prep.bounds.clone(), sc).breakpoints.expect("set above")
    };
    let times = build_grid(&cuts, sc.dt);
    let n = sc.dim();
    let w = prep.w;
    let mass = &sc.grams.mass_h;

    let mut u = sc.u0.clone();
    let mut v = &sc.u1 - &sc.u0 * w;
    let mut us = Vec::with_capacity(times.len());
    let mut vs = Vec::with_capacity(times.len());
    us.push(u.clone());
    vs.push(v.clone());
    for k in 0..times.len() - 1 {
        let (t0, t1) = (times[k], times[k + 1]);
        let dt = t1 - t0;
        let tm = 0.5 * (t0 + t1);
        let a = prep.a.at(tm)?;
        let b = match &prep.b {
            Some(b) => b.at(tm)?,
            None => DMatrix::zeros(n, n),
        };
        let f = (sc.f)(tm) * (-w * tm).exp();
        let lhs = mass + &b * (0.5 * dt) + &a * (0.25 * dt * dt);
        let rhs = mass * &v - &b * &v * (0.5 * dt) - &a * &u * dt - &a * &v * (0.25 * dt * dt) + f * dt;
        let v1 = lhs
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular(format!("step matrix at t = {tm}, dt = {dt}")))?;
        u += (&v + &v1) * (0.5 * dt);
        v = v1;
        us.push(u.clone());
        vs.push(v.clone());
    }

    // Undo the shift: u = e^{wt}ũ, u̇ = e^{wt}(ũ̇ + wũ).
    if w != 0.0 {
        for ((t, u), v) in times.iter().zip(us.iter_mut()).zip(vs.iter_mut()) {
            let e = (w * t).exp();
            *v = (&*v + &*u * w) * e;
            *u *= e;
        }
    }

    let hf = sc.grams.h_factor();
    let mut uddot = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let r = (sc.f)(t) - sc.damping_at(t)? * &vs[k] - sc.a.at(t)? * &us[k];
        uddot.push(hf.solve(&r));
    }

    Ok(Trajectory {
        times,
        u: us,
        udot: vs,
        uddot,
        meta: TrajectoryMeta { scenario_hash: sc.hash(), solver, dt: sc.dt, shift: w, splits: cuts },
    })
}

/// `½‖u̇‖²_H + ½ a(t, u, u)` at every node.
pub fn wave_energy(traj: &Trajectory, a: &DiscreteFormFamily, grams: &GramPair) -> Result<Vec<f64>> {
    traj.times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let v = &traj.udot[k];
            let u = &traj.u[k];
            Ok(0.5 * v.dot(&(&grams.mass_h * v)) + 0.5 * u.dot(&(a.at(t)? * u)))
        })
        .collect()
}

/// Largest `|E(tₙ) − E(0)|` relative to `max(E(0), 1)`.
pub fn energy_drift(traj: &Trajectory, a: &DiscreteFormFamily, grams: &GramPair) -> Result<f64> {
    let e = wave_energy(traj, a, grams)?;
    let e0 = e[0];
    Ok(e.iter().map(|x| (x - e0).abs()).fold(0.0, f64::max) / e0.abs().max(1.0))
}

/// Least-squares slope of `log err` against `log h`.
pub fn observed_order(h: &[f64], err: &[f64]) -> f64 {
    let xs: Vec<f64> = h.iter().map(|x| x.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|x| x.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

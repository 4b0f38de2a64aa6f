//! Fixed-point iteration for `ü + B(u, u̇)u̇ + A(u, u̇)u = f`, where both
//! forms are weighted stiffness forms whose coefficients depend on the
//! unknown and its velocity.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fem::{self, Coefficient, FemSpace1D, PathFn};
use crate::forms::{DiscreteFormFamily, GramPair};
use crate::linalg;
use crate::norms::{self, MrSpace};
use crate::stepper::{self, Forcing, Mode, Scenario, StepOptions, Trajectory};

#[derive(Clone)]
pub struct QuasilinearScenario {
    pub space: FemSpace1D,
    pub a_coeff: Coefficient,
    pub b_coeff: Coefficient,
    /// Lower bound of both coefficients.
    pub ell: f64,
    /// Upper bound of both coefficients.
    pub m_coef: f64,
    pub u0: DVector<f64>,
    pub u1: DVector<f64>,
    pub f: Forcing,
    pub horizon: f64,
    pub dt: f64,
    /// Initial relaxation in `(0, 1]`.
    pub theta: f64,
    pub max_iter: usize,
    pub tol: f64,
}

/// Arguments on which declared coefficient bounds are checked.
const SAMPLE_STATES: [f64; 5] = [-10.0, -1.0, 0.0, 1.0, 10.0];

impl QuasilinearScenario {
    pub fn validate(&self) -> Result<()> {
        let n = self.space.dim();
        if !(self.ell > 0.0) || !(self.m_coef >= self.ell) {
            return Err(Error::InvalidArgument(format!(
                "coefficient bounds need 0 < ell <= M, got ell = {}, M = {}",
                self.ell, self.m_coef
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidArgument(format!("relaxation must lie in (0, 1], got {}", self.theta)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("need at least one iteration".into()));
        }
        for (v, ctx) in [(&self.u0, "initial value"), (&self.u1, "initial velocity")] {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: v.len(), context: ctx });
            }
        }
        for k in 0..=4 {
            let t = self.horizon * k as f64 / 4.0;
            for j in 0..=4 {
                let x = j as f64 / 4.0;
                for &y in &SAMPLE_STATES {
                    for &z in &SAMPLE_STATES {
                        for c in [(self.a_coeff)(t, x, y, z), (self.b_coeff)(t, x, y, z)] {
                            if !(c >= self.ell) {
                                return Err(Error::EllipticityViolated { value: c, ell: self.ell, t, x });
                            }
                            if !(c <= self.m_coef) {
                                return Err(Error::InvalidArgument(format!(
                                    "coefficient {c} exceeds the declared bound {} at t = {t}, x = {x}",
                                    self.m_coef
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Coefficient families frozen along a path `(g, ġ)`.
    pub fn families(&self, path: PathFn) -> Result<(DiscreteFormFamily, DiscreteFormFamily)> {
        let bounds = fem::coefficient_bounds(&self.space, self.ell, self.m_coef)?;
        let a = fem::assemble_coefficient_family(&self.space, self.a_coeff.clone(), path.clone(), self.ell, self.horizon)?
            .with_bounds(bounds.clone());
        let b = fem::assemble_coefficient_family(&self.space, self.b_coeff.clone(), path, self.ell, self.horizon)?
            .with_bounds(bounds);
        Ok((a, b))
    }

    /// Linear scenario with the forms frozen along `path`.
    pub fn linear_scenario(&self, path: PathFn) -> Result<Scenario> {
        let (a, b) = self.families(path)?;
        Ok(Scenario {
            a,
            b: Some(b),
            grams: self.space.grams()?,
            u0: self.u0.clone(),
            u1: self.u1.clone(),
            f: self.f.clone(),
            horizon: self.horizon,
            dt: self.dt,
            mode: Mode::Damped,
        })
    }

    /// `S(g)`: the linear solve along the trajectory `g`.
    pub fn apply(&self, g: &Trajectory) -> Result<Trajectory> {
        let g = Arc::new(g.clone());
        let path: PathFn = Arc::new(move |t| g.sample(t));
        stepper::solve_damped(&self.linear_scenario(path)?, StepOptions::default())
    }
}

/// `‖g − h‖` in the discrete `H¹(0,T;H)` norm (trapezoidal rule).
pub fn h1_distance(g: &Trajectory, h: &Trajectory, grams: &GramPair) -> Result<f64> {
    check_same_grid(g, h)?;
    let m = &grams.mass_h;
    let vals: Vec<f64> = (0..g.len())
        .map(|k| {
            let du = &g.u[k] - &h.u[k];
            let dv = &g.udot[k] - &h.udot[k];
            du.dot(&(m * &du)) + dv.dot(&(m * &dv))
        })
        .collect();
    Ok(linalg::trapezoid(&g.times, &vals).max(0.0).sqrt())
}

fn check_same_grid(g: &Trajectory, h: &Trajectory) -> Result<()> {
    let same = g.len() == h.len() && g.times.iter().zip(&h.times).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    if same {
        Ok(())
    } else {
        Err(Error::InvalidArgument("trajectories live on different time grids".into()))
    }
}

fn relax(g: &Trajectory, s: &Trajectory, theta: f64) -> Trajectory {
    if theta == 1.0 {
        return s.clone();
    }
    let mix = |a: &[DVector<f64>], b: &[DVector<f64>]| -> Vec<DVector<f64>> {
        a.iter().zip(b).map(|(x, y)| x * (1.0 - theta) + y * theta).collect()
    };
    Trajectory {
        times: s.times.clone(),
        u: mix(&g.u, &s.u),
        udot: mix(&g.udot, &s.udot),
        uddot: mix(&g.uddot, &s.uddot),
        meta: s.meta.clone(),
    }
}

#[derive(Clone, Debug)]
pub struct PicardOutcome {
    pub trajectory: Trajectory,
    /// Picard updates performed after the initial linear solve.
    pub iterations: usize,
    /// `‖g_{k+1} − g_k‖` per update.
    pub history: Vec<f64>,
    /// Relaxation in force at the end.
    pub theta: f64,
    /// Maximal-regularity norm of every linear solve `S(g_k)`, including the initial one.
    pub iterate_mr_norms: Vec<f64>,
}

/// Relaxed Picard iteration `g_{k+1} = (1 − θ)g_k + θ S(g_k)`, started from
/// the solve along the constant path `(u₀, 0)`. `θ` is halved after three
/// successive non-decreasing distances.
pub fn picard_solve(q: &QuasilinearScenario) -> Result<PicardOutcome> {
    q.validate()?;
    let grams = q.space.grams()?;
    let (u0, zero) = (q.u0.clone(), DVector::zeros(q.space.dim()));
    let constant: PathFn = Arc::new(move |_| (u0.clone(), zero.clone()));
    let mut g = stepper::solve_damped(&q.linear_scenario(constant)?, StepOptions::default())?;
    let mut mr = vec![norms::mr_norms(&g, &grams, MrSpace::VVDual)?.mr_norm];
    let mut theta = q.theta;
    let mut history = Vec::new();
    let mut rising = 0;
    for k in 1..=q.max_iter {
        let s = q.apply(&g)?;
        mr.push(norms::mr_norms(&s, &grams, MrSpace::VVDual)?.mr_norm);
        let next = relax(&g, &s, theta);
        let d = h1_distance(&next, &g, &grams)?;
        if let Some(&prev) = history.last() {
            rising = if d >= prev { rising + 1 } else { 0 };
        }
        history.push(d);
        g = next;
        if d <= q.tol {
            return Ok(PicardOutcome { trajectory: g, iterations: k, history, theta, iterate_mr_norms: mr });
        }
        if rising >= 3 {
            theta *= 0.5;
            rising = 0;
        }
    }
    Err(Error::NotConverged { iterations: q.max_iter, last_distance: *history.last().unwrap_or(&f64::NAN), history })
}

/// `‖ü + B(u, u̇)u̇ + A(u, u̇)u − f‖_{L²(0,T;V′)}` with the forms assembled
/// along the trajectory itself.
pub fn nonlinear_residual(traj: &Trajectory, q: &QuasilinearScenario) -> Result<f64> {
    let n = q.space.dim();
    let on_grid = traj.len() >= 2
        && traj.times[0] == 0.0
        && (traj.times[traj.len() - 1] - q.horizon).abs() <= 1e-12 * q.horizon.max(1.0);
    if !on_grid {
        return Err(Error::InvalidArgument("trajectory does not span the scenario horizon".into()));
    }
    if traj.u[0].len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: traj.u[0].len(), context: "quasilinear trajectory" });
    }
    let grams = q.space.grams()?;
    let own = Arc::new(traj.clone());
    let path: PathFn = Arc::new(move |t| own.sample(t));
    let (a, b) = q.families(path)?;
    let vals = traj
        .times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let r = &grams.mass_h * &traj.uddot[k] + b.at(t)? * &traj.udot[k] + a.at(t)? * &traj.u[k] - (q.f)(t);
            Ok(norms::dual_norm(&r, &grams)?.powi(2))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(linalg::trapezoid(&traj.times, &vals).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{build_space, BoundaryCondition};

    fn bump(space: &FemSpace1D) -> Forcing {
        let load = space.load_vector(|x| (std::f64::consts::PI * x).sin());
        Arc::new(move |t: f64| &load * (1.0 + t))
    }

    fn scenario(a: Coefficient, b: Coefficient, bc: BoundaryCondition) -> QuasilinearScenario {
        let space = build_space(8, bc).unwrap();
        let n = space.dim();
        QuasilinearScenario {
            f: bump(&space),
            space,
            a_coeff: a,
            b_coeff: b,
            ell: 1.0,
            m_coef: 2.0,
            u0: DVector::zeros(n),
            u1: DVector::zeros(n),
            horizon: 0.5,
            dt: 0.01,
            theta: 1.0,
            max_iter: 50,
            tol: 1e-10,
        }
    }

    fn nonlinear() -> Coefficient {
        Arc::new(|_, _, y, z| 1.0 + 1.0 / (1.0 + y * y + z * z))
    }

    #[test]
    fn state_independent_coefficients_converge_at_once() {
        let c: Coefficient = Arc::new(|t, x, _, _| 1.5 + 0.25 * (t * x).sin());
        let q = scenario(c.clone(), c, BoundaryCondition::Dirichlet);
        let out = picard_solve(&q).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.history[0] <= 1e-14);
    }

    #[test]
    fn nonlinear_iteration_contracts() {
        for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Robin] {
            let q = QuasilinearScenario { tol: 1e-9, ..scenario(nonlinear(), nonlinear(), bc) };
            let out = picard_solve(&q).unwrap();
            assert!(out.history.windows(2).all(|w| w[1] < w[0]), "{:?}", out.history);
            assert!(*out.history.last().unwrap() <= 1e-9);
            let res = nonlinear_residual(&out.trajectory, &q).unwrap();
            assert!(res <= 10.0 * (q.dt * q.dt + q.tol), "residual {res}");
            let (lo, hi) = out
                .iterate_mr_norms
                .iter()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
            assert!(hi / lo < 3.0);
        }
    }

    #[test]
    fn fixed_point_is_stable_under_relaxation() {
        let q = scenario(nonlinear(), nonlinear(), BoundaryCondition::Dirichlet);
        let out = picard_solve(&q).unwrap();
        let grams = q.space.grams().unwrap();
        let s = q.apply(&out.trajectory).unwrap();
        assert!(h1_distance(&s, &out.trajectory, &grams).unwrap() <= 10.0 * q.tol);
        for theta in [0.25, 0.5, 1.0] {
            let next = relax(&out.trajectory, &s, theta);
            assert!(h1_distance(&next, &out.trajectory, &grams).unwrap() <= 10.0 * q.tol);
        }
    }

    #[test]
    fn zero_trajectory_residual_is_forcing_norm() {
        let q = scenario(nonlinear(), nonlinear(), BoundaryCondition::Dirichlet);
        let out = picard_solve(&q).unwrap();
        let mut zero = out.trajectory.clone();
        for v in zero.u.iter_mut().chain(zero.udot.iter_mut()).chain(zero.uddot.iter_mut()) {
            v.fill(0.0);
        }
        let grams = q.space.grams().unwrap();
        let vals: Vec<f64> = zero.times.iter().map(|&t| norms::dual_norm(&(q.f)(t), &grams).unwrap().powi(2)).collect();
        let want = linalg::trapezoid(&zero.times, &vals).sqrt();
        assert!((nonlinear_residual(&zero, &q).unwrap() - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn linear_solve_has_small_residual() {
        let c: Coefficient = Arc::new(|_, x, _, _| 1.0 + x);
        let q = scenario(c.clone(), c, BoundaryCondition::Robin);
        let out = picard_solve(&q).unwrap();
        assert!(nonlinear_residual(&out.trajectory, &q).unwrap() < 1e-9);
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let q = scenario(nonlinear(), nonlinear(), BoundaryCondition::Dirichlet);
        assert!(QuasilinearScenario { tol: 0.0, ..q.clone() }.validate().is_err());
        assert!(QuasilinearScenario { theta: 1.5, ..q.clone() }.validate().is_err());
        assert!(QuasilinearScenario { ell: 1.2, ..q.clone() }.validate().is_err());
        assert!(QuasilinearScenario { m_coef: 1.5, ..q.clone() }.validate().is_err());
        let few = QuasilinearScenario { max_iter: 1, tol: 1e-300, ..q };
        assert!(matches!(picard_solve(&few), Err(Error::NotConverged { iterations: 1, .. })));
    }
}

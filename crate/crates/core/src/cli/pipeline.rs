//! Run, certify and study pipelines with CSV emission.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DVector;

use super::build::{Built, BuiltProblem, Exact};
use super::config::{LionsModeConfig, ProblemMode};
use crate::error::{Error, Result};
use crate::fem::{self, ManufacturedField, PathFn, Side};
use crate::forms::{self, DiscreteFormFamily, FormBounds, GramPair};
use crate::lions::{self, LionsCertificate, LionsData, LionsMode, LionsParams, SpaceTimeBasis};
use crate::linalg;
use crate::norms::{self, CheckKind, LowerBoundConstants, MrReport, MrSpace, Window};
use crate::quasilinear;
use crate::stepper::{self, Mode, Scenario, StepOptions, Trajectory};

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const NORMS_CSV: &str = "norms.csv";
pub const CERTIFICATES_CSV: &str = "certificates.csv";
pub const IDENTITIES_CSV: &str = "identities.csv";
pub const ORDERS_CSV: &str = "orders.csv";
pub const PICARD_CSV: &str = "picard.csv";

/// Errors at or below this level count as exact reproduction in a study.
pub const EXACT_ERROR: f64 = 1e-11;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub checks: Vec<CheckOutcome>,
    pub files: Vec<PathBuf>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn check(&mut self, name: &str, value: f64, passed: bool) {
        self.checks.push(CheckOutcome { name: name.to_string(), value, passed });
    }
}

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_csv(dir: &Path, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for r in rows {
        w.write_record(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(path)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Families of a built problem. Quasilinear forms are frozen along `(u₀, 0)`.
pub fn families(built: &Built) -> Result<(DiscreteFormFamily, Option<DiscreteFormFamily>, GramPair)> {
    match &built.problem {
        BuiltProblem::Linear(sc) => {
            let b = if sc.mode == Mode::Damped { sc.b.clone() } else { None };
            Ok((sc.a.clone(), b, sc.grams.clone()))
        }
        BuiltProblem::Quasilinear(q) => {
            let (u0, zero) = (q.u0.clone(), DVector::zeros(q.space.dim()));
            let path: PathFn = Arc::new(move |_| (u0.clone(), zero.clone()));
            let (a, b) = q.families(path)?;
            let grams = q.space.grams()?;
            Ok((with_sampled_mdot(a, &grams)?, Some(with_sampled_mdot(b, &grams)?), grams))
        }
    }
}

fn with_sampled_mdot(fam: DiscreteFormFamily, grams: &GramPair) -> Result<DiscreteFormFamily> {
    let mdot = forms::check_piecewise_lipschitz(&fam, grams, &fam.breakpoints(), 8)?.mdot;
    let bounds = fam.bounds.clone().expect("coefficient bounds attached").with_mdot(mdot);
    Ok(fam.with_bounds(bounds))
}

/// Certified constants and the restart layout of the horizon.
#[derive(Clone, Debug)]
pub struct Plan {
    /// Combined constants of the given families.
    pub original: FormBounds,
    /// Constants after the coercivity shift.
    pub certified: FormBounds,
    pub shift: f64,
    pub mdot: f64,
    pub t0: f64,
    /// Length of the first restart window.
    pub first_window: f64,
    /// End of the first Lipschitz window.
    pub first_lipschitz: f64,
}

pub fn plan(built: &Built) -> Result<Plan> {
    let (a, b, grams) = families(built)?;
    let horizon = built.horizon();
    let ba = a.bounds.clone().ok_or(Error::NotCertified("stiffness family has no bounds"))?;
    let original = match &b {
        Some(b) => ba.combine(b.bounds.as_ref().ok_or(Error::NotCertified("damping family has no bounds"))?),
        None => ba,
    };
    let (shift, certified) = match &b {
        Some(b) => {
            let s = forms::coercivity_shift(&a, b, &grams)?;
            if s.w == 0.0 {
                (0.0, original.clone())
            } else {
                let sb = s.b.bounds.clone().expect("shift certifies");
                (s.w, s.a.bounds.clone().expect("shift certifies").combine(&sb))
            }
        }
        None => {
            let (w, aw) = forms::coercivity_shift_undamped(&a, &grams)?;
            (w, if w == 0.0 { original.clone() } else { aw.bounds.clone().expect("shift certifies") })
        }
    };
    let t0 = stepper::splitting_length(&certified);
    let pieces = (horizon / (0.9 * t0)).ceil().max(1.0);
    let mut interior = a.interior_breakpoints().to_vec();
    if let Some(b) = &b {
        interior = forms::merge_cuts(&interior, b.interior_breakpoints());
    }
    let first_lipschitz = interior.first().copied().unwrap_or(horizon);
    Ok(Plan {
        mdot: original.mdot.unwrap_or(f64::NAN),
        original,
        certified,
        shift,
        t0,
        first_window: (horizon / pieces).min(first_lipschitz),
        first_lipschitz,
    })
}

fn lions_mode(built: &Built, cfg: Option<LionsModeConfig>) -> LionsMode {
    match cfg {
        Some(LionsModeConfig::DampedVprime) => LionsMode::DampedVprime,
        Some(LionsModeConfig::DampedH) => LionsMode::DampedH,
        Some(LionsModeConfig::Wave) => LionsMode::Wave,
        None => match built.config.problem.mode {
            ProblemMode::Wave => LionsMode::Wave,
            _ => LionsMode::DampedVprime,
        },
    }
}

/// Space-time certificate on the first restart window.
pub fn lions_certificate(built: &Built, plan: &Plan) -> Result<Option<LionsCertificate>> {
    let Some(cfg) = &built.config.verify.lions else {
        return Ok(None);
    };
    let (a, b, grams) = families(built)?;
    let mode = lions_mode(built, cfg.mode);
    if mode != LionsMode::Wave && b.is_none() {
        return Err(Error::Config("damped space-time modes need a damping form".into()));
    }
    let basis = SpaceTimeBasis::new(mode, lions::uniform_grid(plan.first_window, cfg.elements), cfg.degree, grams.dim())?;
    let shift = if mode == LionsMode::Wave { 0.0 } else { plan.shift };
    lions::select_parameters(&basis, &a, b.as_ref(), &grams, shift).map(Some)
}

fn certificate_rows(plan: &Plan, cert: Option<&LionsCertificate>) -> (Vec<String>, Vec<Vec<String>>) {
    let header = strings(&["M", "alpha", "omega", "Mdot", "T0", "lions_C", "lambda", "eta", "w"]);
    let nan = f64::NAN;
    let (c, l, e) = cert.map_or((nan, nan, nan), |c| (c.constant, c.params.lambda, c.params.eta));
    let o = &plan.original;
    let row = [o.m, o.alpha, o.omega, plan.mdot, plan.t0, c, l, e, plan.shift].map(fmt).to_vec();
    (header, vec![row])
}

fn bounds_checks(report: &mut Report, built: &Built, plan: &Plan) {
    if built.config.verify.bounds {
        report.check("bounds_alpha", plan.original.alpha, plan.original.alpha > 0.0);
        report.check("bounds_mdot", plan.mdot, plan.mdot.is_finite());
        report.check("splitting_length", plan.t0, plan.t0 > 0.0);
    }
}

fn lions_checks(report: &mut Report, cert: Option<&LionsCertificate>) {
    if let Some(c) = cert {
        report.check("lions_coercivity", c.constant, c.is_certified());
    }
}

/// Forms and space-time certificates only.
pub fn certify(built: &Built, out: &Path) -> Result<Report> {
    let mut report = Report::default();
    let plan = plan(built)?;
    bounds_checks(&mut report, built, &plan);
    let cert = lions_certificate(built, &plan)?;
    lions_checks(&mut report, cert.as_ref());
    let (h, rows) = certificate_rows(&plan, cert.as_ref());
    report.files.push(write_csv(out, CERTIFICATES_CSV, &h, &rows)?);
    Ok(report)
}

fn trajectory_rows(traj: &Trajectory) -> (Vec<String>, Vec<Vec<String>>) {
    let n = traj.u.first().map_or(0, |u| u.len());
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("u_{i}")));
    header.extend((0..n).map(|i| format!("udot_{i}")));
    let rows = (0..traj.len())
        .map(|k| {
            let mut r = vec![fmt(traj.times[k])];
            r.extend(traj.u[k].iter().map(|&v| fmt(v)));
            r.extend(traj.udot[k].iter().map(|&v| fmt(v)));
            r
        })
        .collect();
    (header, rows)
}

fn solve_linear(sc: &Scenario) -> Result<Trajectory> {
    match sc.mode {
        Mode::Damped => stepper::solve_damped(sc, StepOptions::default()),
        Mode::Wave => stepper::solve_wave(sc, StepOptions::default()),
    }
}

fn identity_checks(report: &mut Report, rows: &mut Vec<Vec<String>>, built: &Built, plan: &Plan) -> Result<()> {
    let v = &built.config.verify;
    let (a, b, grams) = families(built)?;
    let coercive = plan.original.is_coercive() && plan.mdot.is_finite();
    let consts = LowerBoundConstants { alpha: plan.original.alpha, m: plan.original.m, mdot: plan.mdot };
    let (lambda, lb) = if coercive {
        let l = norms::lower_bound_lambda(consts);
        (l, b.as_ref().map(|_| (consts, l)))
    } else {
        (1.0, None)
    };
    let window = Window::new(0.0, plan.first_lipschitz)?;
    for c in norms::path_suite(&a, b.as_ref(), &grams, lambda, lb, window)? {
        let tol = match c.kind {
            CheckKind::Equality => v.identity_tol,
            CheckKind::Slack => v.slack_tol,
        };
        report.check(c.name, c.value, c.passes(tol));
        rows.push(vec![c.name.to_string(), fmt(c.value)]);
    }
    Ok(())
}

fn mr_space(built: &Built) -> MrSpace {
    match built.config.problem.mode {
        ProblemMode::Wave => MrSpace::for_mode(Mode::Wave),
        _ => MrSpace::for_mode(Mode::Damped),
    }
}

fn norm_rows(report: &MrReport) -> Vec<Vec<String>> {
    report.rows().into_iter().map(|(k, v)| vec![k, fmt(v)]).collect()
}

/// Space-time solve over the whole horizon compared with the trajectory.
fn cross_check(built: &Built, sc: &Scenario, plan: &Plan, traj: &Trajectory) -> Result<Option<f64>> {
    let Some(cfg) = &built.config.verify.cross_check else {
        return Ok(None);
    };
    let (mode, shift) = match sc.mode {
        Mode::Damped => (LionsMode::DampedVprime, plan.shift),
        Mode::Wave => (LionsMode::Wave, 0.0),
    };
    let basis = SpaceTimeBasis::new(mode, lions::uniform_grid(sc.horizon, cfg.elements), cfg.degree, sc.dim())?;
    let data = LionsData { u0: sc.u0.clone(), u1: sc.u1.clone(), f: sc.f.clone() };
    let params = LionsParams { shift, ..Default::default() };
    let system = lions::assemble(&basis, &sc.a, sc.b.as_ref(), &sc.grams, &data, params)?;
    let sol = lions::solve(&system)?;
    let dist = traj
        .times
        .iter()
        .zip(&traj.u)
        .map(|(&t, u)| (sol.eval(t).0 - u).amax())
        .fold(0.0, f64::max);
    Ok(Some(dist))
}

/// Full pipeline: certify, split, solve, norms, identities, optional
/// space-time checks. Reports are written even when checks fail.
pub fn run(built: &Built, out: &Path) -> Result<Report> {
    let mut report = Report::default();
    let plan = plan(built)?;
    bounds_checks(&mut report, built, &plan);
    let cert = lions_certificate(built, &plan)?;
    lions_checks(&mut report, cert.as_ref());
    let verify = &built.config.verify;
    let mut identity_rows = Vec::new();
    if verify.identities {
        identity_checks(&mut report, &mut identity_rows, built, &plan)?;
    }
    let grams = built.grams();
    let mut extra_norms: Vec<Vec<String>> = Vec::new();
    let traj = match &built.problem {
        BuiltProblem::Linear(sc) => {
            let traj = solve_linear(sc)?;
            let mr = norms::mr_norms(&traj, &grams, mr_space(built))?
                .with_data_norm(norms::data_norm(mr_space(built), sc, &traj.times)?);
            let mut rows = norm_rows(&mr);
            if verify.apriori {
                match norms::apriori_check(&traj, sc) {
                    Ok(ap) => {
                        let c = ap.explicit_constant.unwrap_or(f64::NAN);
                        rows.push(vec!["apriori_ratio".into(), fmt(ap.ratio)]);
                        rows.push(vec!["apriori_constant".into(), fmt(c)]);
                        report.check("apriori", ap.ratio, ap.bound_ok == Some(true));
                    }
                    Err(Error::RatioUndefined) => report.check("apriori", f64::NAN, false),
                    Err(e) => return Err(e),
                }
            }
            if let Some(r) = robin_flux_max(built, &traj) {
                rows.push(vec!["robin_flux_residual".into(), fmt(r)]);
            }
            extra_norms = rows;
            if verify.energy {
                let e = norms::energy_balance(&traj, sc)?;
                report.check("energy_balance", e, e.abs() <= verify.energy_tol);
                identity_rows.push(vec!["energy_balance".into(), fmt(e)]);
            }
            if let Some(d) = cross_check(built, sc, &plan, &traj)? {
                let tol = verify.cross_check.as_ref().expect("requested").tol;
                report.check("lions_cross_check", d, d <= tol);
                extra_norms.push(vec!["lions_cross_check".into(), fmt(d)]);
            }
            Some(traj)
        }
        BuiltProblem::Quasilinear(q) => match quasilinear::picard_solve(q) {
            Ok(outcome) => {
                let traj = outcome.trajectory;
                let own = Arc::new(traj.clone());
                let path: PathFn = Arc::new(move |t| own.sample(t));
                let frozen = q.linear_scenario(path)?;
                let mr = norms::mr_norms(&traj, &grams, MrSpace::VVDual)?
                    .with_data_norm(norms::data_norm(MrSpace::VVDual, &frozen, &traj.times)?);
                let residual = quasilinear::nonlinear_residual(&traj, q)?;
                let (lo, hi) = outcome
                    .iterate_mr_norms
                    .iter()
                    .fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
                let spread = if lo > 0.0 { hi / lo } else if hi == 0.0 { 1.0 } else { f64::INFINITY };
                let last = *outcome.history.last().unwrap_or(&0.0);
                let mut rows = norm_rows(&mr);
                rows.push(vec!["picard_iterations".into(), fmt(outcome.iterations as f64)]);
                rows.push(vec!["picard_distance".into(), fmt(last)]);
                rows.push(vec!["nonlinear_residual".into(), fmt(residual)]);
                rows.push(vec!["iterate_mr_spread".into(), fmt(spread)]);
                extra_norms = rows;
                report.check("picard_converged", last, last <= q.tol);
                report.check("nonlinear_residual", residual, residual <= 10.0 * (q.dt * q.dt + q.tol));
                report.check("iterate_mr_spread", spread, spread < 3.0);
                let picard: Vec<Vec<String>> = outcome
                    .history
                    .iter()
                    .enumerate()
                    .map(|(k, d)| vec![(k + 1).to_string(), fmt(*d), fmt(outcome.iterate_mr_norms[k + 1])])
                    .collect();
                report.files.push(write_csv(out, PICARD_CSV, &strings(&["iteration", "distance", "mr_norm"]), &picard)?);
                Some(traj)
            }
            Err(Error::NotConverged { last_distance, history, .. }) => {
                report.check("picard_converged", last_distance, false);
                let picard: Vec<Vec<String>> =
                    history.iter().enumerate().map(|(k, d)| vec![(k + 1).to_string(), fmt(*d), fmt(f64::NAN)]).collect();
                report.files.push(write_csv(out, PICARD_CSV, &strings(&["iteration", "distance", "mr_norm"]), &picard)?);
                None
            }
            Err(e) => return Err(e),
        },
    };
    if let Some(traj) = &traj {
        let (h, rows) = trajectory_rows(traj);
        report.files.push(write_csv(out, TRAJECTORY_CSV, &h, &rows)?);
    }
    report.files.push(write_csv(out, NORMS_CSV, &strings(&["name", "value"]), &extra_norms)?);
    let (h, rows) = certificate_rows(&plan, cert.as_ref());
    report.files.push(write_csv(out, CERTIFICATES_CSV, &h, &rows)?);
    report.files.push(write_csv(out, IDENTITIES_CSV, &strings(&["name", "residual"]), &identity_rows)?);
    Ok(report)
}

/// `L²(0,T;H)` and `L²(0,T;V)` errors against the declared exact solution.
pub fn solution_errors(built: &Built, traj: &Trajectory) -> Result<(f64, f64)> {
    let exact = built.exact.as_ref().ok_or_else(|| Error::Config("no exact solution declared".into()))?;
    let grams = built.grams();
    let mut h2 = Vec::with_capacity(traj.len());
    let mut v2 = Vec::with_capacity(traj.len());
    for (k, &t) in traj.times.iter().enumerate() {
        let (eh, ev) = match exact {
            Exact::Field(ex) => {
                let space = built.space.as_ref().expect("field solutions live on a space");
                let (l2, semi) = space.error_parts(&traj.u[k], |x| ex.value(t, x), |x| ex.dx(t, x));
                (l2, l2 + semi)
            }
            Exact::Components(..) => {
                let (u, _) = exact.coefficients(t).expect("components");
                let e = &traj.u[k] - u;
                (e.dot(&(&grams.mass_h * &e)), e.dot(&(&grams.gram_v * &e)))
            }
        };
        h2.push(eh);
        v2.push(ev);
    }
    Ok((linalg::trapezoid(&traj.times, &h2).max(0.0).sqrt(), linalg::trapezoid(&traj.times, &v2).max(0.0).sqrt()))
}

/// Largest boundary flux residual over the time grid for damped Robin
/// problems with an exact field; `None` otherwise.
pub fn robin_flux_max(built: &Built, traj: &Trajectory) -> Option<f64> {
    let (Some(space), Some(Exact::Field(ex)), Some(w)) = (&built.space, &built.exact, &built.robin) else {
        return None;
    };
    if built.config.problem.mode != ProblemMode::Damped {
        return None;
    }
    let mut worst = 0.0f64;
    for (k, &t) in traj.times.iter().enumerate() {
        let sides = [Side::Left, Side::Right];
        let b1 = sides.map(|s| (w.beta1)(t, s.x()));
        let b2 = sides.map(|s| (w.beta2)(t, s.x()));
        let g = [0, 1].map(|i| ex.robin_datum(t, sides[i], b1[i], b2[i]));
        let r = fem::robin_flux_residual(space, &traj.u[k], &traj.udot[k], b1, b2, g);
        worst = worst.max(r[0].abs()).max(r[1].abs());
    }
    Some(worst)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub level: usize,
    pub dt: f64,
    pub h: f64,
    pub err_h: f64,
    pub err_v: f64,
    /// `None` on the first level.
    pub order_h: Option<Order>,
    pub order_v: Option<Order>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Order {
    Observed(f64),
    /// Both errors at rounding level.
    Exact,
}

impl Order {
    fn between(prev: f64, cur: f64) -> Self {
        if prev <= EXACT_ERROR && cur <= EXACT_ERROR {
            Order::Exact
        } else {
            Order::Observed((prev / cur).log2())
        }
    }

    fn cell(o: Option<Order>) -> String {
        match o {
            None => String::new(),
            Some(Order::Exact) => "exact".into(),
            Some(Order::Observed(v)) => fmt(v),
        }
    }
}

/// Halves `dt` (and `h` when requested) per level; `rebuild` builds the
/// scenario for a modified config.
pub fn study(built: &Built, levels: usize, rebuild: impl Fn(&super::config::ScenarioConfig) -> Result<Built>, out: &Path) -> Result<Vec<StudyRow>> {
    if built.exact.is_none() {
        return Err(Error::Config("a convergence study needs data.exact".into()));
    }
    let mut rows: Vec<StudyRow> = Vec::with_capacity(levels);
    for level in 0..levels {
        let mut cfg = built.config.clone();
        let scale = 2f64.powi(level as i32);
        cfg.problem.dt /= scale;
        if cfg.verify.refine_h {
            if let Some(s) = cfg.space.as_mut() {
                s.elements *= 1 << level;
            }
        }
        let b = rebuild(&cfg)?;
        let BuiltProblem::Linear(sc) = &b.problem else {
            return Err(Error::Config("studies need a linear problem".into()));
        };
        let traj = solve_linear(sc)?;
        let (err_h, err_v) = solution_errors(&b, &traj)?;
        let h = cfg.space.as_ref().map_or(f64::NAN, |s| 1.0 / s.elements as f64);
        let (order_h, order_v) = match rows.last() {
            Some(p) => (Some(Order::between(p.err_h, err_h)), Some(Order::between(p.err_v, err_v))),
            None => (None, None),
        };
        rows.push(StudyRow { level, dt: cfg.problem.dt, h, err_h, err_v, order_h, order_v });
    }
    let header = strings(&["level", "dt", "h", "errL2H", "errL2V", "orderL2H", "orderL2V"]);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.level.to_string(),
                fmt(r.dt),
                fmt(r.h),
                fmt(r.err_h),
                fmt(r.err_v),
                Order::cell(r.order_h),
                Order::cell(r.order_v),
            ]
        })
        .collect();
    write_csv(out, ORDERS_CSV, &header, &table)?;
    Ok(rows)
}

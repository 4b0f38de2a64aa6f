//! Turns a parsed config into library scenarios.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::config::*;
use super::expr::{Expr, Var};
use crate::error::{Error, Result};
use crate::fem::{self, BoundaryCondition, BoundaryWeight, Coefficient, FemSpace1D, FieldJet, ManufacturedField, PathFn, Side};
use crate::forms::{self, DiscreteFormFamily, GramPair};
use crate::quasilinear::QuasilinearScenario;
use crate::stepper::{Forcing, Mode, Scenario};

const TX: [Var; 2] = [Var::T, Var::X];

/// Function of `(t, x)` switching expressions at the `until` points.
#[derive(Clone, Debug)]
pub struct Piecewise {
    cuts: Vec<f64>,
    exprs: Vec<Expr>,
}

impl Piecewise {
    pub fn parse(cfg: &PiecewiseExpr, allowed: &[Var], horizon: f64) -> Result<Self> {
        match cfg {
            PiecewiseExpr::Single(s) => Ok(Self { cuts: vec![], exprs: vec![Expr::parse(s, allowed)?] }),
            PiecewiseExpr::Pieces(pieces) => {
                let (last, init) = pieces
                    .split_last()
                    .ok_or_else(|| Error::Config("piecewise expression needs at least one piece".into()))?;
                if last.until.is_some() {
                    return Err(Error::Config("the last piece must not have 'until'".into()));
                }
                let mut cuts = Vec::with_capacity(init.len());
                for p in init {
                    let u = p.until.ok_or_else(|| Error::Config("every piece but the last needs 'until'".into()))?;
                    if !(u > *cuts.last().unwrap_or(&0.0) && u < horizon) {
                        return Err(Error::Config(format!("piece ends must increase inside (0, T), got {u}")));
                    }
                    cuts.push(u);
                }
                let exprs = pieces.iter().map(|p| Expr::parse(&p.expr, allowed)).collect::<Result<_>>()?;
                Ok(Self { cuts, exprs })
            }
        }
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let k = self.cuts.iter().take_while(|&&c| t >= c).count();
        self.exprs[k].eval_tx(t, x)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.cuts
    }

    pub fn weight(self: &Arc<Self>) -> BoundaryWeight {
        let me = self.clone();
        Arc::new(move |t, x| me.eval(t, x))
    }
}

/// Exact solution `u(t, x)` of the Robin problem with its derivatives.
pub struct ExprField {
    jet: [Expr; 7],
    damped: bool,
}

impl ExprField {
    pub fn new(u: Expr, damped: bool) -> Self {
        let ut = u.derivative(Var::T);
        let utt = ut.derivative(Var::T);
        let ux = u.derivative(Var::X);
        let utx = ut.derivative(Var::X);
        let uxx = ux.derivative(Var::X);
        let utxx = utx.derivative(Var::X);
        Self { jet: [u, ut, utt, ux, utx, uxx, utxx], damped }
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        self.jet[0].eval_tx(t, x)
    }

    pub fn dx(&self, t: f64, x: f64) -> f64 {
        self.jet[3].eval_tx(t, x)
    }

    pub fn dt(&self, t: f64, x: f64) -> f64 {
        self.jet[1].eval_tx(t, x)
    }
}

impl ManufacturedField for ExprField {
    fn jet(&self, t: f64, x: f64) -> FieldJet {
        let v: Vec<f64> = self.jet.iter().map(|e| e.eval_tx(t, x)).collect();
        FieldJet { u: v[0], u_t: v[1], u_tt: v[2], u_x: v[3], u_tx: v[4], u_xx: v[5], u_txx: v[6] }
    }

    fn forcing(&self, t: f64, x: f64) -> f64 {
        let j = self.jet(t, x);
        if self.damped {
            j.u_tt - j.u_txx - j.u_xx
        } else {
            j.u_tt - j.u_xx
        }
    }

    fn robin_datum(&self, t: f64, side: Side, beta1: f64, beta2: f64) -> f64 {
        let j = self.jet(t, side.x());
        if self.damped {
            side.normal() * (j.u_tx + j.u_x) + beta2 * j.u_t + beta1 * j.u
        } else {
            side.normal() * j.u_x + beta1 * j.u
        }
    }
}

/// Exact solution declared in the config.
#[derive(Clone)]
pub enum Exact {
    Field(Arc<ExprField>),
    /// One expression in `t` per coefficient.
    Components(Vec<Expr>, Vec<Expr>),
}

impl Exact {
    pub fn coefficients(&self, t: f64) -> Option<(DVector<f64>, DVector<f64>)> {
        match self {
            Exact::Field(_) => None,
            Exact::Components(u, ut) => Some((
                DVector::from_iterator(u.len(), u.iter().map(|e| e.eval_tx(t, 0.0))),
                DVector::from_iterator(ut.len(), ut.iter().map(|e| e.eval_tx(t, 0.0))),
            )),
        }
    }
}

#[derive(Clone)]
pub enum BuiltProblem {
    Linear(Scenario),
    Quasilinear(QuasilinearScenario),
}

/// Boundary weights of a Robin scenario, kept for flux diagnostics.
#[derive(Clone)]
pub struct RobinWeights {
    pub beta1: BoundaryWeight,
    pub beta2: BoundaryWeight,
}

#[derive(Clone)]
pub struct Built {
    pub config: ScenarioConfig,
    pub problem: BuiltProblem,
    pub space: Option<FemSpace1D>,
    pub exact: Option<Exact>,
    pub robin: Option<RobinWeights>,
}

impl Built {
    pub fn grams(&self) -> GramPair {
        match &self.problem {
            BuiltProblem::Linear(sc) => sc.grams.clone(),
            BuiltProblem::Quasilinear(q) => q.space.grams().expect("validated space"),
        }
    }

    pub fn horizon(&self) -> f64 {
        self.config.problem.horizon
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("{what} must be a nonempty square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Bounds at uniform samples and just left of each breakpoint, plus a
/// sampled Lipschitz constant.
pub fn certify_family(fam: DiscreteFormFamily, grams: &GramPair) -> Result<DiscreteFormFamily> {
    let horizon = fam.horizon();
    let left: Vec<f64> = fam.interior_breakpoints().iter().map(|&b| b - 1e-9 * horizon).collect();
    let samples = forms::merge_cuts(&fam.uniform_samples(20), &left);
    let bounds = forms::estimate_bounds(&fam, grams, &samples)?;
    let mdot = forms::check_piecewise_lipschitz(&fam, grams, &fam.breakpoints(), 8)?.mdot;
    Ok(fam.with_bounds(bounds.with_mdot(mdot)))
}

fn with_cuts(fam: DiscreteFormFamily, cuts: &[f64]) -> Result<DiscreteFormFamily> {
    if cuts.is_empty() {
        Ok(fam)
    } else {
        fam.with_breakpoints(cuts.to_vec())
    }
}

fn parse_coefficient(src: &str) -> Result<Coefficient> {
    let e = Expr::parse(src, &[Var::T, Var::X, Var::Y, Var::Z])?;
    Ok(Arc::new(move |t, x, y, z| e.eval([t, x, y, z])))
}

/// FEM data field in `x`.
fn fem_vector(space: &FemSpace1D, field: &FieldConfig, what: &str) -> Result<DVector<f64>> {
    match field {
        FieldConfig::Expr(s) => {
            let e = Expr::parse(s, &[Var::X])?;
            Ok(space.interpolate(|x| e.eval_tx(0.0, x)))
        }
        FieldConfig::Values(v) if v.len() == space.dim() => Ok(DVector::from_column_slice(v)),
        FieldConfig::Values(v) => {
            Err(Error::Config(format!("{what} has {} values, the space has {} unknowns", v.len(), space.dim())))
        }
        FieldConfig::Exprs(_) => Err(Error::Config(format!("{what} on a finite element space is one expression in x"))),
    }
}

fn component_exprs(field: &FieldConfig, n: usize, allowed: &[Var], what: &str) -> Result<Vec<Expr>> {
    let exprs = match field {
        FieldConfig::Expr(s) => vec![Expr::parse(s, allowed)?],
        FieldConfig::Values(v) => v.iter().map(|&x| Expr::Const(x)).collect(),
        FieldConfig::Exprs(v) => v.iter().map(|s| Expr::parse(s, allowed)).collect::<Result<_>>()?,
    };
    if exprs.len() != n {
        return Err(Error::Config(format!("{what} has {} components, expected {n}", exprs.len())));
    }
    Ok(exprs)
}

fn eval_components(exprs: &[Expr], t: f64) -> DVector<f64> {
    DVector::from_iterator(exprs.len(), exprs.iter().map(|e| e.eval_tx(t, 0.0)))
}

fn space_of(cfg: &ScenarioConfig) -> Result<FemSpace1D> {
    let s = cfg
        .space
        .as_ref()
        .ok_or_else(|| Error::Config("this form kind needs a 'space' section".into()))?;
    let bc = match s.bc {
        BcConfig::Dirichlet => BoundaryCondition::Dirichlet,
        BcConfig::Robin => BoundaryCondition::Robin,
    };
    fem::build_space(s.elements, bc)
}

fn check_problem(p: &ProblemConfig) -> Result<()> {
    if !(p.horizon > 0.0 && p.horizon.is_finite()) {
        return Err(Error::Config(format!("T must be positive, got {}", p.horizon)));
    }
    if !(p.dt > 0.0 && p.dt <= p.horizon) {
        return Err(Error::Config(format!("dt must lie in (0, T], got {}", p.dt)));
    }
    Ok(())
}

/// Builds the scenario; `base` is the directory relative paths refer to.
pub fn build(cfg: &ScenarioConfig, base: &Path) -> Result<Built> {
    check_problem(&cfg.problem)?;
    let horizon = cfg.problem.horizon;
    let mode = match cfg.problem.mode {
        ProblemMode::Wave => Mode::Wave,
        _ => Mode::Damped,
    };
    if cfg.problem.mode != ProblemMode::Quasilinear && cfg.problem.picard.is_some() {
        return Err(Error::Config("'picard' settings apply to quasilinear problems only".into()));
    }
    match (&cfg.forms, cfg.problem.mode) {
        (FormsConfig::Coefficient { a, b, ell, m }, ProblemMode::Quasilinear) => {
            build_quasilinear(cfg, parse_coefficient(a)?, parse_coefficient(b)?, *ell, *m)
        }
        (_, ProblemMode::Quasilinear) => Err(Error::Config("quasilinear problems need coefficient forms".into())),
        (FormsConfig::Robin { beta1, beta2 }, _) => build_robin(cfg, mode, beta1, beta2.as_ref()),
        (FormsConfig::Coefficient { a, b, ell, m }, _) => {
            let space = space_of(cfg)?;
            let grams = space.grams()?;
            let zero = DVector::zeros(space.dim());
            let path: PathFn = Arc::new(move |_| (zero.clone(), zero.clone()));
            let bounds = fem::coefficient_bounds(&space, *ell, *m)?;
            let fam = |c: &str| -> Result<DiscreteFormFamily> {
                let f = fem::assemble_coefficient_family(&space, parse_coefficient(c)?, path.clone(), *ell, horizon)?;
                let mdot = forms::check_piecewise_lipschitz(&f, &grams, &f.breakpoints(), 8)?.mdot;
                Ok(f.with_bounds(bounds.clone().with_mdot(mdot)))
            };
            let (fa, fb) = (fam(a)?, fam(b)?);
            if cfg.data.exact.is_some() {
                return Err(Error::Config("exact solutions are supported for robin and matrix-file forms".into()));
            }
            let (u0, u1, f) = fem_data(cfg, &space, None)?;
            let sc = Scenario { a: fa, b: Some(fb), grams, u0, u1, f, horizon, dt: cfg.problem.dt, mode };
            sc.validate()?;
            Ok(Built { config: cfg.clone(), problem: BuiltProblem::Linear(sc), space: Some(space), exact: None, robin: None })
        }
        (FormsConfig::MatrixFile { path }, _) => build_matrix(cfg, mode, &MatrixFile::load(&base.join(path))?),
    }
}

type FemData = (DVector<f64>, DVector<f64>, Forcing);

/// `u₀`, `u₁`, load for a FEM space; `manufactured` supplies defaults.
fn fem_data(cfg: &ScenarioConfig, space: &FemSpace1D, manufactured: Option<(&Arc<ExprField>, Forcing)>) -> Result<FemData> {
    let d = &cfg.data;
    let u0 = match (&d.u0, &manufactured) {
        (Some(v), _) => fem_vector(space, v, "u0")?,
        (None, Some((ex, _))) => space.interpolate(|x| ex.value(0.0, x)),
        (None, None) => DVector::zeros(space.dim()),
    };
    let u1 = match (&d.u1, &manufactured) {
        (Some(v), _) => fem_vector(space, v, "u1")?,
        (None, Some((ex, _))) => space.interpolate(|x| ex.dt(0.0, x)),
        (None, None) => DVector::zeros(space.dim()),
    };
    let f: Forcing = match (&d.f, manufactured) {
        (Some(FieldConfig::Expr(s)), _) => {
            let e = Expr::parse(s, &TX)?;
            let sp = space.clone();
            Arc::new(move |t| sp.load_vector(|x| e.eval_tx(t, x)))
        }
        (Some(FieldConfig::Values(v)), _) if v.len() == space.dim() => {
            let v = DVector::from_column_slice(v);
            Arc::new(move |_| v.clone())
        }
        (Some(_), _) => return Err(Error::Config("f on a finite element space is one expression in t and x".into())),
        (None, Some((_, f))) => f,
        (None, None) => Scenario::zero_forcing(space.dim()),
    };
    Ok((u0, u1, f))
}

fn build_robin(cfg: &ScenarioConfig, mode: Mode, beta1: &PiecewiseExpr, beta2: Option<&PiecewiseExpr>) -> Result<Built> {
    let horizon = cfg.problem.horizon;
    let space = space_of(cfg)?;
    if space.bc() != BoundaryCondition::Robin {
        return Err(Error::Config("robin forms need \"bc\": \"robin\"".into()));
    }
    let grams = space.grams()?;
    let p1 = Arc::new(Piecewise::parse(beta1, &TX, horizon)?);
    let a = certify_family(
        with_cuts(fem::assemble_robin_family(&space, p1.weight(), horizon)?, p1.breakpoints())?,
        &grams,
    )?;
    let (b, w2): (Option<DiscreteFormFamily>, BoundaryWeight) = match (mode, beta2) {
        (Mode::Damped, Some(cfg2)) => {
            let p2 = Arc::new(Piecewise::parse(cfg2, &TX, horizon)?);
            let fam = with_cuts(fem::assemble_robin_family(&space, p2.weight(), horizon)?, p2.breakpoints())?;
            (Some(certify_family(fam, &grams)?), p2.weight())
        }
        (Mode::Damped, None) => return Err(Error::Config("damped robin problems need beta2".into())),
        (Mode::Wave, Some(_)) => return Err(Error::Config("beta2 has no meaning for the wave equation".into())),
        (Mode::Wave, None) => (None, Arc::new(|_, _| 0.0)),
    };
    let exact = match &cfg.data.exact {
        Some(FieldConfig::Expr(s)) => Some(Arc::new(ExprField::new(Expr::parse(s, &TX)?, mode == Mode::Damped))),
        Some(_) => return Err(Error::Config("the exact solution on a finite element space is one expression".into())),
        None => None,
    };
    let manufactured = exact.as_ref().map(|ex| {
        let field: Arc<dyn ManufacturedField> = ex.clone();
        let load = fem::manufactured_robin_load(&space, field, p1.weight(), w2.clone());
        (ex, Arc::new(load) as Forcing)
    });
    let (u0, u1, f) = fem_data(cfg, &space, manufactured)?;
    let sc = Scenario { a, b, grams, u0, u1, f, horizon, dt: cfg.problem.dt, mode };
    sc.validate()?;
    Ok(Built {
        config: cfg.clone(),
        problem: BuiltProblem::Linear(sc),
        space: Some(space),
        exact: exact.map(Exact::Field),
        robin: Some(RobinWeights { beta1: p1.weight(), beta2: w2 }),
    })
}

fn profile_family(m: DMatrix<f64>, profile: Option<&PiecewiseExpr>, horizon: f64) -> Result<DiscreteFormFamily> {
    let symmetric = (&m - m.transpose()).amax() <= 1e-14 * m.amax().max(1.0);
    match profile {
        None => Ok(DiscreteFormFamily::constant(m, horizon).with_symmetric(symmetric)),
        Some(p) => {
            let p = Piecewise::parse(p, &[Var::T], horizon)?;
            let cuts = p.breakpoints().to_vec();
            let fam = DiscreteFormFamily::from_fn(m.nrows(), horizon, move |t| &m * p.eval(t, 0.0)).with_symmetric(symmetric);
            with_cuts(fam, &cuts)
        }
    }
}

fn build_matrix(cfg: &ScenarioConfig, mode: Mode, file: &MatrixFile) -> Result<Built> {
    if cfg.space.is_some() {
        return Err(Error::Config("matrix-file forms take no 'space' section".into()));
    }
    let horizon = cfg.problem.horizon;
    let mass = matrix(&file.mass_h, "mass_h")?;
    let n = mass.nrows();
    let grams = GramPair::new(mass, matrix(&file.gram_v, "gram_v")?)?;
    let am = matrix(&file.a, "a")?;
    if am.nrows() != n {
        return Err(Error::Config(format!("a is {}x{}, expected {n}x{n}", am.nrows(), am.nrows())));
    }
    let a = certify_family(profile_family(am, file.a_profile.as_ref(), horizon)?, &grams)?;
    let b = match mode {
        Mode::Damped => {
            let bm = matrix(file.b.as_ref().ok_or_else(|| Error::Config("damped problems need b".into()))?, "b")?;
            if bm.nrows() != n {
                return Err(Error::Config(format!("b is {}x{}, expected {n}x{n}", bm.nrows(), bm.nrows())));
            }
            Some(certify_family(profile_family(bm, file.b_profile.as_ref(), horizon)?, &grams)?)
        }
        Mode::Wave => None,
    };
    let d = &cfg.data;
    let exact = match &d.exact {
        Some(field) => {
            let u = component_exprs(field, n, &[Var::T], "exact")?;
            let ut: Vec<Expr> = u.iter().map(|e| e.derivative(Var::T)).collect();
            Some((u, ut))
        }
        None => None,
    };
    let vector = |field: &Option<FieldConfig>, what: &str, k: usize| -> Result<DVector<f64>> {
        match (field, &exact) {
            (Some(f), _) => Ok(eval_components(&component_exprs(f, n, &[], what)?, 0.0)),
            (None, Some(ex)) => Ok(eval_components(if k == 0 { &ex.0 } else { &ex.1 }, 0.0)),
            (None, None) => Ok(DVector::zeros(n)),
        }
    };
    let u0 = vector(&d.u0, "u0", 0)?;
    let u1 = vector(&d.u1, "u1", 1)?;
    let f: Forcing = match (&d.f, &exact) {
        (Some(field), _) => {
            let exprs = component_exprs(field, n, &[Var::T], "f")?;
            Arc::new(move |t| eval_components(&exprs, t))
        }
        (None, Some((u, ut))) => {
            let utt: Vec<Expr> = ut.iter().map(|e| e.derivative(Var::T)).collect();
            let (u, ut) = (u.clone(), ut.clone());
            let (fa, fb, mass) = (a.clone(), b.clone(), grams.mass_h.clone());
            Arc::new(move |t| {
                let mut r = &mass * eval_components(&utt, t) + fa.at(t).expect("matrix family") * eval_components(&u, t);
                if let Some(fb) = &fb {
                    r += fb.at(t).expect("matrix family") * eval_components(&ut, t);
                }
                r
            })
        }
        (None, None) => Scenario::zero_forcing(n),
    };
    let sc = Scenario { a, b, grams, u0, u1, f, horizon, dt: cfg.problem.dt, mode };
    sc.validate()?;
    Ok(Built {
        config: cfg.clone(),
        problem: BuiltProblem::Linear(sc),
        space: None,
        exact: exact.map(|(u, ut)| Exact::Components(u, ut)),
        robin: None,
    })
}

fn build_quasilinear(cfg: &ScenarioConfig, a: Coefficient, b: Coefficient, ell: f64, m: f64) -> Result<Built> {
    let space = space_of(cfg)?;
    if cfg.data.exact.is_some() {
        return Err(Error::Config("exact solutions are not supported for quasilinear problems".into()));
    }
    let (u0, u1, f) = fem_data(cfg, &space, None)?;
    let p = cfg.problem.picard.clone().unwrap_or_default();
    let q = QuasilinearScenario {
        space: space.clone(),
        a_coeff: a,
        b_coeff: b,
        ell,
        m_coef: m,
        u0,
        u1,
        f,
        horizon: cfg.problem.horizon,
        dt: cfg.problem.dt,
        theta: p.theta,
        max_iter: p.max_iter,
        tol: p.tol,
    };
    q.validate()?;
    Ok(Built { config: cfg.clone(), problem: BuiltProblem::Quasilinear(q), space: Some(space), exact: None, robin: None })
}

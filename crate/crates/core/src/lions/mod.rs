//! Space-time Petrov–Galerkin systems `E(u, v) = F(v)` for the damped and
//! undamped problems, with a numerical coercivity certificate.
//!
//! Trial functions are `C¹` piecewise polynomials of degree `p` in time
//! tensorized with the spatial basis; test functions use degree `p + 1` with
//! the mode's end constraint. The rectangular system is solved by least
//! squares in the norm dual to the test-space norm. Coercivity is certified on
//! the common span: degree `p` with the test constraint.
//!
//! Tensor index: `I = j·n_s + k` for time function `j` and space dof `k`.

pub mod basis;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forms::{self, DiscreteFormFamily, GramPair};
use crate::linalg::{self, SpdFactor};
use crate::norms::{self, LowerBoundConstants};
use crate::stepper::Forcing;

pub use basis::{uniform_grid, TimeConstraint, TimeSpace, TimeValues};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LionsMode {
    /// Damped problem with `V′` data; trial norm of `H¹(0,T;V)`.
    DampedVprime,
    /// Damped problem with `H` data and `e^{−λt}` weights.
    DampedH,
    /// Undamped problem with symmetric stiffness.
    Wave,
}

impl LionsMode {
    pub fn test_constraint(self) -> TimeConstraint {
        match self {
            LionsMode::DampedH => TimeConstraint::None,
            _ => TimeConstraint::ZeroFinalVelocity,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LionsMode::DampedVprime => "dampedVprime",
            LionsMode::DampedH => "dampedH",
            LionsMode::Wave => "wave",
        }
    }
}

/// Trial and test spaces of a space-time discretization.
#[derive(Clone, Debug)]
pub struct SpaceTimeBasis {
    pub mode: LionsMode,
    pub trial: TimeSpace,
    pub test: TimeSpace,
    pub n_space: usize,
}

impl SpaceTimeBasis {
    pub fn new(mode: LionsMode, grid: Vec<f64>, order: usize, n_space: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidArgument(format!("time order {order} cannot represent second derivatives")));
        }
        if n_space == 0 {
            return Err(Error::InvalidArgument("space dimension must be positive".into()));
        }
        Ok(Self {
            mode,
            trial: TimeSpace::new(grid.clone(), order, TimeConstraint::None)?,
            test: TimeSpace::new(grid, order + 1, mode.test_constraint())?,
            n_space,
        })
    }

    /// Trial degree with the test constraint.
    pub fn common(&self) -> Result<TimeSpace> {
        TimeSpace::new(self.trial.grid().to_vec(), self.trial.degree(), self.mode.test_constraint())
    }

    pub fn trial_dim(&self) -> usize {
        self.trial.dim() * self.n_space
    }

    pub fn test_dim(&self) -> usize {
        self.test.dim() * self.n_space
    }
}

/// Weight `λ`, initial-value penalty `η` and exponential shift `w`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LionsParams {
    pub lambda: f64,
    pub eta: f64,
    pub shift: f64,
}

#[derive(Clone)]
pub struct LionsData {
    pub u0: DVector<f64>,
    pub u1: DVector<f64>,
    pub f: Forcing,
}

impl LionsData {
    pub fn zero(n: usize) -> Self {
        Self { u0: DVector::zeros(n), u1: DVector::zeros(n), f: crate::stepper::Scenario::zero_forcing(n) }
    }
}

#[derive(Clone, Debug)]
pub struct SpaceTimeSystem {
    pub e: DMatrix<f64>,
    pub f: DVector<f64>,
    pub mode: LionsMode,
    pub params: LionsParams,
    pub basis: SpaceTimeBasis,
    /// Test-space norm Gram matrix defining the least-squares metric.
    pub test_gram: DMatrix<f64>,
}

/// Families entering the assembly after the exponential shift.
struct Families {
    a: DiscreteFormFamily,
    b: Option<DiscreteFormFamily>,
}

fn shifted_families(
    mode: LionsMode,
    a: &DiscreteFormFamily,
    b: Option<&DiscreteFormFamily>,
    grams: &GramPair,
    w: f64,
) -> Result<Families> {
    if mode == LionsMode::Wave {
        if !a.is_symmetric() {
            return Err(Error::NotSymmetric);
        }
        if w != 0.0 {
            return Err(Error::InvalidArgument("the undamped formulation has no shifted variant".into()));
        }
        return Ok(Families { a: a.clone(), b: None });
    }
    let b = b.ok_or_else(|| Error::InvalidArgument("damped modes need a damping family".into()))?;
    if w == 0.0 {
        return Ok(Families { a: a.clone(), b: Some(b.clone()) });
    }
    Ok(Families {
        a: a.plus_family(b, w)?.plus_matrix(&grams.mass_h, w * w),
        b: Some(b.plus_matrix(&grams.mass_h, 2.0 * w)),
    })
}

/// `E[block(i, j)] += c · χᵢ ψⱼ · mat`.
fn add_term(e: &mut DMatrix<f64>, c: f64, chi: &DVector<f64>, psi: &DVector<f64>, mat: &DMatrix<f64>) {
    let n = mat.nrows();
    for (i, &ci) in chi.iter().enumerate() {
        let ci = c * ci;
        if ci == 0.0 {
            continue;
        }
        for (j, &pj) in psi.iter().enumerate() {
            let s = ci * pj;
            if s != 0.0 {
                let mut blk = e.view_mut((i * n, j * n), (n, n));
                blk.zip_apply(mat, |x, m| *x += s * m);
            }
        }
    }
}

/// `F[block(i)] += c · χᵢ · vec`.
fn add_load(f: &mut DVector<f64>, c: f64, chi: &DVector<f64>, vec: &DVector<f64>) {
    let n = vec.len();
    for (i, &ci) in chi.iter().enumerate() {
        if ci != 0.0 {
            f.rows_mut(i * n, n).axpy(c * ci, vec, 1.0);
        }
    }
}

fn quad_points(trial: &TimeSpace, test: &TimeSpace) -> usize {
    trial.degree().max(test.degree()) + 3
}

/// Matrix of `E` for the given trial and test time spaces.
pub fn assemble_matrix(
    mode: LionsMode,
    trial: &TimeSpace,
    test: &TimeSpace,
    a: &DiscreteFormFamily,
    b: Option<&DiscreteFormFamily>,
    grams: &GramPair,
    params: LionsParams,
) -> Result<DMatrix<f64>> {
    let fams = shifted_families(mode, a, b, grams, params.shift)?;
    let n = grams.dim();
    if fams.a.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: fams.a.dim(), context: "space-time assembly" });
    }
    let (rows, cols) = (test.dim() * n, trial.dim() * n);
    let lambda = params.lambda;
    let mass = &grams.mass_h;
    let q = quad_points(trial, test);
    let elements: Vec<usize> = (0..trial.elements()).collect();
    // Per-element partial sums, added in element order.
    let parts: Vec<Result<DMatrix<f64>>> = elements
        .par_iter()
        .map(|&el| {
            let mut e = DMatrix::zeros(rows, cols);
            let (g0, g1) = (trial.grid()[el], trial.grid()[el + 1]);
            let (pts, wts) = linalg::gauss_on(g0, g1, q);
            for (t, w) in pts.into_iter().zip(wts) {
                let (x, y) = (test.eval_on(el, t), trial.eval_on(el, t));
                let am = fams.a.at(t)?;
                let ew = w * (-lambda * t).exp();
                match mode {
                    LionsMode::DampedVprime => {
                        let bm = fams.b.as_ref().expect("damped").at(t)?;
                        add_term(&mut e, -w, &x.d2, &y.d1, mass);
                        add_term(&mut e, w, &x.d1, &y.d1, &bm);
                        add_term(&mut e, w, &x.d1, &y.value, &am);
                    }
                    LionsMode::DampedH => {
                        let bm = fams.b.as_ref().expect("damped").at(t)?;
                        add_term(&mut e, ew, &x.d2, &y.d2, mass);
                        add_term(&mut e, ew, &x.d2, &y.d1, &bm);
                        add_term(&mut e, ew, &x.d2, &y.value, &am);
                    }
                    LionsMode::Wave => {
                        add_term(&mut e, -ew, &x.d2, &y.d1, mass);
                        add_term(&mut e, lambda * ew, &x.d1, &y.d1, mass);
                        add_term(&mut e, ew, &x.d1, &y.value, &am);
                    }
                }
            }
            Ok(e)
        })
        .collect();
    let mut e = DMatrix::zeros(rows, cols);
    for p in parts {
        e += p?;
    }
    let (x0, y0) = (test.eval_on(0, 0.0), trial.eval_on(0, 0.0));
    match mode {
        LionsMode::DampedVprime | LionsMode::Wave => {
            add_term(&mut e, 1.0, &x0.value, &y0.value, &fams.a.at(0.0)?);
        }
        LionsMode::DampedH => {
            add_term(&mut e, params.eta, &x0.d1, &y0.d1, &grams.gram_v);
            add_term(&mut e, params.eta, &x0.value, &y0.value, &grams.gram_v);
        }
    }
    Ok(e)
}

/// Right-hand side `F` on the test space.
pub fn assemble_load(
    mode: LionsMode,
    test: &TimeSpace,
    a: &DiscreteFormFamily,
    b: Option<&DiscreteFormFamily>,
    grams: &GramPair,
    data: &LionsData,
    params: LionsParams,
) -> Result<DVector<f64>> {
    let fams = shifted_families(mode, a, b, grams, params.shift)?;
    let n = grams.dim();
    for (v, ctx) in [(&data.u0, "initial value"), (&data.u1, "initial velocity")] {
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: v.len(), context: ctx });
        }
    }
    let w = params.shift;
    let u0 = data.u0.clone();
    let u1 = &data.u1 - &data.u0 * w;
    let lambda = params.lambda;
    let mut f = DVector::zeros(test.dim() * n);
    let q = test.degree() + 3;
    for (el, t, qw) in test.quadrature(q) {
        let x = test.eval_on(el, t);
        let ft = (data.f)(t) * (-w * t).exp();
        let ew = qw * (-lambda * t).exp();
        match mode {
            LionsMode::DampedVprime => add_load(&mut f, qw, &x.d1, &ft),
            LionsMode::DampedH => add_load(&mut f, ew, &x.d2, &ft),
            LionsMode::Wave => add_load(&mut f, ew, &x.d1, &ft),
        }
    }
    let x0 = test.eval_on(0, 0.0);
    match mode {
        LionsMode::DampedVprime | LionsMode::Wave => {
            add_load(&mut f, 1.0, &x0.value, &(fams.a.at(0.0)? * &u0));
            add_load(&mut f, 1.0, &x0.d1, &(&grams.mass_h * &u1));
        }
        LionsMode::DampedH => {
            add_load(&mut f, params.eta, &x0.d1, &(&grams.gram_v * &u1));
            add_load(&mut f, params.eta, &x0.value, &(&grams.gram_v * &u0));
        }
    }
    Ok(f)
}

fn kron(t: &DMatrix<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    t.kronecker(s)
}

/// Gram matrix of the mode's trial norm on a time space tensorized with the
/// spatial basis.
pub fn h_norm_gram(mode: LionsMode, space: &TimeSpace, grams: &GramPair) -> DMatrix<f64> {
    let nt = space.dim();
    let mut t00 = DMatrix::zeros(nt, nt);
    let mut t11 = DMatrix::zeros(nt, nt);
    let mut t22 = DMatrix::zeros(nt, nt);
    for (el, t, q) in space.quadrature(space.degree() + 2) {
        let x = space.eval_on(el, t);
        t00 += &x.value * x.value.transpose() * q;
        t11 += &x.d1 * x.d1.transpose() * q;
        t22 += &x.d2 * x.d2.transpose() * q;
    }
    let (g, m) = (&grams.gram_v, &grams.mass_h);
    let start = space.eval_on(0, 0.0);
    let end = space.eval_on(space.elements() - 1, space.horizon());
    let outer = |v: &DVector<f64>| v * v.transpose();
    match mode {
        LionsMode::DampedVprime => kron(&(t00 + t11), g),
        LionsMode::DampedH => {
            kron(&t22, m) + kron(&(t00 + t11 + outer(&start.value) + outer(&start.d1) + outer(&end.d1)), g)
        }
        LionsMode::Wave => kron(&(t00 + outer(&start.value) + outer(&end.value)), g) + kron(&t11, m),
    }
}

/// Full system on the basis.
pub fn assemble(
    basis: &SpaceTimeBasis,
    a: &DiscreteFormFamily,
    b: Option<&DiscreteFormFamily>,
    grams: &GramPair,
    data: &LionsData,
    params: LionsParams,
) -> Result<SpaceTimeSystem> {
    if grams.dim() != basis.n_space {
        return Err(Error::DimensionMismatch { expected: basis.n_space, found: grams.dim(), context: "space-time basis" });
    }
    let e = assemble_matrix(basis.mode, &basis.trial, &basis.test, a, b, grams, params)?;
    let f = assemble_load(basis.mode, &basis.test, a, b, grams, data, params)?;
    let test_gram = h_norm_gram(basis.mode, &basis.test, grams);
    Ok(SpaceTimeSystem { e, f, mode: basis.mode, params, basis: basis.clone(), test_gram })
}

/// Smallest generalized eigenvalue of `sym(E)` against `h_norm`.
pub fn coercivity_constant(e: &DMatrix<f64>, h_norm: &DMatrix<f64>) -> Result<f64> {
    if !e.is_square() || e.shape() != h_norm.shape() {
        return Err(Error::InvalidArgument("coercivity needs a square form on the norm's span".into()));
    }
    let hf = SpdFactor::new(h_norm, "space-time norm Gram matrix")?;
    Ok(linalg::gen_min_eigenvalue(e, &hf))
}

/// Coercivity constant of `E` on the common span of the basis.
pub fn certify(
    basis: &SpaceTimeBasis,
    a: &DiscreteFormFamily,
    b: Option<&DiscreteFormFamily>,
    grams: &GramPair,
    params: LionsParams,
) -> Result<f64> {
    let common = basis.common()?;
    let e = assemble_matrix(basis.mode, &common, &common, a, b, grams, params)?;
    coercivity_constant(&e, &h_norm_gram(basis.mode, &common, grams))
}

/// Outcome of the parameter search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LionsCertificate {
    pub params: LionsParams,
    pub constant: f64,
    pub doublings: usize,
}

impl LionsCertificate {
    pub fn is_certified(&self) -> bool {
        self.constant > 0.0
    }
}

pub const MAX_DOUBLINGS: usize = 20;

fn lipschitz_of(fam: &DiscreteFormFamily, grams: &GramPair) -> Result<f64> {
    if let Some(m) = fam.bounds.as_ref().and_then(|b| b.mdot) {
        return Ok(m);
    }
    Ok(forms::check_piecewise_lipschitz(fam, grams, &fam.breakpoints(), 8)?.mdot)
}

/// Starting `λ` from the sufficient conditions, `η = (λ + 1)M/2 + M`, then
/// doubling `λ` until the certificate is positive.
///
/// The damped `V′` formulation has no weight; its certificate is computed
/// once with `λ = η = 0`.
pub fn select_parameters(
    basis: &SpaceTimeBasis,
    a: &DiscreteFormFamily,
    b: Option<&DiscreteFormFamily>,
    grams: &GramPair,
    shift: f64,
) -> Result<LionsCertificate> {
    let base = LionsParams { lambda: 0.0, eta: 0.0, shift };
    if basis.mode == LionsMode::DampedVprime {
        let constant = certify(basis, a, b, grams, base)?;
        return Ok(LionsCertificate { params: base, constant, doublings: 0 });
    }
    let fams = shifted_families(basis.mode, a, b, grams, shift)?;
    let sample = fams.a.uniform_samples(10);
    let mut bounds = forms::estimate_bounds(&fams.a, grams, &sample)?;
    let mut mdot = lipschitz_of(&fams.a, grams)?;
    if let Some(bf) = &fams.b {
        bounds = bounds.combine(&forms::estimate_bounds(bf, grams, &sample)?);
        mdot = mdot.max(lipschitz_of(bf, grams)?);
    }
    if basis.mode == LionsMode::DampedH && !bounds.is_coercive() {
        return Err(Error::NotCertified("families must be coercive; apply a coercivity shift first"));
    }
    let consts = LowerBoundConstants { alpha: bounds.alpha, m: bounds.m, mdot };
    let mut lambda = norms::lower_bound_lambda(consts);
    let mut last = None;
    for doublings in 0..=MAX_DOUBLINGS {
        let params = LionsParams { lambda, eta: 0.5 * (lambda + 1.0) * bounds.m + bounds.m, shift };
        let constant = certify(basis, a, b, grams, params)?;
        let cert = LionsCertificate { params, constant, doublings };
        if constant > 0.0 {
            return Ok(cert);
        }
        last = Some(cert);
        lambda *= 2.0;
    }
    Ok(last.expect("at least one attempt"))
}

/// Least-squares solution of a space-time system.
#[derive(Clone, Debug)]
pub struct SpaceTimeSolution {
    pub coeffs: DVector<f64>,
    /// `‖E U − F‖` in the dual test norm.
    pub residual: f64,
    pub smallest_singular_value: f64,
    trial: TimeSpace,
    n_space: usize,
    shift: f64,
}

/// Minimize `‖E U − F‖` in the norm dual to the test-space norm.
pub fn solve(system: &SpaceTimeSystem) -> Result<SpaceTimeSolution> {
    let l = SpdFactor::new(&system.test_gram, "test-space norm Gram matrix")?;
    let ew = l.lower().solve_lower_triangular(&system.e).expect("nonzero diagonal");
    let fw = l.whiten_vec(&system.f);
    let svd = ew.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let smin = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-10 * smax;
    if !(smin > tol) {
        return Err(Error::RankDeficient { smallest: smin, tolerance: tol });
    }
    let coeffs = svd.solve(&fw, tol).map_err(|e| Error::Singular(e.to_string()))?;
    let residual = (&ew * &coeffs - &fw).norm();
    Ok(SpaceTimeSolution {
        coeffs,
        residual,
        smallest_singular_value: smin,
        trial: system.basis.trial.clone(),
        n_space: system.basis.n_space,
        shift: system.params.shift,
    })
}

impl SpaceTimeSolution {
    /// `(u, u̇, ü)` at `t`, with the exponential shift undone.
    pub fn eval(&self, t: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let x = self.trial.eval(t);
        let n = self.n_space;
        let combine = |c: &DVector<f64>| {
            let mut out = DVector::zeros(n);
            for (j, &cj) in c.iter().enumerate() {
                if cj != 0.0 {
                    out.axpy(cj, &self.coeffs.rows(j * n, n), 1.0);
                }
            }
            out
        };
        let (u, ud, udd) = (combine(&x.value), combine(&x.d1), combine(&x.d2));
        let w = self.shift;
        if w == 0.0 {
            return (u, ud, udd);
        }
        let e = (w * t).exp();
        let udd = (&udd + &ud * (2.0 * w) + &u * (w * w)) * e;
        let ud = (&ud + &u * w) * e;
        (u * e, ud, udd)
    }
}

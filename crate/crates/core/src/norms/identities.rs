//! Integrated energy identities and inequalities evaluated on polynomial
//! paths with composite Gauss quadrature.
//!
//! Equalities return `(lhs − rhs) / scale`, where `scale` is the sum of the
//! magnitudes of all terms. Inequalities return the slack
//! `larger side − smaller side`, nonnegative when the inequality holds.
//! Form derivatives come from [`forms::derivative_form_default`], which is
//! exact up to rounding for families that are quadratic in `t`.

use nalgebra::{DMatrix, DVector};

use super::paths::PolyPath;
use crate::error::{Error, Result};
use crate::forms::{self, DiscreteFormFamily, GramPair};
use crate::linalg;

/// Time window `[start, end]`; weights are `e^{−λ(t − start)}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(end > start) {
            return Err(Error::InvalidArgument(format!("empty window [{start}, {end}]")));
        }
        Ok(Self { start, end })
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    fn rule(&self) -> (Vec<f64>, Vec<f64>) {
        linalg::composite_gauss(self.start, self.end, 8, 10)
    }

    fn weight(&self, lambda: f64, t: f64) -> f64 {
        (-lambda * (t - self.start)).exp()
    }
}

/// Whether a check is an equality residual or an inequality slack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckKind {
    Equality,
    Slack,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub kind: CheckKind,
}

impl Check {
    /// `|value| ≤ tol` for equalities, `value ≥ −tol` for slacks.
    pub fn passes(&self, tol: f64) -> bool {
        match self.kind {
            CheckKind::Equality => self.value.abs() <= tol,
            CheckKind::Slack => self.value >= -tol,
        }
    }
}

/// `yᵀ A x`, i.e. `a(t, x, y)`.
fn form(a: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    y.dot(&(a * x))
}

/// Family value at a window end; interior breakpoints are approached from
/// inside the window.
fn at_edge(fam: &DiscreteFormFamily, t: f64, inward: f64) -> Result<DMatrix<f64>> {
    let tol = 1e-14 * fam.horizon();
    let on_break = fam.interior_breakpoints().iter().any(|bp| (bp - t).abs() <= tol);
    let t = if on_break { t + inward * 1e-12 * fam.horizon() } else { t };
    fam.at(t.clamp(0.0, fam.horizon()))
}

fn relative(lhs: f64, rhs: f64, terms: &[f64]) -> f64 {
    let scale: f64 = terms.iter().map(|x| x.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    (lhs - rhs) / scale
}

fn require_symmetric(fam: &DiscreteFormFamily) -> Result<()> {
    if fam.is_symmetric() {
        Ok(())
    } else {
        Err(Error::NotSymmetric)
    }
}

/// `⟨v, u⟩(end) − ⟨v, u⟩(start) = ∫ ⟨v̇, u⟩ + ⟨v, u̇⟩` for a functional-valued `v`.
pub fn pairing_product_rule(v: &PolyPath, u: &PolyPath, w: Window) -> Result<f64> {
    check_dims(v, u.dim())?;
    let (vd, ud) = (v.derivative(), u.derivative());
    let lhs_terms = [v.at(w.end).dot(&u.at(w.end)), v.at(w.start).dot(&u.at(w.start))];
    let (mut i1, mut i2) = (0.0, 0.0);
    let (pts, wts) = w.rule();
    for (t, q) in pts.iter().zip(&wts) {
        i1 += q * vd.at(*t).dot(&u.at(*t));
        i2 += q * v.at(*t).dot(&ud.at(*t));
    }
    Ok(relative(lhs_terms[0] - lhs_terms[1], i1 + i2, &[lhs_terms[0], lhs_terms[1], i1, i2]))
}

/// `‖u(end)‖²_H − ‖u(start)‖²_H = 2∫ (u̇ | u)_H`.
pub fn h_norm_derivative(u: &PolyPath, grams: &GramPair, w: Window) -> Result<f64> {
    check_dims(u, grams.dim())?;
    let m = &grams.mass_h;
    let ud = u.derivative();
    let (a, b) = (form(m, &u.at(w.end), &u.at(w.end)), form(m, &u.at(w.start), &u.at(w.start)));
    let (pts, wts) = w.rule();
    let integral: f64 = pts.iter().zip(&wts).map(|(t, q)| 2.0 * q * form(m, &ud.at(*t), &u.at(*t))).sum();
    Ok(relative(a - b, integral, &[a, b, integral]))
}

/// `a(end, u, v) − a(start, u, v) = ∫ ȧ(u, v) + a(u̇, v) + a(u, v̇)`.
pub fn form_product_rule(fam: &DiscreteFormFamily, u: &PolyPath, v: &PolyPath, w: Window) -> Result<f64> {
    check_dims(u, fam.dim())?;
    check_dims(v, fam.dim())?;
    let (ud, vd) = (u.derivative(), v.derivative());
    let end = form(&at_edge(fam, w.end, -1.0)?, &u.at(w.end), &v.at(w.end));
    let start = form(&at_edge(fam, w.start, 1.0)?, &u.at(w.start), &v.at(w.start));
    let (pts, wts) = w.rule();
    let (mut i1, mut i2, mut i3) = (0.0, 0.0, 0.0);
    for (t, q) in pts.iter().zip(&wts) {
        let a = fam.at(*t)?;
        let adot = forms::derivative_form_default(fam, *t)?;
        let (ut, vt) = (u.at(*t), v.at(*t));
        i1 += q * form(&adot, &ut, &vt);
        i2 += q * form(&a, &ud.at(*t), &vt);
        i3 += q * form(&a, &ut, &vd.at(*t));
    }
    Ok(relative(end - start, i1 + i2 + i3, &[end, start, i1, i2, i3]))
}

/// Weighted damping identity:
/// `∫ e b(v̇, v̈) = λ/2 ∫ e b(v̇, v̇) − ½ ∫ e ḃ(v̇, v̇) + ½ e_end b(end, v̇, v̇) − ½ b(start, v̇, v̇)`.
pub fn damping_energy(b: &DiscreteFormFamily, v: &PolyPath, lambda: f64, w: Window) -> Result<f64> {
    require_symmetric(b)?;
    check_dims(v, b.dim())?;
    let vd = v.derivative();
    let vdd = vd.derivative();
    let (pts, wts) = w.rule();
    let (mut lhs, mut i1, mut i2) = (0.0, 0.0, 0.0);
    for (t, q) in pts.iter().zip(&wts) {
        let e = q * w.weight(lambda, *t);
        let bm = b.at(*t)?;
        let bdot = forms::derivative_form_default(b, *t)?;
        let x = vd.at(*t);
        lhs += e * form(&bm, &x, &vdd.at(*t));
        i1 += e * form(&bm, &x, &x);
        i2 += e * form(&bdot, &x, &x);
    }
    let x1 = vd.at(w.end);
    let x0 = vd.at(w.start);
    let end = 0.5 * w.weight(lambda, w.end) * form(&at_edge(b, w.end, -1.0)?, &x1, &x1);
    let start = 0.5 * form(&at_edge(b, w.start, 1.0)?, &x0, &x0);
    let rhs = 0.5 * lambda * i1 - 0.5 * i2 + end - start;
    Ok(relative(lhs, rhs, &[lhs, 0.5 * lambda * i1, 0.5 * i2, end, start]))
}

/// Weighted stiffness identity for `∫ e a(v, v̈)`, obtained from the product
/// rule applied to `λ/2 e a(v, v) + e a(v, v̇)`.
pub fn stiffness_energy(a: &DiscreteFormFamily, v: &PolyPath, lambda: f64, w: Window) -> Result<f64> {
    require_symmetric(a)?;
    check_dims(v, a.dim())?;
    let vd = v.derivative();
    let vdd = vd.derivative();
    let (pts, wts) = w.rule();
    let (mut lhs, mut i_aa, mut i_adot, mut i_adot_mixed, mut i_vel) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (t, q) in pts.iter().zip(&wts) {
        let e = q * w.weight(lambda, *t);
        let am = a.at(*t)?;
        let adot = forms::derivative_form_default(a, *t)?;
        let (x, xd) = (v.at(*t), vd.at(*t));
        lhs += e * form(&am, &x, &vdd.at(*t));
        i_aa += e * form(&am, &x, &x);
        i_adot += e * form(&adot, &x, &x);
        i_adot_mixed += e * form(&adot, &x, &xd);
        i_vel += e * form(&am, &xd, &xd);
    }
    let (a1, a0) = (at_edge(a, w.end, -1.0)?, at_edge(a, w.start, 1.0)?);
    let e1 = w.weight(lambda, w.end);
    let (x1, xd1, x0, xd0) = (v.at(w.end), vd.at(w.end), v.at(w.start), vd.at(w.start));
    let terms = [
        0.5 * lambda * e1 * form(&a1, &x1, &x1),
        -0.5 * lambda * form(&a0, &x0, &x0),
        e1 * form(&a1, &x1, &xd1),
        -form(&a0, &x0, &xd0),
        0.5 * lambda * lambda * i_aa,
        -0.5 * lambda * i_adot,
        -i_adot_mixed,
        -i_vel,
    ];
    let rhs: f64 = terms.iter().sum();
    let mut all = terms.to_vec();
    all.push(lhs);
    Ok(relative(lhs, rhs, &all))
}

/// `∫ e (v̈ | v̇)_H = λ/2 ∫ e ‖v̇‖²_H − ½‖v̇(start)‖²_H` for paths with
/// `v̇(end) = 0`.
pub fn velocity_energy_weighted(v: &PolyPath, grams: &GramPair, lambda: f64, w: Window) -> Result<f64> {
    check_dims(v, grams.dim())?;
    let vd = v.derivative();
    let vdd = vd.derivative();
    let scale = vd.at(w.start).norm().max(v.at(w.start).norm()).max(1.0);
    if vd.at(w.end).norm() > 1e-10 * scale {
        return Err(Error::ConstraintViolated("velocity must vanish at the end of the window"));
    }
    let m = &grams.mass_h;
    let (pts, wts) = w.rule();
    let (mut lhs, mut i1) = (0.0, 0.0);
    for (t, q) in pts.iter().zip(&wts) {
        let e = q * w.weight(lambda, *t);
        let xd = vd.at(*t);
        lhs += e * form(m, &xd, &vdd.at(*t));
        i1 += e * form(m, &xd, &xd);
    }
    let x0 = vd.at(w.start);
    let start = 0.5 * form(m, &x0, &x0);
    Ok(relative(lhs, 0.5 * lambda * i1 - start, &[lhs, 0.5 * lambda * i1, start]))
}

/// `∫ e a(v, v̇) = λ/2 ∫ e a(v, v) − ½ ∫ e ȧ(v, v) + ½ e_end a(end, v, v) − ½ a(start, v, v)`.
pub fn wave_stiffness_energy(a: &DiscreteFormFamily, v: &PolyPath, lambda: f64, w: Window) -> Result<f64> {
    require_symmetric(a)?;
    check_dims(v, a.dim())?;
    let vd = v.derivative();
    let (pts, wts) = w.rule();
    let (mut lhs, mut i1, mut i2) = (0.0, 0.0, 0.0);
    for (t, q) in pts.iter().zip(&wts) {
        let e = q * w.weight(lambda, *t);
        let am = a.at(*t)?;
        let adot = forms::derivative_form_default(a, *t)?;
        let x = v.at(*t);
        lhs += e * form(&am, &x, &vd.at(*t));
        i1 += e * form(&am, &x, &x);
        i2 += e * form(&adot, &x, &x);
    }
    let (x1, x0) = (v.at(w.end), v.at(w.start));
    let end = 0.5 * w.weight(lambda, w.end) * form(&at_edge(a, w.end, -1.0)?, &x1, &x1);
    let start = 0.5 * form(&at_edge(a, w.start, 1.0)?, &x0, &x0);
    let rhs = 0.5 * lambda * i1 - 0.5 * i2 + end - start;
    Ok(relative(lhs, rhs, &[lhs, 0.5 * lambda * i1, 0.5 * i2, end, start]))
}

/// Slack of `‖v‖_{L²(V)} ≤ L ‖v̇‖_{L²(V)} + √L ‖v(start)‖_V` with `L` the
/// window length.
pub fn poincare_in_time(v: &PolyPath, grams: &GramPair, w: Window) -> Result<f64> {
    check_dims(v, grams.dim())?;
    let g = &grams.gram_v;
    let vd = v.derivative();
    let (pts, wts) = w.rule();
    let (mut nv, mut nvd) = (0.0, 0.0);
    for (t, q) in pts.iter().zip(&wts) {
        let (x, xd) = (v.at(*t), vd.at(*t));
        nv += q * form(g, &x, &x);
        nvd += q * form(g, &xd, &xd);
    }
    let l = w.length();
    Ok(l * nvd.sqrt() + l.sqrt() * grams.norm_v(&v.at(w.start)) - nv.sqrt())
}

/// Constants entering the lower bound for the weighted damped energy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowerBoundConstants {
    /// Common coercivity constant of `a` and `b`.
    pub alpha: f64,
    /// Common V-bound of `a` and `b`.
    pub m: f64,
    /// Common V-bound of `ȧ` and `ḃ`.
    pub mdot: f64,
}

impl LowerBoundConstants {
    /// Whether `λ` satisfies `αλ > 2Ṁ + 2M`, `λ(αλ − Ṁ) > Ṁ²` and `λα > Ṁ²/ε`.
    pub fn admits(&self, lambda: f64, eps: f64) -> bool {
        let LowerBoundConstants { alpha, m, mdot } = *self;
        alpha * lambda - 2.0 * mdot - 2.0 * m > 0.0
            && lambda * (alpha * lambda - mdot) - mdot * mdot > 0.0
            && lambda * alpha - mdot * mdot / eps > 0.0
    }
}

/// Slack of the lower bound for `∫ e b(v̇, v̈) + ∫ e a(v, v̈)` in terms of the
/// weighted `V`-norms of `v` and `v̇`, the end values and the start values.
#[allow(clippy::too_many_arguments)]
pub fn damped_h_lower_bound(
    a: &DiscreteFormFamily,
    b: &DiscreteFormFamily,
    grams: &GramPair,
    v: &PolyPath,
    lambda: f64,
    consts: LowerBoundConstants,
    eps: f64,
    w: Window,
) -> Result<f64> {
    check_dims(v, a.dim())?;
    check_dims(v, b.dim())?;
    let LowerBoundConstants { alpha, m, mdot } = consts;
    let g = &grams.gram_v;
    let vd = v.derivative();
    let vdd = vd.derivative();
    let (pts, wts) = w.rule();
    let (mut lhs, mut nv, mut nvd) = (0.0, 0.0, 0.0);
    for (t, q) in pts.iter().zip(&wts) {
        let e = q * w.weight(lambda, *t);
        let (x, xd, xdd) = (v.at(*t), vd.at(*t), vdd.at(*t));
        lhs += e * (form(&b.at(*t)?, &xd, &xdd) + form(&a.at(*t)?, &x, &xdd));
        nv += e * form(g, &x, &x);
        nvd += e * form(g, &xd, &xd);
    }
    let e1 = w.weight(lambda, w.end);
    let (x1, xd1, x0, xd0) = (v.at(w.end), vd.at(w.end), v.at(w.start), vd.at(w.start));
    let (a0, b0) = (at_edge(a, w.start, 1.0)?, at_edge(b, w.start, 1.0)?);
    let rhs = 0.5 * (alpha * lambda - 2.0 * mdot - 2.0 * m) * nvd
        + (0.5 * lambda * (alpha * lambda - mdot) - 0.5 * mdot * mdot) * nv
        + 0.5 * e1 * ((alpha - eps) * form(g, &xd1, &xd1) + (lambda * alpha - mdot * mdot / eps) * form(g, &x1, &x1))
        - 0.5 * form(&b0, &xd0, &xd0)
        - 0.5 * lambda * form(&a0, &x0, &x0)
        - form(&a0, &x0, &xd0);
    Ok(lhs - rhs)
}

fn check_dims(p: &PolyPath, n: usize) -> Result<()> {
    if p.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: p.dim(), context: "test path" });
    }
    Ok(())
}

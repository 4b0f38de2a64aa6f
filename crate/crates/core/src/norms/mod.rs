//! Maximal-regularity norms of trajectories, dual norms, energy identities
//! and the explicit small-time a priori bound.

pub mod identities;
pub mod paths;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::forms::{DiscreteFormFamily, FormBounds, GramPair};
use crate::linalg;
use crate::stepper::{Mode, Scenario, Trajectory};

pub use identities::{Check, CheckKind, LowerBoundConstants, Window};
pub use paths::PolyPath;

/// `‖f‖_{V′} = sqrt(fᵀ G_V⁻¹ f)`.
pub fn dual_norm(f: &DVector<f64>, grams: &GramPair) -> Result<f64> {
    if f.len() != grams.dim() {
        return Err(Error::DimensionMismatch { expected: grams.dim(), found: f.len(), context: "dual_norm" });
    }
    Ok(grams.v_factor().inverse_quadratic(f).sqrt())
}

/// `‖f‖_H` of a functional, i.e. the H-norm of its Riesz representative.
pub fn h_dual_norm(f: &DVector<f64>, grams: &GramPair) -> f64 {
    grams.h_factor().inverse_quadratic(f).sqrt()
}

/// Maximal-regularity space of a solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MrSpace {
    /// `L²(V) ∩ H¹(V) ∩ H²(V′)`: damped problems with `V′` data.
    VVDual,
    /// `H¹(V) ∩ H²(H)`: damped problems with `H` data.
    VVH,
    /// `L²(V) ∩ H¹(H) ∩ H²(V′)`: wave problems.
    VHDual,
}

impl MrSpace {
    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Damped => MrSpace::VVDual,
            Mode::Wave => MrSpace::VHDual,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MrReport {
    pub space: MrSpace,
    pub l2v_u: f64,
    pub l2v_udot: Option<f64>,
    pub l2h_udot: f64,
    pub l2vp_uddot: f64,
    pub l2h_uddot: Option<f64>,
    pub mr_norm: f64,
    pub data_norm: Option<f64>,
    pub ratio: Option<f64>,
    pub identities: BTreeMap<String, f64>,
}

impl MrReport {
    /// Named component; components outside the space are an error.
    pub fn component(&self, name: &str) -> Result<f64> {
        match name {
            "l2V_u" => Ok(self.l2v_u),
            "l2V_udot" => self.l2v_udot.ok_or(Error::SpaceMismatch("l2V_udot")),
            "l2H_udot" => Ok(self.l2h_udot),
            "l2Vp_uddot" => Ok(self.l2vp_uddot),
            "l2H_uddot" => self.l2h_uddot.ok_or(Error::SpaceMismatch("l2H_uddot")),
            _ => Err(Error::InvalidArgument(format!("unknown component {name}"))),
        }
    }

    /// Attach the data norm; the ratio is set only for positive data.
    pub fn with_data_norm(mut self, data: f64) -> Self {
        self.data_norm = Some(data);
        self.ratio = (data > 0.0).then(|| self.mr_norm / data);
        self
    }

    /// `(name, value)` rows in a fixed order.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![("l2V_u".to_string(), self.l2v_u)];
        if let Some(x) = self.l2v_udot {
            rows.push(("l2V_udot".into(), x));
        }
        rows.push(("l2H_udot".into(), self.l2h_udot));
        rows.push(("l2Vp_uddot".into(), self.l2vp_uddot));
        if let Some(x) = self.l2h_uddot {
            rows.push(("l2H_uddot".into(), x));
        }
        rows.push(("mrNorm".into(), self.mr_norm));
        if let Some(x) = self.data_norm {
            rows.push(("dataNorm".into(), x));
        }
        if let Some(x) = self.ratio {
            rows.push(("ratio".into(), x));
        }
        rows
    }
}

fn l2_in_time(times: &[f64], sq: impl Fn(usize) -> f64) -> f64 {
    let vals: Vec<f64> = (0..times.len()).map(sq).collect();
    linalg::trapezoid(times, &vals).max(0.0).sqrt()
}

fn check_trajectory(traj: &Trajectory, n: usize) -> Result<()> {
    let len = traj.times.len();
    if len < 2 || traj.u.len() != len || traj.udot.len() != len || traj.uddot.len() != len {
        return Err(Error::InvalidArgument("trajectory arrays have inconsistent lengths".into()));
    }
    if let Some(x) = traj.u.iter().chain(&traj.udot).chain(&traj.uddot).find(|x| x.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, found: x.len(), context: "trajectory" });
    }
    Ok(())
}

/// Time integrals by the trapezoid rule on the trajectory grid.
pub fn mr_norms(traj: &Trajectory, grams: &GramPair, space: MrSpace) -> Result<MrReport> {
    check_trajectory(traj, grams.dim())?;
    let (g, m) = (&grams.gram_v, &grams.mass_h);
    let quad = |mat: &DMatrix<f64>, x: &DVector<f64>| x.dot(&(mat * x));
    let t = &traj.times;
    let l2v_u = l2_in_time(t, |k| quad(g, &traj.u[k]));
    let l2v_udot = l2_in_time(t, |k| quad(g, &traj.udot[k]));
    let l2h_udot = l2_in_time(t, |k| quad(m, &traj.udot[k]));
    // Stored ü are H-Riesz coefficients; the functional is M_H ü.
    let vf = grams.v_factor();
    let l2vp_uddot = l2_in_time(t, |k| vf.inverse_quadratic(&(m * &traj.uddot[k])));
    let l2h_uddot = l2_in_time(t, |k| quad(m, &traj.uddot[k]));
    let (v_udot, h_uddot, mr) = match space {
        MrSpace::VVDual => (Some(l2v_udot), None, l2v_u.powi(2) + l2v_udot.powi(2) + l2vp_uddot.powi(2)),
        MrSpace::VVH => (Some(l2v_udot), Some(l2h_uddot), l2v_u.powi(2) + l2v_udot.powi(2) + l2h_uddot.powi(2)),
        MrSpace::VHDual => (None, None, l2v_u.powi(2) + l2h_udot.powi(2) + l2vp_uddot.powi(2)),
    };
    Ok(MrReport {
        space,
        l2v_u,
        l2v_udot: v_udot,
        l2h_udot,
        l2vp_uddot,
        l2h_uddot: h_uddot,
        mr_norm: mr.sqrt(),
        data_norm: None,
        ratio: None,
        identities: BTreeMap::new(),
    })
}

/// `‖u₀‖_V + ‖u₁‖ + ‖f‖_{L²}` with the norms prescribed by the space: `u₁` in
/// `V` and `f` in `H` for `VVH`, otherwise `u₁` in `H` and `f` in `V′`.
pub fn data_norm(space: MrSpace, sc: &Scenario, times: &[f64]) -> Result<f64> {
    let grams = &sc.grams;
    let u0 = grams.norm_v(&sc.u0);
    let forcing: Vec<DVector<f64>> = times.iter().map(|&t| (sc.f)(t)).collect();
    Ok(match space {
        MrSpace::VVH => u0 + grams.norm_v(&sc.u1) + l2_in_time(times, |k| h_dual_norm(&forcing[k], grams).powi(2)),
        _ => {
            let vf = grams.v_factor();
            u0 + grams.norm_h(&sc.u1) + l2_in_time(times, |k| vf.inverse_quadratic(&forcing[k]))
        }
    })
}

/// Outcome of the a priori check.
#[derive(Clone, Debug, PartialEq)]
pub struct AprioriCheck {
    pub ratio: f64,
    /// Explicit small-time constant, when the smallness condition holds.
    pub explicit_constant: Option<f64>,
    pub bound_ok: Option<bool>,
}

/// Explicit constant for coercive `a`, `b` with common constants `α`, `M`,
/// available when `c = α/2 − T²(2M² + α)/α > 0`:
/// `C² = κ(1 + 3M²)(2 + 1/c) + 3` with `κ = max(1/α, ½, T(2M² + α)/α)`.
pub fn explicit_small_time_constant(alpha: f64, m: f64, horizon: f64) -> Option<f64> {
    let k = (2.0 * m * m + alpha) / alpha;
    let c = 0.5 * alpha - horizon * horizon * k;
    if !(c > 0.0) {
        return None;
    }
    let kappa = (1.0 / alpha).max(0.5).max(horizon * k);
    Some((kappa * (1.0 + 3.0 * m * m) * (2.0 + 1.0 / c) + 3.0).sqrt())
}

/// `‖u‖_MR / (‖u₀‖_V + ‖u₁‖_H + ‖f‖_{L²(V′)})` with the explicit bound when
/// available (damped, coercive families).
pub fn apriori_check(traj: &Trajectory, sc: &Scenario) -> Result<AprioriCheck> {
    let space = MrSpace::for_mode(sc.mode);
    let data = data_norm(space, sc, &traj.times)?;
    if !(data > 0.0) {
        return Err(Error::RatioUndefined);
    }
    let report = mr_norms(traj, &sc.grams, space)?;
    let ratio = report.mr_norm / data;
    let bounds = match (sc.mode, &sc.a.bounds, sc.b.as_ref().and_then(|b| b.bounds.as_ref())) {
        (Mode::Damped, Some(a), Some(b)) => Some(a.combine(b)),
        _ => None,
    };
    let explicit = bounds
        .filter(FormBounds::is_coercive)
        .and_then(|b| explicit_small_time_constant(b.alpha, b.m, sc.horizon));
    Ok(AprioriCheck { ratio, explicit_constant: explicit, bound_ok: explicit.map(|c| ratio <= c) })
}

/// Discrete energy balance of an implicit-midpoint trajectory, relative to
/// the total magnitude of its terms.
///
/// Per step: `½‖ṽ₁‖²_H − ½‖ṽ₀‖²_H + Δt b(ṽ½, ṽ½) + [a-term] − Δt⟨F, ṽ½⟩ = 0`,
/// evaluated for the shifted variables `ũ = e^{−wt}u` with the shift stored
/// in the trajectory. The a-term is `½(a(ũ₁, ũ₁) − a(ũ₀, ũ₀))` at the
/// midpoint for symmetric `a`, otherwise `Δt a(ũ½, ṽ½)`.
pub fn energy_balance(traj: &Trajectory, sc: &Scenario) -> Result<f64> {
    check_trajectory(traj, sc.dim())?;
    let w = traj.meta.shift;
    let m = &sc.grams.mass_h;
    let n = sc.dim();
    let shifted = |k: usize| {
        let e = (-w * traj.times[k]).exp();
        (&traj.u[k] * e, (&traj.udot[k] - &traj.u[k] * w) * e)
    };
    let b_at = |t: f64| -> Result<DMatrix<f64>> {
        match (&sc.b, sc.mode) {
            (Some(b), Mode::Damped) => b.at(t),
            _ => Ok(DMatrix::zeros(n, n)),
        }
    };
    let symmetric = sc.a.is_symmetric();
    let (mut res, mut scale) = (0.0, 0.0);
    let (mut u0, mut v0) = shifted(0);
    for k in 0..traj.times.len() - 1 {
        let (u1, v1) = shifted(k + 1);
        let (t0, t1) = (traj.times[k], traj.times[k + 1]);
        let dt = t1 - t0;
        let tm = 0.5 * (t0 + t1);
        let b = b_at(tm)?;
        let a = sc.a.at(tm)? + &b * w + m * (w * w);
        let b = b + m * (2.0 * w);
        let f = (sc.f)(tm) * (-w * tm).exp();
        let vh = (&v0 + &v1) * 0.5;
        let uh = (&u0 + &u1) * 0.5;
        let kinetic = 0.5 * (v1.dot(&(m * &v1)) - v0.dot(&(m * &v0)));
        let damping = dt * vh.dot(&(&b * &vh));
        let stiff = if symmetric {
            0.5 * (u1.dot(&(&a * &u1)) - u0.dot(&(&a * &u0)))
        } else {
            dt * vh.dot(&(&a * &uh))
        };
        let work = dt * f.dot(&vh);
        res += (kinetic + damping + stiff - work).abs();
        scale += kinetic.abs() + damping.abs() + stiff.abs() + work.abs();
        u0 = u1;
        v0 = v1;
    }
    Ok(if scale > 0.0 { res / scale } else { 0.0 })
}

/// Deterministic vector `xᵢ = sin(1 + 0.7 i + 1.3 k)`.
fn probe(n: usize, k: usize) -> DVector<f64> {
    DVector::from_fn(n, |i, _| (1.0 + 0.7 * i as f64 + 1.3 * k as f64).sin())
}

/// Cubic path with deterministic coefficients, centered on the window.
pub fn probe_path(n: usize, seed: usize, w: Window) -> PolyPath {
    let c = 0.5 * (w.start + w.end);
    let s = 1.0 / w.length().max(1e-12);
    // p(t) = q((t − c)·s) expanded in powers of t.
    let q: Vec<DVector<f64>> = (0..4).map(|k| probe(n, 4 * seed + k) * 0.5f64.powi(k as i32)).collect();
    let mut coeffs = vec![DVector::zeros(n); 4];
    for (k, qk) in q.iter().enumerate() {
        // ((t − c)s)^k = s^k Σ_j C(k,j) t^j (−c)^{k−j}
        for j in 0..=k {
            let binom = (1..=j).fold(1.0, |acc, i| acc * (k + 1 - i) as f64 / i as f64);
            coeffs[j] += qk * (s.powi(k as i32) * binom * (-c).powi((k - j) as i32));
        }
    }
    PolyPath::new(coeffs).expect("nonempty")
}

/// Identity and inequality checks on deterministic cubic paths over `w`.
///
/// Families must be Lipschitz on `w`. Symmetric-only identities are skipped
/// for non-symmetric families; the damped lower bound is included when
/// `consts` is given and admits `λ_lb` with `ε = α/2`.
pub fn path_suite(
    a: &DiscreteFormFamily,
    b: Option<&DiscreteFormFamily>,
    grams: &GramPair,
    lambda: f64,
    consts: Option<(LowerBoundConstants, f64)>,
    w: Window,
) -> Result<Vec<Check>> {
    let n = grams.dim();
    let eq = |name, value| Check { name, value, kind: CheckKind::Equality };
    let u = probe_path(n, 0, w);
    let v = probe_path(n, 1, w);
    let vz = v.with_zero_final_velocity(w.end);
    let mut out = vec![
        eq("pairing_product_rule", identities::pairing_product_rule(&v, &u, w)?),
        eq("h_norm_derivative", identities::h_norm_derivative(&u, grams, w)?),
        eq("form_product_rule", identities::form_product_rule(a, &u, &v, w)?),
    ];
    if let Some(b) = b.filter(|b| b.is_symmetric()) {
        out.push(eq("damping_energy", identities::damping_energy(b, &v, lambda, w)?));
    }
    if a.is_symmetric() {
        out.push(eq("stiffness_energy", identities::stiffness_energy(a, &v, lambda, w)?));
        out.push(eq("wave_stiffness_energy", identities::wave_stiffness_energy(a, &vz, lambda, w)?));
    }
    out.push(eq("velocity_energy_weighted", identities::velocity_energy_weighted(&vz, grams, lambda, w)?));
    out.push(Check {
        name: "poincare_in_time",
        value: identities::poincare_in_time(&u, grams, w)?,
        kind: CheckKind::Slack,
    });
    if let (Some(b), Some((c, lambda_lb))) = (b, consts) {
        if c.admits(lambda_lb, 0.5 * c.alpha) {
            out.push(Check {
                name: "damped_h_lower_bound",
                value: identities::damped_h_lower_bound(a, b, grams, &v, lambda_lb, c, 0.5 * c.alpha, w)?,
                kind: CheckKind::Slack,
            });
        }
    }
    Ok(out)
}

/// Smallest `λ` (times 1.01) meeting the sufficient conditions of
/// [`LowerBoundConstants::admits`] with `ε = α/2`.
pub fn lower_bound_lambda(c: LowerBoundConstants) -> f64 {
    let LowerBoundConstants { alpha, m, mdot } = c;
    let l1 = (2.0 * mdot + 2.0 * m) / alpha;
    let l2 = mdot * (1.0 + 5f64.sqrt()) / (2.0 * alpha);
    let l3 = 2.0 * mdot * mdot / (alpha * alpha);
    1.01 * l1.max(l2).max(l3).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests;

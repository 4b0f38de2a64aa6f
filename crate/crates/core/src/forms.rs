//! Non-autonomous bilinear form families on a fixed discrete basis.
//!
//! A [`DiscreteFormFamily`] maps a time `t ∈ [0, T]` to the matrix of the
//! form `a(t, ·, ·)` on the basis, with the convention
//! `a(t, u, v) = vᵀ A(t) u`. Constants of the family (boundedness,
//! quasi-coercivity, Lipschitz modulus) are certified numerically on a finite
//! set of sample times; the sample set is part of the certificate.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, SpdFactor};

/// Search grid for the quasi-coercivity shift ω and the exponential shift w:
/// `{0, 2⁻⁴, 2⁻³, …, 2⁸}`.
pub fn shift_grid() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((-4..=8).map(|k| 2f64.powi(k)))
        .collect()
}

/// Relative threshold below which a smallest generalized eigenvalue is
/// treated as zero when certifying coercivity.
pub const COERCIVITY_TOL: f64 = 1e-10;

/// Where a set of constants is known to hold.
#[derive(Clone, Debug, PartialEq)]
pub enum Validity {
    /// Checked at these sample times only.
    Sampled(Vec<f64>),
    /// Holds for every `t ∈ [0, T]` (derived analytically from coefficient bounds).
    Uniform,
    /// Supplied by the caller without a check.
    Claimed,
}

/// Constants of a non-autonomous form family.
#[derive(Clone, Debug, PartialEq)]
pub struct FormBounds {
    /// V-boundedness: `|a(t,u,v)| ≤ M ‖u‖_V ‖v‖_V`.
    pub m: f64,
    /// Coercivity constant of `a + ω (·|·)_H`.
    pub alpha: f64,
    /// Quasi-coercivity shift, zero for coercive families.
    pub omega: f64,
    /// Lipschitz modulus per unit time (a sampled lower estimate when numerical).
    pub mdot: Option<f64>,
    /// `0 = τ₀ < τ₁ < … < τₙ = T`.
    pub breakpoints: Option<Vec<f64>>,
    pub validity: Validity,
}

impl FormBounds {
    pub fn new(m: f64, alpha: f64, omega: f64, validity: Validity) -> Result<Self> {
        let b = Self {
            m,
            alpha,
            omega,
            mdot: None,
            breakpoints: None,
            validity,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn with_mdot(mut self, mdot: f64) -> Self {
        self.mdot = Some(mdot);
        self
    }

    pub fn with_breakpoints(mut self, breakpoints: Vec<f64>) -> Result<Self> {
        let horizon = *breakpoints.last().unwrap_or(&0.0);
        validate_breakpoints(&breakpoints, horizon)?;
        self.breakpoints = Some(breakpoints);
        Ok(self)
    }

    pub fn is_coercive(&self) -> bool {
        self.omega == 0.0
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.omega < 0.0 {
            return Err(Error::InvalidArgument(format!("omega must be nonnegative, got {}", self.omega)));
        }
        // Operator bound dominates coercivity only when no H-shift is involved.
        if self.omega == 0.0 && self.m < self.alpha * (1.0 - 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "M = {} is smaller than alpha = {} for a coercive family",
                self.m, self.alpha
            )));
        }
        Ok(())
    }

    /// Worst-case combination of two families' constants (min α, max M, max Ṁ,
    /// union of breakpoints).
    pub fn combine(&self, other: &FormBounds) -> FormBounds {
        let mdot = match (self.mdot, other.mdot) {
            (Some(x), Some(y)) => Some(x.max(y)),
            (x, y) => x.or(y),
        };
        let breakpoints = match (&self.breakpoints, &other.breakpoints) {
            (Some(x), Some(y)) => Some(merge_cuts(x, y)),
            (x, y) => x.clone().or_else(|| y.clone()),
        };
        let validity = match (&self.validity, &other.validity) {
            (Validity::Sampled(x), Validity::Sampled(y)) => Validity::Sampled(merge_cuts(x, y)),
            (Validity::Sampled(x), _) | (_, Validity::Sampled(x)) => Validity::Sampled(x.clone()),
            (Validity::Claimed, _) | (_, Validity::Claimed) => Validity::Claimed,
            _ => Validity::Uniform,
        };
        FormBounds {
            m: self.m.max(other.m),
            alpha: self.alpha.min(other.alpha),
            omega: self.omega.max(other.omega),
            mdot,
            breakpoints,
            validity,
        }
    }
}

pub(crate) fn validate_breakpoints(bp: &[f64], horizon: f64) -> Result<()> {
    if bp.len() < 2 {
        return Err(Error::InvalidArgument("breakpoints need at least 0 and T".into()));
    }
    if bp[0] != 0.0 {
        return Err(Error::InvalidArgument("breakpoints must start at 0".into()));
    }
    if (bp[bp.len() - 1] - horizon).abs() > 1e-12 * horizon.max(1.0) {
        return Err(Error::InvalidArgument("breakpoints must end at T".into()));
    }
    if bp.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("breakpoints must be strictly increasing".into()));
    }
    Ok(())
}

/// Sorted union of two cut sets; cuts closer than `1e-12` are identified.
pub fn merge_cuts(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = x.iter().chain(y).copied().collect();
    all.sort_by(f64::total_cmp);
    let scale = all.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    for v in all {
        match out.last() {
            Some(&last) if (v - last).abs() <= 1e-12 * scale => {}
            _ => out.push(v),
        }
    }
    out
}

type MatrixFn = dyn Fn(f64) -> Result<DMatrix<f64>> + Send + Sync;

/// Time-parametrized matrix representation of a form family.
#[derive(Clone)]
pub struct DiscreteFormFamily {
    dim: usize,
    horizon: f64,
    eval: Arc<MatrixFn>,
    symmetric: bool,
    /// Interior points where the family may fail to be Lipschitz.
    breakpoints: Vec<f64>,
    pub bounds: Option<FormBounds>,
}

impl fmt::Debug for DiscreteFormFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscreteFormFamily")
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .field("symmetric", &self.symmetric)
            .field("breakpoints", &self.breakpoints)
            .field("bounds", &self.bounds)
            .finish()
    }
}

impl DiscreteFormFamily {
    pub fn new<F>(dim: usize, horizon: f64, eval: F) -> Self
    where
        F: Fn(f64) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    {
        Self {
            dim,
            horizon,
            eval: Arc::new(eval),
            symmetric: false,
            breakpoints: Vec::new(),
            bounds: None,
        }
    }

    /// Family from an infallible closure.
    pub fn from_fn<F>(dim: usize, horizon: f64, eval: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::new(dim, horizon, move |t| Ok(eval(t)))
    }

    /// Time-independent family.
    pub fn constant(matrix: DMatrix<f64>, horizon: f64) -> Self {
        let symmetric = (&matrix - matrix.transpose()).amax() <= 1e-14 * matrix.amax().max(1.0);
        let dim = matrix.nrows();
        Self::from_fn(dim, horizon, move |_| matrix.clone()).with_symmetric(symmetric)
    }

    /// Family `t ↦ s(t) · matrix` for a scalar profile `s`.
    pub fn scaled<S>(matrix: DMatrix<f64>, horizon: f64, profile: S) -> Self
    where
        S: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let symmetric = (&matrix - matrix.transpose()).amax() <= 1e-14 * matrix.amax().max(1.0);
        let dim = matrix.nrows();
        Self::from_fn(dim, horizon, move |t| &matrix * profile(t)).with_symmetric(symmetric)
    }

    pub fn with_symmetric(mut self, symmetric: bool) -> Self {
        self.symmetric = symmetric;
        self
    }

    /// Declare interior breakpoints (values strictly inside `(0, T)`).
    pub fn with_breakpoints(mut self, interior: Vec<f64>) -> Result<Self> {
        let full = self.full_breakpoints_from(&interior);
        validate_breakpoints(&full, self.horizon)?;
        self.breakpoints = interior;
        Ok(self)
    }

    pub fn with_bounds(mut self, bounds: FormBounds) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn full_breakpoints_from(&self, interior: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(interior.len() + 2);
        v.push(0.0);
        v.extend_from_slice(interior);
        v.push(self.horizon);
        v
    }

    /// `0 = τ₀ < … < τₙ = T`.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.full_breakpoints_from(&self.breakpoints)
    }

    pub fn interior_breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let tol = 1e-12 * self.horizon.max(1.0);
        if !(t >= -tol && t <= self.horizon + tol) {
            return Err(Error::TimeOutOfRange { t, horizon: self.horizon });
        }
        Ok(())
    }

    /// Matrix of `a(t, ·, ·)`.
    pub fn at(&self, t: f64) -> Result<DMatrix<f64>> {
        self.check_time(t)?;
        let m = (self.eval)(t)?;
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: m.nrows(),
                context: "family matrix",
            });
        }
        Ok(m)
    }

    /// `self + c · other`.
    pub fn plus_family(&self, other: &DiscreteFormFamily, c: f64) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim, context: "family sum" });
        }
        let (x, y) = (self.clone(), other.clone());
        let bp = merge_cuts(&self.breakpoints, &other.breakpoints);
        let mut out = Self::new(self.dim, self.horizon, move |t| Ok(x.at(t)? + y.at(t)? * c))
            .with_symmetric(self.symmetric && other.symmetric);
        out.breakpoints = bp;
        Ok(out)
    }

    /// `self + c · matrix` for a constant matrix.
    pub fn plus_matrix(&self, matrix: &DMatrix<f64>, c: f64) -> Self {
        let x = self.clone();
        let m = matrix * c;
        let sym = self.symmetric && (&m - m.transpose()).amax() <= 1e-14 * m.amax().max(1.0);
        let mut out = Self::new(self.dim, self.horizon, move |t| Ok(x.at(t)? + &m)).with_symmetric(sym);
        out.breakpoints = self.breakpoints.clone();
        out
    }

    /// Maximum asymmetry `‖A(t) − A(t)ᵀ‖_max` over the samples.
    pub fn asymmetry(&self, samples: &[f64]) -> Result<f64> {
        let mut worst = 0.0_f64;
        for &t in samples {
            let a = self.at(t)?;
            worst = worst.max((&a - a.transpose()).amax());
        }
        Ok(worst)
    }

    /// `n + 1` equispaced samples of `[0, T]`.
    pub fn uniform_samples(&self, n: usize) -> Vec<f64> {
        let n = n.max(1);
        (0..=n).map(|k| self.horizon * k as f64 / n as f64).collect()
    }

    /// Sample times stored in the certificate, or a default grid.
    pub fn certificate_samples(&self) -> Vec<f64> {
        match self.bounds.as_ref().map(|b| &b.validity) {
            Some(Validity::Sampled(s)) => s.clone(),
            _ => self.uniform_samples(10),
        }
    }
}

/// Inner products of the Gelfand triple on the discrete basis.
#[derive(Clone, Debug)]
pub struct GramPair {
    pub mass_h: DMatrix<f64>,
    pub gram_v: DMatrix<f64>,
    /// Smallest `c_H` with `‖x‖_H ≤ c_H ‖x‖_V`.
    pub embedding_const: f64,
    mass_factor: Arc<SpdFactor>,
    v_factor: Arc<SpdFactor>,
}

impl GramPair {
    pub fn new(mass_h: DMatrix<f64>, gram_v: DMatrix<f64>) -> Result<Self> {
        if mass_h.shape() != gram_v.shape() {
            return Err(Error::DimensionMismatch {
                expected: mass_h.nrows(),
                found: gram_v.nrows(),
                context: "gram pair",
            });
        }
        for (m, what) in [(&mass_h, "H Gram matrix"), (&gram_v, "V Gram matrix")] {
            if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                return Err(Error::NotPositiveDefinite(what));
            }
        }
        let mass_factor = SpdFactor::new(&mass_h, "H Gram matrix")?;
        let v_factor = SpdFactor::new(&gram_v, "V Gram matrix")?;
        let embedding_const = linalg::gen_max_eigenvalue(&mass_h, &v_factor).max(0.0).sqrt();
        Ok(Self {
            mass_h,
            gram_v,
            embedding_const,
            mass_factor: Arc::new(mass_factor),
            v_factor: Arc::new(v_factor),
        })
    }

    /// Both Gram matrices equal to the identity of size `n`.
    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n), DMatrix::identity(n, n)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.mass_h.nrows()
    }

    pub fn v_factor(&self) -> &SpdFactor {
        &self.v_factor
    }

    pub fn h_factor(&self) -> &SpdFactor {
        &self.mass_factor
    }

    pub fn norm_v(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.gram_v * x)).max(0.0).sqrt()
    }

    pub fn norm_h(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.mass_h * x)).max(0.0).sqrt()
    }
}

/// `vᵀ A(t) u`.
pub fn eval_form(family: &DiscreteFormFamily, t: f64, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    for x in [u, v] {
        if x.len() != family.dim() {
            return Err(Error::DimensionMismatch { expected: family.dim(), found: x.len(), context: "eval_form" });
        }
    }
    let a = family.at(t)?;
    Ok(v.dot(&(a * u)))
}

fn sample_matrices(family: &DiscreteFormFamily, samples: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    samples.par_iter().map(|&t| family.at(t)).collect()
}

/// Certify `M`, `α` and `ω` of a family at the given sample times.
///
/// `M` is the largest V-operator norm over the samples. `α(ω)` is the smallest
/// generalized eigenvalue of `sym A(t) + ω M_H` against the V-Gram matrix,
/// minimized over samples. If `α(0)` is positive the family is reported as
/// coercive; otherwise ω is taken from [`shift_grid`] maximizing
/// `α(ω)/(1 + ω)` (ties to the smaller ω).
pub fn estimate_bounds(family: &DiscreteFormFamily, grams: &GramPair, samples: &[f64]) -> Result<FormBounds> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty sample set".into()));
    }
    if grams.dim() != family.dim() {
        return Err(Error::DimensionMismatch { expected: family.dim(), found: grams.dim(), context: "estimate_bounds" });
    }
    let mats = sample_matrices(family, samples)?;
    let vf = grams.v_factor();
    let m = mats
        .par_iter()
        .map(|a| linalg::operator_norm(a, vf))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max);

    let alpha_at = |omega: f64| -> f64 {
        mats.par_iter()
            .map(|a| linalg::gen_min_eigenvalue(&(a + &grams.mass_h * omega), vf))
            .collect::<Vec<_>>()
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    };

    let tol = COERCIVITY_TOL * m.max(1.0);
    let alpha0 = alpha_at(0.0);
    let (alpha, omega) = if alpha0 > tol {
        (alpha0, 0.0)
    } else {
        let mut best: Option<(f64, f64, f64)> = None;
        for omega in shift_grid().into_iter().skip(1) {
            let alpha = alpha_at(omega);
            if alpha <= tol {
                continue;
            }
            let score = alpha / (1.0 + omega);
            if best.is_none_or(|(s, _, _)| score > s * (1.0 + 1e-12)) {
                best = Some((score, alpha, omega));
            }
        }
        let (_, a, w) = best.ok_or_else(|| {
            Error::GridExhausted(format!("no omega in [0, 256] makes the family coercive (alpha(0) = {alpha0:e})"))
        })?;
        (a, w)
    };
    let mut bounds = FormBounds {
        m,
        alpha,
        omega,
        mdot: None,
        breakpoints: None,
        validity: Validity::Sampled(samples.to_vec()),
    };
    if !family.interior_breakpoints().is_empty() {
        bounds.breakpoints = Some(family.breakpoints());
    }
    bounds.validate()?;
    Ok(bounds)
}

/// Sampled Lipschitz estimate, one value per subinterval.
#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzEstimate {
    /// Maximum over all subintervals; a lower estimate of the true modulus.
    pub mdot: f64,
    pub per_interval: Vec<f64>,
}

/// Largest V-operator norm of `(A(t) − A(s))/(t − s)` over sample pairs lying
/// in the same subinterval. Samples are `(j + ½)/k` fractions of each
/// subinterval so that one-sided values at breakpoints are never mixed.
pub fn check_piecewise_lipschitz(
    family: &DiscreteFormFamily,
    grams: &GramPair,
    breakpoints: &[f64],
    samples_per_interval: usize,
) -> Result<LipschitzEstimate> {
    validate_breakpoints(breakpoints, family.horizon())?;
    if samples_per_interval < 2 {
        return Err(Error::InvalidArgument("need at least two samples per subinterval".into()));
    }
    let vf = grams.v_factor();
    let mut per_interval = Vec::with_capacity(breakpoints.len() - 1);
    for w in breakpoints.windows(2) {
        let len = w[1] - w[0];
        let k = samples_per_interval;
        let times: Vec<f64> = (0..k).map(|j| w[0] + len * (j as f64 + 0.5) / k as f64).collect();
        let mats = sample_matrices(family, &times)?;
        let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| ((i + 1)..k).map(move |j| (i, j))).collect();
        let slopes: Vec<f64> = pairs
            .par_iter()
            .map(|&(i, j)| linalg::operator_norm(&(&mats[j] - &mats[i]), vf) / (times[j] - times[i]))
            .collect();
        per_interval.push(slopes.into_iter().fold(0.0, f64::max));
    }
    let mdot = per_interval.iter().copied().fold(0.0, f64::max);
    Ok(LipschitzEstimate { mdot, per_interval })
}

/// Central difference `(A(t+h) − A(t−h)) / 2h`.
pub fn derivative_form(family: &DiscreteFormFamily, t: f64, h: f64) -> Result<DMatrix<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step h must be positive, got {h}")));
    }
    for &bp in &family.breakpoints() {
        if (t - bp).abs() < h {
            return Err(Error::NearBreakpoint { t, h, breakpoint: bp });
        }
    }
    Ok((family.at(t + h)? - family.at(t - h)?) / (2.0 * h))
}

/// [`derivative_form`] with `h = 10⁻⁴·T`, shrunk so that `[t−h, t+h]` stays
/// strictly inside the Lipschitz subinterval containing `t`.
pub fn derivative_form_default(family: &DiscreteFormFamily, t: f64) -> Result<DMatrix<f64>> {
    let dist = family
        .breakpoints()
        .iter()
        .map(|bp| (t - bp).abs())
        .fold(f64::INFINITY, f64::min);
    if dist == 0.0 {
        return Err(Error::NearBreakpoint { t, h: 0.0, breakpoint: t });
    }
    let h = (1e-4 * family.horizon()).min(0.5 * dist);
    derivative_form(family, t, h)
}

/// Result of a coercivity shift: `b + 2w(·|·)_H` and `a + w b + w²(·|·)_H`.
#[derive(Clone, Debug)]
pub struct ShiftedFamilies {
    pub w: f64,
    pub a: DiscreteFormFamily,
    pub b: DiscreteFormFamily,
}

fn require_bounds(f: &DiscreteFormFamily, what: &'static str) -> Result<FormBounds> {
    f.bounds.clone().ok_or(Error::NotCertified(what))
}

fn coercive_at(family: &DiscreteFormFamily, grams: &GramPair, samples: &[f64]) -> Result<bool> {
    let mats = sample_matrices(family, samples)?;
    let vf = grams.v_factor();
    let ok = mats.par_iter().map(|a| {
        let tol = COERCIVITY_TOL * linalg::operator_norm(a, vf).max(1.0);
        linalg::gen_min_eigenvalue(a, vf) > tol
    });
    Ok(ok.collect::<Vec<_>>().into_iter().all(|x| x))
}

/// Smallest `w` on [`shift_grid`] making both shifted families coercive at
/// the certificate sample times of `a` and `b`.
pub fn coercivity_shift(a: &DiscreteFormFamily, b: &DiscreteFormFamily, grams: &GramPair) -> Result<ShiftedFamilies> {
    let ba = require_bounds(a, "stiffness family has no bounds")?;
    let bb = require_bounds(b, "damping family has no bounds")?;
    if ba.is_coercive() && bb.is_coercive() {
        return Ok(ShiftedFamilies { w: 0.0, a: a.clone(), b: b.clone() });
    }
    let samples = merge_cuts(&a.certificate_samples(), &b.certificate_samples());
    for w in shift_grid() {
        let b_w = b.plus_matrix(&grams.mass_h, 2.0 * w);
        let a_w = a.plus_family(b, w)?.plus_matrix(&grams.mass_h, w * w);
        if coercive_at(&b_w, grams, &samples)? && coercive_at(&a_w, grams, &samples)? {
            if w == 0.0 {
                return Ok(ShiftedFamilies { w, a: a.clone(), b: b.clone() });
            }
            let bounds_a = estimate_bounds(&a_w, grams, &samples)?;
            let bounds_b = estimate_bounds(&b_w, grams, &samples)?;
            return Ok(ShiftedFamilies {
                w,
                a: a_w.with_bounds(bounds_a),
                b: b_w.with_bounds(bounds_b),
            });
        }
    }
    Err(Error::GridExhausted("no shift w in [0, 256] certifies both families".into()))
}

/// Shift for an undamped problem: smallest `w` on [`shift_grid`] with
/// `a + w²(·|·)_H` coercive. The shifted problem carries damping `2w M_H`.
pub fn coercivity_shift_undamped(a: &DiscreteFormFamily, grams: &GramPair) -> Result<(f64, DiscreteFormFamily)> {
    let ba = require_bounds(a, "stiffness family has no bounds")?;
    if ba.is_coercive() {
        return Ok((0.0, a.clone()));
    }
    let samples = a.certificate_samples();
    for w in shift_grid() {
        let a_w = a.plus_matrix(&grams.mass_h, w * w);
        if coercive_at(&a_w, grams, &samples)? {
            let bounds = estimate_bounds(&a_w, grams, &samples)?;
            return Ok((w, a_w.with_bounds(bounds)));
        }
    }
    Err(Error::GridExhausted("no shift w in [0, 256] certifies the family".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(n: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        v
    }

    fn neumann_stiffness(n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let h = 1.0 / n as f64;
        let mut k = DMatrix::zeros(n + 1, n + 1);
        let mut m = DMatrix::zeros(n + 1, n + 1);
        for el in 0..n {
            let idx = [el, el + 1];
            for a in 0..2 {
                for b in 0..2 {
                    k[(idx[a], idx[b])] += if a == b { 1.0 / h } else { -1.0 / h };
                    m[(idx[a], idx[b])] += if a == b { h / 3.0 } else { h / 6.0 };
                }
            }
        }
        (k, m)
    }

    #[test]
    fn eval_form_identity_and_scaled() {
        let id = DiscreteFormFamily::constant(DMatrix::identity(2, 2), 1.0);
        assert_eq!(eval_form(&id, 0.5, &e(2, 0), &e(2, 0)).unwrap(), 1.0);
        let lin = DiscreteFormFamily::scaled(DMatrix::identity(2, 2), 2.0, |t| 1.0 + t);
        assert_eq!(eval_form(&lin, 1.0, &e(2, 0), &e(2, 0)).unwrap(), 2.0);
    }

    #[test]
    fn eval_form_matches_triple_loop() {
        let a = DMatrix::from_row_slice(3, 3, &[0.3, -1.2, 2.0, 0.7, 0.1, -0.4, 1.5, 0.9, -2.2]);
        let u = DVector::from_vec(vec![0.2, -0.5, 1.1]);
        let v = DVector::from_vec(vec![-1.3, 0.4, 0.8]);
        let fam = DiscreteFormFamily::constant(a.clone(), 1.0);
        let mut oracle = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                oracle += v[i] * a[(i, j)] * u[j];
            }
        }
        assert!((eval_form(&fam, 0.3, &u, &v).unwrap() - oracle).abs() < 1e-14);
    }

    #[test]
    fn eval_form_errors() {
        let fam = DiscreteFormFamily::constant(DMatrix::identity(2, 2), 1.0);
        assert!(matches!(eval_form(&fam, 0.5, &e(3, 0), &e(2, 0)), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(eval_form(&fam, 1.5, &e(2, 0), &e(2, 0)), Err(Error::TimeOutOfRange { .. })));
    }

    #[test]
    fn bounds_of_the_v_inner_product() {
        let (k, m) = neumann_stiffness(4);
        let g = &k + &m;
        let grams = GramPair::new(m, g.clone()).unwrap();
        let fam = DiscreteFormFamily::constant(g, 1.0);
        let b = estimate_bounds(&fam, &grams, &[0.0, 0.5, 1.0]).unwrap();
        assert!((b.m - 1.0).abs() < 1e-12);
        assert!((b.alpha - 1.0).abs() < 1e-12);
        assert_eq!(b.omega, 0.0);
        assert_eq!(b.validity, Validity::Sampled(vec![0.0, 0.5, 1.0]));
    }

    #[test]
    fn bounds_of_neumann_stiffness() {
        let (k, m) = neumann_stiffness(6);
        let grams = GramPair::new(m.clone(), &k + &m).unwrap();
        let fam = DiscreteFormFamily::constant(k, 1.0);
        let b = estimate_bounds(&fam, &grams, &[0.0]).unwrap();
        assert_eq!(b.omega, 1.0);
        assert!((b.alpha - 1.0).abs() < 1e-10);
    }

    #[test]
    fn empty_samples_and_bad_grams_are_rejected() {
        let fam = DiscreteFormFamily::constant(DMatrix::identity(2, 2), 1.0);
        assert!(estimate_bounds(&fam, &GramPair::identity(2), &[]).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(GramPair::new(bad, DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn lipschitz_of_linear_and_kinked_families() {
        let grams = GramPair::identity(2);
        let lin = DiscreteFormFamily::scaled(DMatrix::identity(2, 2), 1.0, |t| 1.0 + t);
        let est = check_piecewise_lipschitz(&lin, &grams, &[0.0, 1.0], 5).unwrap();
        assert!((est.mdot - 1.0).abs() < 1e-12);

        let kink = DiscreteFormFamily::scaled(DMatrix::identity(2, 2), 2.0, |t| (t - 1.0).abs())
            .with_breakpoints(vec![1.0])
            .unwrap();
        let est = check_piecewise_lipschitz(&kink, &grams, &[0.0, 1.0, 2.0], 4).unwrap();
        assert_eq!(est.per_interval.len(), 2);
        for s in est.per_interval {
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(check_piecewise_lipschitz(&kink, &grams, &[0.0, 2.0], 1).is_err());
    }

    #[test]
    fn lipschitz_of_sine_against_fine_difference_oracle() {
        let grams = GramPair::identity(1);
        let fam = DiscreteFormFamily::scaled(DMatrix::identity(1, 1), 1.0, f64::sin);
        let k = 20;
        let est = check_piecewise_lipschitz(&fam, &grams, &[0.0, 1.0], k).unwrap();
        // Oracle: fine-grid forward differences restricted to the sample span.
        let lo = 0.5 / k as f64;
        let hi = 1.0 - lo;
        let n = 100_000;
        let oracle = (0..n)
            .map(|i| {
                let s = lo + (hi - lo) * i as f64 / n as f64;
                let t = lo + (hi - lo) * (i + 1) as f64 / n as f64;
                ((t.sin() - s.sin()) / (t - s)).abs()
            })
            .fold(0.0, f64::max);
        assert!(est.mdot <= oracle + 1e-9);
        assert!(oracle - est.mdot < 2e-3, "est {} oracle {}", est.mdot, oracle);
    }

    #[test]
    fn central_difference_derivatives() {
        let lin = DiscreteFormFamily::scaled(DMatrix::identity(2, 2), 2.0, |t| 1.0 + t);
        let d = derivative_form(&lin, 0.7, 0.3).unwrap();
        assert!((d - DMatrix::<f64>::identity(2, 2)).amax() < 1e-14);

        let quad = DiscreteFormFamily::scaled(DMatrix::identity(2, 2), 2.0, |t| t * t);
        let d = derivative_form(&quad, 1.0, 0.1).unwrap();
        assert!((d - DMatrix::<f64>::identity(2, 2) * 2.0).amax() < 1e-13);

        let sine = DiscreteFormFamily::scaled(DMatrix::identity(1, 1), 1.0, f64::sin);
        let h = 1e-3;
        let d = derivative_form(&sine, 0.3, h).unwrap()[(0, 0)];
        // Taylor remainder of the central difference: |err| ≤ h²/6 max|cos'''|.
        assert!((d - 0.3f64.cos()).abs() <= h * h / 6.0 + 1e-12);
    }

    #[test]
    fn derivative_rejects_breakpoints() {
        let kink = DiscreteFormFamily::scaled(DMatrix::identity(1, 1), 2.0, |t| (t - 1.0).abs())
            .with_breakpoints(vec![1.0])
            .unwrap();
        assert!(matches!(derivative_form(&kink, 0.95, 0.1), Err(Error::NearBreakpoint { .. })));
        assert!(matches!(derivative_form(&kink, 0.05, 0.1), Err(Error::NearBreakpoint { .. })));
        let d = derivative_form_default(&kink, 0.5).unwrap();
        assert!((d[(0, 0)] + 1.0).abs() < 1e-9);
        assert!(derivative_form_default(&kink, 1.0).is_err());
    }

    #[test]
    fn shift_not_needed_for_coercive_families() {
        let grams = GramPair::identity(2);
        let a = DiscreteFormFamily::constant(DMatrix::identity(2, 2), 1.0);
        let ba = estimate_bounds(&a, &grams, &[0.0, 1.0]).unwrap();
        let a = a.with_bounds(ba);
        let s = coercivity_shift(&a, &a, &grams).unwrap();
        assert_eq!(s.w, 0.0);
        assert_eq!(s.a.bounds, a.bounds);
    }

    #[test]
    fn scalar_shift_matches_quadratic_oracle() {
        let grams = GramPair::identity(1);
        let a = DiscreteFormFamily::constant(DMatrix::from_element(1, 1, -1.0), 1.0);
        let b = DiscreteFormFamily::constant(DMatrix::from_element(1, 1, 1.0), 1.0);
        let ba = estimate_bounds(&a, &grams, &[0.0, 1.0]).unwrap();
        let bb = estimate_bounds(&b, &grams, &[0.0, 1.0]).unwrap();
        assert!(ba.omega > 0.0);
        let s = coercivity_shift(&a.with_bounds(ba), &b.with_bounds(bb), &grams).unwrap();
        // Oracle: w² + w − 1 > 0 and 1 + 2w > 0, i.e. w > (√5 − 1)/2.
        let root = (5f64.sqrt() - 1.0) / 2.0;
        let expected = shift_grid().into_iter().find(|&w| w > root).unwrap();
        assert_eq!(s.w, expected);
        assert_eq!(s.w, 1.0);
        assert!((s.a.at(0.0).unwrap()[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((s.b.at(0.0).unwrap()[(0, 0)] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn neumann_shift_is_recertified() {
        let (k, m) = neumann_stiffness(5);
        let g = &k + &m;
        let grams = GramPair::new(m, g.clone()).unwrap();
        let samples = [0.0, 0.5, 1.0];
        let a = DiscreteFormFamily::constant(k, 1.0);
        let a = a.clone().with_bounds(estimate_bounds(&a, &grams, &samples).unwrap());
        let b = DiscreteFormFamily::constant(g, 1.0);
        let b = b.clone().with_bounds(estimate_bounds(&b, &grams, &samples).unwrap());
        let s = coercivity_shift(&a, &b, &grams).unwrap();
        assert!(s.w > 0.0);
        for fam in [&s.a, &s.b] {
            let again = estimate_bounds(fam, &grams, &samples).unwrap();
            assert_eq!(again.omega, 0.0);
            assert!(again.alpha > 0.0);
        }
    }

    #[test]
    fn breakpoints_validation() {
        assert!(validate_breakpoints(&[0.0, 0.5, 1.0], 1.0).is_ok());
        assert!(validate_breakpoints(&[0.1, 1.0], 1.0).is_err());
        assert!(validate_breakpoints(&[0.0, 0.5, 0.5, 1.0], 1.0).is_err());
        assert!(validate_breakpoints(&[0.0, 0.9], 1.0).is_err());
        let fam = DiscreteFormFamily::constant(DMatrix::identity(1, 1), 1.0);
        assert!(fam.with_breakpoints(vec![1.5]).is_err());
    }

    #[test]
    fn combine_takes_worst_case() {
        let a = FormBounds::new(2.0, 1.0, 0.0, Validity::Uniform).unwrap().with_mdot(0.5);
        let b = FormBounds::new(3.0, 0.5, 0.0, Validity::Uniform).unwrap();
        let c = a.combine(&b);
        assert_eq!((c.m, c.alpha, c.mdot), (3.0, 0.5, Some(0.5)));
        assert!(FormBounds::new(0.5, 1.0, 0.0, Validity::Claimed).is_err());
        assert!(FormBounds::new(1.0, 0.0, 0.0, Validity::Claimed).is_err());
    }
}

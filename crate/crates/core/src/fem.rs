//! Piecewise-linear finite elements on the unit interval.
//!
//! Provides Gram matrices for `H = L²(0,1)` and `V ⊂ H¹(0,1)`, time-dependent
//! Robin forms, coefficient (quasilinear) forms and the discrete trace
//! inequality. The boundary measure is counting measure on `{0, 1}`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::forms::{DiscreteFormFamily, FormBounds, GramPair, Validity};
use crate::linalg::{self, SpdFactor};

/// Strictly increasing nodes of `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh1D {
    nodes: Vec<f64>,
}

impl Mesh1D {
    pub fn uniform(elements: usize) -> Result<Self> {
        if elements == 0 {
            return Err(Error::InvalidArgument("mesh needs at least one element".into()));
        }
        let nodes = (0..=elements).map(|i| i as f64 / elements as f64).collect();
        Ok(Self { nodes })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 || nodes[nodes.len() - 1] != 1.0 {
            return Err(Error::InvalidArgument("mesh nodes must start at 0 and end at 1".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("mesh nodes must be strictly increasing".into()));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn element_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn element(&self, e: usize) -> (f64, f64) {
        (self.nodes[e], self.nodes[e + 1])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// `V = H¹₀(0,1)`.
    Dirichlet,
    /// `V = H¹(0,1)`; Robin and Neumann conditions are natural.
    Robin,
}

/// Boundary point of the interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn x(self) -> f64 {
        match self {
            Side::Left => 0.0,
            Side::Right => 1.0,
        }
    }

    /// Outward normal.
    pub fn normal(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

/// P1 space with its Gram matrices.
#[derive(Clone, Debug)]
pub struct FemSpace1D {
    mesh: Mesh1D,
    bc: BoundaryCondition,
    /// Mesh node index of each degree of freedom.
    dof_nodes: Vec<usize>,
    pub stiffness: DMatrix<f64>,
    pub mass_h: DMatrix<f64>,
    pub gram_v: DMatrix<f64>,
    pub boundary_gram: DMatrix<f64>,
}

const GAUSS2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

/// Reference hat functions on `[-1, 1]` and their derivatives in ξ.
fn hats(xi: f64) -> ([f64; 2], [f64; 2]) {
    ([0.5 * (1.0 - xi), 0.5 * (1.0 + xi)], [-0.5, 0.5])
}

/// Uniform P1 space with `elements` elements.
pub fn build_space(elements: usize, bc: BoundaryCondition) -> Result<FemSpace1D> {
    FemSpace1D::new(Mesh1D::uniform(elements)?, bc)
}

impl FemSpace1D {
    pub fn new(mesh: Mesh1D, bc: BoundaryCondition) -> Result<Self> {
        let n_nodes = mesh.nodes().len();
        let dof_nodes: Vec<usize> = match bc {
            BoundaryCondition::Dirichlet => (1..n_nodes - 1).collect(),
            BoundaryCondition::Robin => (0..n_nodes).collect(),
        };
        if dof_nodes.is_empty() {
            return Err(Error::InvalidArgument("Dirichlet space needs at least two elements".into()));
        }
        let mut k_full = DMatrix::zeros(n_nodes, n_nodes);
        let mut m_full = DMatrix::zeros(n_nodes, n_nodes);
        for e in 0..mesh.element_count() {
            let (a, b) = mesh.element(e);
            let jac = 0.5 * (b - a);
            for &xi in &GAUSS2 {
                let (phi, dphi) = hats(xi);
                for i in 0..2 {
                    for j in 0..2 {
                        k_full[(e + i, e + j)] += dphi[i] * dphi[j] / jac;
                        m_full[(e + i, e + j)] += phi[i] * phi[j] * jac;
                    }
                }
            }
        }
        let mut space = Self {
            mesh,
            bc,
            dof_nodes,
            stiffness: DMatrix::zeros(0, 0),
            mass_h: DMatrix::zeros(0, 0),
            gram_v: DMatrix::zeros(0, 0),
            boundary_gram: DMatrix::zeros(0, 0),
        };
        space.stiffness = space.restrict(&k_full);
        space.mass_h = space.restrict(&m_full);
        space.gram_v = &space.stiffness + &space.mass_h;
        let dim = space.dim();
        let mut bg = DMatrix::zeros(dim, dim);
        if bc == BoundaryCondition::Robin {
            bg[(0, 0)] = 1.0;
            bg[(dim - 1, dim - 1)] = 1.0;
        }
        space.boundary_gram = bg;
        Ok(space)
    }

    fn restrict(&self, full: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dof_nodes.len();
        DMatrix::from_fn(n, n, |i, j| full[(self.dof_nodes[i], self.dof_nodes[j])])
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn dim(&self) -> usize {
        self.dof_nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.mesh.element_count()
    }

    /// Positions of the degrees of freedom.
    pub fn dof_coordinates(&self) -> Vec<f64> {
        self.dof_nodes.iter().map(|&i| self.mesh.nodes()[i]).collect()
    }

    pub fn grams(&self) -> Result<GramPair> {
        GramPair::new(self.mass_h.clone(), self.gram_v.clone())
    }

    /// Dof index of a boundary side, if it carries a degree of freedom.
    pub fn boundary_dof(&self, side: Side) -> Option<usize> {
        match (self.bc, side) {
            (BoundaryCondition::Dirichlet, _) => None,
            (BoundaryCondition::Robin, Side::Left) => Some(0),
            (BoundaryCondition::Robin, Side::Right) => Some(self.dim() - 1),
        }
    }

    /// Nodal values including boundary nodes (zero for Dirichlet).
    pub fn nodal_values(&self, coeffs: &DVector<f64>) -> Vec<f64> {
        let mut full = vec![0.0; self.mesh.nodes().len()];
        for (k, &node) in self.dof_nodes.iter().enumerate() {
            full[node] = coeffs[k];
        }
        full
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(f64) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.dof_coordinates().into_iter().map(f))
    }

    /// `∫ f φᵢ dx` by two-point Gauss quadrature per element.
    pub fn load_vector(&self, f: impl Fn(f64) -> f64) -> DVector<f64> {
        let n_nodes = self.mesh.nodes().len();
        let mut full = vec![0.0; n_nodes];
        for e in 0..self.element_count() {
            let (a, b) = self.mesh.element(e);
            let jac = 0.5 * (b - a);
            for &xi in &GAUSS2 {
                let x = a + jac * (xi + 1.0);
                let (phi, _) = hats(xi);
                let fx = f(x);
                full[e] += fx * phi[0] * jac;
                full[e + 1] += fx * phi[1] * jac;
            }
        }
        DVector::from_iterator(self.dim(), self.dof_nodes.iter().map(|&i| full[i]))
    }

    /// `Σ_{x∈{0,1}} g(x) φᵢ(x)`; zero for Dirichlet spaces.
    pub fn boundary_load(&self, g: impl Fn(Side) -> f64) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        for side in [Side::Left, Side::Right] {
            if let Some(k) = self.boundary_dof(side) {
                v[k] += g(side);
            }
        }
        v
    }

    /// Value of the finite-element function at `x`.
    pub fn evaluate(&self, coeffs: &DVector<f64>, x: f64) -> f64 {
        let vals = self.nodal_values(coeffs);
        let nodes = self.mesh.nodes();
        let e = match nodes.iter().position(|&n| n > x) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => self.element_count() - 1,
        };
        let (a, b) = self.mesh.element(e);
        let s = (x - a) / (b - a);
        vals[e] * (1.0 - s) + vals[e + 1] * s
    }

    /// Outward normal derivative at a boundary point from the end element's slope.
    pub fn normal_derivative(&self, coeffs: &DVector<f64>, side: Side) -> f64 {
        let vals = self.nodal_values(coeffs);
        let n = self.element_count();
        let (e, sign) = match side {
            Side::Left => (0, -1.0),
            Side::Right => (n - 1, 1.0),
        };
        let (a, b) = self.mesh.element(e);
        sign * (vals[e + 1] - vals[e]) / (b - a)
    }

    /// Squared `L²` and `H¹`-seminorm distances to a smooth function, by
    /// five-point Gauss quadrature per element.
    pub fn error_parts(&self, coeffs: &DVector<f64>, exact: impl Fn(f64) -> f64, exact_dx: impl Fn(f64) -> f64) -> (f64, f64) {
        let vals = self.nodal_values(coeffs);
        let (xi, wi) = linalg::gauss_legendre(5);
        let (mut l2, mut semi) = (0.0, 0.0);
        for e in 0..self.element_count() {
            let (a, b) = self.mesh.element(e);
            let jac = 0.5 * (b - a);
            let slope = (vals[e + 1] - vals[e]) / (b - a);
            for (x_ref, w) in xi.iter().zip(&wi) {
                let s = 0.5 * (x_ref + 1.0);
                let x = a + s * (b - a);
                let uh = vals[e] * (1.0 - s) + vals[e + 1] * s;
                l2 += w * jac * (uh - exact(x)).powi(2);
                semi += w * jac * (slope - exact_dx(x)).powi(2);
            }
        }
        (l2, semi)
    }
}

/// Scalar boundary weight `β(t, x)` for `x ∈ {0, 1}`.
pub type BoundaryWeight = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// `a(t,u,v) = ∫ u' v' dx + Σ_{x∈{0,1}} β(t,x) u(x) v(x)`.
pub fn assemble_robin_family(space: &FemSpace1D, beta: BoundaryWeight, horizon: f64) -> Result<DiscreteFormFamily> {
    if space.bc() != BoundaryCondition::Robin {
        return Err(Error::InvalidArgument("Robin forms need a space without Dirichlet constraints".into()));
    }
    let k = space.stiffness.clone();
    let last = space.dim() - 1;
    Ok(DiscreteFormFamily::from_fn(space.dim(), horizon, move |t| {
        let mut a = k.clone();
        a[(0, 0)] += beta(t, 0.0);
        a[(last, last)] += beta(t, 1.0);
        a
    })
    .with_symmetric(true))
}

/// Coefficient `c(t, x, y, z)` of a quasilinear form.
pub type Coefficient = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;

/// Time-parametrized pair `(g(t), ġ(t))` of coefficient vectors.
pub type PathFn = Arc<dyn Fn(f64) -> (DVector<f64>, DVector<f64>) + Send + Sync>;

/// Weighted stiffness `∫ c(t, x, g, ġ) u' v' dx` with the weight sampled at
/// element midpoints. Evaluation fails if the weight drops below `ell`.
pub fn assemble_coefficient_family(
    space: &FemSpace1D,
    coefficient: Coefficient,
    path: PathFn,
    ell: f64,
    horizon: f64,
) -> Result<DiscreteFormFamily> {
    if !(ell > 0.0) {
        return Err(Error::InvalidArgument(format!("ellipticity constant must be positive, got {ell}")));
    }
    let sp = space.clone();
    Ok(DiscreteFormFamily::new(space.dim(), horizon, move |t| {
        let (g, gdot) = path(t);
        if g.len() != sp.dim() || gdot.len() != sp.dim() {
            return Err(Error::DimensionMismatch { expected: sp.dim(), found: g.len(), context: "coefficient path" });
        }
        let gv = sp.nodal_values(&g);
        let gd = sp.nodal_values(&gdot);
        let n_nodes = gv.len();
        let mut full = DMatrix::zeros(n_nodes, n_nodes);
        for e in 0..sp.element_count() {
            let (a, b) = sp.mesh().element(e);
            let x = 0.5 * (a + b);
            let c = coefficient(t, x, 0.5 * (gv[e] + gv[e + 1]), 0.5 * (gd[e] + gd[e + 1]));
            if !(c >= ell) {
                return Err(Error::EllipticityViolated { value: c, ell, t, x });
            }
            let k = c / (b - a);
            full[(e, e)] += k;
            full[(e + 1, e + 1)] += k;
            full[(e, e + 1)] -= k;
            full[(e + 1, e)] -= k;
        }
        Ok(sp.restrict(&full))
    })
    .with_symmetric(true))
}

/// Uniform-in-time constants of a coefficient family with `ell ≤ c ≤ m_coef`.
///
/// Dirichlet spaces are coercive with `α = ell·λ_min(K, G)`; `H¹` spaces use
/// `ω = α = ell` from `ell·uᵀKu + ell·uᵀMu = ell‖u‖²_V`.
pub fn coefficient_bounds(space: &FemSpace1D, ell: f64, m_coef: f64) -> Result<FormBounds> {
    let vf = SpdFactor::new(&space.gram_v, "V Gram matrix")?;
    let m = m_coef * linalg::gen_max_eigenvalue(&space.stiffness, &vf);
    match space.bc() {
        BoundaryCondition::Dirichlet => {
            let alpha = ell * linalg::gen_min_eigenvalue(&space.stiffness, &vf);
            FormBounds::new(m, alpha, 0.0, Validity::Uniform)
        }
        BoundaryCondition::Robin => FormBounds::new(m, ell, ell, Validity::Uniform),
    }
}

/// Smallest `c` with `boundaryGram ⪯ eps·G + c·M_H` on the discrete space.
pub fn trace_constant(space: &FemSpace1D, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if space.bc() != BoundaryCondition::Robin {
        return Err(Error::InvalidArgument("trace constant needs a space with boundary degrees of freedom".into()));
    }
    let mf = SpdFactor::new(&space.mass_h, "H Gram matrix")?;
    let top = linalg::gen_max_eigenvalue(&(&space.boundary_gram - &space.gram_v * eps), &mf);
    Ok(top.max(0.0))
}

/// Derivatives of a smooth space-time field at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldJet {
    pub u: f64,
    pub u_t: f64,
    pub u_tt: f64,
    pub u_x: f64,
    pub u_tx: f64,
    pub u_xx: f64,
    pub u_txx: f64,
}

/// Smooth exact solution used to manufacture data for the Robin problem
/// `ü − Δu̇ − Δu = f`, `∂_ν(u̇ + u) + β₂u̇ + β₁u = g` on `{0, 1}`.
pub trait ManufacturedField: Send + Sync {
    fn jet(&self, t: f64, x: f64) -> FieldJet;

    fn forcing(&self, t: f64, x: f64) -> f64 {
        let j = self.jet(t, x);
        j.u_tt - j.u_txx - j.u_xx
    }

    /// Robin datum `g` at a boundary point.
    fn robin_datum(&self, t: f64, side: Side, beta1: f64, beta2: f64) -> f64 {
        let j = self.jet(t, side.x());
        side.normal() * (j.u_tx + j.u_x) + beta2 * j.u_t + beta1 * j.u
    }
}

/// Load vector `t ↦ ∫ f φᵢ + Σ g φᵢ` of a manufactured Robin problem.
pub fn manufactured_robin_load(
    space: &FemSpace1D,
    field: Arc<dyn ManufacturedField>,
    beta1: BoundaryWeight,
    beta2: BoundaryWeight,
) -> impl Fn(f64) -> DVector<f64> + Send + Sync + 'static {
    let sp = space.clone();
    move |t| {
        let interior = sp.load_vector(|x| field.forcing(t, x));
        let boundary = sp.boundary_load(|side| field.robin_datum(t, side, beta1(t, side.x()), beta2(t, side.x())));
        interior + boundary
    }
}

/// `∂_ν(u̇ + u) + β₂u̇ + β₁u − g` at both boundary points, with the normal
/// derivative taken from the end-element slope.
pub fn robin_flux_residual(
    space: &FemSpace1D,
    u: &DVector<f64>,
    udot: &DVector<f64>,
    beta1: [f64; 2],
    beta2: [f64; 2],
    datum: [f64; 2],
) -> [f64; 2] {
    let mut out = [0.0; 2];
    for (k, side) in [Side::Left, Side::Right].into_iter().enumerate() {
        let x = side.x();
        let flux = space.normal_derivative(udot, side) + space.normal_derivative(u, side);
        out[k] = flux + beta2[k] * space.evaluate(udot, x) + beta1[k] * space.evaluate(u, x) - datum[k];
    }
    out
}

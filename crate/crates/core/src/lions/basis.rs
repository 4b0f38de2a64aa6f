//! Piecewise-polynomial time spaces with `C¹` continuity.
//!
//! Each element carries local monomials `sᵏ`, `s = (t − tₑ)/hₑ`; continuity of
//! value and first derivative at interior nodes (plus an optional `v̇(T) = 0`)
//! is imposed through an orthonormal null-space basis of the constraint
//! matrix, so global functions are columns of an embedding matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeConstraint {
    None,
    ZeroFinalVelocity,
}

/// Values, first and second derivatives of every global basis function.
#[derive(Clone, Debug)]
pub struct TimeValues {
    pub value: DVector<f64>,
    pub d1: DVector<f64>,
    pub d2: DVector<f64>,
}

impl TimeValues {
    pub fn derivative(&self, order: usize) -> &DVector<f64> {
        match order {
            0 => &self.value,
            1 => &self.d1,
            _ => &self.d2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TimeSpace {
    grid: Vec<f64>,
    degree: usize,
    continuity: bool,
    constraint: TimeConstraint,
    /// Raw local coefficients (element-major) by global functions.
    embedding: DMatrix<f64>,
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid[0] != 0.0 {
        return Err(Error::InvalidArgument("time grid must start at 0 and have an element".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("time grid must be strictly increasing".into()));
    }
    Ok(())
}

/// `m` equal elements on `[0, T]`.
pub fn uniform_grid(horizon: f64, elements: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..=elements).map(|k| horizon * k as f64 / elements as f64).collect();
    g[elements] = horizon;
    g
}

impl TimeSpace {
    /// `C¹` piecewise polynomials of the given degree.
    pub fn new(grid: Vec<f64>, degree: usize, constraint: TimeConstraint) -> Result<Self> {
        Self::build(grid, degree, true, constraint)
    }

    /// Piecewise polynomials without continuity constraints.
    pub fn discontinuous(grid: Vec<f64>, degree: usize, constraint: TimeConstraint) -> Result<Self> {
        Self::build(grid, degree, false, constraint)
    }

    fn build(grid: Vec<f64>, degree: usize, continuity: bool, constraint: TimeConstraint) -> Result<Self> {
        validate_grid(&grid)?;
        if continuity && degree < 1 {
            return Err(Error::InvalidArgument("C¹ time spaces need degree at least 1".into()));
        }
        let m = grid.len() - 1;
        let local = degree + 1;
        let raw = m * local;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        if continuity {
            for e in 1..m {
                let (hl, hr) = (grid[e] - grid[e - 1], grid[e + 1] - grid[e]);
                let mut value = vec![0.0; raw];
                let mut slope = vec![0.0; raw];
                for k in 0..local {
                    value[(e - 1) * local + k] = 1.0;
                    slope[(e - 1) * local + k] = k as f64 / hl;
                }
                value[e * local] = -1.0;
                slope[e * local + 1] = -1.0 / hr;
                rows.push(value);
                rows.push(slope);
            }
        }
        if constraint == TimeConstraint::ZeroFinalVelocity {
            let h = grid[m] - grid[m - 1];
            let mut slope = vec![0.0; raw];
            for k in 1..local {
                slope[(m - 1) * local + k] = k as f64 / h;
            }
            rows.push(slope);
        }
        let c = DMatrix::from_fn(rows.len(), raw, |i, j| rows[i][j]);
        let embedding = linalg::null_space(&c);
        Ok(Self { grid, degree, continuity, constraint, embedding })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn constraint(&self) -> TimeConstraint {
        self.constraint
    }

    pub fn is_continuous(&self) -> bool {
        self.continuity
    }

    pub fn dim(&self) -> usize {
        self.embedding.ncols()
    }

    pub fn elements(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.last().expect("nonempty grid")
    }

    pub fn embedding(&self) -> &DMatrix<f64> {
        &self.embedding
    }

    /// Element containing `t` (the left one at interior nodes).
    pub fn element_of(&self, t: f64) -> usize {
        let m = self.elements();
        match self.grid.iter().position(|&g| g >= t) {
            Some(0) | None => {
                if t <= self.grid[0] {
                    0
                } else {
                    m - 1
                }
            }
            Some(i) => (i - 1).min(m - 1),
        }
    }

    /// Global basis functions and derivatives at `t`, evaluated on element `e`.
    pub fn eval_on(&self, e: usize, t: f64) -> TimeValues {
        let h = self.grid[e + 1] - self.grid[e];
        let s = (t - self.grid[e]) / h;
        let local = self.degree + 1;
        let mut l0 = vec![0.0; local];
        let mut l1 = vec![0.0; local];
        let mut l2 = vec![0.0; local];
        for k in 0..local {
            let kf = k as f64;
            l0[k] = s.powi(k as i32);
            if k >= 1 {
                l1[k] = kf * s.powi(k as i32 - 1) / h;
            }
            if k >= 2 {
                l2[k] = kf * (kf - 1.0) * s.powi(k as i32 - 2) / (h * h);
            }
        }
        let n = self.dim();
        let rows = self.embedding.rows(e * local, local);
        let combine = |l: &[f64]| DVector::from_fn(n, |j, _| (0..local).map(|k| rows[(k, j)] * l[k]).sum());
        TimeValues { value: combine(&l0), d1: combine(&l1), d2: combine(&l2) }
    }

    pub fn eval(&self, t: f64) -> TimeValues {
        self.eval_on(self.element_of(t), t)
    }

    /// Gauss points and weights per element.
    pub fn quadrature(&self, points_per_element: usize) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::with_capacity(self.elements() * points_per_element);
        for e in 0..self.elements() {
            let (p, w) = linalg::gauss_on(self.grid[e], self.grid[e + 1], points_per_element);
            out.extend(p.into_iter().zip(w).map(|(t, q)| (e, t, q)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        for m in [1, 2, 5] {
            let g = uniform_grid(1.0, m);
            assert_eq!(TimeSpace::new(g.clone(), 2, TimeConstraint::None).unwrap().dim(), m + 2);
            assert_eq!(TimeSpace::new(g.clone(), 3, TimeConstraint::None).unwrap().dim(), 2 * m + 2);
            assert_eq!(TimeSpace::new(g.clone(), 3, TimeConstraint::ZeroFinalVelocity).unwrap().dim(), 2 * m + 1);
            assert_eq!(TimeSpace::discontinuous(g, 2, TimeConstraint::None).unwrap().dim(), 3 * m);
        }
    }

    #[test]
    fn basis_is_c1_and_respects_constraint() {
        let g = vec![0.0, 0.3, 0.5, 1.2];
        let s = TimeSpace::new(g.clone(), 3, TimeConstraint::ZeroFinalVelocity).unwrap();
        for e in 1..3 {
            let left = s.eval_on(e - 1, g[e]);
            let right = s.eval_on(e, g[e]);
            assert!((&left.value - &right.value).amax() < 1e-12);
            assert!((&left.d1 - &right.d1).amax() < 1e-10);
        }
        assert!(s.eval(1.2).d1.amax() < 1e-10);
    }

    #[test]
    fn reproduces_smooth_polynomials() {
        // t³ − t is C¹ and lies in the cubic space; least squares recovers it.
        let s = TimeSpace::new(uniform_grid(2.0, 3), 3, TimeConstraint::None).unwrap();
        let pts: Vec<f64> = (0..40).map(|k| 2.0 * k as f64 / 39.0).collect();
        let a = DMatrix::from_fn(pts.len(), s.dim(), |i, j| s.eval(pts[i]).value[j]);
        let y = DVector::from_iterator(pts.len(), pts.iter().map(|t| t * t * t - t));
        let c = a.clone().svd(true, true).solve(&y, 1e-12).unwrap();
        assert!((&a * &c - &y).amax() < 1e-10);
        let d2 = s.eval(1.7).d2.dot(&c);
        assert!((d2 - 6.0 * 1.7).abs() < 1e-8);
    }

    #[test]
    fn bad_grids_rejected() {
        assert!(TimeSpace::new(vec![0.0], 2, TimeConstraint::None).is_err());
        assert!(TimeSpace::new(vec![0.0, 0.5, 0.5], 2, TimeConstraint::None).is_err());
        assert!(TimeSpace::new(vec![0.1, 0.5], 2, TimeConstraint::None).is_err());
    }
}

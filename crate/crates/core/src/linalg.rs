//! Dense linear-algebra helpers: generalized symmetric eigenvalues, operator
//! norms relative to a Gram matrix, null spaces and Gauss–Legendre rules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetric part `(A + Aᵀ)/2`.
pub fn sym_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Factorization of an SPD matrix used to whiten other matrices against it.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    lower: DMatrix<f64>,
}

impl SpdFactor {
    pub fn new(b: &DMatrix<f64>, what: &'static str) -> Result<Self> {
        if !b.is_square() {
            return Err(Error::NotPositiveDefinite(what));
        }
        let chol = Cholesky::new(b.clone()).ok_or(Error::NotPositiveDefinite(what))?;
        let lower = chol.l();
        Ok(Self { chol, lower })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// `L⁻¹ A L⁻ᵀ` for `B = L Lᵀ`.
    pub fn whiten(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let left = self
            .lower
            .solve_lower_triangular(a)
            .expect("cholesky factor has a nonzero diagonal");
        let right = self
            .lower
            .solve_lower_triangular(&left.transpose())
            .expect("cholesky factor has a nonzero diagonal");
        right.transpose()
    }

    /// `L⁻¹ x`.
    pub fn whiten_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        self.lower
            .solve_lower_triangular(x)
            .expect("cholesky factor has a nonzero diagonal")
    }

    /// `B⁻¹ x`.
    pub fn solve(&self, x: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(x)
    }

    /// `xᵀ B⁻¹ x`.
    pub fn inverse_quadratic(&self, x: &DVector<f64>) -> f64 {
        self.whiten_vec(x).norm_squared()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }
}

/// Ascending eigenvalues of the symmetric matrix `a`.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(sym_part(a)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Ascending eigenvalues of `sym(A) x = μ B x` with `B` given by its factor.
pub fn gen_eigenvalues(a: &DMatrix<f64>, b: &SpdFactor) -> Vec<f64> {
    sym_eigenvalues(&b.whiten(&sym_part(a)))
}

/// Smallest generalized eigenvalue of `sym(A)` against `B`.
pub fn gen_min_eigenvalue(a: &DMatrix<f64>, b: &SpdFactor) -> f64 {
    gen_eigenvalues(a, b)[0]
}

/// Largest generalized eigenvalue of `sym(A)` against `B`.
pub fn gen_max_eigenvalue(a: &DMatrix<f64>, b: &SpdFactor) -> f64 {
    *gen_eigenvalues(a, b).last().expect("nonempty")
}

/// `sup |vᵀ A u| / (‖u‖_B ‖v‖_B)`: the largest singular value of `L⁻¹ A L⁻ᵀ`.
pub fn operator_norm(a: &DMatrix<f64>, b: &SpdFactor) -> f64 {
    let w = b.whiten(a);
    w.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Orthonormal basis (as columns) of the null space of `c`.
///
/// Rows are normalized first so that constraints of different scale are
/// treated alike.
pub fn null_space(c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = c.ncols();
    if c.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let mut scaled = c.clone();
    for mut row in scaled.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    let gram = scaled.transpose() * &scaled;
    let eig = SymmetricEigen::new(gram);
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let tol = 1e-10 * max.max(1.0);
    let mut idx: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= tol).collect();
    // Fixed column order keeps assembled systems reproducible.
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let mut z = DMatrix::zeros(n, idx.len());
    for (k, &i) in idx.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        // Sign convention: first entry of largest magnitude is positive.
        let pivot = col.iter().copied().fold(0.0_f64, |acc, x| if x.abs() > acc.abs() + 1e-12 { x } else { acc });
        if pivot < 0.0 {
            col = -col;
        }
        z.set_column(k, &col);
    }
    z
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss rule mapped to `[a, b]`, returned as `(points, weights)`.
pub fn gauss_on(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|xi| mid + half * xi).collect(),
        w.iter().map(|wi| half * wi).collect(),
    )
}

/// Composite Gauss rule with `pieces` equal subintervals of `[a, b]`.
pub fn composite_gauss(a: f64, b: f64, pieces: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut pts = Vec::with_capacity(pieces * n);
    let mut wts = Vec::with_capacity(pieces * n);
    let h = (b - a) / pieces as f64;
    for k in 0..pieces {
        let lo = a + k as f64 * h;
        let hi = if k + 1 == pieces { b } else { lo + h };
        let (p, w) = gauss_on(lo, hi, n);
        pts.extend(p);
        wts.extend(w);
    }
    (pts, wts)
}

/// Trapezoid rule for samples `values` on the (possibly non-uniform) grid `times`.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

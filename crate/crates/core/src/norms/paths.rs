//! Vector-valued polynomial paths `t ↦ Σ cₖ tᵏ` used as exact test functions.

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PolyPath {
    coeffs: Vec<DVector<f64>>,
}

impl PolyPath {
    /// Coefficients of `1, t, t², …`; all of the same length.
    pub fn new(coeffs: Vec<DVector<f64>>) -> Result<Self> {
        let n = coeffs.first().map(|c| c.len()).ok_or_else(|| Error::InvalidArgument("path needs a coefficient".into()))?;
        if let Some(c) = coeffs.iter().find(|c| c.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: c.len(), context: "path coefficient" });
        }
        Ok(Self { coeffs })
    }

    /// `p(t) = φ(t)·w` for a scalar polynomial `φ` given by its coefficients.
    pub fn scalar_times(poly: &[f64], w: &DVector<f64>) -> Self {
        Self { coeffs: poly.iter().map(|c| w * *c).collect() }
    }

    pub fn dim(&self) -> usize {
        self.coeffs[0].len()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn at(&self, t: f64) -> DVector<f64> {
        let mut acc = DVector::zeros(self.dim());
        for c in self.coeffs.iter().rev() {
            acc = acc * t + c;
        }
        acc
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() == 1 {
            return Self { coeffs: vec![DVector::zeros(self.dim())] };
        }
        Self {
            coeffs: self.coeffs.iter().enumerate().skip(1).map(|(k, c)| c * k as f64).collect(),
        }
    }

    /// `p(t) − ṗ(T)·t`, which has zero velocity at `T`.
    pub fn with_zero_final_velocity(&self, horizon: f64) -> Self {
        let slope = self.derivative().at(horizon);
        let mut coeffs = self.coeffs.clone();
        if coeffs.len() < 2 {
            coeffs.push(DVector::zeros(self.dim()));
        }
        coeffs[1] -= slope;
        Self { coeffs }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation_and_derivatives() {
        let w = DVector::from_column_slice(&[1.0, -2.0]);
        let p = PolyPath::scalar_times(&[1.0, 0.0, 3.0], &w);
        assert_eq!(p.at(2.0), &w * 13.0);
        assert_eq!(p.derivative().at(2.0), &w * 12.0);
        assert_eq!(p.derivative().derivative().derivative().at(5.0), DVector::zeros(2));
        let q = p.with_zero_final_velocity(0.7);
        assert!(q.derivative().at(0.7).norm() < 1e-15);
    }

    #[test]
    fn mismatched_coefficients_rejected() {
        assert!(PolyPath::new(vec![DVector::zeros(2), DVector::zeros(3)]).is_err());
        assert!(PolyPath::new(vec![]).is_err());
    }
}

//! The mixture function `xi(x) = sum_p a_p x^p` and its derived series.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Finite nonnegative power series on `[-radius, radius]`.
///
/// A base mixture lives on `[-1, 1]`. Recentering at `q` produces a series on
/// `[-(1-q), 1-q]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSeries {
    coefficients: Vec<f64>,
    radius: f64,
}

fn falling(p: usize, k: usize) -> f64 {
    ((p - k + 1)..=p).fold(1.0, |acc, j| acc * j as f64)
}

impl CovarianceSeries {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if let Some((p, a)) = coefficients.iter().enumerate().find(|(_, a)| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::Invalid(format!("coefficient a_{p} = {a} must be finite and nonnegative")));
        }
        Ok(Self {
            coefficients,
            radius: 1.0,
        })
    }

    /// `xi == 0`.
    pub fn zero() -> Self {
        Self {
            coefficients: Vec::new(),
            radius: 1.0,
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Largest `p` with `a_p > 0`.
    pub fn degree(&self) -> Option<usize> {
        self.coefficients.iter().rposition(|&a| a > 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.degree().is_none()
    }

    fn check_x(&self, x: f64) -> Result<()> {
        if x.is_finite() && x.abs() <= self.radius {
            Ok(())
        } else {
            domain(format!("|x| = {} exceeds series radius {}", x.abs(), self.radius))
        }
    }

    fn check_q(&self, q: f64) -> Result<()> {
        if q.is_finite() && (0.0..=self.radius).contains(&q) {
            Ok(())
        } else {
            domain(format!("q = {q} outside [0, {}]", self.radius))
        }
    }

    /// `k`-th derivative at `x` by Horner evaluation.
    pub fn xi_eval(&self, k: usize, x: f64) -> Result<f64> {
        self.check_x(x)?;
        Ok(self.deriv(k, x))
    }

    pub(crate) fn deriv(&self, k: usize, x: f64) -> f64 {
        let n = self.coefficients.len();
        if k >= n {
            return 0.0;
        }
        let mut acc = 0.0;
        for p in (k..n).rev() {
            acc = acc * x + self.coefficients[p] * falling(p, k);
        }
        acc
    }

    /// `xi(x)`.
    pub fn value(&self, x: f64) -> Result<f64> {
        self.xi_eval(0, x)
    }

    /// The recentered series `xi_q(z) = xi(q+z) - xi'(q) z - xi(q)`.
    ///
    /// Its coefficients are the Taylor coefficients `xi^(k)(q)/k!` for `k >= 2`,
    /// which are nonnegative, so the result is again a covariance series.
    pub fn xi_recenter(&self, q: f64) -> Result<CovarianceSeries> {
        self.check_q(q)?;
        let n = self.coefficients.len();
        let mut coefficients = vec![0.0; n];
        let mut fact = 1.0;
        for k in 0..n {
            if k > 0 {
                fact *= k as f64;
            }
            if k >= 2 {
                coefficients[k] = self.deriv(k, q) / fact;
            }
        }
        Ok(CovarianceSeries {
            coefficients,
            radius: self.radius - q,
        })
    }

    /// `xi_q(z)` straight from the defining formula.
    pub fn recentered_value(&self, q: f64, z: f64) -> Result<f64> {
        self.check_q(q)?;
        self.check_x(q + z)?;
        Ok(self.deriv(0, q + z) - self.deriv(1, q) * z - self.deriv(0, q))
    }

    /// Onsager term `On(q) = xi(R) - (R-q) xi'(q) - xi(q)` with `R` the radius (1 for a base mixture).
    pub fn onsager(&self, q: f64) -> Result<f64> {
        self.check_q(q)?;
        let r = self.radius;
        Ok(self.deriv(0, r) - (r - q) * self.deriv(1, q) - self.deriv(0, q))
    }

    /// `On'(q) = -(R-q) xi''(q)`.
    pub fn onsager_derivative(&self, q: f64) -> Result<f64> {
        self.check_q(q)?;
        Ok(-(self.radius - q) * self.deriv(2, q))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn eval_examples() {
        let x2 = CovarianceSeries::new(vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(x2.xi_eval(0, 0.5).unwrap(), 0.25);
        assert_eq!(x2.xi_eval(1, 1.0).unwrap(), 2.0);
        assert_eq!(x2.xi_eval(3, 0.7).unwrap(), 0.0);
        let mix = CovarianceSeries::new(vec![0.0, 0.0, 1.0, 0.5]).unwrap();
        assert_eq!(mix.xi_eval(3, 1.0).unwrap(), 3.0);
        assert!(matches!(x2.xi_eval(0, 1.5), Err(Error::Domain(_))));
        assert!(matches!(x2.xi_eval(0, f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_negative_coefficients() {
        assert!(CovarianceSeries::new(vec![0.0, -1.0]).is_err());
        assert!(CovarianceSeries::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn recenter_examples() {
        let x2 = CovarianceSeries::new(vec![0.0, 0.0, 1.0]).unwrap();
        for q in [0.0, 0.2, 0.6] {
            let r = x2.xi_recenter(q).unwrap();
            assert!(close(r.value(0.3).unwrap(), 0.09, 1e-15));
        }
        let x3 = CovarianceSeries::new(vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        let r = x3.xi_recenter(0.5).unwrap();
        assert!(close(r.value(0.25).unwrap(), 0.109375, 1e-15));
        assert!(close(x3.recentered_value(0.5, 0.25).unwrap(), 0.109375, 1e-15));
        assert_eq!(r.value(0.0).unwrap(), 0.0);
        assert_eq!(r.xi_eval(1, 0.0).unwrap(), 0.0);
        assert!(x3.xi_recenter(1.2).is_err());
        assert!(x3.xi_recenter(-0.1).is_err());
        assert!(r.value(0.6).is_err());
    }

    #[test]
    fn onsager_examples() {
        let x2 = CovarianceSeries::new(vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(x2.onsager(0.0).unwrap(), 1.0);
        assert_eq!(x2.onsager(1.0).unwrap(), 0.0);
        assert!(close(x2.onsager(0.5).unwrap(), 0.25, 1e-15));
        let mix = CovarianceSeries::new(vec![0.3, 0.1, 1.0, 0.5, 0.2]).unwrap();
        assert_eq!(mix.onsager(1.0).unwrap(), 0.0);
        assert!(mix.onsager(1.01).is_err());
    }

    #[test]
    fn derivative_matches_direct_sum() {
        let a = vec![0.3, 0.1, 1.0, 0.5, 0.2, 0.7];
        let s = CovarianceSeries::new(a.clone()).unwrap();
        for k in 0..7 {
            let direct: f64 = a.iter().enumerate().filter(|(p, _)| *p >= k).map(|(p, ap)| ap * falling(p, k)).sum();
            assert!(close(s.xi_eval(k, 1.0).unwrap(), direct, 1e-14));
        }
    }

    fn series() -> impl Strategy<Value = CovarianceSeries> {
        prop::collection::vec(0.0f64..2.0, 1..7).prop_map(|c| CovarianceSeries::new(c).unwrap())
    }

    proptest! {
        #[test]
        fn onsager_is_recentered_value_at_complement(s in series(), q in 0.0f64..=1.0) {
            let on = s.onsager(q).unwrap();
            let via = s.xi_recenter(q).unwrap().value(1.0 - q).unwrap();
            prop_assert!(close(on, via, 1e-12));
            prop_assert!(on >= -1e-12);
        }

        #[test]
        fn recentering_composes(s in series(), q in 0.0f64..0.5, qq in 0.0f64..0.5, t in -1.0f64..1.0) {
            let a = s.xi_recenter(q).unwrap().xi_recenter(qq).unwrap();
            let b = s.xi_recenter(q + qq).unwrap();
            let z = t * (1.0 - q - qq) * 0.999;
            prop_assert!(close(a.value(z).unwrap(), b.value(z).unwrap(), 1e-12));
        }

        #[test]
        fn coefficient_form_matches_definition(s in series(), q in 0.0f64..1.0, t in -1.0f64..1.0) {
            let z = t * (1.0 - q);
            let r = s.xi_recenter(q).unwrap();
            prop_assert!(close(r.value(z).unwrap(), s.recentered_value(q, z).unwrap(), 1e-11));
        }

        #[test]
        fn derivatives_monotone_on_unit_interval(s in series(), x in 0.0f64..1.0, y in 0.0f64..1.0, k in 0usize..5) {
            let (lo, hi) = if x < y { (x, y) } else { (y, x) };
            prop_assert!(s.xi_eval(k, lo).unwrap() <= s.xi_eval(k, hi).unwrap() + 1e-12);
        }

        #[test]
        fn onsager_derivative_matches_finite_difference(s in series(), q in 0.01f64..0.99) {
            let h = 1e-6;
            let fd = (s.onsager(q + h).unwrap() - s.onsager(q - h).unwrap()) / (2.0 * h);
            prop_assert!((fd - s.onsager_derivative(q).unwrap()).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }
}

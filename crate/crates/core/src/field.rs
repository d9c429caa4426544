//! Generalized external fields `f_N(sigma) = f_N(P^U sigma)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{domain, Error, Result};
use crate::linalg::{axpy, inner, norm};
use crate::NORM_TOL;

pub type CustomValue = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type CustomGradient = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum FieldKind {
    None,
    /// `h * sum_i sigma_i`
    Linear { h: f64 },
    /// `(h/N) (sum_i sigma_i)^2`
    QuadraticSpike { h: f64 },
    /// Function of the `K` coordinates `<sigma, u_j>`, with an optional gradient in those coordinates.
    Custom {
        value: CustomValue,
        gradient: Option<CustomGradient>,
    },
}

impl fmt::Debug for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldKind::None => write!(f, "None"),
            FieldKind::Linear { h } => write!(f, "Linear {{ h: {h} }}"),
            FieldKind::QuadraticSpike { h } => write!(f, "QuadraticSpike {{ h: {h} }}"),
            FieldKind::Custom { gradient, .. } => write!(f, "Custom {{ gradient: {} }}", gradient.is_some()),
        }
    }
}

/// An external field together with its subspace basis `u_1..u_K`.
#[derive(Debug, Clone)]
pub struct ExternalField {
    kind: FieldKind,
    basis: Vec<Vec<f64>>,
    lipschitz_bound: f64,
}

const CUSTOM_FD_STEP: f64 = 1e-5;

impl ExternalField {
    /// No field. The subspace is the all-ones direction so the cover still has `K = 1`.
    pub fn none(n: usize) -> Self {
        Self {
            kind: FieldKind::None,
            basis: vec![vec![1.0; n]],
            lipschitz_bound: 0.0,
        }
    }

    pub fn linear(n: usize, h: f64) -> Self {
        Self {
            kind: FieldKind::Linear { h },
            basis: vec![vec![1.0; n]],
            lipschitz_bound: h.abs() * n as f64,
        }
    }

    pub fn quadratic_spike(n: usize, h: f64) -> Self {
        Self {
            kind: FieldKind::QuadraticSpike { h },
            basis: vec![vec![1.0; n]],
            lipschitz_bound: 2.0 * h.abs() * n as f64,
        }
    }

    pub fn custom(
        basis: Vec<Vec<f64>>,
        value: CustomValue,
        gradient: Option<CustomGradient>,
        lipschitz_bound: f64,
    ) -> Result<Self> {
        Self::check_basis(&basis)?;
        Ok(Self {
            kind: FieldKind::Custom { value, gradient },
            basis,
            lipschitz_bound,
        })
    }

    /// Replaces the subspace basis of a field that ignores it (`None` only).
    pub fn none_with_basis(basis: Vec<Vec<f64>>) -> Result<Self> {
        Self::check_basis(&basis)?;
        Ok(Self {
            kind: FieldKind::None,
            basis,
            lipschitz_bound: 0.0,
        })
    }

    fn check_basis(basis: &[Vec<f64>]) -> Result<()> {
        let Some(first) = basis.first() else {
            return Err(Error::Invalid("field basis needs at least one vector".into()));
        };
        let n = first.len();
        if n == 0 || basis.iter().any(|u| u.len() != n) {
            return Err(Error::Invalid("field basis vectors must share a positive length".into()));
        }
        for (i, u) in basis.iter().enumerate() {
            for (j, v) in basis.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                if (inner(u, v) - target).abs() > 1e-10 {
                    return Err(Error::Invalid(format!("field basis not orthonormal at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn k(&self) -> usize {
        self.basis.len()
    }

    pub fn n(&self) -> usize {
        self.basis[0].len()
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    pub fn label(&self) -> String {
        match &self.kind {
            FieldKind::None => "none".into(),
            FieldKind::Linear { h } => format!("linear(h={h})"),
            FieldKind::QuadraticSpike { h } => format!("quadratic_spike(h={h})"),
            FieldKind::Custom { .. } => "custom".into(),
        }
    }

    /// Projection coordinates `<sigma, u_j>`.
    pub fn coords(&self, sigma: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|u| inner(sigma, u)).collect()
    }

    /// Field value from projection coordinates.
    pub fn value_from_coords(&self, coords: &[f64]) -> f64 {
        let n = self.n() as f64;
        match &self.kind {
            FieldKind::None => 0.0,
            FieldKind::Linear { h } => h * n * coords[0],
            FieldKind::QuadraticSpike { h } => h * n * coords[0] * coords[0],
            FieldKind::Custom { value, .. } => value(coords),
        }
    }

    pub fn field_value(&self, sigma: &[f64]) -> Result<f64> {
        check_len(sigma, self.n())?;
        let r = norm(sigma);
        if !(r <= 1.0 + NORM_TOL) {
            return domain(format!("field evaluated at norm {r} > 1"));
        }
        Ok(self.value_unchecked(sigma))
    }

    pub(crate) fn value_unchecked(&self, sigma: &[f64]) -> f64 {
        match &self.kind {
            FieldKind::None => 0.0,
            FieldKind::Linear { h } => h * sigma.iter().sum::<f64>(),
            FieldKind::QuadraticSpike { h } => {
                let s: f64 = sigma.iter().sum();
                h * s * s / sigma.len() as f64
            }
            FieldKind::Custom { value, .. } => value(&self.coords(sigma)),
        }
    }

    /// Gradient in `sigma` (standard partial derivatives).
    pub fn field_gradient(&self, sigma: &[f64]) -> Vec<f64> {
        let n = sigma.len();
        match &self.kind {
            FieldKind::None => vec![0.0; n],
            FieldKind::Linear { h } => vec![*h; n],
            FieldKind::QuadraticSpike { h } => {
                let s: f64 = sigma.iter().sum();
                vec![2.0 * h * s / n as f64; n]
            }
            FieldKind::Custom { value, gradient } => {
                let c = self.coords(sigma);
                let g = match gradient {
                    Some(g) => g(&c),
                    None => (0..c.len())
                        .map(|j| {
                            let mut p = c.clone();
                            let mut m = c.clone();
                            p[j] += CUSTOM_FD_STEP;
                            m[j] -= CUSTOM_FD_STEP;
                            (value(&p) - value(&m)) / (2.0 * CUSTOM_FD_STEP)
                        })
                        .collect(),
                };
                let mut out = vec![0.0; n];
                for (gj, u) in g.iter().zip(&self.basis) {
                    axpy(&mut out, gj / n as f64, u);
                }
                out
            }
        }
    }
}

pub(crate) fn check_len(v: &[f64], n: usize) -> Result<()> {
    if v.len() == n {
        Ok(())
    } else {
        Err(Error::Invalid(format!("vector has length {}, expected {n}", v.len())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_examples() {
        let f = ExternalField::linear(4, 0.2);
        assert!((f.field_value(&[1.0; 4]).unwrap() - 0.8).abs() < 1e-15);
        let q = ExternalField::quadratic_spike(4, 1.0);
        assert_eq!(q.field_value(&[1.0, -1.0, 0.5, -0.5]).unwrap(), 0.0);
        let q = ExternalField::quadratic_spike(4, 0.5);
        assert_eq!(q.field_value(&[1.0, 1.0, 0.0, 0.0]).unwrap(), 0.5);
        assert!(f.field_value(&[2.0; 4]).is_err());
    }

    #[test]
    fn value_depends_on_projection_only() {
        let f = ExternalField::quadratic_spike(4, 0.7);
        let s = [0.3, -0.2, 0.5, 0.1];
        let c = f.coords(&s);
        assert!((f.value_from_coords(&c) - f.field_value(&s).unwrap()).abs() < 1e-14);
        let mut t = s;
        t[0] += 0.1;
        t[1] -= 0.1;
        assert!((f.field_value(&t).unwrap() - f.field_value(&s).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let n = 5;
        let u2: Vec<f64> = vec![1.0, -1.0, 1.0, -1.0, 0.0].iter().map(|x| x * (5.0f64 / 4.0).sqrt()).collect();
        let basis = vec![vec![1.0; n], u2];
        let custom = ExternalField::custom(basis, Arc::new(|c: &[f64]| (2.0 * c[0]).sin() + c[1] * c[1] * 3.0), None, 10.0)
            .unwrap();
        let fields = [
            ExternalField::linear(n, 0.4),
            ExternalField::quadratic_spike(n, -0.3),
            custom,
        ];
        let s = [0.2, -0.4, 0.1, 0.3, -0.2];
        for f in &fields {
            let g = f.field_gradient(&s);
            for i in 0..n {
                let mut p = s;
                let mut m = s;
                p[i] += 1e-5;
                m[i] -= 1e-5;
                let fd = (f.field_value(&p).unwrap() - f.field_value(&m).unwrap()) / 2e-5;
                assert!((fd - g[i]).abs() < 1e-6, "{:?} {i}: {fd} vs {}", f.kind(), g[i]);
            }
        }
    }

    #[test]
    fn rejects_non_orthonormal_basis() {
        let bad = vec![vec![1.0, 1.0], vec![1.0, 0.0]];
        assert!(ExternalField::custom(bad, Arc::new(|_: &[f64]| 0.0), None, 0.0).is_err());
    }
}

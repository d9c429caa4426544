//! Vector helpers under the normalized inner product `<a,b> = (1/N) sum a_i b_i`.

/// Normalized inner product.
pub fn inner(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

/// Normalized squared norm.
pub fn norm_sq(a: &[f64]) -> f64 {
    inner(a, a)
}

/// Normalized norm.
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// Plain Euclidean dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `y += s * x`
pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

/// Scaled copy with unit normalized norm, or `None` for the zero vector.
pub fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    if n > 0.0 && n.is_finite() {
        Some(scale(a, 1.0 / n))
    } else {
        None
    }
}

/// Removes the components along an orthonormal family, two passes.
pub fn project_out(v: &[f64], basis: &[&[f64]]) -> Vec<f64> {
    let mut r = v.to_vec();
    for _ in 0..2 {
        for u in basis {
            let c = inner(&r, u);
            axpy(&mut r, -c, u);
        }
    }
    r
}

/// Projection onto the span of an orthonormal family.
pub fn project_onto(v: &[f64], basis: &[&[f64]]) -> Vec<f64> {
    let mut p = vec![0.0; v.len()];
    for u in basis {
        let c = inner(v, u);
        axpy(&mut p, c, u);
    }
    p
}

/// Standard basis vector `e_i` scaled to unit normalized norm.
pub fn unit_axis(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = (n as f64).sqrt();
    e
}

/// `log(sum exp(x))`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mut acc = LogSumExp::new();
    for &x in xs {
        acc.push(x);
    }
    acc.value()
}

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    pub fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn merge(&mut self, other: &LogSumExp) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if other.max <= self.max {
            self.sum += other.sum * (other.max - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - other.max).exp() + other.sum;
            self.max = other.max;
        }
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    /// Sum of `exp(x - max)`.
    pub fn scaled_sum(&self) -> f64 {
        self.sum
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inner_is_normalized() {
        let a = vec![1.0; 4];
        assert_eq!(norm(&a), 1.0);
        assert_eq!(inner(&a, &[1.0, -1.0, 1.0, -1.0]), 0.0);
        assert_eq!(norm(&unit_axis(9, 2)), 1.0);
    }

    #[test]
    fn project_out_leaves_orthogonal_residual() {
        let u = normalized(&[1.0, 2.0, 0.0]).unwrap();
        let r = project_out(&[3.0, -1.0, 2.0], &[&u]);
        assert!(inner(&r, &u).abs() < 1e-15);
        let p = project_onto(&[3.0, -1.0, 2.0], &[&u]);
        let back = add(&p, &r);
        for (x, y) in back.iter().zip([3.0, -1.0, 2.0]) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn log_sum_exp_matches_direct_and_merges() {
        let xs = [0.1, -3.0, 2.5, 700.0, 699.0];
        let direct = 700.0 + (1.0 + (-1.0f64).exp() + (2.5f64 - 700.0).exp()).ln();
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-12);
        let mut a = LogSumExp::new();
        let mut b = LogSumExp::new();
        xs[..2].iter().for_each(|&x| a.push(x));
        xs[2..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert!((a.value() - direct).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }
}

//! Reference measures and entropy functionals.

use std::f64::consts::{LN_2, PI};

use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::field::check_len;
use crate::linalg::{inner, norm, normalized, unit_axis};
use crate::quadrature::integrate;
use crate::NORM_TOL;

/// Largest `N` for exact half-space counting on the hypercube.
pub const ISING_EXACT_MAX_N: usize = 40;

const CAP_ABS_TOL: f64 = 1e-12;
const LAMBDA_SEARCH_ITERATIONS: usize = 200;
const LAMBDA_SEARCH_MIN_STEP: f64 = 1e-6;

/// Finite weighted set of unit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::Invalid("point cloud needs matching nonempty points and weights".into()));
        }
        let n = points[0].len();
        if n == 0 || points.iter().any(|p| p.len() != n) {
            return Err(Error::Invalid("point cloud points must share a positive dimension".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::Invalid(format!("point cloud weight {w} must be positive")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("point cloud weights sum to {total}, not 1")));
        }
        if let Some(p) = points.iter().find(|p| (norm(p) - 1.0).abs() > NORM_TOL) {
            return Err(Error::Invalid(format!("point cloud point has norm {}", norm(p))));
        }
        Ok(Self { points, weights })
    }

    /// Uniform weights over the given unit vectors.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let w = 1.0 / points.len().max(1) as f64;
        let weights = vec![w; points.len()];
        Self::new(points, weights)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n(&self) -> usize {
        self.points[0].len()
    }

    /// Reads rows `x_1, ..., x_N, weight` without a header.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Invalid(e.to_string()))?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Invalid(format!("bad number {s:?}: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() < 2 {
                return Err(Error::Invalid("point cloud row needs coordinates and a weight".into()));
            }
            weights.push(vals[vals.len() - 1]);
            points.push(vals[..vals.len() - 1].to_vec());
        }
        Self::new(points, weights)
    }

    pub fn load_csv(path: &std::path::Path) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for (p, wt) in self.points.iter().zip(&self.weights) {
            let row: Vec<String> = p.iter().chain(std::iter::once(wt)).map(|x| format!("{x:e}")).collect();
            w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Probability measure on the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceMeasure {
    IsingUniform { n: usize },
    SphereUniform { n: usize },
    PointCloud(PointCloud),
}

impl ReferenceMeasure {
    pub fn n(&self) -> usize {
        match self {
            ReferenceMeasure::IsingUniform { n } | ReferenceMeasure::SphereUniform { n } => *n,
            ReferenceMeasure::PointCloud(c) => c.n(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ReferenceMeasure::IsingUniform { .. } => "ising",
            ReferenceMeasure::SphereUniform { .. } => "sphere",
            ReferenceMeasure::PointCloud(_) => "point_cloud",
        }
    }
}

/// Binary entropy `J(m)`, extended by `log 2` for `|m| >= 1`.
pub fn binary_entropy(m: f64) -> f64 {
    if m.abs() >= 1.0 {
        LN_2
    } else {
        0.5 * ((1.0 + m) * m.ln_1p() + (1.0 - m) * (-m).ln_1p())
    }
}

/// `I_Ising(m) = -sum_i J(m_i)`.
pub fn ising_entropy(m: &[f64]) -> f64 {
    -m.iter().map(|&x| binary_entropy(x)).sum::<f64>()
}

/// `I_sph(m) = (N/2) log(1 - ||m||^2)`.
pub fn spherical_entropy(m: &[f64]) -> Result<f64> {
    let q = crate::linalg::norm_sq(m);
    if !(q < 1.0) {
        return domain(format!("spherical entropy needs ||m|| < 1, got {}", q.sqrt()));
    }
    Ok(0.5 * m.len() as f64 * (-q).ln_1p())
}

/// `P(<sigma, u> >= t)` for `sigma` uniform on the sphere in dimension `n` and a unit `u`.
pub fn cap_tail(n: usize, t: f64) -> f64 {
    if t <= -1.0 {
        return 1.0;
    }
    if t > 1.0 {
        return 0.0;
    }
    if n == 1 {
        return if t <= 1.0 { 0.5 } else { 0.0 } + if t <= -1.0 { 0.5 } else { 0.0 };
    }
    // x = cos(theta) turns the density (1-x^2)^{(N-3)/2} into sin^{N-2}(theta).
    let log_c = ln_gamma(n as f64 / 2.0) - ln_gamma((n as f64 - 1.0) / 2.0) - 0.5 * PI.ln();
    let k = (n - 2) as i32;
    let upper = t.clamp(-1.0, 1.0).acos();
    let f = move |theta: f64| (log_c + k as f64 * theta.sin().ln()).exp();
    let f = move |theta: f64| if theta <= 0.0 || theta >= PI { if k == 0 { f(0.5) } else { 0.0 } } else { f(theta) };
    let v = integrate(f, 0.0, upper, CAP_ABS_TOL);
    let v = if v > 0.0 && v < 1e-3 { integrate(f, 0.0, upper, v * 1e-10) } else { v };
    v.clamp(0.0, 1.0)
}

/// Closed-form cap bound `sqrt(N/2pi) (1-alpha^2)^{(N-3)/2}`.
pub fn cap_tail_bound(n: usize, alpha: f64) -> f64 {
    (n as f64 / (2.0 * PI)).sqrt() * (1.0 - alpha * alpha).powf((n as f64 - 3.0) / 2.0)
}

/// Sorted subset sums `sum_i lambda_i s_i`, `s in {-1,1}`, over a block of coordinates.
fn signed_sums(lambda: &[f64]) -> Vec<f64> {
    let k = lambda.len();
    let mut sums = vec![0.0; 1 << k];
    sums[0] = -lambda.iter().sum::<f64>();
    for mask in 1usize..(1 << k) {
        let low = mask.trailing_zeros() as usize;
        sums[mask] = sums[mask & (mask - 1)] + 2.0 * lambda[low];
    }
    sums
}

/// Number of `sigma in {-1,1}^N` with `sum_i lambda_i sigma_i >= threshold`, by meet in the middle.
pub fn hypercube_count_at_least(lambda: &[f64], threshold: f64) -> u64 {
    let h = lambda.len() / 2;
    let a = signed_sums(&lambda[..h]);
    let mut b = signed_sums(&lambda[h..]);
    b.sort_by(|x, y| x.total_cmp(y));
    a.iter()
        .map(|&x| (b.len() - b.partition_point(|&y| x + y < threshold)) as u64)
        .sum()
}

/// `r_delta(m, lambda) = log E[<lambda, sigma - m> >= -delta]`.
pub fn halfspace_log_mass(e: &ReferenceMeasure, lambda: &[f64], m: &[f64], delta: f64) -> Result<f64> {
    let n = e.n();
    check_len(lambda, n)?;
    check_len(m, n)?;
    let ln = norm(lambda);
    if (ln - 1.0).abs() > NORM_TOL {
        return domain(format!("lambda must be a unit vector, has norm {ln}"));
    }
    if !(delta >= 0.0) {
        return domain(format!("delta = {delta} must be nonnegative"));
    }
    Ok(log_mass_unchecked(e, lambda, m, delta))
}

fn log_mass_unchecked(e: &ReferenceMeasure, lambda: &[f64], m: &[f64], delta: f64) -> f64 {
    let t = inner(lambda, m) - delta;
    match e {
        ReferenceMeasure::IsingUniform { n } => {
            let count = hypercube_count_at_least(lambda, *n as f64 * t);
            ((count as f64) * 0.5f64.powi(*n as i32)).ln()
        }
        ReferenceMeasure::SphereUniform { n } => cap_tail(*n, t).ln(),
        ReferenceMeasure::PointCloud(c) => c
            .points
            .iter()
            .zip(&c.weights)
            .filter(|(p, _)| inner(lambda, p) >= t)
            .map(|(_, w)| w)
            .sum::<f64>()
            .ln(),
    }
}

fn check_entropy_args(e: &ReferenceMeasure, m: &[f64], delta: f64) -> Result<()> {
    check_len(m, e.n())?;
    if !(delta > 0.0 && delta.is_finite()) {
        return domain(format!("delta = {delta} must be positive"));
    }
    if let ReferenceMeasure::IsingUniform { n } = e {
        if *n > ISING_EXACT_MAX_N {
            return Err(Error::Resource {
                what: "hypercube dimension for exact half-space masses".into(),
                required: *n as u128,
                budget: ISING_EXACT_MAX_N as u128,
            });
        }
    }
    Ok(())
}

/// Candidate normals tried before the local search, in priority order.
fn lambda_candidates(m: &[f64], delta: f64, extra: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut out = Vec::new();
    let cap = 1.0 - delta;
    if cap > 0.0 {
        let atanh: Vec<f64> = m.iter().map(|&x| x.clamp(-cap, cap).atanh()).collect();
        out.extend(normalized(&atanh));
    }
    out.extend(normalized(m));
    let outside: Vec<f64> = m.iter().map(|&x| x - x.clamp(-1.0, 1.0)).collect();
    out.extend(normalized(&outside));
    for u in extra {
        if let Some(v) = normalized(u) {
            out.push(v.iter().map(|x| -x).collect());
            out.push(v);
        }
    }
    for i in 0..n {
        let e = unit_axis(n, i);
        out.push(e.iter().map(|x| -x).collect());
        out.push(e);
    }
    out
}

/// Near-minimizer of `r_delta(m, .)` over unit normals.
///
/// Sphere: `m/||m||`, or the first axis when `m = 0`. Otherwise the best
/// candidate (clipped atanh, `m/||m||`, the cube-separating normal, the `extra`
/// directions with both signs, signed axes) refined by coordinate perturbation
/// with a halving step.
pub fn lambda_min_entropy(e: &ReferenceMeasure, m: &[f64], delta: f64, extra: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_entropy_args(e, m, delta)?;
    let n = m.len();
    if let ReferenceMeasure::SphereUniform { .. } = e {
        return Ok(normalized(m).unwrap_or_else(|| unit_axis(n, 0)));
    }
    let eval = |l: &[f64]| log_mass_unchecked(e, l, m, delta);
    let mut best = Vec::new();
    let mut best_r = f64::INFINITY;
    for c in lambda_candidates(m, delta, extra) {
        let r = eval(&c);
        if r < best_r {
            best_r = r;
            best = c;
        }
    }
    let mut step = 0.5;
    let mut stale = 0;
    for it in 0..LAMBDA_SEARCH_ITERATIONS {
        if best_r == f64::NEG_INFINITY || step < LAMBDA_SEARCH_MIN_STEP {
            break;
        }
        let i = it % n;
        let mut improved = false;
        for sign in [1.0, -1.0] {
            let mut trial = best.clone();
            trial[i] += sign * step;
            if let Some(t) = normalized(&trial) {
                let r = eval(&t);
                if r < best_r {
                    best_r = r;
                    best = t;
                    improved = true;
                    break;
                }
            }
        }
        if improved {
            stale = 0;
        } else {
            stale += 1;
            if stale >= n {
                step *= 0.5;
                stale = 0;
            }
        }
    }
    Ok(best)
}

/// Upper bound on `I_{E,delta}(m)`: the half-space log-mass at [`lambda_min_entropy`].
pub fn general_entropy_upper(e: &ReferenceMeasure, m: &[f64], delta: f64, extra: &[Vec<f64>]) -> Result<f64> {
    let lambda = lambda_min_entropy(e, m, delta, extra)?;
    Ok(log_mass_unchecked(e, &lambda, m, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::scale;
    use proptest::prelude::*;
    use rand::Rng;

    fn ising(n: usize) -> ReferenceMeasure {
        ReferenceMeasure::IsingUniform { n }
    }

    /// Log-mass by listing every atom.
    fn brute_ising(lambda: &[f64], m: &[f64], delta: f64) -> f64 {
        let n = lambda.len();
        let t = inner(lambda, m) - delta;
        let mut count = 0u64;
        for mask in 0u64..(1 << n) {
            let s: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
            if inner(lambda, &s) >= t {
                count += 1;
            }
        }
        (count as f64 / (1u64 << n) as f64).ln()
    }

    #[test]
    fn binary_entropy_values() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.5), LN_2);
        assert_eq!(binary_entropy(-1.0), LN_2);
        // 0.75 ln 1.5 + 0.25 ln 0.5, evaluated at 30 digits
        assert!((binary_entropy(0.5) - 0.130_812_035_941_136_96).abs() < 1e-15);
        assert_eq!(binary_entropy(0.3), binary_entropy(-0.3));
    }

    #[test]
    fn ising_and_spherical_entropy_values() {
        assert_eq!(ising_entropy(&[0.0; 5]), 0.0);
        assert!((ising_entropy(&[1.0; 6]) + 6.0 * LN_2).abs() < 1e-15);
        assert!((ising_entropy(&[0.5, 0.5, 0.0, 0.0]) + 2.0 * 0.130_812_035_941_136_96).abs() < 1e-15);
        assert_eq!(spherical_entropy(&[0.0; 3]).unwrap(), 0.0);
        let m = scale(&unit_axis(10, 3), 0.75f64.sqrt());
        assert!((spherical_entropy(&m).unwrap() - 5.0 * 0.25f64.ln()).abs() < 1e-12);
        let m = scale(&unit_axis(16, 0), 0.5f64.sqrt());
        assert!((spherical_entropy(&m).unwrap() + 5.545_177_444_479_562).abs() < 1e-12);
        assert!(spherical_entropy(&unit_axis(4, 0)).is_err());
    }

    #[test]
    fn halfspace_examples() {
        let s = ReferenceMeasure::SphereUniform { n: 7 };
        let l = unit_axis(7, 2);
        assert!((halfspace_log_mass(&s, &l, &[0.0; 7], 0.0).unwrap() - 0.5f64.ln()).abs() < 1e-12);
        assert_eq!(halfspace_log_mass(&ising(1), &[1.0], &[0.0], 0.0).unwrap(), 0.5f64.ln());
        let l = vec![1.0, 1.0];
        assert_eq!(halfspace_log_mass(&ising(2), &l, &[0.0, 0.0], 0.0).unwrap(), 0.75f64.ln());
        assert!(halfspace_log_mass(&ising(2), &[1.0, 0.0], &[0.0, 0.0], 0.0).is_err());
        let far = vec![0.0, 0.0];
        let r = halfspace_log_mass(&ising(2), &l, &far, -1.5);
        assert!(r.is_err());
    }

    #[test]
    fn cap_tail_matches_incomplete_beta() {
        use statrs::function::beta::beta_reg;
        for n in [3usize, 4, 7, 20, 50] {
            for t in [0.0, 0.1, 0.35, 0.6, 0.9] {
                let exact = 0.5 * beta_reg((n as f64 - 1.0) / 2.0, 0.5, 1.0 - t * t);
                let q = cap_tail(n, t);
                assert!((q - exact).abs() < 1e-12, "n={n} t={t}: {q} vs {exact}");
                assert!((cap_tail(n, -t) - (1.0 - exact)).abs() < 1e-12);
            }
        }
        assert_eq!(cap_tail(5, 1.5), 0.0);
        assert_eq!(cap_tail(5, -1.0), 1.0);
        assert!((cap_tail(2, 0.0) - 0.5).abs() < 1e-13);
    }

    #[test]
    fn cap_bound_holds_on_grid() {
        for n in [5usize, 20, 60] {
            for i in 0..50 {
                let alpha = 0.9 * i as f64 / 49.0;
                assert!(cap_tail(n, alpha) <= cap_tail_bound(n, alpha));
            }
        }
    }

    #[test]
    fn meet_in_the_middle_matches_brute_force() {
        let mut rng = crate::rng::stream(3, 0, 0);
        for n in 1..=10 {
            for _ in 0..5 {
                let lambda = normalized(&(0..n).map(|_| rng.random::<f64>() - 0.5).collect::<Vec<_>>()).unwrap();
                let m: Vec<f64> = (0..n).map(|_| 1.6 * rng.random::<f64>() - 0.8).collect();
                let got = halfspace_log_mass(&ising(n), &lambda, &m, 0.1).unwrap();
                assert_eq!(got, brute_ising(&lambda, &m, 0.1), "n={n}");
            }
        }
    }

    #[test]
    fn point_cloud_mass_and_csv() {
        let pts = vec![unit_axis(3, 0), scale(&unit_axis(3, 0), -1.0), unit_axis(3, 1)];
        let c = PointCloud::new(pts, vec![0.5, 0.25, 0.25]).unwrap();
        let e = ReferenceMeasure::PointCloud(c.clone());
        let r = halfspace_log_mass(&e, &unit_axis(3, 0), &[0.0; 3], 0.5).unwrap();
        assert!((r - 0.75f64.ln()).abs() < 1e-15);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(PointCloud::from_csv_reader(&buf[..]).unwrap(), c);
        assert!(PointCloud::new(vec![vec![1.0, 1.0]], vec![0.5]).is_err());
        assert!(PointCloud::new(vec![vec![2.0, 0.0]], vec![1.0]).is_err());
    }

    #[test]
    fn sphere_lambda_rule() {
        let s = ReferenceMeasure::SphereUniform { n: 6 };
        let m = scale(&unit_axis(6, 2), 0.5);
        let l = lambda_min_entropy(&s, &m, 0.1, &[]).unwrap();
        assert!(l.iter().zip(unit_axis(6, 2)).all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(lambda_min_entropy(&s, &[0.0; 6], 0.1, &[]).unwrap(), unit_axis(6, 0));
    }

    #[test]
    fn single_spin_lambda() {
        let r = general_entropy_upper(&ising(1), &[0.0], 0.1, &[]).unwrap();
        assert!(r <= 0.5f64.ln() + 0.1);
    }

    #[test]
    fn outside_cube_is_minus_infinity() {
        let mut m = vec![0.0; 10];
        m[0] = 2.0;
        m[1] = -1.5;
        assert_eq!(general_entropy_upper(&ising(10), &m, 0.1, &[]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn chernoff_chain_bounds_returned_lambda() {
        let n = 12;
        let delta = 0.1;
        let mut rng = crate::rng::stream(8, 0, 0);
        for _ in 0..20 {
            let m: Vec<f64> = (0..n).map(|_| 1.8 * rng.random::<f64>() - 0.9).collect();
            let r = general_entropy_upper(&ising(n), &m, delta, &[]).unwrap();
            let mt: Vec<f64> = m.iter().map(|x| x.clamp(-(1.0 - delta), 1.0 - delta)).collect();
            let lam: Vec<f64> = mt.iter().map(|x| x.atanh()).collect();
            let euclid = lam.iter().map(|x| x * x).sum::<f64>().sqrt();
            let slack = euclid * delta * (n as f64).sqrt();
            let chernoff: f64 = lam.iter().zip(&m).map(|(l, x)| l.cosh().ln() - l * x).sum::<f64>() + slack;
            let chain = ising_entropy(&mt) + slack;
            assert!(r <= chernoff + 1e-12, "{r} > {chernoff}");
            assert!(chernoff <= chain + 1e-12);
        }
    }

    #[test]
    fn lambda_is_deterministic_and_unit() {
        let m: Vec<f64> = (0..8).map(|i| 0.1 * i as f64 - 0.3).collect();
        let a = lambda_min_entropy(&ising(8), &m, 0.1, &[vec![1.0; 8]]).unwrap();
        let b = lambda_min_entropy(&ising(8), &m, 0.1, &[vec![1.0; 8]]).unwrap();
        assert_eq!(a, b);
        assert!((norm(&a) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn j_difference_bound(a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let d = (a - b).abs();
            prop_assume!(d > 0.0);
            let rhs = d * (2.0 * std::f64::consts::E / d.min(1.0)).ln();
            prop_assert!((binary_entropy(a) - binary_entropy(b)).abs() <= rhs);
        }

        #[test]
        fn halfspace_mass_monotone_in_delta(seed in 0u64..1000, d1 in 0.0f64..0.5, d2 in 0.0f64..0.5) {
            let mut rng = crate::rng::stream(seed, 0, 0);
            let n = 7;
            let lambda = normalized(&(0..n).map(|_| rng.random::<f64>() - 0.5).collect::<Vec<_>>()).unwrap();
            let m: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            for e in [ising(n), ReferenceMeasure::SphereUniform { n }] {
                prop_assert!(halfspace_log_mass(&e, &lambda, &m, lo).unwrap() <= halfspace_log_mass(&e, &lambda, &m, hi).unwrap() + 1e-12);
            }
        }
    }
}

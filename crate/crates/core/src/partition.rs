//! Partition functions: exact Ising enumeration, sphere Monte Carlo,
//! restricted sums and the slice measures of a cover node.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cover::{membership, thin_projection, CoverNode};
use crate::entropy::{PointCloud, ReferenceMeasure};
use crate::error::{domain, Error, Result};
use crate::field::ExternalField;
use crate::hamiltonian::DisorderSample;
use crate::linalg::{norm, scale, LogSumExp};
use crate::quadrature::integrate;
use crate::rng::{stream, DOMAIN_POINTS, DOMAIN_SPHERE_MC};

/// Flips between exact energy recomputations.
const GRAY_CHUNK_BITS: usize = 10;
/// Sphere samples per independent stream.
pub const MC_CHUNK: usize = 1024;
/// Largest `N` whose Ising slice is materialized atom by atom.
pub const SLICE_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ExactEnumeration,
    MonteCarlo,
    Quadrature,
}

/// A log partition function with its uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionEstimate {
    pub log_value: f64,
    pub std_error: f64,
    pub method: Method,
    pub samples: u64,
    /// Atoms or samples that passed the restriction.
    pub effective_samples: u64,
    pub seed: Option<u64>,
}

impl PartitionEstimate {
    pub fn per_spin(&self, n: usize) -> f64 {
        self.log_value / n as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("estimate serializes")
    }
}

/// Sphere Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McOptions {
    pub samples: usize,
    pub seed: u64,
}

/// Largest enumerable `N` for a given maximal degree.
pub fn ising_enumeration_limit(max_degree: usize) -> usize {
    match max_degree {
        0..=2 => 24,
        3 => 16,
        _ => 12,
    }
}

fn check_budget(d: &DisorderSample) -> Result<()> {
    let limit = ising_enumeration_limit(d.max_degree());
    if d.n() > limit {
        return Err(Error::Resource {
            what: format!("Ising enumeration at degree {}", d.max_degree()),
            required: 1u128 << d.n().min(127),
            budget: 1u128 << limit,
        });
    }
    Ok(())
}

fn check_dims(d: &DisorderSample, f: &ExternalField) -> Result<()> {
    if f.n() != d.n() {
        return Err(Error::Invalid(format!("field dimension {} differs from N = {}", f.n(), d.n())));
    }
    Ok(())
}

/// Visits every Ising atom in Gray-code order, chunked, and returns per-chunk states in order.
///
/// Within a chunk the energy is updated by single-flip differences and the
/// field through its projection coordinates.
fn gray_chunks<T, I, V>(d: &DisorderSample, f: &ExternalField, beta: f64, init: I, visit: V) -> Vec<T>
where
    T: Send,
    I: Fn() -> T + Sync,
    V: Fn(&mut T, &[f64], f64) + Sync,
{
    let n = d.n();
    let bits = n.min(GRAY_CHUNK_BITS);
    let chunk = 1u64 << bits;
    let chunks = 1u64 << (n - bits);
    let nf = n as f64;
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut state = init();
            let start = c * chunk;
            let g = start ^ (start >> 1);
            let mut sigma: Vec<f64> = (0..n).map(|i| if g >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
            let mut energy = d.energy_unchecked(&sigma);
            let mut coords = f.coords(&sigma);
            visit(&mut state, &sigma, beta * (energy + f.value_from_coords(&coords)));
            for j in start + 1..start + chunk {
                let i = j.trailing_zeros() as usize;
                energy += d.flip_delta(&sigma, i);
                let s = sigma[i];
                for (cj, u) in coords.iter_mut().zip(f.basis()) {
                    *cj -= 2.0 * s * u[i] / nf;
                }
                sigma[i] = -s;
                visit(&mut state, &sigma, beta * (energy + f.value_from_coords(&coords)));
            }
            state
        })
        .collect()
}

fn finish_ising(chunks: Vec<(LogSumExp, u64)>, n: usize) -> PartitionEstimate {
    let mut acc = LogSumExp::new();
    let mut count = 0;
    for (c, k) in &chunks {
        acc.merge(c);
        count += k;
    }
    let log_value = if acc.max() == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        acc.max() + (acc.scaled_sum() * 0.5f64.powi(n as i32)).ln()
    };
    PartitionEstimate {
        log_value,
        std_error: 0.0,
        method: Method::ExactEnumeration,
        samples: 1u64 << n,
        effective_samples: count,
        seed: None,
    }
}

/// `log 2^{-N} sum_sigma exp(beta H^f(sigma))` over the hypercube.
pub fn log_partition_exact_ising(d: &DisorderSample, f: &ExternalField, beta: f64) -> Result<PartitionEstimate> {
    check_dims(d, f)?;
    check_budget(d)?;
    let chunks = gray_chunks(
        d,
        f,
        beta,
        || (LogSumExp::new(), 0u64),
        |s, _, w| {
            s.0.push(w);
            s.1 += 1;
        },
    );
    Ok(finish_ising(chunks, d.n()))
}

fn sphere_sample<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let r = norm(&g);
        if r > 0.0 {
            return scale(&g, 1.0 / r);
        }
    }
}

/// Uniform point on the unit sphere from stream `index` of the sampling domain.
pub fn sphere_points(n: usize, count: usize, seed: u64, index: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, DOMAIN_POINTS, index);
    (0..count).map(|_| sphere_sample(&mut rng, n)).collect()
}

#[derive(Clone, Copy)]
struct MomentAcc {
    first: LogSumExp,
    second: LogSumExp,
    passed: u64,
}

fn sphere_mc(
    d: &DisorderSample,
    f: &ExternalField,
    beta: f64,
    opts: McOptions,
    predicate: Option<&(dyn Fn(&[f64]) -> bool + Sync)>,
) -> PartitionEstimate {
    let n = d.n();
    let total = opts.samples;
    let chunks = total.div_ceil(MC_CHUNK);
    let parts: Vec<MomentAcc> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(opts.seed, DOMAIN_SPHERE_MC, c as u64);
            let mut acc = MomentAcc {
                first: LogSumExp::new(),
                second: LogSumExp::new(),
                passed: 0,
            };
            let len = MC_CHUNK.min(total - c * MC_CHUNK);
            for _ in 0..len {
                let sigma = sphere_sample(&mut rng, n);
                if predicate.is_some_and(|p| !p(&sigma)) {
                    continue;
                }
                let w = beta * (d.energy_unchecked(&sigma) + f.value_unchecked(&sigma));
                acc.first.push(w);
                acc.second.push(2.0 * w);
                acc.passed += 1;
            }
            acc
        })
        .collect();
    let mut first = LogSumExp::new();
    let mut second = LogSumExp::new();
    let mut passed = 0;
    for p in &parts {
        first.merge(&p.first);
        second.merge(&p.second);
        passed += p.passed;
    }
    let ln_n = (total as f64).ln();
    let l1 = first.value();
    let (log_value, std_error) = if l1 == f64::NEG_INFINITY {
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        // Var(e^w)/(n mean^2) with the unbiased variance, on the log scale.
        let ratio = (second.value() - 2.0 * l1 + ln_n).exp();
        (l1 - ln_n, ((ratio - 1.0).max(0.0) / (total as f64 - 1.0)).sqrt())
    };
    PartitionEstimate {
        log_value,
        std_error,
        method: Method::MonteCarlo,
        samples: total as u64,
        effective_samples: passed,
        seed: Some(opts.seed),
    }
}

/// Monte Carlo `log E[exp(beta H^f)]` under the uniform sphere measure.
pub fn log_partition_mc_sphere(
    d: &DisorderSample,
    f: &ExternalField,
    beta: f64,
    samples: usize,
    rng_seed: u64,
) -> Result<PartitionEstimate> {
    check_dims(d, f)?;
    if samples < 100 {
        return domain(format!("sphere Monte Carlo needs at least 100 samples, got {samples}"));
    }
    Ok(sphere_mc(d, f, beta, McOptions { samples, seed: rng_seed }, None))
}

/// `log E[exp(beta h N x_1)]` for the uniform sphere, by quadrature of the one-dimensional marginal.
pub fn log_partition_sphere_linear_quadrature(n: usize, beta: f64, h: f64) -> Result<PartitionEstimate> {
    if n < 2 {
        return domain("sphere marginal needs N >= 2");
    }
    let a = beta * h * n as f64;
    let k = (n - 2) as f64;
    let log_c = statrs::function::gamma::ln_gamma(n as f64 / 2.0)
        - 0.5 * std::f64::consts::PI.ln()
        - statrs::function::gamma::ln_gamma((n as f64 - 1.0) / 2.0);
    // theta = arccos(x); exponent k log sin(theta) + a cos(theta)
    let g = |t: f64| {
        let s = t.sin();
        let base = if k == 0.0 { 0.0 } else { k * s.ln() };
        base + a * t.cos()
    };
    let shift = (0..=4000)
        .map(|i| g(std::f64::consts::PI * i as f64 / 4000.0))
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let value = integrate(|t| (g(t) - shift).exp(), 0.0, std::f64::consts::PI, 1e-13);
    Ok(PartitionEstimate {
        log_value: log_c + shift + value.ln(),
        std_error: 0.0,
        method: Method::Quadrature,
        samples: 0,
        effective_samples: 0,
        seed: None,
    })
}

/// `log E[1_A exp(beta H^f)]` for a membership predicate `A`.
///
/// Atomic measures are summed exactly; the sphere uses Monte Carlo with the indicator.
pub fn restricted_log_partition(
    e: &ReferenceMeasure,
    d: &DisorderSample,
    f: &ExternalField,
    beta: f64,
    predicate: &(dyn Fn(&[f64]) -> bool + Sync),
    mc: Option<McOptions>,
) -> Result<PartitionEstimate> {
    check_dims(d, f)?;
    if e.n() != d.n() {
        return Err(Error::Invalid("measure and disorder dimensions differ".into()));
    }
    match e {
        ReferenceMeasure::IsingUniform { n } => {
            check_budget(d)?;
            let chunks = gray_chunks(
                d,
                f,
                beta,
                || (LogSumExp::new(), 0u64),
                |s, sigma, w| {
                    if predicate(sigma) {
                        s.0.push(w);
                        s.1 += 1;
                    }
                },
            );
            Ok(finish_ising(chunks, *n))
        }
        ReferenceMeasure::PointCloud(c) => {
            let mut acc = LogSumExp::new();
            let mut passed = 0;
            for (p, w) in c.points().iter().zip(c.weights()) {
                if predicate(p) {
                    acc.push(w.ln() + beta * (d.energy_unchecked(p) + f.value_unchecked(p)));
                    passed += 1;
                }
            }
            Ok(PartitionEstimate {
                log_value: acc.value(),
                std_error: 0.0,
                method: Method::ExactEnumeration,
                samples: c.points().len() as u64,
                effective_samples: passed,
                seed: None,
            })
        }
        ReferenceMeasure::SphereUniform { .. } => {
            let opts = mc.ok_or_else(|| Error::Invalid("sphere restriction needs Monte Carlo options".into()))?;
            if opts.samples < 100 {
                return domain(format!("sphere Monte Carlo needs at least 100 samples, got {}", opts.samples));
            }
            Ok(sphere_mc(d, f, beta, opts, Some(predicate)))
        }
    }
}

/// Finite weighted point set with weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoints {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl WeightedPoints {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `log sum_a w_a exp(g(x_a))`.
    pub fn log_expectation_exp(&self, g: impl Fn(&[f64]) -> f64) -> f64 {
        let mut acc = LogSumExp::new();
        for (p, w) in self.points.iter().zip(&self.weights) {
            acc.push(w.ln() + g(p));
        }
        acc.value()
    }
}

/// `E[E_alpha]`, the conditional law on `E_alpha` and its image under the thin projection.
#[derive(Debug, Clone)]
pub struct SliceMeasures {
    pub mass: f64,
    pub mass_std_error: f64,
    /// Set when no atom or sample lands in `E_alpha`; the conditional is then undefined.
    pub empty: bool,
    pub conditional: Option<ReferenceMeasure>,
    pub thin_pushforward: Option<WeightedPoints>,
}

/// Restricts `e` to `E_alpha` of `node` (width `eta`) and renormalizes.
///
/// For the sphere the conditional is the empirical measure of the accepted samples.
pub fn slice_measures(e: &ReferenceMeasure, node: &CoverNode, eta: f64, mc: Option<McOptions>) -> Result<SliceMeasures> {
    let n = node.n();
    if e.n() != n {
        return Err(Error::Invalid("measure and node dimensions differ".into()));
    }
    let inside = |s: &[f64]| membership(node, s, eta).in_e;
    let (kept, kept_weights, mass, se): (Vec<Vec<f64>>, Vec<f64>, f64, f64) = match e {
        ReferenceMeasure::IsingUniform { .. } => {
            if n > SLICE_MAX_N {
                return Err(Error::Resource {
                    what: "Ising slice materialization".into(),
                    required: 1u128 << n.min(127),
                    budget: 1u128 << SLICE_MAX_N,
                });
            }
            let kept: Vec<Vec<f64>> = (0u64..1 << n)
                .into_par_iter()
                .filter_map(|b| {
                    let s: Vec<f64> = (0..n).map(|i| if b >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
                    inside(&s).then_some(s)
                })
                .collect();
            let mass = kept.len() as f64 * 0.5f64.powi(n as i32);
            let w = vec![1.0; kept.len()];
            (kept, w, mass, 0.0)
        }
        ReferenceMeasure::PointCloud(c) => {
            let mut kept = Vec::new();
            let mut w = Vec::new();
            for (p, wt) in c.points().iter().zip(c.weights()) {
                if inside(p) {
                    kept.push(p.clone());
                    w.push(*wt);
                }
            }
            let mass = w.iter().sum();
            (kept, w, mass, 0.0)
        }
        ReferenceMeasure::SphereUniform { .. } => {
            let opts = mc.ok_or_else(|| Error::Invalid("sphere slice needs Monte Carlo options".into()))?;
            if opts.samples == 0 {
                return domain("sphere slice needs at least one sample");
            }
            let chunks = opts.samples.div_ceil(MC_CHUNK);
            let kept: Vec<Vec<f64>> = (0..chunks)
                .into_par_iter()
                .flat_map_iter(|c| {
                    let len = MC_CHUNK.min(opts.samples - c * MC_CHUNK);
                    sphere_points(n, len, opts.seed, c as u64).into_iter().filter(|s| inside(s))
                })
                .collect();
            let p = kept.len() as f64 / opts.samples as f64;
            let w = vec![1.0; kept.len()];
            (kept, w, p, (p * (1.0 - p) / opts.samples as f64).sqrt())
        }
    };
    if kept.is_empty() {
        return Ok(SliceMeasures {
            mass: 0.0,
            mass_std_error: se,
            empty: true,
            conditional: None,
            thin_pushforward: None,
        });
    }
    let total: f64 = kept_weights.iter().sum();
    let weights: Vec<f64> = kept_weights.iter().map(|w| w / total).collect();
    let pushed: Vec<Vec<f64>> = kept.iter().map(|s| thin_projection(node, s)).collect();
    Ok(SliceMeasures {
        mass,
        mass_std_error: se,
        empty: false,
        conditional: Some(ReferenceMeasure::PointCloud(PointCloud::new(kept, weights.clone())?)),
        thin_pushforward: Some(WeightedPoints { points: pushed, weights }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::{build_node, classify, IncrementIndex};
    use crate::covariance::CovarianceSeries;
    use crate::entropy::general_entropy_upper;
    use crate::hamiltonian::{sample_disorder_with, SampleOptions};

    fn disorder(n: usize, coeffs: Vec<f64>, seed: u64) -> DisorderSample {
        sample_disorder_with(n, &CovarianceSeries::new(coeffs).unwrap(), seed, SampleOptions::default()).unwrap()
    }

    fn naive(d: &DisorderSample, f: &ExternalField, beta: f64) -> f64 {
        let n = d.n();
        let ws: Vec<f64> = (0u64..1 << n)
            .map(|b| {
                let s: Vec<f64> = (0..n).map(|i| if b >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
                beta * d.energy_with_field(f, &s).unwrap()
            })
            .collect();
        crate::linalg::log_sum_exp(&ws) - n as f64 * std::f64::consts::LN_2
    }

    #[test]
    fn beta_zero_is_exactly_zero() {
        let d = disorder(10, vec![0.0, 0.0, 1.0], 1);
        let f = ExternalField::linear(10, 0.3);
        assert_eq!(log_partition_exact_ising(&d, &f, 0.0).unwrap().log_value, 0.0);
        let mc = log_partition_mc_sphere(&d, &f, 0.0, 500, 3).unwrap();
        assert_eq!(mc.log_value, 0.0);
        assert_eq!(mc.std_error, 0.0);
    }

    #[test]
    fn product_measure_closed_form() {
        let n = 14;
        let d = disorder(n, vec![0.0], 1);
        let f = ExternalField::linear(n, 0.7);
        let got = log_partition_exact_ising(&d, &f, 0.9).unwrap().log_value;
        let want = n as f64 * (0.9f64 * 0.7).cosh().ln();
        assert!((got - want).abs() < 1e-10);
    }

    #[test]
    fn gray_code_matches_naive() {
        let f12 = ExternalField::linear(12, 0.2);
        let d = disorder(12, vec![0.0, 0.0, 1.0], 5);
        let got = log_partition_exact_ising(&d, &f12, 1.3).unwrap().log_value;
        assert!((got - naive(&d, &f12, 1.3)).abs() < 1e-10);
        let d3 = disorder(11, vec![0.0, 0.0, 0.5, 0.5, 0.3], 6);
        let q = ExternalField::quadratic_spike(11, 0.4);
        let got = log_partition_exact_ising(&d3, &q, 0.8).unwrap().log_value;
        assert!((got - naive(&d3, &q, 0.8)).abs() < 1e-10);
    }

    #[test]
    fn enumeration_budget() {
        let d = disorder(17, vec![0.0, 0.0, 0.0, 1.0], 1);
        let f = ExternalField::none(17);
        assert!(matches!(log_partition_exact_ising(&d, &f, 1.0), Err(Error::Resource { .. })));
    }

    #[test]
    fn sphere_linear_field_matches_quadrature() {
        let n = 16;
        let d = disorder(n, vec![0.0], 1);
        let f = ExternalField::linear(n, 0.2);
        let mc = log_partition_mc_sphere(&d, &f, 0.5, 100_000, 11).unwrap();
        let q = log_partition_sphere_linear_quadrature(n, 0.5, 0.2).unwrap();
        assert!((mc.log_value - q.log_value).abs() <= 3.0 * mc.std_error, "{mc:?} {q:?}");
        assert!(mc.std_error > 0.0);
        assert!((log_partition_sphere_linear_quadrature(n, 0.0, 0.2).unwrap().log_value).abs() < 1e-12);
    }

    #[test]
    fn sphere_jensen_direction() {
        let n = 12;
        let d = disorder(n, vec![0.0, 0.0, 1.0], 2);
        let f = ExternalField::none(n);
        let hot = log_partition_mc_sphere(&d, &f, 0.3, 5000, 4).unwrap();
        assert!(hot.log_value >= -3.0 * hot.std_error);
    }

    #[test]
    fn restricted_trivial_predicates() {
        let n = 10;
        let d = disorder(n, vec![0.0, 0.0, 1.0], 3);
        let f = ExternalField::linear(n, 0.1);
        let e = ReferenceMeasure::IsingUniform { n };
        let full = log_partition_exact_ising(&d, &f, 1.0).unwrap();
        let all = restricted_log_partition(&e, &d, &f, 1.0, &|_| true, None).unwrap();
        assert_eq!(all.log_value, full.log_value);
        let none = restricted_log_partition(&e, &d, &f, 1.0, &|_| false, None).unwrap();
        assert_eq!(none.log_value, f64::NEG_INFINITY);
        let s = ReferenceMeasure::SphereUniform { n };
        let opts = McOptions { samples: 2000, seed: 9 };
        let unr = sphere_mc(&d, &f, 1.0, opts, None);
        let r = restricted_log_partition(&s, &d, &f, 1.0, &|_| true, Some(opts)).unwrap();
        assert_eq!(r.log_value, unr.log_value);
        assert_eq!(r.effective_samples, 2000);
    }

    #[test]
    fn cover_restrictions_dominate() {
        let n = 10;
        let d = disorder(n, vec![0.0, 0.0, 1.0], 8);
        let f = ExternalField::linear(n, 0.1);
        let e = ReferenceMeasure::IsingUniform { n };
        let (eps, eta, delta, beta) = (0.05, 0.4, 0.1, 1.0);
        let mut nodes: Vec<CoverNode> = Vec::new();
        for b in 0u64..1 << n {
            let s: Vec<f64> = (0..n).map(|i| if b >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
            let c = classify(&d, &e, &f, &s, eps, eta, delta).unwrap();
            if !nodes.iter().any(|x| x.alpha == c.alpha) {
                nodes.push(c.node);
            }
        }
        let parts: Vec<f64> = nodes
            .iter()
            .map(|node| restricted_log_partition(&e, &d, &f, beta, &|s| membership(node, s, eta).in_e, None).unwrap().log_value)
            .collect();
        let full = log_partition_exact_ising(&d, &f, beta).unwrap().log_value;
        assert!(crate::linalg::log_sum_exp(&parts) >= full - 1e-12);
    }

    #[test]
    fn slice_of_everything_and_nothing() {
        let n = 8;
        let d = disorder(n, vec![0.0, 0.0, 1.0], 1);
        let f = ExternalField::linear(n, 0.1);
        let e = ReferenceMeasure::IsingUniform { n };
        let whole = build_node(&d, &e, &f, &IncrementIndex::new(1.0, vec![vec![0]]).unwrap(), 0.1).unwrap();
        let s = slice_measures(&e, &whole, 1.0, None).unwrap();
        assert_eq!(s.mass, 1.0);
        match s.conditional.unwrap() {
            ReferenceMeasure::PointCloud(c) => assert_eq!(c.points().len(), 256),
            _ => panic!("conditional should be atomic"),
        }
        let far = build_node(&d, &e, &f, &IncrementIndex::new(0.1, vec![vec![3]]).unwrap(), 0.1).unwrap();
        let s = slice_measures(&e, &far, 0.05, None).unwrap();
        assert!(s.empty && s.mass == 0.0 && s.conditional.is_none());
    }

    #[test]
    fn slice_mass_within_entropy_bound() {
        let n = 12;
        let d = disorder(n, vec![0.0, 0.0, 1.0], 4);
        let f = ExternalField::linear(n, 0.1);
        let e = ReferenceMeasure::IsingUniform { n };
        let (eta, delta) = (0.025, 0.1);
        for seed in 0..4u64 {
            let s: Vec<f64> = sphere_points(n, 1, seed, 0)[0].iter().map(|x| x.signum()).collect();
            let c = classify(&d, &e, &f, &s, eta * eta, eta, delta).unwrap();
            let sm = slice_measures(&e, &c.node, eta, None).unwrap();
            let bound = general_entropy_upper(&e, &c.node.m_alpha, delta, f.basis()).unwrap();
            assert!(sm.mass > 0.0);
            assert!(sm.mass.ln() <= bound + delta + 1e-12, "{} > {}", sm.mass.ln(), bound + delta);
            let tp = sm.thin_pushforward.unwrap();
            for p in &tp.points {
                let r = norm(p);
                assert!(r == 0.0 || (r * r - (1.0 - c.node.q_alpha)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn estimate_json_row() {
        let est = PartitionEstimate {
            log_value: 1.5,
            std_error: 0.0,
            method: Method::ExactEnumeration,
            samples: 4,
            effective_samples: 4,
            seed: None,
        };
        let v: serde_json::Value = serde_json::from_str(&est.to_json()).unwrap();
        assert_eq!(v["method"], "exact_enumeration");
        assert_eq!(v["log_value"], 1.5);
    }
}

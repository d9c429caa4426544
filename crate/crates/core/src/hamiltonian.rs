//! Gaussian mixed p-spin Hamiltonians.
//!
//! `H(sigma) = sum_p sqrt(a_p) N^{(1-p)/2} sum g_{i_1..i_p} sigma_{i_1}..sigma_{i_p}`
//! with i.i.d. standard Gaussian, non-symmetrized tensors, so that
//! `E[H(sigma) H(sigma')] = N xi(<sigma, sigma'>)`.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceSeries;
use crate::error::{domain, Error, Result};
use crate::field::{check_len, ExternalField};
use crate::linalg::{dot, norm, norm_sq};
use crate::rng;
use crate::NORM_TOL;

/// Dimension, mixture, inverse temperature and external field.
#[derive(Debug, Clone)]
pub struct MixedModel {
    pub n: usize,
    pub series: CovarianceSeries,
    pub beta: f64,
    pub field: ExternalField,
}

impl MixedModel {
    pub fn new(n: usize, series: CovarianceSeries, beta: f64, field: ExternalField) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("N must be at least 1".into()));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Invalid(format!("beta = {beta} must be finite and nonnegative")));
        }
        if field.n() != n {
            return Err(Error::Invalid(format!("field dimension {} differs from N = {n}", field.n())));
        }
        Ok(Self { n, series, beta, field })
    }

    pub fn sample(&self, seed: u64) -> Result<DisorderSample> {
        sample_disorder(self, seed)
    }
}

/// Limits on disorder sampling.
#[derive(Debug, Clone, Copy)]
pub struct SampleOptions {
    pub max_degree: usize,
    pub memory_budget_bytes: u128,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            max_degree: 4,
            memory_budget_bytes: 1 << 30,
        }
    }
}

/// Coupling tensor of one degree, row-major with the first index outermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeTensor {
    pub p: usize,
    pub coefficient: f64,
    pub data: Vec<f64>,
}

impl DegreeTensor {
    fn scale(&self, n: usize) -> f64 {
        self.coefficient.sqrt() * (n as f64).powf((1.0 - self.p as f64) / 2.0)
    }
}

/// One realization of the Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderSample {
    n: usize,
    seed: u64,
    tensors: Vec<DegreeTensor>,
}

pub fn sample_disorder(model: &MixedModel, seed: u64) -> Result<DisorderSample> {
    sample_disorder_with(model.n, &model.series, seed, SampleOptions::default())
}

pub fn sample_disorder_with(
    n: usize,
    series: &CovarianceSeries,
    seed: u64,
    options: SampleOptions,
) -> Result<DisorderSample> {
    if n == 0 {
        return Err(Error::Invalid("N must be at least 1".into()));
    }
    let degrees: Vec<usize> = (0..series.coefficients().len()).filter(|&p| series.coefficients()[p] > 0.0).collect();
    if let Some(&p) = degrees.iter().find(|&&p| p > options.max_degree) {
        return Err(Error::Resource {
            what: "tensor degree".into(),
            required: p as u128,
            budget: options.max_degree as u128,
        });
    }
    let mut bytes: u128 = 0;
    for &p in &degrees {
        let entries = (n as u128).checked_pow(p as u32).unwrap_or(u128::MAX);
        bytes = bytes.saturating_add(entries.saturating_mul(8));
    }
    if bytes > options.memory_budget_bytes {
        return Err(Error::Resource {
            what: "disorder tensors (bytes)".into(),
            required: bytes,
            budget: options.memory_budget_bytes,
        });
    }
    let tensors = degrees
        .into_iter()
        .map(|p| {
            let mut rng = rng::stream(seed, rng::DOMAIN_DISORDER, p as u64);
            let data = (0..n.pow(p as u32)).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            DegreeTensor {
                p,
                coefficient: series.coefficients()[p],
                data,
            }
        })
        .collect();
    Ok(DisorderSample { n, seed, tensors })
}

fn contract_last(t: &[f64], n: usize, sigma: &[f64]) -> Vec<f64> {
    t.chunks_exact(n).map(|row| dot(row, sigma)).collect()
}

fn contract_first(t: &[f64], n: usize, sigma: &[f64]) -> Vec<f64> {
    let rest = t.len() / n;
    let mut out = vec![0.0; rest];
    for (i, s) in sigma.iter().enumerate() {
        for (o, x) in out.iter_mut().zip(&t[i * rest..(i + 1) * rest]) {
            *o += s * x;
        }
    }
    out
}

impl DisorderSample {
    /// Builds a sample from explicit tensors.
    pub fn from_tensors(n: usize, seed: u64, tensors: Vec<DegreeTensor>) -> Result<Self> {
        for t in &tensors {
            let want = n.checked_pow(t.p as u32).ok_or_else(|| Error::Invalid("tensor too large".into()))?;
            if t.data.len() != want || !(t.coefficient >= 0.0) {
                return Err(Error::Invalid(format!("degree {} tensor has {} entries, expected {want}", t.p, t.data.len())));
            }
        }
        Ok(Self { n, seed, tensors })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tensors(&self) -> &[DegreeTensor] {
        &self.tensors
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Largest sampled degree (0 if empty).
    pub fn max_degree(&self) -> usize {
        self.tensors.iter().map(|t| t.p).max().unwrap_or(0)
    }

    fn check_closed(&self, sigma: &[f64]) -> Result<()> {
        check_len(sigma, self.n)?;
        let r = norm(sigma);
        if r <= 1.0 + NORM_TOL {
            Ok(())
        } else {
            domain(format!("norm {r} outside the closed unit ball"))
        }
    }

    fn check_open(&self, sigma: &[f64]) -> Result<()> {
        check_len(sigma, self.n)?;
        let r = norm(sigma);
        if r < 1.0 {
            Ok(())
        } else {
            domain(format!("norm {r} outside the open unit ball"))
        }
    }

    /// `H_N(sigma)`.
    pub fn energy(&self, sigma: &[f64]) -> Result<f64> {
        self.check_closed(sigma)?;
        Ok(self.energy_unchecked(sigma))
    }

    pub(crate) fn energy_unchecked(&self, sigma: &[f64]) -> f64 {
        let n = self.n;
        self.tensors
            .iter()
            .map(|t| {
                if t.p == 0 {
                    return t.scale(n) * t.data[0];
                }
                let mut cur = contract_last(&t.data, n, sigma);
                for _ in 1..t.p {
                    cur = contract_last(&cur, n, sigma);
                }
                t.scale(n) * cur[0]
            })
            .sum()
    }

    /// `grad H_N(sigma)` (standard partial derivatives).
    pub fn gradient(&self, sigma: &[f64]) -> Result<Vec<f64>> {
        self.check_open(sigma)?;
        Ok(self.gradient_unchecked(sigma))
    }

    pub(crate) fn gradient_unchecked(&self, sigma: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for t in &self.tensors {
            if t.p == 0 {
                continue;
            }
            // levels[k] has the last k+1 indices contracted.
            let mut levels: Vec<Vec<f64>> = Vec::with_capacity(t.p - 1);
            for k in 0..t.p - 1 {
                let next = contract_last(if k == 0 { &t.data } else { &levels[k - 1] }, n, sigma);
                levels.push(next);
            }
            let scale = t.scale(n);
            for r in 0..t.p {
                // order r+1 tensor, index i sits at position r after contracting the r leading ones
                let tr: &[f64] = if r == t.p - 1 { &t.data } else { &levels[t.p - 2 - r] };
                let mut cur: Option<Vec<f64>> = None;
                for _ in 0..r {
                    cur = Some(contract_first(cur.as_deref().unwrap_or(tr), n, sigma));
                }
                for (o, c) in out.iter_mut().zip(cur.as_deref().unwrap_or(tr)) {
                    *o += scale * c;
                }
            }
        }
        out
    }

    /// Effective field `h_eff(m) = grad H_N(m)`.
    pub fn effective_field(&self, m: &[f64]) -> Result<Vec<f64>> {
        self.gradient(m)
    }

    /// Recentered Hamiltonian `H^m(s) = H(m+s) - grad H(m) . s - H(m)`.
    pub fn recentered_energy(&self, m: &[f64], sigma_hat: &[f64]) -> Result<f64> {
        self.check_open(m)?;
        check_len(sigma_hat, self.n)?;
        let total: Vec<f64> = m.iter().zip(sigma_hat).map(|(a, b)| a + b).collect();
        self.check_closed(&total)?;
        Ok(self.recentered_unchecked(m, sigma_hat, &self.gradient_unchecked(m), self.energy_unchecked(m)))
    }

    pub(crate) fn recentered_unchecked(&self, m: &[f64], sigma_hat: &[f64], grad_m: &[f64], energy_m: f64) -> f64 {
        let total: Vec<f64> = m.iter().zip(sigma_hat).map(|(a, b)| a + b).collect();
        self.energy_unchecked(&total) - dot(grad_m, sigma_hat) - energy_m
    }

    /// `H(sigma with sigma_i negated) - H(sigma)`, touching only terms that contain index `i`.
    pub fn flip_delta(&self, sigma: &[f64], i: usize) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for t in &self.tensors {
            if t.p == 0 {
                continue;
            }
            let mut odd = 0.0;
            for first in 0..t.p {
                odd += walk(&t.data, n, t.p, sigma, i, first, 0, 0, 1.0, 0);
            }
            total += t.scale(n) * odd;
        }
        -2.0 * total
    }

    /// Total Hamiltonian `H_N^f = H_N + f_N`.
    pub fn energy_with_field(&self, field: &ExternalField, sigma: &[f64]) -> Result<f64> {
        Ok(self.energy(sigma)? + field.field_value(sigma)?)
    }

    /// Writes the binary disorder format.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DISORDER_MAGIC)?;
        w.write_all(&DISORDER_VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for t in &self.tensors {
            w.write_all(&(t.p as u32).to_le_bytes())?;
            w.write_all(&t.coefficient.to_le_bytes())?;
            w.write_all(&(t.data.len() as u64).to_le_bytes())?;
            for x in &t.data {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DISORDER_MAGIC {
            return Err(Error::Invalid("not a disorder file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != DISORDER_VERSION {
            return Err(Error::Invalid(format!("unsupported disorder file version {version}")));
        }
        let n = read_u64(&mut r)? as usize;
        let seed = read_u64(&mut r)?;
        let count = read_u32(&mut r)?;
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let p = read_u32(&mut r)? as usize;
            let coefficient = read_f64(&mut r)?;
            let len = read_u64(&mut r)? as usize;
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                data.push(read_f64(&mut r)?);
            }
            tensors.push(DegreeTensor { p, coefficient, data });
        }
        Self::from_tensors(n, seed, tensors)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

pub const DISORDER_MAGIC: &[u8; 8] = b"TAPDSRD\0";
pub const DISORDER_VERSION: u32 = 1;

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

/// Sum over multi-indices whose first occurrence of `i` is at position `first`,
/// keeping only terms where `i` occurs an odd number of times.
#[allow(clippy::too_many_arguments)]
fn walk(data: &[f64], n: usize, p: usize, sigma: &[f64], i: usize, first: usize, pos: usize, offset: usize, prod: f64, count: usize) -> f64 {
    if pos == p {
        return if count % 2 == 1 { data[offset] * prod } else { 0.0 };
    }
    if pos == first {
        return walk(data, n, p, sigma, i, first, pos + 1, offset * n + i, prod * sigma[i], count + 1);
    }
    let mut acc = 0.0;
    for j in 0..n {
        if pos < first && j == i {
            continue;
        }
        let c = count + usize::from(j == i);
        acc += walk(data, n, p, sigma, i, first, pos + 1, offset * n + j, prod * sigma[j], c);
    }
    acc
}

/// Diagnostic suprema over random probe points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzProbe {
    /// Largest normalized gradient norm seen.
    pub max_grad_norm: f64,
    /// Largest `|H(m)-H(m')| / (N ||m-m'||)` over probe pairs.
    pub max_ratio: f64,
}

/// Probes gradient norms and difference quotients at points drawn uniformly from the open ball.
pub fn lipschitz_probe(d: &DisorderSample, probe_count: usize, rng_seed: u64) -> LipschitzProbe {
    let n = d.n;
    let mut rng = rng::stream(rng_seed, rng::DOMAIN_PROBE, 0);
    let points: Vec<Vec<f64>> = (0..probe_count.max(1))
        .map(|_| {
            let g: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let r = rng.random::<f64>().powf(1.0 / n as f64) * (1.0 - 1e-6);
            let s = r / norm(&g).max(f64::MIN_POSITIVE);
            g.iter().map(|x| x * s).collect()
        })
        .collect();
    let energies: Vec<f64> = points.iter().map(|p| d.energy_unchecked(p)).collect();
    let max_grad_norm = points.iter().map(|p| norm(&d.gradient_unchecked(p))).fold(0.0, f64::max);
    let mut max_ratio: f64 = 0.0;
    for a in 0..points.len() {
        for b in (a + 1)..points.len() {
            let dist = norm_sq(&crate::linalg::sub(&points[a], &points[b])).sqrt();
            if dist > 0.0 {
                max_ratio = max_ratio.max((energies[a] - energies[b]).abs() / (n as f64 * dist));
            }
        }
    }
    LipschitzProbe {
        max_grad_norm,
        max_ratio,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::scale;

    fn series(c: &[f64]) -> CovarianceSeries {
        CovarianceSeries::new(c.to_vec()).unwrap()
    }

    fn sample(n: usize, c: &[f64], seed: u64) -> DisorderSample {
        sample_disorder_with(n, &series(c), seed, SampleOptions::default()).unwrap()
    }

    fn point(n: usize, seed: u64, radius: f64) -> Vec<f64> {
        let mut rng = rng::stream(seed, 99, 0);
        let g: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        scale(&g, radius / norm(&g))
    }

    /// Direct sum over all multi-indices.
    fn naive_energy(d: &DisorderSample, s: &[f64]) -> f64 {
        let n = d.n;
        d.tensors
            .iter()
            .map(|t| {
                let mut acc = 0.0;
                for (idx, g) in t.data.iter().enumerate() {
                    let mut rem = idx;
                    let mut prod = 1.0;
                    for _ in 0..t.p {
                        prod *= s[rem % n];
                        rem /= n;
                    }
                    acc += g * prod;
                }
                t.scale(n) * acc
            })
            .sum()
    }

    #[test]
    fn zero_series_is_empty() {
        let d = sample(5, &[], 1);
        assert!(d.is_empty());
        assert_eq!(d.energy(&point(5, 1, 0.7)).unwrap(), 0.0);
        let p = lipschitz_probe(&d, 10, 3);
        assert_eq!(p.max_grad_norm, 0.0);
        assert_eq!(p.max_ratio, 0.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample(6, &[0.0, 0.2, 1.0, 0.5], 42);
        let b = sample(6, &[0.0, 0.2, 1.0, 0.5], 42);
        let c = sample(6, &[0.0, 0.2, 1.0, 0.5], 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.tensors()[2].data.len(), 216);
    }

    #[test]
    fn budget_and_degree_limits() {
        let err = sample_disorder_with(
            100,
            &series(&[0.0, 0.0, 0.0, 1.0]),
            1,
            SampleOptions {
                max_degree: 4,
                memory_budget_bytes: 1000,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Resource { required: 8_000_000, .. }));
        let err = sample_disorder_with(3, &series(&[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]), 1, SampleOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Resource { .. }));
    }

    #[test]
    fn pure_one_spin_is_dot_product() {
        let d = sample(7, &[0.0, 2.0], 5);
        let s = point(7, 2, 0.9);
        let g = &d.tensors()[0].data;
        assert!((d.energy(&s).unwrap() - 2f64.sqrt() * dot(g, &s)).abs() < 1e-13);
        let grad = d.gradient(&s).unwrap();
        for (a, b) in grad.iter().zip(g) {
            assert!((a - 2f64.sqrt() * b).abs() < 1e-14);
        }
        let p = lipschitz_probe(&d, 5, 1);
        let exact = norm(&scale(g, 2f64.sqrt()));
        assert!((p.max_grad_norm - exact).abs() < 1e-12);
    }

    #[test]
    fn contraction_matches_naive_sum() {
        let d = sample(5, &[0.4, 0.3, 1.0, 0.5, 0.25], 11);
        for seed in 0..5 {
            let s = point(5, seed, 0.8);
            assert!((d.energy(&s).unwrap() - naive_energy(&d, &s)).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = sample(6, &[0.0, 0.3, 1.0, 0.5, 0.25], 13);
        let s = point(6, 3, 0.8);
        let g = d.gradient(&s).unwrap();
        for i in 0..6 {
            let mut p = s.clone();
            let mut m = s.clone();
            p[i] += 1e-5;
            m[i] -= 1e-5;
            let fd = (d.energy(&p).unwrap() - d.energy(&m).unwrap()) / 2e-5;
            assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0));
        }
    }

    #[test]
    fn domain_checks() {
        let d = sample(4, &[0.0, 0.0, 1.0], 1);
        assert!(d.energy(&[1.0; 4]).is_ok());
        assert!(d.energy(&[1.0 + 1e-6; 4]).is_err());
        assert!(d.gradient(&[1.0; 4]).is_err());
        assert!(d.energy(&[0.0; 3]).is_err());
    }

    #[test]
    fn pure_even_model_vanishes_at_origin() {
        let d = sample(5, &[0.0, 0.0, 1.0, 0.0, 0.5], 3);
        assert!(d.gradient(&[0.0; 5]).unwrap().iter().all(|&x| x == 0.0));
        let s = point(5, 4, 0.6);
        assert_eq!(d.recentered_energy(&[0.0; 5], &s).unwrap(), d.energy(&s).unwrap());
        let m = point(5, 5, 0.5);
        assert_eq!(d.recentered_energy(&m, &[0.0; 5]).unwrap(), 0.0);
    }

    #[test]
    fn flip_delta_matches_recomputation() {
        let d = sample(5, &[0.2, 0.3, 1.0, 0.5, 0.25], 17);
        let s: Vec<f64> = [1.0, -1.0, -1.0, 1.0, 1.0].to_vec();
        for i in 0..5 {
            let mut t = s.clone();
            t[i] = -t[i];
            let direct = d.energy(&t).unwrap() - d.energy(&s).unwrap();
            assert!((d.flip_delta(&s, i) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn recentering_identities() {
        let d = sample(6, &[0.0, 0.3, 1.0, 0.5], 21);
        for seed in 0..10 {
            let a = point(6, 100 + seed, 0.3);
            let b = point(6, 200 + seed, 0.25);
            let c = point(6, 300 + seed, 0.2);
            let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            // grad H^a(b) = grad H(a+b) - grad H(a), with grad H^a(b) by finite differences.
            let gab = d.gradient(&ab).unwrap();
            let ga = d.gradient(&a).unwrap();
            for i in 0..6 {
                let mut p = b.clone();
                let mut m = b.clone();
                p[i] += 1e-5;
                m[i] -= 1e-5;
                let fd = (d.recentered_energy(&a, &p).unwrap() - d.recentered_energy(&a, &m).unwrap()) / 2e-5;
                assert!((fd - (gab[i] - ga[i])).abs() < 1e-7);
            }
            // (H^a)^b(c) = H^{a+b}(c)
            let ha_bc = d.recentered_energy(&a, &crate::linalg::add(&b, &c)).unwrap();
            let ha_b = d.recentered_energy(&a, &b).unwrap();
            let grad_ha_b: Vec<f64> = gab.iter().zip(&ga).map(|(x, y)| x - y).collect();
            let lhs = ha_bc - dot(&grad_ha_b, &c) - ha_b;
            let rhs = d.recentered_energy(&ab, &c).unwrap();
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn persistence_round_trip() {
        let d = sample(4, &[0.1, 0.3, 1.0, 0.5], 77);
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], DISORDER_MAGIC);
        let back = DisorderSample::read_from(&buf[..]).unwrap();
        assert_eq!(back, d);
        buf[0] = b'X';
        assert!(DisorderSample::read_from(&buf[..]).is_err());
    }
}

//! Grids, increments and the adaptive cover of the sphere.
//!
//! A node `alpha = (alpha_1, .., alpha_k)` fixes a magnetization
//! `m_alpha = sum_l sum_j alpha_{l,j} u_{alpha,l,j}` where the basis is grown
//! level by level from the gradient and the minimal-entropy normal at the
//! previous magnetization.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::entropy::{lambda_min_entropy, ReferenceMeasure};
use crate::error::{domain, Error, Result};
use crate::field::{check_len, ExternalField};
use crate::hamiltonian::DisorderSample;
use crate::linalg::{axpy, inner, norm, norm_sq, normalized, project_out, scale, unit_axis};
use crate::NORM_TOL;

/// Candidates whose residual falls below this are skipped when completing a level.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Orthogonal projections below this norm count as zero.
pub const ZERO_PROJECTION_TOL: f64 = 1e-12;

/// Grid index of `round_down(x, epsilon)`.
pub fn round_down_index(x: f64, epsilon: f64) -> i64 {
    if x == 0.0 {
        return 0;
    }
    if x > 0.0 {
        // x in (k eps, (k+1) eps]
        let mut k = (x / epsilon).ceil() as i64 - 1;
        while (k + 1) as f64 * epsilon < x {
            k += 1;
        }
        while k as f64 * epsilon >= x {
            k -= 1;
        }
        k
    } else {
        // x in [(k-1) eps, k eps)
        let mut k = (x / epsilon).floor() as i64 + 1;
        while k as f64 * epsilon <= x {
            k += 1;
        }
        while (k - 1) as f64 * epsilon > x {
            k -= 1;
        }
        k
    }
}

/// Rounds toward zero onto `epsilon Z`, strictly at grid points.
pub fn round_down(x: f64, epsilon: f64) -> f64 {
    round_down_index(x, epsilon) as f64 * epsilon
}

/// Largest `k` with `k * epsilon < 1`.
pub fn grid_max_index(epsilon: f64) -> i64 {
    let mut k = (1.0 / epsilon).ceil() as i64;
    while k > 0 && k as f64 * epsilon >= 1.0 {
        k -= 1;
    }
    k
}

/// `I_eps = eps Z ∩ (-1, 1)`, sorted.
pub fn grid(epsilon: f64) -> Result<Vec<f64>> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return domain(format!("grid step {epsilon} outside (0, 1]"));
    }
    let k = grid_max_index(epsilon);
    Ok((-k..=k).map(|i| i as f64 * epsilon).collect())
}

/// Largest admissible node length for dimension `n` and field rank `k_field`.
///
/// Level `l >= 2` needs at least one unused direction, so
/// `k <= (n - K - 1)/2 + 2` when `n > K`.
pub fn max_levels(n: usize, k_field: usize) -> usize {
    if n > k_field {
        (n - k_field - 1) / 2 + 2
    } else {
        1
    }
}

/// Increment sequence stored as integer grid indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementIndex {
    pub epsilon: f64,
    pub blocks: Vec<Vec<i64>>,
}

impl IncrementIndex {
    pub fn new(epsilon: f64, blocks: Vec<Vec<i64>>) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return domain(format!("grid step {epsilon} outside (0, 1]"));
        }
        if blocks.is_empty() || blocks[0].is_empty() {
            return domain("increment needs a nonempty first block");
        }
        if blocks[1..].iter().any(|b| b.len() != 2) {
            return domain("increment blocks after the first must have two entries");
        }
        let kmax = grid_max_index(epsilon);
        if blocks.iter().flatten().any(|i| i.abs() > kmax) {
            return domain("increment coordinate outside the open grid");
        }
        let idx = Self { epsilon, blocks };
        if !(idx.norm_sq() < 1.0) {
            return domain(format!("increment has |alpha|^2 = {} >= 1", idx.norm_sq()));
        }
        Ok(idx)
    }

    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    pub fn values(&self, level: usize) -> Vec<f64> {
        self.blocks[level].iter().map(|&i| i as f64 * self.epsilon).collect()
    }

    /// `|alpha|^2`.
    pub fn norm_sq(&self) -> f64 {
        self.blocks.iter().flatten().map(|&i| (i as f64 * self.epsilon).powi(2)).sum()
    }

    pub fn prefix(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k() {
            return domain(format!("prefix length {k} outside 1..={}", self.k()));
        }
        Ok(Self {
            epsilon: self.epsilon,
            blocks: self.blocks[..k].to_vec(),
        })
    }
}

/// A node of the cover with its magnetization and basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverNode {
    pub alpha: IncrementIndex,
    pub m_alpha: Vec<f64>,
    pub q_alpha: f64,
    /// `basis[l][j] = u_{alpha,l+1,j+1}` for levels `1..=k+1`; exhausted directions are zero vectors.
    pub basis: Vec<Vec<Vec<f64>>>,
    /// Normals used to grow levels `2..=k+1`, taken at `m_{alpha,1}..m_{alpha,k}`.
    pub lambda_used: Vec<Vec<f64>>,
}

/// Audit record with the basis flattened row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeRecord {
    pub alpha: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub m_alpha: Vec<f64>,
    pub q_alpha: f64,
    pub n: usize,
    pub level_sizes: Vec<usize>,
    pub basis: Vec<f64>,
}

impl CoverNode {
    pub fn k(&self) -> usize {
        self.alpha.k()
    }

    pub fn n(&self) -> usize {
        self.m_alpha.len()
    }

    /// Nonzero vectors spanning `U-bar` (levels `1..=k+1`).
    pub fn upper_basis(&self) -> Vec<&[f64]> {
        self.basis.iter().flatten().filter(|u| u.iter().any(|&x| x != 0.0)).map(|u| u.as_slice()).collect()
    }

    /// Nonzero vectors spanning `U` (levels `1..=k`).
    pub fn lower_levels_basis(&self) -> Vec<&[f64]> {
        self.basis[..self.k()].iter().flatten().filter(|u| u.iter().any(|&x| x != 0.0)).map(|u| u.as_slice()).collect()
    }

    pub fn project_upper(&self, sigma: &[f64]) -> Vec<f64> {
        crate::linalg::project_onto(sigma, &self.upper_basis())
    }

    /// `P^{V-bar} sigma`.
    pub fn project_complement(&self, sigma: &[f64]) -> Vec<f64> {
        project_out(sigma, &self.upper_basis())
    }

    pub fn record(&self) -> NodeRecord {
        NodeRecord {
            alpha: (0..self.k()).map(|l| self.alpha.values(l)).collect(),
            epsilon: self.alpha.epsilon,
            m_alpha: self.m_alpha.clone(),
            q_alpha: self.q_alpha,
            n: self.n(),
            level_sizes: self.basis.iter().map(|l| l.len()).collect(),
            basis: self.basis.iter().flatten().flatten().copied().collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.record()).expect("node record serializes")
    }
}

/// Level data keyed by the increment prefix that determines it.
#[derive(Debug, Clone)]
struct LevelData {
    pair: Vec<Vec<f64>>,
    lambda: Vec<f64>,
}

/// Insert-only memo of grown levels for one `(disorder, measure, field, epsilon, delta)`.
#[derive(Debug, Default)]
pub struct NodeCache {
    map: RwLock<HashMap<Vec<Vec<i64>>, Arc<LevelData>>>,
}

impl NodeCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.read().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

struct Builder<'a> {
    d: &'a DisorderSample,
    e: &'a ReferenceMeasure,
    field: &'a ExternalField,
    delta: f64,
    epsilon: f64,
    blocks: Vec<Vec<i64>>,
    basis: Vec<Vec<Vec<f64>>>,
    lambdas: Vec<Vec<f64>>,
    m: Vec<f64>,
    cache: Option<&'a NodeCache>,
}

impl<'a> Builder<'a> {
    fn start(
        d: &'a DisorderSample,
        e: &'a ReferenceMeasure,
        field: &'a ExternalField,
        delta: f64,
        epsilon: f64,
        first: Vec<i64>,
        cache: Option<&'a NodeCache>,
    ) -> Self {
        let n = d.n();
        let mut m = vec![0.0; n];
        for (&a, u) in first.iter().zip(field.basis()) {
            axpy(&mut m, a as f64 * epsilon, u);
        }
        Self {
            d,
            e,
            field,
            delta,
            epsilon,
            blocks: vec![first],
            basis: vec![field.basis().to_vec()],
            lambdas: Vec::new(),
            m,
            cache,
        }
    }

    fn grow(&self) -> Result<LevelData> {
        let n = self.d.n();
        let g = self.d.gradient_unchecked(&self.m);
        let lambda = lambda_min_entropy(self.e, &self.m, self.delta, self.field.basis())?;
        let mut existing: Vec<Vec<f64>> = self.basis.iter().flatten().filter(|u| u.iter().any(|&x| x != 0.0)).cloned().collect();
        let mut pair = Vec::with_capacity(2);
        let candidates = [g, lambda.clone()].into_iter().chain((0..n).map(|i| unit_axis(n, i)));
        for c in candidates {
            if pair.len() == 2 {
                break;
            }
            let Some(c) = normalized(&c) else { continue };
            let refs: Vec<&[f64]> = existing.iter().map(|u| u.as_slice()).collect();
            let r = project_out(&c, &refs);
            if norm(&r) < RESIDUAL_TOL {
                continue;
            }
            let u = normalized(&r).expect("residual above tolerance");
            existing.push(u.clone());
            pair.push(u);
        }
        while pair.len() < 2 {
            pair.push(vec![0.0; n]);
        }
        Ok(LevelData { pair, lambda })
    }

    fn next_level(&self) -> Result<Arc<LevelData>> {
        let Some(cache) = self.cache else {
            return Ok(Arc::new(self.grow()?));
        };
        if let Some(hit) = cache.map.read().ok().and_then(|m| m.get(&self.blocks).cloned()) {
            return Ok(hit);
        }
        let data = Arc::new(self.grow()?);
        if let Ok(mut m) = cache.map.write() {
            m.entry(self.blocks.clone()).or_insert_with(|| data.clone());
        }
        Ok(data)
    }

    fn push(&mut self, level: &LevelData, indices: Vec<i64>) {
        for (&a, u) in indices.iter().zip(&level.pair) {
            axpy(&mut self.m, a as f64 * self.epsilon, u);
        }
        self.basis.push(level.pair.clone());
        self.lambdas.push(level.lambda.clone());
        self.blocks.push(indices);
    }

    fn finish(mut self, last: &LevelData) -> Result<CoverNode> {
        self.basis.push(last.pair.clone());
        self.lambdas.push(last.lambda.clone());
        let alpha = IncrementIndex::new(self.epsilon, self.blocks)?;
        Ok(CoverNode {
            q_alpha: norm_sq(&self.m),
            alpha,
            m_alpha: self.m,
            basis: self.basis,
            lambda_used: self.lambdas,
        })
    }
}

fn check_setup(d: &DisorderSample, e: &ReferenceMeasure, field: &ExternalField, delta: f64) -> Result<()> {
    if e.n() != d.n() || field.n() != d.n() {
        return Err(Error::Invalid("disorder, measure and field dimensions differ".into()));
    }
    if !(delta > 0.0) {
        return domain(format!("delta = {delta} must be positive"));
    }
    Ok(())
}

/// Builds the node for an explicit increment.
pub fn build_node(
    d: &DisorderSample,
    e: &ReferenceMeasure,
    field: &ExternalField,
    alpha: &IncrementIndex,
    delta: f64,
) -> Result<CoverNode> {
    build_node_cached(d, e, field, alpha, delta, None)
}

pub fn build_node_cached(
    d: &DisorderSample,
    e: &ReferenceMeasure,
    field: &ExternalField,
    alpha: &IncrementIndex,
    delta: f64,
    cache: Option<&NodeCache>,
) -> Result<CoverNode> {
    check_setup(d, e, field, delta)?;
    if alpha.blocks[0].len() != field.k() {
        return domain(format!("first block has {} entries, field has K = {}", alpha.blocks[0].len(), field.k()));
    }
    let kmax = max_levels(d.n(), field.k());
    if alpha.k() > kmax {
        return domain(format!("k = {} exceeds the {kmax} levels available at N = {}", alpha.k(), d.n()));
    }
    let mut b = Builder::start(d, e, field, delta, alpha.epsilon, alpha.blocks[0].clone(), cache);
    for l in 1..alpha.k() {
        let level = b.next_level()?;
        b.push(&level, alpha.blocks[l].clone());
    }
    let last = b.next_level()?;
    b.finish(&last)
}

/// Whether `sigma` lies in `D_alpha` and `E_alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    pub in_d: bool,
    pub in_e: bool,
}

/// Literal evaluation of the two defining conditions.
pub fn membership(node: &CoverNode, sigma: &[f64], eta: f64) -> Membership {
    let eps = node.alpha.epsilon;
    let in_d = node.alpha.blocks.iter().enumerate().all(|(l, block)| {
        block.iter().zip(&node.basis[l]).all(|(&a, u)| round_down_index(inner(sigma, u), eps) == a)
    });
    let in_e = in_d && node.basis[node.k()].iter().all(|u| inner(sigma, u).abs() <= eta);
    Membership { in_d, in_e }
}

/// Result of [`classify`].
#[derive(Debug, Clone)]
pub struct Classification {
    pub alpha: IncrementIndex,
    pub node: CoverNode,
}

/// Finds the node whose `E_alpha` contains `sigma` by rounding successive projections.
pub fn classify(
    d: &DisorderSample,
    e: &ReferenceMeasure,
    field: &ExternalField,
    sigma: &[f64],
    epsilon: f64,
    eta: f64,
    delta: f64,
) -> Result<Classification> {
    classify_cached(d, e, field, sigma, epsilon, eta, delta, None)
}

#[allow(clippy::too_many_arguments)]
pub fn classify_cached(
    d: &DisorderSample,
    e: &ReferenceMeasure,
    field: &ExternalField,
    sigma: &[f64],
    epsilon: f64,
    eta: f64,
    delta: f64,
    cache: Option<&NodeCache>,
) -> Result<Classification> {
    check_setup(d, e, field, delta)?;
    check_len(sigma, d.n())?;
    if !(eta > 0.0 && eta < 1.0 && epsilon > 0.0 && epsilon <= eta / 2.0) {
        return domain(format!("classification needs 0 < eps <= eta/2 < 1/2, got eps = {epsilon}, eta = {eta}"));
    }
    if (norm(sigma) - 1.0).abs() > NORM_TOL {
        return domain(format!("sigma must be a unit vector, has norm {}", norm(sigma)));
    }
    let first: Vec<i64> = field.basis().iter().map(|u| round_down_index(inner(sigma, u), epsilon)).collect();
    let mut b = Builder::start(d, e, field, delta, epsilon, first, cache);
    let kmax = max_levels(d.n(), field.k());
    let small = |i: i64| i.unsigned_abs() as f64 * epsilon <= eta / 2.0;
    let last = loop {
        let level = b.next_level()?;
        let idx: Vec<i64> = level.pair.iter().map(|u| round_down_index(inner(sigma, u), epsilon)).collect();
        if idx.iter().all(|&i| small(i)) {
            break level;
        }
        if b.blocks.len() >= kmax {
            return Err(Error::Invariant(format!("classification exceeded {kmax} levels")));
        }
        b.push(&level, idx);
    };
    let node = b.finish(&last)?;
    let k = node.k();
    if !membership(&node, sigma, eta).in_e {
        return Err(Error::Invariant("classified point is not in its own E_alpha".into()));
    }
    if k as f64 > 5.0 / (eta * eta) {
        return Err(Error::Invariant(format!("k = {k} exceeds 5/eta^2")));
    }
    Ok(Classification {
        alpha: node.alpha.clone(),
        node,
    })
}

/// `tau_alpha(sigma) = sqrt(1 - q) P sigma / ||P sigma||` with `P` the projection onto `V-bar`, or 0.
pub fn thin_projection(node: &CoverNode, sigma: &[f64]) -> Vec<f64> {
    let p = node.project_complement(sigma);
    let r = norm(&p);
    if r < ZERO_PROJECTION_TOL {
        vec![0.0; p.len()]
    } else {
        scale(&p, (1.0 - node.q_alpha).max(0.0).sqrt() / r)
    }
}

/// Closed-form bound `(2/eps)^{K + 10/eta^2}` on the number of nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CardinalityBound {
    pub value: u128,
    pub saturated: bool,
    pub log_value: f64,
}

pub fn cover_cardinality_bound(epsilon: f64, eta: f64, k_field: usize) -> Result<CardinalityBound> {
    if !(epsilon > 0.0 && epsilon < 1.0 && eta > 0.0 && eta <= 1.0) {
        return domain("cardinality bound needs eps in (0,1) and eta in (0,1]");
    }
    Ok(power_bound(2.0 / epsilon, k_field as f64 + 10.0 / (eta * eta)))
}

/// `(2/eps)^{K + 2(k-1)}`, the bound on `|A_k|`.
pub fn level_cardinality_bound(epsilon: f64, k_field: usize, k: usize) -> CardinalityBound {
    power_bound(2.0 / epsilon, (k_field + 2 * (k - 1)) as f64)
}

fn power_bound(base: f64, exponent: f64) -> CardinalityBound {
    let log_value = exponent * base.ln();
    if log_value >= 127.0 * std::f64::consts::LN_2 {
        return CardinalityBound {
            value: u128::MAX,
            saturated: true,
            log_value,
        };
    }
    let exact = if base.fract() == 0.0 && exponent.fract() == 0.0 {
        (base as u128).checked_pow(exponent as u32)
    } else {
        None
    };
    CardinalityBound {
        value: exact.unwrap_or_else(|| base.powf(exponent).floor() as u128),
        saturated: false,
        log_value,
    }
}

/// Exact `|A_k|` by counting integer vectors with `sum i^2 eps^2 < 1`.
pub fn count_increments(epsilon: f64, k_field: usize, k: usize) -> u128 {
    let kmax = grid_max_index(epsilon);
    let dims = k_field + 2 * (k.max(1) - 1);
    let limit = (kmax * kmax) as usize * dims + 1;
    let mut counts = vec![0u128; limit];
    counts[0] = 1;
    for _ in 0..dims {
        let mut next = vec![0u128; limit];
        for (s, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            for i in -kmax..=kmax {
                let t = s + (i * i) as usize;
                if t < limit {
                    next[t] += c;
                }
            }
        }
        counts = next;
    }
    counts
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s as f64) * epsilon * epsilon < 1.0)
        .map(|(_, c)| c)
        .sum()
}

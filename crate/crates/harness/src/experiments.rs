//! One experiment per acceptance criterion.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use tapbound::cover::{classify_cached, membership, thin_projection, NodeCache};
use tapbound::entropy::{binary_entropy, cap_tail, cap_tail_bound, general_entropy_upper, ising_entropy, ReferenceMeasure};
use tapbound::hamiltonian::{sample_disorder_with, DisorderSample, MixedModel, SampleOptions};
use tapbound::linalg::{inner, norm, project_out, scale, sub, LogSumExp};
use tapbound::partition::{log_partition_exact_ising, log_partition_mc_sphere, slice_measures, sphere_points};
use tapbound::rng::{derive, stream, DOMAIN_POINTS, DOMAIN_REPLICA};
use tapbound::tap::{maximize_tap, tap_energy, write_trace_csv, Flavor, TapMaximum, TapProblem};
use tapbound::{CovarianceSeries, ExternalField};

use crate::config::{ConfigError, ExperimentConfig, FieldKind, MeasureKind, EXPERIMENTS};
use crate::report::{Check, ExperimentReport, Histogram, Row};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] tapbound::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Runs the experiment named in the config.
pub fn run(c: &ExperimentConfig) -> Result<ExperimentReport> {
    c.validate()?;
    let r = match c.experiment.as_str() {
        "beta-zero-exactness" => beta_zero_exactness(c),
        "zero-disorder-tightness" => zero_disorder_tightness(c),
        "gaussian-law" => gaussian_law(c),
        "recentering-law" => recentering_law(c),
        "gradient-check" => gradient_check(c),
        "cover-property" => cover_property(c),
        "slice-entropy" => slice_entropy(c),
        "onsager-frequency" => onsager_frequency(c),
        "theorem-bound" => theorem_bound(c),
        "entropy-lemmas" => entropy_lemmas(c),
        "series-identities" => series_identities(c),
        other => Err(ConfigError::Invalid(vec![format!("unknown experiment {other:?}; expected one of {}", EXPERIMENTS.join(", "))]).into()),
    }?;
    Ok(r.finish())
}

fn series(c: &ExperimentConfig) -> Result<CovarianceSeries> {
    Ok(CovarianceSeries::new(c.xi.clone())?)
}

fn field(kind: FieldKind, n: usize, h: f64) -> ExternalField {
    match kind {
        FieldKind::None => ExternalField::none(n),
        FieldKind::Linear => ExternalField::linear(n, h),
        FieldKind::QuadraticSpike => ExternalField::quadratic_spike(n, h),
    }
}

fn replica_seed(c: &ExperimentConfig, r: usize) -> u64 {
    derive(c.seed, DOMAIN_REPLICA, r as u64)
}

fn disorder(n: usize, xi: &CovarianceSeries, seed: u64) -> Result<DisorderSample> {
    Ok(sample_disorder_with(n, xi, seed, SampleOptions::default())?)
}

fn problem(n: usize, xi: &CovarianceSeries, beta: f64, f: ExternalField, flavor: Flavor, seed: u64) -> Result<TapProblem> {
    let model = MixedModel::new(n, xi.clone(), beta, f)?;
    let d = disorder(n, xi, seed)?;
    Ok(TapProblem::new(model, d, flavor)?)
}

fn ising_atom(n: usize, bits: u64) -> Vec<f64> {
    (0..n).map(|i| if bits >> i & 1 == 1 { 1.0 } else { -1.0 }).collect()
}

fn random_atom(n: usize, seed: u64) -> Vec<f64> {
    let mut r = stream(seed, DOMAIN_POINTS, 1);
    (0..n).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

fn ball_point<R: Rng>(rng: &mut R, dir: &[f64], max_radius: f64) -> Vec<f64> {
    let r = rng.random::<f64>().powf(1.0 / dir.len() as f64) * max_radius;
    scale(dir, r)
}

fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

// ---------------------------------------------------------------- 1

fn beta_zero_exactness(c: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(&c.experiment, c.echo());
    let xi = series(c)?;
    let rows: Vec<Row> = (0..c.replicas)
        .into_par_iter()
        .map(|r| -> Result<Row> {
            let n = c.n.saturating_sub(4 * r).max(1);
            let seed = replica_seed(c, r);
            let p = problem(n, &xi, 0.0, field(c.field_kind, n, c.fields[r % c.fields.len()]), Flavor::Ising, seed)?;
            let z = log_partition_exact_ising(&p.disorder, &p.model.field, 0.0)?;
            let t = maximize_tap(&p, c.tap_starts, seed);
            let at_origin = tap_energy(&p, &vec![0.0; n])?;
            let mut row = Row::new(r, seed, format!("N={n}"));
            row.log_z = Some(z.log_value);
            row.tap_sup = Some(t.value);
            row.gap_per_spin = Some((z.log_value - t.value) / n as f64);
            row.value = Some(at_origin);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let tol = c.delta_check;
    let worst = |f: &dyn Fn(&Row) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let k = rows.len() as u64;
    rep.check(Check::at_most("|log Z|", format!("<= {tol:e}"), k, worst(&|r| r.log_z.unwrap().abs()), tol));
    rep.check(Check::at_most("|sup TAP|", format!("<= {tol:e}"), k, worst(&|r| r.tap_sup.unwrap().abs()), tol));
    rep.check(Check::at_most("|TAP(0)|", format!("<= {tol:e}"), k, worst(&|r| r.value.unwrap().abs()), tol));
    rep.check(Check::at_most("|gap| per spin", format!("<= {tol:e}"), k, worst(&|r| r.gap_per_spin.unwrap().abs()), tol));
    rep.rows = rows;
    Ok(rep)
}

// ---------------------------------------------------------------- 2

fn zero_disorder_tightness(c: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(&c.experiment, c.echo());
    let xi = series(c)?;
    let n = c.n;
    let beta = c.betas[0];
    let mut rows = Vec::new();
    let (mut z_err, mut t_err) = (0.0f64, 0.0f64);
    for (i, &h) in c.fields.iter().enumerate() {
        let seed = replica_seed(c, i);
        let p = problem(n, &xi, beta, ExternalField::linear(n, h), Flavor::Ising, seed)?;
        let closed = n as f64 * ln_cosh(beta * h);
        let z = log_partition_exact_ising(&p.disorder, &p.model.field, beta)?;
        let t = maximize_tap(&p, c.tap_starts, seed);
        z_err = z_err.max((z.log_value - closed).abs());
        t_err = t_err.max((t.value - closed).abs());
        let mut row = Row::new(i, seed, format!("h={h}"));
        row.log_z = Some(z.log_value);
        row.tap_sup = Some(t.value);
        row.gap_per_spin = Some((z.log_value - t.value) / n as f64);
        row.value = Some(closed);
        rows.push(row);
    }
    let k = rows.len() as u64;
    rep.check(Check::at_most("|log Z - N log cosh(beta h)|", "<= 1e-9", k, z_err, 1e-9));
    rep.check(Check::at_most("|max TAP - N log cosh(beta h)|", format!("<= {:e}", c.delta_check), k, t_err, c.delta_check));
    rep.rows = rows;
    Ok(rep)
}

// ---------------------------------------------------------------- 3, 4

/// Streaming first and second moments of many product statistics.
#[derive(Clone)]
struct Moments {
    sum: Vec<f64>,
    sq: Vec<f64>,
    count: u64,
}

impl Moments {
    fn new(k: usize) -> Self {
        Self {
            sum: vec![0.0; k],
            sq: vec![0.0; k],
            count: 0,
        }
    }

    fn push(&mut self, xs: &[f64]) {
        for (i, x) in xs.iter().enumerate() {
            self.sum[i] += x;
            self.sq[i] += x * x;
        }
        self.count += 1;
    }

    fn merge(mut self, o: &Moments) -> Self {
        for i in 0..self.sum.len() {
            self.sum[i] += o.sum[i];
            self.sq[i] += o.sq[i];
        }
        self.count += o.count;
        self
    }

    /// `|mean - target| / SE` for statistic `i`.
    fn z(&self, i: usize, target: f64) -> f64 {
        let n = self.count as f64;
        let mean = self.sum[i] / n;
        let var = ((self.sq[i] / n - mean * mean) * n / (n - 1.0)).max(0.0);
        let se = (var / n).sqrt();
        if se == 0.0 {
            if (mean - target).abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (mean - target).abs() / se
        }
    }
}

const MOMENT_CHUNK: usize = 500;

/// Accumulates `stats(replica_seed)` over the replicas in fixed chunks.
fn replica_moments<F>(c: &ExperimentConfig, k: usize, stats: F) -> Result<Moments>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    let chunks = c.replicas.div_ceil(MOMENT_CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|ch| -> Result<Moments> {
            let mut m = Moments::new(k);
            for r in ch * MOMENT_CHUNK..((ch + 1) * MOMENT_CHUNK).min(c.replicas) {
                m.push(&stats(replica_seed(c, r))?);
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().fold(Moments::new(k), |a, b| a.merge(b)))
}

fn z_check(rep: &mut ExperimentReport, name: &str, m: &Moments, targets: &[(usize, f64)], limit: f64) -> Vec<f64> {
    let zs: Vec<f64> = targets.iter().map(|&(i, t)| m.z(i, t)).collect();
    let worst = zs.iter().copied().fold(0.0, f64::max);
    let fails = zs.iter().filter(|z| !(**z <= limit)).count() as u64;
    rep.check(Check::new(
        format!("{name} ({} statistics)", zs.len()),
        format!("|mean - theory| <= {limit} SE, {} replicas", m.count),
        m.count,
        worst,
        fails,
    ));
    zs
}

/// Fixed points of norm `radius` with assorted overlaps.
fn point_pairs(n: usize, count: usize, radius: f64, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let dirs = sphere_points(n, 2 * count, seed, 0);
    (0..count)
        .map(|a| {
            let t = a as f64 / count.max(1) as f64;
            let mix: Vec<f64> = dirs[2 * a].iter().zip(&dirs[2 * a + 1]).map(|(x, y)| (1.0 - t) * x + t * y).collect();
            let mix = scale(&mix, 1.0 / norm(&mix));
            (scale(&dirs[2 * a], radius), scale(&mix, radius))
        })
        .collect()
}

const GRADIENT_PAIRS: usize = 3;

fn gaussian_law(c: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(&c.experiment, c.echo());
    let xi = series(c)?;
    let n = c.n;
    let pairs = point_pairs(n, c.points, 0.9, c.seed);
    let gp = GRADIENT_PAIRS.min(pairs.len());
    let k = pairs.len() + gp * n * n + gp * n;
    let m = replica_moments(c, k, |seed| {
        let d = disorder(n, &xi, seed)?;
        let mut v = Vec::with_capacity(k);
        for (s, t) in &pairs {
            v.push(d.energy(s)? * d.energy(t)?);
        }
        for (s, t) in &pairs[..gp] {
            let (gs, gt) = (d.gradient(s)?, d.gradient(t)?);
            for i in 0..n {
                for j in 0..n {
                    v.push(gs[i] * gt[j]);
                }
            }
        }
        for (s, t) in &pairs[..gp] {
            let (hs, gt) = (d.energy(s)?, d.gradient(t)?);
            v.extend(gt.iter().map(|g| hs * g));
        }
        Ok(v)
    })?;
    let mut idx = 0;
    let mut energy = Vec::new();
    for (s, t) in &pairs {
        energy.push((idx, n as f64 * xi.xi_eval(0, inner(s, t))?));
        idx += 1;
    }
    let mut gg = Vec::new();
    for (s, t) in &pairs[..gp] {
        let r = inner(s, t);
        let (d1, d2) = (xi.xi_eval(1, r)?, xi.xi_eval(2, r)?);
        for i in 0..n {
            for j in 0..n {
                let delta = if i == j { d1 } else { 0.0 };
                gg.push((idx, delta + s[j] * t[i] / n as f64 * d2));
                idx += 1;
            }
        }
    }
    let mut eg = Vec::new();
    for (s, t) in &pairs[..gp] {
        let d1 = xi.xi_eval(1, inner(s, t))?;
        for &sj in s.iter() {
            eg.push((idx, sj * d1));
            idx += 1;
        }
    }
    let lim = c.delta_check;
    let ze = z_check(&mut rep, "Cov(H(s), H(t)) vs N xi(<s,t>)", &m, &energy, lim);
    let zg = z_check(&mut rep, "Cov(dH(s), dH(t)) vs gradient formula", &m, &gg, lim);
    let zh = z_check(&mut rep, "Cov(H(s), dH(t)) vs xi'(<s,t>) s", &m, &eg, lim);
    for (a, z) in ze.iter().chain(&zg).chain(&zh).enumerate() {
        let mut row = Row::new(a, c.seed, "z-score");
        row.value = Some(*z);
        rep.rows.push(row);
    }
    rep.histogram = Some(Histogram {
        title: "Gaussian law z-scores".into(),
        x_label: "|mean - theory| / SE".into(),
        values: rep.rows.iter().filter_map(|r| r.value).collect(),
        marker: Some(lim),
    });
    Ok(rep)
}

fn recentering_law(c: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(&c.experiment, c.echo());
    let xi = series(c)?;
    let n = c.n;
    let q = c.q;
    let m0 = vec![q.sqrt(); n];
    let m_hat = vec![1.0; n];
    let radius = (1.0 - q).sqrt() * 0.95;
    let raw = point_pairs(n, c.points, 1.0, c.seed);
    let perp = |v: &[f64]| {
        let p = project_out(v, &[&m_hat]);
        scale(&p, radius / norm(&p))
    };
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = raw.iter().map(|(s, t)| (perp(s), perp(t))).collect();
    let gp = GRADIENT_PAIRS.min(pairs.len());
    let k = 2 * pairs.len() + gp * n;
    let mom = replica_moments(c, k, |seed| {
        let d = disorder(n, &xi, seed)?;
        let hm = d.energy(&m0)?;
        let g = d.gradient(&m0)?;
        let g_perp = project_out(&g, &[&m_hat]);
        let mut v = Vec::with_capacity(k);
        let mut first = Vec::with_capacity(pairs.len());
        for (s, t) in &pairs {
            let a = d.recentered_energy(&m0, s)?;
            v.push(a * d.recentered_energy(&m0, t)?);
            first.push(a);
        }
        v.extend(first.iter().map(|a| a * hm));
        for a in &first[..gp] {
            v.extend(g_perp.iter().map(|gi| a * gi));
        }
        Ok(v)
    })?;
    let xq = xi.xi_recenter(q)?;
    let cov: Vec<(usize, f64)> =
        pairs.iter().enumerate().map(|(i, (s, t))| Ok((i, n as f64 * xq.value(inner(s, t))?))).collect::<Result<_>>()?;
    let p = pairs.len();
    let cross_h: Vec<(usize, f64)> = (p..2 * p).map(|i| (i, 0.0)).collect();
    let cross_g: Vec<(usize, f64)> = (2 * p..k).map(|i| (i, 0.0)).collect();
    let lim = c.delta_check;
    let z1 = z_check(&mut rep, "Cov(H^m(s), H^m(t)) vs N xi_q(<s,t>)", &mom, &cov, lim);
    let z2 = z_check(&mut rep, "Cov(H^m(s), H(m)) vs 0", &mom, &cross_h, lim);
    let z3 = z_check(&mut rep, "Cov(H^m(s), P_perp grad H(m)) vs 0", &mom, &cross_g, lim);
    for (a, z) in z1.iter().chain(&z2).chain(&z3).enumerate() {
        let mut row = Row::new(a, c.seed, "z-score");
        row.value = Some(*z);
        rep.rows.push(row);
    }
    rep.histogram = Some(Histogram {
        title: "Recentering law z-scores".into(),
        x_label: "|mean - theory| / SE".into(),
        values: rep.rows.iter().filter_map(|r| r.value).collect(),
        marker: Some(lim),
    });
    Ok(rep)
}

// ---------------------------------------------------------------- 5

const FD_STEP: f64 = 1e-5;

fn gradient_check(c: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(&c.experiment, c.echo());
    let xi = series(c)?;
    let rows: Vec<Row> = (0..c.replicas)
        .into_par_iter()
        .map(|r| -> Result<Row> {
            let seed = replica_seed(c, r);
            let mut rng = stream(seed, DOMAIN_POINTS, 0);
            let n = rng.random_range(2..=c.n.max(2));
            let d = disorder(n, &xi, seed)?;
            let dir = &sphere_points(n, 1, seed, 2)[0];
            let s = ball_point(&mut rng, dir, 0.95);
            let g = d.gradient(&s)?;
            let mut worst = 0.0f64;
            for i in 0..n {
                let mut p = s.clone();
                let mut m = s.clone();
                p[i] += FD_STEP;
                m[i] -= FD_STEP;
                let fd = (d.energy(&p)? - d.energy(&m)?) / (2.0 * FD_STEP);
                worst = worst.max((g[i] - fd).abs() / g[i].abs().max(1.0));
            }
            let mut row = Row::new(r, seed, format!("N={n}"));
            row.value = Some(worst);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let worst = rows.iter().filter_map(|r| r.value).fold(0.0, f64::max);
    let fails = rows.iter().filter(|r| !(r.value.unwrap() <= c.delta_check)).count() as u64;
    rep.check(Check::new(
        "analytic vs central difference",
        format!("|a - fd| <= {:e} max(|a|, 1), step {FD_STEP:e}", c.delta_check),
        rows.len() as u64,
        worst,
        fails,
    ));
    rep.rows = rows;
    Ok(rep)
}

// ---------------------------------------------------------------- 6

#[derive(Default, Clone, Copy)]
struct CoverStats {
    points: u64,
    classify_failures: u64,
    k_max: usize,
    k_failures: u64,
    membership_failures: u64,
    thickness: f64,
    thickness_failures: u64,
    field: f64,
    field_failures: u64,
    radius: f64,
    radius_failures: u64,
    thin: f64,
    thin_failures: u64,
}

impl CoverStats {
    fn merge(mut self, o: &CoverStats) -> Self {
        self.points += o.points;
        self.classify_failures += o.classify_failures;
        self.k_max = self.k_max.max(o.k_max);
        self.k_failures += o.k_failures;
        self.membership_failures += o.membership_failures;
        self.thickness = self.thickness.max(o.thickness);
        self.thickness_failures += o.thickness_failures;
        self.field = self.field.max(o.field);
        self.field_failures += o.field_failures;
        self.radius = self.radius.max(o.radius);
        self.radius_failures += o.radius_failures;
        self.thin = self.thin.max(o.thin);
        self.thin_failures += o.thin_failures;
        self
    }
}

#[allow(clippy::too_many_arguments)]
fn cover_point(
    d: &DisorderSample,
    e: &ReferenceMeasure,
    f: &ExternalField,
    s: &[f64],
    eps: f64,
    eta: f64,
    delta: f64,
    cache: &NodeCache,
) -> (CoverStats, Option<usize>) {
    let mut st = CoverStats {
        points: 1,
        ..Default::default()
    };
    let Ok(cl) = classify_cached(d, e, f, s, eps, eta, delta, Some(cache)) else {
        st.classify_failures = 1;
        return (st, None);
    };
    let node = &cl.node;
    let k = node.k();
    st.k_max = k;
    st.k_failures = u64::from(k as f64 > 5.0 / (eta * eta));
    st.membership_failures = u64::from(!membership(node, s, eta).in_e);
    let m = &node.m_alpha;
    // ratios to the asserted limits; <= 1 passes
    st.thickness = norm(&sub(&node.project_upper(s), m)) / (4.0 * eta);
    let h = d.gradient(m).expect("m_alpha lies in the open ball");
    let hn = norm(&h);
    st.field = if hn == 0.0 { 0.0 } else { inner(&sub(s, m), &h).abs() / (4.0 * eta * hn) };
    let eta4 = eta.powf(0.25);
    st.radius = (norm(&node.project_complement(s)) - (1.0 - node.q_alpha).sqrt()).abs() / (8.0 * eta4);
    st.thin = norm(&sub(&sub(s, m), &thin_projection(node, s))) / (12.0 * eta4);
    st.thickness_failures = u64::from(!(st.thickness <= 1.0));
    st.field_failures = u64::from(!(st.field <= 1.0));
    st.radius_failures = u64::from(!(st.radius <= 1.0));
    st.thin_failures = u64::from(!(st.thin <= 1.0));
    (st, Some(k))
}

fn cover_checks(rep: &mut ExperimentReport, tag: &str, st: &CoverStats, eta: f64) {
    let n = st.points;
    rep.check(Check::new(format!("{tag}: classification succeeds"), "all points", n, st.classify_failures as f64, st.classify_failures));
    rep.check(Check::new(
        format!("{tag}: k <= 5/eta^2"),
        format!("k <= {}", (5.0 / (eta * eta)).floor()),
        n,
        st.k_max as f64,
        st.k_failures,
    ));
    rep.check(Check::new(format!("{tag}: sigma in E_alpha"), "all points", n, st.membership_failures as f64, st.membership_failures));
    rep.check(Check::new(format!("{tag}: thickness ratio"), "||P_U s - m|| <= 4 eta", n, st.thickness, st.thickness_failures));
    rep.check(Check::new(format!("{tag}: effective field ratio"), "|<s - m, h_eff>| <= 4 eta ||h_eff||", n, st.field, st.field_failures));
    rep.check(Check::new(format!("{tag}: radius ratio"), "| ||P_V s|| - sqrt(1-q) | <= 8 eta^(1/4)", n, st.radius, st.radius_failures));
    rep.check(Check::new(format!("{tag}: thin projection ratio"), "||(s - m) - tau(s)|| <= 12 eta^(1/4)", n, st.thin, st.thin_failures));
}

fn cover_property(c: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(&c.experiment, c.echo());
    let xi = series(c)?;
    let (eps, eta, delta) = (c.epsilon, c.eta, c.delta);
    let mut ks = Vec::new();

    if c.points > 0 {
        let n = c.n;
        let d = disorder(n, &xi, replica_seed(c, 0))?;
        let f = field(c.field_kind, n, c.fields[0]);
        let e = ReferenceMeasure::SphereUniform { n };
        let cache = NodeCache::new();
        let pts = sphere_points(n, c.points, c.seed, 0);
        let res: Vec<(CoverStats, Option<usize>)> = pts.par_iter().map(|s| cover_point(&d, &e, &f, s, eps, eta, delta, &cache)).collect();
        let st = res.iter().fold(CoverStats::default(), |a, (b, _)| a.merge(b));
        for (i, (_, k)) in res.iter().enumerate() {
            let mut row = Row::new(i, c.seed, format!("sphere N={n}"));
            row.value = k.map(|k| k as f64);
            rep.rows.push(row);
        }
        ks.extend(res.iter().filter_map(|(_, k)| k.map(|k| k as f64)));
        cover_checks(&mut rep, &format!("sphere N={n}"), &st, eta);
        rep.notes.push(format!("sphere: {} distinct level prefixes built", cache.len()));
    }
    if c.n_aux > 0 {
        let n = c.n_aux;
        let d = disorder(n, &xi, replica_seed(c, 1))?;
        let f = field(c.field_kind, n, c.fields[0]);
        let e = ReferenceMeasure::IsingUniform { n };
        let cache = NodeCache::new();
        let res: Vec<(CoverStats, Option<usize>)> =
            (0u64..1 << n).into_par_iter().map(|b| cover_point(&d, &e, &f, &ising_atom(n, b), eps, eta, delta, &cache)).collect();
        let st = res.iter().fold(CoverStats::default(), |a, (b, _)| a.merge(b));
        for (i, (_, k)) in res.iter().enumerate() {
            let mut row = Row::new(i, c.seed, format!("ising N={n}"));
            row.value = k.map(|k| k as f64);
            rep.rows.push(row);
        }
        ks.extend(res.iter().filter_map(|(_, k)| k.map(|k| k as f64)));
        cover_checks(&mut rep, &format!("ising N={n} exhaustive"), &st, eta);
        rep.notes.push(format!("ising: {} distinct level prefixes built", cache.len()));
    }
    rep.aggregate("k", &ks);
    rep.histogram = Some(Histogram {
        title: "Classification depth k".into(),
        x_label: "k".into(),
        values: ks,
        marker: None,
    });
    Ok(rep)
}

// ---------------------------------------------------------------- 7

fn slice_entropy(c: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(&c.experiment, c.echo());
    let xi = series(c)?;
    let n = c.n;
    let (eps, eta, delta) = (c.epsilon, c.eta, c.delta);
    if eta > delta / 4.0 {
        rep.notes.push(format!("eta = {eta} > delta/4: the half-space containment is not guaranteed"));
    }
    let rows: Vec<Row> = (0..c.replicas)
        .into_par_iter()
        .map(|r| -> Result<Row> {
            let seed = replica_seed(c, r);
            let d = disorder(n, &xi, seed)?;
            let f = field(c.field_kind, n, c.fields[0]);
            let e = ReferenceMeasure::IsingUniform { n };
            let s = random_atom(n, seed);
            let cl = classify_cached(&d, &e, &f, &s, eps, eta, delta, None)?;
            let sm = slice_measures(&e, &cl.node, eta, None)?;
            let bound = general_entropy_upper(&e, &cl.node.m_alpha, delta, f.basis())?;
            let mut row = Row::new(r, seed, format!("k={}", cl.node.k()));
            row.log_z = Some(sm.mass.ln());
            row.tap_sup = Some(bound + delta);
            row.event = Some(!(sm.mass.ln() <= bound + delta));
            row.value = Some(bound + delta - sm.mass.ln());
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let fails = rows.iter().filter(|r| r.event == Some(true)).count() as u64;
    let slack: Vec<f64> = rows.iter().filter_map(|r| r.value).collect();
    rep.check(Check::new(
        "log E[E_alpha] <= entropy bound + delta",
        "zero exceptions",
        rows.len() as u64,
        slack.iter().copied().fold(f64::INFINITY, f64::min),
        fails,
    ));
    rep.aggregate("slack", &slack);
    rep.notes.push("observed = smallest slack (bound + delta - log mass)".into());
    rep.rows = rows;
    Ok(rep)
}

// ---------------------------------------------------------------- 8

fn onsager_frequency(c: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(&c.experiment, c.echo());
    let xi = series(c)?;
    let n = c.n;
    let beta = c.betas[0];
    let (eps, eta, delta) = (c.epsilon, c.eta, c.delta);
    let rows: Vec<Row> = (0..c.replicas)
        .into_par_iter()
        .map(|r| -> Result<Row> {
            let seed = replica_seed(c, r);
            let d = disorder(n, &xi, seed)?;
            let f = field(c.field_kind, n, c.fields[0]);
            let e = ReferenceMeasure::IsingUniform { n };
            let s = random_atom(n, seed);
            let cl = classify_cached(&d, &e, &f, &s, eps, eta, delta, None)?;
            let node = &cl.node;
            let sm = slice_measures(&e, node, eta, None)?;
            let thin = sm.thin_pushforward.expect("the classified atom lies in its slice");
            let m = &node.m_alpha;
            let mut energies = Vec::with_capacity(thin.len());
            for tau in &thin.points {
                energies.push(if tau.iter().all(|&x| x == 0.0) { 0.0 } else { d.recentered_energy(m, tau)? });
            }
            let mut acc = LogSumExp::new();
            for (w, h) in thin.weights.iter().zip(&energies) {
                acc.push(w.ln() + beta * h);
            }
            let lhs = acc.value();
            let rhs = n as f64 * beta * beta / 2.0 * xi.onsager(node.q_alpha)? + delta * n as f64;
            let mut row = Row::new(r, seed, format!("q={:.4}", node.q_alpha));
            row.log_z = Some(lhs);
            row.tap_sup = Some(rhs);
            row.event = Some(lhs >= rhs);
            row.value = Some(lhs - rhs);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let total = rows.len() as f64;
    let events = rows.iter().filter(|r| r.event == Some(true)).count();
    let freq = events as f64 / total;
    let p0 = (-delta * n as f64).exp();
    let se = (p0 * (1.0 - p0) / total).sqrt();
    let limit = p0 + c.delta_check * se;
    rep.check(Check::new(
        "frequency of slices exceeding the Onsager bound",
        format!("<= e^(-delta N) + {} binomial SE = {limit:.6}", c.delta_check),
        rows.len() as u64,
        freq,
        u64::from(!(freq <= limit)),
    ));
    let margins: Vec<f64> = rows.iter().filter_map(|r| r.value).collect();
    rep.aggregate("log_ratio", &margins);
    rep.histogram = Some(Histogram {
        title: "log E[exp(beta H^m)] - (N beta^2 On(q)/2 + delta N)".into(),
        x_label: "log ratio".into(),
        values: margins,
        marker: Some(0.0),
    });
    rep.rows = rows;
    Ok(rep)
}

// ---------------------------------------------------------------- 9

fn bound_rows(c: &ExperimentConfig, n: usize, flavor: Flavor, replicas: usize, offset: usize) -> Result<Vec<Row>> {
    let xi = series(c)?;
    let mut jobs = Vec::new();
    for &beta in &c.betas {
        for &h in &c.fields {
            for r in 0..replicas {
                jobs.push((beta, h, r));
            }
        }
    }
    jobs.into_par_iter()
        .enumerate()
        .map(|(j, (beta, h, r))| -> Result<Row> {
            let seed = replica_seed(c, offset + r);
            let p = problem(n, &xi, beta, field(c.field_kind, n, h), flavor.clone(), seed)?;
            let (log_z, se) = match flavor {
                Flavor::Spherical => {
                    let est = log_partition_mc_sphere(&p.disorder, &p.model.field, beta, c.mc_samples, derive(seed, DOMAIN_POINTS, 0))?;
                    (est.log_value, est.std_error)
                }
                _ => (log_partition_exact_ising(&p.disorder, &p.model.field, beta)?.log_value, 0.0),
            };
            let t = maximize_tap(&p, c.tap_starts, seed);
            let mut row = Row::new(j, seed, format!("{} N={n} beta={beta} h={h}", flavor.label()));
            row.log_z = Some(log_z);
            row.tap_sup = Some(t.value);
            row.gap_per_spin = Some((log_z - 3.0 * se - t.value) / n as f64);
            row.event = Some(t.converged);
            row.value = Some(se);
            Ok(row)
        })
        .collect()
}

fn theorem_bound(c: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(&c.experiment, c.echo());
    let lim = c.delta_check;
    let mut all = Vec::new();
    let mut add = |rep: &mut ExperimentReport, rows: Vec<Row>, tag: &str, tol: String| {
        let gaps: Vec<f64> = rows.iter().filter_map(|r| r.gap_per_spin).collect();
        let worst = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let fails = gaps.iter().filter(|g| !(**g <= lim)).count() as u64;
        rep.check(Check::new(format!("{tag}: per-spin gap"), tol, gaps.len() as u64, worst, fails));
        let unconverged = rows.iter().filter(|r| r.event == Some(false)).count();
        rep.notes.push(format!("{tag}: {unconverged} of {} TAP ascents stopped before the gradient tolerance", rows.len()));
        rep.aggregate(&format!("{tag}_gap_per_spin"), &gaps);
        all.extend(gaps);
        rep.rows.extend(rows);
    };
    if c.measure != MeasureKind::Sphere {
        let rows = bound_rows(c, c.n, Flavor::Ising, c.replicas, 0)?;
        add(&mut rep, rows, "ising", format!("(log Z - sup TAP)/N <= {lim}"));
    }
    if c.measure != MeasureKind::Ising {
        let rows = bound_rows(c, c.n_aux, Flavor::Spherical, c.aux_replicas, 1_000_000)?;
        add(&mut rep, rows, "sphere", format!("(log Z_mc - 3 SE - sup TAP)/N <= {lim}, {} samples", c.mc_samples));
    }
    rep.histogram = Some(Histogram {
        title: "Per-spin gap (log Z - sup TAP) / N".into(),
        x_label: "gap per spin".into(),
        values: all,
        marker: Some(lim),
    });
    Ok(rep)
}

// ---------------------------------------------------------------- 10

fn entropy_lemmas(c: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(&c.experiment, c.echo());
    let mut rng = stream(c.seed, DOMAIN_POINTS, 10);
    let pairs = c.points;

    let mut fails = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let a: f64 = rng.random_range(-1.5..1.5);
        let b = if rng.random::<bool>() { a + rng.random_range(-0.01..0.01) } else { rng.random_range(-1.5..1.5) };
        let x: f64 = (a - b).abs();
        if x == 0.0 {
            continue;
        }
        let lhs = (binary_entropy(a) - binary_entropy(b)).abs();
        let rhs = x * (2.0 * std::f64::consts::E / x.min(1.0)).ln();
        worst = worst.max(lhs - rhs);
        fails += u64::from(!(lhs <= rhs));
    }
    rep.check(Check::new("|J(a) - J(b)| <= |a-b| log(2e/(|a-b| ^ 1))", "exact", pairs as u64, worst, fails));

    let n = c.n;
    let mut fails = 0;
    let mut worst = f64::NEG_INFINITY;
    let dirs = sphere_points(n, 2 * pairs, c.seed, 11);
    for i in 0..pairs {
        let m = ball_point(&mut rng, &dirs[2 * i], 1.0);
        let mt = if i % 2 == 0 {
            let step = scale(&dirs[2 * i + 1], rng.random_range(0.0..0.05));
            let v: Vec<f64> = m.iter().zip(&step).map(|(a, b)| a + b).collect();
            let r = norm(&v);
            if r > 1.0 { scale(&v, 1.0 / r) } else { v }
        } else {
            ball_point(&mut rng, &dirs[2 * i + 1], 1.0)
        };
        let r = norm(&sub(&m, &mt));
        if r == 0.0 {
            continue;
        }
        let lhs = (ising_entropy(&m) - ising_entropy(&mt)).abs();
        let rhs = 2.0 * n as f64 * r * (4.0 * std::f64::consts::E / r).ln();
        worst = worst.max(lhs - rhs);
        fails += u64::from(!(lhs <= rhs));
    }
    rep.check(Check::new("|I(m) - I(m')| <= 2N ||m-m'|| log(4e/||m-m'||)", format!("exact, N = {n}"), pairs as u64, worst, fails));

    let e = ReferenceMeasure::IsingUniform { n };
    let basis = vec![vec![1.0; n]];
    let delta = c.delta;
    let mut fails = 0;
    for _ in 0..c.replicas {
        let mut m: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let i = rng.random_range(0..n);
        let excess = (n as f64).sqrt() * delta * (1.0 + rng.random::<f64>());
        m[i] = if rng.random::<bool>() { 1.0 + excess } else { -1.0 - excess };
        let clipped: Vec<f64> = m.iter().map(|x| x.clamp(-1.0, 1.0)).collect();
        debug_assert!(norm(&sub(&m, &clipped)) > delta);
        let v = general_entropy_upper(&e, &m, delta, &basis)?;
        fails += u64::from(v != f64::NEG_INFINITY);
    }
    rep.check(Check::new("entropy is -inf when d(m, cube) > delta", "exact", c.replicas as u64, fails as f64, fails));

    let nc = c.n_aux;
    let mut fails = 0;
    let mut worst = f64::NEG_INFINITY;
    let grid = 50;
    for j in 0..grid {
        let alpha = (1.0 - delta) * j as f64 / (grid - 1) as f64;
        let tail = cap_tail(nc, alpha);
        let bound = cap_tail_bound(nc, alpha);
        let mut row = Row::new(j, c.seed, format!("alpha={alpha:.4}"));
        row.log_z = Some(tail);
        row.tap_sup = Some(bound);
        rep.rows.push(row);
        worst = worst.max(tail - bound);
        fails += u64::from(!(tail <= bound));
    }
    rep.check(Check::new(
        "cap mass <= sqrt(N/2pi) (1-a^2)^((N-3)/2)",
        format!("exact, N = {nc}, a in [0, 1-delta]"),
        grid as u64,
        worst,
        fails,
    ));
    Ok(rep)
}

// ---------------------------------------------------------------- 11

fn series_identities(c: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new(&c.experiment, c.echo());
    let mut rng = stream(c.seed, DOMAIN_POINTS, 12);
    let tol = c.delta_check;
    let (mut w1, mut w2) = (0.0f64, 0.0f64);
    let (mut f1, mut f2) = (0u64, 0u64);
    for _ in 0..c.replicas {
        let deg = rng.random_range(1..=6);
        let xi = CovarianceSeries::new((0..=deg).map(|_| rng.random::<f64>()).collect())?;
        let q = rng.random_range(0.0..0.95);
        let q2 = rng.random_range(0.0..(1.0 - q) * 0.95);
        let r = 1.0 - q - q2;
        let z = rng.random_range(-r..r);
        let a = xi.onsager(q)?;
        let b = xi.xi_recenter(q)?.value(1.0 - q)?;
        let e1 = (a - b).abs() / b.abs().max(1.0);
        let lhs = xi.xi_recenter(q)?.xi_recenter(q2)?.value(z)?;
        let rhs = xi.xi_recenter(q + q2)?.value(z)?;
        let e2 = (lhs - rhs).abs() / rhs.abs().max(1.0);
        w1 = w1.max(e1);
        w2 = w2.max(e2);
        f1 += u64::from(!(e1 <= tol));
        f2 += u64::from(!(e2 <= tol));
    }
    let k = c.replicas as u64;
    rep.check(Check::new("On(q) = xi_q(1-q)", format!("<= {tol:e} max(1, |value|)"), k, w1, f1));
    rep.check(Check::new("(xi_q)_q' = xi_(q+q')", format!("<= {tol:e} max(1, |value|)"), k, w2, f2));
    Ok(rep)
}

// ---------------------------------------------------------------- tap-max

/// Output of a single TAP maximization with radial landscape slices.
pub struct TapRun {
    pub maximum: TapMaximum,
    pub radii: Vec<f64>,
    pub slices: Vec<(String, Vec<f64>)>,
}

pub const RADIAL_POINTS: usize = 101;

/// Maximizes the TAP energy for the first `(beta, h)` of the config and samples 1-D radial slices.
pub fn tap_max(c: &ExperimentConfig) -> Result<TapRun> {
    let xi = series(c)?;
    let n = c.n;
    let flavor = if c.measure == MeasureKind::Sphere { Flavor::Spherical } else { Flavor::Ising };
    let p = problem(n, &xi, c.betas[0], field(c.field_kind, n, c.fields[0]), flavor.clone(), replica_seed(c, 0))?;
    let maximum = maximize_tap(&p, c.tap_starts, c.seed);
    let mut dirs: Vec<(String, Vec<f64>)> = Vec::new();
    if norm(&maximum.m_star) > 0.0 {
        dirs.push(("toward m*".into(), maximum.m_star.clone()));
    }
    for (i, d) in sphere_points(n, 2, c.seed, 13).into_iter().enumerate() {
        dirs.push((format!("random {i}"), d));
    }
    let radii: Vec<f64> = (0..RADIAL_POINTS).map(|i| i as f64 / (RADIAL_POINTS - 1) as f64).collect();
    let slices = dirs
        .into_iter()
        .map(|(name, d)| {
            // the ray t * d / scale stays inside the domain for t < 1
            let extent = match flavor {
                Flavor::Ising => d.iter().fold(0.0f64, |a, x| a.max(x.abs())),
                _ => norm(&d),
            };
            let ys = radii
                .iter()
                .map(|t| {
                    let t = t * (1.0 - 1e-6);
                    tap_energy(&p, &scale(&d, t / extent)).unwrap_or(f64::NAN)
                })
                .collect();
            (name, ys)
        })
        .collect();
    Ok(TapRun { maximum, radii, slices })
}

impl TapRun {
    pub fn write_all(&self, dir: &std::path::Path) -> Result<std::path::PathBuf> {
        let sub = dir.join("tap-max");
        std::fs::create_dir_all(&sub)?;
        write_trace_csv(&self.maximum.trace, std::fs::File::create(sub.join("trace.csv"))?)?;
        let summary = serde_json::json!({
            "value": self.maximum.value,
            "per_spin": self.maximum.per_spin,
            "best_start": self.maximum.best_start,
            "converged": self.maximum.converged,
            "m_star": self.maximum.m_star,
        });
        std::fs::write(sub.join("maximum.json"), serde_json::to_string_pretty(&summary).expect("json") + "\n")?;
        std::fs::write(
            sub.join("radial.svg"),
            crate::plot::lines_svg("TAP energy along rays from the origin", "fraction of the way to the boundary", &self.radii, &self.slices),
        )?;
        Ok(sub)
    }
}

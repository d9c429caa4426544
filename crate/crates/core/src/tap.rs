//! TAP energies, gradients and maximizers.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{general_entropy_upper, ising_entropy, spherical_entropy, ReferenceMeasure};
use crate::error::{domain, Error, Result};
use crate::field::check_len;
use crate::hamiltonian::{DisorderSample, LipschitzProbe, MixedModel};
use crate::linalg::{dot, norm, norm_sq, scale};
use crate::{rng, NORM_TOL};

pub const MAX_ITERATIONS: usize = 500;
pub const INITIAL_STEP: f64 = 0.1;
pub const BACKTRACK: f64 = 0.5;
pub const GRAD_TOL: f64 = 1e-8;
pub const START_SHRINK: f64 = 0.9;
pub const CLIP_MARGIN: f64 = 1e-9;
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-16;
const MAX_STEP: f64 = 1.0;

/// Product grids larger than this are refused.
pub const GRID_BUDGET: u128 = 200_000_000;
pub const GRID_MAX_N: usize = 8;
const SPHERE_GRID_DIRECTIONS: usize = 4000;

/// Which entropy term the TAP functional uses.
#[derive(Debug, Clone)]
pub enum Flavor {
    Ising,
    Spherical,
    General { measure: ReferenceMeasure, delta: f64 },
}

impl Flavor {
    pub fn label(&self) -> &'static str {
        match self {
            Flavor::Ising => "ising",
            Flavor::Spherical => "spherical",
            Flavor::General { .. } => "general",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TapProblem {
    pub model: MixedModel,
    pub disorder: DisorderSample,
    pub flavor: Flavor,
}

/// One row of an ascent log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub start: usize,
    pub iteration: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub step: f64,
}

/// Best point found by [`maximize_tap`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TapMaximum {
    pub m_star: Vec<f64>,
    pub value: f64,
    pub per_spin: f64,
    pub best_start: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

/// Best grid point found by [`brute_force_tap_max`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridMaximum {
    pub m_star: Vec<f64>,
    pub value: f64,
    pub points: u128,
    /// Largest normalized distance from a domain point to the grid.
    pub resolution: f64,
}

impl TapProblem {
    pub fn new(model: MixedModel, disorder: DisorderSample, flavor: Flavor) -> Result<Self> {
        if disorder.n() != model.n {
            return Err(Error::Invalid(format!("disorder has N = {}, model has N = {}", disorder.n(), model.n)));
        }
        if let Flavor::General { measure, delta } = &flavor {
            if measure.n() != model.n || !(*delta > 0.0) {
                return Err(Error::Invalid("general flavor needs a measure of dimension N and delta > 0".into()));
            }
        }
        Ok(Self { model, disorder, flavor })
    }

    pub fn n(&self) -> usize {
        self.model.n
    }

    fn check_domain(&self, m: &[f64]) -> Result<()> {
        check_len(m, self.n())?;
        match &self.flavor {
            Flavor::Ising => {
                if m.iter().all(|x| x.abs() < 1.0) {
                    Ok(())
                } else {
                    domain("ising TAP energy needs m in (-1,1)^N")
                }
            }
            Flavor::Spherical => {
                if norm(m) < 1.0 {
                    Ok(())
                } else {
                    domain("spherical TAP energy needs ||m|| < 1")
                }
            }
            Flavor::General { .. } => {
                if norm(m) <= 1.0 + NORM_TOL {
                    Ok(())
                } else {
                    domain("general TAP energy needs ||m|| <= 1")
                }
            }
        }
    }

    fn onsager_term(&self, q: f64) -> f64 {
        let b = self.model.beta;
        0.5 * b * b * self.n() as f64 * self.model.series.onsager(q.clamp(0.0, 1.0)).unwrap_or(0.0)
    }

    fn value_unchecked(&self, m: &[f64]) -> f64 {
        let b = self.model.beta;
        let q = norm_sq(m);
        let energy = if b == 0.0 {
            0.0
        } else {
            b * (self.disorder.energy_unchecked(m) + self.model.field.value_unchecked(m))
        };
        let entropy = match &self.flavor {
            Flavor::Ising => ising_entropy(m),
            Flavor::Spherical => spherical_entropy(m).unwrap_or(f64::NEG_INFINITY),
            Flavor::General { measure, delta } => {
                general_entropy_upper(measure, m, *delta, self.model.field.basis()).unwrap_or(f64::NEG_INFINITY)
            }
        };
        energy + entropy + self.onsager_term(q)
    }

    fn gradient_unchecked(&self, m: &[f64]) -> Vec<f64> {
        let b = self.model.beta;
        let q = norm_sq(m);
        let h = self.disorder.gradient_unchecked(m);
        let f = self.model.field.field_gradient(m);
        let on = b * b * self.model.series.onsager_derivative(q.clamp(0.0, 1.0)).unwrap_or(0.0);
        let sph = 1.0 / (1.0 - q);
        m.iter()
            .enumerate()
            .map(|(i, &mi)| {
                let ent = match self.flavor {
                    Flavor::Ising => -mi.atanh(),
                    _ => -mi * sph,
                };
                b * (h[i] + f[i]) + ent + on * mi
            })
            .collect()
    }

    fn project(&self, m: &mut [f64]) {
        match &self.flavor {
            Flavor::Ising => {
                for x in m.iter_mut() {
                    *x = x.clamp(-(1.0 - CLIP_MARGIN), 1.0 - CLIP_MARGIN);
                }
            }
            Flavor::Spherical | Flavor::General { .. } => {
                let r = norm(m);
                let cap = 1.0 - CLIP_MARGIN;
                if r > cap {
                    for x in m.iter_mut() {
                        *x *= cap / r;
                    }
                }
            }
        }
    }

    /// Gradient with components that push out through an active constraint removed.
    fn free_gradient(&self, m: &[f64], g: &[f64]) -> Vec<f64> {
        match &self.flavor {
            Flavor::Ising => m
                .iter()
                .zip(g)
                .map(|(&x, &gi)| {
                    let at_edge = x.abs() >= 1.0 - CLIP_MARGIN && x.signum() == gi.signum();
                    if at_edge {
                        0.0
                    } else {
                        gi
                    }
                })
                .collect(),
            _ => {
                let r = norm(m);
                let radial = dot(m, g);
                if r >= 1.0 - CLIP_MARGIN - 1e-15 && radial > 0.0 {
                    let c = radial / dot(m, m);
                    m.iter().zip(g).map(|(x, gi)| gi - c * x).collect()
                } else {
                    g.to_vec()
                }
            }
        }
    }

    fn random_start(&self, index: usize, seed: u64) -> Vec<f64> {
        let n = self.n();
        if index == 0 {
            return vec![0.0; n];
        }
        let mut r = rng::stream(seed, rng::DOMAIN_TAP_STARTS, index as u64);
        let cube = matches!(
            self.flavor,
            Flavor::Ising | Flavor::General { measure: ReferenceMeasure::IsingUniform { .. }, .. }
        );
        if cube {
            (0..n).map(|_| START_SHRINK * (2.0 * r.random::<f64>() - 1.0)).collect()
        } else {
            let g: Vec<f64> = (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
            let radius = START_SHRINK * r.random::<f64>().powf(1.0 / n as f64);
            scale(&g, radius / norm(&g).max(f64::MIN_POSITIVE))
        }
    }

    fn ascend(&self, start: usize, mut m: Vec<f64>) -> (Vec<f64>, f64, bool, Vec<TraceRow>) {
        self.project(&mut m);
        let mut value = self.value_unchecked(&m);
        let mut step = INITIAL_STEP;
        let mut trace = Vec::new();
        let mut converged = false;
        for iteration in 0..MAX_ITERATIONS {
            let g = self.free_gradient(&m, &self.gradient_unchecked(&m));
            let grad_norm = norm(&g);
            trace.push(TraceRow {
                start,
                iteration,
                value,
                grad_norm,
                step,
            });
            if grad_norm < GRAD_TOL {
                converged = true;
                break;
            }
            let mut accepted = false;
            while step >= MIN_STEP {
                let mut cand: Vec<f64> = m.iter().zip(&g).map(|(x, gi)| x + step * gi).collect();
                self.project(&mut cand);
                let cv = self.value_unchecked(&cand);
                let moved: f64 = g.iter().zip(cand.iter().zip(&m)).map(|(gi, (c, x))| gi * (c - x)).sum();
                if cv.is_finite() && cv >= value + ARMIJO * moved {
                    accepted = cand != m;
                    m = cand;
                    value = cv;
                    break;
                }
                step *= BACKTRACK;
            }
            if !accepted {
                break;
            }
            step = (2.0 * step).min(MAX_STEP);
        }
        (m, value, converged, trace)
    }

    /// Compass search for the general flavor, which has no gradient.
    fn compass(&self, start: usize, mut m: Vec<f64>) -> (Vec<f64>, f64, bool, Vec<TraceRow>) {
        self.project(&mut m);
        let mut value = self.value_unchecked(&m);
        let mut step = INITIAL_STEP;
        let mut trace = Vec::new();
        let n = self.n();
        for iteration in 0..MAX_ITERATIONS {
            trace.push(TraceRow {
                start,
                iteration,
                value,
                grad_norm: f64::NAN,
                step,
            });
            if step < GRAD_TOL {
                return (m, value, true, trace);
            }
            let mut improved = false;
            for i in 0..n {
                for sign in [1.0, -1.0] {
                    let mut cand = m.clone();
                    cand[i] += sign * step;
                    self.project(&mut cand);
                    let cv = self.value_unchecked(&cand);
                    if cv > value {
                        m = cand;
                        value = cv;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step *= BACKTRACK;
            }
        }
        (m, value, false, trace)
    }
}

/// TAP energy `beta H^f(m) + I(m) + (beta^2/2) N On(||m||^2)`, extensive.
pub fn tap_energy(p: &TapProblem, m: &[f64]) -> Result<f64> {
    p.check_domain(m)?;
    Ok(p.value_unchecked(m))
}

/// Analytic gradient of the Ising or spherical TAP energy.
pub fn tap_gradient(p: &TapProblem, m: &[f64]) -> Result<Vec<f64>> {
    if let Flavor::General { .. } = p.flavor {
        return Err(Error::Unsupported("the general TAP energy has no gradient".into()));
    }
    p.check_domain(m)?;
    Ok(p.gradient_unchecked(m))
}

/// Multi-start projected gradient ascent with backtracking.
///
/// Start 0 is the origin; the others are uniform in the domain shrunk by
/// [`START_SHRINK`]. Ties go to the lowest start index.
pub fn maximize_tap(p: &TapProblem, starts: usize, rng_seed: u64) -> TapMaximum {
    let runs: Vec<_> = (0..starts.max(1))
        .into_par_iter()
        .map(|s| {
            let m0 = p.random_start(s, rng_seed);
            match p.flavor {
                Flavor::General { .. } => p.compass(s, m0),
                _ => p.ascend(s, m0),
            }
        })
        .collect();
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.1 > runs[best].1 {
            best = i;
        }
    }
    let trace = runs.iter().flat_map(|r| r.3.iter().cloned()).collect();
    let (m_star, value, converged, _) = runs.into_iter().nth(best).unwrap();
    TapMaximum {
        per_spin: value / p.n() as f64,
        m_star,
        value,
        best_start: best,
        converged,
        trace,
    }
}

/// Writes an ascent log as CSV with columns `start,iteration,value,grad_norm,step`.
pub fn write_trace_csv<W: std::io::Write>(trace: &[TraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in trace {
        w.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Exhaustive grid search.
///
/// Ising: the product grid `{k * step} ∩ (-1,1)` in every coordinate. Spherical:
/// radii `{k * step} ∩ [0,1)` times a fixed set of random directions plus the
/// field directions.
pub fn brute_force_tap_max(p: &TapProblem, grid_step: f64) -> Result<GridMaximum> {
    if !(grid_step > 0.0 && grid_step < 1.0) {
        return domain("grid step must lie in (0,1)");
    }
    let n = p.n();
    match p.flavor {
        Flavor::Ising => {
            let kmax = ((1.0 / grid_step).ceil() as i64 - 1).max(0);
            let kmax = if kmax as f64 * grid_step >= 1.0 { kmax - 1 } else { kmax };
            let values: Vec<f64> = (-kmax..=kmax).map(|k| k as f64 * grid_step).collect();
            let g = values.len() as u128;
            let total = g.checked_pow(n as u32).unwrap_or(u128::MAX);
            if n > GRID_MAX_N || total > GRID_BUDGET {
                return Err(Error::Resource {
                    what: "TAP grid points".into(),
                    required: total,
                    budget: if n > GRID_MAX_N { GRID_MAX_N as u128 } else { GRID_BUDGET },
                });
            }
            let chunk = |first: usize| {
                let mut idx = vec![0usize; n];
                idx[0] = first;
                let mut best = (f64::NEG_INFINITY, Vec::new());
                let mut m: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
                loop {
                    let v = p.value_unchecked(&m);
                    if v > best.0 {
                        best = (v, m.clone());
                    }
                    let mut pos = n - 1;
                    loop {
                        if pos == 0 {
                            return best;
                        }
                        idx[pos] += 1;
                        if idx[pos] < values.len() {
                            m[pos] = values[idx[pos]];
                            break;
                        }
                        idx[pos] = 0;
                        m[pos] = values[0];
                        pos -= 1;
                    }
                }
            };
            let results: Vec<(f64, Vec<f64>)> = (0..values.len()).into_par_iter().map(chunk).collect();
            let mut best = &results[0];
            for r in &results {
                if r.0 > best.0 {
                    best = r;
                }
            }
            Ok(GridMaximum {
                m_star: best.1.clone(),
                value: best.0,
                points: total,
                resolution: (grid_step / 2.0).max(1.0 - kmax as f64 * grid_step),
            })
        }
        Flavor::Spherical => {
            let kmax = ((1.0 / grid_step).ceil() as i64 - 1).max(0);
            let kmax = if kmax as f64 * grid_step >= 1.0 { kmax - 1 } else { kmax };
            let mut dirs: Vec<Vec<f64>> = Vec::new();
            for u in p.model.field.basis() {
                dirs.push(u.clone());
                dirs.push(scale(u, -1.0));
            }
            let mut r = rng::stream(0, rng::DOMAIN_GRID, n as u64);
            for _ in 0..SPHERE_GRID_DIRECTIONS {
                let g: Vec<f64> = (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
                dirs.push(scale(&g, 1.0 / norm(&g)));
            }
            let total = (kmax as u128 + 1) * dirs.len() as u128;
            if total > GRID_BUDGET {
                return Err(Error::Resource {
                    what: "TAP grid points".into(),
                    required: total,
                    budget: GRID_BUDGET,
                });
            }
            let mut best = (p.value_unchecked(&vec![0.0; n]), vec![0.0; n]);
            for d in &dirs {
                for k in 1..=kmax {
                    let m = scale(d, k as f64 * grid_step);
                    let v = p.value_unchecked(&m);
                    if v > best.0 {
                        best = (v, m);
                    }
                }
            }
            Ok(GridMaximum {
                m_star: best.1,
                value: best.0,
                points: total,
                resolution: f64::NAN,
            })
        }
        Flavor::General { .. } => Err(Error::Unsupported("grid search for the general flavor".into())),
    }
}

/// Continuity modulus of the Ising TAP energy at distance `r`, from probed constants.
///
/// `beta N L_H r + beta L_f r + beta^2 N xi''(1) r + 2 N r log(4e/r)`, where
/// `L_H` is the gradient-norm bound and `L_f` the field's Lipschitz bound.
pub fn ising_continuity_modulus(model: &MixedModel, grad_bound: f64, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let n = model.n as f64;
    let b = model.beta;
    let xi2 = model.series.xi_eval(2, 1.0).unwrap_or(0.0);
    b * n * grad_bound * r + b * model.field.lipschitz_bound() * r + b * b * n * xi2 * r
        + 2.0 * n * r * (4.0 * std::f64::consts::E / r).ln()
}

/// Gradient bound to feed [`ising_continuity_modulus`]: the larger probed statistic.
pub fn probed_gradient_bound(probe: &LipschitzProbe) -> f64 {
    probe.max_grad_norm.max(probe.max_ratio)
}

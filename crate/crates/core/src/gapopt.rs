//! Band-gap objective and Bayesian optimization of the design parameters.

use std::f64::consts::LN_10;
use std::time::Instant;

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adapt::{adapt_loop, AdaptConfig};
use crate::bzmesh::{DomainSpec, TetMesh};
use crate::geometry::{model_cell, validate_admissible, DesignParams, Model, MIN_FEATURE};
use crate::hpinterp::{assign_degrees, build_interpolant, Interpolant, DEFAULT_DEGREE_CAP};
use crate::oracle::{BandOracle, PlaneWaveOracle, PweConfig};
use crate::par::{self, Exec};
use crate::qmc::halton_point;
use crate::{Error, Result, WaveVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapSource {
    Interpolant,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapResult {
    pub band: usize,
    /// Largest value of band ℓ seen.
    pub max_lower: f64,
    /// Smallest value of band ℓ+1 seen.
    pub min_upper: f64,
    pub phi: f64,
    pub n_points: usize,
    pub source: GapSource,
}

impl GapResult {
    pub fn has_gap(&self) -> bool {
        self.phi > 0.0
    }
}

/// Gap width over the mid-gap value.
pub fn normalized_gap(max_lower: f64, min_upper: f64) -> f64 {
    (min_upper - max_lower) / (0.5 * (min_upper + max_lower))
}

fn gap_from_pairs(band: usize, pairs: impl Iterator<Item = (f64, f64)>, source: GapSource) -> Result<GapResult> {
    let mut max_lower = f64::NEG_INFINITY;
    let mut min_upper = f64::INFINITY;
    let mut n = 0;
    for (lo, hi) in pairs {
        max_lower = max_lower.max(lo);
        min_upper = min_upper.min(hi);
        n += 1;
    }
    if n == 0 {
        return Err(Error::Config("gap objective needs at least one point".into()));
    }
    Ok(GapResult {
        band,
        max_lower,
        min_upper,
        phi: normalized_gap(max_lower, min_upper),
        n_points: n,
        source,
    })
}

/// Fixed quasi-random points in the mesh's domain. Halton coordinate 1 picks
/// a tet by volume, the other three a point in it via sorted spacings.
pub fn evaluation_points(mesh: &TetMesh, count: usize) -> Vec<WaveVector> {
    let live = mesh.live_ids();
    let mut cumulative = Vec::with_capacity(live.len());
    let mut total = 0.0;
    for &t in &live {
        total += mesh.volume(t);
        cumulative.push(total);
    }
    (0..count)
        .map(|i| {
            let h = halton_point(i, 4);
            let u = h[0] * total;
            let slot = cumulative.partition_point(|&c| c <= u).min(live.len() - 1);
            let mut s = [h[1], h[2], h[3]];
            s.sort_by(f64::total_cmp);
            let l = [s[0], s[1] - s[0], s[2] - s[1], 1.0 - s[2]];
            let p = mesh.points(live[slot]);
            let mut k = [0.0; 3];
            for (w, x) in l.iter().zip(&p) {
                for d in 0..3 {
                    k[d] += w * x[d];
                }
            }
            k
        })
        .collect()
}

/// φ between bands ℓ and ℓ+1 of the interpolant, over its sampling points
/// plus `extra` points evaluated through it.
pub fn objective_phi(interp: &Interpolant, band: usize, extra: &[WaveVector], exec: Exec) -> Result<GapResult> {
    let lo = slot_of(interp, band)?;
    let hi = slot_of(interp, band + 1)?;
    let sampled = interp.point_values(lo).zip(interp.point_values(hi));
    let evaluated = interp.evaluate_many(extra, exec)?;
    gap_from_pairs(
        band,
        sampled.chain(evaluated.iter().map(|v| (v[lo], v[hi]))),
        GapSource::Interpolant,
    )
}

fn slot_of(interp: &Interpolant, band: usize) -> Result<usize> {
    interp
        .bands()
        .iter()
        .position(|&b| b == band)
        .ok_or_else(|| Error::Config(format!("band {band} was not reconstructed")))
}

/// φ between bands ℓ and ℓ+1 from direct oracle calls at `points`.
pub fn objective_phi_sweep(oracle: &dyn BandOracle, points: &[WaveVector], band: usize, exec: Exec) -> Result<GapResult> {
    check_bands(oracle, band + 1)?;
    let rows = par::try_map(exec, points, |&k| oracle.values(k, band + 1))?;
    gap_from_pairs(band, rows.iter().map(|v| (v[band - 1], v[band])), GapSource::Oracle)
}

fn check_bands(oracle: &dyn BandOracle, needed: usize) -> Result<()> {
    if needed > oracle.max_bands() {
        return Err(Error::Config(format!(
            "band {needed} requested but the oracle provides {}",
            oracle.max_bands()
        )));
    }
    Ok(())
}

/// Largest φ over the pairs (n, n+1), n < L, given rows of the first L band
/// values. Ties go to the smallest n.
pub fn best_gap(rows: &[Vec<f64>], n_bands: usize) -> Result<(usize, f64)> {
    if n_bands < 2 {
        return Err(Error::Config(format!("need at least 2 bands, got {n_bands}")));
    }
    if rows.is_empty() || rows.iter().any(|r| r.len() < n_bands) {
        return Err(Error::Config("band rows are empty or too short".into()));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for n in 1..n_bands {
        let max_lower = rows.iter().map(|r| r[n - 1]).fold(f64::NEG_INFINITY, f64::max);
        let min_upper = rows.iter().map(|r| r[n]).fold(f64::INFINITY, f64::min);
        let phi = normalized_gap(max_lower, min_upper);
        if phi > best.1 {
            best = (n, phi);
        }
    }
    Ok(best)
}

/// [`best_gap`] over direct oracle values at `points`.
pub fn objective_multi(oracle: &dyn BandOracle, points: &[WaveVector], n_bands: usize, exec: Exec) -> Result<(usize, f64)> {
    check_bands(oracle, n_bands)?;
    let rows = par::try_map(exec, points, |&k| oracle.values(k, n_bands))?;
    best_gap(&rows, n_bands)
}

/// Settings of the φ(θ) pipeline: oracle, adaptive mesh, interpolation,
/// evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub lattice_constant: f64,
    pub modes_per_axis: usize,
    pub adapt: AdaptConfig,
    pub mu: f64,
    pub degree_cap: usize,
    pub eval_points: usize,
    /// `None` picks the model's symmetry wedge.
    pub domain: Option<DomainSpec>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            lattice_constant: 1.0,
            modes_per_axis: 7,
            adapt: AdaptConfig::default(),
            mu: 1.0,
            degree_cap: DEFAULT_DEGREE_CAP,
            eval_points: 2000,
            domain: None,
        }
    }
}

/// Symmetry wedge used for a model: the woodpile has only the xy mirror
/// planes, the frame-and-sphere cell full cubic symmetry at equal θ₁..θ₃.
pub fn default_domain(model: Model) -> DomainSpec {
    match model {
        Model::Woodpile => DomainSpec::IbzScXySym,
        Model::FrameSphere => DomainSpec::IbzScFullSym,
    }
}

impl PipelineConfig {
    pub fn domain_for(&self, model: Model) -> DomainSpec {
        self.domain.clone().unwrap_or_else(|| default_domain(model))
    }

    pub fn oracle(&self, params: &DesignParams) -> Result<PlaneWaveOracle> {
        let cell = model_cell(params, self.lattice_constant)?;
        PlaneWaveOracle::new(
            cell,
            PweConfig {
                modes_per_axis: self.modes_per_axis,
                n_bands: self.adapt.bands_needed(),
                fd_step: None,
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignEvaluation {
    pub gap: GapResult,
    pub n_oracle_calls: usize,
    pub n_tets: usize,
}

/// φ(θ; ℓ) through adaptive refinement, hp interpolation and the objective.
pub fn evaluate_design(params: &DesignParams, cfg: &PipelineConfig, exec: Exec) -> Result<DesignEvaluation> {
    let oracle = cfg.oracle(params)?;
    let mesh = TetMesh::build_initial(&cfg.domain_for(params.model), cfg.lattice_constant)?;
    let extra = evaluation_points(&mesh, cfg.eval_points);
    let out = adapt_loop(mesh, &oracle, &cfg.adapt, exec)?;
    let degrees = assign_degrees(&out.mesh, cfg.mu, cfg.degree_cap)?;
    let band = cfg.adapt.band;
    let interp = build_interpolant(&out.mesh, &degrees, &oracle, Some(&out.cache), &[band, band + 1], exec)?;
    let gap = objective_phi(&interp, band, &extra, exec)?;
    Ok(DesignEvaluation {
        gap,
        n_oracle_calls: out.cache.oracle_calls() + interp.stats().oracle_calls,
        n_tets: out.mesh.n_live(),
    })
}

/// Natural-log bounds: length scales in [0.01, 10], signal scales in [0.01, 100].
const LOG_LENGTH_BOUNDS: (f64, f64) = (-2.0 * LN_10, LN_10);
const LOG_SIGNAL_BOUNDS: (f64, f64) = (-2.0 * LN_10, 2.0 * LN_10);
const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-4;
const GP_RESTARTS: usize = 5;

fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], step: f64, max_iters: u64) -> (Vec<f64>, f64) {
    struct Cost<F>(F);
    impl<F: Fn(&[f64]) -> f64> CostFunction for Cost<F> {
        type Param = Vec<f64>;
        type Output = f64;
        fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
            Ok((self.0)(p))
        }
    }
    let mut simplex = vec![x0.to_vec()];
    for d in 0..x0.len() {
        let mut v = x0.to_vec();
        v[d] += step;
        simplex.push(v);
    }
    let start = (f(x0), x0.to_vec());
    let solver = match NelderMead::new(simplex).with_sd_tolerance(1e-10) {
        Ok(s) => s,
        Err(_) => return (start.1, start.0),
    };
    match Executor::new(Cost(&f), solver)
        .configure(|s| s.max_iters(max_iters))
        .run()
    {
        Ok(res) => {
            let state = res.state();
            match (&state.best_param, state.best_cost) {
                (Some(p), c) if c < start.0 => (p.clone(), c),
                _ => (start.1, start.0),
            }
        }
        Err(_) => (start.1, start.0),
    }
}

/// Gaussian-process surrogate: constant mean, squared-exponential kernel
/// with one length-scale per input dimension.
#[derive(Debug)]
pub struct GaussianProcess {
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_scale: f64,
    log_lengths: Vec<f64>,
    log_signal: f64,
    jitter: f64,
    alpha: Vec<f64>,
    factor: faer::linalg::solvers::Llt<f64>,
}

fn kernel(a: &[f64], b: &[f64], log_lengths: &[f64], log_signal: f64) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(log_lengths)
        .map(|((x, y), l)| ((x - y) / l.exp()).powi(2))
        .sum();
    log_signal.exp() * (-0.5 * r2).exp()
}

fn gram(x: &[Vec<f64>], log_lengths: &[f64], log_signal: f64, jitter: f64) -> Mat<f64> {
    let n = x.len();
    Mat::from_fn(n, n, |i, j| {
        kernel(&x[i], &x[j], log_lengths, log_signal) + if i == j { jitter } else { 0.0 }
    })
}

/// Negative log marginal likelihood (without the constant), or `None` if the
/// kernel matrix is not positive definite.
fn neg_log_likelihood(x: &[Vec<f64>], y: &[f64], log_lengths: &[f64], log_signal: f64, jitter: f64) -> Option<f64> {
    let k = gram(x, log_lengths, log_signal, jitter);
    let llt = k.llt(Side::Lower).ok()?;
    let rhs = Mat::from_fn(y.len(), 1, |i, _| y[i]);
    let alpha = llt.solve(&rhs);
    let fit: f64 = (0..y.len()).map(|i| y[i] * alpha[(i, 0)]).sum();
    let logdet: f64 = (0..y.len()).map(|i| llt.L()[(i, i)].ln()).sum();
    Some(0.5 * fit + logdet)
}

/// Averages φ over repeated inputs.
fn deduplicate(x: &[Vec<f64>], y: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for (xi, &yi) in x.iter().zip(y) {
        match xs.iter().position(|v| v == xi) {
            Some(p) => {
                sums[p].0 += yi;
                sums[p].1 += 1;
            }
            None => {
                xs.push(xi.clone());
                sums.push((yi, 1));
            }
        }
    }
    (xs, sums.into_iter().map(|(s, c)| s / c as f64).collect())
}

/// Fits the surrogate by maximizing the marginal likelihood from a default
/// start plus random restarts.
pub fn gp_fit(x: &[Vec<f64>], y: &[f64], seed: u64) -> Result<GaussianProcess> {
    if x.len() != y.len() {
        return Err(Error::Config("GP inputs and outputs differ in length".into()));
    }
    let (x, y) = deduplicate(x, y);
    if x.len() < 2 {
        return Err(Error::Config(format!(
            "GP fit needs at least 2 distinct inputs, got {}",
            x.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("GP observations must be finite".into()));
    }
    let dim = x[0].len();
    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n).sqrt();
    let y_scale = if sd > 0.0 { sd } else { 1.0 };
    let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();

    let clamp = |p: &[f64]| -> Vec<f64> {
        p.iter()
            .enumerate()
            .map(|(i, &v)| {
                let (lo, hi) = if i < dim { LOG_LENGTH_BOUNDS } else { LOG_SIGNAL_BOUNDS };
                v.clamp(lo, hi)
            })
            .collect()
    };
    let cost = |p: &[f64]| -> f64 {
        let p = clamp(p);
        neg_log_likelihood(&x, &ys, &p[..dim], p[dim], JITTER_START).unwrap_or(1e10)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![{
        let mut p = vec![0.3f64.ln(); dim];
        p.push(0.0);
        p
    }];
    for _ in 0..GP_RESTARTS {
        let mut p: Vec<f64> = (0..dim)
            .map(|_| rng.gen_range(LOG_LENGTH_BOUNDS.0..LOG_LENGTH_BOUNDS.1))
            .collect();
        p.push(rng.gen_range(LOG_SIGNAL_BOUNDS.0..LOG_SIGNAL_BOUNDS.1));
        starts.push(p);
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in &starts {
        let (p, c) = nelder_mead(cost, s, 0.5, 300);
        if best.as_ref().is_none_or(|b| c < b.1) {
            best = Some((p, c));
        }
    }
    let p = clamp(&best.expect("at least one start").0);
    let (log_lengths, log_signal) = (p[..dim].to_vec(), p[dim]);

    let mut jitter = JITTER_START;
    loop {
        if let Ok(factor) = gram(&x, &log_lengths, log_signal, jitter).llt(Side::Lower) {
            let rhs = Mat::from_fn(ys.len(), 1, |i, _| ys[i]);
            let a = factor.solve(&rhs);
            let alpha = (0..ys.len()).map(|i| a[(i, 0)]).collect();
            return Ok(GaussianProcess {
                x,
                y_mean,
                y_scale,
                log_lengths,
                log_signal,
                jitter,
                alpha,
                factor,
            });
        }
        jitter *= 10.0;
        if jitter > JITTER_MAX {
            return Err(Error::Numerical(format!(
                "GP kernel matrix not positive definite with jitter {JITTER_MAX:e}"
            )));
        }
    }
}

impl GaussianProcess {
    /// Posterior mean and variance at `x`, in φ units.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let ks: Vec<f64> = self
            .x
            .iter()
            .map(|xi| kernel(xi, x, &self.log_lengths, self.log_signal))
            .collect();
        let mean: f64 = ks.iter().zip(&self.alpha).map(|(k, a)| k * a).sum();
        let rhs = Mat::from_fn(ks.len(), 1, |i, _| ks[i]);
        let v = self.factor.solve(&rhs);
        let reduction: f64 = (0..ks.len()).map(|i| ks[i] * v[(i, 0)]).sum();
        let var = (self.log_signal.exp() + self.jitter - reduction).max(0.0);
        (self.y_mean + self.y_scale * mean, self.y_scale * self.y_scale * var)
    }

    pub fn length_scales(&self) -> Vec<f64> {
        self.log_lengths.iter().map(|l| l.exp()).collect()
    }

    pub fn n_observations(&self) -> usize {
        self.x.len()
    }
}

/// Exploration offset in the expected improvement.
pub const EI_XI: f64 = 0.01;

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected improvement over `best` for maximization.
pub fn acquisition_ei(gp: &GaussianProcess, x: &[f64], best: f64, xi: f64) -> f64 {
    let (mean, var) = gp.predict(x);
    let sigma = var.sqrt();
    let gain = mean - best - xi;
    if sigma < 1e-12 {
        return gain.max(0.0);
    }
    let z = gain / sigma;
    (gain * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoConfig {
    /// Total objective evaluations n_max², the starting point included.
    pub n_max: usize,
    pub seed: u64,
    /// Stop once a proposal is no better than the starting point.
    pub paper_stopping: bool,
    /// Quasi-random points evaluated after the start; `None` means one per
    /// free dimension.
    pub n_initial: Option<usize>,
    pub xi: f64,
    pub candidates: usize,
    pub polish: usize,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            n_max: 20,
            seed: 0,
            paper_stopping: false,
            n_initial: None,
            xi: EI_XI,
            candidates: 4096,
            polish: 8,
        }
    }
}

/// Search box, starting point and feasibility test, all in the free
/// coordinates.
pub struct BoProblem<'a> {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub start: Vec<f64>,
    pub feasible: &'a dyn Fn(&[f64]) -> bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub phi: f64,
    pub n_oracle_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub theta: Vec<f64>,
    pub phi: f64,
    pub n_oracle_calls: usize,
    pub wall_seconds: f64,
}

pub const TRACE_HEADER: &str = "iter,theta_1,theta_2,theta_3,theta_4,phi,n_oracle_calls,wall_seconds";

impl TraceRow {
    pub fn csv_row(&self) -> String {
        let thetas: Vec<String> = (0..4)
            .map(|i| self.theta.get(i).map(|v| format!("{v:e}")).unwrap_or_default())
            .collect();
        format!(
            "{},{},{:e},{},{:.6}",
            self.iter,
            thetas.join(","),
            self.phi,
            self.n_oracle_calls,
            self.wall_seconds
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoOutcome {
    pub trace: Vec<TraceRow>,
    pub best_iter: usize,
    pub best_theta: Vec<f64>,
    pub best_phi: f64,
    pub stopped_by_guard: bool,
}

impl BoOutcome {
    /// Best φ seen up to and including each trace row.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.trace
            .iter()
            .scan(f64::NEG_INFINITY, |b, r| {
                *b = b.max(r.phi);
                Some(*b)
            })
            .collect()
    }
}

fn shifted_halton(i: usize, shift: &[f64]) -> Vec<f64> {
    halton_point(i, shift.len())
        .iter()
        .zip(shift)
        .map(|(h, s)| (h + s).fract())
        .collect()
}

/// Maximizes EI over the unit cube: quasi-random candidates, then
/// Nelder–Mead from the best few. Infeasible points are rejected.
pub fn maximize_ei(
    gp: &GaussianProcess,
    feasible: &dyn Fn(&[f64]) -> bool,
    best: f64,
    cfg: &BoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let dim = gp.x[0].len();
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    let mut scored: Vec<(f64, Vec<f64>)> = (0..cfg.candidates)
        .map(|i| shifted_halton(i, &shift))
        .filter(|u| feasible(u))
        .map(|u| (acquisition_ei(gp, &u, best, cfg.xi), u))
        .collect();
    if scored.is_empty() {
        return Err(Error::Admissibility(format!(
            "all {} acquisition candidates are infeasible; widen the parameter bounds",
            cfg.candidates
        )));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let inside = |u: &[f64]| u.iter().all(|v| (0.0..=1.0).contains(v)) && feasible(u);
    let mut winner = scored[0].clone();
    for (_, u) in scored.iter().take(cfg.polish) {
        let cost = |p: &[f64]| if inside(p) { -acquisition_ei(gp, p, best, cfg.xi) } else { 1e100 };
        let (p, c) = nelder_mead(cost, u, 0.02, 200);
        if -c > winner.0 {
            winner = (-c, p);
        }
    }
    Ok(winner.1)
}

/// Bayesian optimization loop. `objective` receives points in the free
/// coordinates.
pub fn bo_loop(
    problem: &BoProblem,
    cfg: &BoConfig,
    objective: &mut dyn FnMut(&[f64]) -> Result<Observation>,
) -> Result<BoOutcome> {
    let dim = problem.start.len();
    if dim == 0 || problem.lower.len() != dim || problem.upper.len() != dim {
        return Err(Error::Config("BO bounds and start must have the same nonzero length".into()));
    }
    if problem.lower.iter().zip(&problem.upper).any(|(l, u)| !(l < u)) {
        return Err(Error::Config("BO lower bounds must lie below the upper bounds".into()));
    }
    if cfg.n_max == 0 {
        return Err(Error::Config("n_max must be at least 1".into()));
    }
    if !(problem.feasible)(&problem.start) {
        return Err(Error::Admissibility(format!(
            "starting point {:?} is not admissible",
            problem.start
        )));
    }
    let to_unit = |x: &[f64]| -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(d, v)| (v - problem.lower[d]) / (problem.upper[d] - problem.lower[d]))
            .collect()
    };
    let from_unit = |u: &[f64]| -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(d, v)| problem.lower[d] + v * (problem.upper[d] - problem.lower[d]))
            .collect()
    };
    let feasible_unit = |u: &[f64]| (problem.feasible)(&from_unit(u));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace: Vec<TraceRow> = Vec::new();
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut evaluate = |theta: Vec<f64>, trace: &mut Vec<TraceRow>| -> Result<f64> {
        let start = Instant::now();
        let obs = objective(&theta).map_err(|e| e.in_loop(trace.len()))?;
        trace.push(TraceRow {
            iter: trace.len() + 1,
            theta,
            phi: obs.phi,
            n_oracle_calls: obs.n_oracle_calls,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        Ok(obs.phi)
    };

    let phi_start = evaluate(problem.start.clone(), &mut trace)?;
    xs.push(to_unit(&problem.start));
    ys.push(phi_start);

    let n_initial = cfg.n_initial.unwrap_or(dim);
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    let mut index = 0;
    let mut added = 0;
    while added < n_initial && trace.len() < cfg.n_max {
        if index >= cfg.candidates {
            return Err(Error::Admissibility(
                "no admissible initial design points found; widen the parameter bounds".into(),
            ));
        }
        let u = shifted_halton(index, &shift);
        index += 1;
        if !feasible_unit(&u) {
            continue;
        }
        ys.push(evaluate(from_unit(&u), &mut trace)?);
        xs.push(u);
        added += 1;
    }

    let mut stopped_by_guard = false;
    while trace.len() < cfg.n_max {
        let best = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let gp = gp_fit(&xs, &ys, rng.gen()).map_err(|e| e.in_loop(trace.len()))?;
        let u = maximize_ei(&gp, &feasible_unit, best, cfg, &mut rng)?;
        let phi = evaluate(from_unit(&u), &mut trace)?;
        xs.push(u);
        ys.push(phi);
        if cfg.paper_stopping && phi <= phi_start {
            stopped_by_guard = true;
            break;
        }
    }

    let best_iter = trace
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if r.phi > trace[b].phi { i } else { b });
    Ok(BoOutcome {
        best_iter: best_iter + 1,
        best_theta: trace[best_iter].theta.clone(),
        best_phi: trace[best_iter].phi,
        trace,
        stopped_by_guard,
    })
}

/// Which of θ₁..θ₄ are optimized; the rest stay at the starting value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub model: Model,
    pub start: [f64; 4],
    /// Zero-based indices of the free parameters.
    pub free: Vec<usize>,
}

impl DesignSpace {
    pub fn all(model: Model) -> Self {
        DesignSpace {
            model,
            start: model.default_theta(),
            free: vec![0, 1, 2, 3],
        }
    }

    pub fn params(&self, x: &[f64]) -> DesignParams {
        let mut theta = self.start;
        for (&i, &v) in self.free.iter().zip(x) {
            theta[i] = v;
        }
        DesignParams::new(self.model, theta)
    }

    pub fn is_feasible(&self, x: &[f64]) -> bool {
        let p = self.params(x);
        validate_admissible(&p) && p.theta.iter().all(|&v| v >= MIN_FEATURE)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = [false; 4];
        for &i in &self.free {
            if i >= 4 || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Config(format!("invalid free parameter list {:?}", self.free)));
            }
        }
        if self.free.is_empty() {
            return Err(Error::Config("no free parameters to optimize".into()));
        }
        Ok(())
    }
}

/// Optimizes φ(θ; ℓ) of a model over the free parameters. Trace rows carry
/// the full θ.
pub fn optimize_design(space: &DesignSpace, pipeline: &PipelineConfig, cfg: &BoConfig, exec: Exec) -> Result<BoOutcome> {
    space.validate()?;
    let bounds = space.model.bounds();
    let feasible = |x: &[f64]| space.is_feasible(x);
    let problem = BoProblem {
        lower: space.free.iter().map(|&i| bounds[i].0).collect(),
        upper: space.free.iter().map(|&i| bounds[i].1).collect(),
        start: space.free.iter().map(|&i| space.start[i]).collect(),
        feasible: &feasible,
    };
    let mut objective = |x: &[f64]| -> Result<Observation> {
        let e = evaluate_design(&space.params(x), pipeline, exec)?;
        Ok(Observation {
            phi: e.gap.phi,
            n_oracle_calls: e.n_oracle_calls,
        })
    };
    let mut out = bo_loop(&problem, cfg, &mut objective)?;
    for row in &mut out.trace {
        row.theta = space.params(&row.theta).theta.to_vec();
    }
    out.best_theta = space.params(&out.best_theta).theta.to_vec();
    Ok(out)
}

/// Smooth two-peak test function on [0,1]² with its global maximum near
/// (0.3, 0.7).
pub fn synthetic_objective(x: &[f64]) -> f64 {
    let bump = |cx: f64, cy: f64, w: f64| (-((x[0] - cx).powi(2) + (x[1] - cy).powi(2)) / w).exp();
    bump(0.3, 0.7, 0.04) + 0.7 * bump(0.8, 0.25, 0.015) + 0.1 * (3.0 * x[0]).sin() * (2.0 * x[1]).cos()
}

/// Runs BO on [`synthetic_objective`] over the unit square.
pub fn optimize_synthetic(start: [f64; 2], cfg: &BoConfig) -> Result<BoOutcome> {
    let feasible = |_: &[f64]| true;
    let problem = BoProblem {
        lower: vec![0.0; 2],
        upper: vec![1.0; 2],
        start: start.to_vec(),
        feasible: &feasible,
    };
    let mut objective = |x: &[f64]| {
        Ok(Observation {
            phi: synthetic_objective(x),
            n_oracle_calls: 0,
        })
    };
    bo_loop(&problem, cfg, &mut objective)
}

/// Maximum of [`synthetic_objective`] on an n×n grid.
pub fn synthetic_grid_max(n: usize) -> f64 {
    let step = 1.0 / (n - 1) as f64;
    (0..n * n)
        .map(|i| synthetic_objective(&[(i / n) as f64 * step, (i % n) as f64 * step]))
        .fold(f64::NEG_INFINITY, f64::max)
}

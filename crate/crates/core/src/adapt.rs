//! The adaptive sampling loop: sample bands at mesh vertices, flag elements
//! whose band gaps are small relative to their size, bisect them.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bzmesh::TetMesh;
use crate::oracle::{BandOracle, BandSample};
use crate::par::{self, Exec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    /// Target band ℓ (1-based).
    pub band: usize,
    pub kappa: f64,
    /// Smallest element size still eligible for refinement; `None` means h₁/2⁵.
    pub tol2: Option<f64>,
    pub max_loops: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            band: 1,
            kappa: 2.0 * 2f64.sqrt(),
            tol2: None,
            max_loops: 8,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.band == 0 {
            return Err(Error::Config("band index is 1-based".into()));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::Config(format!("kappa must be positive, got {}", self.kappa)));
        }
        if let Some(t) = self.tol2 {
            if !(t > 0.0) {
                return Err(Error::Config(format!("tol2 must be positive, got {t}")));
            }
        }
        Ok(())
    }

    pub fn tol2_for(&self, mesh: &TetMesh) -> f64 {
        self.tol2.unwrap_or(mesh.h1() / 32.0)
    }

    /// Bands the oracle must provide: up to ℓ+2.
    pub fn bands_needed(&self) -> usize {
        self.band + 2
    }

    /// The window of q in the indicator, max(1, ℓ−1) ..= ℓ+1.
    pub fn window(&self) -> std::ops::RangeInclusive<usize> {
        window(self.band)
    }
}

fn window(band: usize) -> std::ops::RangeInclusive<usize> {
    band.saturating_sub(1).max(1)..=band + 1
}

/// Band samples at mesh vertices, filled on demand and never recomputed.
#[derive(Debug, Clone, Default)]
pub struct VertexCache {
    samples: Vec<Option<BandSample>>,
    n_bands: usize,
    oracle_calls: usize,
}

impl VertexCache {
    pub fn new(n_bands: usize) -> Self {
        VertexCache {
            samples: Vec::new(),
            n_bands,
            oracle_calls: 0,
        }
    }

    pub fn get(&self, v: usize) -> Option<&BandSample> {
        self.samples.get(v).and_then(|s| s.as_ref())
    }

    pub fn insert(&mut self, v: usize, sample: BandSample) {
        if self.samples.len() <= v {
            self.samples.resize(v + 1, None);
        }
        self.samples[v] = Some(sample);
    }

    pub fn len(&self) -> usize {
        self.samples.iter().filter(|s| s.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn oracle_calls(&self) -> usize {
        self.oracle_calls
    }

    /// Samples every mesh vertex not yet cached; returns the number of new
    /// oracle calls.
    pub fn extend(&mut self, mesh: &TetMesh, oracle: &dyn BandOracle, exec: Exec) -> Result<usize> {
        let missing: Vec<usize> = (0..mesh.n_vertices()).filter(|&v| self.get(v).is_none()).collect();
        let n_bands = self.n_bands;
        let samples = par::try_map(exec, &missing, |&v| oracle.sample(mesh.vertex(v), n_bands))?;
        for (v, s) in missing.iter().zip(samples) {
            self.insert(*v, s);
        }
        self.oracle_calls += missing.len();
        Ok(missing.len())
    }

    fn sample(&self, v: usize) -> Result<&BandSample> {
        self.get(v).ok_or_else(|| Error::Internal(format!("vertex {v} has no cached sample")))
    }
}

/// Smallest gap |λ_q − λ_{q+1}| over the indicator window and the four vertices.
pub fn indicator(cache: &VertexCache, mesh: &TetMesh, t: usize, band: usize) -> Result<f64> {
    let mut eta = f64::INFINITY;
    for v in mesh.tet(t).vertices {
        let s = cache.sample(v)?;
        for q in window(band) {
            eta = eta.min((s.value(q) - s.value(q + 1)).abs());
        }
    }
    Ok(eta)
}

/// Largest vertex gradient norm over the indicator window.
pub fn gradient_bound(cache: &VertexCache, mesh: &TetMesh, t: usize, band: usize) -> Result<f64> {
    let mut c = 0.0f64;
    for v in mesh.tet(t).vertices {
        let s = cache.sample(v)?;
        for q in window(band) {
            let g = s.gradient(q);
            c = c.max((g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt());
        }
    }
    Ok(c)
}

/// κ · h_T · Ĉ_max.
pub fn local_tolerance(cache: &VertexCache, mesh: &TetMesh, t: usize, band: usize, kappa: f64) -> Result<f64> {
    Ok(kappa * mesh.geometry(t).diameter * gradient_bound(cache, mesh, t, band)?)
}

/// Per-element outcome of one marking pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Marking {
    /// Elements with η ≤ tol₁ and h_T ≥ tol₂.
    pub marked: Vec<usize>,
    /// Elements with η ≤ tol₁, regardless of size.
    pub suspect: Vec<usize>,
}

pub fn mark(mesh: &TetMesh, cache: &VertexCache, cfg: &AdaptConfig, exec: Exec) -> Result<Marking> {
    let tol2 = cfg.tol2_for(mesh);
    let live = mesh.live_ids();
    let flags = par::try_map(exec, &live, |&t| -> Result<(bool, bool)> {
        let eta = indicator(cache, mesh, t, cfg.band)?;
        let tol1 = local_tolerance(cache, mesh, t, cfg.band, cfg.kappa)?;
        let suspect = eta <= tol1;
        Ok((suspect, suspect && mesh.geometry(t).diameter >= tol2))
    })?;
    let mut out = Marking::default();
    for (&t, (suspect, marked)) in live.iter().zip(flags) {
        if suspect {
            out.suspect.push(t);
        }
        if marked {
            out.marked.push(t);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopRecord {
    pub iteration: usize,
    pub n_tets: usize,
    pub n_vertices: usize,
    pub n_marked: usize,
    pub n_oracle_calls: usize,
    pub wall_seconds: f64,
}

pub const HISTORY_HEADER: &str = "loop,n_tets,n_vertices,n_marked,n_oracle_calls,wall_seconds";

impl LoopRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6}",
            self.iteration, self.n_tets, self.n_vertices, self.n_marked, self.n_oracle_calls, self.wall_seconds
        )
    }
}

#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub mesh: TetMesh,
    pub cache: VertexCache,
    pub history: Vec<LoopRecord>,
    /// Loops that refined the mesh.
    pub loops_run: usize,
}

pub fn adapt_loop(mesh: TetMesh, oracle: &dyn BandOracle, cfg: &AdaptConfig, exec: Exec) -> Result<AdaptOutcome> {
    adapt_loop_with(mesh, oracle, cfg, exec, |_, _, _| {})
}

/// Runs the loop, calling `observe(iteration, mesh, marking)` after each
/// marking pass and before the mesh is refined.
pub fn adapt_loop_with<F>(
    mut mesh: TetMesh,
    oracle: &dyn BandOracle,
    cfg: &AdaptConfig,
    exec: Exec,
    mut observe: F,
) -> Result<AdaptOutcome>
where
    F: FnMut(usize, &TetMesh, &Marking),
{
    cfg.validate()?;
    if cfg.bands_needed() > oracle.max_bands() {
        return Err(Error::Config(format!(
            "band {} needs {} bands but the oracle provides {}",
            cfg.band,
            cfg.bands_needed(),
            oracle.max_bands()
        )));
    }
    let mut cache = VertexCache::new(cfg.bands_needed());
    let mut history = Vec::new();
    let mut loops_run = 0;
    let mut iteration = 0;
    loop {
        let start = Instant::now();
        let calls = cache.extend(&mesh, oracle, exec).map_err(|e| e.in_loop(iteration))?;
        let marking = mark(&mesh, &cache, cfg, exec).map_err(|e| e.in_loop(iteration))?;
        observe(iteration, &mesh, &marking);
        let done = iteration >= cfg.max_loops || marking.marked.is_empty();
        history.push(LoopRecord {
            iteration,
            n_tets: mesh.n_live(),
            n_vertices: mesh.n_vertices(),
            n_marked: if done { 0 } else { marking.marked.len() },
            n_oracle_calls: calls,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        if done {
            // Later loops would mark nothing either; their layer increments
            // still count.
            mesh.advance_generation(cfg.max_loops - iteration);
            mesh.set_marks(&marking.suspect);
            break;
        }
        mesh.refine_marked(&marking.marked).map_err(|e| e.in_loop(iteration))?;
        loops_run += 1;
        iteration += 1;
    }
    Ok(AdaptOutcome {
        mesh,
        cache,
        history,
        loops_run,
    })
}

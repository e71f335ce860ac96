//! Evaluation harness: random points in the zone, relative frequency errors
//! of an interpolant, and adaptive-versus-uniform convergence studies.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adapt::{mark, AdaptConfig, VertexCache};
use crate::bzmesh::{DomainSpec, TetMesh};
use crate::hpinterp::{assign_degrees, build_interpolant, random_barycentric, DegreeMap, Interpolant};
use crate::oracle::BandOracle;
use crate::par::{self, Exec};
use crate::{Error, Result, WaveVector};

/// Frequencies below this are left out of relative errors.
pub const MIN_FREQUENCY: f64 = 1e-12;

/// Uniform random points in the mesh's domain: a tet is drawn with
/// probability proportional to its volume, then a uniform point inside it.
pub fn random_ibz_points(mesh: &TetMesh, count: usize, seed: u64) -> Vec<WaveVector> {
    let live = mesh.live_ids();
    let mut cumulative = Vec::with_capacity(live.len());
    let mut total = 0.0;
    for &t in &live {
        total += mesh.volume(t);
        cumulative.push(total);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let u = rng.gen::<f64>() * total;
            let slot = cumulative.partition_point(|&c| c <= u).min(live.len() - 1);
            let p = mesh.points(live[slot]);
            let l = random_barycentric(&mut rng);
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

/// Oracle values of `bands` at every point; row i holds point i.
pub fn reference_values(oracle: &dyn BandOracle, points: &[WaveVector], bands: &[usize], exec: Exec) -> Result<Vec<Vec<f64>>> {
    let max_band = bands.iter().copied().max().unwrap_or(0);
    par::try_map(exec, points, |&k| {
        let v = oracle.values(k, max_band)?;
        Ok(bands.iter().map(|&q| v[q - 1]).collect())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    /// Largest relative error over bands and points.
    pub error_inf: f64,
    /// Mean over bands of each band's largest relative error.
    pub error_avg: f64,
    /// (point, band) pairs skipped because ω was below `MIN_FREQUENCY`.
    pub excluded: usize,
}

/// Relative frequency errors |ω − ω̂|/ω of the interpolant against
/// `reference` (band values λ, as from [`reference_values`]).
pub fn relative_errors_from(
    interp: &Interpolant,
    points: &[WaveVector],
    reference: &[Vec<f64>],
    bands: &[usize],
    exec: Exec,
) -> Result<ErrorMetrics> {
    if bands.is_empty() {
        return Err(Error::Config("no bands to compare".into()));
    }
    let slots: Vec<usize> = bands
        .iter()
        .map(|b| {
            interp
                .bands()
                .iter()
                .position(|x| x == b)
                .ok_or_else(|| Error::Config(format!("band {b} was not reconstructed")))
        })
        .collect::<Result<_>>()?;
    let approx = interp.evaluate_many(points, exec)?;
    let mut per_band = vec![0.0f64; bands.len()];
    let mut excluded = 0;
    for (exact, got) in reference.iter().zip(&approx) {
        for (b, &slot) in slots.iter().enumerate() {
            let omega = exact[b].max(0.0).sqrt();
            if omega < MIN_FREQUENCY {
                excluded += 1;
                continue;
            }
            let omega_hat = got[slot].max(0.0).sqrt();
            per_band[b] = per_band[b].max((omega - omega_hat).abs() / omega);
        }
    }
    Ok(ErrorMetrics {
        error_inf: per_band.iter().copied().fold(0.0, f64::max),
        error_avg: per_band.iter().sum::<f64>() / per_band.len() as f64,
        excluded,
    })
}

pub fn relative_errors(
    interp: &Interpolant,
    oracle: &dyn BandOracle,
    points: &[WaveVector],
    bands: &[usize],
    exec: Exec,
) -> Result<ErrorMetrics> {
    let reference = reference_values(oracle, points, bands, exec)?;
    relative_errors_from(interp, points, &reference, bands, exec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Adaptive,
    Uniform,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Adaptive => "adaptive",
            Method::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub loop_index: usize,
    /// Distinct sampling points.
    pub n_points: usize,
    pub error_inf: f64,
    pub error_avg: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub method: Method,
    pub rows: Vec<ConvergenceRow>,
}

pub const RECORD_HEADER: &str = "method,loop,N,error_inf,error_avg,seconds";

impl ConvergenceRecord {
    pub fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{:e},{:e},{:.6}",
                    self.method.name(),
                    r.loop_index,
                    r.n_points,
                    r.error_inf,
                    r.error_avg,
                    r.seconds
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceConfig {
    pub domain: DomainSpec,
    pub lattice_constant: f64,
    pub adapt: AdaptConfig,
    pub mu: f64,
    pub degree_cap: usize,
    pub eval_points: usize,
    pub seed: u64,
    /// Uniform refinements applied to the initial mesh before loop 0.
    pub initial_refinements: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            domain: DomainSpec::IbzScFullSym,
            lattice_constant: 1.0,
            adapt: AdaptConfig::default(),
            mu: 1.0,
            degree_cap: crate::hpinterp::DEFAULT_DEGREE_CAP,
            eval_points: 2000,
            seed: 0,
            initial_refinements: 0,
        }
    }
}

impl ConvergenceConfig {
    /// Bands compared: ℓ and ℓ+1.
    pub fn bands(&self) -> [usize; 2] {
        [self.adapt.band, self.adapt.band + 1]
    }

    pub fn initial_mesh(&self) -> Result<TetMesh> {
        let mut mesh = TetMesh::build_initial(&self.domain, self.lattice_constant)?;
        for _ in 0..self.initial_refinements {
            mesh.refine_uniform()?;
        }
        Ok(mesh)
    }
}

/// Runs the adaptive pipeline and uniform refinement with degree 2 side by
/// side on the same evaluation points, recording errors after each loop.
pub fn convergence_study(oracle: &dyn BandOracle, cfg: &ConvergenceConfig, exec: Exec) -> Result<(ConvergenceRecord, ConvergenceRecord)> {
    cfg.adapt.validate()?;
    let bands = cfg.bands();
    if cfg.adapt.bands_needed() > oracle.max_bands() {
        return Err(Error::Config(format!(
            "band {} needs {} oracle bands, only {} available",
            cfg.adapt.band,
            cfg.adapt.bands_needed(),
            oracle.max_bands()
        )));
    }
    let initial = cfg.initial_mesh()?;
    let points = random_ibz_points(&initial, cfg.eval_points, cfg.seed);
    let reference = reference_values(oracle, &points, &bands, exec)?;

    let mut adaptive = ConvergenceRecord {
        method: Method::Adaptive,
        rows: Vec::new(),
    };
    let mut mesh = initial.clone();
    let mut cache = VertexCache::new(cfg.adapt.bands_needed());
    for i in 0..=cfg.adapt.max_loops {
        let start = Instant::now();
        let mut step = || -> Result<(Vec<usize>, ConvergenceRow)> {
            cache.extend(&mesh, oracle, exec)?;
            let marking = mark(&mesh, &cache, &cfg.adapt, exec)?;
            mesh.set_marks(&marking.suspect);
            let degrees = assign_degrees(&mesh, cfg.mu, cfg.degree_cap)?;
            let interp = build_interpolant(&mesh, &degrees, oracle, Some(&cache), &bands, exec)?;
            let m = relative_errors_from(&interp, &points, &reference, &bands, exec)?;
            let row = ConvergenceRow {
                loop_index: i,
                n_points: interp.n_points(),
                error_inf: m.error_inf,
                error_avg: m.error_avg,
                seconds: 0.0,
            };
            Ok((marking.marked, row))
        };
        let (marked, mut row) = step().map_err(|e| e.in_loop(i))?;
        row.seconds = start.elapsed().as_secs_f64();
        adaptive.rows.push(row);
        if i == cfg.adapt.max_loops {
            break;
        }
        mesh.refine_marked(&marked).map_err(|e| e.in_loop(i))?;
    }

    let mut uniform = ConvergenceRecord {
        method: Method::Uniform,
        rows: Vec::new(),
    };
    let mut mesh = initial;
    for i in 0..=cfg.adapt.max_loops {
        let start = Instant::now();
        let step = || -> Result<ConvergenceRow> {
            let degrees = DegreeMap::uniform(&mesh, 2);
            let interp = build_interpolant(&mesh, &degrees, oracle, None, &bands, exec)?;
            let m = relative_errors_from(&interp, &points, &reference, &bands, exec)?;
            Ok(ConvergenceRow {
                loop_index: i,
                n_points: interp.n_points(),
                error_inf: m.error_inf,
                error_avg: m.error_avg,
                seconds: 0.0,
            })
        };
        let mut row = step().map_err(|e| e.in_loop(i))?;
        row.seconds = start.elapsed().as_secs_f64();
        uniform.rows.push(row);
        if i < cfg.adapt.max_loops {
            mesh.refine_uniform().map_err(|e| e.in_loop(i))?;
        }
    }
    Ok((adaptive, uniform))
}

/// Least-squares slope of log error_avg against log N over the last ⌈half⌉
/// of the rows.
pub fn slope_fit(record: &ConvergenceRecord) -> Result<f64> {
    let rows = &record.rows;
    if rows.len() < 4 {
        return Err(Error::Config(format!(
            "slope fit needs at least 4 loops, got {}",
            rows.len()
        )));
    }
    let window = &rows[rows.len() - rows.len().div_ceil(2)..];
    let pts: Vec<(f64, f64)> = window
        .iter()
        .map(|r| ((r.n_points as f64).ln(), r.error_avg.ln()))
        .collect();
    if pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Numerical("slope fit needs positive errors".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::EmptyLattice;
    use approx::assert_relative_eq;

    fn record(ns: &[usize], rate: f64) -> ConvergenceRecord {
        ConvergenceRecord {
            method: Method::Adaptive,
            rows: ns
                .iter()
                .enumerate()
                .map(|(i, &n)| ConvergenceRow {
                    loop_index: i,
                    n_points: n,
                    error_inf: 3.0 * (n as f64).powf(rate),
                    error_avg: 2.0 * (n as f64).powf(rate),
                    seconds: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn slope_of_exact_power_laws() {
        let ns = [10, 20, 40, 80, 160, 320];
        assert!((slope_fit(&record(&ns, -1.0)).unwrap() + 1.0).abs() < 1e-12);
        assert!((slope_fit(&record(&ns, -1.0 / 3.0)).unwrap() + 1.0 / 3.0).abs() < 1e-12);
        assert!(slope_fit(&record(&ns[..3], -1.0)).is_err());
    }

    #[test]
    fn single_point_is_in_simplex() {
        let mesh = TetMesh::build_initial(&DomainSpec::IbzScFullSym, 1.0).unwrap();
        let k = random_ibz_points(&mesh, 1, 4)[0];
        let (_, b) = mesh.locate_point(k).unwrap();
        assert!(b.iter().all(|&x| x >= 0.0));
        assert_relative_eq!(b.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn per_tet_counts_follow_volume() {
        let mut mesh = TetMesh::build_initial(&DomainSpec::Box { lo: [0.0; 3], hi: [2.0, 1.0, 1.0] }, 1.0).unwrap();
        mesh.refine_marked(&[0, 3]).unwrap();
        let n = 100_000;
        let pts = random_ibz_points(&mesh, n, 17);
        assert_eq!(pts, random_ibz_points(&mesh, n, 17));
        let live = mesh.live_ids();
        let total = mesh.live_volume();
        let mut counts = vec![0usize; live.len()];
        for k in &pts {
            let (t, _) = mesh.locate_point(*k).unwrap();
            counts[live.iter().position(|&x| x == t).unwrap()] += 1;
        }
        for (slot, &t) in live.iter().enumerate() {
            let p = mesh.volume(t) / total;
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((counts[slot] as f64 - n as f64 * p).abs() <= 3.0 * sigma + 1.0);
        }
    }

    #[test]
    fn errors_vanish_at_sampling_points() {
        let mesh = TetMesh::build_initial(&DomainSpec::IbzScFullSym, 1.0).unwrap();
        let oracle = EmptyLattice::new(1.0, 2);
        let d = DegreeMap::uniform(&mesh, 3);
        let interp = build_interpolant(&mesh, &d, &oracle, None, &[1, 2], Exec::Sequential).unwrap();
        let pts: Vec<_> = interp.points().iter().copied().filter(|k| k.iter().any(|&x| x != 0.0)).collect();
        let m = relative_errors(&interp, &oracle, &pts, &[1, 2], Exec::Sequential).unwrap();
        assert!(m.error_inf <= 1e-10);
        let single = relative_errors(&interp, &oracle, &pts, &[2], Exec::Sequential).unwrap();
        assert_eq!(single.error_inf, single.error_avg);
        let random = random_ibz_points(&mesh, 200, 1);
        let m = relative_errors(&interp, &oracle, &random, &[1, 2], Exec::Sequential).unwrap();
        assert!(m.error_avg <= m.error_inf);
    }

    #[test]
    fn study_shapes() {
        let oracle = EmptyLattice::new(1.0, 2);
        let cfg = ConvergenceConfig {
            adapt: AdaptConfig {
                max_loops: 4,
                ..AdaptConfig::default()
            },
            eval_points: 200,
            ..ConvergenceConfig::default()
        };
        let (a, u) = convergence_study(&oracle, &cfg, Exec::Parallel).unwrap();
        assert_eq!(a.rows[0].n_points, u.rows[0].n_points);
        assert_eq!(u.rows.len(), 5);
        assert!(u.rows.windows(2).all(|w| w[1].n_points > w[0].n_points));
        let (a2, u2) = convergence_study(&oracle, &cfg, Exec::Sequential).unwrap();
        let strip = |r: &ConvergenceRecord| r.rows.iter().map(|x| (x.n_points, x.error_inf, x.error_avg)).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&a2));
        assert_eq!(strip(&u), strip(&u2));
    }
}

//! The four subcommands. Each writes its artifacts plus `manifest.json` into
//! the output directory.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use hpband::adapt::{adapt_loop, HISTORY_HEADER};
use hpband::bench::{convergence_study, slope_fit, RECORD_HEADER};
use hpband::bzmesh::TetMesh;
use hpband::gapopt::{evaluation_points, objective_phi, optimize_design, optimize_synthetic, BoOutcome, TRACE_HEADER};
use hpband::geometry::Model;
use hpband::hpinterp::{assign_degrees, build_interpolant};
use hpband::par::Exec;
use hpband::{Result, WaveVector};
use log::info;
use serde_json::json;

use crate::config::{Command, Objective, RunConfig};

pub const MANIFEST: &str = "manifest.json";

/// Named high-symmetry points in units of π/a.
fn symmetry_point(name: &str) -> [f64; 3] {
    match name {
        "Γ" => [0.0, 0.0, 0.0],
        "X" => [1.0, 0.0, 0.0],
        "M" => [1.0, 1.0, 0.0],
        "R" => [1.0, 1.0, 1.0],
        "T" => [0.0, 1.0, 1.0],
        "Z" => [0.0, 0.0, 1.0],
        other => unreachable!("unknown symmetry point {other}"),
    }
}

pub fn band_path(model: Model) -> &'static [&'static str] {
    match model {
        Model::Woodpile => &["Γ", "X", "M", "R", "T", "Z", "Γ", "M"],
        Model::FrameSphere => &["Γ", "X", "M", "R", "Γ"],
    }
}

/// Points along the path with their arc length and, at corners, label.
pub fn path_points(model: Model, a: f64, per_segment: usize) -> Vec<(f64, &'static str, WaveVector)> {
    if per_segment == 0 {
        return Vec::new();
    }
    let scale = std::f64::consts::PI / a;
    let names = band_path(model);
    let mut out = Vec::new();
    let mut s = 0.0;
    for w in names.windows(2) {
        let (p, q) = (symmetry_point(w[0]), symmetry_point(w[1]));
        let len = scale * ((0..3).map(|d| (q[d] - p[d]).powi(2)).sum::<f64>()).sqrt();
        for i in 0..per_segment {
            let t = i as f64 / per_segment as f64;
            let k = [0, 1, 2].map(|d| scale * (p[d] + t * (q[d] - p[d])));
            out.push((s + t * len, if i == 0 { w[0] } else { "" }, k));
        }
        s += len;
    }
    let last = names[names.len() - 1];
    out.push((s, last, symmetry_point(last).map(|x| scale * x)));
    out
}

fn create_out(cfg: &RunConfig) -> Result<std::path::PathBuf> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_lines(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "{header}")?;
    for r in rows {
        writeln!(f, "{r}")?;
    }
    f.flush()?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Resolved config plus provenance. Loading it with `--config` reruns the
/// same computation.
pub fn write_manifest(cfg: &RunConfig, dir: &Path, workers: usize) -> Result<()> {
    let mut m = cfg.clone();
    m.provenance = Some(json!({
        "hpband": env!("CARGO_PKG_VERSION"),
        "workers": workers,
        "parallel": cfg!(feature = "parallel"),
    }));
    write_json(&dir.join(MANIFEST), &m)
}

pub fn run(cfg: &RunConfig, workers: usize) -> Result<()> {
    let dir = create_out(cfg)?;
    write_manifest(cfg, &dir, workers)?;
    match cfg.command.expect("resolved config has a command") {
        Command::Bands => cmd_bands(cfg, &dir),
        Command::Adapt => cmd_adapt(cfg, &dir),
        Command::Converge => cmd_converge(cfg, &dir),
        Command::Optimize => cmd_optimize(cfg, &dir),
    }
}

pub fn cmd_bands(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let model = cfg.model()?;
    let oracle = cfg.oracle(cfg.n_bands)?;
    let pts = path_points(model, cfg.lattice_constant, cfg.points_per_segment);
    info!("evaluating {} bands at {} path points", cfg.n_bands, pts.len());
    let ks: Vec<WaveVector> = pts.iter().map(|p| p.2).collect();
    let values = hpband::par::try_map(Exec::Parallel, &ks, |&k| oracle.values(k, cfg.n_bands))?;
    let header = ["s", "label", "kx", "ky", "kz"]
        .iter()
        .map(|s| s.to_string())
        .chain((1..=cfg.n_bands).map(|i| format!("omega_{i}")))
        .collect::<Vec<_>>()
        .join(",");
    let rows = pts.iter().zip(&values).map(|((s, label, k), v)| {
        let omegas: Vec<String> = v.iter().map(|l| format!("{:e}", l.max(0.0).sqrt())).collect();
        format!("{s:e},{label},{:e},{:e},{:e},{}", k[0], k[1], k[2], omegas.join(","))
    });
    write_lines(&dir.join("bands.csv"), &header, rows)
}

pub fn cmd_adapt(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let start = Instant::now();
    let adapt = cfg.adapt_config();
    let oracle = cfg.oracle(adapt.bands_needed())?;
    let mesh = TetMesh::build_initial(&cfg.domain()?, cfg.lattice_constant)?;
    let extra = evaluation_points(&mesh, cfg.eval_points);
    let out = adapt_loop(mesh, oracle.as_ref(), &adapt, Exec::Parallel)?;
    info!("{} loops, {} tets", out.loops_run, out.mesh.n_live());
    write_lines(
        &dir.join("history.csv"),
        HISTORY_HEADER,
        out.history.iter().map(|h| h.csv_row()),
    )?;
    let degrees = assign_degrees(&out.mesh, cfg.mu, cfg.degree_cap)?;
    let band = adapt.band;
    let interp = build_interpolant(
        &out.mesh,
        &degrees,
        oracle.as_ref(),
        Some(&out.cache),
        &[band, band + 1],
        Exec::Parallel,
    )?;
    write_json(&dir.join("interpolant.json"), interp.export())?;
    let gap = objective_phi(&interp, band, &extra, Exec::Parallel)?;
    let summary = json!({
        "loops_run": out.loops_run,
        "n_tets": out.mesh.n_live(),
        "n_vertices": out.mesh.n_vertices(),
        "n_points": interp.n_points(),
        "oracle_calls": out.cache.oracle_calls() + interp.stats().oracle_calls,
        "gap": gap,
        "wall_seconds": start.elapsed().as_secs_f64(),
    });
    write_json(&dir.join("summary.json"), &summary)
}

pub fn cmd_converge(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let cc = cfg.convergence_config()?;
    let oracle = cfg.oracle(cc.adapt.bands_needed())?;
    let (adaptive, uniform) = convergence_study(oracle.as_ref(), &cc, Exec::Parallel)?;
    write_lines(
        &dir.join("convergence.csv"),
        RECORD_HEADER,
        adaptive.csv_rows().into_iter().chain(uniform.csv_rows()),
    )?;
    let slope = |r| match slope_fit(r) {
        Ok(s) => json!(s),
        Err(e) => json!(e.to_string()),
    };
    let summary = json!({
        "adaptive_slope": slope(&adaptive),
        "uniform_slope": slope(&uniform),
        "target_adaptive": -1.0,
        "target_uniform": -1.0 / 3.0,
        "adaptive_loops": adaptive.rows.len(),
        "uniform_loops": uniform.rows.len(),
    });
    info!("slopes: {summary}");
    write_json(&dir.join("summary.json"), &summary)
}

pub fn cmd_optimize(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let bo = cfg.bo_config();
    let out: BoOutcome = match cfg.objective {
        Objective::Synthetic => optimize_synthetic(cfg.synthetic_start, &bo)?,
        Objective::Model => optimize_design(&cfg.design_space()?, &cfg.pipeline_config(), &bo, Exec::Parallel)?,
    };
    write_lines(&dir.join("trace.csv"), TRACE_HEADER, out.trace.iter().map(|r| r.csv_row()))?;
    let best = json!({
        "best_iter": out.best_iter,
        "best_theta": out.best_theta,
        "best_phi": out.best_phi,
        "evaluations": out.trace.len(),
        "stopped_by_guard": out.stopped_by_guard,
    });
    info!("best: {best}");
    write_json(&dir.join("best.json"), &best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_shapes() {
        let p = path_points(Model::FrameSphere, 1.0, 4);
        assert_eq!(p.len(), 4 * 4 + 1);
        assert_eq!(p[0].2, [0.0; 3]);
        assert_eq!(p.last().unwrap().2, [0.0; 3]);
        let pi = std::f64::consts::PI;
        let total = pi * (1.0 + 1.0 + 1.0 + 3f64.sqrt());
        assert!((p.last().unwrap().0 - total).abs() < 1e-12);
        assert_eq!(path_points(Model::Woodpile, 1.0, 2).len(), 7 * 2 + 1);
        assert!(path_points(Model::Woodpile, 1.0, 0).is_empty());
    }
}

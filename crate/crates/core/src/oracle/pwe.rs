//! Plane-wave expansion of the Bloch-reduced Maxwell operator
//! `(∇+ik)×ε⁻¹(∇+ik)×` in a transverse basis.

use std::f64::consts::PI;

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{central_difference_gradients, check_band_count, clip_negative, BandOracle, BandSample, OracleInfo};
use crate::error::{Error, Result};
use crate::geometry::UnitCell;
use crate::WaveVector;

/// Wave vectors shorter than this fraction of `2π/a` are moved off Γ.
pub const GAMMA_OFFSET: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PweConfig {
    /// Plane waves per axis; odd, so the set is symmetric about G = 0.
    pub modes_per_axis: usize,
    pub n_bands: usize,
    /// Central-difference step; `None` means `1e-5·2π/a`.
    pub fd_step: Option<f64>,
}

impl Default for PweConfig {
    fn default() -> Self {
        PweConfig {
            modes_per_axis: 7,
            n_bands: 8,
            fd_step: None,
        }
    }
}

impl PweConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.modes_per_axis;
        if m < 3 || m.is_multiple_of(2) {
            return Err(Error::Config(format!("modes_per_axis must be odd and >= 3, got {m}")));
        }
        let limit = 2 * m.pow(3) - 2;
        if self.n_bands == 0 || self.n_bands > limit {
            return Err(Error::Config(format!(
                "n_bands must lie in 1..={limit} for {m} modes per axis, got {}",
                self.n_bands
            )));
        }
        if let Some(d) = self.fd_step {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("fd_step must be positive, got {d}")));
            }
        }
        Ok(())
    }
}

/// Dense plane-wave Maxwell solver for one unit cell.
#[derive(Debug, Clone)]
pub struct PlaneWaveOracle {
    cell: UnitCell,
    cfg: PweConfig,
    gvecs: Vec<[i32; 3]>,
    /// η(ΔG) for every difference of two basis vectors, see [`Self::eta_index`].
    eta: Vec<Complex64>,
}

impl PlaneWaveOracle {
    pub fn new(cell: UnitCell, cfg: PweConfig) -> Result<Self> {
        cfg.validate()?;
        let m = cfg.modes_per_axis as i32;
        let half = (m - 1) / 2;
        let mut gvecs = Vec::with_capacity((m * m * m) as usize);
        for i in -half..=half {
            for j in -half..=half {
                for l in -half..=half {
                    gvecs.push([i, j, l]);
                }
            }
        }
        let w = 2 * m - 1;
        let b = 2.0 * PI / cell.a;
        let mut eta = Vec::with_capacity((w * w * w) as usize);
        for i in -(m - 1)..=(m - 1) {
            for j in -(m - 1)..=(m - 1) {
                for l in -(m - 1)..=(m - 1) {
                    let g = [i as f64 * b, j as f64 * b, l as f64 * b];
                    eta.push(cell.inverse_eps_coefficient(g));
                }
            }
        }
        Ok(PlaneWaveOracle { cell, cfg, gvecs, eta })
    }

    pub fn cell(&self) -> &UnitCell {
        &self.cell
    }

    pub fn config(&self) -> &PweConfig {
        &self.cfg
    }

    pub fn n_plane_waves(&self) -> usize {
        self.gvecs.len()
    }

    pub fn fd_step(&self) -> f64 {
        self.cfg.fd_step.unwrap_or(1e-5 * 2.0 * PI / self.cell.a)
    }

    fn eta_index(&self, d: [i32; 3]) -> usize {
        let m = self.cfg.modes_per_axis as i32;
        let w = 2 * m - 1;
        (((d[0] + m - 1) * w + (d[1] + m - 1)) * w + (d[2] + m - 1)) as usize
    }

    /// Move `k` off Γ along (1,1,1)/√3 when it is too short to define a
    /// transverse frame for G = 0.
    pub fn regularize(&self, k: WaveVector) -> WaveVector {
        let kmin = GAMMA_OFFSET * 2.0 * PI / self.cell.a;
        let len = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
        if len < kmin {
            let s = kmin / 3f64.sqrt();
            [s, s, s]
        } else {
            k
        }
    }

    /// The `2N × 2N` Hermitian matrix at `k` (after Γ regularization).
    pub fn assemble(&self, k: WaveVector) -> Mat<Complex64> {
        let k = self.regularize(k);
        let b = 2.0 * PI / self.cell.a;
        let frames: Vec<(f64, [f64; 3], [f64; 3])> = self
            .gvecs
            .iter()
            .map(|g| {
                let kg = [0, 1, 2].map(|j| k[j] + b * g[j] as f64);
                transverse_frame(kg)
            })
            .collect();
        let n = self.gvecs.len();
        let mut theta = Mat::<Complex64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            let (ni, e1i, e2i) = frames[i];
            for j in 0..=i {
                let (nj, e1j, e2j) = frames[j];
                let d = [0, 1, 2].map(|c| self.gvecs[i][c] - self.gvecs[j][c]);
                let eta = self.eta[self.eta_index(d)] * (ni * nj);
                let blocks = [
                    [dot(e2i, e2j), -dot(e2i, e1j)],
                    [-dot(e1i, e2j), dot(e1i, e1j)],
                ];
                for (p, row) in blocks.iter().enumerate() {
                    for (q, &f) in row.iter().enumerate() {
                        let (r, c) = (2 * i + p, 2 * j + q);
                        let v = eta * f;
                        theta[(r, c)] = v;
                        theta[(c, r)] = v.conj();
                    }
                }
                // the diagonal of a Hermitian matrix is real
                if i == j {
                    for p in 0..2 {
                        let d = theta[(2 * i + p, 2 * i + p)];
                        theta[(2 * i + p, 2 * i + p)] = Complex64::new(d.re, 0.0);
                    }
                }
            }
        }
        theta
    }

    /// All eigenvalues of the assembled matrix, ascending.
    pub fn spectrum(&self, k: WaveVector) -> Result<Vec<f64>> {
        let theta = self.assemble(k);
        theta.self_adjoint_eigenvalues(Side::Lower).map_err(|e| {
            let diag_max = (0..theta.nrows()).map(|i| theta[(i, i)].re.abs()).fold(0.0, f64::max);
            let diag_min = (0..theta.nrows()).map(|i| theta[(i, i)].re.abs()).fold(f64::INFINITY, f64::min);
            Error::Numerical(format!(
                "Hermitian eigensolver failed at k={k:?} ({e:?}); diagonal range [{diag_min:.3e}, {diag_max:.3e}]"
            ))
        })
    }
}

/// `(|k+G|, ê₁, ê₂)` with `ê₁ ∝ ẑ × (k+G)` (x̂ fallback) and `ê₂ = û × ê₁`.
fn transverse_frame(kg: [f64; 3]) -> (f64, [f64; 3], [f64; 3]) {
    let len = dot(kg, kg).sqrt();
    let u = kg.map(|v| v / len);
    let mut e1 = cross([0.0, 0.0, 1.0], u);
    if dot(e1, e1).sqrt() < 1e-12 {
        e1 = cross([1.0, 0.0, 0.0], u);
    }
    let l1 = dot(e1, e1).sqrt();
    let e1 = e1.map(|v| v / l1);
    let e2 = cross(u, e1);
    let l2 = dot(e2, e2).sqrt();
    (len, e1, e2.map(|v| v / l2))
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

impl BandOracle for PlaneWaveOracle {
    fn info(&self) -> OracleInfo {
        OracleInfo {
            name: "pwe".into(),
            cutoff: self.cfg.modes_per_axis,
            max_bands: 2 * self.gvecs.len() - 2,
            lattice_constant: self.cell.a,
        }
    }

    fn values(&self, k: WaveVector, n_bands: usize) -> Result<Vec<f64>> {
        check_band_count(n_bands, self.max_bands())?;
        let mut all = self.spectrum(k)?;
        let scale = all.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        all.truncate(n_bands);
        clip_negative(&mut all, scale)?;
        Ok(all)
    }

    fn sample(&self, k: WaveVector, n_bands: usize) -> Result<BandSample> {
        let values = self.values(k, n_bands)?;
        let gradients = central_difference_gradients(|p| self.values(p, n_bands), k, n_bands, self.fd_step())?;
        Ok(BandSample { values, gradients })
    }
}

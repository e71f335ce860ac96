//! Two-material unit cells and the Fourier coefficients of their inverse
//! permittivity.
//!
//! Lengths are absolute (same unit as the lattice constant `a`); design
//! parameters θ are stored as fractions of `a`.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmc;

/// Smallest admissible half-extent or radius, relative to `a`.
pub const MIN_FEATURE: f64 = 1e-6;
/// Number of quasi-random points used by the overlap check.
pub const OVERLAP_SAMPLES: usize = 100_000;
/// Relative slack used when testing the admissible-set inequalities.
const ADMISSIBLE_SLACK: f64 = 1e-12;

/// A single inclusion, interpreted periodically in the unit cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Axis-aligned box `center ± half`.
    Box { center: [f64; 3], half: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
}

impl Shape {
    pub fn volume(&self) -> f64 {
        match *self {
            Shape::Box { half, .. } => 8.0 * half[0] * half[1] * half[2],
            Shape::Sphere { radius, .. } => 4.0 / 3.0 * PI * radius.powi(3),
        }
    }

    fn center(&self) -> [f64; 3] {
        match *self {
            Shape::Box { center, .. } | Shape::Sphere { center, .. } => center,
        }
    }

    /// Periodic membership with half-open box faces, so boxes that only touch
    /// do not share points.
    pub fn contains(&self, x: [f64; 3], a: f64) -> bool {
        let c = self.center();
        let d = [0, 1, 2].map(|j| min_image(x[j] - c[j], a));
        match *self {
            Shape::Box { half, .. } => (0..3).all(|j| {
                // a box spanning the full period contains every coordinate
                half[j] >= 0.5 * a || (d[j] >= -half[j] && d[j] < half[j])
            }),
            Shape::Sphere { radius, .. } => d[0] * d[0] + d[1] * d[1] + d[2] * d[2] < radius * radius,
        }
    }
}

fn min_image(d: f64, a: f64) -> f64 {
    d - a * (d / a + 0.5).floor()
}

/// A periodic cell `[0,a]^3` filled with background material and inclusions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitCell {
    pub a: f64,
    pub eps_background: f64,
    pub eps_inclusion: f64,
    pub shapes: Vec<Shape>,
}

impl UnitCell {
    /// Validates permittivities, feature sizes and pairwise disjointness.
    pub fn new(a: f64, eps_background: f64, eps_inclusion: f64, shapes: Vec<Shape>) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Config(format!("lattice constant must be positive, got {a}")));
        }
        if !(eps_background > 0.0 && eps_inclusion > 0.0) {
            return Err(Error::Config(format!(
                "permittivities must be positive (background {eps_background}, inclusion {eps_inclusion})"
            )));
        }
        for (i, s) in shapes.iter().enumerate() {
            let sizes: Vec<f64> = match *s {
                Shape::Box { half, .. } => half.to_vec(),
                Shape::Sphere { radius, .. } => vec![radius],
            };
            if sizes.iter().any(|&h| !(h >= MIN_FEATURE * a)) {
                return Err(Error::Admissibility(format!(
                    "shape {i} has a feature below the minimum size {:.1e}·a",
                    MIN_FEATURE
                )));
            }
            if sizes.iter().any(|&h| h > 0.5 * a * (1.0 + 1e-12)) {
                return Err(Error::Admissibility(format!("shape {i} is larger than the unit cell")));
            }
        }
        let cell = UnitCell {
            a,
            eps_background,
            eps_inclusion,
            shapes,
        };
        if let Some((i, j)) = cell.find_overlap() {
            return Err(Error::Admissibility(format!("shapes {i} and {j} overlap")));
        }
        Ok(cell)
    }

    /// Homogeneous cell without inclusions.
    pub fn homogeneous(a: f64, eps: f64) -> Self {
        UnitCell {
            a,
            eps_background: eps,
            eps_inclusion: eps,
            shapes: Vec::new(),
        }
    }

    /// First pair of shapes that both contain one of the quasi-random probe points.
    pub fn find_overlap(&self) -> Option<(usize, usize)> {
        if self.shapes.len() < 2 {
            return None;
        }
        for n in 0..OVERLAP_SAMPLES {
            let u = qmc::halton3(n);
            let x = u.map(|t| t * self.a);
            let mut first = None;
            for (i, s) in self.shapes.iter().enumerate() {
                if s.contains(x, self.a) {
                    match first {
                        None => first = Some(i),
                        Some(f) => return Some((f, i)),
                    }
                }
            }
        }
        None
    }

    /// Volume fraction occupied by inclusions.
    pub fn filling_fraction(&self) -> f64 {
        self.shapes.iter().map(Shape::volume).sum::<f64>() / self.a.powi(3)
    }

    /// Fourier coefficient of `1/ε(x)` at the reciprocal vector `g`
    /// (inverse rule, two-phase decomposition).
    pub fn inverse_eps_coefficient(&self, g: [f64; 3]) -> Complex64 {
        let contrast = 1.0 / self.eps_inclusion - 1.0 / self.eps_background;
        let mut eta: Complex64 = self.shapes.iter().map(|s| chi_hat(s, g, self.a)).sum::<Complex64>() * contrast;
        if g == [0.0; 3] {
            eta += 1.0 / self.eps_background;
        }
        eta
    }

    /// Permittivity at a point, for diagnostics and tests.
    pub fn eps_at(&self, x: [f64; 3]) -> f64 {
        if self.shapes.iter().any(|s| s.contains(x, self.a)) {
            self.eps_inclusion
        } else {
            self.eps_background
        }
    }
}

/// `(1/a³) ∫ χ_shape(x) e^{-i g·x} dx` over one period.
pub fn chi_hat(shape: &Shape, g: [f64; 3], a: f64) -> Complex64 {
    let cell_volume = a * a * a;
    let c = shape.center();
    let phase = Complex64::from_polar(1.0, -(g[0] * c[0] + g[1] * c[1] + g[2] * c[2]));
    match *shape {
        Shape::Box { half, .. } => {
            let mut f = 1.0;
            for j in 0..3 {
                f *= 2.0 * half[j] * sinc(g[j] * half[j]);
            }
            phase * (f / cell_volume)
        }
        Shape::Sphere { radius, .. } => {
            let u = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt() * radius;
            phase * (shape.volume() / cell_volume * sphere_form_factor(u))
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// `3(sin u − u cos u)/u³`, with its Taylor series near zero.
fn sphere_form_factor(u: f64) -> f64 {
    if u < 1e-2 {
        let u2 = u * u;
        1.0 - u2 / 10.0 + u2 * u2 / 280.0 - u2 * u2 * u2 / 15120.0
    } else {
        3.0 * (u.sin() - u * u.cos()) / (u * u * u)
    }
}

/// Split a periodic box into pieces that lie inside `[0,a]^3`.
pub fn periodic_box_pieces(center: [f64; 3], half: [f64; 3], a: f64) -> Vec<Shape> {
    let axis_pieces = |j: usize| -> Vec<(f64, f64)> {
        if half[j] >= 0.5 * a {
            return vec![(0.0, a)];
        }
        let c = center[j].rem_euclid(a);
        let (lo, hi) = (c - half[j], c + half[j]);
        if lo < 0.0 {
            vec![(0.0, hi), (lo + a, a)]
        } else if hi > a {
            vec![(lo, a), (0.0, hi - a)]
        } else {
            vec![(lo, hi)]
        }
    };
    let (px, py, pz) = (axis_pieces(0), axis_pieces(1), axis_pieces(2));
    let mut out = Vec::new();
    for &(x0, x1) in &px {
        for &(y0, y1) in &py {
            for &(z0, z1) in &pz {
                let lo = [x0, y0, z0];
                let hi = [x1, y1, z1];
                // drop slivers created when a face lands exactly on the boundary
                if (0..3).any(|j| hi[j] - lo[j] <= 0.0) {
                    continue;
                }
                out.push(Shape::Box {
                    center: [0, 1, 2].map(|j| 0.5 * (lo[j] + hi[j])),
                    half: [0, 1, 2].map(|j| 0.5 * (hi[j] - lo[j])),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    /// Four-layer woodpile of six silicon blocks.
    #[serde(rename = "1")]
    Woodpile,
    /// Edge-rod frame with a central sphere.
    #[serde(rename = "2")]
    FrameSphere,
}

impl Model {
    pub fn from_id(id: u32) -> Result<Model> {
        match id {
            1 => Ok(Model::Woodpile),
            2 => Ok(Model::FrameSphere),
            other => Err(Error::Config(format!("unknown model id {other}; expected 1 or 2"))),
        }
    }

    pub fn id(self) -> u32 {
        match self {
            Model::Woodpile => 1,
            Model::FrameSphere => 2,
        }
    }

    /// Literature starting point.
    pub fn default_theta(self) -> [f64; 4] {
        match self {
            Model::Woodpile => [0.125, 0.125, 0.25, 0.25],
            Model::FrameSphere => [1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 11.0 / 30.0],
        }
    }

    /// Box bounds of the admissible set, as fractions of `a`.
    pub fn bounds(self) -> [(f64, f64); 4] {
        match self {
            Model::Woodpile => [(0.0, 0.5), (0.0, 0.5), (0.0, 1.0), (0.0, 1.0)],
            Model::FrameSphere => [(0.0, 0.5); 4],
        }
    }

    /// Band index whose gap with the next band is optimized by default.
    pub fn default_band(self) -> usize {
        match self {
            Model::Woodpile => 4,
            Model::FrameSphere => 2,
        }
    }
}

/// Design parameters θ₁..θ₄ in units of the lattice constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    pub model: Model,
    pub theta: [f64; 4],
}

impl DesignParams {
    pub fn new(model: Model, theta: [f64; 4]) -> Self {
        DesignParams { model, theta }
    }

    pub fn literature(model: Model) -> Self {
        DesignParams::new(model, model.default_theta())
    }
}

/// Membership in the model's admissible set.
pub fn validate_admissible(params: &DesignParams) -> bool {
    let t = params.theta;
    if t.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let in_box = params
        .model
        .bounds()
        .iter()
        .zip(t.iter())
        .all(|(&(lo, hi), &v)| v >= lo && v <= hi);
    if !in_box {
        return false;
    }
    match params.model {
        Model::Woodpile => true,
        Model::FrameSphere => {
            let limit = SQRT_2 / 2.0;
            let pairs = [(0, 1), (0, 2), (1, 2)];
            pairs
                .iter()
                .all(|&(i, j)| (t[i] * t[i] + t[j] * t[j]).sqrt() + t[3] <= limit + ADMISSIBLE_SLACK)
        }
    }
}

fn check_admissible(params: &DesignParams) -> Result<()> {
    if !validate_admissible(params) {
        return Err(Error::Admissibility(format!(
            "θ = {:?} lies outside the admissible set of model {}",
            params.theta,
            params.model.id()
        )));
    }
    if let Some(v) = params.theta.iter().find(|&&v| v < MIN_FEATURE) {
        return Err(Error::Admissibility(format!(
            "θ component {v} is below the minimum feature size {MIN_FEATURE}·a"
        )));
    }
    Ok(())
}

/// Silicon and air, the materials of both models.
pub const EPS_SILICON: f64 = 13.0;
pub const EPS_AIR: f64 = 1.0;

/// Build the unit cell for either model from θ.
pub fn model_cell(params: &DesignParams, a: f64) -> Result<UnitCell> {
    match params.model {
        Model::Woodpile => model1_cell(params, a),
        Model::FrameSphere => model2_cell(params, a),
    }
}

/// Woodpile preset. Four layers of thickness `a/4` stacked along z:
///
/// | layer | rods along | rod centre          | rod half-width |
/// |-------|------------|---------------------|----------------|
/// | 1     | x          | y = a/2             | θ₁             |
/// | 2     | y          | x = θ₃ + a/4        | a/8            |
/// | 3     | x          | y = 0               | θ₂             |
/// | 4     | y          | x = θ₄ − a/4        | a/8            |
///
/// Rods crossing the cell boundary are split, so the literature point yields
/// six blocks.
pub fn model1_cell(params: &DesignParams, a: f64) -> Result<UnitCell> {
    if params.model != Model::Woodpile {
        return Err(Error::Config("model1_cell requires model 1".into()));
    }
    check_admissible(params)?;
    let [t1, t2, t3, t4] = params.theta;
    let layer = 0.25 * a;
    let rods = [
        ([0.5 * a, 0.5 * a, 0.5 * layer], [0.5 * a, t1 * a, 0.5 * layer]),
        ([(t3 + 0.25) * a, 0.5 * a, 1.5 * layer], [0.125 * a, 0.5 * a, 0.5 * layer]),
        ([0.5 * a, 0.0, 2.5 * layer], [0.5 * a, t2 * a, 0.5 * layer]),
        ([(t4 - 0.25) * a, 0.5 * a, 3.5 * layer], [0.125 * a, 0.5 * a, 0.5 * layer]),
    ];
    let shapes = rods
        .iter()
        .flat_map(|&(c, h)| periodic_box_pieces(c, h, a))
        .collect();
    UnitCell::new(a, EPS_AIR, EPS_SILICON, shapes)
}

/// Frame-and-sphere preset: rods along the three cube-edge directions through
/// the cell corner, with half-extent θ_j across axis j, plus a sphere of radius
/// θ₄ at the cell centre. The frame is decomposed into a corner block and three
/// arms so that the pieces are disjoint.
pub fn model2_cell(params: &DesignParams, a: f64) -> Result<UnitCell> {
    if params.model != Model::FrameSphere {
        return Err(Error::Config("model2_cell requires model 2".into()));
    }
    check_admissible(params)?;
    let [t1, t2, t3, t4] = params.theta;
    let h = [t1 * a, t2 * a, t3 * a];
    let mut blocks = vec![([0.0; 3], h)];
    for axis in 0..3 {
        let arm = 0.5 * a - h[axis];
        if arm < MIN_FEATURE * a {
            continue;
        }
        let mut center = [0.0; 3];
        center[axis] = 0.5 * a;
        let mut half = h;
        half[axis] = arm;
        blocks.push((center, half));
    }
    let mut shapes: Vec<Shape> = blocks
        .iter()
        .flat_map(|&(c, h)| periodic_box_pieces(c, h, a))
        .collect();
    shapes.push(Shape::Sphere {
        center: [0.5 * a; 3],
        radius: t4 * a,
    });
    UnitCell::new(a, EPS_AIR, EPS_SILICON, shapes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const TAU: f64 = 2.0 * PI;

    #[test]
    fn sphere_at_zero_is_volume_fraction() {
        let s = Shape::Sphere { center: [0.5; 3], radius: 0.3 };
        let v = chi_hat(&s, [0.0; 3], 1.0);
        assert_relative_eq!(v.re, 4.0 / 3.0 * PI * 0.027, max_relative = 1e-14);
        assert!((v.re - 0.1131).abs() < 1e-4);
        assert_eq!(v.im, 0.0);
    }

    #[test]
    fn full_box_is_orthogonal_to_nonzero_modes() {
        let s = Shape::Box { center: [0.5; 3], half: [0.5; 3] };
        let v = chi_hat(&s, [TAU, 0.0, 0.0], 1.0);
        assert!(v.norm() < 1e-15, "{v}");
        assert_relative_eq!(chi_hat(&s, [0.0; 3], 1.0).re, 1.0);
    }

    #[test]
    fn sphere_matches_midpoint_quadrature() {
        // 64³ midpoint rule; cells cut by the surface use 8³ sub-samples for
        // their occupancy, since the plain stair-step volume is only ~0.5% accurate
        let s = Shape::Sphere { center: [0.5; 3], radius: 0.25 };
        let g = [TAU, 0.0, 0.0];
        let n = 64;
        let sub = 8;
        let h = 1.0 / n as f64;
        let half_diag = 0.5 * 3f64.sqrt() * h;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let x = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (k as f64 + 0.5) * h];
                    let r = ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2) + (x[2] - 0.5).powi(2)).sqrt();
                    let occupancy = if r < 0.25 - half_diag {
                        1.0
                    } else if r > 0.25 + half_diag {
                        0.0
                    } else {
                        let mut inside = 0usize;
                        for a in 0..sub {
                            for b in 0..sub {
                                for c in 0..sub {
                                    let y = [
                                        i as f64 * h + (a as f64 + 0.5) * h / sub as f64,
                                        j as f64 * h + (b as f64 + 0.5) * h / sub as f64,
                                        k as f64 * h + (c as f64 + 0.5) * h / sub as f64,
                                    ];
                                    inside += s.contains(y, 1.0) as usize;
                                }
                            }
                        }
                        inside as f64 / (sub * sub * sub) as f64
                    };
                    acc += Complex64::from_polar(occupancy, -g[0] * x[0]);
                }
            }
        }
        acc *= h * h * h;
        let exact = chi_hat(&s, g, 1.0);
        assert!((exact - acc).norm() / exact.norm() < 1e-3, "{exact} vs {acc}");
    }

    #[test]
    fn conjugate_symmetry() {
        let shapes = [
            Shape::Box { center: [0.2, 0.7, 0.1], half: [0.1, 0.2, 0.05] },
            Shape::Sphere { center: [0.3, 0.4, 0.9], radius: 0.2 },
        ];
        for s in &shapes {
            for g in [[TAU, 0.0, -2.0 * TAU], [3.0 * TAU, TAU, TAU]] {
                let p = chi_hat(s, g, 1.0);
                let m = chi_hat(s, g.map(|v| -v), 1.0);
                assert_relative_eq!(p.re, m.re, epsilon = 1e-15);
                assert_relative_eq!(p.im, -m.im, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn parseval_bound_holds() {
        let cell = model2_cell(&DesignParams::literature(Model::FrameSphere), 1.0).unwrap();
        for s in &cell.shapes {
            let mut sum = 0.0;
            for i in -4..=4 {
                for j in -4..=4 {
                    for k in -4..=4 {
                        let g = [i as f64 * TAU, j as f64 * TAU, k as f64 * TAU];
                        sum += chi_hat(s, g, 1.0).norm_sqr();
                    }
                }
            }
            let f = chi_hat(s, [0.0; 3], 1.0).re;
            assert!(sum <= f * 1.01, "sum {sum} exceeds fraction {f}");
        }
    }

    #[test]
    fn eta_zero_is_mean_inverse_eps() {
        let cell = model1_cell(&DesignParams::literature(Model::Woodpile), 1.0).unwrap();
        let f = cell.filling_fraction();
        let expected = f / EPS_SILICON + (1.0 - f) / EPS_AIR;
        assert_relative_eq!(cell.inverse_eps_coefficient([0.0; 3]).re, expected, max_relative = 1e-14);
    }

    #[test]
    fn woodpile_literature_point_has_six_blocks() {
        let cell = model1_cell(&DesignParams::literature(Model::Woodpile), 1.0).unwrap();
        assert_eq!(cell.shapes.len(), 6);
        assert_eq!(cell.eps_inclusion, 13.0);
        assert_eq!(cell.eps_background, 1.0);
        // four rods of cross-section 0.25a x 0.25a
        assert_relative_eq!(cell.filling_fraction(), 0.25, max_relative = 1e-12);
    }

    #[test]
    fn woodpile_optimized_point_is_valid() {
        let p = DesignParams::new(Model::Woodpile, [0.1696, 0.1810, 0.2342, 0.3214]);
        assert!(model1_cell(&p, 1.0).is_ok());
    }

    #[test]
    fn zero_width_blocks_rejected() {
        let p = DesignParams::new(Model::Woodpile, [0.0, 0.0, 0.25, 0.25]);
        assert!(matches!(model1_cell(&p, 1.0), Err(Error::Admissibility(_))));
    }

    #[test]
    fn frame_sphere_points() {
        assert!(model2_cell(&DesignParams::literature(Model::FrameSphere), 1.0).is_ok());
        let opt = DesignParams::new(Model::FrameSphere, [0.1707, 0.1707, 0.1707, 0.2190]);
        assert!(model2_cell(&opt, 1.0).is_ok());
        let bad = DesignParams::new(Model::FrameSphere, [0.5; 4]);
        assert!(!validate_admissible(&bad));
        assert!(matches!(model2_cell(&bad, 1.0), Err(Error::Admissibility(_))));
    }

    #[test]
    fn admissible_boundaries() {
        assert!(validate_admissible(&DesignParams::new(Model::Woodpile, [0.5, 0.5, 1.0, 1.0])));
        assert!(!validate_admissible(&DesignParams::new(Model::Woodpile, [0.6, 0.1, 0.1, 0.1])));
        // equality in the sphere/rod inequality
        let eq = DesignParams::new(Model::FrameSphere, [0.5, 0.0, 0.0, SQRT_2 / 2.0 - 0.5]);
        assert!(validate_admissible(&eq));
        // the equality point with θ₄ = √2a/2 lies outside the [0, a/2] box
        assert!(!validate_admissible(&DesignParams::new(Model::FrameSphere, [0.0, 0.0, 0.0, SQRT_2 / 2.0])));
    }

    #[test]
    fn overlapping_shapes_rejected() {
        let shapes = vec![
            Shape::Sphere { center: [0.5; 3], radius: 0.3 },
            Shape::Box { center: [0.7, 0.5, 0.5], half: [0.1; 3] },
        ];
        assert!(matches!(UnitCell::new(1.0, 1.0, 13.0, shapes), Err(Error::Admissibility(_))));
    }

    #[test]
    fn periodic_pieces_cover_wrapped_box() {
        let pieces = periodic_box_pieces([0.0, 0.5, 0.5], [0.1, 0.2, 0.2], 1.0);
        assert_eq!(pieces.len(), 2);
        let vol: f64 = pieces.iter().map(Shape::volume).sum();
        assert_relative_eq!(vol, 8.0 * 0.1 * 0.2 * 0.2, max_relative = 1e-12);
        // Fourier coefficients are unchanged by the split
        let whole = Shape::Box { center: [0.0, 0.5, 0.5], half: [0.1, 0.2, 0.2] };
        let g = [TAU, 2.0 * TAU, -TAU];
        let split: Complex64 = pieces.iter().map(|s| chi_hat(s, g, 1.0)).sum();
        assert!((split - chi_hat(&whole, g, 1.0)).norm() < 1e-14);
    }

    proptest::proptest! {
        #[test]
        fn admissibility_is_monotone_in_radius(t1 in 0.0..0.5f64, t2 in 0.0..0.5f64, t3 in 0.0..0.5f64,
                                              t4 in 0.0..0.5f64, s in 0.0..1.0f64) {
            let p = DesignParams::new(Model::FrameSphere, [t1, t2, t3, t4]);
            if validate_admissible(&p) {
                let q = DesignParams::new(Model::FrameSphere, [t1, t2, t3, t4 * s]);
                proptest::prop_assert!(validate_admissible(&q));
            }
        }
    }
}

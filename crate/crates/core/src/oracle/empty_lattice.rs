//! Free-space ("empty lattice") bands λ(k) = |k+G|² and their exact crossing planes.

use std::cmp::Ordering;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{check_band_count, BandOracle, BandSample, OracleInfo};
use crate::error::{Error, Result};
use crate::WaveVector;

/// Scalar free-photon bands of the simple cubic lattice with constant `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmptyLattice {
    pub a: f64,
    /// Reciprocal vectors `(2π/a)·n` with `|n|∞ ≤ cutoff` are enumerated.
    pub cutoff: i32,
}

impl EmptyLattice {
    pub fn new(a: f64, cutoff: i32) -> Self {
        EmptyLattice { a, cutoff }
    }

    fn reciprocal(&self) -> f64 {
        2.0 * PI / self.a
    }

    fn lattice_vectors(&self) -> impl Iterator<Item = [i32; 3]> {
        let c = self.cutoff;
        (-c..=c).flat_map(move |i| (-c..=c).flat_map(move |j| (-c..=c).map(move |l| [i, j, l])))
    }

    /// The `n_bands` smallest `|k+G|²` with the attaining `G` (integer
    /// coordinates), ties broken lexicographically on `G`.
    pub fn ranked(&self, k: WaveVector, n_bands: usize) -> Result<Vec<(f64, [i32; 3])>> {
        check_band_count(n_bands, self.max_bands())?;
        let b = self.reciprocal();
        let mut all: Vec<(f64, [i32; 3])> = self
            .lattice_vectors()
            .map(|n| (shifted_norm_sqr(k, n, b), n))
            .collect();
        all.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(Ordering::Equal).then(x.1.cmp(&y.1)));
        all.truncate(n_bands);

        // every G outside the enumerated cube has some |n_j| > cutoff
        let kmax = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let outside = ((self.cutoff as f64 + 1.0) * b - kmax).max(0.0);
        let top = all.last().map(|x| x.0).unwrap_or(0.0);
        if top >= outside * outside {
            let required = ((top.sqrt() + kmax) / b).floor() as i32 + 1;
            return Err(Error::Shell {
                k,
                bands: n_bands,
                cutoff: self.cutoff,
                required: required.max(self.cutoff + 1),
            });
        }
        Ok(all)
    }

    /// Exact gradient `2(k+G*)` of band `q` (1-based).
    pub fn band_gradient(&self, k: WaveVector, q: usize) -> Result<[f64; 3]> {
        let ranked = self.ranked(k, q)?;
        let n = ranked[q - 1].1;
        Ok(shifted_gradient(k, n, self.reciprocal()))
    }
}

fn shifted_norm_sqr(k: WaveVector, n: [i32; 3], b: f64) -> f64 {
    (0..3).map(|j| (k[j] + b * n[j] as f64).powi(2)).sum()
}

fn shifted_gradient(k: WaveVector, n: [i32; 3], b: f64) -> [f64; 3] {
    [0, 1, 2].map(|j| 2.0 * (k[j] + b * n[j] as f64))
}

impl BandOracle for EmptyLattice {
    fn info(&self) -> OracleInfo {
        OracleInfo {
            name: "empty_lattice".into(),
            cutoff: self.cutoff as usize,
            max_bands: (2 * self.cutoff as usize + 1).pow(3),
            lattice_constant: self.a,
        }
    }

    fn values(&self, k: WaveVector, n_bands: usize) -> Result<Vec<f64>> {
        Ok(self.ranked(k, n_bands)?.into_iter().map(|x| x.0).collect())
    }

    fn sample(&self, k: WaveVector, n_bands: usize) -> Result<BandSample> {
        let b = self.reciprocal();
        let ranked = self.ranked(k, n_bands)?;
        Ok(BandSample {
            values: ranked.iter().map(|x| x.0).collect(),
            gradients: ranked.iter().map(|x| shifted_gradient(k, x.1, b)).collect(),
        })
    }
}

/// Axis-aligned box in k-space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Aabb {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Self {
        Aabb { lo, hi }
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|j| (self.hi[j] - self.lo[j]).max(0.0)).product()
    }

    fn corners(&self) -> [[f64; 3]; 8] {
        let mut out = [[0.0; 3]; 8];
        for (c, corner) in out.iter_mut().enumerate() {
            for j in 0..3 {
                corner[j] = if c >> j & 1 == 1 { self.hi[j] } else { self.lo[j] };
            }
        }
        out
    }

    fn edges() -> Vec<(usize, usize)> {
        let mut e = Vec::new();
        for c in 0..8usize {
            for j in 0..3 {
                if c >> j & 1 == 0 {
                    e.push((c, c | 1 << j));
                }
            }
        }
        e
    }
}

/// The bisector plane `{k : |k+G|² = |k+G'|²}` of two reciprocal vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyPlane {
    pub g: [i32; 3],
    pub g_other: [i32; 3],
    /// Plane is `normal · k = offset`.
    pub normal: [f64; 3],
    pub offset: f64,
}

impl DegeneracyPlane {
    fn new(g: [i32; 3], g_other: [i32; 3], b: f64) -> Self {
        // |k+G|² − |k+G'|² = 2k·(G−G') + |G|² − |G'|²
        let gv = g.map(|v| v as f64 * b);
        let hv = g_other.map(|v| v as f64 * b);
        let normal = [0, 1, 2].map(|j| 2.0 * (gv[j] - hv[j]));
        let offset = dot(hv, hv) - dot(gv, gv);
        DegeneracyPlane {
            g,
            g_other,
            normal,
            offset,
        }
    }

    pub fn signed(&self, k: [f64; 3]) -> f64 {
        dot(self.normal, k) - self.offset
    }
}

/// Where on a plane patch a crossing within a band window is realized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneHit {
    pub point: [f64; 3],
    /// 1-based index `q` with `λ_q = λ_{q+1}` at `point`.
    pub band: usize,
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|j| a[j] + t * (b[j] - a[j]))
}

impl EmptyLattice {
    /// Convex polygon `plane ∩ polytope`, with corners ordered around the
    /// centroid. Returns an empty list when the plane misses the polytope.
    fn clip_plane(plane: &DegeneracyPlane, corners: &[[f64; 3]], edges: &[(usize, usize)], scale: f64) -> Vec<[f64; 3]> {
        let tol = 1e-12 * scale * norm(plane.normal);
        let s: Vec<f64> = corners.iter().map(|&c| plane.signed(c)).collect();
        let mut pts: Vec<[f64; 3]> = Vec::new();
        for (i, c) in corners.iter().enumerate() {
            if s[i].abs() <= tol {
                pts.push(*c);
            }
        }
        for &(i, j) in edges {
            if (s[i] > tol && s[j] < -tol) || (s[i] < -tol && s[j] > tol) {
                let t = s[i] / (s[i] - s[j]);
                pts.push(lerp(corners[i], corners[j], t));
            }
        }
        dedup_points(&mut pts, 1e-12 * scale);
        if pts.len() < 3 {
            return pts;
        }
        let n = plane.normal;
        let centroid = pts.iter().fold([0.0; 3], |acc, p| [acc[0] + p[0], acc[1] + p[1], acc[2] + p[2]]);
        let centroid = centroid.map(|v| v / pts.len() as f64);
        let u = sub(pts[0], centroid);
        let v = cross(n, u);
        pts.sort_by(|p, q| {
            let dp = sub(*p, centroid);
            let dq = sub(*q, centroid);
            let ap = dot(dp, v).atan2(dot(dp, u));
            let aq = dot(dq, v).atan2(dot(dq, u));
            ap.partial_cmp(&aq).unwrap_or(Ordering::Equal)
        });
        pts
    }

    /// Smallest-rank crossing realized by `plane` on the convex patch `poly`
    /// for a band pair `(q, q+1)` with `q ∈ [q_lo, q_hi]`, if any.
    ///
    /// On the plane, every other `G''` compares with the tied pair through an
    /// affine function, so the rank data is piecewise constant on a line
    /// arrangement and the extreme cases are attained at its vertices.
    fn crossing_on_patch(&self, plane: &DegeneracyPlane, poly: &[[f64; 3]], q_lo: usize, q_hi: usize) -> Option<PlaneHit> {
        if poly.is_empty() {
            return None;
        }
        let b = self.reciprocal();
        let f = |k: [f64; 3], n: [i32; 3]| shifted_norm_sqr(k, n, b);
        // affine functions d(k) = f_G''(k) − f_G(k) restricted to the plane
        let lines: Vec<[i32; 3]> = self
            .lattice_vectors()
            .filter(|&n| n != plane.g && n != plane.g_other)
            .filter(|&n| poly.iter().any(|&p| f(p, n) - f(p, plane.g) <= 1e-9 * (1.0 + f(p, plane.g))))
            .collect();
        let affine = |n: [i32; 3]| {
            // f_n − f_g = 2k·(n−g)b + b²(|n|²−|g|²)
            let d = [0, 1, 2].map(|j| 2.0 * b * (n[j] - plane.g[j]) as f64);
            let c = b * b * (n.iter().map(|&v| (v * v) as f64).sum::<f64>() - plane.g.iter().map(|&v| (v * v) as f64).sum::<f64>());
            (d, c)
        };
        let mut candidates: Vec<[f64; 3]> = poly.to_vec();
        let m = poly.len();
        // arrangement lines against polygon edges
        for &n in &lines {
            let (d, c) = affine(n);
            for i in 0..m {
                let (p, q) = (poly[i], poly[(i + 1) % m]);
                let (sp, sq) = (dot(d, p) + c, dot(d, q) + c);
                if (sp > 0.0 && sq < 0.0) || (sp < 0.0 && sq > 0.0) {
                    candidates.push(lerp(p, q, sp / (sp - sq)));
                }
            }
        }
        // pairwise line intersections inside the polygon
        if poly.len() >= 3 {
            for (i, &n1) in lines.iter().enumerate() {
                let (d1, c1) = affine(n1);
                for &n2 in &lines[i + 1..] {
                    let (d2, c2) = affine(n2);
                    if let Some(p) = three_plane_point(plane.normal, plane.offset, d1, -c1, d2, -c2) {
                        if inside_convex_polygon(p, poly, plane.normal) {
                            candidates.push(p);
                        }
                    }
                }
            }
        }
        let all: Vec<[i32; 3]> = self.lattice_vectors().collect();
        let mut best: Option<PlaneHit> = None;
        for p in candidates {
            let v = f(p, plane.g);
            let tol = 1e-10 * (1.0 + v);
            let below = all.iter().filter(|&&n| f(p, n) < v - tol).count();
            let tied = all.iter().filter(|&&n| (f(p, n) - v).abs() <= tol).count();
            // tied values occupy ranks below+1 ..= below+tied
            let lo = (below + 1).max(q_lo);
            let hi = (below + tied - 1).min(q_hi);
            if lo <= hi && best.is_none_or(|h| lo < h.band) {
                best = Some(PlaneHit { point: p, band: lo });
            }
        }
        best
    }

    /// Crossing realized by `plane` inside the closed tetrahedron with the
    /// given vertices, for band pairs `(q, q+1)`, `q ∈ [q_lo, q_hi]`.
    pub fn plane_hits_tet(&self, plane: &DegeneracyPlane, tet: &[[f64; 3]; 4], q_lo: usize, q_hi: usize) -> Option<PlaneHit> {
        let scale = tet.iter().flat_map(|p| p.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
        let edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let poly = Self::clip_plane(plane, tet, &edges, scale);
        self.crossing_on_patch(plane, &poly, q_lo, q_hi)
    }
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn dedup_points(pts: &mut Vec<[f64; 3]>, tol: f64) {
    let mut out: Vec<[f64; 3]> = Vec::with_capacity(pts.len());
    for &p in pts.iter() {
        if !out.iter().any(|q| norm(sub(p, *q)) <= tol) {
            out.push(p);
        }
    }
    *pts = out;
}

/// Solve `n_i · x = r_i` for three planes.
fn three_plane_point(n1: [f64; 3], r1: f64, n2: [f64; 3], r2: f64, n3: [f64; 3], r3: f64) -> Option<[f64; 3]> {
    let det = dot(n1, cross(n2, n3));
    let scale = norm(n1) * norm(n2) * norm(n3);
    if det.abs() <= 1e-12 * scale {
        return None;
    }
    let t1 = cross(n2, n3).map(|v| v * r1);
    let t2 = cross(n3, n1).map(|v| v * r2);
    let t3 = cross(n1, n2).map(|v| v * r3);
    Some([0, 1, 2].map(|j| (t1[j] + t2[j] + t3[j]) / det))
}

fn inside_convex_polygon(p: [f64; 3], poly: &[[f64; 3]], normal: [f64; 3]) -> bool {
    let m = poly.len();
    let scale = poly.iter().flat_map(|q| q.iter()).fold(1.0f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-12 * scale * scale * norm(normal);
    let mut sign = 0.0;
    for i in 0..m {
        let e = sub(poly[(i + 1) % m], poly[i]);
        let s = dot(cross(e, sub(p, poly[i])), normal);
        if s.abs() <= tol {
            continue;
        }
        if sign == 0.0 {
            sign = s.signum();
        } else if s.signum() != sign {
            return false;
        }
    }
    true
}

/// Bisector planes that realize a crossing among the first `n_bands` bands
/// somewhere inside `region`.
pub fn empty_lattice_singular_set(a: f64, n_bands: usize, region: &Aabb, cutoff: i32) -> Vec<DegeneracyPlane> {
    if n_bands < 2 || region.volume() <= 0.0 {
        return Vec::new();
    }
    let lattice = EmptyLattice::new(a, cutoff);
    let b = lattice.reciprocal();
    let corners = region.corners();
    let edges = Aabb::edges();
    // λ_n ≤ max over a fixed set of n vectors of |k+G|², which is convex, so
    // its largest corner value bounds λ_n on the region.
    let center = [0, 1, 2].map(|j| 0.5 * (region.lo[j] + region.hi[j]));
    let n_eff = n_bands.min(lattice.max_bands());
    let nearest: Vec<[i32; 3]> = match lattice.ranked(center, n_eff) {
        Ok(r) => r.into_iter().map(|x| x.1).collect(),
        Err(_) => lattice.lattice_vectors().collect(),
    };
    let bound = corners
        .iter()
        .flat_map(|&c| nearest.iter().map(move |&n| shifted_norm_sqr(c, n, b)))
        .fold(0.0f64, f64::max);
    let gs: Vec<[i32; 3]> = lattice
        .lattice_vectors()
        .filter(|&n| {
            let closest = [0, 1, 2].map(|j| (-(n[j] as f64) * b).clamp(region.lo[j], region.hi[j]));
            shifted_norm_sqr(closest, n, b) <= bound * (1.0 + 1e-9)
        })
        .collect();
    let scale = corners.iter().flat_map(|p| p.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
    let mut out = Vec::new();
    for (i, &g) in gs.iter().enumerate() {
        for &h in &gs[i + 1..] {
            let plane = DegeneracyPlane::new(g, h, b);
            let poly = EmptyLattice::clip_plane(&plane, &corners, &edges, scale);
            if lattice.crossing_on_patch(&plane, &poly, 1, n_bands - 1).is_some() {
                out.push(plane);
            }
        }
    }
    out
}

//! Reference-element shape functions and sampling points.
//!
//! Everything is expressed in barycentric coordinates (λ₀, λ₁, λ₂, λ₃) of the
//! element, so a point's coordinates do not depend on the element's shape.
//! On the reference tetrahedron λ₀ = x, λ₁ = y, λ₂ = z, λ₃ = 1−x−y−z.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lobatto::lobatto_nodes;
use crate::{Error, Result};

/// Local edges as vertex pairs; `Degrees::q` follows this order.
pub const EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
/// Face `i` is opposite vertex `i`; `Degrees::p` follows this order.
pub const FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

/// Condition estimate above which a local system is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Element degree n, face degrees p and edge degrees q.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Degrees {
    pub n: usize,
    pub p: [usize; 4],
    pub q: [usize; 6],
}

impl Degrees {
    pub fn uniform(n: usize) -> Self {
        Degrees { n, p: [n; 4], q: [n; 6] }
    }

    /// Checks q ≤ p ≤ n on every incidence, all at least 1.
    pub fn validate(&self) -> Result<()> {
        for (f, face) in FACES.iter().enumerate() {
            if self.p[f] > self.n {
                return Err(Error::Config(format!("face degree {} exceeds element degree {}", self.p[f], self.n)));
            }
            for (e, &(a, b)) in EDGES.iter().enumerate() {
                if face.contains(&a) && face.contains(&b) && self.q[e] > self.p[f] {
                    return Err(Error::Config(format!("edge degree {} exceeds face degree {}", self.q[e], self.p[f])));
                }
            }
        }
        if self.q.contains(&0) {
            return Err(Error::Config("degrees must be at least 1".into()));
        }
        Ok(())
    }

    /// Dimension of the local space: 4 + Σ(q−1) + Σ C(p−1, 2) + C(n−1, 3).
    pub fn dimension(&self) -> usize {
        4 + self.q.iter().map(|&q| q - 1).sum::<usize>()
            + self.p.iter().map(|&p| binom(p.saturating_sub(1), 2)).sum::<usize>()
            + binom(self.n.saturating_sub(1), 3)
    }
}

pub(crate) fn binom(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeFn {
    /// λ_i.
    Nodal(usize),
    /// λ_j λ_k (λ_k − λ_j)^(ν−2) on local edge `edge` = (j, k).
    Edge { edge: usize, nu: usize },
    /// λ_j λ_k λ_l · λ_k^a λ_l^b on local face `face` = (j, k, l).
    Face { face: usize, a: usize, b: usize },
    /// λ₀λ₁λ₂λ₃ · λ₀^a λ₁^b λ₂^c.
    Internal { a: usize, b: usize, c: usize },
}

impl ShapeFn {
    pub fn eval(&self, l: &[f64; 4]) -> f64 {
        match *self {
            ShapeFn::Nodal(i) => l[i],
            ShapeFn::Edge { edge, nu } => {
                let (j, k) = EDGES[edge];
                l[j] * l[k] * (l[k] - l[j]).powi(nu as i32 - 2)
            }
            ShapeFn::Face { face, a, b } => {
                let [j, k, m] = FACES[face];
                l[j] * l[k] * l[m] * l[k].powi(a as i32) * l[m].powi(b as i32)
            }
            ShapeFn::Internal { a, b, c } => {
                l[0] * l[1] * l[2] * l[3] * l[0].powi(a as i32) * l[1].powi(b as i32) * l[2].powi(c as i32)
            }
        }
    }
}

/// Shape functions of one element, grouped nodal, edges 0..6, faces 0..4,
/// internal. `groups[g]` is the index range of group g.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBasis {
    pub degrees: Degrees,
    pub functions: Vec<ShapeFn>,
    pub groups: Vec<std::ops::Range<usize>>,
}

pub const NODAL_GROUP: usize = 0;
pub fn edge_group(e: usize) -> usize {
    1 + e
}
pub fn face_group(f: usize) -> usize {
    7 + f
}
pub const INTERNAL_GROUP: usize = 11;

fn face_exponents(p: usize) -> Vec<(usize, usize)> {
    if p < 3 {
        return Vec::new();
    }
    let d = p - 3;
    (0..=d).flat_map(|a| (0..=d - a).map(move |b| (a, b))).collect()
}

fn internal_exponents(n: usize) -> Vec<(usize, usize, usize)> {
    if n < 4 {
        return Vec::new();
    }
    let d = n - 4;
    let mut out = Vec::new();
    for a in 0..=d {
        for b in 0..=d - a {
            for c in 0..=d - a - b {
                out.push((a, b, c));
            }
        }
    }
    out
}

pub fn shape_basis(degrees: Degrees) -> ReferenceBasis {
    let mut functions = Vec::with_capacity(degrees.dimension());
    let mut groups = Vec::with_capacity(12);
    let mut start = 0;
    let mut close = |functions: &Vec<ShapeFn>, groups: &mut Vec<std::ops::Range<usize>>| {
        groups.push(start..functions.len());
        start = functions.len();
    };
    functions.extend((0..4).map(ShapeFn::Nodal));
    close(&functions, &mut groups);
    for e in 0..6 {
        functions.extend((2..=degrees.q[e]).map(|nu| ShapeFn::Edge { edge: e, nu }));
        close(&functions, &mut groups);
    }
    for f in 0..4 {
        functions.extend(face_exponents(degrees.p[f]).into_iter().map(|(a, b)| ShapeFn::Face { face: f, a, b }));
        close(&functions, &mut groups);
    }
    functions.extend(internal_exponents(degrees.n).into_iter().map(|(a, b, c)| ShapeFn::Internal { a, b, c }));
    close(&functions, &mut groups);
    ReferenceBasis {
        degrees,
        functions,
        groups,
    }
}

impl ReferenceBasis {
    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn eval_all(&self, l: &[f64; 4]) -> Vec<f64> {
        self.functions.iter().map(|f| f.eval(l)).collect()
    }

    /// Σ c_i φ_i at `l`.
    pub fn combine(&self, coeffs: &[f64], l: &[f64; 4]) -> f64 {
        self.functions.iter().zip(coeffs).map(|(f, c)| c * f.eval(l)).sum()
    }
}

/// Interior points of an edge of degree q as weights on its (start, end).
pub fn edge_weights(q: usize) -> Vec<[f64; 2]> {
    if q < 2 {
        return Vec::new();
    }
    let v = lobatto_nodes(q);
    v[1..q].iter().map(|&x| [1.0 - x, x]).collect()
}

/// Interior points of a face of degree p as weights on its three vertices.
pub fn face_weights(p: usize) -> Vec<[f64; 3]> {
    if p < 3 {
        return Vec::new();
    }
    let v = lobatto_nodes(p);
    // 1-based node indices i, j, k ≥ 2 with i + j + k = p + 3.
    let mut out = Vec::with_capacity(binom(p - 1, 2));
    for i in 2..=p - 1 {
        for j in 2..=p + 1 - i {
            let k = p + 3 - i - j;
            if k < 2 {
                continue;
            }
            let (a, b, c) = (v[i - 1], v[j - 1], v[k - 1]);
            out.push([(1.0 + 2.0 * a - b - c) / 3.0, (1.0 + 2.0 * b - a - c) / 3.0, (1.0 + 2.0 * c - a - b) / 3.0]);
        }
    }
    out
}

/// Internal points of degree n as barycentric weights.
pub fn internal_weights(n: usize) -> Vec<[f64; 4]> {
    if n < 4 {
        return Vec::new();
    }
    let v = lobatto_nodes(n);
    let mut out = Vec::with_capacity(binom(n - 1, 3));
    for i in 2..=n {
        for j in 2..=n {
            for k in 2..=n {
                if i + j + k + 2 > n + 4 {
                    continue;
                }
                let l = n + 4 - i - j - k;
                let x = [v[i - 1], v[j - 1], v[k - 1], v[l - 1]];
                let s: f64 = x.iter().sum();
                out.push(x.map(|xi| (1.0 + 4.0 * xi - s) / 4.0));
            }
        }
    }
    out
}

/// Sampling points of the reference element in basis-group order, with each
/// edge and face oriented by increasing local vertex index.
pub fn reference_points(degrees: Degrees) -> Vec<[f64; 4]> {
    let mut pts = Vec::with_capacity(degrees.dimension());
    for i in 0..4 {
        let mut l = [0.0; 4];
        l[i] = 1.0;
        pts.push(l);
    }
    for (e, &(a, b)) in EDGES.iter().enumerate() {
        for w in edge_weights(degrees.q[e]) {
            let mut l = [0.0; 4];
            l[a] = w[0];
            l[b] = w[1];
            pts.push(l);
        }
    }
    for (f, face) in FACES.iter().enumerate() {
        for w in face_weights(degrees.p[f]) {
            let mut l = [0.0; 4];
            for (slot, &vtx) in face.iter().enumerate() {
                l[vtx] = w[slot];
            }
            pts.push(l);
        }
    }
    pts.extend(internal_weights(degrees.n));
    pts
}

/// A factored square system with its 1-norm condition estimate.
struct Factored {
    lu: faer::linalg::solvers::PartialPivLu<f64>,
}

fn factor(matrix: Mat<f64>, element: usize, entity: &'static str, degree: usize) -> Result<Factored> {
    let lu = matrix.partial_piv_lu();
    let inv = lu.inverse();
    let norm1 = |m: &Mat<f64>| {
        (0..m.ncols())
            .map(|j| (0..m.nrows()).map(|i| m[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let condition = norm1(&matrix) * norm1(&inv);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::Conditioning {
            element,
            entity,
            degree,
            condition,
        });
    }
    Ok(Factored { lu })
}

/// Staged interpolation on one element.
///
/// `points` are barycentric sampling points in the basis' group order and
/// `values[i]` holds the function values (one per band) at point i. Nodal
/// coefficients are the vertex values; each edge, then each face, then the
/// interior solves for its own coefficients against what the earlier stages
/// leave unexplained at its points. Returns coefficients per band.
pub fn local_interpolate(basis: &ReferenceBasis, points: &[[f64; 4]], values: &[Vec<f64>], element: usize) -> Result<Vec<Vec<f64>>> {
    let dim = basis.len();
    if points.len() != dim || values.len() != dim {
        return Err(Error::Internal(format!(
            "element {element}: {} points and {} values for {dim} shape functions",
            points.len(),
            values.len()
        )));
    }
    let n_bands = values.first().map_or(0, |v| v.len());
    let mut coeffs = vec![vec![0.0; dim]; n_bands];
    for i in basis.groups[NODAL_GROUP].clone() {
        for (b, c) in coeffs.iter_mut().enumerate() {
            c[i] = values[i][b];
        }
    }
    let stages: Vec<(usize, &'static str, usize)> = (0..6)
        .map(|e| (edge_group(e), "edge", basis.degrees.q[e]))
        .chain((0..4).map(|f| (face_group(f), "face", basis.degrees.p[f])))
        .chain(std::iter::once((INTERNAL_GROUP, "internal", basis.degrees.n)))
        .collect();
    for (group, entity, degree) in stages {
        let range = basis.groups[group].clone();
        let m = range.len();
        if m == 0 {
            continue;
        }
        let known = 0..range.start;
        let matrix = Mat::from_fn(m, m, |r, c| basis.functions[range.start + c].eval(&points[range.start + r]));
        let mut rhs = Mat::from_fn(m, n_bands, |r, b| {
            let p = &points[range.start + r];
            let done: f64 = known.clone().map(|i| coeffs[b][i] * basis.functions[i].eval(p)).sum();
            values[range.start + r][b] - done
        });
        let fac = factor(matrix, element, entity, degree)?;
        fac.lu.solve_in_place(rhs.as_mut());
        for (r, i) in range.enumerate() {
            for (b, c) in coeffs.iter_mut().enumerate() {
                c[i] = rhs[(r, b)];
            }
        }
    }
    Ok(coeffs)
}

/// Largest sum of absolute internal cardinal functions over random reference
/// points; 0 when there are no internal points.
pub fn lebesgue_estimate(n: usize, samples: usize, seed: u64) -> Result<f64> {
    let degrees = Degrees::uniform(n);
    let basis = shape_basis(degrees);
    let range = basis.groups[INTERNAL_GROUP].clone();
    let m = range.len();
    if m == 0 {
        return Ok(0.0);
    }
    let pts = internal_weights(n);
    let matrix = Mat::from_fn(m, m, |r, c| basis.functions[range.start + c].eval(&pts[r]));
    let fac = factor(matrix, usize::MAX, "internal", n)?;
    // Cardinal coefficients: columns of V⁻¹ with V[r][c] = φ_c(x_r).
    let inv = fac.lu.inverse();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..samples {
        let l = random_barycentric(&mut rng);
        let phi: Vec<f64> = range.clone().map(|i| basis.functions[i].eval(&l)).collect();
        let total: f64 = (0..m)
            .map(|card| (0..m).map(|c| inv[(c, card)] * phi[c]).sum::<f64>().abs())
            .sum();
        best = best.max(total);
    }
    Ok(best)
}

/// Uniform point of the simplex from sorted uniform spacings.
pub fn random_barycentric<R: Rng>(rng: &mut R) -> [f64; 4] {
    let mut u = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
    u.sort_by(|a, b| a.total_cmp(b));
    [u[0], u[1] - u[0], u[2] - u[1], 1.0 - u[2]]
}

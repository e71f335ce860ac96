//! Conforming tetrahedral meshes of Brillouin-zone regions, refined by
//! longest-edge bisection with recursive closure.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, WaveVector};

/// Barycentric tolerance for point location.
pub const LOCATE_TOL: f64 = 1e-10;

/// Tet count below which point location is a plain scan.
pub const SCAN_LIMIT: usize = 5000;

/// Bisections allowed per closure, per live tet at entry.
const CLOSURE_FACTOR: usize = 64;

/// Region to mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    /// Γ-X-M-R wedge of a simple cubic zone with full cubic symmetry.
    IbzScFullSym,
    /// Prism over Γ-X-M spanning k_z ∈ [0, π/a], for cells with only in-plane
    /// symmetry.
    IbzScXySym,
    /// Axis-aligned box, Kuhn-split into six tets.
    Box { lo: [f64; 3], hi: [f64; 3] },
    Explicit {
        vertices: Vec<[f64; 3]>,
        tets: Vec<[usize; 4]>,
    },
}

impl DomainSpec {
    pub fn from_name(name: &str) -> Result<DomainSpec> {
        match name {
            "ibz_sc_full_sym" => Ok(DomainSpec::IbzScFullSym),
            "ibz_sc_xy_sym" => Ok(DomainSpec::IbzScXySym),
            other => Err(Error::Config(format!("unknown domain '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tet {
    pub vertices: [usize; 4],
    /// Number of bisections in this element's ancestry, closure included.
    pub refinements: usize,
    pub alive: bool,
    pub marked: bool,
}

/// Shape data of one element and the affine map from the reference
/// tetrahedron, whose vertices are e₁, e₂, e₃ and the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub diameter: f64,
    pub inscribed_diameter: f64,
    /// Columns are v₀−v₃, v₁−v₃, v₂−v₃.
    pub matrix: [[f64; 3]; 3],
    pub offset: [f64; 3],
    pub volume: f64,
}

impl ElementGeometry {
    pub fn shape_ratio(&self) -> f64 {
        self.diameter / self.inscribed_diameter
    }

    pub fn map(&self, x: [f64; 3]) -> [f64; 3] {
        let mut y = self.offset;
        for (i, yi) in y.iter_mut().enumerate() {
            for (j, xj) in x.iter().enumerate() {
                *yi += self.matrix[i][j] * xj;
            }
        }
        y
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConformityReport {
    /// Faces shared by more than two live tets.
    pub overshared_faces: Vec<[usize; 3]>,
    /// Faces owned by one tet that do not lie on the domain boundary.
    pub orphan_faces: Vec<[usize; 3]>,
    /// (vertex, edge) pairs where the vertex splits a live edge.
    pub hanging_nodes: Vec<(usize, [usize; 2])>,
    pub max_shape_ratio: f64,
}

impl ConformityReport {
    pub fn defect_count(&self) -> usize {
        self.overshared_faces.len() + self.orphan_faces.len() + self.hanging_nodes.len()
    }

    pub fn is_conforming(&self) -> bool {
        self.defect_count() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TetMesh {
    vertices: Vec<[f64; 3]>,
    tets: Vec<Tet>,
    midpoints: HashMap<(usize, usize), usize>,
    vertex_tets: Vec<Vec<usize>>,
    boundary: Vec<[[f64; 3]; 3]>,
    generation: usize,
    initial_volume: f64,
    h1: f64,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
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

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn signed_volume(p: &[[f64; 3]; 4]) -> f64 {
    dot(sub(p[1], p[0]), cross(sub(p[2], p[0]), sub(p[3], p[0]))) / 6.0
}

fn sorted3(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

const LOCAL_EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
const LOCAL_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

/// Barycentric coordinates of `k` in the triangle `t`, plus the distance of
/// `k` from the triangle's plane.
fn triangle_coords(t: &[[f64; 3]; 3], k: [f64; 3]) -> ([f64; 3], f64) {
    let e1 = sub(t[1], t[0]);
    let e2 = sub(t[2], t[0]);
    let n = cross(e1, e2);
    let area2 = norm(n);
    let d = sub(k, t[0]);
    let dist = dot(d, n).abs() / area2;
    let l1 = dot(cross(d, e2), n) / (area2 * area2);
    let l2 = dot(cross(e1, d), n) / (area2 * area2);
    ([1.0 - l1 - l2, l1, l2], dist)
}

/// Barycentric coordinates of `k` with respect to the four points `p`.
pub fn barycentric(p: &[[f64; 3]; 4], k: [f64; 3]) -> [f64; 4] {
    let vol = signed_volume(p);
    let mut out = [0.0; 4];
    for (i, o) in out.iter_mut().enumerate() {
        let mut q = *p;
        q[i] = k;
        *o = signed_volume(&q) / vol;
    }
    out
}

fn scale_points(points: &[[f64; 3]], s: f64) -> Vec<[f64; 3]> {
    points.iter().map(|p| [p[0] * s, p[1] * s, p[2] * s]).collect()
}

impl TetMesh {
    /// Builds the initial mesh for lattice constant `a`. Built-in zones are
    /// given in units of π/a.
    pub fn build_initial(spec: &DomainSpec, a: f64) -> Result<TetMesh> {
        if !(a > 0.0) {
            return Err(Error::Config(format!("lattice constant must be positive, got {a}")));
        }
        let s = PI / a;
        let (vertices, tets) = match spec {
            DomainSpec::IbzScFullSym => (
                scale_points(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 1.0, 1.0]], s),
                vec![[0, 1, 2, 3]],
            ),
            DomainSpec::IbzScXySym => (
                scale_points(
                    &[
                        [0.0, 0.0, 0.0],
                        [1.0, 0.0, 0.0],
                        [1.0, 1.0, 0.0],
                        [0.0, 0.0, 1.0],
                        [1.0, 0.0, 1.0],
                        [1.0, 1.0, 1.0],
                    ],
                    s,
                ),
                vec![[0, 1, 2, 5], [0, 1, 4, 5], [0, 3, 4, 5]],
            ),
            DomainSpec::Box { lo, hi } => {
                if (0..3).any(|i| !(hi[i] > lo[i])) {
                    return Err(Error::Config(format!("empty box {lo:?}..{hi:?}")));
                }
                let mut vertices = Vec::with_capacity(8);
                for idx in 0..8usize {
                    let mut p = [0.0; 3];
                    for (d, pd) in p.iter_mut().enumerate() {
                        *pd = if idx >> d & 1 == 1 { hi[d] } else { lo[d] };
                    }
                    vertices.push(p);
                }
                let mut tets = Vec::with_capacity(6);
                for perm in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
                    let v1 = 1 << perm[0];
                    let v2 = v1 | 1 << perm[1];
                    tets.push([0, v1, v2, 7]);
                }
                (vertices, tets)
            }
            DomainSpec::Explicit { vertices, tets } => (vertices.clone(), tets.clone()),
        };
        let orient = !matches!(spec, DomainSpec::Explicit { .. });
        TetMesh::from_parts(vertices, tets, orient)
    }

    /// Validates an initial mesh. With `orient`, negatively oriented tets are
    /// flipped; otherwise they are rejected.
    fn from_parts(vertices: Vec<[f64; 3]>, tets: Vec<[usize; 4]>, orient: bool) -> Result<TetMesh> {
        if tets.is_empty() {
            return Err(Error::Mesh("mesh has no tetrahedra".into()));
        }
        let scale = vertices.iter().flat_map(|p| p.iter()).fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        let mut checked = Vec::with_capacity(tets.len());
        for (t, tv) in tets.iter().enumerate() {
            let mut tv = *tv;
            if tv.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::Mesh(format!("tet {t} references a missing vertex")));
            }
            let vol = signed_volume(&tv.map(|v| vertices[v]));
            if vol.abs() <= 1e-14 * scale.powi(3) {
                return Err(Error::Mesh(format!("tet {t} is degenerate")));
            }
            if vol < 0.0 {
                if !orient {
                    return Err(Error::Mesh(format!("tet {t} is inverted")));
                }
                tv.swap(0, 1);
            }
            checked.push(tv);
        }
        let mut faces: HashMap<[usize; 3], usize> = HashMap::new();
        for tv in &checked {
            for f in LOCAL_FACES {
                *faces.entry(sorted3(f.map(|i| tv[i]))).or_default() += 1;
            }
        }
        if faces.values().any(|&c| c > 2) {
            return Err(Error::Mesh("a face is shared by more than two tets".into()));
        }
        let mut boundary_faces: Vec<[usize; 3]> = faces.iter().filter(|(_, &c)| c == 1).map(|(f, _)| *f).collect();
        boundary_faces.sort_unstable();
        let mut mesh = TetMesh {
            vertex_tets: vec![Vec::new(); vertices.len()],
            boundary: boundary_faces.iter().map(|f| f.map(|v| vertices[v])).collect(),
            vertices,
            tets: Vec::new(),
            midpoints: HashMap::new(),
            generation: 1,
            initial_volume: 0.0,
            h1: 0.0,
        };
        for tv in checked {
            mesh.push_tet(tv, 0);
        }
        // Any vertex inside another tet's edge or face breaks conformity.
        for (t, tet) in mesh.tets.iter().enumerate() {
            let p = mesh.points(t);
            for (v, &x) in mesh.vertices.iter().enumerate() {
                if tet.vertices.contains(&v) {
                    continue;
                }
                let b = barycentric(&p, x);
                if b.iter().all(|&c| c > -1e-12) && b.iter().filter(|&&c| c > 1e-12).count() < 4 {
                    return Err(Error::Mesh(format!("vertex {v} lies on the boundary of tet {t} without being one of its vertices")));
                }
            }
        }
        mesh.initial_volume = mesh.live_volume();
        mesh.h1 = mesh.live().map(|t| mesh.geometry(t).diameter).fold(0.0, f64::max);
        Ok(mesh)
    }

    fn push_tet(&mut self, vertices: [usize; 4], refinements: usize) -> usize {
        let id = self.tets.len();
        self.tets.push(Tet {
            vertices,
            refinements,
            alive: true,
            marked: false,
        });
        for v in vertices {
            self.vertex_tets[v].push(id);
        }
        id
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> [f64; 3] {
        self.vertices[v]
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn tet(&self, t: usize) -> &Tet {
        &self.tets[t]
    }

    /// Ids of all live tets, ascending.
    pub fn live(&self) -> impl Iterator<Item = usize> + '_ {
        self.tets.iter().enumerate().filter(|(_, t)| t.alive).map(|(i, _)| i)
    }

    pub fn live_ids(&self) -> Vec<usize> {
        self.live().collect()
    }

    pub fn n_live(&self) -> usize {
        self.tets.iter().filter(|t| t.alive).count()
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    /// Counts `loops` refinement loops that marked nothing.
    pub fn advance_generation(&mut self, loops: usize) {
        self.generation += loops;
    }

    /// Size of the coarsest initial element.
    pub fn h1(&self) -> f64 {
        self.h1
    }

    pub fn initial_volume(&self) -> f64 {
        self.initial_volume
    }

    /// Layer of a tet: refinement loops performed so far minus the
    /// bisections in its ancestry.
    pub fn layer(&self, t: usize) -> i64 {
        (self.generation as i64 - 1) - self.tets[t].refinements as i64
    }

    pub fn points(&self, t: usize) -> [[f64; 3]; 4] {
        self.tets[t].vertices.map(|v| self.vertices[v])
    }

    pub fn volume(&self, t: usize) -> f64 {
        signed_volume(&self.points(t))
    }

    pub fn live_volume(&self) -> f64 {
        self.live().map(|t| self.volume(t)).sum()
    }

    pub fn geometry(&self, t: usize) -> ElementGeometry {
        let p = self.points(t);
        let diameter = LOCAL_EDGES
            .iter()
            .map(|&(i, j)| norm(sub(p[i], p[j])))
            .fold(0.0, f64::max);
        let area: f64 = LOCAL_FACES
            .iter()
            .map(|f| 0.5 * norm(cross(sub(p[f[1]], p[f[0]]), sub(p[f[2]], p[f[0]]))))
            .sum();
        let volume = signed_volume(&p);
        let mut matrix = [[0.0; 3]; 3];
        for (j, pj) in p.iter().take(3).enumerate() {
            let col = sub(*pj, p[3]);
            for i in 0..3 {
                matrix[i][j] = col[i];
            }
        }
        ElementGeometry {
            diameter,
            inscribed_diameter: 6.0 * volume / area,
            matrix,
            offset: p[3],
            volume,
        }
    }

    /// The bisection edge of a tet: longest, ties broken by the smallest
    /// (min id, max id) pair. Lengths are compared squared and exactly.
    pub fn refinement_edge(&self, t: usize) -> (usize, usize) {
        let tv = self.tets[t].vertices;
        let mut best = (0, 1);
        let mut best_key = (f64::NEG_INFINITY, (0, 0));
        for (i, j) in LOCAL_EDGES {
            let d = sub(self.vertices[tv[i]], self.vertices[tv[j]]);
            let len2 = dot(d, d);
            let key = edge_key(tv[i], tv[j]);
            if len2 > best_key.0 || (len2 == best_key.0 && key < best_key.1) {
                best_key = (len2, key);
                best = (i, j);
            }
        }
        best
    }

    fn midpoint(&mut self, a: usize, b: usize) -> usize {
        let key = edge_key(a, b);
        if let Some(&m) = self.midpoints.get(&key) {
            return m;
        }
        let (pa, pb) = (self.vertices[key.0], self.vertices[key.1]);
        let m = self.vertices.len();
        self.vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1]), 0.5 * (pa[2] + pb[2])]);
        self.vertex_tets.push(Vec::new());
        self.midpoints.insert(key, m);
        m
    }

    /// Bisects one live tet at the midpoint of its refinement edge, without
    /// any closure. Returns the two children.
    pub fn bisect_element(&mut self, t: usize) -> Result<[usize; 2]> {
        if !self.tets.get(t).is_some_and(|x| x.alive) {
            return Err(Error::Mesh(format!("tet {t} is not alive")));
        }
        let (i, j) = self.refinement_edge(t);
        let tv = self.tets[t].vertices;
        let m = self.midpoint(tv[i], tv[j]);
        let r = self.tets[t].refinements + 1;
        self.tets[t].alive = false;
        let mut c1 = tv;
        c1[j] = m;
        let mut c2 = tv;
        c2[i] = m;
        Ok([self.push_tet(c1, r), self.push_tet(c2, r)])
    }

    /// Live tets that contain both `a` and `b`.
    fn live_tets_with_edge(&self, a: usize, b: usize) -> Vec<usize> {
        self.vertex_tets[a]
            .iter()
            .copied()
            .filter(|&t| self.tets[t].alive && self.tets[t].vertices.contains(&b))
            .collect()
    }

    fn has_split_edge(&self, t: usize) -> bool {
        let tv = self.tets[t].vertices;
        LOCAL_EDGES
            .iter()
            .any(|&(i, j)| self.midpoints.contains_key(&edge_key(tv[i], tv[j])))
    }

    /// Bisects every marked tet, then closes the mesh by bisecting any tet
    /// with a split edge until no hanging node remains. Advances the
    /// generation counter.
    pub fn refine_marked(&mut self, marked: &[usize]) -> Result<()> {
        for &t in marked {
            if !self.tets.get(t).is_some_and(|x| x.alive) {
                return Err(Error::Mesh(format!("marked tet {t} is not alive")));
            }
        }
        let mut queue: VecDeque<usize> = VecDeque::new();
        let mut steps = 0usize;
        let limit = CLOSURE_FACTOR * (self.n_live() + marked.len()).max(1024);
        let mut bisect = |mesh: &mut TetMesh, t: usize, queue: &mut VecDeque<usize>| -> Result<()> {
            steps += 1;
            if steps > limit {
                return Err(Error::Internal("refinement closure did not terminate".into()));
            }
            let (i, j) = mesh.refinement_edge(t);
            let tv = mesh.tets[t].vertices;
            let children = mesh.bisect_element(t)?;
            queue.extend(mesh.live_tets_with_edge(tv[i], tv[j]));
            queue.extend(children);
            Ok(())
        };
        for &t in marked {
            // A marked tet may already have been split by an earlier closure.
            if self.tets[t].alive {
                bisect(self, t, &mut queue)?;
            }
        }
        while let Some(t) = queue.pop_front() {
            if self.tets[t].alive && self.has_split_edge(t) {
                bisect(self, t, &mut queue)?;
            }
        }
        self.generation += 1;
        Ok(())
    }

    /// Bisects every live tet once (plus closure).
    pub fn refine_uniform(&mut self) -> Result<()> {
        let all = self.live_ids();
        self.refine_marked(&all)
    }

    pub fn set_marks(&mut self, marked: &[usize]) {
        for t in &mut self.tets {
            t.marked = false;
        }
        for &t in marked {
            self.tets[t].marked = true;
        }
    }

    pub fn is_marked(&self, t: usize) -> bool {
        self.tets[t].marked
    }

    fn on_boundary(&self, face: &[[f64; 3]; 3]) -> bool {
        let scale = self.h1.max(1e-300);
        self.boundary.iter().any(|b| {
            face.iter().all(|&x| {
                let (l, dist) = triangle_coords(b, x);
                dist <= 1e-10 * scale && l.iter().all(|&c| c >= -1e-10)
            })
        })
    }

    pub fn check_conformity(&self) -> ConformityReport {
        let mut faces: HashMap<[usize; 3], usize> = HashMap::new();
        let mut report = ConformityReport::default();
        for t in self.live() {
            let tv = self.tets[t].vertices;
            for f in LOCAL_FACES {
                *faces.entry(sorted3(f.map(|i| tv[i]))).or_default() += 1;
            }
            report.max_shape_ratio = report.max_shape_ratio.max(self.geometry(t).shape_ratio());
            for (i, j) in LOCAL_EDGES {
                let key = edge_key(tv[i], tv[j]);
                if let Some(&m) = self.midpoints.get(&key) {
                    report.hanging_nodes.push((m, [key.0, key.1]));
                }
            }
        }
        let mut sorted: Vec<_> = faces.into_iter().collect();
        sorted.sort_unstable();
        for (f, count) in sorted {
            if count > 2 {
                report.overshared_faces.push(f);
            } else if count == 1 && !self.on_boundary(&f.map(|v| self.vertices[v])) {
                report.orphan_faces.push(f);
            }
        }
        report.hanging_nodes.sort_unstable();
        report.hanging_nodes.dedup();
        report
    }

    /// Finds a live tet containing `k` by scanning all live tets.
    pub fn locate_point(&self, k: WaveVector) -> Result<(usize, [f64; 4])> {
        let mut best: Option<(usize, [f64; 4], f64)> = None;
        for t in self.live() {
            let b = barycentric(&self.points(t), k);
            let worst = b.iter().copied().fold(f64::INFINITY, f64::min);
            if worst >= 0.0 {
                return Ok((t, b));
            }
            if best.as_ref().is_none_or(|x| worst > x.2) {
                best = Some((t, b, worst));
            }
        }
        match best {
            Some((t, b, worst)) if worst >= -LOCATE_TOL => Ok((t, b)),
            _ => Err(Error::Domain { point: k }),
        }
    }

    pub fn snapshot(&self) -> MeshSnapshot {
        let live = self.live_ids();
        let mut midpoints: Vec<[usize; 3]> = self.midpoints.iter().map(|(&(a, b), &m)| [a, b, m]).collect();
        midpoints.sort_unstable();
        MeshSnapshot {
            vertices: self.vertices.clone(),
            tets: live.iter().map(|&t| self.tets[t].vertices).collect(),
            layers: live.iter().map(|&t| self.layer(t)).collect(),
            marks: live.iter().map(|&t| self.tets[t].marked).collect(),
            generation: self.generation,
            boundary: self.boundary.clone(),
            midpoints,
            initial_volume: self.initial_volume,
            h1: self.h1,
        }
    }

    /// Rebuilds a mesh from a snapshot. Tet ids are renumbered to the
    /// snapshot order.
    pub fn from_snapshot(s: &MeshSnapshot) -> Result<TetMesh> {
        if s.tets.len() != s.layers.len() || s.tets.len() != s.marks.len() {
            return Err(Error::Mesh("snapshot arrays have inconsistent lengths".into()));
        }
        let mut mesh = TetMesh {
            vertices: s.vertices.clone(),
            tets: Vec::with_capacity(s.tets.len()),
            midpoints: s.midpoints.iter().map(|m| ((m[0], m[1]), m[2])).collect(),
            vertex_tets: vec![Vec::new(); s.vertices.len()],
            boundary: s.boundary.clone(),
            generation: s.generation,
            initial_volume: s.initial_volume,
            h1: s.h1,
        };
        for ((tv, &layer), &marked) in s.tets.iter().zip(&s.layers).zip(&s.marks) {
            if tv.iter().any(|&v| v >= s.vertices.len()) {
                return Err(Error::Mesh("snapshot tet references a missing vertex".into()));
            }
            let r = s.generation as i64 - 1 - layer;
            if r < 0 {
                return Err(Error::Mesh("snapshot layer exceeds its generation".into()));
            }
            let id = mesh.push_tet(*tv, r as usize);
            mesh.tets[id].marked = marked;
        }
        Ok(mesh)
    }
}

/// Serialized form of a mesh: its live tets with their layers and marks,
/// plus what is needed to keep refining it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSnapshot {
    pub vertices: Vec<[f64; 3]>,
    pub tets: Vec<[usize; 4]>,
    pub layers: Vec<i64>,
    pub marks: Vec<bool>,
    pub generation: usize,
    pub boundary: Vec<[[f64; 3]; 3]>,
    pub midpoints: Vec<[usize; 3]>,
    pub initial_volume: f64,
    pub h1: f64,
}

/// Point locator for repeated queries on a fixed mesh.
///
/// Small meshes are scanned; larger ones are walked from the previous hit
/// across face neighbours, falling back to a scan.
#[derive(Debug, Clone)]
pub struct Locator {
    tets: Vec<usize>,
    points: Vec<[[f64; 3]; 4]>,
    neighbors: Vec<[Option<usize>; 4]>,
}

impl Locator {
    pub fn new(mesh: &TetMesh) -> Locator {
        let tets = mesh.live_ids();
        let points: Vec<_> = tets.iter().map(|&t| mesh.points(t)).collect();
        let mut owner: HashMap<[usize; 3], Vec<(usize, usize)>> = HashMap::new();
        for (slot, &t) in tets.iter().enumerate() {
            let tv = mesh.tet(t).vertices;
            for (fi, f) in LOCAL_FACES.iter().enumerate() {
                owner.entry(sorted3(f.map(|i| tv[i]))).or_default().push((slot, fi));
            }
        }
        let mut neighbors = vec![[None; 4]; tets.len()];
        for pair in owner.values() {
            if let [(s1, f1), (s2, f2)] = pair[..] {
                neighbors[s1][f1] = Some(s2);
                neighbors[s2][f2] = Some(s1);
            }
        }
        Locator { tets, points, neighbors }
    }

    pub fn len(&self) -> usize {
        self.tets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tets.is_empty()
    }

    /// Locates `k`; `hint` is a slot returned by an earlier call. Returns
    /// (slot, tet id, barycentric coordinates).
    pub fn locate(&self, k: WaveVector, hint: Option<usize>) -> Result<(usize, usize, [f64; 4])> {
        if self.tets.len() >= SCAN_LIMIT {
            let mut slot = hint.filter(|&s| s < self.tets.len()).unwrap_or(0);
            for _ in 0..self.tets.len() {
                let b = barycentric(&self.points[slot], k);
                let (worst_i, worst) =
                    b.iter().copied().enumerate().fold((0, f64::INFINITY), |m, (i, x)| if x < m.1 { (i, x) } else { m });
                if worst >= -LOCATE_TOL {
                    return Ok((slot, self.tets[slot], b));
                }
                match self.neighbors[slot][worst_i] {
                    Some(next) => slot = next,
                    None => break,
                }
            }
        }
        self.scan(k)
    }

    fn scan(&self, k: WaveVector) -> Result<(usize, usize, [f64; 4])> {
        let mut best: Option<(usize, [f64; 4], f64)> = None;
        for (slot, p) in self.points.iter().enumerate() {
            let b = barycentric(p, k);
            let worst = b.iter().copied().fold(f64::INFINITY, f64::min);
            if worst >= 0.0 {
                return Ok((slot, self.tets[slot], b));
            }
            if best.as_ref().is_none_or(|x| worst > x.2) {
                best = Some((slot, b, worst));
            }
        }
        match best {
            Some((slot, b, worst)) if worst >= -LOCATE_TOL => Ok((slot, self.tets[slot], b)),
            _ => Err(Error::Domain { point: k }),
        }
    }
}

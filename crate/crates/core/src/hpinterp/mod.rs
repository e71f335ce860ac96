//! Degree assignment and the conforming piecewise-polynomial interpolant of
//! selected bands over an adapted mesh.

mod basis;
mod lobatto;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use basis::{
    edge_weights, face_weights, internal_weights, lebesgue_estimate, local_interpolate, random_barycentric,
    reference_points, shape_basis, Degrees, ReferenceBasis, ShapeFn, EDGES, FACES, MAX_CONDITION,
};
pub use lobatto::lobatto_nodes;

use crate::adapt::VertexCache;
use crate::bzmesh::{Locator, MeshSnapshot, TetMesh};
use crate::oracle::BandOracle;
use crate::par::{self, Exec};
use crate::{Error, Result, WaveVector};

/// Default cap on element degrees.
pub const DEFAULT_DEGREE_CAP: usize = 8;

/// Degrees per live element, face and edge.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeMap {
    pub mu: f64,
    pub elements: HashMap<usize, usize>,
    pub faces: HashMap<[usize; 3], usize>,
    pub edges: HashMap<(usize, usize), usize>,
}

fn face_key(tv: &[usize; 4], f: usize) -> [usize; 3] {
    let mut k = FACES[f].map(|i| tv[i]);
    k.sort_unstable();
    k
}

fn edge_key(tv: &[usize; 4], e: usize) -> (usize, usize) {
    let (a, b) = EDGES[e];
    (tv[a].min(tv[b]), tv[a].max(tv[b]))
}

impl DegreeMap {
    /// Degrees of one element in local order.
    pub fn element_degrees(&self, mesh: &TetMesh, t: usize) -> Degrees {
        let tv = mesh.tet(t).vertices;
        Degrees {
            n: self.elements[&t],
            p: [0, 1, 2, 3].map(|f| self.faces[&face_key(&tv, f)]),
            q: [0, 1, 2, 3, 4, 5].map(|e| self.edges[&edge_key(&tv, e)]),
        }
    }

    /// All live elements at degree `n`.
    pub fn uniform(mesh: &TetMesh, n: usize) -> DegreeMap {
        let elements = mesh.live().map(|t| (t, n)).collect();
        min_rule(mesh, elements, 0.0)
    }
}

/// n_T = max(2, ⌈μ ℓ_T⌉) capped at `cap` for unmarked elements and 2 for
/// marked ones; faces and edges take the minimum over their elements.
pub fn assign_degrees(mesh: &TetMesh, mu: f64, cap: usize) -> Result<DegreeMap> {
    if !(mu > 0.0) {
        return Err(Error::Config(format!("mu must be positive, got {mu}")));
    }
    if cap < 2 {
        return Err(Error::Config(format!("degree cap must be at least 2, got {cap}")));
    }
    let elements = mesh
        .live()
        .map(|t| {
            let n = if mesh.is_marked(t) {
                2
            } else {
                let raw = (mu * mesh.layer(t) as f64).ceil();
                (raw.max(2.0) as usize).min(cap)
            };
            (t, n)
        })
        .collect();
    Ok(min_rule(mesh, elements, mu))
}

fn min_rule(mesh: &TetMesh, elements: HashMap<usize, usize>, mu: f64) -> DegreeMap {
    let mut faces: HashMap<[usize; 3], usize> = HashMap::new();
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    for t in mesh.live() {
        let n = elements[&t];
        let tv = mesh.tet(t).vertices;
        for f in 0..4 {
            let d = faces.entry(face_key(&tv, f)).or_insert(n);
            *d = (*d).min(n);
        }
        for e in 0..6 {
            let d = edges.entry(edge_key(&tv, e)).or_insert(n);
            *d = (*d).min(n);
        }
    }
    DegreeMap {
        mu,
        elements,
        faces,
        edges,
    }
}

/// Interpolation data of one element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementInterp {
    pub tet: usize,
    pub degrees: Degrees,
    /// Coefficients per reconstructed band.
    pub coefficients: Vec<Vec<f64>>,
}

/// Where the interpolant's sample values came from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    /// Distinct sampling points N.
    pub n_points: usize,
    /// Values taken from the vertex cache.
    pub from_cache: usize,
    pub oracle_calls: usize,
}

/// Serialized interpolant: the mesh, per-element degrees and coefficients,
/// and the sampling points with their band values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolantExport {
    pub bands: Vec<usize>,
    pub mesh: MeshSnapshot,
    pub elements: Vec<ElementInterp>,
    pub points: Vec<[f64; 3]>,
    /// `values[i][b]` is band `bands[b]` at `points[i]`.
    pub values: Vec<Vec<f64>>,
    pub stats: SampleStats,
}

#[derive(Debug, Clone)]
pub struct Interpolant {
    data: InterpolantExport,
    bases: Vec<ReferenceBasis>,
    slot_of_tet: HashMap<usize, usize>,
    locator: Locator,
}

enum PointKey {
    Vertex(usize),
    Edge((usize, usize)),
    Face([usize; 3]),
    Interior,
}

/// Builds the point table and returns, per element in `live` order, the
/// global point indices and the element-local barycentric coordinates of its
/// sampling points in basis order.
struct PointTable {
    coords: Vec<[f64; 3]>,
    vertex_of: Vec<Option<usize>>,
    element_points: Vec<(Vec<usize>, Vec<[f64; 4]>)>,
}

fn point_table(mesh: &TetMesh, live: &[usize], degrees: &[Degrees]) -> PointTable {
    let mut coords: Vec<[f64; 3]> = Vec::new();
    let mut vertex_of: Vec<Option<usize>> = Vec::new();
    let mut vertex_idx: HashMap<usize, usize> = HashMap::new();
    let mut edge_idx: HashMap<(usize, usize), usize> = HashMap::new();
    let mut face_idx: HashMap<[usize; 3], usize> = HashMap::new();
    let mut element_points = Vec::with_capacity(live.len());
    let combine = |ids: &[usize], w: &[f64]| -> [f64; 3] {
        let mut x = [0.0; 3];
        for (&v, &wi) in ids.iter().zip(w) {
            let p = mesh.vertex(v);
            for d in 0..3 {
                x[d] += wi * p[d];
            }
        }
        x
    };
    for (&t, deg) in live.iter().zip(degrees) {
        let tv = mesh.tet(t).vertices;
        let local = |v: usize| tv.iter().position(|&x| x == v).unwrap();
        let mut ids = Vec::with_capacity(deg.dimension());
        let mut bary = Vec::with_capacity(deg.dimension());
        let mut push_block = |key: PointKey,
                              ids: &mut Vec<usize>,
                              bary: &mut Vec<[f64; 4]>,
                              coords: &mut Vec<[f64; 3]>,
                              vertex_of: &mut Vec<Option<usize>>| {
            // Canonical vertex order and weights of the entity's points.
            let (verts, weights): (Vec<usize>, Vec<Vec<f64>>) = match key {
                PointKey::Vertex(v) => (vec![v], vec![vec![1.0]]),
                PointKey::Edge((a, b)) => {
                    let e = EDGES.iter().position(|&(i, j)| {
                        (tv[i] == a && tv[j] == b) || (tv[i] == b && tv[j] == a)
                    });
                    let q = deg.q[e.unwrap()];
                    (vec![a, b], edge_weights(q).into_iter().map(|w| w.to_vec()).collect())
                }
                PointKey::Face(f) => {
                    let fi = (0..4).position(|i| face_key(&tv, i) == f).unwrap();
                    (f.to_vec(), face_weights(deg.p[fi]).into_iter().map(|w| w.to_vec()).collect())
                }
                PointKey::Interior => (tv.to_vec(), internal_weights(deg.n).into_iter().map(|w| w.to_vec()).collect()),
            };
            let existing = match key {
                PointKey::Vertex(v) => vertex_idx.get(&v).copied(),
                PointKey::Edge(e) => edge_idx.get(&e).copied(),
                PointKey::Face(f) => face_idx.get(&f).copied(),
                PointKey::Interior => None,
            };
            let start = existing.unwrap_or_else(|| {
                let start = coords.len();
                for w in &weights {
                    coords.push(combine(&verts, w));
                    vertex_of.push(match key {
                        PointKey::Vertex(v) => Some(v),
                        _ => None,
                    });
                }
                match key {
                    PointKey::Vertex(v) => {
                        vertex_idx.insert(v, start);
                    }
                    PointKey::Edge(e) => {
                        edge_idx.insert(e, start);
                    }
                    PointKey::Face(f) => {
                        face_idx.insert(f, start);
                    }
                    PointKey::Interior => {}
                }
                start
            });
            for (i, w) in weights.iter().enumerate() {
                ids.push(start + i);
                let mut l = [0.0; 4];
                for (&v, &wi) in verts.iter().zip(w) {
                    l[local(v)] = wi;
                }
                bary.push(l);
            }
        };
        for &v in &tv {
            push_block(PointKey::Vertex(v), &mut ids, &mut bary, &mut coords, &mut vertex_of);
        }
        for e in 0..6 {
            push_block(PointKey::Edge(edge_key(&tv, e)), &mut ids, &mut bary, &mut coords, &mut vertex_of);
        }
        for f in 0..4 {
            push_block(PointKey::Face(face_key(&tv, f)), &mut ids, &mut bary, &mut coords, &mut vertex_of);
        }
        push_block(PointKey::Interior, &mut ids, &mut bary, &mut coords, &mut vertex_of);
        element_points.push((ids, bary));
    }
    PointTable {
        coords,
        vertex_of,
        element_points,
    }
}

/// Builds the global interpolant of `bands` (1-based) on the live mesh.
///
/// Each distinct sampling point is evaluated once. Vertex values come from
/// `cache` when it holds enough bands.
pub fn build_interpolant(
    mesh: &TetMesh,
    degrees: &DegreeMap,
    oracle: &dyn BandOracle,
    cache: Option<&VertexCache>,
    bands: &[usize],
    exec: Exec,
) -> Result<Interpolant> {
    if bands.is_empty() || bands.contains(&0) {
        return Err(Error::Config("bands must be non-empty and 1-based".into()));
    }
    let max_band = *bands.iter().max().unwrap();
    if max_band > oracle.max_bands() {
        return Err(Error::Config(format!(
            "band {max_band} requested but the oracle provides {}",
            oracle.max_bands()
        )));
    }
    let live = mesh.live_ids();
    let element_degrees: Vec<Degrees> = live.iter().map(|&t| degrees.element_degrees(mesh, t)).collect();
    let table = point_table(mesh, &live, &element_degrees);
    let cached = |i: usize| -> Option<Vec<f64>> {
        let v = table.vertex_of[i]?;
        let s = cache?.get(v)?;
        (s.values.len() >= max_band).then(|| bands.iter().map(|&q| s.value(q)).collect())
    };
    let from_cache: Vec<Option<Vec<f64>>> = (0..table.coords.len()).map(cached).collect();
    let need: Vec<usize> = (0..table.coords.len()).filter(|&i| from_cache[i].is_none()).collect();
    let fresh = par::try_map(exec, &need, |&i| {
        oracle
            .values(table.coords[i], max_band)
            .map(|v| bands.iter().map(|&q| v[q - 1]).collect::<Vec<f64>>())
    })?;
    let mut values: Vec<Vec<f64>> = from_cache.into_iter().map(|v| v.unwrap_or_default()).collect();
    for (&i, v) in need.iter().zip(fresh) {
        values[i] = v;
    }
    let stats = SampleStats {
        n_points: table.coords.len(),
        from_cache: table.coords.len() - need.len(),
        oracle_calls: need.len(),
    };
    let slots: Vec<usize> = (0..live.len()).collect();
    let elements = par::try_map(exec, &slots, |&s| {
        let basis = shape_basis(element_degrees[s]);
        let (ids, bary) = &table.element_points[s];
        let local_values: Vec<Vec<f64>> = ids.iter().map(|&i| values[i].clone()).collect();
        let coefficients = local_interpolate(&basis, bary, &local_values, live[s])?;
        Ok::<_, Error>(ElementInterp {
            tet: live[s],
            degrees: element_degrees[s],
            coefficients,
        })
    })?;
    let data = InterpolantExport {
        bands: bands.to_vec(),
        mesh: mesh.snapshot(),
        elements,
        points: table.coords,
        values,
        stats,
    };
    Ok(Interpolant::assemble(data, Locator::new(mesh)))
}

impl Interpolant {
    fn assemble(data: InterpolantExport, locator: Locator) -> Interpolant {
        let bases = data.elements.iter().map(|e| shape_basis(e.degrees)).collect();
        let slot_of_tet = data.elements.iter().enumerate().map(|(s, e)| (e.tet, s)).collect();
        Interpolant {
            data,
            bases,
            slot_of_tet,
            locator,
        }
    }

    pub fn export(&self) -> &InterpolantExport {
        &self.data
    }

    /// Rebuilds an interpolant from its serialized form. Element tet ids are
    /// positions in the snapshot's tet list.
    pub fn from_export(data: InterpolantExport) -> Result<Interpolant> {
        let mesh = TetMesh::from_snapshot(&data.mesh)?;
        if data.elements.len() != mesh.n_live() {
            return Err(Error::Config("interpolant has the wrong number of elements".into()));
        }
        let mut data = data;
        let mut elements = data.elements.clone();
        for (i, e) in elements.iter_mut().enumerate() {
            e.tet = i;
        }
        let original = std::mem::replace(&mut data.elements, elements);
        let mut interp = Interpolant::assemble(data, Locator::new(&mesh));
        interp.data.elements = original;
        interp.slot_of_tet = (0..interp.data.elements.len()).map(|s| (s, s)).collect();
        Ok(interp)
    }

    pub fn bands(&self) -> &[usize] {
        &self.data.bands
    }

    pub fn stats(&self) -> SampleStats {
        self.data.stats
    }

    /// Number of distinct sampling points N.
    pub fn n_points(&self) -> usize {
        self.data.stats.n_points
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.data.points
    }

    /// Sampled values of the `b`-th reconstructed band at every point.
    pub fn point_values(&self, b: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.values.iter().map(move |v| v[b])
    }

    pub fn elements(&self) -> &[ElementInterp] {
        &self.data.elements
    }

    fn band_slot(&self, band: usize) -> Result<usize> {
        self.data
            .bands
            .iter()
            .position(|&b| b == band)
            .ok_or_else(|| Error::Config(format!("band {band} was not reconstructed")))
    }

    /// Value of element `slot`'s polynomial at barycentric `l`.
    pub fn eval_element(&self, slot: usize, l: &[f64; 4], band: usize) -> Result<f64> {
        let b = self.band_slot(band)?;
        Ok(self.bases[slot].combine(&self.data.elements[slot].coefficients[b], l))
    }

    /// Slot of the element built on mesh tet `t`.
    pub fn slot(&self, t: usize) -> Option<usize> {
        self.slot_of_tet.get(&t).copied()
    }

    pub fn evaluate(&self, k: WaveVector, band: usize) -> Result<f64> {
        let b = self.band_slot(band)?;
        let (_, t, l) = self.locator.locate(k, None)?;
        let slot = self.slot_of_tet[&t];
        Ok(self.bases[slot].combine(&self.data.elements[slot].coefficients[b], &l))
    }

    /// All reconstructed bands at `k`, in `bands()` order.
    pub fn evaluate_all(&self, k: WaveVector) -> Result<Vec<f64>> {
        let (_, t, l) = self.locator.locate(k, None)?;
        let slot = self.slot_of_tet[&t];
        let phi = self.bases[slot].eval_all(&l);
        Ok(self.data.elements[slot]
            .coefficients
            .iter()
            .map(|c| c.iter().zip(&phi).map(|(a, p)| a * p).sum())
            .collect())
    }

    pub fn evaluate_many(&self, ks: &[WaveVector], exec: Exec) -> Result<Vec<Vec<f64>>> {
        par::try_map(exec, ks, |&k| self.evaluate_all(k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapt::{adapt_loop, AdaptConfig};
    use crate::bzmesh::DomainSpec;
    use crate::oracle::EmptyLattice;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degree_law() {
        let mut mesh = TetMesh::build_initial(&DomainSpec::Box { lo: [0.0; 3], hi: [1.0; 3] }, 1.0).unwrap();
        for _ in 0..5 {
            mesh.refine_marked(&[]).unwrap();
        }
        let d = assign_degrees(&mesh, 1.0, 8).unwrap();
        assert!(mesh.live().all(|t| d.elements[&t] == 5));
        let live = mesh.live_ids();
        mesh.set_marks(&live[..1]);
        let d = assign_degrees(&mesh, 1.0, 8).unwrap();
        assert_eq!(d.elements[&live[0]], 2);
        // Faces and edges touching the marked element drop to 2.
        let tv = mesh.tet(live[0]).vertices;
        for f in 0..4 {
            assert_eq!(d.faces[&face_key(&tv, f)], 2);
        }
        for t in mesh.live() {
            let deg = d.element_degrees(&mesh, t);
            deg.validate().unwrap();
        }
    }

    #[test]
    fn quadratic_band_is_exact() {
        let spec = DomainSpec::Box {
            lo: [0.1, 0.1, 0.1],
            hi: [0.6, 0.5, 0.4],
        };
        let mut mesh = TetMesh::build_initial(&spec, 1.0).unwrap();
        mesh.refine_uniform().unwrap();
        let oracle = EmptyLattice::new(1.0, 2);
        let d = DegreeMap::uniform(&mesh, 2);
        let interp = build_interpolant(&mesh, &d, &oracle, None, &[1], Exec::Sequential).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let k = [rng.gen_range(0.1..0.6), rng.gen_range(0.1..0.5), rng.gen_range(0.1..0.4)];
            let want = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            assert!((interp.evaluate(k, 1).unwrap() - want).abs() <= 1e-9);
        }
    }

    #[test]
    fn distinct_points_counted_once() {
        let mesh = TetMesh::build_initial(&DomainSpec::Box { lo: [0.0; 3], hi: [1.0; 3] }, 1.0).unwrap();
        let oracle = EmptyLattice::new(1.0, 2);
        let d = DegreeMap::uniform(&mesh, 4);
        let interp = build_interpolant(&mesh, &d, &oracle, None, &[1, 2], Exec::Sequential).unwrap();
        // Brute-force union of element point sets.
        let mut all: Vec<[f64; 3]> = Vec::new();
        for t in mesh.live() {
            let g = mesh.geometry(t);
            for l in reference_points(d.element_degrees(&mesh, t)) {
                let x = g.map([l[0], l[1], l[2]]);
                if !all.iter().any(|y| (0..3).all(|i| (x[i] - y[i]).abs() < 1e-12)) {
                    all.push(x);
                }
            }
        }
        assert_eq!(interp.n_points(), all.len());
        assert_eq!(interp.stats().oracle_calls, all.len());
    }

    #[test]
    fn continuity_across_faces() {
        let spec = DomainSpec::Box {
            lo: [0.2, 0.1, 0.3],
            hi: [1.4, 1.0, 1.1],
        };
        let mut mesh = TetMesh::build_initial(&spec, 1.0).unwrap();
        mesh.refine_uniform().unwrap();
        mesh.refine_uniform().unwrap();
        for _ in 0..4 {
            mesh.refine_marked(&[]).unwrap();
        }
        let live = mesh.live_ids();
        let marked: Vec<usize> = live.iter().copied().step_by(3).collect();
        mesh.set_marks(&marked);
        let oracle = EmptyLattice::new(1.0, 2);
        let d = assign_degrees(&mesh, 1.0, 8).unwrap();
        let interp = build_interpolant(&mesh, &d, &oracle, None, &[1, 2], Exec::Sequential).unwrap();
        let mut owners: HashMap<[usize; 3], Vec<(usize, usize)>> = HashMap::new();
        for t in mesh.live() {
            let tv = mesh.tet(t).vertices;
            for f in 0..4 {
                owners.entry(face_key(&tv, f)).or_default().push((t, f));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut checked = 0;
        let mut mixed = 0;
        let mut keys: Vec<_> = owners.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let pair = &owners[&key];
            if pair.len() != 2 {
                continue;
            }
            let (s0, s1) = (interp.slot(pair[0].0).unwrap(), interp.slot(pair[1].0).unwrap());
            if interp.elements()[s0].degrees.n != interp.elements()[s1].degrees.n {
                mixed += 1;
            }
            for _ in 0..10 {
                let w = random_barycentric(&mut rng);
                let w = [w[0], w[1], w[2] + w[3]];
                let side = |(t, _): (usize, usize)| {
                    let tv = mesh.tet(t).vertices;
                    let mut l = [0.0; 4];
                    for (i, &v) in key.iter().enumerate() {
                        l[tv.iter().position(|&x| x == v).unwrap()] = w[i];
                    }
                    l
                };
                for band in [1, 2] {
                    let a = interp.eval_element(s0, &side(pair[0]), band).unwrap();
                    let b = interp.eval_element(s1, &side(pair[1]), band).unwrap();
                    assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "face {key:?}: {a} vs {b}");
                }
            }
            checked += 1;
        }
        assert!(checked > 0);
        assert!(mixed > 0, "no face between different degrees was exercised");
    }

    #[test]
    fn exact_at_sampling_points_and_round_trip() {
        let mesh0 = TetMesh::build_initial(&DomainSpec::IbzScFullSym, 1.0).unwrap();
        let oracle = EmptyLattice::new(1.0, 2);
        let cfg = AdaptConfig {
            max_loops: 3,
            band: 2,
            ..AdaptConfig::default()
        };
        let out = adapt_loop(mesh0, &oracle, &cfg, Exec::Parallel).unwrap();
        let d = assign_degrees(&out.mesh, 1.0, 8).unwrap();
        let interp = build_interpolant(&out.mesh, &d, &oracle, Some(&out.cache), &[2, 3], Exec::Parallel).unwrap();
        assert!(interp.stats().from_cache > 0);
        for (i, &k) in interp.points().iter().enumerate() {
            let vals = interp.evaluate_all(k).unwrap();
            for b in 0..2 {
                let want = interp.export().values[i][b];
                assert!((vals[b] - want).abs() <= 1e-10 * (1.0 + want.abs()));
            }
        }
        let json = serde_json::to_string(interp.export()).unwrap();
        let back = Interpolant::from_export(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(serde_json::to_string(back.export()).unwrap(), json);
        let k = interp.points()[interp.n_points() / 2];
        assert_eq!(back.evaluate(k, 2).unwrap(), interp.evaluate(k, 2).unwrap());
        assert!(matches!(interp.evaluate([10.0, 0.0, 0.0], 2), Err(Error::Domain { .. })));
    }
}

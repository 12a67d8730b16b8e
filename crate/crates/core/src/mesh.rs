//! Unstructured conforming triangulations: loading, uniform refinement,
//! triangle classification against the coarse mesh, and entity-count
//! formulas.

use crate::geometry::{cross2, point_on_segment, Pt};
use crate::scalar::Real;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::io::Read;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("failed to parse mesh JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("failed to read mesh: {0}")]
    Io(#[from] std::io::Error),
    #[error("triangle {tri} references vertex {vertex} out of range")]
    VertexOutOfRange { tri: usize, vertex: usize },
    #[error("vertices {0} and {1} coincide within tolerance")]
    DuplicateVertices(usize, usize),
    #[error("triangle {0} has (near-)zero area")]
    ZeroAreaTriangle(usize),
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonManifoldEdge(usize, usize),
    #[error("vertex {vertex} hangs on the interior of edge ({a}, {b})")]
    HangingVertex { vertex: usize, a: usize, b: usize },
    #[error("mesh is not simply connected (V - E + T = {0}, expected 1)")]
    NotSimplyConnected(isize),
    #[error("refinement level must be at least 1")]
    InvalidLevel,
    #[error("refined mesh is not derived from the given coarse mesh")]
    InconsistentRefinement,
}

/// Entity counts of a triangulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub vertices: usize,
    pub edges: usize,
    pub boundary_edges: usize,
    pub triangles: usize,
}

/// A conforming triangulation of a simply connected planar domain.
///
/// Triangles are counterclockwise. Edges are stored with sorted vertex
/// pairs, listed in lexicographic order, so downstream index maps are
/// reproducible.
#[derive(Debug, Clone)]
pub struct Triangulation<S: Real> {
    pub vertices: Vec<Pt<S>>,
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<[usize; 2]>,
    pub edge_boundary: Vec<bool>,
    /// Adjacent triangles per edge; boundary edges have one entry.
    pub edge_triangles: Vec<[Option<usize>; 2]>,
    /// Global edge index of local edge `k` = (corner k, corner k+1).
    pub triangle_edges: Vec<[usize; 3]>,
    /// Neighbor across local edge `k`, if any.
    pub triangle_neighbors: Vec<[Option<usize>; 3]>,
    /// Index of the coarse-mesh triangle each triangle came from (identity
    /// for an unrefined mesh).
    pub macro_origin: Vec<usize>,
    /// Classification r in {0, 1, 2}: the maximum number of a triangle's
    /// vertices lying on a single coarse-mesh edge.
    pub class_r: Vec<u8>,
}

#[derive(Deserialize)]
struct MeshJson {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
}

impl<S: Real> Triangulation<S> {
    /// Parses and validates a mesh from the JSON wire format
    /// `{"vertices": [[x,y],...], "triangles": [[i,j,k],...]}`.
    pub fn load_mesh<R: Read>(reader: R) -> Result<Self, MeshError> {
        let json: MeshJson = serde_json::from_reader(reader)?;
        let vertices: Vec<Pt<S>> = json
            .vertices
            .iter()
            .map(|&[x, y]| Pt::new(S::of(x), S::of(y)))
            .collect();
        Self::from_parts(vertices, json.triangles)
    }

    pub fn load_mesh_from_path(path: &std::path::Path) -> Result<Self, MeshError> {
        Self::load_mesh(std::fs::File::open(path)?)
    }

    /// Builds a triangulation from raw vertices and triangles with full
    /// validation: winding is normalized, duplicate/hanging vertices and
    /// non-manifold edges are rejected, and the domain must be simply
    /// connected.
    pub fn from_parts(
        vertices: Vec<Pt<S>>,
        mut triangles: Vec<[usize; 3]>,
    ) -> Result<Self, MeshError> {
        let n_v = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= n_v {
                    return Err(MeshError::VertexOutOfRange { tri: t, vertex: v });
                }
            }
        }
        // Duplicate vertices within 1e-12 of the bounding-box diameter.
        let diam = bbox_diameter(&vertices);
        let tol = S::of(1e-12) * diam;
        for i in 0..n_v {
            for j in (i + 1)..n_v {
                if (vertices[i] - vertices[j]).norm() <= tol {
                    return Err(MeshError::DuplicateVertices(i, j));
                }
            }
        }
        // Normalize winding; reject degenerate triangles.
        for (t, tri) in triangles.iter_mut().enumerate() {
            let area2 = cross2(
                &vertices[tri[0]],
                &vertices[tri[1]],
                &vertices[tri[2]],
            );
            let scale = max_edge_len(&vertices, tri);
            if area2.abs() <= S::of(1e-12) * scale * scale {
                return Err(MeshError::ZeroAreaTriangle(t));
            }
            if area2 < S::zero() {
                tri.swap(1, 2);
            }
        }
        let mut mesh = Self::derive_topology(vertices, triangles)?;
        // Hanging vertices: any vertex lying strictly inside another edge.
        for v in 0..mesh.vertices.len() {
            for &[a, b] in &mesh.edges {
                if v == a || v == b {
                    continue;
                }
                let pa = mesh.vertices[a];
                let pb = mesh.vertices[b];
                let len = (pb - pa).norm();
                let p = mesh.vertices[v];
                if point_on_segment(&pa, &pb, &p, S::of(1e-12) * len)
                    && (p - pa).norm() > S::of(1e-9) * len
                    && (p - pb).norm() > S::of(1e-9) * len
                {
                    return Err(MeshError::HangingVertex { vertex: v, a, b });
                }
            }
        }
        let euler = mesh.vertices.len() as isize - mesh.edges.len() as isize
            + mesh.triangles.len() as isize;
        if euler != 1 {
            return Err(MeshError::NotSimplyConnected(euler));
        }
        mesh.macro_origin = (0..mesh.triangles.len()).collect();
        mesh.class_r = vec![2; mesh.triangles.len()];
        Ok(mesh)
    }

    /// Derives edges, boundary flags, and adjacency. Assumes vertices and
    /// winding are already valid (used internally by refinement).
    fn derive_topology(
        vertices: Vec<Pt<S>>,
        triangles: Vec<[usize; 3]>,
    ) -> Result<Self, MeshError> {
        let mut edge_map: BTreeMap<[usize; 2], Vec<(usize, usize)>> = BTreeMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                let key = if a < b { [a, b] } else { [b, a] };
                edge_map.entry(key).or_default().push((t, k));
            }
        }
        let mut edges = Vec::with_capacity(edge_map.len());
        let mut edge_boundary = Vec::with_capacity(edge_map.len());
        let mut edge_triangles = Vec::with_capacity(edge_map.len());
        let mut triangle_edges = vec![[usize::MAX; 3]; triangles.len()];
        let mut triangle_neighbors = vec![[None; 3]; triangles.len()];
        for (key, incident) in &edge_map {
            if incident.len() > 2 {
                return Err(MeshError::NonManifoldEdge(key[0], key[1]));
            }
            let e = edges.len();
            edges.push(*key);
            edge_boundary.push(incident.len() == 1);
            let mut adj = [None, None];
            for (slot, &(t, k)) in incident.iter().enumerate() {
                adj[slot] = Some(t);
                triangle_edges[t][k] = e;
            }
            edge_triangles.push(adj);
            if incident.len() == 2 {
                let (t0, k0) = incident[0];
                let (t1, k1) = incident[1];
                triangle_neighbors[t0][k0] = Some(t1);
                triangle_neighbors[t1][k1] = Some(t0);
            }
        }
        let n_t = triangles.len();
        Ok(Self {
            vertices,
            triangles,
            edges,
            edge_boundary,
            edge_triangles,
            triangle_edges,
            triangle_neighbors,
            macro_origin: (0..n_t).collect(),
            class_r: vec![2; n_t],
        })
    }

    pub fn counts(&self) -> Counts {
        Counts {
            vertices: self.vertices.len(),
            edges: self.edges.len(),
            boundary_edges: self.edge_boundary.iter().filter(|&&b| b).count(),
            triangles: self.triangles.len(),
        }
    }

    /// Vertices on the domain boundary.
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut flags = vec![false; self.vertices.len()];
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            if self.edge_boundary[e] {
                flags[a] = true;
                flags[b] = true;
            }
        }
        flags
    }

    /// Triangles incident to each vertex.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut star = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                star[v].push(t);
            }
        }
        star
    }

    /// Edges incident to each vertex.
    pub fn vertex_edges(&self) -> Vec<Vec<usize>> {
        let mut star = vec![Vec::new(); self.vertices.len()];
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            star[a].push(e);
            star[b].push(e);
        }
        star
    }

    /// Splits every triangle into `level * level` congruent sub-triangles on
    /// the barycentric lattice. Vertices shared between adjacent coarse
    /// triangles are created once; `macro_origin` and `class_r` are filled.
    pub fn uniform_refine(&self, level: usize) -> Result<Self, MeshError> {
        if level == 0 {
            return Err(MeshError::InvalidLevel);
        }
        let l = level;
        let n_v = self.vertices.len();
        let n_e = self.edges.len();
        let mut vertices = self.vertices.clone();
        // Edge-interior points, computed once per edge in canonical
        // (sorted-pair) orientation so shared points are created once.
        for &[a, b] in &self.edges {
            let pa = self.vertices[a];
            let pb = self.vertices[b];
            for k in 1..l {
                let t = S::of_usize(k) / S::of_usize(l);
                vertices.push(Pt::from(pa.coords + (pb - pa) * t));
            }
        }
        let interior_per_tri = if l >= 3 { (l - 1) * (l - 2) / 2 } else { 0 };
        let interior_base = n_v + n_e * (l - 1);
        for tri in &self.triangles {
            let [a, b, c] = *tri;
            let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
            for i in 1..l {
                for j in 1..(l - i) {
                    let ti = S::of_usize(i) / S::of_usize(l);
                    let tj = S::of_usize(j) / S::of_usize(l);
                    vertices.push(Pt::from(pa.coords + (pb - pa) * ti + (pc - pa) * tj));
                }
            }
        }
        // Global id of the lattice point (i, j) of triangle `t` (corner a at
        // (0,0), b at (l,0), c at (0,l)).
        let lattice_id = |t: usize, i: usize, j: usize| -> usize {
            let [a, b, c] = self.triangles[t];
            let on_edge = |va: usize, vb: usize, k: usize| -> usize {
                let e = self
                    .edges
                    .binary_search(&if va < vb { [va, vb] } else { [vb, va] })
                    .expect("edge exists");
                let offset = if self.edges[e][0] == va { k } else { l - k };
                n_v + e * (l - 1) + offset - 1
            };
            match (i, j) {
                (0, 0) => a,
                (i, 0) if i == l => b,
                (0, j) if j == l => c,
                (i, 0) => on_edge(a, b, i),
                (0, j) => on_edge(a, c, j),
                (i, j) if i + j == l => on_edge(b, c, j),
                (i, j) => {
                    // Interior points enumerated row-major in (i, j).
                    let mut idx = 0;
                    for ii in 1..i {
                        idx += l - 1 - ii;
                    }
                    idx += j - 1;
                    interior_base + t * interior_per_tri + idx
                }
            }
        };
        let mut triangles = Vec::with_capacity(self.triangles.len() * l * l);
        let mut macro_origin = Vec::with_capacity(triangles.capacity());
        for t in 0..self.triangles.len() {
            for i in 0..l {
                for j in 0..(l - i) {
                    triangles.push([
                        lattice_id(t, i, j),
                        lattice_id(t, i + 1, j),
                        lattice_id(t, i, j + 1),
                    ]);
                    macro_origin.push(t);
                    if i + j + 2 <= l {
                        triangles.push([
                            lattice_id(t, i + 1, j),
                            lattice_id(t, i + 1, j + 1),
                            lattice_id(t, i, j + 1),
                        ]);
                        macro_origin.push(t);
                    }
                }
            }
        }
        let mut refined = Self::derive_topology(vertices, triangles)?;
        refined.macro_origin = macro_origin;
        refined.class_r = classify_triangles(&refined, self)?;
        Ok(refined)
    }
}

fn bbox_diameter<S: Real>(vertices: &[Pt<S>]) -> S {
    if vertices.is_empty() {
        return S::one();
    }
    let mut min = vertices[0];
    let mut max = vertices[0];
    for p in vertices {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    (max - min).norm()
}

fn max_edge_len<S: Real>(vertices: &[Pt<S>], tri: &[usize; 3]) -> S {
    let mut m = S::zero();
    for k in 0..3 {
        let d = (vertices[tri[(k + 1) % 3]] - vertices[tri[k]]).norm();
        m = m.max(d);
    }
    m
}

/// Classifies each refined triangle by the maximum number of its vertices
/// lying on a single coarse-mesh edge, tested geometrically with a relative
/// tolerance of `1e-12` of the edge length.
pub fn classify_triangles<S: Real>(
    refined: &Triangulation<S>,
    coarse: &Triangulation<S>,
) -> Result<Vec<u8>, MeshError> {
    if refined.macro_origin.len() != refined.triangles.len()
        || refined
            .macro_origin
            .iter()
            .any(|&m| m >= coarse.triangles.len())
    {
        return Err(MeshError::InconsistentRefinement);
    }
    let mut class = Vec::with_capacity(refined.triangles.len());
    for (t, tri) in refined.triangles.iter().enumerate() {
        let parent = refined.macro_origin[t];
        let mut r = 0u8;
        // Vertices of a refined triangle can only lie on the edges of its
        // own parent triangle.
        for &e in &coarse.triangle_edges[parent] {
            let [a, b] = coarse.edges[e];
            let pa = coarse.vertices[a];
            let pb = coarse.vertices[b];
            let tol = S::of(1e-12) * (pb - pa).norm();
            let count = tri
                .iter()
                .filter(|&&v| point_on_segment(&pa, &pb, &refined.vertices[v], tol))
                .count() as u8;
            r = r.max(count);
        }
        if r > 2 {
            return Err(MeshError::InconsistentRefinement);
        }
        class.push(r);
    }
    Ok(class)
}

/// Closed-form entity counts of the uniform refinement of a mesh.
pub fn predicted_counts(coarse: &Counts, level: usize) -> Counts {
    let l = level;
    let (n_v, n_e, n_be, n_t) = (
        coarse.vertices,
        coarse.edges,
        coarse.boundary_edges,
        coarse.triangles,
    );
    Counts {
        vertices: n_v + (l - 1) * n_e + (l - 1) * (l.max(2) - 2) / 2 * n_t,
        edges: l * n_e + 3 * (l - 1) * l / 2 * n_t,
        boundary_edges: l * n_be,
        triangles: l * l * n_t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn square_two_triangles() -> Triangulation<f64> {
        let vertices = vec![
            Pt::new(0.0, 0.0),
            Pt::new(1.0, 0.0),
            Pt::new(1.0, 1.0),
            Pt::new(0.0, 1.0),
        ];
        let triangles = vec![[0, 1, 2], [0, 2, 3]];
        Triangulation::from_parts(vertices, triangles).unwrap()
    }

    pub(crate) fn single_triangle() -> Triangulation<f64> {
        Triangulation::from_parts(
            vec![Pt::new(0.0, 0.0), Pt::new(1.0, 0.0), Pt::new(0.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn square_counts_and_euler() {
        let mesh = square_two_triangles();
        let c = mesh.counts();
        assert_eq!(c.vertices, 4);
        assert_eq!(c.triangles, 2);
        assert_eq!(c.edges, 5);
        assert_eq!(c.boundary_edges, 4);
        assert_eq!(
            c.vertices as isize - c.edges as isize + c.triangles as isize,
            1
        );
    }

    #[test]
    fn single_triangle_all_boundary() {
        let mesh = single_triangle();
        let c = mesh.counts();
        assert_eq!((c.vertices, c.edges, c.triangles), (3, 3, 1));
        assert!(mesh.edge_boundary.iter().all(|&b| b));
    }

    #[test]
    fn clockwise_triangle_is_rewound() {
        let mesh = Triangulation::<f64>::from_parts(
            vec![Pt::new(0.0, 0.0), Pt::new(1.0, 0.0), Pt::new(0.0, 1.0)],
            vec![[0, 2, 1]],
        )
        .unwrap();
        let [a, b, c] = mesh.triangles[0];
        assert!(
            cross2(&mesh.vertices[a], &mesh.vertices[b], &mesh.vertices[c]) > 0.0,
            "triangle must be CCW after load"
        );
        assert_eq!(mesh.counts(), single_triangle().counts());
    }

    #[test]
    fn duplicate_vertices_rejected() {
        let r = Triangulation::<f64>::from_parts(
            vec![
                Pt::new(0.0, 0.0),
                Pt::new(1.0, 0.0),
                Pt::new(0.0, 1.0),
                Pt::new(0.0, 1.0 + 1e-16),
            ],
            vec![[0, 1, 2], [0, 1, 3]],
        );
        assert!(matches!(r, Err(MeshError::DuplicateVertices(2, 3))));
    }

    #[test]
    fn zero_area_triangle_rejected() {
        let r = Triangulation::<f64>::from_parts(
            vec![Pt::new(0.0, 0.0), Pt::new(1.0, 0.0), Pt::new(2.0, 0.0)],
            vec![[0, 1, 2]],
        );
        assert!(matches!(r, Err(MeshError::ZeroAreaTriangle(0))));
    }

    #[test]
    fn hanging_vertex_rejected() {
        let r = Triangulation::<f64>::from_parts(
            vec![
                Pt::new(0.0, 0.0),
                Pt::new(1.0, 0.0),
                Pt::new(0.0, 1.0),
                Pt::new(0.5, 0.0),
                Pt::new(0.5, -1.0),
            ],
            vec![[0, 1, 2], [0, 1, 4]],
        );
        assert!(matches!(r, Err(MeshError::HangingVertex { vertex: 3, .. })));
    }

    #[test]
    fn mesh_with_hole_rejected() {
        // A square ring of 8 triangles around a missing center.
        let v = vec![
            Pt::new(0.0, 0.0),
            Pt::new(3.0, 0.0),
            Pt::new(3.0, 3.0),
            Pt::new(0.0, 3.0),
            Pt::new(1.0, 1.0),
            Pt::new(2.0, 1.0),
            Pt::new(2.0, 2.0),
            Pt::new(1.0, 2.0),
        ];
        let t = vec![
            [0, 1, 5],
            [0, 5, 4],
            [1, 2, 6],
            [1, 6, 5],
            [2, 3, 7],
            [2, 7, 6],
            [3, 0, 4],
            [3, 4, 7],
        ];
        let r = Triangulation::<f64>::from_parts(v, t);
        assert!(matches!(r, Err(MeshError::NotSimplyConnected(0))));
    }

    #[test]
    fn refine_level_one_is_identity() {
        let mesh = single_triangle();
        let refined = mesh.uniform_refine(1).unwrap();
        assert_eq!(refined.counts(), mesh.counts());
        assert_eq!(refined.triangles, mesh.triangles);
        assert_eq!(refined.macro_origin, vec![0]);
        assert_eq!(refined.class_r, vec![2]);
    }

    #[test]
    fn refine_single_triangle_level_two() {
        let refined = single_triangle().uniform_refine(2).unwrap();
        let c = refined.counts();
        assert_eq!((c.vertices, c.edges, c.triangles), (6, 9, 4));
        // Three corner triangles have r = 2, the central inverted one r = 1.
        let twos = refined.class_r.iter().filter(|&&r| r == 2).count();
        let ones = refined.class_r.iter().filter(|&&r| r == 1).count();
        assert_eq!((twos, ones), (3, 1));
    }

    #[test]
    fn refine_two_triangle_square_level_three() {
        let refined = square_two_triangles().uniform_refine(3).unwrap();
        let c = refined.counts();
        assert_eq!(c.vertices, 16);
        assert_eq!(c.edges, 33);
        assert_eq!(c.triangles, 18);
        assert_eq!(c.boundary_edges, 12);
        assert_eq!(
            c.vertices as isize - c.edges as isize + c.triangles as isize,
            1
        );
        let predicted = predicted_counts(&square_two_triangles().counts(), 3);
        assert_eq!(c, predicted);
    }

    #[test]
    fn classify_level_four_interior() {
        let refined = single_triangle().uniform_refine(4).unwrap();
        // Exactly three interior lattice vertices.
        let interior = refined.counts().vertices - 3 - 3 * 3;
        assert_eq!(interior, 3);
        let zeros = refined.class_r.iter().filter(|&&r| r == 0).count();
        assert_eq!(zeros, 1);
    }

    #[test]
    fn predicted_counts_level_one_unchanged() {
        let c = square_two_triangles().counts();
        assert_eq!(predicted_counts(&c, 1), c);
    }

    #[test]
    fn predicted_counts_match_construction() {
        for level in 1..=8 {
            for mesh in [single_triangle(), square_two_triangles()] {
                let refined = mesh.uniform_refine(level).unwrap();
                assert_eq!(refined.counts(), predicted_counts(&mesh.counts(), level));
            }
        }
    }

    #[test]
    fn refinement_is_conforming() {
        let refined = square_two_triangles().uniform_refine(5).unwrap();
        for (e, adj) in refined.edge_triangles.iter().enumerate() {
            let n = adj.iter().filter(|a| a.is_some()).count();
            if refined.edge_boundary[e] {
                assert_eq!(n, 1);
            } else {
                assert_eq!(n, 2);
            }
        }
    }
}

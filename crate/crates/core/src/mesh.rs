use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geom::{triangle_area, Vec3};

/// Indexed triangle mesh.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Builds a mesh, rejecting out-of-range indices and dropping faces that
    /// repeat a vertex.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some((fi, _)) = faces
            .iter()
            .enumerate()
            .find(|(_, f)| f.iter().any(|&i| i >= n))
        {
            return Err(Error::Data(format!(
                "face {fi} references a vertex outside 0..{n}"
            )));
        }
        let faces = faces
            .into_iter()
            .filter(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2])
            .collect();
        Ok(Self { vertices, faces })
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn face_points(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_points(f);
        triangle_area(&a, &b, &c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn centroid(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.face_points(f);
        (a + b + c) / 3.0
    }

    /// Unit normal by right-hand winding, or `None` for zero-area faces.
    pub fn face_normal(&self, f: usize) -> Option<Vec3> {
        face_normal_of(&self.vertices, self.faces[f])
    }

    /// Sum over faces of the signed tetrahedron volumes against the origin.
    /// Positive for closed meshes with outward winding.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                self.vertices[a].dot(&self.vertices[b].cross(&self.vertices[c])) / 6.0
            })
            .sum()
    }

    /// Number of connected components under face adjacency through shared
    /// vertices. Isolated vertices are not counted.
    pub fn component_count(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for f in &self.faces {
            for k in 1..3 {
                let (a, b) = (find(&mut parent, f[0]), find(&mut parent, f[k]));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut used = vec![false; self.vertices.len()];
        for f in &self.faces {
            for &v in f {
                used[v] = true;
            }
        }
        (0..self.vertices.len())
            .filter(|&v| used[v] && find(&mut parent, v) == v)
            .count()
    }
}

pub(crate) fn face_normal_of(positions: &[Vec3], face: [usize; 3]) -> Option<Vec3> {
    let [a, b, c] = face.map(|i| positions[i]);
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    (len > 0.0).then(|| n / len)
}

/// Result of [`check_closed`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosedReport {
    pub closed: bool,
    /// Edges (sorted endpoint pairs) whose incident face count is not two.
    pub boundary_edges: Vec<[usize; 2]>,
}

/// A mesh is closed when every edge has exactly two incident faces.
pub fn check_closed(mesh: &TriangleMesh) -> ClosedReport {
    let mut counts: HashMap<[usize; 2], u32> = HashMap::new();
    for f in &mesh.faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            *counts.entry([a.min(b), a.max(b)]).or_default() += 1;
        }
    }
    let mut boundary_edges: Vec<[usize; 2]> = counts
        .into_iter()
        .filter(|&(_, c)| c != 2)
        .map(|(e, _)| e)
        .collect();
    boundary_edges.sort_unstable();
    ClosedReport {
        closed: boundary_edges.is_empty(),
        boundary_edges,
    }
}

/// Vertex-to-vertex and vertex-to-face adjacency in compressed rows.
#[derive(Debug, Clone)]
pub struct Adjacency {
    ring_offsets: Vec<usize>,
    ring: Vec<usize>,
    face_offsets: Vec<usize>,
    incident: Vec<usize>,
}

impl Adjacency {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let n = mesh.vertices.len();
        let mut rings: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut faces_of: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (fi, f) in mesh.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                rings[a].push(b);
                rings[b].push(a);
                faces_of[f[k]].push(fi);
            }
        }
        let (ring_offsets, ring) = flatten(rings.into_iter().map(|mut r| {
            r.sort_unstable();
            r.dedup();
            r
        }));
        let (face_offsets, incident) = flatten(faces_of.into_iter());
        Self {
            ring_offsets,
            ring,
            face_offsets,
            incident,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.ring_offsets.len() - 1
    }

    /// Sorted 1-ring neighbors of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.ring[self.ring_offsets[v]..self.ring_offsets[v + 1]]
    }

    /// Faces incident to `v`, in face order.
    pub fn faces(&self, v: usize) -> &[usize] {
        &self.incident[self.face_offsets[v]..self.face_offsets[v + 1]]
    }
}

fn flatten(rows: impl Iterator<Item = Vec<usize>>) -> (Vec<usize>, Vec<usize>) {
    let mut offsets = vec![0];
    let mut data = Vec::new();
    for r in rows {
        data.extend_from_slice(&r);
        offsets.push(data.len());
    }
    (offsets, data)
}

//! Catmull-Clark subdivision of polygonal control meshes.
//!
//! Rules, including the open-boundary case:
//! - face point: centroid of the face corners;
//! - edge point: interior `(a + b + Fl + Fr) / 4`, boundary `(a + b) / 2`;
//! - vertex point: interior `(Q + 2R + (n - 3)v) / n` with `Q` the average
//!   incident face point, `R` the average incident edge midpoint, `n` the
//!   valence; boundary `(b0 + 6v + b1) / 8` along the two boundary
//!   neighbors; valence-2 boundary corners stay pinned.
//!
//! A subdivided vertex keeps its parent's index; edge points follow at
//! `nv + e`, face points at `nv + ne + f`, so provenance is positional.

use crate::basemesh::{next_in_face, prev_in_face, BaseMesh, Topo};
use crate::geom::V3;

#[derive(Debug, Clone)]
pub struct Subdivided {
    pub mesh: BaseMesh,
    pub topo: Topo,
    pub n_parent_vertices: u32,
    pub n_parent_edges: u32,
    /// Child face per parent corner slot (same flat layout as the parent's
    /// face table). For quad parents the children sit in quadrant order
    /// (0,0), (1,0), (1,1), (0,1) with axis-aligned vertex order.
    pub child_of_corner: Vec<u32>,
    pub parent_face_start: Vec<u32>,
}

impl Subdivided {
    pub fn edge_vertex(&self, e: u32) -> u32 {
        self.n_parent_vertices + e
    }

    pub fn face_vertex(&self, f: u32, n_parent_faces: u32) -> u32 {
        let _ = n_parent_faces;
        self.n_parent_vertices + self.n_parent_edges + f
    }

    pub fn children(&self, f: u32) -> &[u32] {
        let a = self.parent_face_start[f as usize] as usize;
        let b = self.parent_face_start[f as usize + 1] as usize;
        &self.child_of_corner[a..b]
    }
}

pub fn catmull_clark(mesh: &BaseMesh, topo: &Topo) -> Subdivided {
    let nv = mesh.n_vertices() as u32;
    let ne = topo.n_edges() as u32;
    let nf = mesh.n_faces() as u32;

    let mut positions = vec![V3::zeros(); (nv + ne + nf) as usize];

    let mut face_points = vec![V3::zeros(); nf as usize];
    for f in 0..nf {
        face_points[f as usize] = mesh.face_centroid(f);
        positions[(nv + ne + f) as usize] = face_points[f as usize];
    }

    for e in 0..ne {
        let (a, b) = topo.edge_endpoints(mesh, e);
        let pa = mesh.positions[a as usize];
        let pb = mesh.positions[b as usize];
        let (f0, f1) = topo.edge_faces(e);
        positions[(nv + e) as usize] = match f1 {
            Some(f1) => (pa + pb + face_points[f0 as usize] + face_points[f1 as usize]) * 0.25,
            None => (pa + pb) * 0.5,
        };
    }

    for v in 0..nv {
        let p = mesh.positions[v as usize];
        positions[v as usize] = if topo.boundary_vertex[v as usize] {
            let ring = topo.vertex_ring(mesh, v);
            let n_edges = ring.len() + 1;
            if n_edges == 2 {
                p
            } else {
                // The fan starts and ends at the boundary: the first
                // outgoing halfedge and the predecessor of the last one are
                // the two boundary edges.
                let b0 = topo.he_to(mesh, *ring.first().unwrap());
                let b1 = topo.he_from(mesh, prev_in_face(mesh, *ring.last().unwrap()));
                (mesh.positions[b0 as usize] + p * 6.0 + mesh.positions[b1 as usize]) / 8.0
            }
        } else {
            let ring = topo.vertex_ring(mesh, v);
            let n = ring.len() as f64;
            let mut q = V3::zeros();
            let mut r = V3::zeros();
            for &h in &ring {
                q += face_points[topo.he_face[h as usize] as usize];
                r += (p + mesh.positions[topo.he_to(mesh, h) as usize]) * 0.5;
            }
            q /= n;
            r /= n;
            (q + r * 2.0 + p * (n - 3.0)) / n
        };
    }

    let mut face_offsets = Vec::with_capacity(mesh.n_corners() + 1);
    let mut face_verts = Vec::with_capacity(mesh.n_corners() * 4);
    let mut child_of_corner = vec![0u32; mesh.n_corners()];
    face_offsets.push(0u32);
    let mut next_face = 0u32;
    for f in 0..nf {
        let start = mesh.face_start(f);
        let corners = mesh.face(f);
        let k = corners.len();
        let edge_at = |i: usize| nv + topo.he_edge[(start + i as u32) as usize];
        let fv = nv + ne + f;
        if k == 4 {
            let quads = [
                [corners[0], edge_at(0), fv, edge_at(3)],
                [edge_at(0), corners[1], edge_at(1), fv],
                [fv, edge_at(1), corners[2], edge_at(2)],
                [edge_at(3), fv, edge_at(2), corners[3]],
            ];
            for (i, q) in quads.iter().enumerate() {
                face_verts.extend_from_slice(q);
                face_offsets.push(face_verts.len() as u32);
                child_of_corner[(start + i as u32) as usize] = next_face;
                next_face += 1;
            }
        } else {
            for i in 0..k {
                let prev = (i + k - 1) % k;
                face_verts.extend_from_slice(&[corners[i], edge_at(i), fv, edge_at(prev)]);
                face_offsets.push(face_verts.len() as u32);
                child_of_corner[(start + i as u32) as usize] = next_face;
                next_face += 1;
            }
        }
    }

    let child = BaseMesh::from_flat(positions, face_offsets, face_verts);
    let child_topo = Topo::build(&child).expect("subdivision preserves manifoldness");
    let mut parent_face_start = Vec::with_capacity(nf as usize + 1);
    for f in 0..=nf {
        parent_face_start.push(if f == nf {
            mesh.n_corners() as u32
        } else {
            mesh.face_start(f)
        });
    }
    Subdivided {
        mesh: child,
        topo: child_topo,
        n_parent_vertices: nv,
        n_parent_edges: ne,
        child_of_corner,
        parent_face_start,
    }
}

/// Quadrant of (u, v) in the unit square and the child-local coordinates.
/// Child index follows the corner pattern (0,0), (1,0), (1,1), (0,1).
pub fn quadrant(u: f64, v: f64) -> (usize, f64, f64) {
    let qu = if u >= 0.5 { 1 } else { 0 };
    let qv = if v >= 0.5 { 1 } else { 0 };
    let idx = match (qu, qv) {
        (0, 0) => 0,
        (1, 0) => 1,
        (1, 1) => 2,
        _ => 3,
    };
    (idx, 2.0 * u - qu as f64, 2.0 * v - qv as f64)
}

/// Limit position of a control vertex under repeated subdivision. Valid on
/// all-quad meshes.
pub fn limit_position(mesh: &BaseMesh, topo: &Topo, v: u32) -> V3 {
    let p = mesh.positions[v as usize];
    if topo.boundary_vertex[v as usize] {
        let ring = topo.vertex_ring(mesh, v);
        if ring.len() + 1 == 2 {
            return p;
        }
        let b0 = topo.he_to(mesh, *ring.first().unwrap());
        let b1 = topo.he_from(mesh, prev_in_face(mesh, *ring.last().unwrap()));
        return (mesh.positions[b0 as usize] + p * 4.0 + mesh.positions[b1 as usize]) / 6.0;
    }
    let ring = topo.vertex_ring(mesh, v);
    let n = ring.len() as f64;
    let mut edge_sum = V3::zeros();
    let mut diag_sum = V3::zeros();
    for &h in &ring {
        edge_sum += mesh.positions[topo.he_to(mesh, h) as usize];
        diag_sum += mesh.positions[quad_diagonal(mesh, h) as usize];
    }
    (p * (n * n) + edge_sum * 4.0 + diag_sum) / (n * (n + 5.0))
}

/// Pair of independent limit tangents at an interior control vertex of an
/// all-quad mesh. Their cross product orients with the face winding.
pub fn limit_tangents(mesh: &BaseMesh, topo: &Topo, v: u32) -> (V3, V3) {
    debug_assert!(!topo.boundary_vertex[v as usize]);
    let ring = topo.vertex_ring(mesh, v);
    let n = ring.len();
    let nf = n as f64;
    let an = 1.0
        + (2.0 * std::f64::consts::PI / nf).cos()
        + (std::f64::consts::PI / nf).cos()
            * (2.0 * (9.0 + (2.0 * std::f64::consts::PI / nf).cos())).sqrt();
    let mut t1 = V3::zeros();
    let mut t2 = V3::zeros();
    for (i, &h) in ring.iter().enumerate() {
        let w = 2.0 * std::f64::consts::PI * i as f64 / nf;
        let wn = 2.0 * std::f64::consts::PI * (i as f64 + 1.0) / nf;
        let e = mesh.positions[topo.he_to(mesh, h) as usize];
        let d = mesh.positions[quad_diagonal(mesh, h) as usize];
        t1 += e * (an * w.cos()) + d * (w.cos() + wn.cos());
        t2 += e * (an * w.sin()) + d * (w.sin() + wn.sin());
    }
    (t1, t2)
}

/// Far corner of the quad containing outgoing halfedge `h`, relative to the
/// halfedge origin.
fn quad_diagonal(mesh: &BaseMesh, h: u32) -> u32 {
    mesh.corner_vertex(next_in_face(mesh, next_in_face(mesh, h)))
}

/// Walk a cascade of subdivisions down to the control vertex at dyadic
/// coordinates (u, v) of `face`, if the cascade is deep enough to reach it.
/// Vertex ids are preserved across levels, so landing on a corner at the
/// deepest level identifies the control vertex for those coordinates.
pub fn dyadic_vertex(levels: &[Subdivided], face: u32, u: f64, v: f64) -> Option<u32> {
    let mut f = face;
    let mut u = u;
    let mut v = v;
    for level in levels {
        let (q, cu, cv) = quadrant(u, v);
        f = level.children(f)[q];
        u = cu;
        v = cv;
    }
    let last = levels.last()?;
    let idx = match (u, v) {
        (0.0, 0.0) => 0,
        (1.0, 0.0) => 1,
        (1.0, 1.0) => 2,
        (0.0, 1.0) => 3,
        _ => return None,
    };
    Some(last.mesh.face(f)[idx])
}

use crate::error::{Error, Result};
use crate::geom::{Aabb, V3};

/// Polygonal control mesh. Faces are stored flat; corner `i` of the mesh
/// doubles as halfedge id `i` in the derived topology.
#[derive(Debug, Clone)]
pub struct BaseMesh {
    pub positions: Vec<V3>,
    face_offsets: Vec<u32>,
    face_verts: Vec<u32>,
}

pub const NO_HE: u32 = u32::MAX;

impl BaseMesh {
    pub fn new(positions: Vec<V3>, faces: &[Vec<u32>]) -> BaseMesh {
        let mut face_offsets = Vec::with_capacity(faces.len() + 1);
        let mut face_verts = Vec::new();
        face_offsets.push(0);
        for f in faces {
            face_verts.extend_from_slice(f);
            face_offsets.push(face_verts.len() as u32);
        }
        BaseMesh {
            positions,
            face_offsets,
            face_verts,
        }
    }

    pub fn from_flat(positions: Vec<V3>, face_offsets: Vec<u32>, face_verts: Vec<u32>) -> BaseMesh {
        BaseMesh {
            positions,
            face_offsets,
            face_verts,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn n_faces(&self) -> usize {
        self.face_offsets.len() - 1
    }

    pub fn n_corners(&self) -> usize {
        self.face_verts.len()
    }

    pub fn face(&self, f: u32) -> &[u32] {
        let a = self.face_offsets[f as usize] as usize;
        let b = self.face_offsets[f as usize + 1] as usize;
        &self.face_verts[a..b]
    }

    pub fn face_degree(&self, f: u32) -> usize {
        self.face(f).len()
    }

    pub fn face_start(&self, f: u32) -> u32 {
        self.face_offsets[f as usize]
    }

    /// Vertex sitting at corner slot `h` (also the origin of halfedge `h`).
    pub fn corner_vertex(&self, h: u32) -> u32 {
        self.face_verts[h as usize]
    }

    pub fn all_quads(&self) -> bool {
        (0..self.n_faces() as u32).all(|f| self.face_degree(f) == 4)
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(self.positions.iter())
    }

    pub fn face_centroid(&self, f: u32) -> V3 {
        let vs = self.face(f);
        let mut c = V3::zeros();
        for &v in vs {
            c += self.positions[v as usize];
        }
        c / vs.len() as f64
    }

    /// Basic sanity: face degrees, index ranges, no isolated vertices.
    pub fn validate(&self) -> Result<()> {
        let nv = self.n_vertices();
        let mut used = vec![false; nv];
        for f in 0..self.n_faces() as u32 {
            let vs = self.face(f);
            if vs.len() < 3 {
                return Err(Error::InvalidMesh(format!("face {f} has degree {}", vs.len())));
            }
            for &v in vs {
                if v as usize >= nv {
                    return Err(Error::InvalidMesh(format!("face {f} references vertex {v}")));
                }
                used[v as usize] = true;
            }
            for i in 0..vs.len() {
                if vs[i] == vs[(i + 1) % vs.len()] {
                    return Err(Error::InvalidMesh(format!("face {f} has a repeated vertex")));
                }
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::InvalidMesh(format!("isolated vertex {v}")));
        }
        Ok(())
    }
}

/// Halfedge adjacency for a `BaseMesh`. Halfedge `h` runs from corner `h`
/// of its face to the next corner; `twin == NO_HE` marks a boundary edge.
#[derive(Debug, Clone)]
pub struct Topo {
    pub he_twin: Vec<u32>,
    pub he_face: Vec<u32>,
    pub he_edge: Vec<u32>,
    /// One outgoing halfedge per vertex; for boundary vertices this is the
    /// outgoing halfedge whose predecessor crosses the boundary, so ring
    /// walks cover the full fan in one rotation direction.
    pub v_out: Vec<u32>,
    /// Canonical halfedge per edge.
    pub edge_he: Vec<u32>,
    pub boundary_vertex: Vec<bool>,
}

impl Topo {
    pub fn build(mesh: &BaseMesh) -> Result<Topo> {
        mesh.validate()?;
        let nc = mesh.n_corners();
        let nv = mesh.n_vertices();
        let mut he_face = vec![0u32; nc];
        for f in 0..mesh.n_faces() as u32 {
            let a = mesh.face_offsets[f as usize] as usize;
            let b = mesh.face_offsets[f as usize + 1] as usize;
            for h in a..b {
                he_face[h] = f;
            }
        }
        let mut directed: std::collections::HashMap<(u32, u32), u32> =
            std::collections::HashMap::with_capacity(nc);
        for h in 0..nc as u32 {
            let from = mesh.face_verts[h as usize];
            let to = mesh.face_verts[next_in_face(mesh, h) as usize];
            if directed.insert((from, to), h).is_some() {
                return Err(Error::InvalidMesh(format!(
                    "directed edge ({from}, {to}) appears twice; mesh is non-manifold or inconsistently oriented"
                )));
            }
        }
        let mut he_twin = vec![NO_HE; nc];
        for h in 0..nc as u32 {
            let from = mesh.face_verts[h as usize];
            let to = mesh.face_verts[next_in_face(mesh, h) as usize];
            if let Some(&t) = directed.get(&(to, from)) {
                he_twin[h as usize] = t;
            }
        }
        let mut he_edge = vec![NO_HE; nc];
        let mut edge_he = Vec::new();
        for h in 0..nc as u32 {
            let t = he_twin[h as usize];
            if t == NO_HE || h < t {
                he_edge[h as usize] = edge_he.len() as u32;
                if t != NO_HE {
                    he_edge[t as usize] = edge_he.len() as u32;
                }
                edge_he.push(h);
            }
        }
        let mut v_out = vec![NO_HE; nv];
        let mut boundary_vertex = vec![false; nv];
        for h in 0..nc as u32 {
            let from = mesh.face_verts[h as usize] as usize;
            if v_out[from] == NO_HE {
                v_out[from] = h;
            }
            if he_twin[h as usize] == NO_HE {
                boundary_vertex[mesh.face_verts[h as usize] as usize] = true;
                boundary_vertex[mesh.face_verts[next_in_face(mesh, h) as usize] as usize] = true;
            }
        }
        let mut topo = Topo {
            he_twin,
            he_face,
            he_edge,
            v_out,
            edge_he,
            boundary_vertex,
        };
        // Re-anchor boundary vertices at the fan start and verify that one
        // rotation covers every incident face (rejects bow-tie vertices).
        let mut seen = vec![0u32; nv];
        for h in 0..nc as u32 {
            seen[mesh.face_verts[h as usize] as usize] += 1;
        }
        for v in 0..nv as u32 {
            if topo.boundary_vertex[v as usize] {
                let start = topo
                    .outgoing_fan_start(mesh, v)
                    .ok_or_else(|| Error::InvalidMesh(format!("vertex {v} has a broken boundary fan")))?;
                topo.v_out[v as usize] = start;
            }
            let ring = topo.vertex_ring(mesh, v);
            if ring.len() != seen[v as usize] as usize {
                return Err(Error::InvalidMesh(format!(
                    "vertex {v} fan covers {} of {} incident faces; non-manifold vertex",
                    ring.len(),
                    seen[v as usize]
                )));
            }
        }
        Ok(topo)
    }

    /// Outgoing halfedge at `v` lying on the boundary itself, i.e. the one
    /// with no ring predecessor. `vertex_ring` walks forward from it.
    fn outgoing_fan_start(&self, mesh: &BaseMesh, v: u32) -> Option<u32> {
        let first = self.v_out[v as usize];
        let mut h = first;
        let mut steps = 0;
        loop {
            let t = self.he_twin[h as usize];
            if t == NO_HE {
                return Some(h);
            }
            h = next_in_face(mesh, t);
            steps += 1;
            if h == first || steps > mesh.n_corners() {
                return None;
            }
        }
    }

    /// Ordered outgoing halfedges around `v`. Consecutive entries share the
    /// face of the earlier entry. For boundary vertices the walk starts at
    /// the boundary and ends before crossing it again.
    pub fn vertex_ring(&self, mesh: &BaseMesh, v: u32) -> Vec<u32> {
        let start = self.v_out[v as usize];
        let mut out = Vec::new();
        let mut h = start;
        loop {
            out.push(h);
            let nxt = self.he_twin[prev_in_face(mesh, h) as usize];
            if nxt == NO_HE || nxt == start {
                break;
            }
            h = nxt;
            if out.len() > mesh.n_corners() {
                break;
            }
        }
        out
    }

    pub fn valence(&self, mesh: &BaseMesh, v: u32) -> usize {
        let ring = self.vertex_ring(mesh, v);
        if self.boundary_vertex[v as usize] {
            ring.len() + 1
        } else {
            ring.len()
        }
    }

    pub fn n_edges(&self) -> usize {
        self.edge_he.len()
    }

    pub fn he_from(&self, mesh: &BaseMesh, h: u32) -> u32 {
        mesh.face_verts[h as usize]
    }

    pub fn he_to(&self, mesh: &BaseMesh, h: u32) -> u32 {
        mesh.face_verts[next_in_face(mesh, h) as usize]
    }

    pub fn edge_endpoints(&self, mesh: &BaseMesh, e: u32) -> (u32, u32) {
        let h = self.edge_he[e as usize];
        (self.he_from(mesh, h), self.he_to(mesh, h))
    }

    pub fn edge_is_boundary(&self, e: u32) -> bool {
        self.he_twin[self.edge_he[e as usize] as usize] == NO_HE
    }

    pub fn edge_faces(&self, e: u32) -> (u32, Option<u32>) {
        let h = self.edge_he[e as usize];
        let t = self.he_twin[h as usize];
        (
            self.he_face[h as usize],
            if t == NO_HE {
                None
            } else {
                Some(self.he_face[t as usize])
            },
        )
    }

    /// Count of boundary edges incident to `v`.
    pub fn boundary_edge_count(&self, mesh: &BaseMesh, v: u32) -> usize {
        if !self.boundary_vertex[v as usize] {
            return 0;
        }
        let ring = self.vertex_ring(mesh, v);
        let mut n = 0;
        if let Some(&first) = ring.first() {
            if self.he_twin[first as usize] == NO_HE {
                n += 1;
            }
        }
        if let Some(&last) = ring.last() {
            if self.he_twin[prev_in_face(mesh, last) as usize] == NO_HE {
                n += 1;
            }
        }
        // An outgoing boundary halfedge in the middle of the fan would have
        // broken the walk already, so the two fan ends are the only places a
        // boundary edge can sit.
        n
    }
}

pub fn next_in_face(mesh: &BaseMesh, h: u32) -> u32 {
    let f = face_of_corner(mesh, h);
    let a = mesh.face_offsets[f as usize];
    let b = mesh.face_offsets[f as usize + 1];
    if h + 1 == b {
        a
    } else {
        h + 1
    }
}

pub fn prev_in_face(mesh: &BaseMesh, h: u32) -> u32 {
    let f = face_of_corner(mesh, h);
    let a = mesh.face_offsets[f as usize];
    let b = mesh.face_offsets[f as usize + 1];
    if h == a {
        b - 1
    } else {
        h - 1
    }
}

fn face_of_corner(mesh: &BaseMesh, h: u32) -> u32 {
    match mesh.face_offsets.binary_search(&h) {
        Ok(i) => i as u32,
        Err(i) => (i - 1) as u32,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::v3;

    pub fn unit_cube() -> BaseMesh {
        let p = vec![
            v3(-1.0, -1.0, -1.0),
            v3(1.0, -1.0, -1.0),
            v3(1.0, 1.0, -1.0),
            v3(-1.0, 1.0, -1.0),
            v3(-1.0, -1.0, 1.0),
            v3(1.0, -1.0, 1.0),
            v3(1.0, 1.0, 1.0),
            v3(-1.0, 1.0, 1.0),
        ];
        let f = vec![
            vec![0, 3, 2, 1],
            vec![4, 5, 6, 7],
            vec![0, 1, 5, 4],
            vec![1, 2, 6, 5],
            vec![2, 3, 7, 6],
            vec![3, 0, 4, 7],
        ];
        BaseMesh::new(p, &f)
    }

    #[test]
    fn cube_topology() {
        let m = unit_cube();
        let t = Topo::build(&m).unwrap();
        assert_eq!(t.n_edges(), 12);
        for v in 0..8 {
            assert_eq!(t.valence(&m, v), 3);
            assert!(!t.boundary_vertex[v as usize]);
        }
        // V - E + F = 2 for a sphere-topology mesh.
        assert_eq!(8 - 12 + 6, 2);
    }

    #[test]
    fn single_quad_boundary() {
        let m = BaseMesh::new(
            vec![
                v3(0.0, 0.0, 0.0),
                v3(1.0, 0.0, 0.0),
                v3(1.0, 1.0, 0.0),
                v3(0.0, 1.0, 0.0),
            ],
            &[vec![0, 1, 2, 3]],
        );
        let t = Topo::build(&m).unwrap();
        assert_eq!(t.n_edges(), 4);
        for v in 0..4 {
            assert!(t.boundary_vertex[v as usize]);
            assert_eq!(t.boundary_edge_count(&m, v), 2);
            assert_eq!(t.valence(&m, v), 2);
        }
    }

    #[test]
    fn inconsistent_orientation_rejected() {
        let m = BaseMesh::new(
            vec![
                v3(0.0, 0.0, 0.0),
                v3(1.0, 0.0, 0.0),
                v3(1.0, 1.0, 0.0),
                v3(0.0, 1.0, 0.0),
                v3(2.0, 0.0, 0.0),
                v3(2.0, 1.0, 0.0),
            ],
            // Second quad wound the wrong way relative to the first.
            &[vec![0, 1, 2, 3], vec![1, 4, 5, 2].into_iter().rev().collect()],
        );
        assert!(Topo::build(&m).is_err());
    }

    #[test]
    fn ring_order_is_face_connected() {
        let m = unit_cube();
        let t = Topo::build(&m).unwrap();
        for v in 0..8u32 {
            let ring = t.vertex_ring(&m, v);
            assert_eq!(ring.len(), 3);
            for w in 0..ring.len() {
                let a = t.he_face[ring[w] as usize];
                let b = t.he_face[ring[(w + 1) % ring.len()] as usize];
                assert_ne!(a, b, "consecutive ring entries lie in distinct faces");
            }
        }
    }
}

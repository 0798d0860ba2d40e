//! Mutable halfedge triangle mesh used throughout the pipeline.
//!
//! Faces own three implicit halfedges: halfedge `3f + i` runs from corner
//! `i` of face `f` to corner `i + 1`. Twins are kept in a directed-edge map
//! so local surgery (splits, flips, collapses) stays simple; deleted faces
//! are tombstoned and compacted only on export.

use std::collections::HashMap;

use crate::camera::CameraFrame;
use crate::error::{Error, Result};
use crate::geom::{angle_at, V2, V3};
use crate::predicates::{orient2d, orientation_3d};
use crate::surface::{SurfacePoint, VertClass};

pub const NO_HE: u32 = u32::MAX;
pub const NO_REGION: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct VertexData {
    pub tag: VertClass,
    pub cusp: bool,
    /// Off-surface vertices (perturbed along the view ray) keep no valid
    /// surface backpointer.
    pub perturbed: bool,
    /// Parameter-space aliases of this vertex; entry 0 is canonical. Empty
    /// only for perturbed vertices.
    pub sps: Vec<SurfacePoint>,
    /// Regions this vertex is singular for.
    pub singular_for: Vec<u32>,
}

impl VertexData {
    pub fn new(tag: VertClass, sp: SurfacePoint) -> Self {
        VertexData {
            tag,
            cusp: false,
            perturbed: false,
            sps: vec![sp],
            singular_for: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorkMesh {
    pub positions: Vec<V3>,
    pub vdata: Vec<VertexData>,
    tris: Vec<[u32; 3]>,
    alive: Vec<bool>,
    twin: Vec<u32>,
    v_out: Vec<u32>,
    edge_map: HashMap<(u32, u32), u32>,
    /// Per-halfedge contour flag, mirrored across twins.
    contour: Vec<bool>,
    /// Per-halfedge cut flag, mirrored across twins.
    cut: Vec<bool>,
    pub region: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct Projected {
    pub xy: Vec<V2>,
    pub depth: Vec<f64>,
}

impl WorkMesh {
    pub fn new(positions: Vec<V3>, vdata: Vec<VertexData>, tris: Vec<[u32; 3]>) -> Result<WorkMesh> {
        assert_eq!(positions.len(), vdata.len());
        let nf = tris.len();
        let mut m = WorkMesh {
            positions,
            vdata,
            tris,
            alive: vec![true; nf],
            twin: vec![NO_HE; nf * 3],
            v_out: Vec::new(),
            edge_map: HashMap::with_capacity(nf * 3),
            contour: vec![false; nf * 3],
            cut: vec![false; nf * 3],
            region: vec![NO_REGION; nf],
        };
        m.v_out = vec![NO_HE; m.positions.len()];
        for f in 0..nf as u32 {
            m.wire_face(f)?;
        }
        Ok(m)
    }

    pub fn n_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn n_faces_raw(&self) -> usize {
        self.tris.len()
    }

    pub fn face_alive(&self, f: u32) -> bool {
        self.alive[f as usize]
    }

    pub fn live_faces(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.tris.len() as u32).filter(move |&f| self.alive[f as usize])
    }

    pub fn tri(&self, f: u32) -> [u32; 3] {
        self.tris[f as usize]
    }

    pub fn he_face(&self, h: u32) -> u32 {
        h / 3
    }

    pub fn he_from(&self, h: u32) -> u32 {
        self.tris[(h / 3) as usize][(h % 3) as usize]
    }

    pub fn he_to(&self, h: u32) -> u32 {
        self.tris[(h / 3) as usize][((h + 1) % 3) as usize]
    }

    pub fn he_next(&self, h: u32) -> u32 {
        (h / 3) * 3 + (h + 1) % 3
    }

    pub fn he_prev(&self, h: u32) -> u32 {
        (h / 3) * 3 + (h + 2) % 3
    }

    pub fn he_twin(&self, h: u32) -> u32 {
        self.twin[h as usize]
    }

    /// The third vertex of the face of `h` (opposite the edge).
    pub fn he_apex(&self, h: u32) -> u32 {
        self.he_to(self.he_next(h))
    }

    pub fn halfedge(&self, from: u32, to: u32) -> Option<u32> {
        self.edge_map.get(&(from, to)).copied()
    }

    pub fn is_contour(&self, h: u32) -> bool {
        self.contour[h as usize]
    }

    pub fn set_contour(&mut self, h: u32, value: bool) {
        self.contour[h as usize] = value;
        let t = self.twin[h as usize];
        if t != NO_HE {
            self.contour[t as usize] = value;
        }
    }

    pub fn is_cut(&self, h: u32) -> bool {
        self.cut[h as usize]
    }

    pub fn set_cut(&mut self, h: u32, value: bool) {
        self.cut[h as usize] = value;
        let t = self.twin[h as usize];
        if t != NO_HE {
            self.cut[t as usize] = value;
        }
    }

    /// An edge separating two regions or bordering the mesh boundary.
    pub fn is_region_border(&self, h: u32) -> bool {
        let t = self.twin[h as usize];
        t == NO_HE || self.region[(h / 3) as usize] != self.region[(t / 3) as usize]
    }

    fn wire_face(&mut self, f: u32) -> Result<()> {
        let t = self.tris[f as usize];
        for i in 0..3u32 {
            let h = f * 3 + i;
            let from = t[i as usize];
            let to = t[((i + 1) % 3) as usize];
            if from == to {
                return Err(Error::MeshOp(format!("degenerate face {f}")));
            }
            if let Some(&old) = self.edge_map.get(&(from, to)) {
                return Err(Error::MeshOp(format!(
                    "directed edge ({from},{to}) already used by halfedge {old}; non-manifold"
                )));
            }
            self.edge_map.insert((from, to), h);
            let tw = self.edge_map.get(&(to, from)).copied().unwrap_or(NO_HE);
            self.twin[h as usize] = tw;
            if tw != NO_HE {
                self.twin[tw as usize] = h;
            }
            if self.v_out[from as usize] == NO_HE {
                self.v_out[from as usize] = h;
            }
        }
        Ok(())
    }

    fn unwire_face(&mut self, f: u32) {
        let t = self.tris[f as usize];
        for i in 0..3u32 {
            let h = f * 3 + i;
            let from = t[i as usize];
            let to = t[((i + 1) % 3) as usize];
            self.edge_map.remove(&(from, to));
            let tw = self.twin[h as usize];
            if tw != NO_HE {
                self.twin[tw as usize] = NO_HE;
            }
            self.twin[h as usize] = NO_HE;
            // Slots are reused on rewire; stale flags must not leak onto
            // whatever edge lands here next.
            self.contour[h as usize] = false;
            self.cut[h as usize] = false;
            if self.v_out[from as usize] == h {
                self.v_out[from as usize] = NO_HE;
            }
        }
    }

    /// Restore `v_out` for a vertex whose anchor halfedge was invalidated;
    /// the minimal halfedge id is chosen so ring walks stay reproducible.
    fn fix_v_out(&mut self, v: u32) {
        if self.v_out[v as usize] != NO_HE {
            return;
        }
        let best = self
            .edge_map
            .iter()
            .filter(|(&(from, _), _)| from == v)
            .map(|(_, &h)| h)
            .min();
        if let Some(h) = best {
            self.v_out[v as usize] = h;
        }
    }

    /// Ordered outgoing halfedges around `v` covering the full fan; for
    /// boundary vertices the walk starts at the boundary-side halfedge.
    pub fn vertex_ring(&self, v: u32) -> Vec<u32> {
        let mut start = self.v_out[v as usize];
        if start == NO_HE {
            return Vec::new();
        }
        // Rotate backwards to the fan start if v is on a boundary.
        let mut h = start;
        let mut guard = 0;
        loop {
            let t = self.twin[h as usize];
            if t == NO_HE {
                start = h;
                break;
            }
            h = self.he_next(t);
            guard += 1;
            if h == start || guard > self.twin.len() {
                break;
            }
        }
        let mut out = Vec::new();
        let mut h = start;
        loop {
            out.push(h);
            let nxt = self.twin[self.he_prev(h) as usize];
            if nxt == NO_HE || nxt == start {
                break;
            }
            h = nxt;
            if out.len() > self.twin.len() {
                break;
            }
        }
        out
    }

    /// All neighboring vertices of `v`, including the one across the
    /// trailing boundary edge of an open fan.
    pub fn vertex_neighbors(&self, v: u32) -> Vec<u32> {
        let ring = self.vertex_ring(v);
        let mut out: Vec<u32> = ring.iter().map(|&h| self.he_to(h)).collect();
        if let Some(&last) = ring.last() {
            if self.twin[self.he_prev(last) as usize] == NO_HE {
                out.push(self.he_apex(last));
            }
        }
        out
    }

    /// Split the edge of `h` at a new vertex, replacing each adjacent face
    /// with two. Contour/cut flags carry to both halves, other flags to the
    /// outer edges they came from. Returns the new vertex id.
    pub fn split_edge(&mut self, h: u32, position: V3, data: VertexData) -> Result<u32> {
        let t = self.twin[h as usize];
        let a = self.he_from(h);
        let b = self.he_to(h);
        let c = self.he_apex(h);
        let f0 = h / 3;
        let was_contour = self.contour[h as usize];
        let was_cut = self.cut[h as usize];
        let f0_region = self.region[f0 as usize];
        let m = self.positions.len() as u32;
        self.positions.push(position);
        self.vdata.push(data);
        self.v_out.push(NO_HE);

        // Preserve outer-edge flags of f0: (b,c) and (c,a).
        let bc = (self.contour_of(b, c), self.cut_of(b, c));
        let ca = (self.contour_of(c, a), self.cut_of(c, a));
        self.unwire_face(f0);
        self.tris[f0 as usize] = [a, m, c];
        self.wire_face(f0)?;
        let f2 = self.push_face([m, b, c], f0_region)?;
        self.restore_edge_flags(b, c, bc);
        self.restore_edge_flags(c, a, ca);
        self.set_flags_by_verts(a, m, was_contour, was_cut);
        self.set_flags_by_verts(m, b, was_contour, was_cut);

        if t != NO_HE {
            let f1 = t / 3;
            let d = self.he_apex(t);
            let f1_region = self.region[f1 as usize];
            let ad = (self.contour_of(a, d), self.cut_of(a, d));
            let db = (self.contour_of(d, b), self.cut_of(d, b));
            self.unwire_face(f1);
            self.tris[f1 as usize] = [b, m, d];
            self.wire_face(f1)?;
            let f3 = self.push_face([m, a, d], f1_region)?;
            let _ = f3;
            self.restore_edge_flags(a, d, ad);
            self.restore_edge_flags(d, b, db);
            // Twins across the split line now exist; re-mirror its flags.
            self.set_flags_by_verts(a, m, was_contour, was_cut);
            self.set_flags_by_verts(m, b, was_contour, was_cut);
        }
        for v in [a, b, c] {
            self.fix_v_out(v);
        }
        let _ = f2;
        Ok(m)
    }

    fn contour_of(&self, from: u32, to: u32) -> bool {
        self.halfedge(from, to)
            .map(|h| self.contour[h as usize])
            .unwrap_or(false)
    }

    fn cut_of(&self, from: u32, to: u32) -> bool {
        self.halfedge(from, to)
            .map(|h| self.cut[h as usize])
            .unwrap_or(false)
    }

    fn restore_edge_flags(&mut self, from: u32, to: u32, (contour, cut): (bool, bool)) {
        if let Some(h) = self.halfedge(from, to) {
            self.set_contour(h, contour);
            self.set_cut(h, cut);
        }
    }

    fn set_flags_by_verts(&mut self, from: u32, to: u32, contour: bool, cut: bool) {
        if let Some(h) = self.halfedge(from, to) {
            self.set_contour(h, contour);
            self.set_cut(h, cut);
        }
    }

    /// Split face `f` at an interior point into three faces.
    pub fn split_face(&mut self, f: u32, position: V3, data: VertexData) -> Result<u32> {
        let [a, b, c] = self.tris[f as usize];
        let region = self.region[f as usize];
        let ab = (self.contour_of(a, b), self.cut_of(a, b));
        let bc = (self.contour_of(b, c), self.cut_of(b, c));
        let ca = (self.contour_of(c, a), self.cut_of(c, a));
        let m = self.positions.len() as u32;
        self.positions.push(position);
        self.vdata.push(data);
        self.v_out.push(NO_HE);
        self.unwire_face(f);
        self.tris[f as usize] = [a, b, m];
        self.wire_face(f)?;
        self.push_face([b, c, m], region)?;
        self.push_face([c, a, m], region)?;
        self.restore_edge_flags(a, b, ab);
        self.restore_edge_flags(b, c, bc);
        self.restore_edge_flags(c, a, ca);
        for v in [a, b, c] {
            self.fix_v_out(v);
        }
        Ok(m)
    }

    /// Flip the interior edge of `h`: (a,b) becomes (c,d) with c, d the two
    /// apexes. Fails on boundary edges or when the flipped edge exists.
    pub fn flip_edge(&mut self, h: u32) -> Result<()> {
        let t = self.twin[h as usize];
        if t == NO_HE {
            return Err(Error::MeshOp("cannot flip a boundary edge".into()));
        }
        let a = self.he_from(h);
        let b = self.he_to(h);
        let c = self.he_apex(h);
        let d = self.he_apex(t);
        if self.edge_map.contains_key(&(c, d)) || self.edge_map.contains_key(&(d, c)) {
            return Err(Error::MeshOp("flip would create a duplicate edge".into()));
        }
        let f0 = h / 3;
        let f1 = t / 3;
        let r0 = self.region[f0 as usize];
        let r1 = self.region[f1 as usize];
        let ad = (self.contour_of(a, d), self.cut_of(a, d));
        let db = (self.contour_of(d, b), self.cut_of(d, b));
        let bc = (self.contour_of(b, c), self.cut_of(b, c));
        let ca = (self.contour_of(c, a), self.cut_of(c, a));
        self.unwire_face(f0);
        self.unwire_face(f1);
        self.tris[f0 as usize] = [a, d, c];
        self.tris[f1 as usize] = [d, b, c];
        self.wire_face(f0)?;
        self.wire_face(f1)?;
        self.region[f0 as usize] = r0;
        self.region[f1 as usize] = r1;
        self.restore_edge_flags(a, d, ad);
        self.restore_edge_flags(d, b, db);
        self.restore_edge_flags(b, c, bc);
        self.restore_edge_flags(c, a, ca);
        for v in [a, b, c, d] {
            self.fix_v_out(v);
        }
        Ok(())
    }

    /// Collapse the edge of `h`, merging its origin into its destination.
    /// Requires the standard link condition; the origin vertex is orphaned.
    pub fn collapse_edge(&mut self, h: u32) -> Result<()> {
        let t = self.twin[h as usize];
        let a = self.he_from(h);
        let b = self.he_to(h);
        let ring_a = self.vertex_neighbors(a);
        let ring_b = self.vertex_neighbors(b);
        let mut shared: Vec<u32> = ring_a
            .iter()
            .filter(|v| ring_b.contains(v))
            .copied()
            .collect();
        shared.sort_unstable();
        shared.dedup();
        let expected = if t == NO_HE { 1 } else { 2 };
        if shared.len() != expected {
            return Err(Error::MeshOp(format!(
                "link condition failed collapsing ({a},{b}): {} shared neighbors",
                shared.len()
            )));
        }
        // Remove the faces adjacent to the edge, then rewrite a's faces.
        let dead = if t == NO_HE {
            vec![h / 3]
        } else {
            vec![h / 3, t / 3]
        };
        for &f in &dead {
            self.unwire_face(f);
            self.alive[f as usize] = false;
        }
        let mut afaces: Vec<u32> = self
            .edge_map
            .iter()
            .filter(|(&(from, to), _)| from == a || to == a)
            .map(|(_, &hh)| hh / 3)
            .collect();
        afaces.sort_unstable();
        afaces.dedup();
        for f in afaces {
            let flags: Vec<(u32, u32, bool, bool)> = (0..3)
                .map(|i| {
                    let hh = f * 3 + i;
                    (
                        self.he_from(hh),
                        self.he_to(hh),
                        self.contour[hh as usize],
                        self.cut[hh as usize],
                    )
                })
                .collect();
            self.unwire_face(f);
            for v in self.tris[f as usize].iter_mut() {
                if *v == a {
                    *v = b;
                }
            }
            self.wire_face(f)?;
            for (from, to, ct, cu) in flags {
                let from = if from == a { b } else { from };
                let to = if to == a { b } else { to };
                self.set_flags_by_verts(from, to, ct, cu);
            }
        }
        self.v_out[a as usize] = NO_HE;
        for v in shared.iter().copied().chain([b]) {
            self.fix_v_out(v);
        }
        Ok(())
    }

    fn push_face(&mut self, tri: [u32; 3], region: u32) -> Result<u32> {
        let f = self.tris.len() as u32;
        self.tris.push(tri);
        self.alive.push(true);
        self.region.push(region);
        self.twin.extend_from_slice(&[NO_HE; 3]);
        self.contour.extend_from_slice(&[false; 3]);
        self.cut.extend_from_slice(&[false; 3]);
        self.wire_face(f)?;
        Ok(f)
    }

    /// Project every vertex; fails if any vertex sits behind the camera.
    pub fn project_all(&self, frame: &CameraFrame) -> Result<Projected> {
        let mut xy = Vec::with_capacity(self.positions.len());
        let mut depth = Vec::with_capacity(self.positions.len());
        for &p in &self.positions {
            let (q, d) = frame.project(p)?;
            xy.push(q);
            depth.push(d);
        }
        Ok(Projected { xy, depth })
    }

    pub fn face_orientation_2d(&self, f: u32, proj: &Projected) -> i8 {
        let [a, b, c] = self.tris[f as usize];
        orient2d(proj.xy[a as usize], proj.xy[b as usize], proj.xy[c as usize])
    }

    pub fn face_orientation_3d(&self, f: u32, cam: V3) -> i8 {
        let [a, b, c] = self.tris[f as usize];
        orientation_3d(
            self.positions[a as usize],
            self.positions[b as usize],
            self.positions[c as usize],
            cam,
        )
    }

    /// Sum of projected triangle angles at `v` over faces of one region
    /// (or all live faces if `region` is NO_REGION).
    pub fn vertex_theta(&self, v: u32, region: u32, proj: &Projected) -> f64 {
        let mut sum = 0.0;
        for h in self.vertex_ring(v) {
            let f = h / 3;
            if !self.alive[f as usize] {
                continue;
            }
            if region != NO_REGION && self.region[f as usize] != region {
                continue;
            }
            let p = proj.xy[v as usize];
            let q = proj.xy[self.he_to(h) as usize];
            let r = proj.xy[self.he_apex(h) as usize];
            sum += angle_at(q, p, r);
        }
        sum
    }

    /// Vertices whose positively- or negatively-oriented projected angle
    /// sum exceeds a full turn (within any single region).
    pub fn spiral_check(&self, proj: &Projected) -> Vec<u32> {
        let tol = 1e-6;
        let mut out = Vec::new();
        for v in 0..self.positions.len() as u32 {
            let mut sums: HashMap<(u32, i8), f64> = HashMap::new();
            for h in self.vertex_ring(v) {
                let f = h / 3;
                if !self.alive[f as usize] {
                    continue;
                }
                let sign = self.face_orientation_2d(f, proj);
                if sign == 0 {
                    continue;
                }
                let p = proj.xy[v as usize];
                let q = proj.xy[self.he_to(h) as usize];
                let r = proj.xy[self.he_apex(h) as usize];
                *sums.entry((self.region[f as usize], sign)).or_insert(0.0) +=
                    angle_at(q, p, r);
            }
            if sums
                .values()
                .any(|&s| s > 2.0 * std::f64::consts::PI + tol)
            {
                out.push(v);
            }
        }
        out
    }

    /// Full structural audit; used by tests and after repair surgery.
    pub fn integrity_check(&self) -> Result<()> {
        let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
        for f in self.live_faces() {
            let t = self.tris[f as usize];
            for i in 0..3u32 {
                let h = f * 3 + i;
                let from = t[i as usize];
                let to = t[((i + 1) % 3) as usize];
                if from == to {
                    return Err(Error::MeshOp(format!("degenerate face {f}")));
                }
                if directed.insert((from, to), h).is_some() {
                    return Err(Error::MeshOp(format!(
                        "duplicate directed edge ({from},{to})"
                    )));
                }
            }
        }
        for (&(from, to), &h) in &directed {
            let expect = directed.get(&(to, from)).copied().unwrap_or(NO_HE);
            if self.twin[h as usize] != expect {
                return Err(Error::MeshOp(format!(
                    "twin mismatch on ({from},{to}): stored {}, actual {expect}",
                    self.twin[h as usize]
                )));
            }
            if self.edge_map.get(&(from, to)) != Some(&h) {
                return Err(Error::MeshOp(format!("edge map stale on ({from},{to})")));
            }
            if expect != NO_HE {
                if self.contour[h as usize] != self.contour[expect as usize] {
                    return Err(Error::MeshOp(format!(
                        "contour flag not mirrored on ({from},{to})"
                    )));
                }
                if self.cut[h as usize] != self.cut[expect as usize] {
                    return Err(Error::MeshOp(format!("cut flag not mirrored on ({from},{to})")));
                }
            }
        }
        if self.edge_map.len() != directed.len() {
            return Err(Error::MeshOp(format!(
                "edge map has {} entries, live faces imply {}",
                self.edge_map.len(),
                directed.len()
            )));
        }
        for v in 0..self.positions.len() as u32 {
            let h = self.v_out[v as usize];
            if h != NO_HE && self.he_from(h) != v {
                return Err(Error::MeshOp(format!("v_out[{v}] points elsewhere")));
            }
        }
        Ok(())
    }

    /// Euler characteristic of the live complex (counting each undirected
    /// edge once and only vertices used by live faces).
    pub fn euler_characteristic(&self) -> i64 {
        let mut verts = std::collections::BTreeSet::new();
        let mut edges = 0i64;
        let mut faces = 0i64;
        for f in self.live_faces() {
            faces += 1;
            let t = self.tris[f as usize];
            for i in 0..3u32 {
                let h = f * 3 + i;
                verts.insert(t[i as usize]);
                let tw = self.twin[h as usize];
                if tw == NO_HE || h < tw {
                    edges += 1;
                }
            }
        }
        verts.len() as i64 - edges + faces
    }

    /// Compact to (positions, triangles, vertex remap, face remap) dropping
    /// dead faces and orphan vertices, in stable order.
    pub fn compact(&self) -> (Vec<V3>, Vec<[u32; 3]>, Vec<u32>, Vec<u32>) {
        let mut vmap = vec![u32::MAX; self.positions.len()];
        let mut positions = Vec::new();
        let mut tris = Vec::new();
        let mut faces = Vec::new();
        for f in self.live_faces() {
            let t = self.tris[f as usize];
            let mut nt = [0u32; 3];
            for i in 0..3 {
                let v = t[i] as usize;
                if vmap[v] == u32::MAX {
                    vmap[v] = positions.len() as u32;
                    positions.push(self.positions[v]);
                }
                nt[i] = vmap[v];
            }
            tris.push(nt);
            faces.push(f);
        }
        (positions, tris, vmap, faces)
    }
}

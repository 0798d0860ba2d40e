//! Contour extraction, exact visibility, and SVG output.
//!
//! The stitched output mesh makes this stage deliberately boring: its
//! contour generator is just the set of edges separating camera-facing
//! triangles from back-facing ones, and visibility can be settled with
//! exact ray tests against the mesh itself. The result is a view map —
//! a planar arrangement of contour chains meeting at cusp, crossing,
//! and boundary-end nodes, each chain carrying a constant quantitative
//! invisibility (QI) count. QI 0 means visible.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::camera::CameraFrame;
use crate::error::{Error, Result};
use crate::geom::{cross2, segment_intersection, Aabb, V2, V3};
use crate::workmesh::{WorkMesh, NO_HE};

/// What a view-map node marks in the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// The contour folds back on itself; visibility changes here.
    Cusp,
    /// Two projected chain segments cross (or several chains share a
    /// mesh vertex).
    Crossing,
    /// An open chain stops on the surface boundary.
    BoundaryEnd,
}

#[derive(Debug, Clone, Copy)]
pub struct ViewNode {
    pub px: V2,
    pub kind: NodeKind,
}

/// A maximal polyline of constant visibility between two nodes (or a
/// closed loop with no nodes at all).
#[derive(Debug, Clone)]
pub struct ViewChain {
    /// Projected points. Closed chains do not repeat the first point.
    pub px: Vec<V2>,
    /// World-space points, one per projected point; crossing endpoints
    /// are interpolated along their mesh edge.
    pub world: Vec<V3>,
    /// Source mesh edge under each polyline segment.
    pub edges: Vec<(u32, u32)>,
    pub qi: u32,
    pub closed: bool,
    pub start: Option<u32>,
    pub end: Option<u32>,
    /// True when any segment lies on an unflagged surface boundary
    /// rather than the contour proper; node bookkeeping is relaxed
    /// around such chains.
    pub boundary: bool,
}

impl ViewChain {
    pub fn n_segments(&self) -> usize {
        if self.closed {
            self.px.len()
        } else {
            self.px.len() - 1
        }
    }

    pub fn segment(&self, i: usize) -> (V2, V2) {
        (self.px[i], self.px[(i + 1) % self.px.len()])
    }

    pub fn arclength_px(&self) -> f64 {
        (0..self.n_segments())
            .map(|i| {
                let (a, b) = self.segment(i);
                (b - a).norm()
            })
            .sum()
    }

    /// World-space point at arclength fraction `u` in (0, 1), plus the
    /// mesh edge it lies on. Used to probe visibility along the chain.
    pub fn world_at(&self, u: f64) -> (V3, (u32, u32)) {
        let total = self.arclength_px();
        let mut want = u.clamp(0.0, 1.0) * total;
        let last = self.n_segments() - 1;
        for i in 0..=last {
            let (a, b) = self.segment(i);
            let len = (b - a).norm();
            if want <= len || i == last {
                let t = if len > 0.0 { (want / len).min(1.0) } else { 0.0 };
                let w0 = self.world[i];
                let w1 = self.world[(i + 1) % self.world.len()];
                return (w0 + (w1 - w0) * t, self.edges[i]);
            }
            want -= len;
        }
        unreachable!()
    }
}

/// Planar arrangement of the projected contour with per-chain QI.
#[derive(Debug, Clone, Default)]
pub struct ViewMap {
    pub nodes: Vec<ViewNode>,
    pub chains: Vec<ViewChain>,
}

impl ViewMap {
    pub fn visible_chains(&self) -> impl Iterator<Item = &ViewChain> {
        self.chains.iter().filter(|c| c.qi == 0)
    }
}

/// Edges whose two faces disagree about the camera, plus any open
/// boundary edge. Returned as undirected `(min, max)` vertex pairs.
pub fn extract_contour_edges(mesh: &WorkMesh, cam: V3) -> BTreeSet<(u32, u32)> {
    let mut out = BTreeSet::new();
    for f in mesh.live_faces() {
        let sf = mesh.face_orientation_3d(f, cam);
        for i in 0..3u32 {
            let h = f * 3 + i;
            let (a, b) = (mesh.he_from(h), mesh.he_to(h));
            let t = mesh.he_twin(h);
            let is_contour = if t == NO_HE {
                true
            } else {
                let st = mesh.face_orientation_3d(t / 3, cam);
                (sf < 0) != (st < 0)
            };
            if is_contour {
                out.insert((a.min(b), a.max(b)));
            }
        }
    }
    out
}

/// Number of camera-facing triangles pierced strictly between the
/// camera and `target`; hits within `eps` (world units) of the target
/// are treated as the target itself and skipped.
pub fn qi_at_point(mesh: &WorkMesh, cam: V3, target: V3, eps: f64) -> u32 {
    let dir = target - cam;
    let len = dir.norm();
    let t_hi = 1.0 - eps / len;
    let mut count = 0;
    for f in mesh.live_faces() {
        if mesh.face_orientation_3d(f, cam) != -1 {
            continue;
        }
        let [a, b, c] = mesh.tri(f);
        let pa = mesh.positions[a as usize];
        let e1 = mesh.positions[b as usize] - pa;
        let e2 = mesh.positions[c as usize] - pa;
        let pv = dir.cross(&e2);
        let det = e1.dot(&pv);
        if det.abs() < 1e-300 {
            continue;
        }
        let inv = 1.0 / det;
        let tv = cam - pa;
        let u = tv.dot(&pv) * inv;
        if !(-1e-12..=1.0 + 1e-12).contains(&u) {
            continue;
        }
        let qv = tv.cross(&e1);
        let v = dir.dot(&qv) * inv;
        if v < -1e-12 || u + v > 1.0 + 1e-12 {
            continue;
        }
        let t = e2.dot(&qv) * inv;
        if t > 1e-9 && t < t_hi {
            count += 1;
        }
    }
    count
}

/// The camera-facing triangle next to edge `(a, b)`; falls back to the
/// only incident face on a boundary.
fn front_face_of_edge(mesh: &WorkMesh, cam: V3, a: u32, b: u32) -> u32 {
    let mut faces = Vec::new();
    let h = mesh
        .halfedge(a, b)
        .or_else(|| mesh.halfedge(b, a))
        .expect("chain edge exists in the mesh");
    faces.push(h / 3);
    let t = mesh.he_twin(h);
    if t != NO_HE {
        faces.push(t / 3);
    }
    *faces
        .iter()
        .find(|&&f| mesh.face_orientation_3d(f, cam) == -1)
        .unwrap_or(&faces[0])
}

fn face_centroid(mesh: &WorkMesh, f: u32) -> V3 {
    let [a, b, c] = mesh.tri(f);
    (mesh.positions[a as usize] + mesh.positions[b as usize] + mesh.positions[c as usize]) / 3.0
}

/// Probe position for a chain: the midpoint of its longest projected
/// segment, nudged into the adjacent camera-facing triangle so the ray
/// test is not confused by the fold itself.
pub fn chain_probe(mesh: &WorkMesh, cam: V3, chain: &ViewChain) -> V3 {
    let mut best = 0;
    let mut best_len = -1.0;
    for i in 0..chain.n_segments() {
        let (a, b) = chain.segment(i);
        let len = (b - a).norm();
        if len > best_len {
            best_len = len;
            best = i;
        }
    }
    let m = (chain.world[best] + chain.world[(best + 1) % chain.world.len()]) * 0.5;
    let (a, b) = chain.edges[best];
    let f = front_face_of_edge(mesh, cam, a, b);
    m + (face_centroid(mesh, f) - m) * 1e-3
}

/// Same nudge applied to an arbitrary point of a known chain segment
/// edge; used when probing extra points along a chain.
pub fn offset_probe(mesh: &WorkMesh, cam: V3, p: V3, edge: (u32, u32)) -> V3 {
    let f = front_face_of_edge(mesh, cam, edge.0, edge.1);
    p + (face_centroid(mesh, f) - p) * 1e-3
}

struct RawLoop {
    verts: Vec<u32>,
    closed: bool,
}

/// Chain the contour edge set into maximal paths: closed loops where
/// every vertex has two contour edges, open paths ending at vertices of
/// any other degree.
fn chain_contour(edges: &BTreeSet<(u32, u32)>) -> Vec<RawLoop> {
    let mut adj: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for &(a, b) in edges {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    for nb in adj.values_mut() {
        nb.sort_unstable();
    }
    let mut used: BTreeSet<(u32, u32)> = BTreeSet::new();
    let mut loops = Vec::new();
    let breakpoints: Vec<u32> = adj
        .iter()
        .filter(|(_, nb)| nb.len() != 2)
        .map(|(&v, _)| v)
        .collect();
    for &s in &breakpoints {
        for &first in &adj[&s] {
            if used.contains(&(s, first)) {
                continue;
            }
            let mut verts = vec![s, first];
            used.insert((s, first));
            used.insert((first, s));
            loop {
                let cur = *verts.last().unwrap();
                let nb = &adj[&cur];
                if nb.len() != 2 {
                    break;
                }
                let prev = verts[verts.len() - 2];
                let next = if nb[0] == prev { nb[1] } else { nb[0] };
                used.insert((cur, next));
                used.insert((next, cur));
                verts.push(next);
            }
            loops.push(RawLoop {
                verts,
                closed: false,
            });
        }
    }
    for (&s, nbrs) in &adj {
        for &first in nbrs {
            if used.contains(&(s, first)) {
                continue;
            }
            let mut verts = vec![s];
            let mut prev = s;
            let mut cur = first;
            used.insert((s, first));
            used.insert((first, s));
            while cur != s {
                verts.push(cur);
                let nb = &adj[&cur];
                let next = if nb[0] == prev { nb[1] } else { nb[0] };
                used.insert((cur, next));
                used.insert((next, cur));
                prev = cur;
                cur = next;
            }
            loops.push(RawLoop { verts, closed: true });
        }
    }
    loops
}

struct LoopGeo {
    verts: Vec<u32>,
    px: Vec<V2>,
    pos: Vec<V3>,
    closed: bool,
    /// Mesh edge under each segment.
    edge_of: Vec<(u32, u32)>,
    /// Segment lies on an unflagged open boundary.
    boundary_seg: Vec<bool>,
    /// Image side the front surface occupies along each segment.
    side: Vec<i8>,
}

fn loop_geometry(mesh: &WorkMesh, frame: &CameraFrame, lp: &RawLoop) -> Result<LoopGeo> {
    let n = lp.verts.len();
    let mut px = Vec::with_capacity(n);
    let mut pos = Vec::with_capacity(n);
    for &v in &lp.verts {
        let p = mesh.positions[v as usize];
        px.push(frame.project(p)?.0);
        pos.push(p);
    }
    let nseg = if lp.closed { n } else { n - 1 };
    let mut edge_of = Vec::with_capacity(nseg);
    let mut boundary_seg = Vec::with_capacity(nseg);
    let mut side = Vec::with_capacity(nseg);
    for i in 0..nseg {
        let (a, b) = (lp.verts[i], lp.verts[(i + 1) % n]);
        edge_of.push((a, b));
        let h = mesh
            .halfedge(a, b)
            .or_else(|| mesh.halfedge(b, a))
            .ok_or_else(|| Error::MeshOp(format!("contour edge ({a}, {b}) has no halfedge")))?;
        boundary_seg.push(mesh.he_twin(h) == NO_HE && !mesh.is_contour(h));
        let f = front_face_of_edge(mesh, frame.center, a, b);
        let (c_px, _) = frame.project(face_centroid(mesh, f))?;
        let d = cross2(px[(i + 1) % n] - px[i], c_px - px[i]);
        side.push(if d > 0.0 {
            1
        } else if d < 0.0 {
            -1
        } else {
            0
        });
    }
    Ok(LoopGeo {
        verts: lp.verts.clone(),
        px,
        pos,
        closed: lp.closed,
        edge_of,
        boundary_seg,
        side,
    })
}

#[derive(Clone, Copy)]
struct Event {
    seg: usize,
    /// 0 means exactly at vertex `seg`; otherwise a fraction along the
    /// segment.
    t: f64,
    node: u32,
    uid: u32,
}

struct CrossingCheck {
    node: u32,
    uid_near: u32,
    uid_far: u32,
    /// Depth separation too small to order reliably.
    ambiguous: bool,
    skip: bool,
}

/// Build the view map: chain the contour, locate cusps and image-space
/// crossings, split chains there, then settle per-chain QI with one
/// exact ray test each (in parallel) and verify that neighbouring
/// chains differ by the mandatory ±1 across every node.
pub fn compute_visibility(
    mesh: &WorkMesh,
    frame: &CameraFrame,
    edges: &BTreeSet<(u32, u32)>,
) -> Result<ViewMap> {
    if edges.is_empty() {
        return Ok(ViewMap::default());
    }
    let raw = chain_contour(edges);
    let geos: Vec<LoopGeo> = raw
        .iter()
        .map(|lp| loop_geometry(mesh, frame, lp))
        .collect::<Result<_>>()?;

    let mut nodes: Vec<ViewNode> = Vec::new();
    let mut events: Vec<Vec<Event>> = vec![Vec::new(); geos.len()];
    let mut next_uid = 0u32;
    let mut uid = |events: &mut Vec<Vec<Event>>, li: usize, seg: usize, t: f64, node: u32| {
        let u = next_uid;
        next_uid += 1;
        events[li].push(Event { seg, t, node, uid: u });
        u
    };

    // Cusps: the front surface swaps image sides between consecutive
    // contour segments.
    let mut cusp_uids: Vec<u32> = Vec::new();
    for (li, g) in geos.iter().enumerate() {
        let n = g.verts.len();
        let vrange = if g.closed { 0..n } else { 1..n - 1 };
        for i in vrange {
            let prev_seg = (i + g.edge_of.len() - 1) % g.edge_of.len();
            if g.boundary_seg[prev_seg] || g.boundary_seg[i % g.edge_of.len()] {
                continue;
            }
            let (s0, s1) = (g.side[prev_seg], g.side[i % g.edge_of.len()]);
            if s0 * s1 == -1 {
                let node = nodes.len() as u32;
                nodes.push(ViewNode {
                    px: g.px[i],
                    kind: NodeKind::Cusp,
                });
                let u = uid(&mut events, li, i, 0.0, node);
                cusp_uids.push(u);
            }
        }
    }

    // Image-space crossings between any two segments (including within
    // one loop). Proper interior intersections only; the mesh is
    // assumed generic enough that crossings avoid vertices.
    let mut crossings: Vec<CrossingCheck> = Vec::new();
    let segs: Vec<(usize, usize)> = geos
        .iter()
        .enumerate()
        .flat_map(|(li, g)| (0..g.edge_of.len()).map(move |si| (li, si)))
        .collect();
    let depth_eps = {
        let bbox = Aabb::from_points(mesh.positions.iter());
        1e-9 * bbox.diagonal().max(1.0)
    };
    for i in 0..segs.len() {
        let (la, sa) = segs[i];
        let ga = &geos[la];
        let (a0, a1) = (ga.px[sa], ga.px[(sa + 1) % ga.px.len()]);
        for &(lb, sb) in segs.iter().skip(i + 1) {
            let gb = &geos[lb];
            let (b0, b1) = (gb.px[sb], gb.px[(sb + 1) % gb.px.len()]);
            let Some((t, u)) = segment_intersection(a0, a1, b0, b1) else {
                continue;
            };
            let node = nodes.len() as u32;
            nodes.push(ViewNode {
                px: a0 + (a1 - a0) * t,
                kind: NodeKind::Crossing,
            });
            let pa = ga.pos[sa] + (ga.pos[(sa + 1) % ga.pos.len()] - ga.pos[sa]) * t;
            let pb = gb.pos[sb] + (gb.pos[(sb + 1) % gb.pos.len()] - gb.pos[sb]) * u;
            let (da, db) = (frame.depth(pa), frame.depth(pb));
            let ua = uid(&mut events, la, sa, t, node);
            let ub = uid(&mut events, lb, sb, u, node);
            let (uid_near, uid_far) = if da <= db { (ua, ub) } else { (ub, ua) };
            crossings.push(CrossingCheck {
                node,
                uid_near,
                uid_far,
                ambiguous: (da - db).abs() < depth_eps,
                skip: ga.boundary_seg[sa] || gb.boundary_seg[sb],
            });
        }
    }

    // Split every loop at its events.
    let mut chains: Vec<ViewChain> = Vec::new();
    let mut arcs_of_uid: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    let mut end_nodes: BTreeMap<u32, u32> = BTreeMap::new(); // mesh vertex -> node
    for (li, g) in geos.iter().enumerate() {
        let mut evs = std::mem::take(&mut events[li]);
        evs.sort_by(|x, y| (x.seg, x.t).partial_cmp(&(y.seg, y.t)).unwrap());
        let boundary = g.boundary_seg.iter().any(|&b| b);
        // Items in order around the loop: every vertex plus every event.
        struct Item {
            px: V2,
            pos: V3,
            seg: usize,
            event: Option<(u32, u32)>, // (node, uid)
        }
        let mut items: Vec<Item> = Vec::new();
        let mut ei = 0usize;
        for i in 0..g.verts.len() {
            if ei < evs.len() && evs[ei].seg == i && evs[ei].t == 0.0 {
                items.push(Item {
                    px: g.px[i],
                    pos: g.pos[i],
                    seg: i,
                    event: Some((evs[ei].node, evs[ei].uid)),
                });
                ei += 1;
            } else {
                items.push(Item {
                    px: g.px[i],
                    pos: g.pos[i],
                    seg: i,
                    event: None,
                });
            }
            while ei < evs.len() && evs[ei].seg == i && evs[ei].t > 0.0 {
                let t = evs[ei].t;
                let j = (i + 1) % g.px.len();
                items.push(Item {
                    px: g.px[i] + (g.px[j] - g.px[i]) * t,
                    pos: g.pos[i] + (g.pos[j] - g.pos[i]) * t,
                    seg: i,
                    event: Some((evs[ei].node, evs[ei].uid)),
                });
                ei += 1;
            }
        }
        debug_assert_eq!(ei, evs.len());

        let mut cut_at: Vec<usize> = items
            .iter()
            .enumerate()
            .filter(|(_, it)| it.event.is_some())
            .map(|(i, _)| i)
            .collect();
        if g.closed && cut_at.is_empty() {
            let px: Vec<V2> = items.iter().map(|it| it.px).collect();
            let world: Vec<V3> = items.iter().map(|it| it.pos).collect();
            let edges: Vec<(u32, u32)> = items.iter().map(|it| g.edge_of[it.seg]).collect();
            chains.push(ViewChain {
                px,
                world,
                edges,
                qi: 0,
                closed: true,
                start: None,
                end: None,
                boundary,
            });
            continue;
        }
        if !g.closed {
            // Open path: the two endpoints become nodes, shared when
            // several paths stop at the same junction vertex.
            for idx in [0, items.len() - 1] {
                let v = g.verts[if idx == 0 { 0 } else { g.verts.len() - 1 }];
                let node = *end_nodes.entry(v).or_insert_with(|| {
                    let id = nodes.len() as u32;
                    nodes.push(ViewNode {
                        px: items[idx].px,
                        kind: NodeKind::BoundaryEnd,
                    });
                    id
                });
                if items[idx].event.is_none() {
                    items[idx].event = Some((node, u32::MAX));
                }
            }
            cut_at = items
                .iter()
                .enumerate()
                .filter(|(_, it)| it.event.is_some())
                .map(|(i, _)| i)
                .collect();
        }

        let k = cut_at.len();
        let arc_count = if g.closed { k } else { k - 1 };
        let first_chain = chains.len();
        for a in 0..arc_count {
            let from = cut_at[a];
            let to = cut_at[(a + 1) % k];
            let mut px = Vec::new();
            let mut world = Vec::new();
            let mut edges = Vec::new();
            let mut i = from;
            loop {
                px.push(items[i].px);
                world.push(items[i].pos);
                edges.push(g.edge_of[items[i].seg]);
                i = (i + 1) % items.len();
                if i == to {
                    px.push(items[i].px);
                    world.push(items[i].pos);
                    break;
                }
            }
            chains.push(ViewChain {
                px,
                world,
                edges,
                qi: 0,
                closed: false,
                start: Some(items[from].event.unwrap().0),
                end: Some(items[to].event.unwrap().0),
                boundary,
            });
        }
        for (a, &pos) in cut_at.iter().enumerate() {
            let (_, u) = items[pos].event.unwrap();
            if u == u32::MAX {
                continue;
            }
            let (prev, next) = if g.closed {
                (
                    first_chain + (a + arc_count - 1) % arc_count,
                    first_chain + a % arc_count,
                )
            } else {
                // Interior events only; ends have uid MAX.
                (first_chain + a - 1, first_chain + a)
            };
            arcs_of_uid.insert(u, (prev, next));
        }
    }

    // One exact ray test per chain, in parallel.
    let bbox = Aabb::from_points(mesh.positions.iter());
    let eps = 1e-7 * bbox.diagonal().max(1.0);
    let cam = frame.center;
    let qis: Vec<u32> = chains
        .par_iter()
        .map(|ch| qi_at_point(mesh, cam, chain_probe(mesh, cam, ch), eps))
        .collect();
    for (ch, qi) in chains.iter_mut().zip(qis) {
        ch.qi = qi;
    }

    // Every node must relate its chains by the expected jump; a failure
    // here means the mesh upstream is inconsistent.
    for &u in &cusp_uids {
        let (p, n) = arcs_of_uid[&u];
        let (qp, qn) = (chains[p].qi as i64, chains[n].qi as i64);
        if (qp - qn).abs() != 1 {
            return Err(Error::Visibility(format!(
                "cusp joins chains {p} (QI {qp}) and {n} (QI {qn}); they must differ by 1"
            )));
        }
    }
    for c in &crossings {
        if c.skip || c.ambiguous {
            continue;
        }
        let (np, nn) = arcs_of_uid[&c.uid_near];
        let (fp, fn_) = arcs_of_uid[&c.uid_far];
        if chains[np].boundary || chains[nn].boundary || chains[fp].boundary || chains[fn_].boundary
        {
            continue;
        }
        let near_jump = chains[np].qi as i64 - chains[nn].qi as i64;
        let far_jump = chains[fp].qi as i64 - chains[fn_].qi as i64;
        if near_jump != 0 {
            return Err(Error::Visibility(format!(
                "crossing node {}: the nearer curve jumps from QI {} to {}",
                c.node, chains[np].qi, chains[nn].qi
            )));
        }
        if far_jump.abs() != 1 {
            return Err(Error::Visibility(format!(
                "crossing node {}: the occluded curve jumps from QI {} to {} instead of by 1",
                c.node, chains[fp].qi, chains[fn_].qi
            )));
        }
    }

    Ok(ViewMap { nodes, chains })
}

/// Rendering options for [`emit_svg`].
#[derive(Debug, Clone)]
pub struct SvgStyle {
    pub stroke_width: f64,
    /// Draw hidden chains dashed instead of dropping them.
    pub show_hidden: bool,
    /// Mark nodes: cusps orange, crossings green, ends grey.
    pub debug: bool,
}

impl Default for SvgStyle {
    fn default() -> Self {
        SvgStyle {
            stroke_width: 1.5,
            show_hidden: false,
            debug: false,
        }
    }
}

fn node_kind_name(kind: NodeKind) -> &'static str {
    match kind {
        NodeKind::Cusp => "cusp",
        NodeKind::Crossing => "crossing",
        NodeKind::BoundaryEnd => "boundary-end",
    }
}

/// Serialize the view map as SVG 1.1 at the camera's pixel resolution.
/// One path per chain, tagged with its id and QI; visible chains are
/// solid black, hidden ones (emitted only with `show_hidden`) dashed.
pub fn emit_svg(vm: &ViewMap, frame: &CameraFrame, style: &SvgStyle) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = frame.width,
        h = frame.height
    );
    let _ = writeln!(
        s,
        r#"<g fill="none" stroke-linecap="round" stroke-linejoin="round" stroke-width="{:.3}">"#,
        style.stroke_width
    );
    for (i, ch) in vm.chains.iter().enumerate() {
        if ch.qi > 0 && !style.show_hidden {
            continue;
        }
        let mut d = String::new();
        for (k, p) in ch.px.iter().enumerate() {
            let cmd = if k == 0 { 'M' } else { 'L' };
            let _ = write!(d, "{}{:.3},{:.3} ", cmd, p.x, p.y);
        }
        if ch.closed {
            d.push('Z');
        }
        let paint = if ch.qi == 0 {
            r##"stroke="#000000""##
        } else {
            r##"stroke="#999999" stroke-dasharray="4 3""##
        };
        let ends = match (ch.start, ch.end) {
            (Some(a), Some(b)) => format!(
                r#" data-start="{}" data-end="{}""#,
                node_kind_name(vm.nodes[a as usize].kind),
                node_kind_name(vm.nodes[b as usize].kind)
            ),
            _ => String::new(),
        };
        let _ = writeln!(
            s,
            r#"<path d="{}" {} data-chain="{}" data-qi="{}"{}/>"#,
            d.trim_end(),
            paint,
            i,
            ch.qi,
            ends
        );
    }
    let _ = writeln!(s, "</g>");
    if style.debug {
        let _ = writeln!(s, r#"<g stroke="none">"#);
        for (i, n) in vm.nodes.iter().enumerate() {
            let fill = match n.kind {
                NodeKind::Cusp => "#ff8800",
                NodeKind::Crossing => "#00aa44",
                NodeKind::BoundaryEnd => "#888888",
            };
            let _ = writeln!(
                s,
                r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="{}" data-node="{}" data-kind="{}"/>"#,
                n.px.x,
                n.px.y,
                fill,
                i,
                node_kind_name(n.kind)
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Camera;
    use crate::fixtures;
    use crate::geom::v3;
    use crate::surface::{SurfacePoint, VertClass};
    use crate::workmesh::VertexData;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame_at(center: [f64; 3], look: [f64; 3], up: [f64; 3]) -> CameraFrame {
        Camera {
            center,
            look_at: look,
            up,
            fov_deg: 45.0,
            image_width_px: 640,
            image_height_px: 480,
        }
        .frame()
        .unwrap()
    }

    fn merge_parts(parts: &[(Vec<V3>, Vec<[u32; 3]>)]) -> WorkMesh {
        let mut positions = Vec::new();
        let mut tris = Vec::new();
        for (ps, ts) in parts {
            let off = positions.len() as u32;
            positions.extend_from_slice(ps);
            tris.extend(ts.iter().map(|t| [t[0] + off, t[1] + off, t[2] + off]));
        }
        let vdata: Vec<VertexData> = (0..positions.len())
            .map(|_| VertexData::new(VertClass::Front, SurfacePoint::new(0, 0.0, 0.0)))
            .collect();
        WorkMesh::new(positions, vdata, tris).unwrap()
    }

    /// Every chain's QI must agree with fresh ray tests at `k` random
    /// interior points.
    fn oracle_check(mesh: &WorkMesh, frame: &CameraFrame, vm: &ViewMap, k: usize, seed: u64) {
        let bbox = Aabb::from_points(mesh.positions.iter());
        let eps = 1e-7 * bbox.diagonal().max(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (ci, ch) in vm.chains.iter().enumerate() {
            for _ in 0..k {
                let u: f64 = rng.gen_range(0.02..0.98);
                let (p, edge) = ch.world_at(u);
                let probe = offset_probe(mesh, frame.center, p, edge);
                let qi = qi_at_point(mesh, frame.center, probe, eps);
                assert_eq!(
                    qi, ch.qi,
                    "chain {ci} claims QI {} but a ray test at u={u:.3} sees {qi}",
                    ch.qi
                );
            }
        }
    }

    /// Chains may only intersect at nodes: any proper segment crossing
    /// must coincide with a recorded node.
    fn assert_planar(vm: &ViewMap) {
        let mut segs: Vec<(usize, V2, V2)> = Vec::new();
        for (ci, ch) in vm.chains.iter().enumerate() {
            for i in 0..ch.n_segments() {
                let (a, b) = ch.segment(i);
                segs.push((ci, a, b));
            }
        }
        for i in 0..segs.len() {
            for j in i + 1..segs.len() {
                let (_, a0, a1) = segs[i];
                let (_, b0, b1) = segs[j];
                if let Some((t, _)) = segment_intersection(a0, a1, b0, b1) {
                    let p = a0 + (a1 - a0) * t;
                    let near_node = vm.nodes.iter().any(|n| (n.px - p).norm() < 1e-6);
                    assert!(
                        near_node,
                        "chains cross at ({:.3}, {:.3}) without a node",
                        p.x, p.y
                    );
                }
            }
        }
    }

    #[test]
    fn ball_silhouette_is_one_visible_loop() {
        let mesh = fixtures::ball(v3(0.0, 0.0, 0.0), 1.0, 24, 12);
        let frame = frame_at([0.0, 0.0, 4.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        let edges = extract_contour_edges(&mesh, frame.center);
        assert!(!edges.is_empty());
        let vm = compute_visibility(&mesh, &frame, &edges).unwrap();
        assert_eq!(vm.chains.len(), 1, "a convex body has a single silhouette");
        assert!(vm.nodes.is_empty());
        let ch = &vm.chains[0];
        assert!(ch.closed);
        assert_eq!(ch.qi, 0);
        assert!(!ch.boundary);
        oracle_check(&mesh, &frame, &vm, 50, 11);
        assert_planar(&vm);
    }

    #[test]
    fn annulus_contour_is_its_boundary() {
        let mesh = fixtures::annulus(2, 24);
        let frame = frame_at([0.0, 0.0, 6.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        let edges = extract_contour_edges(&mesh, frame.center);
        // Two boundary rings, nothing else: the patch faces the camera
        // everywhere.
        let vm = compute_visibility(&mesh, &frame, &edges).unwrap();
        assert_eq!(vm.chains.len(), 2);
        for ch in &vm.chains {
            assert!(ch.closed);
            assert!(ch.boundary, "unflagged boundary edges make boundary chains");
            assert_eq!(ch.qi, 0);
        }
        assert!(vm.nodes.is_empty());
        oracle_check(&mesh, &frame, &vm, 20, 3);
    }

    #[test]
    fn stacked_balls_hide_one_arc() {
        let near = fixtures::ball_parts(v3(0.0, 0.0, 0.0), 1.0, 32, 16);
        let far = fixtures::ball_parts(v3(0.9, 0.0, -2.2), 1.0, 32, 16);
        let mesh = merge_parts(&[near, far]);
        let frame = frame_at([0.0, 0.0, 5.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        let edges = extract_contour_edges(&mesh, frame.center);
        let vm = compute_visibility(&mesh, &frame, &edges).unwrap();
        let crossings = vm
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Crossing)
            .count();
        assert_eq!(crossings, 2, "the silhouettes overlap in two points");
        assert_eq!(vm.chains.len(), 4, "each circle splits into two arcs");
        let mut qis: Vec<u32> = vm.chains.iter().map(|c| c.qi).collect();
        qis.sort_unstable();
        assert_eq!(qis, vec![0, 0, 0, 1], "only the far sphere's inner arc hides");
        oracle_check(&mesh, &frame, &vm, 50, 5);
        assert_planar(&vm);
    }

    #[test]
    fn near_axis_torus_shows_both_rings() {
        let mesh = fixtures::tri_torus(64, 32, 1.0, 0.45);
        let frame = frame_at([0.35, -0.25, 4.3], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        let edges = extract_contour_edges(&mesh, frame.center);
        let vm = compute_visibility(&mesh, &frame, &edges).unwrap();
        assert_eq!(vm.chains.len(), 2, "outer silhouette and hole ring");
        assert!(vm.nodes.is_empty(), "the nested rings never meet");
        for ch in &vm.chains {
            assert!(ch.closed);
            assert_eq!(ch.qi, 0);
        }
        oracle_check(&mesh, &frame, &vm, 30, 9);
        assert_planar(&vm);
    }

    /// A naively triangulated torus seen obliquely has no exact cusp
    /// vertices: the projected contour U-turns through sliver-thin
    /// self-occlusions whose visibility is numerically ill-defined, so
    /// the per-node audit must reject the mesh rather than emit a wrong
    /// drawing.
    #[test]
    fn dirty_mesh_contours_are_rejected_not_mislabelled() {
        let mesh = fixtures::tri_torus(64, 32, 1.0, 0.4);
        let frame = frame_at([4.5, 0.35, 0.9], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        let edges = extract_contour_edges(&mesh, frame.center);
        match compute_visibility(&mesh, &frame, &edges) {
            Err(Error::Visibility(_)) => {}
            Err(e) => panic!("wrong error class: {e}"),
            Ok(vm) => {
                // If the grid happens to land cleanly, the result must
                // still agree with brute force everywhere.
                oracle_check(&mesh, &frame, &vm, 20, 9);
            }
        }
    }

    #[test]
    fn svg_is_wellformed_and_counts_match() {
        let vm = ViewMap::default();
        let frame = frame_at([0.0, 0.0, 4.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        let empty = emit_svg(&vm, &frame, &SvgStyle::default());
        assert!(empty.starts_with("<?xml"));
        assert!(empty.contains("<svg") && empty.ends_with("</svg>\n"));
        assert!(!empty.contains("<path"));

        let near = fixtures::ball_parts(v3(0.0, 0.0, 0.0), 1.0, 32, 16);
        let far = fixtures::ball_parts(v3(0.9, 0.0, -2.2), 1.0, 32, 16);
        let mesh = merge_parts(&[near, far]);
        let edges = extract_contour_edges(&mesh, frame.center);
        let vm = compute_visibility(&mesh, &frame, &edges).unwrap();
        let solid = emit_svg(&vm, &frame, &SvgStyle::default());
        assert_eq!(solid.matches("<path").count(), 3, "hidden arc not drawn");
        let full = emit_svg(
            &vm,
            &frame,
            &SvgStyle {
                show_hidden: true,
                debug: true,
                ..SvgStyle::default()
            },
        );
        assert_eq!(full.matches("<path").count(), vm.chains.len());
        assert_eq!(full.matches("stroke-dasharray").count(), 1);
        assert_eq!(full.matches("<circle").count(), vm.nodes.len());
        assert_eq!(full.matches(r##"fill="#00aa44""##).count(), 2);
        for (i, ch) in vm.chains.iter().enumerate() {
            assert!(full.contains(&format!(r#"data-chain="{}" data-qi="{}""#, i, ch.qi)));
        }
    }

    #[test]
    fn view_map_and_svg_are_deterministic() {
        let near = fixtures::ball_parts(v3(0.0, 0.0, 0.0), 1.0, 24, 12);
        let far = fixtures::ball_parts(v3(0.9, 0.0, -2.2), 1.0, 24, 12);
        let mesh = merge_parts(&[near, far]);
        let frame = frame_at([0.0, 0.0, 5.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        let style = SvgStyle {
            show_hidden: true,
            debug: true,
            ..SvgStyle::default()
        };
        let run = || {
            let edges = extract_contour_edges(&mesh, frame.center);
            emit_svg(
                &compute_visibility(&mesh, &frame, &edges).unwrap(),
                &frame,
                &style,
            )
        };
        assert_eq!(run(), run());
    }
}

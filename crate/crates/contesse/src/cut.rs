//! Cutting multi-boundary or handled regions down to disk topology along
//! mesh edges, preferring edges that avoid cusps, inconsistent faces, and
//! image-space contour crossings.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use crate::error::{Error, Result};
use crate::geom::segment_intersection;
use crate::insert::face_side;
use crate::surface::{Surface, SurfacePoint, VertClass};
use crate::workmesh::{Projected, VertexData, WorkMesh, NO_HE};
use crate::geom::V3;

fn key(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

/// Per-edge cut admissibility for one region, keyed by vertex pair.
#[derive(Debug, Clone, Default)]
pub struct EdgeValidity {
    pub invalid: BTreeSet<(u32, u32)>,
}

impl EdgeValidity {
    pub fn is_invalid(&self, a: u32, b: u32) -> bool {
        self.invalid.contains(&key(a, b))
    }
}

/// Result of cutting one region: the added cut edges, the merged face
/// labels from region growing, and whether any invalid edge had to be
/// used.
#[derive(Debug, Clone)]
pub struct CutResult {
    pub cut: Vec<(u32, u32)>,
    pub labels: BTreeMap<u32, u32>,
    pub used_invalid: bool,
}

struct UnionFind(Vec<u32>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n as u32).collect())
    }
    fn find(&mut self, x: u32) -> u32 {
        let mut r = x;
        while self.0[r as usize] != r {
            r = self.0[r as usize];
        }
        let mut c = x;
        while self.0[c as usize] != r {
            let n = self.0[c as usize];
            self.0[c as usize] = r;
            c = n;
        }
        r
    }
    fn union(&mut self, a: u32, b: u32) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra.max(rb) as usize] = ra.min(rb);
        true
    }
}

pub fn region_faces(mesh: &WorkMesh, region: u32) -> Vec<u32> {
    mesh.live_faces()
        .filter(|&f| mesh.region[f as usize] == region)
        .collect()
}

/// Mark edges the cut should avoid: edges of inconsistent faces, edges
/// touching a cusp, and edges crossing a nearby contour edge in image
/// space (contour edges in the edge's 5-ring, widened five steps along
/// the contour graph).
pub fn mark_edge_validity(
    mesh: &WorkMesh,
    proj: &Projected,
    cam: V3,
    region: u32,
) -> EdgeValidity {
    let faces = region_faces(mesh, region);
    let in_region: HashSet<u32> = faces.iter().copied().collect();
    let mut invalid: BTreeSet<(u32, u32)> = BTreeSet::new();

    let interior: Vec<(u32, u32)> = interior_edges(mesh, &faces, &in_region);

    // Rule: every edge of a face whose orientation disagrees with its
    // region side is off limits.
    for &f in &faces {
        let side = face_side(mesh, f);
        let expected = match side {
            Some(VertClass::Front) => -1,
            Some(VertClass::Back) => 1,
            _ => 0,
        };
        let bad = expected == 0
            || mesh.face_orientation_3d(f, cam) != expected
            || mesh.face_orientation_2d(f, proj) != expected;
        if bad {
            let t = mesh.tri(f);
            for i in 0..3 {
                invalid.insert(key(t[i], t[(i + 1) % 3]));
            }
        }
    }

    // Rule: edges incident to a cusp vertex.
    for &(a, b) in &interior {
        if mesh.vdata[a as usize].cusp || mesh.vdata[b as usize].cusp {
            invalid.insert((a, b));
        }
    }

    // Rule: image-space crossings with nearby contour edges.
    let mut vertex_adj: HashMap<u32, Vec<u32>> = HashMap::new();
    let mut contour_edges: BTreeSet<(u32, u32)> = BTreeSet::new();
    let mut contour_at: HashMap<u32, Vec<(u32, u32)>> = HashMap::new();
    for f in mesh.live_faces() {
        for i in 0..3u32 {
            let h = f * 3 + i;
            let (a, b) = (mesh.he_from(h), mesh.he_to(h));
            vertex_adj.entry(a).or_default().push(b);
            if mesh.is_contour(h) && contour_edges.insert(key(a, b)) {
                contour_at.entry(a).or_default().push(key(a, b));
                contour_at.entry(b).or_default().push(key(a, b));
            }
        }
    }
    for &(a, b) in &interior {
        if invalid.contains(&(a, b)) {
            continue;
        }
        // Vertices within five edges of either endpoint.
        let mut ring: HashSet<u32> = HashSet::new();
        let mut frontier = vec![a, b];
        ring.extend(&frontier);
        for _ in 0..5 {
            let mut next = Vec::new();
            for &v in &frontier {
                if let Some(ns) = vertex_adj.get(&v) {
                    for &u in ns {
                        if ring.insert(u) {
                            next.push(u);
                        }
                    }
                }
            }
            frontier = next;
        }
        // Seed contour edges touching the ring, widened along the
        // contour graph.
        let mut near: BTreeSet<(u32, u32)> = BTreeSet::new();
        let mut cfrontier: Vec<(u32, u32)> = Vec::new();
        for &v in &ring {
            if let Some(ces) = contour_at.get(&v) {
                for &ce in ces {
                    if near.insert(ce) {
                        cfrontier.push(ce);
                    }
                }
            }
        }
        for _ in 0..5 {
            let mut next = Vec::new();
            for &(ca, cb) in &cfrontier {
                for v in [ca, cb] {
                    if let Some(ces) = contour_at.get(&v) {
                        for &ce in ces {
                            if near.insert(ce) {
                                next.push(ce);
                            }
                        }
                    }
                }
            }
            cfrontier = next;
        }
        let (pa, pb) = (proj.xy[a as usize], proj.xy[b as usize]);
        for &(ca, cb) in &near {
            if ca == a || ca == b || cb == a || cb == b {
                continue;
            }
            if segment_intersection(pa, pb, proj.xy[ca as usize], proj.xy[cb as usize]).is_some()
            {
                invalid.insert((a, b));
                break;
            }
        }
    }

    invalid.retain(|&(a, b)| {
        mesh.halfedge(a, b).is_some() || mesh.halfedge(b, a).is_some()
    });
    EdgeValidity { invalid }
}

fn interior_edges(mesh: &WorkMesh, faces: &[u32], in_region: &HashSet<u32>) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for &f in faces {
        for i in 0..3u32 {
            let h = f * 3 + i;
            let t = mesh.he_twin(h);
            if t == NO_HE || mesh.is_contour(h) || !in_region.contains(&(t / 3)) {
                continue;
            }
            let (a, b) = (mesh.he_from(h), mesh.he_to(h));
            if a < b {
                out.push((a, b));
            }
        }
    }
    out.sort_unstable();
    out
}

fn border_halfedges(mesh: &WorkMesh, region: u32) -> Vec<u32> {
    let mut out = Vec::new();
    for f in region_faces(mesh, region) {
        for i in 0..3u32 {
            let h = f * 3 + i;
            let t = mesh.he_twin(h);
            if t == NO_HE || mesh.region[(t / 3) as usize] != region {
                out.push(h);
            }
        }
    }
    out
}

/// Boundary loops of a region as halfedge cycles.
pub fn region_boundary_loops(mesh: &WorkMesh, region: u32) -> Vec<Vec<u32>> {
    let border: BTreeSet<u32> = border_halfedges(mesh, region).into_iter().collect();
    let mut seen: BTreeSet<u32> = BTreeSet::new();
    let mut loops = Vec::new();
    for &h0 in &border {
        if seen.contains(&h0) {
            continue;
        }
        let mut cycle = Vec::new();
        let mut h = h0;
        loop {
            cycle.push(h);
            seen.insert(h);
            // Rotate around the head vertex until the next border edge.
            let mut e = mesh.he_next(h);
            loop {
                let t = mesh.he_twin(e);
                if t == NO_HE || mesh.region[(t / 3) as usize] != region {
                    break;
                }
                e = mesh.he_next(t);
            }
            h = e;
            if h == h0 {
                break;
            }
        }
        loops.push(cycle);
    }
    loops
}

/// When some boundary loop of the region has no valid interior edge
/// leaving it, split a consistent triangle that touches the loop at a
/// single non-cusp vertex so that a usable edge appears. Returns whether
/// the mesh changed; validity must be recomputed afterwards.
pub fn ensure_contact_edges(
    mesh: &mut WorkMesh,
    surface: Option<&Surface>,
    cam: V3,
    region: u32,
    validity: &EdgeValidity,
) -> Result<bool> {
    let faces = region_faces(mesh, region);
    let in_region: HashSet<u32> = faces.iter().copied().collect();
    let interior = interior_edges(mesh, &faces, &in_region);
    let mut touched: HashMap<u32, bool> = HashMap::new(); // vertex -> has valid exit
    for &(a, b) in &interior {
        let valid = !validity.is_invalid(a, b);
        for v in [a, b] {
            *touched.entry(v).or_insert(false) |= valid;
        }
    }
    let loops = region_boundary_loops(mesh, region);
    let mut changed = false;
    for cycle in loops {
        let loop_verts: BTreeSet<u32> = cycle.iter().map(|&h| mesh.he_from(h)).collect();
        let has_exit = loop_verts
            .iter()
            .any(|v| touched.get(v).copied().unwrap_or(false));
        if has_exit {
            continue;
        }
        // A consistent triangle meeting the loop at exactly one vertex.
        let candidate = faces.iter().copied().find(|&f| {
            let t = mesh.tri(f);
            let on_loop: Vec<u32> = t
                .iter()
                .copied()
                .filter(|v| loop_verts.contains(v))
                .collect();
            if on_loop.len() != 1 || mesh.vdata[on_loop[0] as usize].cusp {
                return false;
            }
            let expected = match face_side(mesh, f) {
                Some(VertClass::Front) => -1,
                Some(VertClass::Back) => 1,
                _ => return false,
            };
            mesh.face_orientation_3d(f, cam) == expected
        });
        let Some(f) = candidate else {
            continue; // fall back to invalid edges in the cut
        };
        let t = mesh.tri(f);
        let i = (0..3).find(|&i| loop_verts.contains(&t[i])).unwrap();
        let (a, b) = (t[(i + 1) % 3], t[(i + 2) % 3]);
        let h = mesh
            .halfedge(a, b)
            .ok_or_else(|| Error::MeshOp(format!("missing halfedge ({a},{b})")))?;
        let side_tag = face_side(mesh, f).unwrap();
        let (pos, sp) = split_point(mesh, surface, a, b);
        let mut data = VertexData::new(side_tag, sp);
        data.tag = side_tag;
        mesh.split_edge(h, pos, data)?;
        changed = true;
    }
    Ok(changed)
}

fn split_point(
    mesh: &WorkMesh,
    surface: Option<&Surface>,
    a: u32,
    b: u32,
) -> (V3, SurfacePoint) {
    if let Some(surface) = surface {
        let sa = surface.aliases(mesh.vdata[a as usize].sps[0]);
        let sb = surface.aliases(mesh.vdata[b as usize].sps[0]);
        for pa in &sa {
            for pb in &sb {
                if pa.face == pb.face {
                    let sp = SurfacePoint::new(
                        pa.face,
                        0.5 * (pa.u + pb.u),
                        0.5 * (pa.v + pb.v),
                    );
                    return (surface.eval(sp).position, sp);
                }
            }
        }
    }
    let pos = (mesh.positions[a as usize] + mesh.positions[b as usize]) * 0.5;
    (pos, mesh.vdata[a as usize].sps[0])
}

/// Grow labeled components from invalid-edge seeds with a three-level
/// priority queue, collecting the edges where equal labels meet, then
/// prune cut trees to a fixed point. Cut flags are written to the mesh.
pub fn cut_to_disk(
    mesh: &mut WorkMesh,
    region: u32,
    validity: &EdgeValidity,
) -> Result<CutResult> {
    let faces = region_faces(mesh, region);
    if faces.is_empty() {
        return Err(Error::Region {
            region,
            msg: "cut requested for empty region".into(),
        });
    }
    let in_region: HashSet<u32> = faces.iter().copied().collect();
    let interior = interior_edges(mesh, &faces, &in_region);
    let face_at = |a: u32, b: u32| -> (u32, u32) {
        let h = mesh.halfedge(a, b).unwrap();
        (h / 3, mesh.he_twin(h) / 3)
    };

    // Component partition so disconnected regions are handled piecewise.
    let fidx: HashMap<u32, u32> = faces.iter().enumerate().map(|(i, &f)| (f, i as u32)).collect();
    let mut comp = UnionFind::new(faces.len());
    for &(a, b) in &interior {
        let (f0, f1) = face_at(a, b);
        comp.union(fidx[&f0], fidx[&f1]);
    }
    let mut comp_faces: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for &f in &faces {
        comp_faces.entry(comp.find(fidx[&f])).or_default().push(f);
    }

    let mut all_cut: BTreeSet<(u32, u32)> = BTreeSet::new();
    let mut labels: BTreeMap<u32, u32> = BTreeMap::new();
    for faces_c in comp_faces.values() {
        let sub: HashSet<u32> = faces_c.iter().copied().collect();
        let edges: Vec<(u32, u32)> = interior
            .iter()
            .copied()
            .filter(|&(a, b)| sub.contains(&face_at(a, b).0))
            .collect();
        grow_component(faces_c, &edges, validity, &face_at, &mut all_cut, &mut labels)?;
    }

    // Valence-1 pruning against the full border + cut graph.
    let border: BTreeSet<(u32, u32)> = border_halfedges(mesh, region)
        .iter()
        .map(|&h| key(mesh.he_from(h), mesh.he_to(h)))
        .collect();
    let mut degree: HashMap<u32, i64> = HashMap::new();
    let mut cut_at: HashMap<u32, BTreeSet<(u32, u32)>> = HashMap::new();
    for &(a, b) in border.iter().chain(all_cut.iter()) {
        *degree.entry(a).or_insert(0) += 1;
        *degree.entry(b).or_insert(0) += 1;
    }
    for &(a, b) in &all_cut {
        cut_at.entry(a).or_default().insert((a, b));
        cut_at.entry(b).or_default().insert((a, b));
    }
    let mut pending: VecDeque<u32> = degree
        .iter()
        .filter(|&(_, &d)| d == 1)
        .map(|(&v, _)| v)
        .collect();
    let mut pending_sorted: Vec<u32> = pending.drain(..).collect();
    pending_sorted.sort_unstable();
    let mut pending: VecDeque<u32> = pending_sorted.into();
    while let Some(v) = pending.pop_front() {
        if degree.get(&v).copied().unwrap_or(0) != 1 {
            continue;
        }
        let Some(&e) = cut_at.get(&v).and_then(|s| s.iter().next()) else {
            continue; // lone border stub: structurally impossible, skip
        };
        let (a, b) = e;
        all_cut.remove(&e);
        for u in [a, b] {
            *degree.get_mut(&u).unwrap() -= 1;
            cut_at.get_mut(&u).unwrap().remove(&e);
            if degree[&u] == 1 {
                pending.push_back(u);
            }
        }
    }

    let used_invalid = all_cut.iter().any(|&(a, b)| validity.is_invalid(a, b));
    for &(a, b) in &all_cut {
        if let Some(h) = mesh.halfedge(a, b) {
            mesh.set_cut(h, true);
        }
    }
    Ok(CutResult {
        cut: all_cut.into_iter().collect(),
        labels,
        used_invalid,
    })
}

fn grow_component(
    faces: &[u32],
    edges: &[(u32, u32)],
    validity: &EdgeValidity,
    face_at: &impl Fn(u32, u32) -> (u32, u32),
    cut: &mut BTreeSet<(u32, u32)>,
    labels_out: &mut BTreeMap<u32, u32>,
) -> Result<()> {
    let mut label: HashMap<u32, u32> = HashMap::new();
    let mut seeds: Vec<u32> = Vec::new();
    for &(a, b) in edges {
        if validity.is_invalid(a, b) {
            let (f0, f1) = face_at(a, b);
            for f in [f0, f1] {
                if !label.contains_key(&f) {
                    label.insert(f, seeds.len() as u32);
                    seeds.push(f);
                }
            }
        }
    }
    if seeds.is_empty() {
        // No invalid edges: a single seed grows the classic cut.
        let f = *faces.iter().min().unwrap();
        label.insert(f, 0);
        seeds.push(f);
    }
    let mut uf = UnionFind::new(seeds.len());

    let edges_of_face: HashMap<u32, Vec<(u32, u32)>> = {
        let mut m: HashMap<u32, Vec<(u32, u32)>> = HashMap::new();
        for &(a, b) in edges {
            let (f0, f1) = face_at(a, b);
            m.entry(f0).or_default().push((a, b));
            m.entry(f1).or_default().push((a, b));
        }
        m
    };

    let mut queues: [VecDeque<(u32, u32)>; 3] =
        [VecDeque::new(), VecDeque::new(), VecDeque::new()];
    let mut enqueued: HashSet<(u32, u32)> = HashSet::new();
    let priority = |e: (u32, u32), label: &HashMap<u32, u32>| -> usize {
        let (f0, f1) = face_at(e.0, e.1);
        let assigned = (label.contains_key(&f0), label.contains_key(&f1));
        match assigned {
            (true, true) => {
                if validity.is_invalid(e.0, e.1) {
                    2
                } else {
                    0
                }
            }
            (false, false) => unreachable!("edge enqueued with no assigned face"),
            _ => 1,
        }
    };
    for &e in edges {
        let (f0, f1) = face_at(e.0, e.1);
        if label.contains_key(&f0) || label.contains_key(&f1) {
            enqueued.insert(e);
            queues[priority(e, &label)].push_back(e);
        }
    }
    while let Some(e) = queues
        .iter_mut()
        .rev()
        .find_map(|q| if q.is_empty() { None } else { q.pop_front() })
    {
        let (f0, f1) = face_at(e.0, e.1);
        match (label.get(&f0).copied(), label.get(&f1).copied()) {
            (Some(l0), Some(l1)) => {
                if uf.find(l0) == uf.find(l1) {
                    cut.insert(key(e.0, e.1));
                } else {
                    uf.union(l0, l1);
                }
            }
            (Some(l), None) | (None, Some(l)) => {
                let newly = if label.contains_key(&f0) { f1 } else { f0 };
                label.insert(newly, l);
                let mut add: Vec<(u32, u32)> = edges_of_face[&newly]
                    .iter()
                    .copied()
                    .filter(|&d| d != e && !enqueued.contains(&d))
                    .collect();
                add.sort_unstable();
                for d in add {
                    enqueued.insert(d);
                    queues[priority(d, &label)].push_back(d);
                }
            }
            (None, None) => unreachable!(),
        }
    }
    for &f in faces {
        let Some(&l) = label.get(&f) else {
            return Err(Error::MeshOp(format!(
                "face {f} never reached during region growing"
            )));
        };
        labels_out.insert(f, uf.find(l));
    }
    Ok(())
}

/// Whether the subcomplex of `faces` is a topological disk, treating a
/// halfedge as interior only when `is_interior` allows it and its twin
/// stays inside the subset. Verified by corner-splitting Euler count and
/// face connectivity.
pub fn subcomplex_is_disk(
    mesh: &WorkMesh,
    faces: &[u32],
    is_interior: impl Fn(u32) -> bool,
) -> bool {
    if faces.is_empty() {
        return false;
    }
    let fidx: HashMap<u32, u32> = faces.iter().enumerate().map(|(i, &f)| (f, i as u32)).collect();
    let inside = |h: u32| -> bool {
        let t = mesh.he_twin(h);
        t != NO_HE && fidx.contains_key(&(t / 3)) && is_interior(h) && is_interior(t)
    };
    let mut corners = UnionFind::new(faces.len() * 3);
    let mut fconn = UnionFind::new(faces.len());
    let corner = |f: u32, slot: u32, fidx: &HashMap<u32, u32>| fidx[&f] * 3 + slot;
    let mut interior_halfedges = 0usize;
    let mut border_halfedges = 0usize;
    for &f in faces {
        for i in 0..3u32 {
            let h = f * 3 + i;
            if inside(h) {
                interior_halfedges += 1;
                let t = mesh.he_twin(h);
                let (tf, ti) = (t / 3, t % 3);
                // Same-vertex corners across the shared edge.
                corners.union(corner(f, i, &fidx), corner(tf, (ti + 1) % 3, &fidx));
                corners.union(corner(f, (i + 1) % 3, &fidx), corner(tf, ti, &fidx));
                fconn.union(fidx[&f], fidx[&tf]);
            } else {
                border_halfedges += 1;
            }
        }
    }
    let components = {
        let mut roots: BTreeSet<u32> = BTreeSet::new();
        for i in 0..faces.len() as u32 {
            roots.insert(fconn.find(i));
        }
        roots.len()
    };
    if components != 1 {
        return false;
    }
    let vprime = {
        let mut roots: BTreeSet<u32> = BTreeSet::new();
        for i in 0..(faces.len() * 3) as u32 {
            roots.insert(corners.find(i));
        }
        roots.len() as i64
    };
    let eprime = (interior_halfedges / 2 + border_halfedges) as i64;
    let chi = vprime - eprime + faces.len() as i64;
    chi == 1
}

/// Disk test for a region under its current cut flags.
pub fn cut_open_is_disk(mesh: &WorkMesh, region: u32) -> bool {
    let faces = region_faces(mesh, region);
    subcomplex_is_disk(mesh, &faces, |h| !mesh.is_contour(h) && !mesh.is_cut(h))
}

/// Disk test for a region ignoring cut flags (whether a cut is needed at
/// all).
pub fn region_is_disk(mesh: &WorkMesh, region: u32) -> bool {
    let faces = region_faces(mesh, region);
    subcomplex_is_disk(mesh, &faces, |h| !mesh.is_contour(h))
}

/// Exact existence test for an all-valid cut: cut the region along every
/// valid interior edge; a valid cut exists if and only if every remaining
/// piece (faces linked only through invalid interior edges) is a disk.
pub fn all_valid_cut_exists(mesh: &WorkMesh, region: u32, validity: &EdgeValidity) -> bool {
    let faces = region_faces(mesh, region);
    let in_region: HashSet<u32> = faces.iter().copied().collect();
    let fidx: HashMap<u32, u32> = faces.iter().enumerate().map(|(i, &f)| (f, i as u32)).collect();
    let mut uf = UnionFind::new(faces.len());
    for &(a, b) in &interior_edges(mesh, &faces, &in_region) {
        if validity.is_invalid(a, b) {
            let h = mesh.halfedge(a, b).unwrap();
            uf.union(fidx[&(h / 3)], fidx[&(mesh.he_twin(h) / 3)]);
        }
    }
    let mut pieces: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for &f in &faces {
        pieces.entry(uf.find(fidx[&f])).or_default().push(f);
    }
    pieces.values().all(|piece| {
        let inside: HashSet<u32> = piece.iter().copied().collect();
        subcomplex_is_disk(mesh, piece, |h| {
            let t = mesh.he_twin(h);
            if t == NO_HE || !inside.contains(&(t / 3)) || mesh.is_contour(h) {
                return false;
            }
            validity.is_invalid(mesh.he_from(h), mesh.he_to(h))
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{annulus, handled_patch};
    use crate::geom::v3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn no_stray_valence_one(mesh: &WorkMesh, region: u32, cut: &[(u32, u32)]) {
        let border: BTreeSet<(u32, u32)> = border_halfedges(mesh, region)
            .iter()
            .map(|&h| key(mesh.he_from(h), mesh.he_to(h)))
            .collect();
        let mut degree: HashMap<u32, usize> = HashMap::new();
        for &(a, b) in border.iter().chain(cut.iter()) {
            *degree.entry(a).or_insert(0) += 1;
            *degree.entry(b).or_insert(0) += 1;
        }
        for &(a, b) in cut {
            assert!(degree[&a] != 1 && degree[&b] != 1, "stray cut edge ({a},{b})");
        }
    }

    #[test]
    fn clean_annulus_gets_valid_cut() {
        let mut mesh = annulus(3, 12);
        assert!(!region_is_disk(&mesh, 0), "annulus is not a disk");
        let validity = EdgeValidity::default();
        assert!(all_valid_cut_exists(&mesh, 0, &validity));
        let result = cut_to_disk(&mut mesh, 0, &validity).unwrap();
        assert!(!result.used_invalid);
        assert!(!result.cut.is_empty());
        assert!(cut_open_is_disk(&mesh, 0), "cut annulus must be a disk");
        no_stray_valence_one(&mesh, 0, &result.cut);
    }

    #[test]
    fn barrier_with_detour_is_avoided() {
        let (nr, na) = (3, 16);
        let mut mesh = annulus(nr, na);
        // Invalidate all radial edges in angular cells 2..14, leaving a
        // narrow valid corridor near j=0.
        let mut invalid = BTreeSet::new();
        let vid = |i: usize, j: usize| (i * na + j % na) as u32;
        for i in 0..=nr {
            for j in 2..14 {
                if i < nr {
                    invalid.insert(key(vid(i, j), vid(i + 1, j)));
                    invalid.insert(key(vid(i, j + 1), vid(i + 1, j)));
                    invalid.insert(key(vid(i, j), vid(i + 1, j + 1)));
                }
            }
        }
        let validity = EdgeValidity { invalid };
        assert!(all_valid_cut_exists(&mesh, 0, &validity));
        let result = cut_to_disk(&mut mesh, 0, &validity).unwrap();
        assert!(!result.used_invalid, "valid detour must be used");
        for &(a, b) in &result.cut {
            assert!(!validity.is_invalid(a, b));
        }
        assert!(cut_open_is_disk(&mesh, 0));
    }

    #[test]
    fn full_invalid_ring_forces_invalid_cut() {
        let (nr, na) = (4, 12);
        let mut mesh = annulus(nr, na);
        // Invalidate every edge crossing the middle ring: all-valid cuts
        // cannot connect the two boundaries.
        let mut invalid = BTreeSet::new();
        let vid = |i: usize, j: usize| (i * na + j % na) as u32;
        for j in 0..na {
            invalid.insert(key(vid(1, j), vid(2, j)));
            invalid.insert(key(vid(1, j + 1), vid(2, j)));
            invalid.insert(key(vid(1, j), vid(2, j + 1)));
        }
        let validity = EdgeValidity { invalid };
        assert!(!all_valid_cut_exists(&mesh, 0, &validity));
        let result = cut_to_disk(&mut mesh, 0, &validity).unwrap();
        assert!(result.used_invalid, "no valid cut exists here");
        assert!(cut_open_is_disk(&mesh, 0), "cut must still produce a disk");
    }

    #[test]
    fn handled_patch_cut_kills_genus() {
        let mut mesh = handled_patch(8, 6);
        assert!(!region_is_disk(&mesh, 0));
        let validity = EdgeValidity::default();
        assert!(all_valid_cut_exists(&mesh, 0, &validity));
        let result = cut_to_disk(&mut mesh, 0, &validity).unwrap();
        assert!(!result.used_invalid);
        assert!(cut_open_is_disk(&mesh, 0), "handle must be cut open");
        no_stray_valence_one(&mesh, 0, &result.cut);
    }

    /// Reachability cross-check used only for annuli: an all-valid cut
    /// exists iff the two boundary loops connect through valid interior
    /// edges.
    fn annulus_reachability(mesh: &WorkMesh, validity: &EdgeValidity) -> bool {
        let loops = region_boundary_loops(mesh, 0);
        assert_eq!(loops.len(), 2);
        let side: Vec<BTreeSet<u32>> = loops
            .iter()
            .map(|l| l.iter().map(|&h| mesh.he_from(h)).collect())
            .collect();
        let faces = region_faces(mesh, 0);
        let in_region: HashSet<u32> = faces.iter().copied().collect();
        let mut adj: HashMap<u32, Vec<u32>> = HashMap::new();
        for &(a, b) in &interior_edges(mesh, &faces, &in_region) {
            if !validity.is_invalid(a, b) {
                adj.entry(a).or_default().push(b);
                adj.entry(b).or_default().push(a);
            }
        }
        let mut seen: BTreeSet<u32> = side[0].clone();
        let mut frontier: Vec<u32> = side[0].iter().copied().collect();
        while let Some(v) = frontier.pop() {
            if side[1].contains(&v) {
                return true;
            }
            for &u in adj.get(&v).into_iter().flatten() {
                if seen.insert(u) {
                    frontier.push(u);
                }
            }
        }
        side[1].iter().any(|v| seen.contains(v))
    }

    #[test]
    fn random_corpus_returns_valid_cut_whenever_one_exists() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xc07);
        let mut exists_count = 0;
        let mut blocked_count = 0;
        for case in 0..160 {
            let annular = case % 2 == 0;
            let (mut mesh, ring_block) = if annular {
                let nr = rng.gen_range(2..5);
                let na = rng.gen_range(6..14);
                (annulus(nr, na), (case % 10 == 4).then_some((nr, na)))
            } else {
                let nu = rng.gen_range(5..9);
                let nv = rng.gen_range(4..7);
                (handled_patch(nu, nv), None)
            };
            let faces = region_faces(&mesh, 0);
            let in_region: HashSet<u32> = faces.iter().copied().collect();
            let p = rng.gen_range(0.0..0.35);
            let mut invalid: BTreeSet<(u32, u32)> = interior_edges(&mesh, &faces, &in_region)
                .into_iter()
                .filter(|_| rng.gen_bool(p))
                .collect();
            if let Some((nr, na)) = ring_block {
                // Sever the annulus along a full ring so no valid cut can
                // join the two boundaries.
                let i = rng.gen_range(0..nr);
                let vid = |i: usize, j: usize| (i * na + j % na) as u32;
                for j in 0..na {
                    invalid.insert(key(vid(i, j), vid(i + 1, j)));
                    invalid.insert(key(vid(i, j + 1), vid(i + 1, j)));
                    invalid.insert(key(vid(i, j), vid(i + 1, j + 1)));
                }
            }
            let validity = EdgeValidity { invalid };
            let exists = all_valid_cut_exists(&mesh, 0, &validity);
            if annular {
                assert_eq!(
                    exists,
                    annulus_reachability(&mesh, &validity),
                    "oracle vs reachability, case {case}"
                );
            }
            let result = cut_to_disk(&mut mesh, 0, &validity).unwrap();
            assert!(cut_open_is_disk(&mesh, 0), "case {case} not a disk after cut");
            no_stray_valence_one(&mesh, 0, &result.cut);
            if exists {
                exists_count += 1;
                assert!(
                    !result.used_invalid,
                    "case {case}: valid cut exists but invalid edges were used"
                );
            } else {
                blocked_count += 1;
            }
        }
        assert!(exists_count > 40, "corpus too easy: {exists_count} feasible");
        assert!(blocked_count > 8, "corpus too easy: {blocked_count} blocked");
    }

    /// Flat strip at z=3 seen from the origin with one folded-over flap:
    /// base and extension triangles are consistent back-facing, the flap
    /// is inverted, and its edge (d,f) is a contour edge crossing the
    /// interior edge {a,c} in the image.
    fn crossing_fixture() -> (WorkMesh, crate::camera::CameraFrame) {
        let pts2 = [
            (0.0, 0.0),  // a
            (4.0, 0.0),  // b
            (4.0, 1.5),  // c
            (0.0, 1.5),  // d
            (3.0, 0.2),  // f
            (8.0, 0.0),  // e1
            (8.0, 1.5),  // e2
            (12.0, 0.0), // g1
            (12.0, 1.5), // g2
        ];
        let positions: Vec<V3> = pts2.iter().map(|&(x, y)| v3(x, y, 3.0)).collect();
        let tris = vec![
            [0, 1, 2],
            [0, 2, 3],
            [0, 3, 4],
            [1, 5, 6],
            [1, 6, 2],
            [5, 7, 8],
            [5, 8, 6],
        ];
        let vdata: Vec<VertexData> = (0..positions.len())
            .map(|_| VertexData::new(VertClass::Back, SurfacePoint::new(0, 0.0, 0.0)))
            .collect();
        let mut mesh = WorkMesh::new(positions, vdata, tris).unwrap();
        for f in 0..mesh.n_faces_raw() as u32 {
            mesh.region[f as usize] = 0;
        }
        let h = mesh.halfedge(3, 4).or_else(|| mesh.halfedge(4, 3)).unwrap();
        mesh.set_contour(h, true);
        let cam = crate::camera::Camera {
            center: [0.0, 0.0, 0.0],
            look_at: [0.0, 0.0, 1.0],
            up: [0.0, 1.0, 0.0],
            fov_deg: 60.0,
            image_width_px: 640,
            image_height_px: 480,
        };
        (mesh, cam.frame().unwrap())
    }

    #[test]
    fn validity_rules_flag_the_right_edges() {
        let (mesh, frame) = crossing_fixture();
        let proj = mesh.project_all(&frame).unwrap();
        let validity = mark_edge_validity(&mesh, &proj, frame.center, 0);
        // Inverted flap: its interior edge {a,d} is invalid.
        assert!(validity.is_invalid(0, 3), "flap edge must be invalid");
        // Image-space crossing with the contour edge three rings away.
        assert!(validity.is_invalid(0, 2), "crossing edge must be invalid");
        // Consistent edges away from the crossing stay valid.
        assert!(!validity.is_invalid(1, 2), "{:?}", validity.invalid);
        assert!(!validity.is_invalid(5, 6));
        // Cusp adjacency invalidates incident interior edges.
        let mut mesh2 = mesh.clone();
        mesh2.vdata[1].cusp = true;
        let validity2 = mark_edge_validity(&mesh2, &proj, frame.center, 0);
        assert!(validity2.is_invalid(1, 2));
        assert!(validity2.is_invalid(1, 6));
    }

    #[test]
    fn contact_edge_split_when_loop_is_ringed() {
        let (nr, na) = (3, 8);
        let mut mesh = annulus(nr, na);
        let cam = v3(0.0, 0.0, 5.0);
        // Simulate an inner rim fully ringed by unusable edges.
        let faces = region_faces(&mesh, 0);
        let in_region: HashSet<u32> = faces.iter().copied().collect();
        let invalid: BTreeSet<(u32, u32)> = interior_edges(&mesh, &faces, &in_region)
            .into_iter()
            .filter(|&(a, b)| (a as usize) < na || (b as usize) < na)
            .collect();
        let validity = EdgeValidity { invalid };
        let before = mesh.n_vertices();
        let changed = ensure_contact_edges(&mut mesh, None, cam, 0, &validity).unwrap();
        assert!(changed, "ringed loop must trigger a split");
        assert_eq!(mesh.n_vertices(), before + 1);
        mesh.integrity_check().unwrap();
        // The loop with pre-existing valid exits stays untouched.
        let mut clean = annulus(2, 6);
        let changed = ensure_contact_edges(&mut clean, None, cam, 0, &EdgeValidity::default())
            .unwrap();
        assert!(!changed);
        // With every contact vertex a cusp, no candidate exists; proceed.
        let mut blocked = annulus(2, 6);
        for v in 0..6 {
            blocked.vdata[v].cusp = true;
        }
        let faces = region_faces(&blocked, 0);
        let in_region: HashSet<u32> = faces.iter().copied().collect();
        let invalid: BTreeSet<(u32, u32)> = interior_edges(&blocked, &faces, &in_region)
            .into_iter()
            .filter(|&(a, b)| a < 6 || b < 6)
            .collect();
        let validity = EdgeValidity { invalid };
        let changed = ensure_contact_edges(&mut blocked, None, cam, 0, &validity).unwrap();
        assert!(!changed, "no usable triangle: fall through to invalid cut");
    }

    #[test]
    fn determinism_of_cut_choice() {
        let run = || {
            let mut mesh = annulus(3, 14);
            let faces = region_faces(&mesh, 0);
            let in_region: HashSet<u32> = faces.iter().copied().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let invalid: BTreeSet<(u32, u32)> = interior_edges(&mesh, &faces, &in_region)
                .into_iter()
                .filter(|_| rng.gen_bool(0.2))
                .collect();
            let validity = EdgeValidity { invalid };
            cut_to_disk(&mut mesh, 0, &validity).unwrap().cut
        };
        assert_eq!(run(), run());
    }
}

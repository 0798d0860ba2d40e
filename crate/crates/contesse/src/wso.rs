//! Self-overlap machinery for projected region boundaries.
//!
//! A closed polygon bounds an immersed disk when it admits a triangulation
//! by diagonals in which every triangle is positively oriented and the
//! angle accumulated at each boundary vertex stays within its budget: one
//! full turn normally, two at vertices tagged singular (image-space cusps).
//! `check_wso` decides membership with an interval DP over sub-chains;
//! `wso_oracle` re-decides by exhaustive search and backs the test corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::camera::CameraFrame;
use crate::error::{Error, Result};
use crate::geom::{angle_at, V2};
use crate::predicates::orient2d;
use crate::workmesh::{WorkMesh, NO_HE};

/// Slack applied to all angle-sum comparisons, in radians.
pub const THETA_TOL: f64 = 1e-6;

/// Sentinel for vertices with no mesh backpointer (synthetic fixtures).
pub const NO_VERT: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct TaggedPolygon {
    pub points: Vec<V2>,
    pub singular: Vec<bool>,
    /// Backpointers into the originating mesh, `NO_VERT` when synthetic.
    pub mesh_verts: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct PolyJson {
    vertices: Vec<[f64; 2]>,
    singular: Vec<usize>,
}

impl TaggedPolygon {
    pub fn new(points: Vec<V2>, singular_idx: &[usize]) -> TaggedPolygon {
        let mut singular = vec![false; points.len()];
        for &i in singular_idx {
            singular[i] = true;
        }
        let mesh_verts = vec![NO_VERT; points.len()];
        TaggedPolygon {
            points,
            singular,
            mesh_verts,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if n < 3 {
            return Err(Error::Other(format!("polygon has {n} vertices")));
        }
        if self.singular.len() != n || self.mesh_verts.len() != n {
            return Err(Error::Other("polygon attribute length mismatch".into()));
        }
        for i in 0..n {
            let j = (i + 1) % n;
            if self.points[i] == self.points[j] {
                return Err(Error::Other(format!(
                    "repeated consecutive point at index {i}"
                )));
            }
        }
        let a = self.points[0];
        let b = self.points[1];
        if !self
            .points
            .iter()
            .any(|&c| orient2d(a, b, c) != 0)
        {
            return Err(Error::Other("zero-area polygon: all points collinear".into()));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<TaggedPolygon> {
        let pj: PolyJson = serde_json::from_str(s)?;
        let points = pj.vertices.iter().map(|v| V2::new(v[0], v[1])).collect();
        Ok(TaggedPolygon::new(points, &pj.singular))
    }

    pub fn to_json_string(&self) -> String {
        let pj = PolyJson {
            vertices: self.points.iter().map(|p| [p.x, p.y]).collect(),
            singular: self
                .singular
                .iter()
                .enumerate()
                .filter(|&(_, &s)| s)
                .map(|(i, _)| i)
                .collect(),
        };
        serde_json::to_string_pretty(&pj).expect("polygon serializes")
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<TaggedPolygon> {
        TaggedPolygon::from_json_str(&std::fs::read_to_string(path)?)
    }

    fn cap(&self, i: usize) -> f64 {
        if self.singular[i] {
            4.0 * PI + THETA_TOL
        } else {
            2.0 * PI + THETA_TOL
        }
    }
}

/// A positively-oriented triangulation by diagonals. Triangle corners index
/// the polygon; `ident` maps each polygon index to a canonical vertex id so
/// cut-duplicated copies can be identified back after stitching.
#[derive(Debug, Clone)]
pub struct WsoTriangulation {
    pub points: Vec<V2>,
    pub tris: Vec<[u32; 3]>,
    pub ident: Vec<u32>,
}

#[derive(Debug, Clone)]
pub enum WsoOutcome {
    Yes(WsoTriangulation),
    /// No valid triangulation; the shortest sub-chain `[start..=end]`
    /// (boundary indices) for which the DP found no splitter.
    No { locus: (u32, u32) },
}

impl WsoOutcome {
    pub fn is_yes(&self) -> bool {
        matches!(self, WsoOutcome::Yes(_))
    }
}

#[derive(Clone, Copy)]
struct Entry {
    ti: f64,
    tj: f64,
    k: u32,
    left: u32,
    right: u32,
}

const NO_ENTRY: u32 = u32::MAX;

/// Insert a candidate into a Pareto frontier kept sorted by `ti` ascending.
fn pareto_insert(arena: &mut Vec<Entry>, frontier: &mut Vec<u32>, cand: Entry) {
    for &id in frontier.iter() {
        let e = arena[id as usize];
        if e.ti <= cand.ti && e.tj <= cand.tj {
            return; // dominated
        }
    }
    frontier.retain(|&id| {
        let e = arena[id as usize];
        !(cand.ti <= e.ti && cand.tj <= e.tj)
    });
    let id = arena.len() as u32;
    arena.push(cand);
    let pos = frontier
        .partition_point(|&x| {
            let e = arena[x as usize];
            (e.ti, e.tj) < (cand.ti, cand.tj)
        });
    frontier.insert(pos, id);
}

/// Decide whether the polygon bounds an immersed disk, returning a witness
/// triangulation or the shortest infeasible sub-chain.
pub fn check_wso(poly: &TaggedPolygon) -> Result<WsoOutcome> {
    poly.validate()?;
    let n = poly.len();
    let p = &poly.points;
    let idx = |i: usize, j: usize| i * n + j;
    let mut arena: Vec<Entry> = Vec::new();
    let mut front: Vec<Vec<u32>> = vec![Vec::new(); n * n];
    for i in 0..n - 1 {
        let id = arena.len() as u32;
        arena.push(Entry {
            ti: 0.0,
            tj: 0.0,
            k: NO_ENTRY,
            left: NO_ENTRY,
            right: NO_ENTRY,
        });
        front[idx(i, i + 1)].push(id);
    }
    for len in 2..n {
        for i in 0..n - len {
            let j = i + len;
            for k in i + 1..j {
                if orient2d(p[i], p[k], p[j]) <= 0 {
                    continue;
                }
                let ai = angle_at(p[k], p[i], p[j]);
                let ak = angle_at(p[i], p[k], p[j]);
                let aj = angle_at(p[i], p[j], p[k]);
                let lefts = front[idx(i, k)].clone();
                let rights = front[idx(k, j)].clone();
                for &l in &lefts {
                    for &r in &rights {
                        let el = arena[l as usize];
                        let er = arena[r as usize];
                        let theta_k = el.tj + er.ti + ak;
                        if theta_k > poly.cap(k) {
                            continue;
                        }
                        let ti = el.ti + ai;
                        if ti > poly.cap(i) {
                            continue;
                        }
                        let tj = er.tj + aj;
                        if tj > poly.cap(j) {
                            continue;
                        }
                        let cand = Entry {
                            ti,
                            tj,
                            k: k as u32,
                            left: l,
                            right: r,
                        };
                        let mut f = std::mem::take(&mut front[idx(i, j)]);
                        pareto_insert(&mut arena, &mut f, cand);
                        front[idx(i, j)] = f;
                    }
                }
            }
        }
    }
    let root = &front[idx(0, n - 1)];
    if let Some(&best) = root.first() {
        let mut tris = Vec::new();
        collect_tris(&arena, best, 0, n - 1, &mut tris);
        let tri = WsoTriangulation {
            points: p.clone(),
            tris,
            ident: (0..n as u32).collect(),
        };
        verify_wso_triangulation(poly, &tri)?;
        return Ok(WsoOutcome::Yes(tri));
    }
    // Shortest sub-chain with an empty frontier certifies the failure.
    for len in 2..n {
        for i in 0..n - len {
            if front[idx(i, i + len)].is_empty() {
                return Ok(WsoOutcome::No {
                    locus: (i as u32, (i + len) as u32),
                });
            }
        }
    }
    Ok(WsoOutcome::No {
        locus: (0, (n - 1) as u32),
    })
}

fn collect_tris(arena: &[Entry], id: u32, i: usize, j: usize, out: &mut Vec<[u32; 3]>) {
    if j == i + 1 {
        return;
    }
    let e = arena[id as usize];
    let k = e.k as usize;
    collect_tris(arena, e.left, i, k, out);
    out.push([i as u32, k as u32, j as u32]);
    collect_tris(arena, e.right, k, j, out);
}

/// Independent re-check of a triangulation against the membership
/// conditions; deliberately shares no code with the DP construction.
pub fn verify_wso_triangulation(poly: &TaggedPolygon, tri: &WsoTriangulation) -> Result<()> {
    let n = poly.len();
    if tri.points != poly.points {
        return Err(Error::Other("triangulation points differ from polygon".into()));
    }
    if tri.tris.len() != n - 2 {
        return Err(Error::Other(format!(
            "expected {} triangles, found {}",
            n - 2,
            tri.tris.len()
        )));
    }
    let mut directed: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    let mut theta = vec![0.0f64; n];
    for t in &tri.tris {
        let [a, b, c] = *t;
        if a == b || b == c || a == c {
            return Err(Error::Other("degenerate triangle".into()));
        }
        let (pa, pb, pc) = (
            poly.points[a as usize],
            poly.points[b as usize],
            poly.points[c as usize],
        );
        if orient2d(pa, pb, pc) <= 0 {
            return Err(Error::Other(format!(
                "triangle ({a},{b},{c}) not positively oriented"
            )));
        }
        for (u, v) in [(a, b), (b, c), (c, a)] {
            *directed.entry((u, v)).or_insert(0) += 1;
        }
        theta[a as usize] += angle_at(pb, pa, pc);
        theta[b as usize] += angle_at(pa, pb, pc);
        theta[c as usize] += angle_at(pa, pc, pb);
    }
    for (&(u, v), &count) in &directed {
        if count != 1 {
            return Err(Error::Other(format!(
                "directed edge ({u},{v}) used {count} times"
            )));
        }
        let boundary = v == (u + 1) % n as u32;
        let reverse = directed.contains_key(&(v, u));
        if boundary && reverse {
            return Err(Error::Other(format!(
                "boundary edge ({u},{v}) has an interior twin"
            )));
        }
        if !boundary && !reverse {
            return Err(Error::Other(format!("interior edge ({u},{v}) unmatched")));
        }
    }
    for i in 0..n as u32 {
        let j = (i + 1) % n as u32;
        if !directed.contains_key(&(i, j)) {
            return Err(Error::Other(format!("boundary edge ({i},{j}) missing")));
        }
    }
    for i in 0..n {
        if theta[i] > poly.cap(i) {
            return Err(Error::Other(format!(
                "angle budget exceeded at vertex {i}: {:.9} rad",
                theta[i]
            )));
        }
    }
    // Connectivity: the triangles must form one edge-connected complex.
    let m = tri.tris.len();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let r = find(parent, parent[x]);
            parent[x] = r;
        }
        parent[x]
    }
    let mut owner: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for (t, tr) in tri.tris.iter().enumerate() {
        for (u, v) in [(tr[0], tr[1]), (tr[1], tr[2]), (tr[2], tr[0])] {
            let key = (u.min(v), u.max(v));
            if let Some(&other) = owner.get(&key) {
                let (ra, rb) = (find(&mut parent, t), find(&mut parent, other));
                parent[ra] = rb;
            } else {
                owner.insert(key, t);
            }
        }
    }
    let root = find(&mut parent, 0);
    for t in 1..m {
        if find(&mut parent, t) != root {
            return Err(Error::Other("triangulation is disconnected".into()));
        }
    }
    Ok(())
}

/// Exhaustive decision over the same family of triangulations, with
/// monotone angle-budget pruning. Practical for small polygons only.
pub fn wso_oracle(poly: &TaggedPolygon) -> bool {
    if poly.validate().is_err() {
        return false;
    }
    let n = poly.len();
    let mut sums = vec![0.0f64; n];
    let mut chains = Vec::new();
    if n > 2 {
        chains.push((0usize, n - 1));
    }
    dfs(poly, &mut chains, &mut sums)
}

/// Stack entries are always non-trivial chains (length > 1), so a failed
/// branch restores exactly what it consumed.
fn dfs(poly: &TaggedPolygon, chains: &mut Vec<(usize, usize)>, sums: &mut [f64]) -> bool {
    let (i, j) = match chains.pop() {
        None => return true,
        Some(c) => c,
    };
    let p = &poly.points;
    for k in i + 1..j {
        if orient2d(p[i], p[k], p[j]) <= 0 {
            continue;
        }
        let ai = angle_at(p[k], p[i], p[j]);
        let ak = angle_at(p[i], p[k], p[j]);
        let aj = angle_at(p[i], p[j], p[k]);
        sums[i] += ai;
        sums[k] += ak;
        sums[j] += aj;
        let ok = sums[i] <= poly.cap(i) && sums[k] <= poly.cap(k) && sums[j] <= poly.cap(j);
        if ok {
            let mut pushed = 0;
            if k > i + 1 {
                chains.push((i, k));
                pushed += 1;
            }
            if j > k + 1 {
                chains.push((k, j));
                pushed += 1;
            }
            if dfs(poly, chains, sums) {
                sums[i] -= ai;
                sums[k] -= ak;
                sums[j] -= aj;
                return true;
            }
            for _ in 0..pushed {
                chains.pop();
            }
        }
        sums[i] -= ai;
        sums[k] -= ak;
        sums[j] -= aj;
    }
    chains.push((i, j));
    false
}

/// Triangulate a cut-open region boundary. `ident[i]` names the mesh
/// vertex behind polygon index `i` (cut copies share a name); ids listed in
/// `interior_ids` become interior after stitching and must accumulate one
/// full turn across their copies.
pub fn triangulate_cut_open(
    poly: &TaggedPolygon,
    ident: &[u32],
    interior_ids: &[u32],
) -> Result<WsoOutcome> {
    assert_eq!(ident.len(), poly.len());
    match check_wso(poly)? {
        WsoOutcome::No { locus } => Ok(WsoOutcome::No { locus }),
        WsoOutcome::Yes(mut tri) => {
            let mut theta: BTreeMap<u32, f64> = BTreeMap::new();
            for t in &tri.tris {
                let [a, b, c] = *t;
                let (pa, pb, pc) = (
                    tri.points[a as usize],
                    tri.points[b as usize],
                    tri.points[c as usize],
                );
                *theta.entry(ident[a as usize]).or_insert(0.0) += angle_at(pb, pa, pc);
                *theta.entry(ident[b as usize]).or_insert(0.0) += angle_at(pa, pb, pc);
                *theta.entry(ident[c as usize]).or_insert(0.0) += angle_at(pa, pc, pb);
            }
            for &id in interior_ids {
                let total = theta.get(&id).copied().unwrap_or(0.0);
                if (total - 2.0 * PI).abs() > THETA_TOL {
                    return Err(Error::MeshOp(format!(
                        "cut vertex {id} closes to {total:.9} rad instead of a full turn"
                    )));
                }
            }
            tri.ident = ident.to_vec();
            Ok(WsoOutcome::Yes(tri))
        }
    }
}

/// One simply-projecting piece of a decomposed triangulation.
#[derive(Debug, Clone)]
pub struct SimplePiece {
    /// Boundary as polygon-point indices, positively oriented.
    pub boundary: Vec<u32>,
    /// Triangle indices into the source triangulation.
    pub tris: Vec<u32>,
}

/// Exact segment intersection test including touching and collinear
/// overlap.
fn segments_meet(a: V2, b: V2, c: V2, d: V2) -> bool {
    let d1 = orient2d(c, d, a);
    let d2 = orient2d(c, d, b);
    let d3 = orient2d(a, b, c);
    let d4 = orient2d(a, b, d);
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    let on = |p: V2, q: V2, r: V2| -> bool {
        r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    (d1 == 0 && on(c, d, a))
        || (d2 == 0 && on(c, d, b))
        || (d3 == 0 && on(a, b, c))
        || (d4 == 0 && on(a, b, d))
}

/// Strict simplicity: no two non-adjacent edges meet, and no vertex folds
/// back along its incoming edge.
pub fn polygon_is_simple(points: &[V2]) -> bool {
    let n = points.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, v, b) = (
            points[(i + n - 1) % n],
            points[i],
            points[(i + 1) % n],
        );
        if a == v || v == b {
            return false;
        }
        if orient2d(a, v, b) == 0 && (a - v).dot(&(b - v)) > 0.0 {
            return false; // spike
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_meet(
                points[i],
                points[(i + 1) % n],
                points[j],
                points[(j + 1) % n],
            ) {
                return false;
            }
        }
    }
    true
}

/// Decompose a triangulation into pieces whose boundaries are simple,
/// growing each piece greedily from the lowest unassigned triangle.
pub fn simple_decompose(tri: &WsoTriangulation) -> Vec<SimplePiece> {
    let m = tri.tris.len();
    let mut neighbor: BTreeMap<(u32, u32), Vec<u32>> = BTreeMap::new();
    for (t, tr) in tri.tris.iter().enumerate() {
        for (u, v) in [(tr[0], tr[1]), (tr[1], tr[2]), (tr[2], tr[0])] {
            neighbor
                .entry((u.min(v), u.max(v)))
                .or_default()
                .push(t as u32);
        }
    }
    let mut assigned = vec![false; m];
    let mut pieces = Vec::new();
    for seed in 0..m as u32 {
        if assigned[seed as usize] {
            continue;
        }
        let mut piece: BTreeSet<u32> = BTreeSet::new();
        piece.insert(seed);
        assigned[seed as usize] = true;
        loop {
            let mut grew = false;
            let mut candidates: BTreeSet<u32> = BTreeSet::new();
            for &t in &piece {
                let tr = tri.tris[t as usize];
                for (u, v) in [(tr[0], tr[1]), (tr[1], tr[2]), (tr[2], tr[0])] {
                    for &o in &neighbor[&(u.min(v), u.max(v))] {
                        if !assigned[o as usize] {
                            candidates.insert(o);
                        }
                    }
                }
            }
            for t in candidates {
                piece.insert(t);
                if let Some(boundary) = piece_boundary(tri, &piece) {
                    let pts: Vec<V2> = boundary
                        .iter()
                        .map(|&i| tri.points[i as usize])
                        .collect();
                    if polygon_is_simple(&pts) {
                        assigned[t as usize] = true;
                        grew = true;
                        continue;
                    }
                }
                piece.remove(&t);
            }
            if !grew {
                break;
            }
        }
        let boundary = piece_boundary(tri, &piece)
            .expect("accepted piece has a single boundary loop");
        pieces.push(SimplePiece {
            boundary,
            tris: piece.into_iter().collect(),
        });
    }
    pieces
}

/// Boundary loop of a triangle subset, or None if the subset is not a disk
/// with one boundary loop.
fn piece_boundary(tri: &WsoTriangulation, piece: &BTreeSet<u32>) -> Option<Vec<u32>> {
    // Directed edges used exactly once within the piece form the boundary.
    let mut count: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for &t in piece {
        let tr = tri.tris[t as usize];
        for (u, v) in [(tr[0], tr[1]), (tr[1], tr[2]), (tr[2], tr[0])] {
            *count.entry((u.min(v), u.max(v))).or_insert(0) += 1;
        }
    }
    let mut succ: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    let mut n_boundary = 0u32;
    for &t in piece {
        let tr = tri.tris[t as usize];
        for (u, v) in [(tr[0], tr[1]), (tr[1], tr[2]), (tr[2], tr[0])] {
            if count[&(u.min(v), u.max(v))] == 1 {
                succ.entry(u).or_default().push(v);
                n_boundary += 1;
            }
        }
    }
    // A pinched vertex appears twice as a boundary origin; reject.
    if succ.values().any(|v| v.len() != 1) {
        return None;
    }
    let verts: BTreeSet<u32> = piece
        .iter()
        .flat_map(|&t| tri.tris[t as usize])
        .collect();
    let n_edges = count.len() as i64;
    if verts.len() as i64 - n_edges + piece.len() as i64 != 1 {
        return None;
    }
    let start = *succ.keys().next()?;
    let mut walk = vec![start];
    let mut cur = succ[&start][0];
    while cur != start {
        walk.push(cur);
        cur = succ.get(&cur)?[0];
        if walk.len() > n_boundary as usize {
            return None;
        }
    }
    if walk.len() != n_boundary as usize {
        return None;
    }
    Some(walk)
}

/// Winding number of the triangulation image at a probe point: the number
/// of (positively oriented) triangles containing it.
pub fn triangulation_winding(tri: &WsoTriangulation, p: V2) -> usize {
    tri.tris
        .iter()
        .filter(|t| {
            let (a, b, c) = (
                tri.points[t[0] as usize],
                tri.points[t[1] as usize],
                tri.points[t[2] as usize],
            );
            orient2d(a, b, p) > 0 && orient2d(b, c, p) > 0 && orient2d(c, a, p) > 0
        })
        .count()
}

/// Decide whether a connected region of mesh faces projects as a
/// consistent immersion: uniform facing, full turns at interior vertices,
/// and hole count matching the boundary-loop count.
pub fn verify_theorem_mesh(mesh: &WorkMesh, faces: &[u32], frame: &CameraFrame) -> bool {
    if faces.is_empty() {
        return false;
    }
    let proj = match mesh.project_all(frame) {
        Ok(p) => p,
        Err(_) => return false,
    };
    let in_region = {
        let mut v = vec![false; mesh.n_faces_raw()];
        for &f in faces {
            v[f as usize] = true;
        }
        v
    };
    let sign = mesh.face_orientation_2d(faces[0], &proj);
    if sign == 0 {
        return false;
    }
    for &f in faces {
        if mesh.face_orientation_2d(f, &proj) != sign {
            return false;
        }
    }
    // Interior vertices must close up to exactly one turn.
    let mut verts: BTreeSet<u32> = BTreeSet::new();
    for &f in faces {
        verts.extend(mesh.tri(f));
    }
    for &v in &verts {
        let ring = mesh.vertex_ring(v);
        let closed = match ring.last() {
            Some(&last) => mesh.he_twin(mesh.he_prev(last)) != NO_HE,
            None => false,
        };
        let all_in = ring.iter().all(|&h| in_region[(h / 3) as usize]);
        if !(closed && all_in) {
            continue;
        }
        let mut theta = 0.0;
        for &h in &ring {
            theta += angle_at(
                proj.xy[mesh.he_to(h) as usize],
                proj.xy[v as usize],
                proj.xy[mesh.he_apex(h) as usize],
            );
        }
        if (theta - 2.0 * PI).abs() > THETA_TOL {
            return false;
        }
    }
    // Connectivity over shared edges.
    let mut parent: BTreeMap<u32, u32> = faces.iter().map(|&f| (f, f)).collect();
    fn find(parent: &mut BTreeMap<u32, u32>, x: u32) -> u32 {
        let p = parent[&x];
        if p != x {
            let r = find(parent, p);
            parent.insert(x, r);
            r
        } else {
            x
        }
    }
    let mut n_edges = 0i64;
    let mut boundary_he: Vec<u32> = Vec::new();
    for &f in faces {
        for i in 0..3u32 {
            let h = f * 3 + i;
            let t = mesh.he_twin(h);
            let outside = t == NO_HE || !in_region[(t / 3) as usize];
            if outside {
                boundary_he.push(h);
                n_edges += 1;
            } else {
                if h < t {
                    n_edges += 1;
                }
                let (ra, rb) = (find(&mut parent, f), find(&mut parent, t / 3));
                if ra != rb {
                    parent.insert(ra, rb);
                }
            }
        }
    }
    let root = find(&mut parent, faces[0]);
    if faces.iter().any(|&f| find(&mut parent, f) != root) {
        return false;
    }
    // Count boundary loops with the region-restricted successor walk.
    let is_boundary: BTreeSet<u32> = boundary_he.iter().copied().collect();
    let mut seen: BTreeSet<u32> = BTreeSet::new();
    let mut loops = 0i64;
    for &h0 in &boundary_he {
        if seen.contains(&h0) {
            continue;
        }
        loops += 1;
        let mut h = h0;
        loop {
            seen.insert(h);
            let mut e = mesh.he_next(h);
            while !is_boundary.contains(&e) {
                let t = mesh.he_twin(e);
                debug_assert_ne!(t, NO_HE);
                e = mesh.he_next(t);
            }
            h = e;
            if h == h0 {
                break;
            }
        }
    }
    let chi = verts.len() as i64 - n_edges + faces.len() as i64;
    // Genus zero with `loops` boundary loops: one outer polygon plus a hole
    // per extra loop.
    chi + loops == 2
}

//! Triangulation and lifting: trace surface paths under the diagonals of
//! each region's initial triangulation, fill the simple pieces with the
//! traced samples by constrained Delaunay triangulation, and stitch the
//! per-region results into the output mesh.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use crate::camera::CameraFrame;
use crate::error::{Error, Result};
use crate::geom::{cross2, point_in_polygon, point_segment_distance, V2, V3};
use crate::insert::{common_face, face_side};
use crate::predicates::orient2d;
use crate::surface::{Surface, SurfacePoint, VertClass};
use crate::workmesh::{Projected, VertexData, WorkMesh, NO_HE};
use crate::wso::{
    simple_decompose, triangulate_cut_open, SimplePiece, TaggedPolygon, WsoOutcome,
    WsoTriangulation,
};

/// The stitched result: a triangle mesh whose contour edges sample the
/// smooth-surface contour exactly, with per-face region ids and per-vertex
/// surface backpointers (or a perturbed flag) carried in the work mesh.
pub type OutputMesh = WorkMesh;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LiftConfig {
    /// Image-space spacing between interior samples along a traced path.
    pub sample_spacing_px: f64,
    /// Samples closer than this to any existing vertex are skipped.
    pub proximity_skip_px: f64,
    /// Maximum image-space offset of a path sample from its carrier line;
    /// also the distance under which samples are dropped near constraints.
    pub carrier_tolerance_px: f64,
    /// A trace is abandoned once it has walked this multiple of the 2D
    /// edge length.
    pub max_trace_stretch: f64,
    /// Perturbation of split vertices in all-contour triangles, as a
    /// fraction of the bounding-box diagonal.
    pub perturb_scale: f64,
    /// Seed for the random edge pick when splitting all-contour triangles.
    pub seed: u64,
}

impl Default for LiftConfig {
    fn default() -> Self {
        LiftConfig {
            sample_spacing_px: 2.0,
            proximity_skip_px: 0.5,
            carrier_tolerance_px: 0.25,
            max_trace_stretch: 10.0,
            perturb_scale: 1e-6,
            seed: 0,
        }
    }
}

/// One point of a traced surface path.
#[derive(Debug, Clone, Copy)]
pub struct PathSample {
    pub sp: SurfacePoint,
    pub position: V3,
    pub px: V2,
}

/// Interior samples of a traced edge, ordered along the walk; the edge
/// endpoints themselves are not included.
#[derive(Debug, Clone)]
pub struct SurfacePath {
    pub samples: Vec<PathSample>,
}

/// True when `h` borders the cut-open complex of `region`: a cut edge, a
/// region border, or a surface boundary.
fn open_border(mesh: &WorkMesh, region: u32, h: u32) -> bool {
    if mesh.is_cut(h) {
        return true;
    }
    let t = mesh.he_twin(h);
    t == NO_HE || mesh.region[(t / 3) as usize] != region
}

/// Boundary loops of the region after cutting, as halfedge cycles. Cut
/// edges appear once per side, so a properly cut region yields one loop.
pub fn cut_open_boundary(mesh: &WorkMesh, region: u32) -> Vec<Vec<u32>> {
    let mut border: Vec<u32> = Vec::new();
    for f in mesh.live_faces() {
        if mesh.region[f as usize] != region {
            continue;
        }
        for i in 0..3u32 {
            let h = f * 3 + i;
            if open_border(mesh, region, h) {
                border.push(h);
            }
        }
    }
    let mut seen: BTreeSet<u32> = BTreeSet::new();
    let mut loops = Vec::new();
    for &h0 in &border {
        if seen.contains(&h0) {
            continue;
        }
        let mut lp = Vec::new();
        let mut h = h0;
        loop {
            seen.insert(h);
            lp.push(h);
            // Rotate around the head vertex to the next border halfedge.
            let mut e = mesh.he_next(h);
            while !open_border(mesh, region, e) {
                e = mesh.he_next(mesh.he_twin(e));
            }
            h = e;
            if h == h0 {
                break;
            }
        }
        loops.push(lp);
    }
    loops
}

/// Orientation class shared by the region's faces, from the first face
/// with a decisive vertex tag, falling back to the 3D orientation sign.
pub fn region_side(mesh: &WorkMesh, region: u32, cam: V3) -> VertClass {
    let mut first = None;
    for f in mesh.live_faces() {
        if mesh.region[f as usize] != region {
            continue;
        }
        if first.is_none() {
            first = Some(f);
        }
        if let Some(side) = face_side(mesh, f) {
            return side;
        }
    }
    match first {
        Some(f) if mesh.face_orientation_3d(f, cam) >= 0 => VertClass::Back,
        _ => VertClass::Front,
    }
}

/// The cut-open boundary of a region as a positively oriented tagged
/// polygon, with mesh backpointers and the ids that must close up into
/// interior vertices when the cut is stitched shut.
#[derive(Debug, Clone)]
pub struct RegionPolygon {
    /// Mesh vertex ids in polygon order; cut vertices appear once per side.
    pub verts: Vec<u32>,
    pub poly: TaggedPolygon,
    pub interior_ids: Vec<u32>,
    pub side: VertClass,
    /// True when the walk was reversed to orient the projection positively
    /// (front-facing regions).
    pub reversed: bool,
}

pub fn region_polygon(
    mesh: &WorkMesh,
    proj: &Projected,
    region: u32,
    cam: V3,
) -> Result<RegionPolygon> {
    let loops = cut_open_boundary(mesh, region);
    if loops.len() != 1 {
        return Err(Error::Region {
            region,
            msg: format!(
                "cut-open boundary has {} loops where one was expected",
                loops.len()
            ),
        });
    }
    let mut verts: Vec<u32> = loops[0].iter().map(|&h| mesh.he_from(h)).collect();
    let side = region_side(mesh, region, cam);
    let reversed = side == VertClass::Front;
    if reversed {
        verts.reverse();
    }
    let points: Vec<V2> = verts.iter().map(|&v| proj.xy[v as usize]).collect();
    let mut singular = vec![false; verts.len()];
    let mut marked: BTreeSet<u32> = BTreeSet::new();
    for (i, &v) in verts.iter().enumerate() {
        // A vertex that reappears on a cut keeps its extra angle budget on
        // the first copy only.
        if mesh.vdata[v as usize].singular_for.contains(&region) && marked.insert(v) {
            singular[i] = true;
        }
    }
    let mut interior_ids = Vec::new();
    let unique: BTreeSet<u32> = verts.iter().copied().collect();
    for &v in &unique {
        let mut on_cut = false;
        let mut on_border = false;
        for h in mesh.vertex_ring(v) {
            for e in [h, mesh.he_prev(h)] {
                if mesh.is_cut(e) {
                    on_cut = true;
                } else if open_border(mesh, region, e) {
                    on_border = true;
                }
            }
        }
        if on_cut && !on_border {
            interior_ids.push(v);
        }
    }
    let poly = TaggedPolygon {
        points,
        singular,
        mesh_verts: verts.clone(),
    };
    Ok(RegionPolygon {
        verts,
        poly,
        interior_ids,
        side,
        reversed,
    })
}

/// Intersection of the line `o + t*d` with segment `p..q`, as `(t, s)`
/// with `s` the segment parameter; `None` when parallel.
fn line_segment(o: V2, d: V2, p: V2, q: V2) -> Option<(f64, f64)> {
    let e = q - p;
    let denom = cross2(d, e);
    if denom == 0.0 {
        return None;
    }
    let t = cross2(p - o, e) / denom;
    let s = cross2(p - o, d) / denom;
    Some((t, s))
}

const SEG_PARAM_TOL: f64 = 1e-9;

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Move `uv` on base face `face` until its projection lies within `tol`
/// pixels of the carrier line through `o` with unit direction `d`, by
/// Newton steps on the signed offset. `None` when the point cannot be
/// brought onto the carrier inside the face.
fn snap_to_carrier(
    surface: &Surface,
    frame: &CameraFrame,
    face: u32,
    uv0: V2,
    o: V2,
    d: V2,
    tol: f64,
) -> Option<(SurfacePoint, V3, V2)> {
    let mut uv = V2::new(clamp01(uv0.x), clamp01(uv0.y));
    for iter in 0..=6 {
        let sp = SurfacePoint::new(face, uv.x, uv.y);
        let s = surface.eval(sp);
        let (px, _) = frame.project(s.position).ok()?;
        let c = cross2(px - o, d);
        if c.abs() <= tol {
            return Some((sp, s.position, px));
        }
        if iter == 6 {
            break;
        }
        let h = 1e-5;
        let hu = if uv.x + h <= 1.0 { h } else { -h };
        let hv = if uv.y + h <= 1.0 { h } else { -h };
        let pu = frame
            .project(surface.eval(SurfacePoint::new(face, uv.x + hu, uv.y)).position)
            .ok()?
            .0;
        let pv = frame
            .project(surface.eval(SurfacePoint::new(face, uv.x, uv.y + hv)).position)
            .ok()?
            .0;
        let gu = cross2((pu - px) / hu, d);
        let gv = cross2((pv - px) / hv, d);
        let g2 = gu * gu + gv * gv;
        if g2 < 1e-30 {
            return None;
        }
        uv = V2::new(clamp01(uv.x - c * gu / g2), clamp01(uv.y - c * gv / g2));
    }
    None
}

/// Walk state while tracing: the current work-mesh face, the local edge
/// the carrier leaves through, and the exit point as carrier parameter
/// plus barycentric weights over the face corners.
struct TraceState {
    face: u32,
    exit_edge: usize,
    t: f64,
    w: [f64; 3],
}

/// Search for a path on the smooth surface between contour vertices `a`
/// and `b` of `region` whose projection follows the straight line through
/// their images, and sample it at roughly `sample_spacing_px` intervals.
/// Samples are kept only while progressing toward `b` in image space and
/// away from `existing` vertices. Returns `None` when no such path exists
/// in the region, which is common when an endpoint is a cusp.
#[allow(clippy::too_many_arguments)]
pub fn trace_edge_path(
    mesh: &WorkMesh,
    surface: &Surface,
    frame: &CameraFrame,
    proj: &Projected,
    region: u32,
    a: u32,
    b: u32,
    existing: &[V2],
    cfg: &LiftConfig,
) -> Option<SurfacePath> {
    let pa = proj.xy[a as usize];
    let pb = proj.xy[b as usize];
    let len = (pb - pa).norm();
    if len <= cfg.sample_spacing_px {
        return Some(SurfacePath {
            samples: Vec::new(),
        });
    }
    let d = (pb - pa) / len;
    let region_faces = mesh
        .live_faces()
        .filter(|&f| mesh.region[f as usize] == region)
        .count();

    // Start: among faces of the region fanning `a`, the ray toward `b`
    // exits through the opposite edge of exactly those faces whose image
    // wedge contains it; take the nearest such exit.
    let mut start: Option<TraceState> = None;
    for h in mesh.vertex_ring(a) {
        let f = h / 3;
        if mesh.region[f as usize] != region {
            continue;
        }
        let c = mesh.tri(f);
        let ia = (0..3).find(|&k| c[k] == a)?;
        let (i1, i2) = ((ia + 1) % 3, (ia + 2) % 3);
        let (p, q) = (proj.xy[c[i1] as usize], proj.xy[c[i2] as usize]);
        if let Some((t, s)) = line_segment(pa, d, p, q) {
            if t > SEG_PARAM_TOL && (-SEG_PARAM_TOL..=1.0 + SEG_PARAM_TOL).contains(&s) {
                let better = match &start {
                    Some(st) => t < st.t,
                    None => true,
                };
                if better {
                    let sc = clamp01(s);
                    let mut w = [0.0; 3];
                    w[i1] = 1.0 - sc;
                    w[i2] = sc;
                    start = Some(TraceState {
                        face: f,
                        exit_edge: i1,
                        t,
                        w,
                    });
                }
            }
        }
    }
    let exit0 = start?;

    let mut samples: Vec<PathSample> = Vec::new();
    let mut last_px = pa;
    let mut emitted: Vec<V2> = Vec::new();
    let mut walked = 0.0;
    let mut steps = 0usize;

    // Emit the in-face segment from the entry to the exit crossing,
    // subdivided to the sampling density; the exit itself is a candidate.
    let emit_segment = |face: u32,
                            w_in: &[f64; 3],
                            t_in: f64,
                            w_out: &[f64; 3],
                            t_out: f64,
                            samples: &mut Vec<PathSample>,
                            last_px: &mut V2,
                            emitted: &mut Vec<V2>|
     -> Option<()> {
        let c = mesh.tri(face);
        let (bf, uvs) = common_face(surface, mesh, &c)?;
        let lerp3 = |w: &[f64; 3]| uvs[0] * w[0] + uvs[1] * w[1] + uvs[2] * w[2];
        let (uv_in, uv_out) = (lerp3(w_in), lerp3(w_out));
        let seg = (t_out - t_in).abs();
        let n_sub = (seg / cfg.sample_spacing_px).ceil().max(1.0) as usize;
        for k in 1..=n_sub {
            let al = k as f64 / n_sub as f64;
            let uv = uv_in + (uv_out - uv_in) * al;
            let Some((sp, pos, px)) =
                snap_to_carrier(surface, frame, bf, uv, pa, d, cfg.carrier_tolerance_px)
            else {
                continue;
            };
            if (px - *last_px).dot(&(pb - pa)) <= 0.0 {
                continue; // not progressing toward b
            }
            let near = |set: &[V2]| {
                set.iter()
                    .any(|&e| (e - px).norm() < cfg.proximity_skip_px)
            };
            if near(existing) || near(emitted) {
                continue;
            }
            samples.push(PathSample { sp, position: pos, px });
            emitted.push(px);
            *last_px = px;
        }
        Some(())
    };

    let mut state = {
        let mut w_in = [0.0; 3];
        let ia = (0..3).find(|&k| mesh.tri(exit0.face)[k] == a)?;
        w_in[ia] = 1.0;
        emit_segment(
            exit0.face,
            &w_in,
            0.0,
            &exit0.w,
            exit0.t,
            &mut samples,
            &mut last_px,
            &mut emitted,
        )?;
        walked += exit0.t;
        exit0
    };
    if mesh.tri(state.face).contains(&b) {
        // The traced edge coincides with a mesh edge of the fan face.
        return Some(SurfacePath { samples });
    }

    loop {
        steps += 1;
        if steps > 16 + 8 * region_faces || walked > cfg.max_trace_stretch * len {
            return None;
        }
        // Cross the exit edge into the neighboring region face.
        let h = state.face * 3 + state.exit_edge as u32;
        if open_border(mesh, region, h) {
            return None; // the strip leaves the region
        }
        let tw = mesh.he_twin(h);
        let g = tw / 3;
        let j = (tw - g * 3) as usize;
        let s_on_exit = state.w[(state.exit_edge + 1) % 3];
        let mut w_in = [0.0; 3];
        w_in[j] = s_on_exit;
        w_in[(j + 1) % 3] = 1.0 - s_on_exit;
        let t_in = state.t;

        let cg = mesh.tri(g);
        if let Some(ib) = (0..3).find(|&k| cg[k] == b) {
            // Arrived: finish with the segment from the entry point to b.
            let mut w_out = [0.0; 3];
            w_out[ib] = 1.0;
            emit_segment(
                g,
                &w_in,
                t_in,
                &w_out,
                len,
                &mut samples,
                &mut last_px,
                &mut emitted,
            )?;
            return Some(SurfacePath { samples });
        }

        // Exit of the new face: the carrier's other crossing.
        let pg = [
            proj.xy[cg[0] as usize],
            proj.xy[cg[1] as usize],
            proj.xy[cg[2] as usize],
        ];
        let mut best: Option<(f64, usize, f64)> = None;
        for i in 0..3 {
            if i == j {
                continue;
            }
            if let Some((t, s)) = line_segment(pa, d, pg[i], pg[(i + 1) % 3]) {
                if (-SEG_PARAM_TOL..=1.0 + SEG_PARAM_TOL).contains(&s) {
                    let gain = (t - t_in).abs();
                    let better = match best {
                        Some((bt, _, _)) => gain > (bt - t_in).abs(),
                        None => true,
                    };
                    if better {
                        best = Some((t, i, s));
                    }
                }
            }
        }
        let (t_out, exit_edge, s) = best?;
        let sc = clamp01(s);
        let mut w_out = [0.0; 3];
        w_out[exit_edge] = 1.0 - sc;
        w_out[(exit_edge + 1) % 3] = sc;
        emit_segment(
            g,
            &w_in,
            t_in,
            &w_out,
            t_out,
            &mut samples,
            &mut last_px,
            &mut emitted,
        )?;
        walked += (t_out - t_in).abs();
        state = TraceState {
            face: g,
            exit_edge,
            t: t_out,
            w: w_out,
        };
    }
}

/// A vertex of a lifted piece: its image position, world position, and
/// either a surface backpointer or, for boundary corners, the work-mesh
/// vertex it came from.
#[derive(Debug, Clone, Copy)]
pub struct LiftVertex {
    pub px: V2,
    pub pos: V3,
    pub sp: Option<SurfacePoint>,
    pub src: Option<u32>,
}

/// A triangulated simple piece: 2D-positively-oriented triangles over
/// boundary corners and lifted interior samples.
#[derive(Debug, Clone)]
pub struct RegionMesh {
    pub verts: Vec<LiftVertex>,
    pub tris: Vec<[u32; 3]>,
    /// Boundary (polygon) edges, as unordered vertex-index pairs.
    pub constrained: BTreeSet<(u32, u32)>,
    /// The first `n_boundary` vertices are the polygon corners in order.
    pub n_boundary: u32,
}

/// Constrained Delaunay triangulation of a positively oriented simple
/// polygon and interior samples. Samples within `carrier_tolerance_px` of
/// a polygon edge are dropped.
pub fn triangulate_lift(
    corners: &[LiftVertex],
    samples: &[PathSample],
    cfg: &LiftConfig,
) -> Result<RegionMesh> {
    let n = corners.len();
    if n < 3 {
        return Err(Error::MeshOp(format!("piece polygon has {n} vertices")));
    }
    let pts: Vec<V2> = corners.iter().map(|c| c.px).collect();
    if !crate::wso::polygon_is_simple(&pts) {
        return Err(Error::MeshOp("piece polygon is not simple".into()));
    }
    let area2: f64 = (0..n)
        .map(|i| cross2(pts[i], pts[(i + 1) % n]))
        .sum();
    if area2 <= 0.0 {
        return Err(Error::MeshOp(
            "piece polygon is not positively oriented".into(),
        ));
    }
    let mut verts: Vec<LiftVertex> = corners.to_vec();
    for s in samples {
        if !point_in_polygon(s.px, &pts) {
            continue;
        }
        let near_edge = (0..n).any(|i| {
            point_segment_distance(s.px, pts[i], pts[(i + 1) % n]) < cfg.carrier_tolerance_px
        });
        if near_edge {
            continue; // sample on a constraint
        }
        if verts.iter().any(|v| (v.px - s.px).norm() < 1e-9) {
            continue;
        }
        verts.push(LiftVertex {
            px: s.px,
            pos: s.position,
            sp: Some(s.sp),
            src: None,
        });
    }
    let points: Vec<Point2<f64>> = verts.iter().map(|v| Point2::new(v.px.x, v.px.y)).collect();
    let edges: Vec<[usize; 2]> = (0..n).map(|i| [i, (i + 1) % n]).collect();
    let cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::bulk_load_cdt(points, edges)
        .map_err(|e| Error::MeshOp(format!("constrained triangulation failed: {e:?}")))?;
    if cdt.num_vertices() != verts.len() {
        return Err(Error::MeshOp(
            "constrained triangulation dropped duplicate points".into(),
        ));
    }
    let mut tris = Vec::new();
    for face in cdt.inner_faces() {
        let [x, y, z] = face.vertices().map(|v| v.index() as u32);
        let centroid = (verts[x as usize].px + verts[y as usize].px + verts[z as usize].px) / 3.0;
        if point_in_polygon(centroid, &pts) {
            tris.push([x, y, z]);
        }
    }
    let constrained: BTreeSet<(u32, u32)> = (0..n as u32)
        .map(|i| {
            let j = (i + 1) % n as u32;
            (i.min(j), i.max(j))
        })
        .collect();
    Ok(RegionMesh {
        verts,
        tris,
        constrained,
        n_boundary: n as u32,
    })
}

fn incircle(a: V2, b: V2, c: V2, d: V2) -> f64 {
    robust::incircle(
        robust::Coord { x: a.x, y: a.y },
        robust::Coord { x: b.x, y: b.y },
        robust::Coord { x: c.x, y: c.y },
        robust::Coord { x: d.x, y: d.y },
    )
}

/// Delaunay edge-flipping restricted to the five-ring neighborhood of
/// `endpoint`, leaving constrained edges alone. Used to clear the long
/// triangles left behind when no path was found under a diagonal.
pub fn long_edge_relax(rm: &mut RegionMesh, endpoint: u32) {
    // Five-ring vertex neighborhood under the current connectivity.
    let mut adj: HashMap<u32, BTreeSet<u32>> = HashMap::new();
    for t in &rm.tris {
        for k in 0..3 {
            adj.entry(t[k]).or_default().insert(t[(k + 1) % 3]);
            adj.entry(t[(k + 1) % 3]).or_default().insert(t[k]);
        }
    }
    let mut ring: BTreeSet<u32> = BTreeSet::new();
    ring.insert(endpoint);
    let mut frontier = vec![endpoint];
    for _ in 0..5 {
        let mut next = Vec::new();
        for v in frontier {
            for &u in adj.get(&v).into_iter().flatten() {
                if ring.insert(u) {
                    next.push(u);
                }
            }
        }
        frontier = next;
    }

    let budget = 10 * rm.tris.len().max(8);
    for _ in 0..budget {
        // Pairs of triangles over each unconstrained interior edge.
        let mut emap: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
        for (ti, t) in rm.tris.iter().enumerate() {
            for k in 0..3 {
                let (u, v) = (t[k], t[(k + 1) % 3]);
                emap.entry((u.min(v), u.max(v))).or_default().push(ti);
            }
        }
        let mut flipped = false;
        for (&(u, v), ts) in &emap {
            if ts.len() != 2 || rm.constrained.contains(&(u, v)) {
                continue;
            }
            if !ring.contains(&u) || !ring.contains(&v) {
                continue;
            }
            let (t1, t2) = (ts[0], ts[1]);
            let apex = |t: &[u32; 3]| t.iter().copied().find(|&x| x != u && x != v).unwrap();
            let p = apex(&rm.tris[t1]);
            let q = apex(&rm.tris[t2]);
            let (pu, pv, pp, pq) = (
                rm.verts[u as usize].px,
                rm.verts[v as usize].px,
                rm.verts[p as usize].px,
                rm.verts[q as usize].px,
            );
            // Flip only strictly convex quads that fail the circle test.
            if orient2d(pp, pq, pu) * orient2d(pp, pq, pv) != -1 {
                continue;
            }
            let t1v = rm.tris[t1];
            let k = (0..3).find(|&k| t1v[k] != u && t1v[k] != v).unwrap();
            let (ca, cb, cc) = (t1v[k], t1v[(k + 1) % 3], t1v[(k + 2) % 3]);
            if incircle(
                rm.verts[ca as usize].px,
                rm.verts[cb as usize].px,
                rm.verts[cc as usize].px,
                pq,
            ) <= 0.0
            {
                continue;
            }
            // Rebuild both triangles around the new diagonal, keeping
            // positive orientation.
            let (a1, b1) = if orient2d(pu, pq, pp) == 1 {
                ([u, q, p], [q, v, p])
            } else {
                ([u, p, q], [p, v, q])
            };
            let ok = |t: [u32; 3]| {
                orient2d(
                    rm.verts[t[0] as usize].px,
                    rm.verts[t[1] as usize].px,
                    rm.verts[t[2] as usize].px,
                ) == 1
            };
            if !ok(a1) || !ok(b1) {
                continue;
            }
            rm.tris[t1] = a1;
            rm.tris[t2] = b1;
            flipped = true;
            break;
        }
        if !flipped {
            break;
        }
    }
}

/// All lifted pieces of one region.
#[derive(Debug, Clone)]
pub struct LiftedRegion {
    pub region: u32,
    pub side: VertClass,
    pub pieces: Vec<RegionMesh>,
}

/// Lift one simple piece: trace the interior diagonals of its initial
/// triangulation, triangulate the piece with the samples, and relax
/// around the endpoints of diagonals that had no path.
#[allow(clippy::too_many_arguments)]
fn lift_piece(
    mesh: &WorkMesh,
    surface: &Surface,
    frame: &CameraFrame,
    proj: &Projected,
    region: u32,
    tri: &WsoTriangulation,
    piece: &SimplePiece,
    cfg: &LiftConfig,
) -> Result<RegionMesh> {
    let poly_pts: Vec<V2> = piece
        .boundary
        .iter()
        .map(|&i| tri.points[i as usize])
        .collect();
    let corners: Vec<LiftVertex> = piece
        .boundary
        .iter()
        .map(|&i| {
            let vid = tri.ident[i as usize];
            LiftVertex {
                px: tri.points[i as usize],
                pos: mesh.positions[vid as usize],
                sp: mesh.vdata[vid as usize].sps.first().copied(),
                src: Some(vid),
            }
        })
        .collect();
    let corner_of: BTreeMap<u32, u32> = piece
        .boundary
        .iter()
        .enumerate()
        .map(|(k, &i)| (i, k as u32))
        .collect();

    // Interior diagonals: edges shared by two triangles of the piece.
    let mut count: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for &t in &piece.tris {
        let tr = tri.tris[t as usize];
        for k in 0..3 {
            let (x, y) = (tr[k], tr[(k + 1) % 3]);
            *count.entry((x.min(y), x.max(y))).or_insert(0) += 1;
        }
    }
    let mut samples: Vec<PathSample> = Vec::new();
    let mut existing: Vec<V2> = poly_pts.clone();
    let mut long_endpoints: Vec<u32> = Vec::new();
    for (&(pi, pj), &c) in &count {
        if c != 2 {
            continue;
        }
        let (va, vb) = (tri.ident[pi as usize], tri.ident[pj as usize]);
        match trace_edge_path(mesh, surface, frame, proj, region, va, vb, &existing, cfg) {
            Some(path) => {
                for s in path.samples {
                    if !point_in_polygon(s.px, &poly_pts) {
                        continue;
                    }
                    existing.push(s.px);
                    samples.push(s);
                }
            }
            None => {
                if let Some(&k) = corner_of.get(&pi) {
                    long_endpoints.push(k);
                }
            }
        }
    }
    let mut rm = triangulate_lift(&corners, &samples, cfg)?;
    long_endpoints.sort_unstable();
    long_endpoints.dedup();
    for &e in &long_endpoints {
        long_edge_relax(&mut rm, e);
    }
    Ok(rm)
}

/// Lift a whole region: boundary polygon, initial triangulation of the
/// cut-open boundary, simple decomposition, and per-piece triangulation.
pub fn lift_region(
    mesh: &WorkMesh,
    surface: &Surface,
    frame: &CameraFrame,
    proj: &Projected,
    region: u32,
    cfg: &LiftConfig,
) -> Result<LiftedRegion> {
    let rp = region_polygon(mesh, proj, region, frame.center)?;
    rp.poly.validate()?;
    let outcome = triangulate_cut_open(&rp.poly, &rp.verts, &rp.interior_ids)?;
    let tri = match outcome {
        WsoOutcome::Yes(t) => t,
        WsoOutcome::No { locus } => {
            return Err(Error::Region {
                region,
                msg: format!(
                    "boundary admits no valid triangulation near indices {}..{}",
                    locus.0, locus.1
                ),
            });
        }
    };
    let pieces2d = simple_decompose(&tri);
    let mut pieces = Vec::new();
    let mut rng =
        ChaCha8Rng::seed_from_u64(cfg.seed ^ (region as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    for piece in &pieces2d {
        let mut rm = lift_piece(mesh, surface, frame, proj, region, &tri, piece, cfg)?;
        fix_ccc(
            &mut rm,
            mesh,
            frame,
            rp.side,
            surface.scene_scale(),
            cfg,
            &mut rng,
        )?;
        pieces.push(rm);
    }
    Ok(LiftedRegion {
        region,
        side: rp.side,
        pieces,
    })
}

/// Lift every region id in `regions`, in parallel; results are ordered by
/// region id.
pub fn lift_all_regions(
    mesh: &WorkMesh,
    surface: &Surface,
    frame: &CameraFrame,
    proj: &Projected,
    regions: &[u32],
    cfg: &LiftConfig,
) -> Result<Vec<LiftedRegion>> {
    let mut ids: Vec<u32> = regions.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids.par_iter()
        .map(|&r| lift_region(mesh, surface, frame, proj, r, cfg))
        .collect()
}

/// Group the source mesh's contour edges into loops by shared endpoints,
/// for error reporting.
fn contour_loop_of(src: &WorkMesh) -> BTreeMap<(u32, u32), usize> {
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    for f in src.live_faces() {
        for i in 0..3u32 {
            let h = f * 3 + i;
            if src.is_contour(h) {
                let (a, b) = (src.he_from(h), src.he_to(h));
                pairs.push((a.min(b), a.max(b)));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    let mut group: BTreeMap<u32, usize> = BTreeMap::new();
    let mut parent: Vec<usize> = (0..pairs.len()).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut c = x;
        while parent[c] != r {
            let n = parent[c];
            parent[c] = r;
            c = n;
        }
        r
    }
    for (i, &(a, b)) in pairs.iter().enumerate() {
        for v in [a, b] {
            match group.get(&v) {
                Some(&j) => {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                    }
                }
                None => {
                    group.insert(v, i);
                }
            }
        }
    }
    let mut roots: BTreeMap<usize, usize> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for i in 0..pairs.len() {
        let r = find(&mut parent, i);
        let next = roots.len();
        let id = *roots.entry(r).or_insert(next);
        out.insert(pairs[i], id);
    }
    out
}

/// Stitch the lifted regions into one mesh. Contour edges must be covered
/// exactly twice (once in front-only mode); decomposition diagonals may
/// not coincide across regions. Carries over region ids, contour flags,
/// and vertex data.
pub fn stitch(src: &WorkMesh, lifted: &[LiftedRegion], front_only: bool) -> Result<OutputMesh> {
    let mut picked: Vec<&LiftedRegion> = lifted
        .iter()
        .filter(|lr| !front_only || lr.side == VertClass::Front)
        .collect();
    picked.sort_by_key(|lr| lr.region);

    // Tally every triangle edge between two source vertices; this covers
    // the piece boundaries (walked once per side) and any interior edge
    // the triangulations happened to build between border vertices.
    let mut contour_mult: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    let mut other_mult: BTreeMap<(u32, u32), Vec<u32>> = BTreeMap::new();
    for lr in &picked {
        for rm in &lr.pieces {
            for i in 0..rm.n_boundary {
                if rm.verts[i as usize].src.is_none() {
                    return Err(Error::MeshOp(
                        "piece boundary vertex lacks a mesh backpointer".into(),
                    ));
                }
            }
            for t in &rm.tris {
                for e in 0..3 {
                    let (x, y) = (t[e], t[(e + 1) % 3]);
                    let (Some(a), Some(b)) =
                        (rm.verts[x as usize].src, rm.verts[y as usize].src)
                    else {
                        continue;
                    };
                    let k = (a.min(b), a.max(b));
                    let is_contour = src
                        .halfedge(k.0, k.1)
                        .map(|h| src.is_contour(h))
                        .unwrap_or(false);
                    if is_contour {
                        *contour_mult.entry(k).or_insert(0) += 1;
                    } else {
                        other_mult.entry(k).or_default().push(lr.region);
                    }
                }
            }
        }
    }
    // A contour edge must be walked once per stitched side: twice for an
    // interior edge, once on the surface boundary, and in front-only mode
    // only the front sides count.
    let side_map: BTreeMap<u32, VertClass> =
        lifted.iter().map(|lr| (lr.region, lr.side)).collect();
    let loops = contour_loop_of(src);
    for (&k, &lp) in &loops {
        let mut expect = 0u32;
        for h in [src.halfedge(k.0, k.1), src.halfedge(k.1, k.0)]
            .into_iter()
            .flatten()
        {
            let r = src.region[(h / 3) as usize];
            if !front_only || side_map.get(&r) == Some(&VertClass::Front) {
                expect += 1;
            }
        }
        let m = contour_mult.get(&k).copied().unwrap_or(0);
        if m != expect {
            return Err(Error::MeshOp(format!(
                "boundary sample mismatch on contour loop {lp}: edge ({}, {}) covered {m} times, expected {expect}",
                k.0, k.1
            )));
        }
    }
    for (&k, regions) in &other_mult {
        let distinct: BTreeSet<u32> = regions.iter().copied().collect();
        if distinct.len() > 1 {
            return Err(Error::MeshOp(format!(
                "edge ({}, {}) is shared by regions {distinct:?}",
                k.0, k.1
            )));
        }
        let n = regions.len();
        let he = src.halfedge(k.0, k.1);
        let is_cut = he.map(|h| src.is_cut(h)).unwrap_or(false);
        let boundary = he.is_some() != src.halfedge(k.1, k.0).is_some();
        // Cut edges and interior edges close up in pairs; an edge on the
        // surface boundary is walked once.
        let want = if boundary { 1 } else { 2 };
        if n != want {
            let what = if is_cut { "cut edge" } else { "edge" };
            return Err(Error::MeshOp(format!(
                "{what} ({}, {}) covered {n} times, expected {want}",
                k.0, k.1
            )));
        }
    }

    // Vertex table: referenced source vertices first (ascending id), then
    // interior samples in region/piece order.
    let mut vmap: BTreeMap<u32, u32> = BTreeMap::new();
    for lr in &picked {
        for rm in &lr.pieces {
            for v in &rm.verts {
                if let Some(vid) = v.src {
                    vmap.entry(vid).or_insert(0);
                }
            }
        }
    }
    let mut positions = Vec::with_capacity(vmap.len());
    let mut vdata = Vec::with_capacity(vmap.len());
    for (i, (&vid, slot)) in vmap.iter_mut().enumerate() {
        *slot = i as u32;
        positions.push(src.positions[vid as usize]);
        vdata.push(src.vdata[vid as usize].clone());
    }
    let mut tris: Vec<[u32; 3]> = Vec::new();
    let mut face_region: Vec<u32> = Vec::new();
    for lr in &picked {
        let flip = lr.side == VertClass::Front;
        let tag = lr.side;
        for rm in &lr.pieces {
            let local: Vec<u32> = rm
                .verts
                .iter()
                .map(|v| match v.src {
                    Some(vid) => vmap[&vid],
                    None => {
                        let id = positions.len() as u32;
                        positions.push(v.pos);
                        vdata.push(match v.sp {
                            Some(sp) => VertexData::new(tag, sp),
                            // Off-surface vertex from the all-contour fix.
                            None => VertexData {
                                tag,
                                cusp: false,
                                perturbed: true,
                                sps: Vec::new(),
                                singular_for: Vec::new(),
                            },
                        });
                        id
                    }
                })
                .collect();
            for &[x, y, z] in &rm.tris {
                let t = if flip {
                    [local[x as usize], local[z as usize], local[y as usize]]
                } else {
                    [local[x as usize], local[y as usize], local[z as usize]]
                };
                tris.push(t);
                face_region.push(lr.region);
            }
        }
    }
    let mut out = WorkMesh::new(positions, vdata, tris)?;
    out.region = face_region;
    for (&(a, b), _) in &contour_mult {
        let (na, nb) = (vmap[&a], vmap[&b]);
        match out.halfedge(na, nb).or_else(|| out.halfedge(nb, na)) {
            Some(h) => out.set_contour(h, true),
            None => {
                let lp = loops.get(&(a, b)).copied().unwrap_or(usize::MAX);
                return Err(Error::MeshOp(format!(
                    "boundary sample mismatch on contour loop {lp}: edge ({a}, {b}) missing after stitch"
                )));
            }
        }
    }
    Ok(out)
}

/// Split the interior edge `(u, v)` of the piece at a new vertex,
/// replacing each adjacent triangle with two.
fn split_rm_edge(rm: &mut RegionMesh, u: u32, v: u32, vert: LiftVertex) -> u32 {
    let m = rm.verts.len() as u32;
    rm.verts.push(vert);
    let mut out = Vec::with_capacity(rm.tris.len() + 2);
    for &t in &rm.tris {
        let mut replaced = false;
        for k in 0..3 {
            let (x, y, z) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            if (x, y) == (u, v) || (x, y) == (v, u) {
                out.push([x, m, z]);
                out.push([m, y, z]);
                replaced = true;
                break;
            }
        }
        if !replaced {
            out.push(t);
        }
    }
    rm.tris = out;
    m
}

/// Split every triangle of the piece whose three corners are all contour
/// vertices. The split vertex sits at the midpoint of a randomly chosen
/// interior edge, pushed off the surface along the view ray: toward the
/// camera for front pieces, away for back pieces, so the projection is
/// unchanged but mirrored front/back triangles separate. A triangle with
/// no splittable edge is a structural error.
pub fn fix_ccc(
    rm: &mut RegionMesh,
    src: &WorkMesh,
    frame: &CameraFrame,
    side: VertClass,
    bbox_diag: f64,
    cfg: &LiftConfig,
    rng: &mut ChaCha8Rng,
) -> Result<u32> {
    let is_contour_vert = |rm: &RegionMesh, v: u32| match rm.verts[v as usize].src {
        Some(vid) => src.vdata[vid as usize].tag == VertClass::Contour,
        None => false,
    };
    let is_contour_edge = |rm: &RegionMesh, u: u32, v: u32| {
        match (rm.verts[u as usize].src, rm.verts[v as usize].src) {
            (Some(a), Some(b)) => src
                .halfedge(a, b)
                .or_else(|| src.halfedge(b, a))
                .map(|h| src.is_contour(h))
                .unwrap_or(false),
            _ => false,
        }
    };
    let mut splits = 0u32;
    let cap = rm.tris.len() as u32 + 8;
    loop {
        let offender = rm
            .tris
            .iter()
            .position(|t| t.iter().all(|&v| is_contour_vert(rm, v)));
        let Some(ti) = offender else {
            return Ok(splits);
        };
        if splits >= cap {
            return Err(Error::MeshOp(
                "all-contour triangles kept reappearing under splitting".into(),
            ));
        }
        let t = rm.tris[ti];
        let mut candidates: Vec<(u32, u32)> = Vec::new();
        for k in 0..3 {
            let (u, v) = (t[k], t[(k + 1) % 3]);
            let key = (u.min(v), u.max(v));
            if rm.constrained.contains(&key) || is_contour_edge(rm, u, v) {
                continue;
            }
            candidates.push((u, v));
        }
        if candidates.is_empty() {
            return Err(Error::MeshOp(
                "triangle with three contour corners has no splittable edge".into(),
            ));
        }
        let (u, v) = candidates[rng.gen_range(0..candidates.len())];
        let mid = (rm.verts[u as usize].pos + rm.verts[v as usize].pos) * 0.5;
        let toward = (frame.center - mid).normalize();
        let dir = if side == VertClass::Front {
            toward
        } else {
            -toward
        };
        let pos = mid + dir * (cfg.perturb_scale * bbox_diag);
        let (px, _) = frame
            .project(pos)
            .map_err(|_| Error::MeshOp("split vertex fell behind the camera".into()))?;
        split_rm_edge(
            rm,
            u,
            v,
            LiftVertex {
                px,
                pos,
                sp: None,
                src: None,
            },
        );
        splits += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Camera;
    use crate::cut::{cut_open_is_disk, cut_to_disk, ensure_contact_edges, mark_edge_validity};
    use crate::fixtures;
    use crate::geom::{v2, v3};
    use crate::insert::{
        build_initial_mesh, detect_extra_singularities, extract_loops, face_side,
        flag_contours_and_regions, insert_contours, label_singularities, InsertionConfig,
    };

    fn prep(surface: &Surface, camera: &Camera) -> (CameraFrame, WorkMesh, Projected, u32) {
        let frame = camera.frame().unwrap();
        let cfg = InsertionConfig::default();
        let mut mesh = build_initial_mesh(surface, cfg.initial_subdivision_levels).unwrap();
        insert_contours(&mut mesh, surface, &frame, &cfg).unwrap();
        let nregions = flag_contours_and_regions(&mut mesh).unwrap();
        let proj = mesh.project_all(&frame).unwrap();
        let loops = extract_loops(&mesh, &proj).unwrap();
        label_singularities(&mut mesh, &loops, &proj).unwrap();
        detect_extra_singularities(&mut mesh, &loops, &proj).unwrap();
        (frame, mesh, proj, nregions)
    }

    fn sphere_scene() -> (Surface, CameraFrame, WorkMesh, Projected, u32) {
        let surface = Surface::new(&fixtures::sphere(1)).unwrap();
        let cams = fixtures::turntable(surface.eval_mesh(), 8, 640, 480);
        let (frame, mesh, proj, n) = prep(&surface, &cams[0]);
        (surface, frame, mesh, proj, n)
    }

    /// Torus seen almost along its axis: the contour is two nested loops
    /// and the mesh splits into a front band around the top and one back
    /// region covering the rest.
    fn torus_scene() -> (Surface, CameraFrame, WorkMesh, Projected, u32) {
        let surface = Surface::new(&fixtures::torus(16, 10, 1.0, 0.45)).unwrap();
        let cam = Camera {
            center: [0.35, -0.25, 4.3],
            look_at: [0.0, 0.0, 0.0],
            up: [0.0, 1.0, 0.0],
            fov_deg: 40.0,
            image_width_px: 640,
            image_height_px: 480,
        };
        let (frame, mesh, proj, n) = prep(&surface, &cam);
        (surface, frame, mesh, proj, n)
    }

    fn region_of_side(mesh: &WorkMesh, want: VertClass) -> u32 {
        for f in mesh.live_faces() {
            if face_side(mesh, f) == Some(want) {
                return mesh.region[f as usize];
            }
        }
        panic!("no {want:?} region");
    }

    #[test]
    fn line_segment_solver() {
        let (t, s) = line_segment(v2(0.0, 0.0), v2(1.0, 0.0), v2(2.0, -1.0), v2(2.0, 3.0)).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
        assert!((s - 0.25).abs() < 1e-12);
        assert!(line_segment(v2(0.0, 0.0), v2(1.0, 0.0), v2(0.0, 1.0), v2(5.0, 1.0)).is_none());
    }

    #[test]
    fn sphere_trace_diagonal_samples_on_carrier() {
        let (surface, frame, mesh, proj, _) = sphere_scene();
        let loops = extract_loops(&mesh, &proj).unwrap();
        let lp = &loops[0].verts;
        let a = lp[0];
        let b = lp[lp.len() / 2];
        let region = region_of_side(&mesh, VertClass::Front);
        let cfg = LiftConfig::default();
        let pa = proj.xy[a as usize];
        let pb = proj.xy[b as usize];
        let existing = vec![pa, pb];
        let path = trace_edge_path(
            &mesh, &surface, &frame, &proj, region, a, b, &existing, &cfg,
        )
        .expect("chord across the silhouette disk");
        let len = (pb - pa).norm();
        let d = (pb - pa) / len;
        assert!(
            path.samples.len() as f64 >= len / (4.0 * cfg.sample_spacing_px),
            "a {len:.0}px chord produced only {} samples",
            path.samples.len()
        );
        let mut prev = pa;
        for s in &path.samples {
            assert!(
                cross2(s.px - pa, d).abs() <= cfg.carrier_tolerance_px + 1e-12,
                "sample strayed from the carrier"
            );
            assert!((s.px - prev).dot(&d) > 0.0, "samples must march toward b");
            assert!((s.px - prev).norm() >= cfg.proximity_skip_px - 1e-12);
            let ev = surface.eval(s.sp);
            assert!((ev.position - s.position).norm() < 1e-12);
            let (px, _) = frame.project(s.position).unwrap();
            assert!((px - s.px).norm() < 1e-12);
            prev = s.px;
        }
        assert!((prev - pa).dot(&d) < len, "no sample may pass b");
    }

    #[test]
    fn torus_trace_across_the_hole_fails() {
        let (surface, frame, mesh, proj, _) = torus_scene();
        let loops = extract_loops(&mesh, &proj).unwrap();
        let outer = loops
            .iter()
            .max_by(|a, b| a.arclength_px.total_cmp(&b.arclength_px))
            .unwrap();
        let a = outer.verts[0];
        let b = outer.verts[outer.verts.len() / 2];
        let region = region_of_side(&mesh, VertClass::Front);
        let cfg = LiftConfig::default();
        assert!(
            trace_edge_path(&mesh, &surface, &frame, &proj, region, a, b, &[], &cfg).is_none(),
            "a chord through the hole must report not-found"
        );
        let c = outer.verts[2];
        assert!(
            trace_edge_path(&mesh, &surface, &frame, &proj, region, a, c, &[], &cfg).is_some(),
            "a short chord along the band should trace"
        );
    }

    #[test]
    fn annulus_region_polygon_after_cutting() {
        let mut mesh = fixtures::annulus(2, 8);
        let cam = Camera {
            center: [0.0, 0.0, 6.0],
            look_at: [0.0, 0.0, 0.0],
            up: [0.0, 1.0, 0.0],
            fov_deg: 45.0,
            image_width_px: 640,
            image_height_px: 480,
        };
        let frame = cam.frame().unwrap();
        let proj = mesh.project_all(&frame).unwrap();
        let err = region_polygon(&mesh, &proj, 0, frame.center).unwrap_err();
        assert!(matches!(err, Error::Region { .. }), "two loops before any cut");

        // Cut along one radial line; the cut-open boundary is a single
        // loop visiting each cut vertex twice.
        let v = |i: u32, j: u32| i * 8 + j;
        for (x, y) in [(v(0, 0), v(1, 0)), (v(1, 0), v(2, 0))] {
            let h = mesh.halfedge(x, y).or_else(|| mesh.halfedge(y, x)).unwrap();
            mesh.set_cut(h, true);
        }
        let rp = region_polygon(&mesh, &proj, 0, frame.center).unwrap();
        assert_eq!(rp.verts.len(), 20);
        assert_eq!(rp.interior_ids, vec![v(1, 0)]);
        for x in [v(0, 0), v(1, 0), v(2, 0)] {
            assert_eq!(rp.verts.iter().filter(|&&w| w == x).count(), 2);
        }
        rp.poly.validate().unwrap();
        let tri = match triangulate_cut_open(&rp.poly, &rp.verts, &rp.interior_ids).unwrap() {
            WsoOutcome::Yes(t) => t,
            WsoOutcome::No { locus } => panic!("flat cut-open annulus rejected at {locus:?}"),
        };
        assert_eq!(tri.tris.len(), rp.verts.len() - 2);
        for piece in simple_decompose(&tri) {
            let pts: Vec<V2> = piece
                .boundary
                .iter()
                .map(|&i| tri.points[i as usize])
                .collect();
            assert!(crate::wso::polygon_is_simple(&pts));
        }
    }

    fn lv(x: f64, y: f64) -> LiftVertex {
        LiftVertex {
            px: v2(x, y),
            pos: v3(x, y, 0.0),
            sp: Some(SurfacePoint::new(0, 0.0, 0.0)),
            src: None,
        }
    }

    fn ps(x: f64, y: f64) -> PathSample {
        PathSample {
            sp: SurfacePoint::new(0, 0.5, 0.5),
            position: v3(x, y, 0.0),
            px: v2(x, y),
        }
    }

    fn positive(rm: &RegionMesh) -> bool {
        rm.tris.iter().all(|t| {
            orient2d(
                rm.verts[t[0] as usize].px,
                rm.verts[t[1] as usize].px,
                rm.verts[t[2] as usize].px,
            ) == 1
        })
    }

    #[test]
    fn square_with_center_sample() {
        let corners = vec![lv(0.0, 0.0), lv(10.0, 0.0), lv(10.0, 10.0), lv(0.0, 10.0)];
        let cfg = LiftConfig::default();
        let rm = triangulate_lift(&corners, &[ps(5.0, 5.0)], &cfg).unwrap();
        assert_eq!(rm.verts.len(), 5);
        assert_eq!(rm.tris.len(), 4);
        assert!(positive(&rm));
        // Full angle closes up around the interior sample.
        let mut theta = 0.0;
        for t in &rm.tris {
            for k in 0..3 {
                if t[k] == 4 {
                    let u = rm.verts[t[(k + 1) % 3] as usize].px - rm.verts[4].px;
                    let w = rm.verts[t[(k + 2) % 3] as usize].px - rm.verts[4].px;
                    theta += cross2(u, w).atan2(u.dot(&w));
                }
            }
        }
        assert!((theta - std::f64::consts::TAU).abs() < 1e-9);
    }

    #[test]
    fn samples_near_constraints_or_duplicated_are_dropped() {
        let corners = vec![lv(0.0, 0.0), lv(10.0, 0.0), lv(10.0, 10.0), lv(0.0, 10.0)];
        let cfg = LiftConfig::default();
        let samples = [
            ps(5.0, 5.0),
            ps(5.0, 0.1),          // hugs the bottom constraint
            ps(5.0, -3.0),         // outside
            ps(5.0 + 1e-10, 5.0),  // duplicate of the first
        ];
        let rm = triangulate_lift(&corners, &samples, &cfg).unwrap();
        assert_eq!(rm.verts.len(), 5);
    }

    #[test]
    fn bad_polygons_are_rejected() {
        let cfg = LiftConfig::default();
        let bow = vec![lv(0.0, 0.0), lv(2.0, 2.0), lv(2.0, 0.0), lv(0.0, 2.0)];
        assert!(triangulate_lift(&bow, &[], &cfg).is_err());
        let cw = vec![lv(0.0, 0.0), lv(0.0, 10.0), lv(10.0, 10.0), lv(10.0, 0.0)];
        assert!(triangulate_lift(&cw, &[], &cfg).is_err());
    }

    #[test]
    fn relax_leaves_delaunay_mesh_alone() {
        let corners = vec![lv(0.0, 0.0), lv(10.0, 0.0), lv(10.0, 10.0), lv(0.0, 10.0)];
        let cfg = LiftConfig::default();
        let mut rm = triangulate_lift(&corners, &[ps(5.0, 5.0)], &cfg).unwrap();
        let before = rm.tris.clone();
        long_edge_relax(&mut rm, 4);
        assert_eq!(before, rm.tris);
    }

    #[test]
    fn relax_flips_non_delaunay_quad_once() {
        let verts = vec![lv(0.0, 0.0), lv(10.0, 0.0), lv(10.0, 1.0), lv(0.0, 0.8)];
        let constrained: BTreeSet<(u32, u32)> =
            [(0, 1), (1, 2), (2, 3), (0, 3)].into_iter().collect();
        let mut rm = RegionMesh {
            verts,
            tris: vec![[0, 1, 2], [0, 2, 3]],
            constrained,
            n_boundary: 4,
        };
        long_edge_relax(&mut rm, 0);
        let mut edges = BTreeSet::new();
        for t in &rm.tris {
            for k in 0..3 {
                let (u, v) = (t[k], t[(k + 1) % 3]);
                edges.insert((u.min(v), u.max(v)));
            }
        }
        assert!(edges.contains(&(1, 3)), "diagonal must flip: {:?}", rm.tris);
        assert!(!edges.contains(&(0, 2)));
        assert!(positive(&rm));
    }

    #[test]
    fn relax_shrinks_sliver_ladder() {
        // Three stacked skinny quads, each split along its longer diagonal.
        let mut verts = Vec::new();
        for i in 0..4 {
            verts.push(lv(0.0, i as f64));
        }
        for i in 0..4 {
            verts.push(lv(10.0, i as f64 + 0.5));
        }
        let l = |i: u32| i;
        let r = |i: u32| i + 4;
        let mut tris = Vec::new();
        for i in 0..3 {
            tris.push([l(i), r(i), r(i + 1)]);
            tris.push([l(i), r(i + 1), l(i + 1)]);
        }
        let mut constrained = BTreeSet::new();
        for i in 0..3 {
            constrained.insert((l(i), l(i + 1)));
            constrained.insert((r(i), r(i + 1)));
        }
        constrained.insert((l(0), r(0)));
        constrained.insert((l(3), r(3)));
        let mut rm = RegionMesh {
            verts,
            tris,
            constrained,
            n_boundary: 8,
        };
        let max_free_edge = |rm: &RegionMesh| -> f64 {
            let mut best = 0.0f64;
            for t in &rm.tris {
                for k in 0..3 {
                    let (u, v) = (t[k], t[(k + 1) % 3]);
                    if rm.constrained.contains(&(u.min(v), u.max(v))) {
                        continue;
                    }
                    best = best.max((rm.verts[u as usize].px - rm.verts[v as usize].px).norm());
                }
            }
            best
        };
        let before = max_free_edge(&rm);
        long_edge_relax(&mut rm, 0);
        let after = max_free_edge(&rm);
        assert!(
            after < before,
            "longest interior edge must shrink: {before} -> {after}"
        );
        assert!(positive(&rm));
        assert_eq!(rm.tris.len(), 6);
    }

    /// A piece whose lone interior diagonal joins two contour corners:
    /// the all-contour triangle must be split and its new vertex pushed
    /// along the view ray.
    fn ccc_fixture() -> (WorkMesh, CameraFrame, RegionMesh) {
        let positions = vec![
            v3(0.0, 0.0, 0.0),
            v3(1.0, 0.0, 0.0),
            v3(1.0, 1.0, 0.0),
            v3(0.0, 1.0, 0.0),
        ];
        let vdata: Vec<VertexData> = (0..4)
            .map(|_| VertexData::new(VertClass::Contour, SurfacePoint::new(0, 0.0, 0.0)))
            .collect();
        let mut src = WorkMesh::new(positions, vdata, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        src.region = vec![0, 0];
        for (a, b) in [(0u32, 1u32), (1, 2), (2, 3), (3, 0)] {
            let h = src.halfedge(a, b).unwrap();
            src.set_contour(h, true);
        }
        let cam = Camera {
            center: [0.5, 0.5, 5.0],
            look_at: [0.5, 0.5, 0.0],
            up: [0.0, 1.0, 0.0],
            fov_deg: 45.0,
            image_width_px: 640,
            image_height_px: 480,
        };
        let frame = cam.frame().unwrap();
        let mut verts = Vec::new();
        for vid in 0..4u32 {
            let pos = src.positions[vid as usize];
            let (px, _) = frame.project(pos).unwrap();
            verts.push(LiftVertex {
                px,
                pos,
                sp: Some(SurfacePoint::new(0, 0.0, 0.0)),
                src: Some(vid),
            });
        }
        let constrained: BTreeSet<(u32, u32)> =
            [(0, 1), (1, 2), (2, 3), (0, 3)].into_iter().collect();
        let rm = RegionMesh {
            verts,
            tris: vec![[0, 2, 1], [0, 3, 2]],
            constrained,
            n_boundary: 4,
        };
        // Projection flips orientation (pixel y runs down), so the given
        // windings are the positively oriented ones.
        assert!(positive(&rm));
        (src, frame, rm)
    }

    #[test]
    fn ccc_split_perturbs_along_the_view_ray() {
        let cfg = LiftConfig::default();
        for side in [VertClass::Front, VertClass::Back] {
            let (src, frame, mut rm) = ccc_fixture();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let n = fix_ccc(&mut rm, &src, &frame, side, 1.0, &cfg, &mut rng).unwrap();
            // Splitting the shared diagonal resolves both bad triangles at once.
            assert_eq!(n, 1);
            assert_eq!(rm.verts.len(), 5);
            assert_eq!(rm.tris.len(), 4);
            assert!(positive(&rm));
            {
                let v = &rm.verts[4];
                assert!(v.sp.is_none() && v.src.is_none());
                let depth = (frame.center - v.pos).norm();
                // The diagonal midpoint is the only split site; compare
                // against its distance to the camera.
                let mid = (rm.verts[0].pos + rm.verts[2].pos) * 0.5;
                let ref_depth = (frame.center - mid).norm();
                match side {
                    VertClass::Front => assert!(depth < ref_depth),
                    _ => assert!(depth > ref_depth),
                }
                // Projection is unchanged by the push.
                let (px, _) = frame.project(v.pos).unwrap();
                assert!((px - v.px).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn ccc_without_interior_edges_is_structural() {
        let (src, frame, rm) = ccc_fixture();
        // A lone triangle piece: every edge constrained, corners contour.
        let tri_rm = RegionMesh {
            verts: rm.verts[0..3].to_vec(),
            tris: vec![[0, 2, 1]],
            constrained: [(0, 1), (1, 2), (0, 2)].into_iter().collect(),
            n_boundary: 3,
        };
        let cfg = LiftConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tri_rm = tri_rm;
        assert!(fix_ccc(&mut tri_rm, &src, &frame, VertClass::Front, 1.0, &cfg, &mut rng).is_err());
    }

    #[test]
    fn ccc_fix_separates_mirrored_pieces() {
        let cfg = LiftConfig::default();
        let (src, frame, mut front) = ccc_fixture();
        let (_, _, mut back) = ccc_fixture();
        // Mirror the back piece in 2D by swapping the winding.
        for t in &mut back.tris {
            t.swap(1, 2);
        }
        for t in &mut back.tris {
            let flipped = orient2d(
                back.verts[t[0] as usize].px,
                back.verts[t[1] as usize].px,
                back.verts[t[2] as usize].px,
            );
            assert_eq!(flipped, -1);
            t.swap(1, 2); // restore; pieces are stored positively either way
        }
        let mut rng_f = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut rng_b = ChaCha8Rng::seed_from_u64(cfg.seed);
        fix_ccc(&mut front, &src, &frame, VertClass::Front, 1.0, &cfg, &mut rng_f).unwrap();
        fix_ccc(&mut back, &src, &frame, VertClass::Back, 1.0, &cfg, &mut rng_b).unwrap();
        // The shared diagonal is gone from both sides and the inserted
        // vertices sit on opposite sides of the surface.
        for rm in [&front, &back] {
            for t in &rm.tris {
                for k in 0..3 {
                    let (u, v) = (t[k], t[(k + 1) % 3]);
                    assert_ne!((u.min(v), u.max(v)), (0, 2), "diagonal must be split");
                }
            }
        }
        assert!(front.verts[4].pos.z > 0.0);
        assert!(back.verts[4].pos.z < 0.0);
    }

    fn lift_and_stitch(
        surface: &Surface,
        frame: &CameraFrame,
        mesh: &WorkMesh,
        proj: &Projected,
        nregions: u32,
        cfg: &LiftConfig,
        front_only: bool,
    ) -> OutputMesh {
        let regions: Vec<u32> = (0..nregions).collect();
        let lifted = lift_all_regions(mesh, surface, frame, proj, &regions, cfg).unwrap();
        stitch(mesh, &lifted, front_only).unwrap()
    }

    fn side_of_region(lifted_src: &WorkMesh, out: &OutputMesh, f: u32) -> VertClass {
        region_side(lifted_src, out.region[f as usize], v3(0.0, 0.0, 0.0))
    }

    #[test]
    fn sphere_lift_is_closed_and_consistent() {
        let (surface, frame, mesh, proj, nregions) = sphere_scene();
        assert_eq!(nregions, 2);
        let cfg = LiftConfig::default();
        let out = lift_and_stitch(&surface, &frame, &mesh, &proj, nregions, &cfg, false);
        out.integrity_check().unwrap();
        assert_eq!(out.euler_characteristic(), 2);
        let _ = side_of_region; // regions carry their side through tags below
        // Closed: every halfedge pairs up.
        for f in out.live_faces() {
            for i in 0..3u32 {
                assert_ne!(out.he_twin(f * 3 + i), NO_HE, "sphere output must close");
            }
        }
        // Zero inconsistent faces: the 3D orientation of every face
        // matches its region's class.
        let side_by_region: BTreeMap<u32, VertClass> = (0..nregions)
            .map(|r| (r, region_side(&mesh, r, frame.center)))
            .collect();
        for f in out.live_faces() {
            let want = side_by_region[&out.region[f as usize]];
            let s3 = out.face_orientation_3d(f, frame.center);
            match want {
                VertClass::Front => assert_eq!(s3, -1, "face {f} flipped against its region"),
                VertClass::Back => assert_eq!(s3, 1, "face {f} flipped against its region"),
                VertClass::Contour => unreachable!(),
            }
        }
        // The output contour is exactly the inserted contour edge set.
        let pos_key = |m: &WorkMesh, v: u32| -> [u64; 3] {
            let p = m.positions[v as usize];
            [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]
        };
        let mut out_vid: BTreeMap<[u64; 3], u32> = BTreeMap::new();
        for v in 0..out.n_vertices() as u32 {
            out_vid.insert(pos_key(&out, v), v);
        }
        let mut src_contour = 0usize;
        for f in mesh.live_faces() {
            for i in 0..3u32 {
                let h = f * 3 + i;
                if !mesh.is_contour(h) {
                    continue;
                }
                let (a, b) = (mesh.he_from(h), mesh.he_to(h));
                if a > b {
                    continue;
                }
                src_contour += 1;
                let (na, nb) = (out_vid[&pos_key(&mesh, a)], out_vid[&pos_key(&mesh, b)]);
                let oh = out
                    .halfedge(na, nb)
                    .or_else(|| out.halfedge(nb, na))
                    .expect("contour edge survives the stitch");
                assert!(out.is_contour(oh));
            }
        }
        let mut out_contour = 0usize;
        for f in out.live_faces() {
            for i in 0..3u32 {
                let h = f * 3 + i;
                if out.is_contour(h) && out.he_from(h) < out.he_to(h) {
                    out_contour += 1;
                }
            }
        }
        assert_eq!(src_contour, out_contour);
        // Only contour edges separate regions of opposite class.
        for f in out.live_faces() {
            for i in 0..3u32 {
                let h = f * 3 + i;
                let t = out.he_twin(h);
                if t == NO_HE || t < h {
                    continue;
                }
                let (ra, rb) = (out.region[f as usize], out.region[(t / 3) as usize]);
                if side_by_region[&ra] != side_by_region[&rb] {
                    assert!(out.is_contour(h), "non-contour edge separates orientations");
                }
            }
        }
        // Non-perturbed vertices sit on the smooth surface.
        let tol = 1e-9 * surface.scene_scale();
        for v in 0..out.n_vertices() {
            let vd = &out.vdata[v];
            if vd.perturbed {
                continue;
            }
            assert!(!vd.sps.is_empty());
            let ev = surface.eval(vd.sps[0]);
            assert!((ev.position - out.positions[v]).norm() <= tol);
        }
    }

    #[test]
    fn sphere_front_only_is_bounded_by_the_contour() {
        let (surface, frame, mesh, proj, nregions) = sphere_scene();
        let cfg = LiftConfig::default();
        let out = lift_and_stitch(&surface, &frame, &mesh, &proj, nregions, &cfg, true);
        out.integrity_check().unwrap();
        assert_eq!(out.euler_characteristic(), 1, "front hemisphere is a disk");
        let mut open = 0;
        for f in out.live_faces() {
            for i in 0..3u32 {
                let h = f * 3 + i;
                if out.he_twin(h) == NO_HE {
                    open += 1;
                    assert!(out.is_contour(h), "open boundary must be contour");
                }
            }
        }
        assert!(open > 0);
    }

    #[test]
    fn density_adds_interior_samples_without_touching_the_contour() {
        let (surface, frame, mesh, proj, nregions) = sphere_scene();
        let coarse = LiftConfig {
            sample_spacing_px: 4.0,
            ..LiftConfig::default()
        };
        let fine = LiftConfig::default();
        let out_c = lift_and_stitch(&surface, &frame, &mesh, &proj, nregions, &coarse, false);
        let out_f = lift_and_stitch(&surface, &frame, &mesh, &proj, nregions, &fine, false);
        assert!(
            out_f.n_vertices() > out_c.n_vertices(),
            "halving the spacing must add interior vertices"
        );
        let contour_verts = |m: &WorkMesh| -> BTreeSet<[u64; 3]> {
            let mut set = BTreeSet::new();
            for f in m.live_faces() {
                for i in 0..3u32 {
                    let h = f * 3 + i;
                    if m.is_contour(h) {
                        for v in [m.he_from(h), m.he_to(h)] {
                            let p = m.positions[v as usize];
                            set.insert([p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]);
                        }
                    }
                }
            }
            set
        };
        assert_eq!(contour_verts(&out_c), contour_verts(&out_f));
    }

    #[test]
    fn torus_lift_preserves_genus() {
        let (surface, frame, mut mesh, proj, nregions) = torus_scene();
        assert_eq!(nregions, 2, "near-axis torus view has two regions");
        // Both regions are annuli; cut each one open.
        for r in 0..nregions {
            assert!(!cut_open_is_disk(&mesh, r));
            let validity = mark_edge_validity(&mesh, &proj, frame.center, r);
            ensure_contact_edges(&mut mesh, Some(&surface), frame.center, r, &validity).unwrap();
            let validity = mark_edge_validity(&mesh, &proj, frame.center, r);
            cut_to_disk(&mut mesh, r, &validity).unwrap();
            assert!(cut_open_is_disk(&mesh, r), "region {r} must open into a disk");
        }
        let proj = mesh.project_all(&frame).unwrap();
        let cfg = LiftConfig::default();
        let out = lift_and_stitch(&surface, &frame, &mesh, &proj, nregions, &cfg, false);
        out.integrity_check().unwrap();
        assert_eq!(out.euler_characteristic(), 0, "torus output keeps genus one");
        for f in out.live_faces() {
            for i in 0..3u32 {
                assert_ne!(out.he_twin(f * 3 + i), NO_HE);
            }
        }
        let side_by_region: BTreeMap<u32, VertClass> = (0..nregions)
            .map(|r| (r, region_side(&mesh, r, frame.center)))
            .collect();
        for f in out.live_faces() {
            let want = side_by_region[&out.region[f as usize]];
            let s3 = out.face_orientation_3d(f, frame.center);
            match want {
                VertClass::Front => assert_eq!(s3, -1, "face {f} flipped"),
                VertClass::Back => assert_eq!(s3, 1, "face {f} flipped"),
                VertClass::Contour => unreachable!(),
            }
        }
    }
}

//! Contour insertion: uniform refinement of the cage, root-finding on
//! edges of the orientation function, cusp location, and singularity
//! labeling of the resulting image-space contour loops.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::basemesh::Topo;
use crate::camera::CameraFrame;
use crate::error::{Error, Result};
use crate::geom::{angle_at, V2, V3};
use crate::subdiv::catmull_clark;
use crate::surface::{Surface, SurfacePoint, VertClass};
use crate::workmesh::{Projected, VertexData, WorkMesh, NO_HE, NO_REGION};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct InsertionConfig {
    pub initial_subdivision_levels: u32,
    pub max_subdivision_levels: u32,
    pub edge_root_samples: u32,
    pub max_ff_bb_recursions: u32,
    /// Cusp-to-vertex merge tolerances: image pixels, world units as a
    /// fraction of the bounding-box diagonal, and parameter units.
    pub cusp_merge_px: f64,
    pub cusp_merge_world: f64,
    pub cusp_merge_uv: f64,
}

impl Default for InsertionConfig {
    fn default() -> Self {
        InsertionConfig {
            initial_subdivision_levels: 2,
            max_subdivision_levels: 6,
            edge_root_samples: 32,
            max_ff_bb_recursions: 5,
            cusp_merge_px: 0.5,
            cusp_merge_world: 1e-4,
            cusp_merge_uv: 1e-3,
        }
    }
}

/// A chain of contour vertices, closed unless it ends on the surface
/// boundary, ordered so the front-side region lies on the halfedge side.
#[derive(Debug, Clone)]
pub struct ContourLoop {
    pub verts: Vec<u32>,
    pub closed: bool,
    pub arclength_px: f64,
}

/// Uniformly refine the evaluation cage and triangulate it, with vertices
/// at limit positions and parameter backpointers into `surface`.
pub fn build_initial_mesh(surface: &Surface, levels: u32) -> Result<WorkMesh> {
    let base = surface.eval_mesh().clone();
    let mut mesh = base;
    let mut maps: Vec<(Vec<u32>, Vec<u8>)> = Vec::new();
    for _ in 0..levels {
        let topo = Topo::build(&mesh)?;
        let sub = catmull_clark(&mesh, &topo);
        let mut parent = vec![0u32; sub.mesh.n_faces()];
        let mut quadrant = vec![0u8; sub.mesh.n_faces()];
        for f in 0..mesh.n_faces() as u32 {
            for (q, &c) in sub.children(f).iter().enumerate() {
                parent[c as usize] = f;
                quadrant[c as usize] = q as u8;
            }
        }
        maps.push((parent, quadrant));
        mesh = sub.mesh;
    }
    // Base-face parameter box of each finest-level face.
    let corner_uv = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    let n_vertices = mesh.n_vertices();
    let mut sps: Vec<Option<SurfacePoint>> = vec![None; n_vertices];
    for f in 0..mesh.n_faces() as u32 {
        let (mut lo_u, mut lo_v, mut size) = (0.0f64, 0.0f64, 1.0f64);
        let mut cur = f;
        for (parent, quadrant) in maps.iter().rev() {
            let q = quadrant[cur as usize] as usize;
            let (qu, qv) = corner_uv[q];
            lo_u = (lo_u + qu) * 0.5;
            lo_v = (lo_v + qv) * 0.5;
            size *= 0.5;
            cur = parent[cur as usize];
        }
        let verts = mesh.face(f);
        if verts.len() != 4 {
            return Err(Error::InvalidMesh(format!(
                "refined cage face {f} is not a quad"
            )));
        }
        for (k, &v) in verts.iter().enumerate() {
            if sps[v as usize].is_none() {
                let (cu, cv) = corner_uv[k];
                sps[v as usize] =
                    Some(SurfacePoint::new(cur, lo_u + size * cu, lo_v + size * cv));
            }
        }
    }
    let cam_independent: Vec<(V3, SurfacePoint)> = sps
        .iter()
        .map(|sp| {
            let sp = sp.expect("every cage vertex belongs to a face");
            (surface.eval(sp).position, sp)
        })
        .collect();
    let vdata: Vec<VertexData> = cam_independent
        .iter()
        .map(|&(_, sp)| VertexData::new(VertClass::Front, sp))
        .collect();
    let positions: Vec<V3> = cam_independent.iter().map(|&(p, _)| p).collect();
    let mut tris = Vec::with_capacity(mesh.n_faces() * 2);
    for f in 0..mesh.n_faces() as u32 {
        let q = mesh.face(f);
        tris.push([q[0], q[1], q[2]]);
        tris.push([q[0], q[2], q[3]]);
    }
    WorkMesh::new(positions, vdata, tris)
}

/// Set every vertex tag from the orientation function.
pub fn classify_vertices(mesh: &mut WorkMesh, surface: &Surface, cam_pos: V3) {
    for v in 0..mesh.n_vertices() {
        if mesh.vdata[v].perturbed {
            continue;
        }
        let sp = mesh.vdata[v].sps[0];
        let (class, _) = surface.classify(sp, cam_pos);
        mesh.vdata[v].tag = class;
    }
}

/// Lowest-id base face shared by all the given vertices, with each
/// vertex's parameters expressed in it.
pub(crate) fn common_face(
    surface: &Surface,
    mesh: &WorkMesh,
    verts: &[u32],
) -> Option<(u32, Vec<V2>)> {
    let alias_sets: Vec<Vec<SurfacePoint>> = verts
        .iter()
        .map(|&v| {
            let sp = mesh.vdata[v as usize].sps.first()?;
            Some(surface.aliases(*sp))
        })
        .collect::<Option<_>>()?;
    let mut shared: BTreeSet<u32> = alias_sets[0].iter().map(|sp| sp.face).collect();
    for set in &alias_sets[1..] {
        let faces: BTreeSet<u32> = set.iter().map(|sp| sp.face).collect();
        shared = shared.intersection(&faces).copied().collect();
    }
    let face = *shared.iter().next()?;
    let uv = alias_sets
        .iter()
        .map(|set| {
            let sp = set.iter().find(|sp| sp.face == face).unwrap();
            V2::new(sp.u, sp.v)
        })
        .collect();
    Some((face, uv))
}

/// Roots of `g` on [0,1]: dense sampling at `samples` intervals, then
/// bisection of each sign bracket to 1e-12 in `t`.
pub fn find_roots(g: impl Fn(f64) -> f64, samples: u32) -> Vec<f64> {
    let n = samples.max(2) as usize;
    let vals: Vec<(f64, f64)> = (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            (t, g(t))
        })
        .collect();
    let mut roots = Vec::new();
    for i in 0..=n {
        if vals[i].1 == 0.0 {
            roots.push(vals[i].0);
        }
    }
    for w in vals.windows(2) {
        let (t0, g0) = w[0];
        let (t1, g1) = w[1];
        if g0 == 0.0 || g1 == 0.0 || (g0 > 0.0) == (g1 > 0.0) {
            continue;
        }
        let (mut a, mut b) = (t0, t1);
        let mut ga = g0;
        while b - a > 1e-12 {
            let m = 0.5 * (a + b);
            let gm = g(m);
            if gm == 0.0 {
                a = m;
                b = m;
                break;
            }
            if (gm > 0.0) == (ga > 0.0) {
                a = m;
                ga = gm;
            } else {
                b = m;
            }
        }
        roots.push(0.5 * (a + b));
    }
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    roots.dedup_by(|x, y| (*x - *y).abs() < 1e-10);
    roots
}

fn split_edge_at(
    mesh: &mut WorkMesh,
    surface: &Surface,
    a: u32,
    b: u32,
    sp: SurfacePoint,
) -> Result<u32> {
    let h = mesh
        .halfedge(a, b)
        .or_else(|| mesh.halfedge(b, a))
        .ok_or_else(|| Error::MeshOp(format!("edge ({a},{b}) vanished during splitting")))?;
    let sample = surface.eval(sp);
    let mut data = VertexData::new(VertClass::Contour, sp);
    data.tag = VertClass::Contour;
    mesh.split_edge(h, sample.position, data)
}

/// Insert contour vertices: root-finding on same-tag edges (recursed), then
/// on every F-B edge. Afterwards no F-B edge remains.
pub fn insert_contours(
    mesh: &mut WorkMesh,
    surface: &Surface,
    frame: &CameraFrame,
    cfg: &InsertionConfig,
) -> Result<()> {
    let cam = frame.center;
    classify_vertices(mesh, surface, cam);
    for _pass in 0..=cfg.max_ff_bb_recursions {
        let targets = collect_edges(mesh, |ta, tb| {
            (ta == VertClass::Front && tb == VertClass::Front)
                || (ta == VertClass::Back && tb == VertClass::Back)
        });
        let mut any = false;
        for (a, b) in targets {
            any |= split_edge_roots(mesh, surface, cam, cfg, a, b, false)?;
        }
        if !any {
            break;
        }
    }
    let mixed = collect_edges(mesh, |ta, tb| {
        (ta == VertClass::Front && tb == VertClass::Back)
            || (ta == VertClass::Back && tb == VertClass::Front)
    });
    for (a, b) in mixed {
        let split = split_edge_roots(mesh, surface, cam, cfg, a, b, true)?;
        if !split {
            return Err(Error::MeshOp(format!(
                "root-finding failed on sign-crossing edge ({a},{b})"
            )));
        }
    }
    let leftover = collect_edges(mesh, |ta, tb| {
        (ta == VertClass::Front && tb == VertClass::Back)
            || (ta == VertClass::Back && tb == VertClass::Front)
    });
    if let Some(&(a, b)) = leftover.first() {
        return Err(Error::MeshOp(format!(
            "edge ({a},{b}) still crosses the contour after insertion"
        )));
    }
    resolve_ccc_by_flips(mesh)?;
    Ok(())
}

fn collect_edges(
    mesh: &WorkMesh,
    want: impl Fn(VertClass, VertClass) -> bool,
) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for f in mesh.live_faces() {
        for i in 0..3u32 {
            let h = f * 3 + i;
            let a = mesh.he_from(h);
            let b = mesh.he_to(h);
            if a < b || mesh.he_twin(h) == NO_HE {
                let (ta, tb) = (mesh.vdata[a as usize].tag, mesh.vdata[b as usize].tag);
                if want(ta, tb) {
                    out.push((a.min(b), a.max(b)));
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Root-find along one edge and split at every root; returns whether any
/// split happened.
fn split_edge_roots(
    mesh: &mut WorkMesh,
    surface: &Surface,
    cam: V3,
    cfg: &InsertionConfig,
    a: u32,
    b: u32,
    required: bool,
) -> Result<bool> {
    if mesh.halfedge(a, b).is_none() && mesh.halfedge(b, a).is_none() {
        return Ok(false); // consumed by an earlier split this pass
    }
    let (face, uv) = common_face(surface, mesh, &[a, b]).ok_or_else(|| {
        Error::MeshOp(format!("edge ({a},{b}) endpoints share no base face"))
    })?;
    let (u0, u1) = (uv[0], uv[1]);
    let g = |t: f64| {
        let p = u0 + (u1 - u0) * t;
        surface.orientation_g(SurfacePoint::new(face, p.x, p.y), cam)
    };
    let roots: Vec<f64> = find_roots(g, cfg.edge_root_samples)
        .into_iter()
        .filter(|&t| t > 1e-9 && t < 1.0 - 1e-9)
        .collect();
    if roots.is_empty() {
        if required {
            return Err(Error::MeshOp(format!(
                "no root found on sign-crossing edge ({a},{b})"
            )));
        }
        return Ok(false);
    }
    let mut cur = a;
    for &t in &roots {
        let p = u0 + (u1 - u0) * t;
        let sp = SurfacePoint::new(face, p.x, p.y);
        cur = split_edge_at(mesh, surface, cur, b, sp)?;
    }
    Ok(true)
}

/// Tag of the non-contour corners of a face: Front, Back, or None for an
/// all-contour face.
pub fn face_side(mesh: &WorkMesh, f: u32) -> Option<VertClass> {
    let mut side = None;
    for v in mesh.tri(f) {
        match mesh.vdata[v as usize].tag {
            VertClass::Contour => {}
            t => {
                if let Some(s) = side {
                    if s != t {
                        return Some(s); // mixed faces resolved by caller
                    }
                } else {
                    side = Some(t);
                }
            }
        }
    }
    side
}

/// Flip away faces whose corners are all contour vertices. Each such face
/// is resolved across an edge whose opposite corner is not a contour
/// vertex.
pub fn resolve_ccc_by_flips(mesh: &mut WorkMesh) -> Result<()> {
    for _round in 0..8 {
        let ccc: Vec<u32> = mesh
            .live_faces()
            .filter(|&f| {
                mesh.tri(f)
                    .iter()
                    .all(|&v| mesh.vdata[v as usize].tag == VertClass::Contour)
            })
            .collect();
        if ccc.is_empty() {
            return Ok(());
        }
        let mut progressed = false;
        for f in ccc {
            if !mesh.face_alive(f)
                || !mesh
                    .tri(f)
                    .iter()
                    .all(|&v| mesh.vdata[v as usize].tag == VertClass::Contour)
            {
                continue;
            }
            for i in 0..3u32 {
                let h = f * 3 + i;
                if mesh.is_contour(h) {
                    continue;
                }
                let t = mesh.he_twin(h);
                if t == NO_HE {
                    continue;
                }
                let apex = mesh.he_apex(t);
                if mesh.vdata[apex as usize].tag == VertClass::Contour {
                    continue;
                }
                if mesh.flip_edge(h).is_ok() {
                    progressed = true;
                    break;
                }
            }
        }
        if !progressed {
            return Err(Error::MeshOp("unresolvable all-contour face".into()));
        }
    }
    Err(Error::MeshOp("all-contour faces persisted after flips".into()))
}

/// Flag contour edges (contour-vertex edges separating a front-side face
/// from a back-side face) and assign dense region ids to the connected
/// face components bounded by them. Returns the region count.
pub fn flag_contours_and_regions(mesh: &mut WorkMesh) -> Result<u32> {
    let faces: Vec<u32> = mesh.live_faces().collect();
    let mut sides = vec![None; mesh.n_faces_raw()];
    for &f in &faces {
        sides[f as usize] = face_side(mesh, f);
        if sides[f as usize].is_none() {
            return Err(Error::MeshOp(format!("face {f} has only contour corners")));
        }
    }
    let flags: Vec<(u32, bool)> = faces
        .iter()
        .flat_map(|&f| (0..3u32).map(move |i| f * 3 + i))
        .filter(|&h| {
            let t = mesh.he_twin(h);
            t != NO_HE && h < t
        })
        .map(|h| {
            let a = mesh.he_from(h);
            let b = mesh.he_to(h);
            let both_c = mesh.vdata[a as usize].tag == VertClass::Contour
                && mesh.vdata[b as usize].tag == VertClass::Contour;
            let t = mesh.he_twin(h);
            let split = sides[(h / 3) as usize] != sides[(t / 3) as usize];
            (h, both_c && split)
        })
        .collect();
    for (h, on) in flags {
        mesh.set_contour(h, on);
    }
    for f in 0..mesh.n_faces_raw() as u32 {
        mesh.region[f as usize] = NO_REGION;
    }
    let mut next = 0u32;
    for &seed in &faces {
        if mesh.region[seed as usize] != NO_REGION {
            continue;
        }
        let id = next;
        next += 1;
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(seed);
        mesh.region[seed as usize] = id;
        while let Some(f) = queue.pop_front() {
            for i in 0..3u32 {
                let h = f * 3 + i;
                if mesh.is_contour(h) {
                    continue;
                }
                let t = mesh.he_twin(h);
                if t == NO_HE {
                    continue;
                }
                let g = t / 3;
                if mesh.region[g as usize] == NO_REGION {
                    mesh.region[g as usize] = id;
                    queue.push_back(g);
                }
            }
        }
    }
    Ok(next)
}

/// A located cusp: the contour point where radial curvature crosses zero.
#[derive(Debug, Clone, Copy)]
pub struct Cusp {
    pub face: u32,
    pub sp: SurfacePoint,
    pub position: V3,
}

const CUSP_MAX_DEPTH: usize = 60;

fn sample_signs(
    surface: &Surface,
    face: u32,
    tri: &[V2; 3],
    cam: V3,
    tol_scale: f64,
) -> (bool, bool, bool, bool) {
    let (mut gp, mut gm, mut kp, mut km) = (false, false, false, false);
    for i in 0..=3u32 {
        for j in 0..=(3 - i) {
            let k = 3 - i - j;
            let w = V2::new(
                (i as f64 * tri[0].x + j as f64 * tri[1].x + k as f64 * tri[2].x) / 3.0,
                (i as f64 * tri[0].y + j as f64 * tri[1].y + k as f64 * tri[2].y) / 3.0,
            );
            let sp = SurfacePoint::new(face, w.x, w.y);
            let s = surface.eval(sp);
            let g = surface.orientation_g(sp, cam);
            let tol = surface.contour_tolerance(s.position, cam) * tol_scale;
            if g > tol {
                gp = true;
            } else if g < -tol {
                gm = true;
            } else {
                gp = true;
                gm = true;
            }
            let kr = surface.radial_curvature(sp, cam);
            if kr > 0.0 {
                kp = true;
            } else if kr < 0.0 {
                km = true;
            }
        }
    }
    (gp, gm, kp, km)
}

fn locate_cusp_in(
    surface: &Surface,
    face: u32,
    tri: [V2; 3],
    cam: V3,
    depth: usize,
    budget: &mut usize,
) -> Option<V2> {
    let diam = (tri[0] - tri[1])
        .norm()
        .max((tri[1] - tri[2]).norm())
        .max((tri[2] - tri[0]).norm());
    if depth >= CUSP_MAX_DEPTH || diam < 1e-13 {
        return Some((tri[0] + tri[1] + tri[2]) / 3.0);
    }
    if *budget == 0 {
        return None;
    }
    *budget -= 1;
    let m01 = (tri[0] + tri[1]) * 0.5;
    let m12 = (tri[1] + tri[2]) * 0.5;
    let m20 = (tri[2] + tri[0]) * 0.5;
    let subs = [
        [tri[0], m01, m20],
        [m01, tri[1], m12],
        [m20, m12, tri[2]],
        [m01, m12, m20],
    ];
    for sub in subs {
        let (gp, gm, kp, km) = sample_signs(surface, face, &sub, cam, 1.0);
        if gp && gm && kp && km {
            if let Some(hit) = locate_cusp_in(surface, face, sub, cam, depth + 1, budget) {
                return Some(hit);
            }
        }
    }
    None
}

/// Find cusps and insert them into the mesh: hits on a contour edge
/// reroute the polyline through the cusp, interior hits split the
/// containing triangle, near-vertex hits shift the existing vertex (any
/// resulting all-contour triangle is removed by an edge flip). Expects
/// contour flags to be set. Returns the cusp vertex ids.
pub fn detect_cusps(
    mesh: &mut WorkMesh,
    surface: &Surface,
    frame: &CameraFrame,
    cfg: &InsertionConfig,
) -> Result<Vec<u32>> {
    let cam = frame.center;
    let world_tol = cfg.cusp_merge_world * surface.scene_scale();
    let mut cusps: Vec<Cusp> = Vec::new();
    let faces: Vec<u32> = mesh.live_faces().collect();
    for &f in &faces {
        let verts = mesh.tri(f);
        let Some((face, uv)) = common_face(surface, mesh, &verts) else {
            continue;
        };
        let tri = [uv[0], uv[1], uv[2]];
        let (gp, gm, kp, km) = sample_signs(surface, face, &tri, cam, 1.0);
        if !(gp && gm && kp && km) {
            continue;
        }
        let mut budget = 4096usize;
        let Some(hit) = locate_cusp_in(surface, face, tri, cam, 0, &mut budget) else {
            continue;
        };
        let sp = SurfacePoint::new(face, hit.x, hit.y);
        let position = surface.eval(sp).position;
        if cusps
            .iter()
            .all(|c| (c.position - position).norm() > world_tol.max(1e-12))
        {
            cusps.push(Cusp { face: f, sp, position });
        }
    }
    let mut out = Vec::new();
    for cusp in cusps {
        out.push(insert_cusp(mesh, surface, frame, cfg, &cusp)?);
    }
    Ok(out)
}

fn insert_cusp(
    mesh: &mut WorkMesh,
    surface: &Surface,
    frame: &CameraFrame,
    cfg: &InsertionConfig,
    cusp: &Cusp,
) -> Result<u32> {
    let world_tol = cfg.cusp_merge_world * surface.scene_scale();
    let (cusp_px, _) = frame.project(cusp.position)?;
    // Containing (or nearest) live triangle: the recorded face may have
    // been split by an earlier cusp insertion.
    let f = if mesh.face_alive(cusp.face) {
        cusp.face
    } else {
        nearest_face(mesh, cusp.position)
    };
    let verts = mesh.tri(f);
    // Near-vertex merge test in any of the three metrics.
    for &v in &verts {
        let pv = mesh.positions[v as usize];
        let near_world = (pv - cusp.position).norm() <= world_tol;
        let near_px = frame
            .project(pv)
            .map(|(q, _)| (q - cusp_px).norm() <= cfg.cusp_merge_px)
            .unwrap_or(false);
        let near_uv = {
            let sp = mesh.vdata[v as usize].sps[0];
            sp.face == cusp.sp.face
                && (V2::new(sp.u, sp.v) - V2::new(cusp.sp.u, cusp.sp.v)).norm()
                    <= cfg.cusp_merge_uv
        };
        if near_world || near_px || near_uv {
            mesh.positions[v as usize] = cusp.position;
            let vd = &mut mesh.vdata[v as usize];
            vd.sps = vec![cusp.sp];
            vd.tag = VertClass::Contour;
            vd.cusp = true;
            resolve_ccc_by_flips(mesh)?;
            return Ok(v);
        }
    }
    // The cusp lies on the contour between two of its polyline vertices;
    // when the containing triangle carries a contour edge, reroute the
    // polyline through the cusp by splitting that edge. Otherwise insert
    // in the interior (or on the nearest edge when nearly degenerate).
    let (face, uv) = common_face(surface, mesh, &verts)
        .ok_or_else(|| Error::MeshOp(format!("face {f} has no common base face")))?;
    debug_assert_eq!(face, cusp.sp.face);
    let q = V2::new(cusp.sp.u, cusp.sp.v);
    let contour_edge = (0..3u32)
        .filter(|&i| mesh.is_contour(f * 3 + i))
        .min_by(|&i, &j| {
            let d = |i: u32| {
                let (a, b) = (uv[i as usize], uv[((i + 1) % 3) as usize]);
                crate::geom::point_segment_distance(q, a, b)
            };
            d(i).partial_cmp(&d(j)).unwrap()
        });
    let vid = if let Some(i) = contour_edge {
        let (a, b) = (verts[i as usize], verts[((i + 1) % 3) as usize]);
        split_edge_at(mesh, surface, a, b, cusp.sp)?
    } else {
        let bary = barycentric(uv[0], uv[1], uv[2], q);
        if bary.iter().any(|&w| w < 1e-6) {
            let i = (0..3).min_by(|&a, &b| bary[a].partial_cmp(&bary[b]).unwrap()).unwrap();
            let (a, b) = (verts[(i + 1) % 3], verts[(i + 2) % 3]);
            split_edge_at(mesh, surface, a, b, cusp.sp)?
        } else {
            let mut data = VertexData::new(VertClass::Contour, cusp.sp);
            data.cusp = true;
            mesh.split_face(f, cusp.position, data)?
        }
    };
    mesh.vdata[vid as usize].cusp = true;
    resolve_ccc_by_flips(mesh)?;
    Ok(vid)
}

fn nearest_face(mesh: &WorkMesh, p: V3) -> u32 {
    mesh.live_faces()
        .min_by(|&a, &b| {
            let ca = centroid(mesh, a);
            let cb = centroid(mesh, b);
            (ca - p).norm().partial_cmp(&(cb - p).norm()).unwrap()
        })
        .expect("mesh has live faces")
}

fn centroid(mesh: &WorkMesh, f: u32) -> V3 {
    let t = mesh.tri(f);
    (mesh.positions[t[0] as usize] + mesh.positions[t[1] as usize]
        + mesh.positions[t[2] as usize])
        / 3.0
}

fn barycentric(a: V2, b: V2, c: V2, p: V2) -> [f64; 3] {
    let det = (b - a).x * (c - a).y - (b - a).y * (c - a).x;
    if det.abs() < 1e-30 {
        return [1.0 / 3.0; 3];
    }
    let wb = ((p - a).x * (c - a).y - (p - a).y * (c - a).x) / det;
    let wc = ((b - a).x * (p - a).y - (b - a).y * (p - a).x) / det;
    [1.0 - wb - wc, wb, wc]
}

/// Walk contour halfedges whose face lies on the front side, yielding each
/// loop once with the front region on the loop's left.
pub fn extract_loops(mesh: &WorkMesh, proj: &Projected) -> Result<Vec<ContourLoop>> {
    let mut front_hes: Vec<u32> = Vec::new();
    for f in mesh.live_faces() {
        if face_side(mesh, f) != Some(VertClass::Front) {
            continue;
        }
        for i in 0..3u32 {
            let h = f * 3 + i;
            if mesh.is_contour(h) {
                front_hes.push(h);
            }
        }
    }
    let he_set: BTreeSet<u32> = front_hes.iter().copied().collect();
    let mut seen: BTreeSet<u32> = BTreeSet::new();
    let mut loops = Vec::new();
    for &h0 in &front_hes {
        if seen.contains(&h0) {
            continue;
        }
        let mut verts = vec![mesh.he_from(h0)];
        let mut arclength = 0.0;
        let mut h = h0;
        let mut closed = true;
        loop {
            seen.insert(h);
            let a = proj.xy[mesh.he_from(h) as usize];
            let b = proj.xy[mesh.he_to(h) as usize];
            arclength += (b - a).norm();
            verts.push(mesh.he_to(h));
            // Next front-side contour halfedge out of the head vertex.
            let next = mesh
                .vertex_ring(mesh.he_to(h))
                .into_iter()
                .filter(|cand| he_set.contains(cand) && !seen.contains(cand))
                .min();
            match next {
                Some(nh) => {
                    h = nh;
                    if mesh.he_to(h) == verts[0] && he_set.contains(&h) {
                        seen.insert(h);
                        let a = proj.xy[mesh.he_from(h) as usize];
                        let b = proj.xy[mesh.he_to(h) as usize];
                        arclength += (b - a).norm();
                        break;
                    }
                }
                None => {
                    closed = verts.first() == verts.last();
                    if closed {
                        verts.pop();
                    }
                    break;
                }
            }
        }
        loops.push(ContourLoop {
            verts,
            closed,
            arclength_px: arclength,
        });
    }
    Ok(loops)
}

/// The two region ids adjacent to a contour vertex, lowest first.
fn adjacent_regions(mesh: &WorkMesh, v: u32) -> Vec<u32> {
    let mut regions: Vec<u32> = mesh
        .vertex_ring(v)
        .iter()
        .map(|&h| mesh.region[(h / 3) as usize])
        .collect();
    regions.sort_unstable();
    regions.dedup();
    regions
}

/// Region whose projected wedge at `w` contains direction `d2`.
fn region_containing_direction(mesh: &WorkMesh, proj: &Projected, w: u32, d2: V2) -> Option<u32> {
    for h in mesh.vertex_ring(w) {
        let f = h / 3;
        if !mesh.face_alive(f) {
            continue;
        }
        let pw = proj.xy[w as usize];
        let e1 = proj.xy[mesh.he_to(h) as usize] - pw;
        let e2 = proj.xy[mesh.he_apex(h) as usize] - pw;
        let s = crate::geom::cross2(e1, e2);
        if s == 0.0 {
            continue;
        }
        let c1 = crate::geom::cross2(e1, d2) * s.signum();
        let c2 = crate::geom::cross2(d2, e2) * s.signum();
        if c1 >= 0.0 && c2 >= 0.0 {
            return Some(mesh.region[f as usize]);
        }
    }
    None
}

/// Region whose 3D one-ring wedge at `w` the direction `L` points into.
fn region_pointed_into_3d(mesh: &WorkMesh, w: u32, l: V3) -> Option<u32> {
    for h in mesh.vertex_ring(w) {
        let f = h / 3;
        if !mesh.face_alive(f) {
            continue;
        }
        let pw = mesh.positions[w as usize];
        let e1 = mesh.positions[mesh.he_to(h) as usize] - pw;
        let e2 = mesh.positions[mesh.he_apex(h) as usize] - pw;
        let n = e1.cross(&e2);
        let nn = n.norm_squared();
        if nn < 1e-30 {
            continue;
        }
        let d = l - n * (l.dot(&n) / nn);
        // Solve d = alpha e1 + beta e2 in the face plane.
        let (e11, e12, e22) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
        let det = e11 * e22 - e12 * e12;
        if det.abs() < 1e-30 {
            continue;
        }
        let (d1, d2) = (d.dot(&e1), d.dot(&e2));
        let alpha = (d1 * e22 - d2 * e12) / det;
        let beta = (d2 * e11 - d1 * e12) / det;
        if alpha >= -1e-12 && beta >= -1e-12 && alpha + beta > 1e-12 {
            return Some(mesh.region[f as usize]);
        }
    }
    None
}

fn mark_singular(mesh: &mut WorkMesh, v: u32, region: u32) {
    let tags = &mut mesh.vdata[v as usize].singular_for;
    if !tags.contains(&region) {
        tags.push(region);
        tags.sort_unstable();
    }
}

/// Tag each cusp singular for the region its loop Laplacian does not point
/// into; near-degenerate Laplacians fall back to the image-space angle
/// rule.
pub fn label_singularities(
    mesh: &mut WorkMesh,
    loops: &[ContourLoop],
    proj: &Projected,
) -> Result<()> {
    for lp in loops {
        let n = lp.verts.len();
        if n < 3 {
            continue;
        }
        for i in 0..n {
            let w = lp.verts[i];
            if !mesh.vdata[w as usize].cusp {
                continue;
            }
            if !lp.closed && (i == 0 || i == n - 1) {
                continue;
            }
            let v = lp.verts[(i + n - 1) % n];
            let x = lp.verts[(i + 1) % n];
            let regions = adjacent_regions(mesh, w);
            if regions.len() != 2 {
                continue;
            }
            let l = mesh.positions[v as usize] + mesh.positions[x as usize]
                - mesh.positions[w as usize] * 2.0;
            let scale = (mesh.positions[v as usize] - mesh.positions[x as usize]).norm();
            let pointed = if l.norm() > 1e-9 * scale.max(1e-30) {
                region_pointed_into_3d(mesh, w, l)
            } else {
                None
            };
            let pointed = pointed.or_else(|| {
                // Angle fallback: the bisector of the projected wedge
                // points into the pinched (non-overlapping) side.
                let pw = proj.xy[w as usize];
                let dv = (proj.xy[v as usize] - pw).normalize();
                let dx = (proj.xy[x as usize] - pw).normalize();
                region_containing_direction(mesh, proj, w, dv + dx)
            });
            let singular = match pointed {
                Some(r) if r == regions[0] => regions[1],
                Some(r) if r == regions[1] => regions[0],
                _ => regions[0],
            };
            mark_singular(mesh, w, singular);
        }
    }
    Ok(())
}

/// True when the image angle at `w` between `v` and `x` is strictly below
/// sixty degrees.
pub fn sharp_image_angle(v: V2, w: V2, x: V2) -> bool {
    angle_at(v, w, x) < std::f64::consts::FRAC_PI_3
}

/// Mark additional singular vertices: contour vertices whose image-space
/// angle, measured between the nearest loop neighbors at least 1e-8 away
/// in 3D, is strictly below sixty degrees.
pub fn detect_extra_singularities(
    mesh: &mut WorkMesh,
    loops: &[ContourLoop],
    proj: &Projected,
) -> Result<()> {
    for lp in loops {
        let n = lp.verts.len();
        if n < 3 {
            continue;
        }
        for i in 0..n {
            let w = lp.verts[i];
            if mesh.vdata[w as usize].cusp {
                continue; // already singular
            }
            if !lp.closed && (i == 0 || i == n - 1) {
                continue;
            }
            let pw = mesh.positions[w as usize];
            let far = |dir: i64| -> Option<u32> {
                let mut step = 1i64;
                while (step as usize) < n {
                    let j = ((i as i64 + dir * step).rem_euclid(n as i64)) as usize;
                    if !lp.closed && (j as i64 - i as i64).signum() != dir.signum() {
                        return None;
                    }
                    let u = lp.verts[j];
                    if (mesh.positions[u as usize] - pw).norm() >= 1e-8 {
                        return Some(u);
                    }
                    step += 1;
                }
                None
            };
            let (Some(v), Some(x)) = (far(-1), far(1)) else {
                continue;
            };
            if !sharp_image_angle(proj.xy[v as usize], proj.xy[w as usize], proj.xy[x as usize]) {
                continue;
            }
            let regions = adjacent_regions(mesh, w);
            if regions.len() != 2 {
                continue;
            }
            let pw2 = proj.xy[w as usize];
            let b = (proj.xy[v as usize] - pw2).normalize() + (proj.xy[x as usize] - pw2).normalize();
            let singular = match region_containing_direction(mesh, proj, w, b) {
                Some(r) if r == regions[0] => regions[1],
                Some(r) if r == regions[1] => regions[0],
                _ => regions[0],
            };
            mark_singular(mesh, w, singular);
        }
    }
    Ok(())
}

/// Outcome of the acceptance gate around repair and escalation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateOutcome {
    Accepted,
    Repaired,
    Escalate,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn root_finder_linear_and_quadratic() {
        let roots = find_roots(|t| 1.0 - 2.0 * t, 32);
        assert_eq!(roots.len(), 1);
        assert!((roots[0] - 0.5).abs() < 1e-9);
        let roots = find_roots(|t| (t - 0.3) * (t - 0.7), 32);
        assert_eq!(roots.len(), 2);
        assert!((roots[0] - 0.3).abs() < 1e-9 && (roots[1] - 0.7).abs() < 1e-9);
        assert!(find_roots(|t| 1.0 + t, 32).is_empty());
    }

    fn sphere_setup() -> (Surface, CameraFrame) {
        let surface = Surface::new(&fixtures::sphere(1)).unwrap();
        let cams = fixtures::turntable(surface.eval_mesh(), 8, 640, 480);
        let frame = cams[0].frame().unwrap();
        (surface, frame)
    }

    #[test]
    fn sphere_insertion_yields_single_loop_two_regions() {
        let (surface, frame) = sphere_setup();
        let cfg = InsertionConfig::default();
        let mut mesh = build_initial_mesh(&surface, cfg.initial_subdivision_levels).unwrap();
        insert_contours(&mut mesh, &surface, &frame, &cfg).unwrap();
        mesh.integrity_check().unwrap();
        let cam = frame.center;
        // Every contour vertex sits on the surface contour within tolerance.
        for v in 0..mesh.n_vertices() {
            if mesh.vdata[v].tag == VertClass::Contour {
                let sp = mesh.vdata[v].sps[0];
                let g = surface.orientation_g(sp, cam).abs();
                let tol = surface.contour_tolerance(mesh.positions[v], cam);
                assert!(g <= tol * 10.0, "contour vertex {v} has |g|={g:e}");
            }
        }
        let regions = flag_contours_and_regions(&mut mesh).unwrap();
        assert_eq!(regions, 2, "convex silhouette splits the sphere in two");
        let proj = mesh.project_all(&frame).unwrap();
        let loops = extract_loops(&mesh, &proj).unwrap();
        assert_eq!(loops.len(), 1, "one closed silhouette loop");
        assert!(loops[0].closed);
        // Regions are orientation-uniform: front faces have negative
        // orientation sign, back faces positive.
        for f in mesh.live_faces() {
            let side = face_side(&mesh, f).unwrap();
            let s3 = mesh.face_orientation_3d(f, cam);
            match side {
                VertClass::Front => assert_eq!(s3, -1, "front face {f}"),
                VertClass::Back => assert_eq!(s3, 1, "back face {f}"),
                VertClass::Contour => unreachable!(),
            }
        }
        // No cusps on a convex surface.
        let mut mesh2 = mesh.clone();
        let cusps = detect_cusps(&mut mesh2, &surface, &frame, &cfg).unwrap();
        assert!(cusps.is_empty(), "sphere produced cusps: {cusps:?}");
    }

    fn torus_sp(nu: usize, nv: usize, theta: f64, phi: f64) -> SurfacePoint {
        let theta = theta.rem_euclid(1.0);
        let phi = phi.rem_euclid(1.0);
        let fi = ((theta * nu as f64).floor() as usize).min(nu - 1);
        let fj = ((phi * nv as f64).floor() as usize).min(nv - 1);
        SurfacePoint::new(
            (fi * nv + fj) as u32,
            theta * nu as f64 - fi as f64,
            phi * nv as f64 - fj as f64,
        )
    }

    /// Count radial-curvature sign alternations along every zero level
    /// curve of the orientation function on the parameter torus, by
    /// marching squares over a dense periodic grid.
    fn torus_cusp_oracle(surface: &Surface, cam: V3, nu: usize, nv: usize) -> usize {
        let n = 384usize; // theta samples
        let m = 384usize; // phi samples
        let g: Vec<f64> = (0..n * m)
            .map(|k| {
                let (i, j) = (k / m, k % m);
                surface.orientation_g(
                    torus_sp(nu, nv, i as f64 / n as f64, j as f64 / m as f64),
                    cam,
                )
            })
            .collect();
        let pos = |i: usize, j: usize| g[(i % n) * m + (j % m)] > 0.0;
        // Nodes: crossings on theta edges (id 2*(i*m+j)) from (i,j) to
        // (i+1,j), and on phi edges (id 2*(i*m+j)+1) from (i,j) to (i,j+1).
        let et = |i: usize, j: usize| 2 * ((i % n) * m + (j % m));
        let ep = |i: usize, j: usize| 2 * ((i % n) * m + (j % m)) + 1;
        let mut adj: std::collections::HashMap<usize, Vec<usize>> = std::collections::HashMap::new();
        let link = |a: usize, b: usize, adj: &mut std::collections::HashMap<usize, Vec<usize>>| {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        };
        for i in 0..n {
            for j in 0..m {
                let (bl, br, tr, tl) = (pos(i, j), pos(i + 1, j), pos(i + 1, j + 1), pos(i, j + 1));
                let bottom = (bl != br).then(|| et(i, j));
                let top = (tl != tr).then(|| et(i, j + 1));
                let left = (bl != tl).then(|| ep(i, j));
                let right = (br != tr).then(|| ep(i + 1, j));
                let crossed: Vec<usize> = [bottom, top, left, right].into_iter().flatten().collect();
                match crossed.len() {
                    2 => link(crossed[0], crossed[1], &mut adj),
                    4 => {
                        let center = surface.orientation_g(
                            torus_sp(
                                nu,
                                nv,
                                (i as f64 + 0.5) / n as f64,
                                (j as f64 + 0.5) / m as f64,
                            ),
                            cam,
                        ) > 0.0;
                        if center == bl {
                            link(bottom.unwrap(), right.unwrap(), &mut adj);
                            link(top.unwrap(), left.unwrap(), &mut adj);
                        } else {
                            link(bottom.unwrap(), left.unwrap(), &mut adj);
                            link(top.unwrap(), right.unwrap(), &mut adj);
                        }
                    }
                    _ => {}
                }
            }
        }
        // Crossing parameter point of a node, by linear interpolation.
        let node_point = |id: usize| -> (f64, f64) {
            let (i, j) = ((id / 2) / m, (id / 2) % m);
            if id % 2 == 0 {
                let (g0, g1) = (g[i * m + j], g[((i + 1) % n) * m + j]);
                let t = g0 / (g0 - g1);
                ((i as f64 + t) / n as f64, j as f64 / m as f64)
            } else {
                let (g0, g1) = (g[i * m + j], g[i * m + (j + 1) % m]);
                let t = g0 / (g0 - g1);
                (i as f64 / n as f64, (j as f64 + t) / m as f64)
            }
        };
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        let mut flips = 0usize;
        let mut ids: Vec<usize> = adj.keys().copied().collect();
        ids.sort_unstable();
        for &start in &ids {
            if seen.contains(&start) {
                continue;
            }
            assert_eq!(adj[&start].len(), 2, "level curve node without two arcs");
            let mut cycle = vec![start];
            seen.insert(start);
            let mut prev = start;
            let mut cur = adj[&start][0];
            while cur != start {
                seen.insert(cur);
                cycle.push(cur);
                let nbrs = &adj[&cur];
                let next = if nbrs[0] == prev { nbrs[1] } else { nbrs[0] };
                prev = cur;
                cur = next;
            }
            let signs: Vec<bool> = cycle
                .iter()
                .map(|&id| {
                    let (theta, phi) = node_point(id);
                    surface.radial_curvature(torus_sp(nu, nv, theta, phi), cam) > 0.0
                })
                .collect();
            for k in 0..signs.len() {
                if signs[k] != signs[(k + 1) % signs.len()] {
                    flips += 1;
                }
            }
        }
        flips
    }

    #[test]
    fn torus_cusp_count_matches_dense_oracle() {
        let (nu, nv) = (16, 10);
        let cage = fixtures::torus(nu, nv, 1.0, 0.45);
        let surface = Surface::new(&cage).unwrap();
        let eye = crate::geom::v3(0.0, -4.2, 2.6);
        let cam = crate::camera::Camera {
            center: [eye.x, eye.y, eye.z],
            look_at: [0.0, 0.0, 0.0],
            up: [0.0, 0.0, 1.0],
            fov_deg: 45.0,
            image_width_px: 800,
            image_height_px: 600,
        };
        let frame = cam.frame().unwrap();
        let expected = torus_cusp_oracle(&surface, eye, nu, nv);
        assert_eq!(expected, 4, "chosen view should give four cusps");
        let cfg = InsertionConfig {
            initial_subdivision_levels: 1,
            ..InsertionConfig::default()
        };
        let mut mesh = build_initial_mesh(&surface, cfg.initial_subdivision_levels).unwrap();
        insert_contours(&mut mesh, &surface, &frame, &cfg).unwrap();
        flag_contours_and_regions(&mut mesh).unwrap();
        let cusps = detect_cusps(&mut mesh, &surface, &frame, &cfg).unwrap();
        assert_eq!(cusps.len(), expected, "cusp vertices vs dense scan");
        mesh.integrity_check().unwrap();
        // Relabel and tag: each cusp is singular for exactly one region.
        resolve_ccc_by_flips(&mut mesh).unwrap();
        flag_contours_and_regions(&mut mesh).unwrap();
        let proj = mesh.project_all(&frame).unwrap();
        let loops = extract_loops(&mesh, &proj).unwrap();
        label_singularities(&mut mesh, &loops, &proj).unwrap();
        for &c in &cusps {
            assert_eq!(
                mesh.vdata[c as usize].singular_for.len(),
                1,
                "cusp {c} must be singular for exactly one region"
            );
        }
    }

    #[test]
    fn sharp_angle_threshold_is_strict() {
        use crate::geom::v2;
        let w = v2(0.0, 0.0);
        let v = v2(1.0, 0.0);
        let at = |deg: f64| {
            let r = deg.to_radians();
            v2(r.cos(), r.sin())
        };
        // Just above sixty degrees: not singular; just below: singular.
        assert!(!sharp_image_angle(v, w, at(60.001)));
        assert!(sharp_image_angle(v, w, at(59.999)));
        assert!(sharp_image_angle(v, w, at(30.0)));
        // Straight polyline: not singular.
        assert!(!sharp_image_angle(v, w, v2(-1.0, 0.0)));
    }
}

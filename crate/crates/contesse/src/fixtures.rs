//! Reference cages, height fields, and turntable cameras shared by the
//! test suites, the sweep runner, and the benchmarks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basemesh::{BaseMesh, Topo};
use crate::camera::Camera;
use crate::geom::{v3, V3};
use crate::subdiv::catmull_clark;
use crate::surface::{SurfacePoint, VertClass};
use crate::workmesh::{VertexData, WorkMesh};

/// Axis-aligned unit cube centered at the origin, quad faces outward.
pub fn cube() -> BaseMesh {
    let h = 0.5;
    let positions = vec![
        v3(-h, -h, -h),
        v3(h, -h, -h),
        v3(h, h, -h),
        v3(-h, h, -h),
        v3(-h, -h, h),
        v3(h, -h, h),
        v3(h, h, h),
        v3(-h, h, h),
    ];
    let faces: Vec<Vec<u32>> = vec![
        vec![0, 3, 2, 1], // -z
        vec![4, 5, 6, 7], // +z
        vec![0, 1, 5, 4], // -y
        vec![2, 3, 7, 6], // +y
        vec![1, 2, 6, 5], // +x
        vec![0, 4, 7, 3], // -x
    ];
    BaseMesh::new(positions, &faces)
}

/// Cube refined `levels` times with vertices projected to the unit sphere;
/// its limit surface is round to well under a percent.
pub fn sphere(levels: usize) -> BaseMesh {
    let mut mesh = cube();
    for _ in 0..levels {
        let topo = Topo::build(&mesh).expect("refined cube manifold");
        mesh = catmull_clark(&mesh, &topo).mesh;
    }
    for p in &mut mesh.positions {
        *p = *p / p.norm();
    }
    mesh
}

/// Quad torus cage in the x-y plane: major radius `big`, tube radius
/// `small`, `nu` segments around the major circle and `nv` around the tube.
pub fn torus(nu: usize, nv: usize, big: f64, small: f64) -> BaseMesh {
    assert!(nu >= 3 && nv >= 3);
    let mut positions = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let th = i as f64 / nu as f64 * std::f64::consts::TAU;
        for j in 0..nv {
            let ph = j as f64 / nv as f64 * std::f64::consts::TAU;
            let w = big + small * ph.cos();
            positions.push(v3(w * th.cos(), w * th.sin(), small * ph.sin()));
        }
    }
    let at = |i: usize, j: usize| (i % nu * nv + j % nv) as u32;
    let mut faces = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            faces.push(vec![at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)]);
        }
    }
    BaseMesh::new(positions, &faces)
}

/// Closed voxel-shell cage: quads on the boundary of the filled cell set,
/// wound outward. Cell (x,y,z) spans [x,x+1]×[y,y+1]×[z,z+1] before the
/// final recentering and scaling.
fn voxel_shell(cells: &[(i32, i32, i32)], scale: f64) -> BaseMesh {
    let filled: std::collections::BTreeSet<(i32, i32, i32)> = cells.iter().copied().collect();
    let mut vid: BTreeMap<(i32, i32, i32), u32> = BTreeMap::new();
    let mut corners: Vec<(i32, i32, i32)> = Vec::new();
    let mut faces: Vec<Vec<u32>> = Vec::new();
    // Per direction: neighbor offset and the four corner offsets in
    // outward-CCW order.
    #[rustfmt::skip]
    let dirs: [((i32, i32, i32), [(i32, i32, i32); 4]); 6] = [
        (( 1, 0, 0), [(1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1)]),
        ((-1, 0, 0), [(0, 0, 0), (0, 0, 1), (0, 1, 1), (0, 1, 0)]),
        (( 0, 1, 0), [(0, 1, 0), (0, 1, 1), (1, 1, 1), (1, 1, 0)]),
        (( 0,-1, 0), [(0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1)]),
        (( 0, 0, 1), [(0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]),
        (( 0, 0,-1), [(0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 0)]),
    ];
    for &(cx, cy, cz) in &filled {
        for (d, quad) in &dirs {
            if filled.contains(&(cx + d.0, cy + d.1, cz + d.2)) {
                continue;
            }
            let mut face = Vec::with_capacity(4);
            for o in quad {
                let key = (cx + o.0, cy + o.1, cz + o.2);
                let id = *vid.entry(key).or_insert_with(|| {
                    corners.push(key);
                    corners.len() as u32 - 1
                });
                face.push(id);
            }
            faces.push(face);
        }
    }
    let lo = corners.iter().fold(v3(f64::MAX, f64::MAX, f64::MAX), |a, c| {
        v3(a.x.min(c.0 as f64), a.y.min(c.1 as f64), a.z.min(c.2 as f64))
    });
    let hi = corners.iter().fold(v3(f64::MIN, f64::MIN, f64::MIN), |a, c| {
        v3(a.x.max(c.0 as f64), a.y.max(c.1 as f64), a.z.max(c.2 as f64))
    });
    let mid = (lo + hi) * 0.5;
    let positions = corners
        .iter()
        .map(|c| (v3(c.0 as f64, c.1 as f64, c.2 as f64) - mid) * scale)
        .collect();
    BaseMesh::new(positions, &faces)
}

/// Genus-2 cage: a 5x3x1 slab of cells with two cells drilled through.
pub fn genus2() -> BaseMesh {
    let mut cells = Vec::new();
    for x in 0..5 {
        for y in 0..3 {
            if (x, y) == (1, 1) || (x, y) == (3, 1) {
                continue;
            }
            cells.push((x, y, 0));
        }
    }
    voxel_shell(&cells, 0.5)
}

/// Open quad-grid cage over [-1,1]^2 with two smooth bumps; used for the
/// turntable sweeps of an open surface.
pub fn height_field_cage(n: usize) -> BaseMesh {
    assert!(n >= 2);
    let mut positions = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let x = i as f64 / n as f64 * 2.0 - 1.0;
            let y = j as f64 / n as f64 * 2.0 - 1.0;
            let z = 0.45 * (-((x - 0.35).powi(2) + (y - 0.2).powi(2)) / 0.16).exp()
                - 0.35 * (-((x + 0.4).powi(2) + (y + 0.35).powi(2)) / 0.12).exp();
            positions.push(v3(x, y, z));
        }
    }
    let at = |i: usize, j: usize| (j * (n + 1) + i) as u32;
    let mut faces = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            faces.push(vec![at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)]);
        }
    }
    BaseMesh::new(positions, &faces)
}

/// Random triangulated height field with bounded slope, guaranteed
/// front-facing from [`height_field_camera`]. Returned as a pipeline mesh
/// with placeholder surface backpointers.
pub fn height_field_trimesh(n: usize, seed: u64) -> WorkMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_bumps = rng.gen_range(2..=5);
    let bumps: Vec<(f64, f64, f64, f64)> = (0..n_bumps)
        .map(|_| {
            (
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-0.25..0.25),
                rng.gen_range(0.25..0.6),
            )
        })
        .collect();
    let mut pos = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            let x = i as f64 / n as f64 * 2.0 - 1.0;
            let y = j as f64 / n as f64 * 2.0 - 1.0;
            let mut z = 3.0;
            for &(bx, by, amp, sigma) in &bumps {
                z += amp * (-((x - bx).powi(2) + (y - by).powi(2)) / (sigma * sigma)).exp();
            }
            pos.push(v3(x, y, z));
        }
    }
    let vd = pos
        .iter()
        .map(|_| VertexData::new(VertClass::Front, SurfacePoint::new(0, 0.0, 0.0)))
        .collect();
    let at = |i: usize, j: usize| (j * (n + 1) + i) as u32;
    let mut tris = Vec::new();
    for j in 0..n {
        for i in 0..n {
            tris.push([at(i, j), at(i + 1, j), at(i + 1, j + 1)]);
            tris.push([at(i, j), at(i + 1, j + 1), at(i, j + 1)]);
        }
    }
    WorkMesh::new(pos, vd, tris).expect("height field trimesh is valid")
}

/// Camera under which [`height_field_trimesh`] outputs face one way only.
pub fn height_field_camera() -> Camera {
    Camera {
        center: [0.0, 0.0, 0.0],
        look_at: [0.0, 0.0, 1.0],
        up: [0.0, 1.0, 0.0],
        fov_deg: 50.0,
        image_width_px: 640,
        image_height_px: 480,
    }
}

/// Two sphere cages stacked along +z as one (two-component) base mesh.
pub fn stacked_spheres(levels: usize, gap: f64) -> BaseMesh {
    let a = sphere(levels);
    let b = sphere(levels);
    let offset = 1.0 + gap * 0.5;
    let mut positions: Vec<V3> = a.positions.iter().map(|p| p + v3(0.0, 0.0, -offset)).collect();
    let base = positions.len() as u32;
    positions.extend(b.positions.iter().map(|p| p + v3(0.0, 0.0, offset)));
    let mut faces: Vec<Vec<u32>> = (0..a.n_faces() as u32).map(|f| a.face(f).to_vec()).collect();
    faces.extend(
        (0..b.n_faces() as u32).map(|f| b.face(f).iter().map(|&v| v + base).collect::<Vec<u32>>()),
    );
    BaseMesh::new(positions, &faces)
}

/// Turntable ring of `views` cameras framing the mesh's bounding sphere at
/// a 15-degree elevation. The ring axis is tilted off +y by a fixed generic
/// amount so views avoid the cage's symmetry planes.
pub fn turntable(mesh: &BaseMesh, views: usize, width: u32, height: u32) -> Vec<Camera> {
    let bbox = mesh.bbox();
    let c = (bbox.min + bbox.max) * 0.5;
    let radius = mesh
        .positions
        .iter()
        .map(|p| (p - c).norm())
        .fold(0.0, f64::max)
        .max(1e-9);
    let fov_deg = 40.0f64;
    let aspect = width as f64 / height as f64;
    let half_v = (fov_deg.to_radians() * 0.5).tan();
    let half_min = half_v * aspect.min(1.0);
    // Distance so the bounding sphere fills ~80% of the tighter half-angle.
    let dist = radius / (half_min * 0.8).min(1.0);
    let axis = v3(0.083, 1.0, 0.137).normalize();
    let u1 = axis.cross(&v3(0.0, 0.0, 1.0)).normalize();
    let u2 = axis.cross(&u1);
    let elev = 15.0f64.to_radians();
    (0..views)
        .map(|k| {
            let th = k as f64 / views as f64 * std::f64::consts::TAU + 0.037;
            let dir = (u1 * th.cos() + u2 * th.sin()) * elev.cos() + axis * elev.sin();
            let eye = c + dir * dist;
            Camera {
                center: [eye.x, eye.y, eye.z],
                look_at: [c.x, c.y, c.z],
                up: [axis.x, axis.y, axis.z],
                fov_deg,
                image_width_px: width,
                image_height_px: height,
            }
        })
        .collect()
}

fn front_vdata(n: usize) -> Vec<VertexData> {
    (0..n)
        .map(|_| VertexData::new(VertClass::Front, SurfacePoint::new(0, 0.0, 0.0)))
        .collect()
}

/// Flat annulus in the z=0 plane: `nr` radial cells by `na` angular cells,
/// two boundary loops, every face in region 0. Triangles wind so the +z
/// side is the front.
pub fn annulus(nr: usize, na: usize) -> WorkMesh {
    let mut positions = Vec::new();
    for i in 0..=nr {
        let r = 1.0 + i as f64 / nr as f64;
        for j in 0..na {
            let t = j as f64 / na as f64 * std::f64::consts::TAU;
            positions.push(v3(r * t.cos(), r * t.sin(), 0.0));
        }
    }
    let vid = |i: usize, j: usize| (i * na + j % na) as u32;
    let mut tris = Vec::new();
    for i in 0..nr {
        for j in 0..na {
            let (a, b, c, d) = (vid(i, j), vid(i, j + 1), vid(i + 1, j + 1), vid(i + 1, j));
            tris.push([a, c, b]);
            tris.push([a, d, c]);
        }
    }
    let n = positions.len();
    let mut mesh = WorkMesh::new(positions, front_vdata(n), tris).unwrap();
    for f in 0..mesh.n_faces_raw() as u32 {
        mesh.region[f as usize] = 0;
    }
    mesh
}

/// Raw geometry of a triangulated UV sphere wound outward; poles at
/// `center ± radius·z`.
pub fn ball_parts(center: V3, radius: f64, nu: usize, nv: usize) -> (Vec<V3>, Vec<[u32; 3]>) {
    assert!(nu >= 3 && nv >= 2);
    let mut positions = vec![center + v3(0.0, 0.0, radius)];
    for i in 1..nv {
        let th = std::f64::consts::PI * i as f64 / nv as f64;
        for j in 0..nu {
            let ph = std::f64::consts::TAU * j as f64 / nu as f64;
            positions.push(
                center
                    + v3(
                        radius * th.sin() * ph.cos(),
                        radius * th.sin() * ph.sin(),
                        radius * th.cos(),
                    ),
            );
        }
    }
    positions.push(center - v3(0.0, 0.0, radius));
    let south = positions.len() as u32 - 1;
    let at = |i: usize, j: usize| (1 + (i - 1) * nu + j % nu) as u32;
    let mut tris = Vec::new();
    for j in 0..nu {
        tris.push([0, at(1, j), at(1, j + 1)]);
    }
    for i in 1..nv - 1 {
        for j in 0..nu {
            let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            tris.push([a, b, c]);
            tris.push([a, c, d]);
        }
    }
    for j in 0..nu {
        tris.push([south, at(nv - 1, j + 1), at(nv - 1, j)]);
    }
    (positions, tris)
}

/// Triangulated UV-sphere `WorkMesh`, not tied to any `Surface`. Used by
/// visibility tests that need plain occluder geometry.
pub fn ball(center: V3, radius: f64, nu: usize, nv: usize) -> WorkMesh {
    let (positions, tris) = ball_parts(center, radius, nu, nv);
    let n = positions.len();
    WorkMesh::new(positions, front_vdata(n), tris).unwrap()
}

/// Triangulated closed torus `WorkMesh` (same layout as [`torus`], each
/// quad split into two outward-wound triangles).
pub fn tri_torus(nu: usize, nv: usize, big: f64, small: f64) -> WorkMesh {
    let base = torus(nu, nv, big, small);
    let mut tris = Vec::new();
    for f in 0..base.n_faces() as u32 {
        let q = base.face(f);
        tris.push([q[0], q[1], q[2]]);
        tris.push([q[0], q[2], q[3]]);
    }
    let positions: Vec<V3> = base.positions.clone();
    let n = positions.len();
    WorkMesh::new(positions, front_vdata(n), tris).unwrap()
}

/// Genus-1 patch: a triangulated torus grid with one quad (two triangles)
/// removed, leaving a single boundary loop around a handle. Every face is
/// in region 0.
pub fn handled_patch(nu: usize, nv: usize) -> WorkMesh {
    let base = torus(nu, nv, 1.0, 0.4);
    let mut tris = Vec::new();
    for f in 0..base.n_faces() as u32 {
        if f == 0 {
            continue; // puncture
        }
        let q = base.face(f);
        tris.push([q[0], q[1], q[2]]);
        tris.push([q[0], q[2], q[3]]);
    }
    let positions: Vec<V3> = base.positions.clone();
    let n = positions.len();
    let mut mesh = WorkMesh::new(positions, front_vdata(n), tris).unwrap();
    for f in 0..mesh.n_faces_raw() as u32 {
        mesh.region[f as usize] = 0;
    }
    mesh
}

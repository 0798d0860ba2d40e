//! Small geometric helpers shared across the crate.
//!
//! All image-space quantities are in pixel coordinates (x right, y down);
//! 3D quantities are in world units.

pub type V2 = nalgebra::Vector2<f64>;
pub type V3 = nalgebra::Vector3<f64>;

pub fn v2(x: f64, y: f64) -> V2 {
    V2::new(x, y)
}

pub fn v3(x: f64, y: f64, z: f64) -> V3 {
    V3::new(x, y, z)
}

/// Signed double area of the 2D triangle (a, b, c); positive when the
/// vertices wind counterclockwise in the algebraic sense of the frame.
pub fn cross2(u: V2, v: V2) -> f64 {
    u.x * v.y - u.y * v.x
}

/// Unsigned interior angle at `v` of the wedge (a, v, b), in [0, pi].
pub fn angle_at(a: V2, v: V2, b: V2) -> f64 {
    let u = a - v;
    let w = b - v;
    let d = u.norm() * w.norm();
    if d == 0.0 {
        return 0.0;
    }
    (u.dot(&w) / d).clamp(-1.0, 1.0).acos()
}

/// Axis-aligned bounding box over 3D points.
#[derive(Debug, Clone, Copy)]
pub struct Aabb {
    pub min: V3,
    pub max: V3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: v3(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: v3(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn insert(&mut self, p: V3) {
        self.min = self.min.inf(&p);
        self.max = self.max.sup(&p);
    }

    pub fn union(mut self, other: Aabb) -> Aabb {
        self.min = self.min.inf(&other.min);
        self.max = self.max.sup(&other.max);
        self
    }

    pub fn diagonal(&self) -> f64 {
        if self.min.x > self.max.x {
            0.0
        } else {
            (self.max - self.min).norm()
        }
    }

    pub fn center(&self) -> V3 {
        (self.min + self.max) * 0.5
    }

    pub fn from_points<'a, I: IntoIterator<Item = &'a V3>>(pts: I) -> Aabb {
        let mut b = Aabb::empty();
        for p in pts {
            b.insert(*p);
        }
        b
    }
}

/// Intersection of the open segments (a0, a1) and (b0, b1).
///
/// Returns the parameters (s, t) on each segment, both strictly inside
/// (0, 1), or None for disjoint, touching-at-endpoint, or parallel pairs.
pub fn segment_intersection(a0: V2, a1: V2, b0: V2, b1: V2) -> Option<(f64, f64)> {
    let r = a1 - a0;
    let s = b1 - b0;
    let denom = cross2(r, s);
    if denom == 0.0 {
        return None;
    }
    let d = b0 - a0;
    let t = cross2(d, s) / denom;
    let u = cross2(d, r) / denom;
    let eps = 1e-12;
    if t > eps && t < 1.0 - eps && u > eps && u < 1.0 - eps {
        Some((t, u))
    } else {
        None
    }
}

/// Point-in-polygon test by winding; `poly` is a closed loop of vertices.
pub fn point_in_polygon(p: V2, poly: &[V2]) -> bool {
    let mut winding = 0i32;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if a.y <= p.y {
            if b.y > p.y && cross2(b - a, p - a) > 0.0 {
                winding += 1;
            }
        } else if b.y <= p.y && cross2(b - a, p - a) < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

/// Distance from point `p` to segment (a, b) in 2D.
pub fn point_segment_distance(p: V2, a: V2, b: V2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_intersection_proper_crossing() {
        let got = segment_intersection(v2(0.0, 0.0), v2(2.0, 2.0), v2(0.0, 2.0), v2(2.0, 0.0));
        let (t, u) = got.expect("segments cross");
        assert!((t - 0.5).abs() < 1e-12);
        assert!((u - 0.5).abs() < 1e-12);
    }

    #[test]
    fn segment_intersection_shared_endpoint_is_none() {
        assert!(
            segment_intersection(v2(0.0, 0.0), v2(1.0, 0.0), v2(1.0, 0.0), v2(1.0, 1.0)).is_none()
        );
    }

    #[test]
    fn point_in_polygon_square() {
        let sq = [v2(0.0, 0.0), v2(1.0, 0.0), v2(1.0, 1.0), v2(0.0, 1.0)];
        assert!(point_in_polygon(v2(0.5, 0.5), &sq));
        assert!(!point_in_polygon(v2(1.5, 0.5), &sq));
    }

    #[test]
    fn angle_at_right_angle() {
        let a = angle_at(v2(1.0, 0.0), v2(0.0, 0.0), v2(0.0, 1.0));
        assert!((a - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}

//! Orientation predicates. 2D signs are exact (adaptive precision); the 3D
//! form is the view-side determinant whose sign matches the projected 2D
//! orientation for any choice of positive depths.

use crate::geom::{V2, V3};

/// Sign of det(b - a, c - a): +1 when c lies to the left of a->b in
/// mathematically oriented coordinates, -1 to the right, 0 collinear.
/// Exact for all finite inputs.
///
/// The adaptive predicate is only exact while intermediate products stay
/// clear of underflow, so inputs are first rescaled by an exact power of
/// two; the rare magnitude spans that cannot be rescaled safely take a
/// rational-arithmetic path instead.
pub fn orient2d(a: V2, b: V2, c: V2) -> i8 {
    let coords = [a.x, a.y, b.x, b.y, c.x, c.y];
    let mut max = 0.0f64;
    let mut min_nonzero = f64::INFINITY;
    for &x in &coords {
        let m = x.abs();
        if m > max {
            max = m;
        }
        if m > 0.0 && m < min_nonzero {
            min_nonzero = m;
        }
    }
    if max == 0.0 {
        return 0;
    }
    let s = 2.0f64.powi(-(max.log2().floor() as i32));
    if min_nonzero * s >= 1e-120 {
        let d = robust::orient2d(
            robust::Coord { x: a.x * s, y: a.y * s },
            robust::Coord { x: b.x * s, y: b.y * s },
            robust::Coord { x: c.x * s, y: c.y * s },
        );
        if d > 0.0 {
            1
        } else if d < 0.0 {
            -1
        } else {
            0
        }
    } else {
        orient2d_rational(a, b, c)
    }
}

fn orient2d_rational(a: V2, b: V2, c: V2) -> i8 {
    use num_rational::BigRational;
    use num_traits::Zero;
    let r = |x: f64| BigRational::from_float(x).expect("finite coordinate");
    let det = (r(b.x) - r(a.x)) * (r(c.y) - r(a.y)) - (r(b.y) - r(a.y)) * (r(c.x) - r(a.x));
    if det > BigRational::zero() {
        1
    } else if det < BigRational::zero() {
        -1
    } else {
        0
    }
}

/// Raw signed value of the 3D face orientation (c - p) . ((r - p) x (q - p)).
pub fn orientation_3d_value(p: V3, q: V3, r: V3, cam: V3) -> f64 {
    (cam - p).dot(&(r - p).cross(&(q - p)))
}

/// Sign of the 3D face orientation. Matches the projected 2D winding for
/// positive depths: -1 when the outward normal of (p,q,r) faces the
/// camera (front-facing patch), +1 when it faces away.
pub fn orientation_3d(p: V3, q: V3, r: V3, cam: V3) -> i8 {
    let v = orientation_3d_value(p, q, r, cam);
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

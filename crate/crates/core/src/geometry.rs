use nalgebra::{Point3, Rotation3, Vector3};

pub type P3 = Point3<f64>;
pub type V3 = Vector3<f64>;

pub fn rot_x(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::x_axis(), a)
}

pub fn rot_y(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), a)
}

pub fn rot_z(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), a)
}

/// Wrap an angle into `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let t = a.rem_euclid(std::f64::consts::TAU);
    // rem_euclid can return TAU itself for tiny negative inputs.
    if t >= std::f64::consts::TAU {
        0.0
    } else {
        t
    }
}

/// Unit direction for azimuth `az` and elevation `el`.
pub fn spherical_dir(az: f64, el: f64) -> V3 {
    V3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

/// Distance from point `p` to segment `[a, b]`.
pub fn point_segment_distance(p: &P3, a: &P3, b: &P3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm()
}

/// Minimum distance between segments `[p1, q1]` and `[p2, q2]`.
///
/// Closest-point computation on the clamped parameter square, following the
/// usual case analysis for degenerate (zero-length) and parallel segments.
pub fn segment_segment_distance(p1: &P3, q1: &P3, p2: &P3, q2: &P3) -> f64 {
    const EPS: f64 = 1e-15;
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);

    let (s, t);
    if a <= EPS && e <= EPS {
        return r.norm();
    }
    if a <= EPS {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= EPS {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > EPS * a * e {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    let c1 = p1 + d1 * s;
    let c2 = p2 + d2 * t;
    (c1 - c2).norm()
}

/// Whether segment `[a, b]` passes within `radius` of the capsule axis `[c0, c1]`.
pub fn segment_hits_capsule(a: &P3, b: &P3, c0: &P3, c1: &P3, radius: f64) -> bool {
    segment_segment_distance(a, b, c0, c1) <= radius
}

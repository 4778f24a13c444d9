//! Spine-based normalization of 2D keypoints.
//!
//! The spine runs from the hip point (midpoint of the visible hips) to the
//! neck. Normalization translates its midpoint to the origin, rotates it onto
//! `+y` and scales it to unit length. Pixel `v` grows downward, so an upright
//! spine in the image, pointing toward `-v`, becomes `+y` after normalization.

use crate::error::{Error, Result};
use crate::skeleton::{Joint, Keypoints2D, NUM_JOINTS};

/// Minimum spine length in pixels.
pub const MIN_SPINE_PX: f64 = 1.0;

/// Spine length and midpoint used when a normalized pose is drawn back into
/// pixel space.
pub const CANONICAL_SPINE_PX: f64 = 100.0;
pub const CANONICAL_CENTER: [f64; 2] = [320.0, 240.0];

/// Length of the flat network input: coordinates then mask.
pub const INPUT_DIM: usize = 3 * NUM_JOINTS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpineAnchor {
    pub midpoint: [f64; 2],
    /// Unit vector from the hip point to the neck, image coordinates.
    pub direction: [f64; 2],
    pub length: f64,
    pub hip_point: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedPose {
    /// Per-joint `(x, y)`; invisible joints are `(0, 0)`.
    pub coords: [[f64; 2]; NUM_JOINTS],
    pub mask: [bool; NUM_JOINTS],
}

pub fn spine_anchor(kp: &Keypoints2D) -> Result<SpineAnchor> {
    let neck = kp.get(Joint::Neck).ok_or_else(|| Error::Normalization("neck not visible".into()))?;
    let hip_point = match (kp.get(Joint::LHip), kp.get(Joint::RHip)) {
        (Some(l), Some(r)) => [(l[0] + r[0]) / 2.0, (l[1] + r[1]) / 2.0],
        (Some(h), None) | (None, Some(h)) => h,
        (None, None) => return Err(Error::Normalization("no hip visible".into())),
    };
    let d = [neck[0] - hip_point[0], neck[1] - hip_point[1]];
    let length = (d[0] * d[0] + d[1] * d[1]).sqrt();
    if !(length >= MIN_SPINE_PX) {
        return Err(Error::Normalization(format!("spine length {length} px below {MIN_SPINE_PX}")));
    }
    Ok(SpineAnchor {
        midpoint: [(neck[0] + hip_point[0]) / 2.0, (neck[1] + hip_point[1]) / 2.0],
        direction: [d[0] / length, d[1] / length],
        length,
        hip_point,
    })
}

pub fn normalize_keypoints(kp: &Keypoints2D) -> Result<NormalizedPose> {
    let a = spine_anchor(kp)?;
    // Work in a y-up frame: (u, v) -> (u, -v). The spine direction there is
    // (dx, -dy); rotating it onto +y maps (x, y) to (c*x - s*y, s*x + c*y)
    // with (s, c) = (dx', dy') of the y-up direction.
    let (dx, dy) = (a.direction[0], -a.direction[1]);
    let (sin, cos) = (dx, dy);
    let mut out = NormalizedPose { coords: [[0.0; 2]; NUM_JOINTS], mask: kp.visible };
    for j in 0..NUM_JOINTS {
        if !kp.visible[j] {
            continue;
        }
        let x = (kp.points[j][0] - a.midpoint[0]) / a.length;
        let y = -(kp.points[j][1] - a.midpoint[1]) / a.length;
        out.coords[j] = [cos * x - sin * y, sin * x + cos * y];
    }
    Ok(out)
}

impl NormalizedPose {
    /// Flat network input: `2 * J` coordinates, then `J` mask entries.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(INPUT_DIM);
        for c in &self.coords {
            v.extend_from_slice(c);
        }
        v.extend(self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }));
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != INPUT_DIM {
            return Err(Error::invalid(format!("normalized pose needs {INPUT_DIM} values, got {}", v.len())));
        }
        let mut p = NormalizedPose { coords: [[0.0; 2]; NUM_JOINTS], mask: [false; NUM_JOINTS] };
        for j in 0..NUM_JOINTS {
            p.coords[j] = [v[2 * j], v[2 * j + 1]];
            p.mask[j] = v[2 * NUM_JOINTS + j] > 0.5;
        }
        Ok(p)
    }

    /// Draw back as pixel keypoints (`v` down) with the spine at
    /// [`CANONICAL_SPINE_PX`], so that normalizing the result reproduces `self`.
    pub fn to_keypoints(&self) -> Keypoints2D {
        let (c, k) = (CANONICAL_CENTER, CANONICAL_SPINE_PX);
        let mut kp = Keypoints2D::all_invisible();
        for j in 0..NUM_JOINTS {
            if self.mask[j] {
                kp.points[j] = [c[0] + k * self.coords[j][0], c[1] - k * self.coords[j][1]];
                kp.visible[j] = true;
            }
        }
        kp
    }
}

/// Apply a similarity transform to all visible keypoints: rotate by `angle`
/// and scale by `scale` about `pivot`, then translate by `t`.
pub fn similarity(kp: &Keypoints2D, angle: f64, scale: f64, pivot: [f64; 2], t: [f64; 2]) -> Keypoints2D {
    let (s, c) = angle.sin_cos();
    kp.map_visible(|_, p| {
        let (x, y) = (p[0] - pivot[0], p[1] - pivot[1]);
        [pivot[0] + scale * (c * x - s * y) + t[0], pivot[1] + scale * (s * x + c * y) + t[1]]
    })
}

use std::f64::consts::FRAC_PI_2;

use super::{Skeleton3D, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::geometry::{spherical_dir, wrap_angle, P3, V3};

/// Pixel coordinate stored for joints that are not visible.
pub const INVISIBLE: [f64; 2] = [-1.0, -1.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub focal: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for Intrinsics {
    fn default() -> Self {
        Intrinsics { focal: 500.0, width: 640, height: 480 }
    }
}

impl Intrinsics {
    pub fn center(&self) -> [f64; 2] {
        [self.width as f64 / 2.0, self.height as f64 / 2.0]
    }

    pub fn contains(&self, uv: [f64; 2]) -> bool {
        uv[0] >= 0.0 && uv[0] < self.width as f64 && uv[1] >= 0.0 && uv[1] < self.height as f64
    }
}

/// Pinhole camera on a sphere around `look_at`, principal axis through the
/// center. Image `u` grows to the right, `v` grows downward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraView {
    pub azimuth: f64,
    pub elevation: f64,
    pub radius: f64,
    pub look_at: P3,
    pub intrinsics: Intrinsics,
}

impl CameraView {
    /// Camera on the upper hemisphere: `elevation ∈ [0, π/2]`, `radius > 0`.
    pub fn new(azimuth: f64, elevation: f64, radius: f64, look_at: P3, intrinsics: Intrinsics) -> Result<Self> {
        if !(0.0..=FRAC_PI_2).contains(&elevation) {
            return Err(Error::invalid(format!("elevation {elevation} outside [0, π/2]")));
        }
        Self::unchecked(azimuth, elevation, radius, look_at, intrinsics)
    }

    /// Camera at an arbitrary `position` looking at `look_at`. Positions below
    /// the look-at point produce negative elevations.
    pub fn from_position(position: P3, look_at: P3, intrinsics: Intrinsics) -> Result<Self> {
        let d = position - look_at;
        let radius = d.norm();
        if !(radius > 0.0) {
            return Err(Error::invalid("camera coincides with its look-at point"));
        }
        let elevation = (d.z / radius).clamp(-1.0, 1.0).asin();
        let azimuth = if d.x == 0.0 && d.y == 0.0 { 0.0 } else { d.y.atan2(d.x) };
        Self::unchecked(azimuth, elevation, radius, look_at, intrinsics)
    }

    fn unchecked(azimuth: f64, elevation: f64, radius: f64, look_at: P3, intrinsics: Intrinsics) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::invalid(format!("camera radius {radius} must be positive")));
        }
        if !azimuth.is_finite() || !look_at.coords.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("non-finite camera parameters"));
        }
        if !(intrinsics.focal > 0.0) || intrinsics.width == 0 || intrinsics.height == 0 {
            return Err(Error::invalid("invalid camera intrinsics"));
        }
        Ok(CameraView { azimuth: wrap_angle(azimuth), elevation, radius, look_at, intrinsics })
    }

    pub fn position(&self) -> P3 {
        self.look_at + spherical_dir(self.azimuth, self.elevation) * self.radius
    }

    /// Orthonormal camera basis `(right, up, forward)`.
    pub fn basis(&self) -> (V3, V3, V3) {
        let forward = -spherical_dir(self.azimuth, self.elevation);
        let right = V3::new(-self.azimuth.sin(), self.azimuth.cos(), 0.0);
        let up = right.cross(&forward);
        (right, up, forward)
    }

    /// Pixel coordinate of `p`, or `None` when `p` is not in front of the
    /// camera plane.
    pub fn project_point(&self, p: &P3) -> Option<[f64; 2]> {
        let (right, up, forward) = self.basis();
        let rel = p - self.position();
        let depth = rel.dot(&forward);
        if depth <= 1e-9 {
            return None;
        }
        let [cx, cy] = self.intrinsics.center();
        let f = self.intrinsics.focal;
        Some([cx + f * rel.dot(&right) / depth, cy - f * rel.dot(&up) / depth])
    }
}

/// Per-joint pixel coordinates and visibility in the fixed joint order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoints2D {
    pub points: [[f64; 2]; NUM_JOINTS],
    pub visible: [bool; NUM_JOINTS],
}

impl Keypoints2D {
    pub fn all_invisible() -> Self {
        Keypoints2D { points: [INVISIBLE; NUM_JOINTS], visible: [false; NUM_JOINTS] }
    }

    /// Build from raw points, all marked visible.
    pub fn from_points(points: [[f64; 2]; NUM_JOINTS]) -> Self {
        Keypoints2D { points, visible: [true; NUM_JOINTS] }
    }

    pub fn get(&self, j: super::Joint) -> Option<[f64; 2]> {
        let i = j.index();
        self.visible[i].then_some(self.points[i])
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }

    /// Apply `f` to every visible point; invisible entries keep the sentinel.
    pub fn map_visible(&self, mut f: impl FnMut(usize, [f64; 2]) -> [f64; 2]) -> Self {
        let mut out = *self;
        for i in 0..NUM_JOINTS {
            if out.visible[i] {
                out.points[i] = f(i, out.points[i]);
            }
        }
        out
    }
}

/// Ground-truth pinhole projection (no occlusion). Joints behind the camera
/// or outside the image are flagged invisible.
pub fn project(s: &Skeleton3D, cam: &CameraView) -> Keypoints2D {
    let mut kp = Keypoints2D::all_invisible();
    for (i, p) in s.joints.iter().enumerate() {
        if let Some(uv) = cam.project_point(p) {
            if cam.intrinsics.contains(uv) {
                kp.points[i] = uv;
                kp.visible[i] = true;
            }
        }
    }
    kp
}

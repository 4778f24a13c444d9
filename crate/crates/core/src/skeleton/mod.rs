//! Articulated capsule skeleton, pose animation, pinhole projection and a
//! simulated keypoint detector.
//!
//! Subject frame: `+x` forward (facing direction), `+y` to the subject's left,
//! `+z` up. The ground plane is `z = 0`.

mod camera;
mod detect;
pub mod io;
mod pose;

pub use camera::{project, CameraView, Intrinsics, Keypoints2D, INVISIBLE};
pub use detect::{apply_detector, detect, detect_with_occlusion, occlusion_mask, DetectorParams};
pub use pose::{animate, JointLimits, PoseParams, Side};

use crate::error::{Error, Result};
use crate::geometry::P3;

pub const NUM_JOINTS: usize = 17;

/// Fixed joint order shared by every keypoint vector in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(usize)]
pub enum Joint {
    Nose = 0,
    Neck,
    LShoulder,
    RShoulder,
    LElbow,
    RElbow,
    LWrist,
    RWrist,
    LHip,
    RHip,
    LKnee,
    RKnee,
    LAnkle,
    RAnkle,
    MidHip,
    LEye,
    REye,
}

impl Joint {
    pub const ALL: [Joint; NUM_JOINTS] = [
        Joint::Nose,
        Joint::Neck,
        Joint::LShoulder,
        Joint::RShoulder,
        Joint::LElbow,
        Joint::RElbow,
        Joint::LWrist,
        Joint::RWrist,
        Joint::LHip,
        Joint::RHip,
        Joint::LKnee,
        Joint::RKnee,
        Joint::LAnkle,
        Joint::RAnkle,
        Joint::MidHip,
        Joint::LEye,
        Joint::REye,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Joint::Nose => "nose",
            Joint::Neck => "neck",
            Joint::LShoulder => "l_shoulder",
            Joint::RShoulder => "r_shoulder",
            Joint::LElbow => "l_elbow",
            Joint::RElbow => "r_elbow",
            Joint::LWrist => "l_wrist",
            Joint::RWrist => "r_wrist",
            Joint::LHip => "l_hip",
            Joint::RHip => "r_hip",
            Joint::LKnee => "l_knee",
            Joint::RKnee => "r_knee",
            Joint::LAnkle => "l_ankle",
            Joint::RAnkle => "r_ankle",
            Joint::MidHip => "mid_hip",
            Joint::LEye => "l_eye",
            Joint::REye => "r_eye",
        }
    }

    /// Left/right counterpart; central joints map to themselves.
    pub fn mirror(self) -> Joint {
        use Joint::*;
        match self {
            LShoulder => RShoulder,
            RShoulder => LShoulder,
            LElbow => RElbow,
            RElbow => LElbow,
            LWrist => RWrist,
            RWrist => LWrist,
            LHip => RHip,
            RHip => LHip,
            LKnee => RKnee,
            RKnee => LKnee,
            LAnkle => RAnkle,
            RAnkle => LAnkle,
            LEye => REye,
            REye => LEye,
            j => j,
        }
    }
}

/// A capsule limb between two joints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bone {
    pub parent: usize,
    pub child: usize,
    pub radius: f64,
}

/// Body proportions at the reference height, in meters. Every length and
/// radius scales linearly with `height / REFERENCE_HEIGHT`.
pub mod proportions {
    pub const REFERENCE_HEIGHT: f64 = 1.8;
    pub const SPINE_FRACTION: f64 = 0.30;
    pub const TORSO_RADIUS: f64 = 0.14;
    pub const HEAD_RADIUS: f64 = 0.10;
    pub const LIMB_RADIUS: f64 = 0.05;
    pub const FACE_RADIUS: f64 = 0.02;
    pub const HIP_HALF_WIDTH: f64 = 0.15;
    pub const SHOULDER_HALF_WIDTH: f64 = 0.18;
    pub const UPPER_ARM: f64 = 0.28;
    pub const FOREARM: f64 = 0.25;
    pub const ANKLE_HEIGHT: f64 = 0.08;
    /// Nose offset from the neck (forward, up).
    pub const NOSE: (f64, f64) = (0.12, 0.09);
    /// Eye offset from the neck (forward, lateral, up).
    pub const EYE: (f64, f64, f64) = (0.22, 0.04, 0.10);
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton3D {
    pub joints: [P3; NUM_JOINTS],
    pub bones: Vec<Bone>,
}

impl Skeleton3D {
    /// Validates the structural invariants: bone indices in range, tree rooted
    /// at the mid-hip, positive radii and finite coordinates.
    pub fn new(joints: [P3; NUM_JOINTS], bones: Vec<Bone>) -> Result<Self> {
        let s = Skeleton3D { joints, bones };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("non-finite joint coordinate"));
        }
        if self.bones.len() != NUM_JOINTS - 1 {
            return Err(Error::invalid(format!(
                "expected {} bones for a tree, got {}",
                NUM_JOINTS - 1,
                self.bones.len()
            )));
        }
        let mut parent = [usize::MAX; NUM_JOINTS];
        for b in &self.bones {
            if b.parent >= NUM_JOINTS || b.child >= NUM_JOINTS {
                return Err(Error::invalid("bone index out of range"));
            }
            if !(b.radius > 0.0) || !b.radius.is_finite() {
                return Err(Error::invalid("capsule radius must be positive"));
            }
            if parent[b.child] != usize::MAX || b.child == Joint::MidHip.index() {
                return Err(Error::invalid("bone graph is not a tree rooted at mid-hip"));
            }
            parent[b.child] = b.parent;
        }
        // Every joint must reach the root without cycles.
        for start in 0..NUM_JOINTS {
            let mut j = start;
            let mut steps = 0;
            while j != Joint::MidHip.index() {
                j = parent[j];
                steps += 1;
                if j == usize::MAX || steps > NUM_JOINTS {
                    return Err(Error::invalid("bone graph is not a tree rooted at mid-hip"));
                }
            }
        }
        Ok(())
    }

    pub fn joint(&self, j: Joint) -> P3 {
        self.joints[j.index()]
    }

    /// Torso center: midpoint of neck and mid-hip. Cameras look here.
    pub fn center(&self) -> P3 {
        nalgebra::center(&self.joint(Joint::Neck), &self.joint(Joint::MidHip))
    }

    pub fn spine_length(&self) -> f64 {
        (self.joint(Joint::Neck) - self.joint(Joint::MidHip)).norm()
    }

    /// Parent joint index for each joint; the root maps to itself.
    pub fn parents(&self) -> [usize; NUM_JOINTS] {
        let mut parent = [Joint::MidHip.index(); NUM_JOINTS];
        for b in &self.bones {
            parent[b.child] = b.parent;
        }
        parent
    }

    pub fn bone_lengths(&self) -> Vec<f64> {
        self.bones
            .iter()
            .map(|b| (self.joints[b.child] - self.joints[b.parent]).norm())
            .collect()
    }
}

/// Upright T-pose skeleton of the given height (ankle to nose), mid-hip on
/// the `z` axis, facing `+x`.
pub fn build_canonical_skeleton(height: f64) -> Result<Skeleton3D> {
    use proportions::*;
    if !(1.0..=2.2).contains(&height) {
        return Err(Error::invalid(format!("height {height} m outside [1.0, 2.2]")));
    }
    let k = height / REFERENCE_HEIGHT;
    let spine = SPINE_FRACTION * height;
    let (nose_fwd, nose_up) = (NOSE.0 * k, NOSE.1 * k);
    let hip_w = HIP_HALF_WIDTH * k;
    // Leg length is chosen so that |nose - ankle| equals the height exactly.
    let vertical = (height * height - nose_fwd * nose_fwd - hip_w * hip_w).sqrt();
    let leg = vertical - spine - nose_up;
    let ankle_z = ANKLE_HEIGHT * k;
    let hip_z = ankle_z + leg;

    let mid = P3::new(0.0, 0.0, hip_z);
    let neck = P3::new(0.0, 0.0, hip_z + spine);
    let sh_w = SHOULDER_HALF_WIDTH * k;
    let (ua, fa) = (UPPER_ARM * k, FOREARM * k);

    let mut j = [P3::origin(); NUM_JOINTS];
    j[Joint::MidHip.index()] = mid;
    j[Joint::Neck.index()] = neck;
    j[Joint::Nose.index()] = neck + nalgebra::Vector3::new(nose_fwd, 0.0, nose_up);
    for (eye, side) in [(Joint::LEye, 1.0), (Joint::REye, -1.0)] {
        j[eye.index()] = neck + nalgebra::Vector3::new(EYE.0 * k, side * EYE.1 * k, EYE.2 * k);
    }
    for (sh, el, wr, side) in [
        (Joint::LShoulder, Joint::LElbow, Joint::LWrist, 1.0),
        (Joint::RShoulder, Joint::RElbow, Joint::RWrist, -1.0),
    ] {
        j[sh.index()] = neck + nalgebra::Vector3::new(0.0, side * sh_w, 0.0);
        j[el.index()] = j[sh.index()] + nalgebra::Vector3::new(0.0, side * ua, 0.0);
        j[wr.index()] = j[el.index()] + nalgebra::Vector3::new(0.0, side * fa, 0.0);
    }
    for (hip, knee, ankle, side) in [
        (Joint::LHip, Joint::LKnee, Joint::LAnkle, 1.0),
        (Joint::RHip, Joint::RKnee, Joint::RAnkle, -1.0),
    ] {
        j[hip.index()] = mid + nalgebra::Vector3::new(0.0, side * hip_w, 0.0);
        j[knee.index()] = j[hip.index()] - nalgebra::Vector3::new(0.0, 0.0, leg / 2.0);
        j[ankle.index()] = j[knee.index()] - nalgebra::Vector3::new(0.0, 0.0, leg / 2.0);
    }

    let bone = |p: Joint, c: Joint, r: f64| Bone { parent: p.index(), child: c.index(), radius: r * k };
    use Joint::*;
    let bones = vec![
        bone(MidHip, Neck, TORSO_RADIUS),
        bone(Neck, Nose, HEAD_RADIUS),
        bone(Nose, LEye, FACE_RADIUS),
        bone(Nose, REye, FACE_RADIUS),
        bone(Neck, LShoulder, LIMB_RADIUS),
        bone(LShoulder, LElbow, LIMB_RADIUS),
        bone(LElbow, LWrist, LIMB_RADIUS),
        bone(Neck, RShoulder, LIMB_RADIUS),
        bone(RShoulder, RElbow, LIMB_RADIUS),
        bone(RElbow, RWrist, LIMB_RADIUS),
        bone(MidHip, LHip, LIMB_RADIUS),
        bone(LHip, LKnee, LIMB_RADIUS),
        bone(LKnee, LAnkle, LIMB_RADIUS),
        bone(MidHip, RHip, LIMB_RADIUS),
        bone(RHip, RKnee, LIMB_RADIUS),
        bone(RKnee, RAnkle, LIMB_RADIUS),
    ];
    Skeleton3D::new(j, bones)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn canonical_spine_length() {
        let s = build_canonical_skeleton(1.8).unwrap();
        assert_abs_diff_eq!(s.spine_length(), 0.54, epsilon = 1e-12);
    }

    #[test]
    fn canonical_height_is_ankle_to_nose() {
        for h in [1.0, 1.8, 2.2] {
            let s = build_canonical_skeleton(h).unwrap();
            for a in [Joint::LAnkle, Joint::RAnkle] {
                assert_abs_diff_eq!((s.joint(Joint::Nose) - s.joint(a)).norm(), h, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn neck_above_mid_hip() {
        let s = build_canonical_skeleton(1.8).unwrap();
        let (n, m) = (s.joint(Joint::Neck), s.joint(Joint::MidHip));
        assert_eq!(n.x, m.x);
        assert_eq!(n.y, m.y);
        assert!(n.z > m.z);
        assert_eq!((m.x, m.y), (0.0, 0.0));
    }

    #[test]
    fn shoulders_mirror_about_sagittal_plane() {
        let s = build_canonical_skeleton(1.8).unwrap();
        for j in Joint::ALL {
            let (a, b) = (s.joint(j), s.joint(j.mirror()));
            assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-15);
            assert_abs_diff_eq!(a.y, -b.y, epsilon = 1e-15);
            assert_abs_diff_eq!(a.z, b.z, epsilon = 1e-15);
        }
    }

    #[test]
    fn height_out_of_range() {
        assert!(matches!(build_canonical_skeleton(0.9), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_canonical_skeleton(2.3), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn validation_rejects_cycles_and_bad_radii() {
        let s = build_canonical_skeleton(1.8).unwrap();
        let mut bad = s.bones.clone();
        bad[0].radius = 0.0;
        assert!(Skeleton3D::new(s.joints, bad).is_err());
        let mut bad = s.bones.clone();
        bad[1] = Bone { parent: Joint::Nose.index(), child: Joint::Nose.index(), radius: 0.1 };
        assert!(Skeleton3D::new(s.joints, bad).is_err());
    }

    #[test]
    fn joints_are_outside_non_adjacent_capsules() {
        // A joint buried in a foreign capsule would be occluded from every view.
        let s = build_canonical_skeleton(1.8).unwrap();
        for (j, p) in s.joints.iter().enumerate() {
            for b in s.bones.iter().filter(|b| b.parent != j && b.child != j) {
                let d = crate::geometry::point_segment_distance(p, &s.joints[b.parent], &s.joints[b.child]);
                assert!(d > b.radius, "{} inside bone {}-{}", Joint::ALL[j].name(), b.parent, b.child);
            }
        }
    }
}

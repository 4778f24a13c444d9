use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{project, CameraView, Keypoints2D, Skeleton3D, INVISIBLE, NUM_JOINTS};
use crate::geometry::segment_hits_capsule;
use crate::rng::{self, Rng};

/// Noise model of the simulated keypoint detector.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetectorParams {
    /// Isotropic noise (px) on unoccluded joints.
    pub sigma_visible: f64,
    /// Isotropic noise (px) on occluded joints that are still reported.
    pub sigma_occluded: f64,
    /// Probability that an occluded joint is dropped.
    pub drop_prob: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams { sigma_visible: 2.0, sigma_occluded: 15.0, drop_prob: 0.5 }
    }
}

impl DetectorParams {
    pub fn noiseless() -> Self {
        DetectorParams { sigma_visible: 0.0, sigma_occluded: 0.0, drop_prob: 0.0 }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.sigma_visible >= 0.0 && self.sigma_occluded >= 0.0) {
            return Err(crate::Error::invalid("detector noise must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(crate::Error::invalid("drop probability outside [0, 1]"));
        }
        Ok(())
    }
}

/// Self-occlusion per joint: the segment from the camera center to the joint
/// passes through a capsule that does not touch that joint.
pub fn occlusion_mask(s: &Skeleton3D, cam: &CameraView) -> [bool; NUM_JOINTS] {
    let eye = cam.position();
    let mut mask = [false; NUM_JOINTS];
    for (j, p) in s.joints.iter().enumerate() {
        mask[j] = s
            .bones
            .iter()
            .filter(|b| b.parent != j && b.child != j)
            .any(|b| segment_hits_capsule(&eye, p, &s.joints[b.parent], &s.joints[b.child], b.radius));
    }
    mask
}

/// Corrupt a ground-truth projection. Exactly three variates are drawn per
/// joint (drop test, two normals) regardless of state, so streams stay
/// aligned across joints.
pub fn apply_detector(truth: &Keypoints2D, occluded: &[bool; NUM_JOINTS], det: &DetectorParams, rng: &mut Rng, width: f64, height: f64) -> Keypoints2D {
    let mut out = Keypoints2D::all_invisible();
    for j in 0..NUM_JOINTS {
        let u: f64 = rng.random();
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        if !truth.visible[j] {
            continue;
        }
        let sigma = if occluded[j] {
            if u < det.drop_prob {
                continue;
            }
            det.sigma_occluded
        } else {
            det.sigma_visible
        };
        let p = [truth.points[j][0] + sigma * nx, truth.points[j][1] + sigma * ny];
        if p[0] >= 0.0 && p[0] < width && p[1] >= 0.0 && p[1] < height {
            out.points[j] = p;
            out.visible[j] = true;
        } else {
            out.points[j] = INVISIBLE;
        }
    }
    out
}

/// Simulated imperfect detector. Deterministic in `seed`.
pub fn detect(s: &Skeleton3D, cam: &CameraView, det: &DetectorParams, seed: u64) -> Keypoints2D {
    detect_with_occlusion(s, cam, det, &[false; NUM_JOINTS], seed)
}

/// As [`detect`], with extra occlusion (e.g. environment obstacles) OR-ed
/// into the self-occlusion mask.
pub fn detect_with_occlusion(s: &Skeleton3D, cam: &CameraView, det: &DetectorParams, extra: &[bool; NUM_JOINTS], seed: u64) -> Keypoints2D {
    let truth = project(s, cam);
    let mut mask = occlusion_mask(s, cam);
    for (m, e) in mask.iter_mut().zip(extra) {
        *m |= *e;
    }
    let mut r = rng::rng(seed);
    let (w, h) = (cam.intrinsics.width as f64, cam.intrinsics.height as f64);
    apply_detector(&truth, &mask, det, &mut r, w, h)
}

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Rotation3;

use super::{Joint, Skeleton3D, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::geometry::{rot_x, rot_y, rot_z, wrap_angle, P3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left = 0,
    Right = 1,
}

/// Joint angles (radians) relative to the T-pose, a gait oscillator and the
/// root placement. Two-element arrays are indexed by [`Side`].
///
/// * shoulder abduction: rotation about the forward axis, positive raises
///   the arm above the horizontal.
/// * shoulder flexion: rotation about the lateral axis, positive swings a
///   lowered arm forward.
/// * elbow flexion: bends the forearm forward relative to the upper arm.
/// * hip flexion: positive swings the leg forward.
/// * knee flexion: bends the shin backward.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseParams {
    pub shoulder_abduction: [f64; 2],
    pub shoulder_flexion: [f64; 2],
    pub elbow_flexion: [f64; 2],
    pub hip_flexion: [f64; 2],
    pub knee_flexion: [f64; 2],
    /// Gait phase, wrapped into `[0, 2π)`.
    pub gait_phase: f64,
    /// Amplitude of the sinusoidal gait swing added on top of the explicit
    /// angles. Zero disables the gait generator.
    pub gait_amplitude: f64,
    /// World position of the mid-hip joint.
    pub root_position: P3,
    /// Rotation of the body about the vertical axis.
    pub heading: f64,
}

/// Inclusive per-joint angle limits.
#[derive(Debug, Clone, Copy)]
pub struct JointLimits {
    pub shoulder_abduction: (f64, f64),
    pub shoulder_flexion: (f64, f64),
    pub elbow_flexion: (f64, f64),
    pub hip_flexion: (f64, f64),
    pub knee_flexion: (f64, f64),
    pub gait_amplitude: (f64, f64),
}

impl JointLimits {
    pub const DEFAULT: JointLimits = JointLimits {
        shoulder_abduction: (-FRAC_PI_2, FRAC_PI_2),
        shoulder_flexion: (-FRAC_PI_2, PI),
        elbow_flexion: (0.0, 2.6),
        hip_flexion: (-0.8, 1.8),
        knee_flexion: (0.0, 2.4),
        gait_amplitude: (0.0, 0.8),
    };
}

const LIMIT_SLACK: f64 = 1e-12;

impl PoseParams {
    /// T-pose with the root at `root_position`.
    pub fn t_pose(root_position: P3, heading: f64) -> Self {
        PoseParams {
            shoulder_abduction: [0.0; 2],
            shoulder_flexion: [0.0; 2],
            elbow_flexion: [0.0; 2],
            hip_flexion: [0.0; 2],
            knee_flexion: [0.0; 2],
            gait_phase: 0.0,
            gait_amplitude: 0.0,
            root_position,
            heading,
        }
    }

    /// T-pose that leaves `base` where it is.
    pub fn identity_for(base: &Skeleton3D) -> Self {
        Self::t_pose(base.joint(Joint::MidHip), 0.0)
    }

    /// Walking pose: arms lowered, gait oscillator at `phase`.
    pub fn walking(base: &Skeleton3D, phase: f64, amplitude: f64) -> Self {
        let mut p = Self::identity_for(base);
        p.shoulder_abduction = [-1.2, -1.2];
        p.elbow_flexion = [0.3, 0.3];
        p.gait_phase = wrap_angle(phase);
        p.gait_amplitude = amplitude;
        p
    }

    /// Static pose with the right arm raised overhead and the forearm folded
    /// in front of the face.
    pub fn raised_right_arm(base: &Skeleton3D) -> Self {
        let mut p = Self::identity_for(base);
        p.shoulder_abduction = [-1.2, FRAC_PI_2];
        p.shoulder_flexion = [0.0, 0.35];
        p.elbow_flexion = [0.3, 2.1];
        p
    }

    pub fn validate(&self, limits: &JointLimits) -> Result<()> {
        let check = |name: &str, v: &[f64], (lo, hi): (f64, f64)| -> Result<()> {
            for (i, &a) in v.iter().enumerate() {
                if !a.is_finite() || a < lo - LIMIT_SLACK || a > hi + LIMIT_SLACK {
                    return Err(Error::invalid(format!("{name}[{i}] = {a} outside [{lo}, {hi}]")));
                }
            }
            Ok(())
        };
        check("shoulder_abduction", &self.shoulder_abduction, limits.shoulder_abduction)?;
        check("shoulder_flexion", &self.shoulder_flexion, limits.shoulder_flexion)?;
        check("elbow_flexion", &self.elbow_flexion, limits.elbow_flexion)?;
        check("hip_flexion", &self.hip_flexion, limits.hip_flexion)?;
        check("knee_flexion", &self.knee_flexion, limits.knee_flexion)?;
        check("gait_amplitude", &[self.gait_amplitude], limits.gait_amplitude)?;
        if !self.gait_phase.is_finite() || !self.heading.is_finite() {
            return Err(Error::invalid("non-finite gait phase or heading"));
        }
        if !self.root_position.coords.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("non-finite root position"));
        }
        Ok(())
    }

    /// Explicit angles plus the gait swing, clamped to `limits`.
    fn effective(&self, limits: &JointLimits) -> PoseParams {
        let mut p = self.clone();
        let phase = wrap_angle(self.gait_phase);
        p.gait_phase = phase;
        if self.gait_amplitude > 0.0 {
            let a = self.gait_amplitude;
            let s = phase.sin();
            p.hip_flexion[0] += a * s;
            p.hip_flexion[1] -= a * s;
            p.knee_flexion[0] += 1.2 * a * s.max(0.0);
            p.knee_flexion[1] += 1.2 * a * (-s).max(0.0);
            p.shoulder_flexion[0] -= 0.8 * a * s;
            p.shoulder_flexion[1] += 0.8 * a * s;
        }
        let clamp = |v: &mut [f64; 2], (lo, hi): (f64, f64)| v.iter_mut().for_each(|x| *x = x.clamp(lo, hi));
        clamp(&mut p.hip_flexion, limits.hip_flexion);
        clamp(&mut p.knee_flexion, limits.knee_flexion);
        clamp(&mut p.shoulder_flexion, limits.shoulder_flexion);
        p
    }
}

/// Local rotation applied to the bones leaving each joint.
fn local_rotations(p: &PoseParams) -> [Rotation3<f64>; NUM_JOINTS] {
    let mut r = [Rotation3::identity(); NUM_JOINTS];
    for (side, sign) in [(Side::Left, 1.0), (Side::Right, -1.0)] {
        let i = side as usize;
        let (sh, el, hip, knee) = match side {
            Side::Left => (Joint::LShoulder, Joint::LElbow, Joint::LHip, Joint::LKnee),
            Side::Right => (Joint::RShoulder, Joint::RElbow, Joint::RHip, Joint::RKnee),
        };
        r[sh.index()] = rot_y(-p.shoulder_flexion[i]) * rot_x(sign * p.shoulder_abduction[i]);
        r[el.index()] = rot_z(-sign * p.elbow_flexion[i]);
        r[hip.index()] = rot_y(-p.hip_flexion[i]);
        r[knee.index()] = rot_y(p.knee_flexion[i]);
    }
    r
}

/// Forward kinematics along the bone tree. Bone vectors of `base` are rotated
/// rigidly, so every bone length is preserved.
pub fn animate(base: &Skeleton3D, params: &PoseParams) -> Result<Skeleton3D> {
    let limits = JointLimits::DEFAULT;
    params.validate(&limits)?;
    let p = params.effective(&limits);
    let local = local_rotations(&p);
    let parents = base.parents();
    let root = Joint::MidHip.index();

    // Topological order: repeatedly place joints whose parent is placed.
    let mut global = [Rotation3::identity(); NUM_JOINTS];
    let mut placed = [false; NUM_JOINTS];
    let mut out = base.joints;
    global[root] = rot_z(p.heading) * local[root];
    out[root] = p.root_position;
    placed[root] = true;
    let mut remaining = NUM_JOINTS - 1;
    while remaining > 0 {
        let before = remaining;
        for j in 0..NUM_JOINTS {
            let par = parents[j];
            if placed[j] || !placed[par] {
                continue;
            }
            let offset = base.joints[j] - base.joints[par];
            out[j] = out[par] + global[par] * offset;
            global[j] = global[par] * local[j];
            placed[j] = true;
            remaining -= 1;
        }
        if remaining == before {
            return Err(Error::invalid("bone graph is not connected"));
        }
    }
    Ok(Skeleton3D { joints: out, bones: base.bones.clone() })
}

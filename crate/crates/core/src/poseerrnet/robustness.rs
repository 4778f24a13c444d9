use rand::Rng as _;

use super::dataset::sample_gait_poses;
use super::net::PerceptionNet;
use crate::error::{Error, Result};
use crate::normalize::normalize_keypoints;
use crate::rng;
use crate::skeleton::{animate, detect, DetectorParams, Keypoints2D, Skeleton3D, NUM_JOINTS};
use crate::viewsphere::{quantize_bins, ViewGrid};

pub const ROBUSTNESS_BINS: usize = 21;
/// Size of the evaluation clip.
pub const ROBUSTNESS_FRAMES: usize = 146;

/// Detections of random gait poses, each from a random view of `g`.
pub fn synthetic_frames(base: &Skeleton3D, g: &ViewGrid, n: usize, det: &DetectorParams, seed: u64) -> Result<Vec<Keypoints2D>> {
    let poses = sample_gait_poses(base, n, rng::derive(seed, 0));
    let mut r = rng::rng(rng::derive(seed, 1));
    poses
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let s = animate(base, p)?;
            let cam = g.view_at(r.random_range(0..g.len()), s.center(), p.heading);
            Ok(detect(&s, &cam, det, rng::derive(seed, 2 + i as u64)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    T1,
    T2,
    T3,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::T1, Level::T2, Level::T3];

    /// `(max translation px, max rotation degrees, max scale)`.
    pub fn bounds(self) -> (f64, f64, f64) {
        match self {
            Level::T1 => (5.0, 5.0, 1.05),
            Level::T2 => (10.0, 10.0, 1.10),
            Level::T3 => (20.0, 20.0, 1.15),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Level::T1 => "T1",
            Level::T2 => "T2",
            Level::T3 => "T3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbMode {
    Translation,
    Rotation,
    Scale,
    All,
}

/// Whether one transform moves the whole frame, or every joint draws its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Application {
    Global,
    PerJoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessReport {
    /// Percentage of grid cells whose bin changed, over all used frames.
    pub percent_changed: f64,
    pub frames_used: usize,
    /// Frames whose clean or perturbed keypoints failed to normalize.
    pub frames_excluded: usize,
}

/// Unit draws for one transform: translation magnitude and direction,
/// rotation magnitude and sign, scale. Levels scale the same draws, so a
/// frame's T1 perturbation is a shrunken copy of its T3 perturbation.
#[derive(Debug, Clone, Copy)]
struct Draw {
    t: f64,
    dir: f64,
    rot: f64,
    sign: f64,
    scale: f64,
}

impl Draw {
    fn sample(r: &mut rng::Rng) -> Self {
        Draw {
            t: r.random(),
            dir: r.random_range(0.0..std::f64::consts::TAU),
            rot: r.random(),
            sign: if r.random::<bool>() { 1.0 } else { -1.0 },
            scale: r.random(),
        }
    }

    fn apply(&self, p: [f64; 2], pivot: [f64; 2], level: Level, mode: PerturbMode) -> [f64; 2] {
        let (t_max, deg_max, s_max) = level.bounds();
        let use_t = matches!(mode, PerturbMode::Translation | PerturbMode::All);
        let use_r = matches!(mode, PerturbMode::Rotation | PerturbMode::All);
        let use_s = matches!(mode, PerturbMode::Scale | PerturbMode::All);
        let angle = if use_r { self.sign * self.rot * deg_max.to_radians() } else { 0.0 };
        let scale = if use_s { 1.0 + self.scale * (s_max - 1.0) } else { 1.0 };
        let shift = if use_t { self.t * t_max } else { 0.0 };
        let (s, c) = angle.sin_cos();
        let (x, y) = (p[0] - pivot[0], p[1] - pivot[1]);
        [
            pivot[0] + scale * (c * x - s * y) + shift * self.dir.cos(),
            pivot[1] + scale * (s * x + c * y) + shift * self.dir.sin(),
        ]
    }
}

fn centroid(kp: &Keypoints2D) -> [f64; 2] {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for j in 0..NUM_JOINTS {
        if kp.visible[j] {
            sx += kp.points[j][0];
            sy += kp.points[j][1];
            n += 1.0;
        }
    }
    if n > 0.0 {
        [sx / n, sy / n]
    } else {
        [0.0, 0.0]
    }
}

/// Perturb one frame. Frame `i` of a run with `seed` sees the same unit
/// draws at every level.
pub fn perturb_frame(kp: &Keypoints2D, level: Level, mode: PerturbMode, app: Application, seed: u64) -> Keypoints2D {
    let mut r = rng::rng(seed);
    let pivot = centroid(kp);
    match app {
        Application::Global => {
            let d = Draw::sample(&mut r);
            kp.map_visible(|_, p| d.apply(p, pivot, level, mode))
        }
        Application::PerJoint => {
            let draws: Vec<Draw> = (0..NUM_JOINTS).map(|_| Draw::sample(&mut r)).collect();
            kp.map_visible(|j, p| draws[j].apply(p, pivot, level, mode))
        }
    }
}

/// Percentage of grid cells whose quantized predicted error changes when
/// the input frames are perturbed.
#[allow(clippy::too_many_arguments)]
pub fn perturb_robustness(
    net: &PerceptionNet,
    g: &ViewGrid,
    frames: &[Keypoints2D],
    level: Level,
    mode: PerturbMode,
    app: Application,
    bins: usize,
    seed: u64,
) -> Result<RobustnessReport> {
    if frames.is_empty() {
        return Err(Error::invalid("no frames"));
    }
    let (mut changed, mut total, mut used, mut excluded) = (0usize, 0usize, 0usize, 0usize);
    for (i, kp) in frames.iter().enumerate() {
        let perturbed = perturb_frame(kp, level, mode, app, rng::derive(seed, i as u64));
        let (a, b) = match (normalize_keypoints(kp), normalize_keypoints(&perturbed)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => {
                excluded += 1;
                continue;
            }
        };
        let qa = quantize_bins(&net.predict_field(&a, g)?, bins)?;
        let qb = quantize_bins(&net.predict_field(&b, g)?, bins)?;
        changed += qa.iter().zip(&qb).filter(|(x, y)| x != y).count();
        total += qa.len();
        used += 1;
    }
    if excluded > 0 {
        log::info!("robustness: excluded {excluded} of {} frames", frames.len());
    }
    let percent_changed = if total == 0 { 0.0 } else { 100.0 * changed as f64 / total as f64 };
    Ok(RobustnessReport { percent_changed, frames_used: used, frames_excluded: excluded })
}

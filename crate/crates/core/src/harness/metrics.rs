use crate::skeleton::{CameraView, Joint, Keypoints2D, Skeleton3D, NUM_JOINTS};

/// PCK threshold as a fraction of the projected spine length.
pub const PCK_ALPHA: f64 = 0.2;

/// Fraction of ground-truth joints in frame whose detection lies within
/// `threshold` pixels. Dropped joints count as misses.
pub fn pck(truth: &Keypoints2D, det: &Keypoints2D, threshold: f64) -> f64 {
    let n = truth.visible_count();
    if n == 0 {
        return 0.0;
    }
    let hits = (0..NUM_JOINTS).filter(|&j| truth.visible[j] && det.visible[j] && dist(truth.points[j], det.points[j]) <= threshold).count();
    hits as f64 / n as f64
}

/// Mean squared pixel error over joints both in frame and detected.
pub fn keypoint_mse(truth: &Keypoints2D, det: &Keypoints2D) -> Option<f64> {
    let d: Vec<f64> = (0..NUM_JOINTS).filter(|&j| truth.visible[j] && det.visible[j]).map(|j| dist(truth.points[j], det.points[j]).powi(2)).collect();
    (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
}

/// Pixel length of the neck to mid-hip segment, from the pinhole projection
/// even when an end point falls outside the frame.
pub fn spine_pixels(s: &Skeleton3D, cam: &CameraView) -> f64 {
    match (cam.project_point(&s.joint(Joint::Neck)), cam.project_point(&s.joint(Joint::MidHip))) {
        (Some(a), Some(b)) => dist(a, b),
        _ => 0.0,
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Scores and safety record of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub scenario: String,
    pub mode: String,
    pub pck: Vec<f64>,
    /// `None` on ticks where no joint was both in frame and detected.
    pub mse: Vec<Option<f64>>,
    pub mean_pck: f64,
    pub mean_mse: f64,
    /// Ticks with at least one joint hidden by an obstacle.
    pub occlusion_ticks: usize,
    /// Ticks on which the rank-1 view of the field was infeasible.
    pub fallback_ticks: usize,
    pub collisions: usize,
    /// Smallest obstacle clearance seen by the drone, meters.
    pub min_clearance: f64,
}

impl EpisodeMetrics {
    pub(crate) fn new(scenario: &str, mode: &str) -> Self {
        EpisodeMetrics {
            scenario: scenario.to_string(),
            mode: mode.to_string(),
            pck: Vec::new(),
            mse: Vec::new(),
            mean_pck: 0.0,
            mean_mse: 0.0,
            occlusion_ticks: 0,
            fallback_ticks: 0,
            collisions: 0,
            min_clearance: f64::INFINITY,
        }
    }

    pub(crate) fn finish(&mut self) {
        self.mean_pck = mean(self.pck.iter().copied());
        self.mean_mse = mean(self.mse.iter().flatten().copied());
    }

    pub fn ticks(&self) -> usize {
        self.pck.len()
    }

    /// Ticks that contribute to the MSE mean.
    pub fn mse_ticks(&self) -> usize {
        self.mse.iter().flatten().count()
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, P3};
use crate::pesdf::{esdf_from_occupancy, Esdf, Lattice, OccupancyGrid};
use crate::skeleton::{DetectorParams, Joint, PoseParams, Skeleton3D};

const BUNDLED: [(&str, &str); 3] = [
    ("challenging-pose", include_str!("../../scenarios/challenging-pose.toml")),
    ("large-scale", include_str!("../../scenarios/large-scale.toml")),
    ("dense", include_str!("../../scenarios/dense.toml")),
];

/// Minimum horizontal gap between the subject's root path and obstacles.
const SUBJECT_CLEARANCE: f64 = 0.5;
const PATH_CHECK_STEP: f64 = 0.1;

fn default_tick_rate() -> f64 {
    15.0
}

fn default_resolution() -> f64 {
    0.2
}

fn default_height() -> f64 {
    1.8
}

fn default_amplitude() -> f64 {
    0.5
}

/// A closed-loop simulation setup: static obstacles, a scripted subject and
/// the drone's start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Seconds.
    pub duration: f64,
    #[serde(default = "default_tick_rate")]
    pub tick_rate: f64,
    #[serde(default)]
    pub seed: u64,
    pub environment: Environment,
    pub subject: SubjectScript,
    pub drone: DroneStart,
    #[serde(default)]
    pub detector: DetectorParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    pub min: [f64; 3],
    pub max: [f64; 3],
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default)]
    pub columns: Vec<Column>,
    #[serde(default)]
    pub boxes: Vec<BoxObstacle>,
}

/// Vertical cylinder standing on the ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Column {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxObstacle {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Posture {
    TPose,
    RaisedRightArm,
    Walking,
}

/// Subject state at a point in time. Position and heading are interpolated
/// linearly between keyframes; posture switches at each keyframe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub time: f64,
    /// Ground position of the mid-hip, meters.
    pub position: [f64; 2],
    #[serde(default)]
    pub heading: f64,
    pub posture: Posture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectScript {
    #[serde(default = "default_height")]
    pub height: f64,
    /// Gait phase rate while walking, rad/s.
    #[serde(default)]
    pub gait_rate: f64,
    #[serde(default = "default_amplitude")]
    pub gait_amplitude: f64,
    pub keyframes: Vec<Keyframe>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroneStart {
    pub start: [f64; 3],
}

/// Occupancy and distance field of a scenario's static obstacles.
#[derive(Debug, Clone)]
pub struct World {
    pub occupancy: OccupancyGrid,
    pub esdf: Esdf,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| Error::format(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format(e.to_string()))
    }

    /// The three scenarios shipped with the crate.
    pub fn bundled() -> Vec<Scenario> {
        BUNDLED.iter().map(|(_, t)| Self::from_toml(t).expect("bundled scenario")).collect()
    }

    pub fn bundled_named(name: &str) -> Option<Scenario> {
        BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| Self::from_toml(t).expect("bundled scenario"))
    }

    pub fn n_ticks(&self) -> usize {
        (self.duration * self.tick_rate).round() as usize
    }

    pub fn tick_dt(&self) -> f64 {
        1.0 / self.tick_rate
    }

    pub fn lattice(&self) -> Result<Lattice> {
        let e = &self.environment;
        Lattice::covering(P3::from(e.min), P3::from(e.max), e.resolution)
    }

    /// Whether `p` lies inside the environment box.
    pub fn contains(&self, p: &P3) -> bool {
        let e = &self.environment;
        (0..3).all(|a| p[a] >= e.min[a] && p[a] <= e.max[a])
    }

    pub fn occupancy(&self) -> Result<OccupancyGrid> {
        let mut g = OccupancyGrid::empty(self.lattice()?);
        for c in &self.environment.columns {
            g.add_column(c.x, c.y, c.radius, c.height);
        }
        for b in &self.environment.boxes {
            g.add_box(P3::from(b.min), P3::from(b.max));
        }
        Ok(g)
    }

    pub fn build_world(&self) -> Result<World> {
        let occupancy = self.occupancy()?;
        let esdf = esdf_from_occupancy(&occupancy)?;
        Ok(World { occupancy, esdf })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::invalid(format!("duration {} must be positive", self.duration)));
        }
        if !(self.tick_rate > 0.0 && self.tick_rate.is_finite()) || self.n_ticks() == 0 {
            return Err(Error::invalid("tick rate must give at least one tick"));
        }
        let e = &self.environment;
        if !(e.resolution > 0.0) || (0..3).any(|a| !(e.max[a] > e.min[a])) {
            return Err(Error::invalid("environment needs max > min and a positive resolution"));
        }
        if e.columns.iter().any(|c| !(c.radius > 0.0 && c.height > 0.0)) {
            return Err(Error::invalid("columns need positive radius and height"));
        }
        self.detector.validate()?;
        if !(1.0..=2.2).contains(&self.subject.height) {
            return Err(Error::invalid(format!("subject height {} outside [1.0, 2.2]", self.subject.height)));
        }
        let k = &self.subject.keyframes;
        if k.is_empty() {
            return Err(Error::invalid("subject script needs at least one keyframe"));
        }
        if k.windows(2).any(|w| !(w[1].time > w[0].time)) {
            return Err(Error::invalid("keyframe times must be strictly increasing"));
        }
        for f in k {
            if !self.contains(&P3::new(f.position[0], f.position[1], e.min[2])) {
                return Err(Error::invalid(format!("keyframe at t={} leaves the environment", f.time)));
            }
        }
        if !self.contains(&P3::from(self.drone.start)) {
            return Err(Error::invalid("drone start outside the environment"));
        }
        let last = k[k.len() - 1].time.max(self.duration);
        let steps = (last / PATH_CHECK_STEP).ceil() as usize;
        for s in 0..=steps {
            let t = s as f64 * PATH_CHECK_STEP;
            let ([x, y], _, _) = self.subject_at(t);
            if self.blocked_near(x, y, SUBJECT_CLEARANCE) {
                return Err(Error::invalid(format!("subject path runs into an obstacle at t={t:.1}")));
            }
        }
        Ok(())
    }

    /// Whether an obstacle comes within `margin` of the vertical line at `(x, y)`.
    fn blocked_near(&self, x: f64, y: f64, margin: f64) -> bool {
        let e = &self.environment;
        e.columns.iter().any(|c| (c.x - x).hypot(c.y - y) < c.radius + margin)
            || e.boxes.iter().any(|b| x > b.min[0] - margin && x < b.max[0] + margin && y > b.min[1] - margin && y < b.max[1] + margin)
    }

    /// Interpolated ground position, heading and active keyframe at `t`.
    fn subject_at(&self, t: f64) -> ([f64; 2], f64, &Keyframe) {
        let k = &self.subject.keyframes;
        let i = k.iter().rposition(|f| f.time <= t).unwrap_or(0);
        let a = &k[i];
        match k.get(i + 1) {
            Some(b) if t >= a.time => {
                let s = (t - a.time) / (b.time - a.time);
                let lerp = |x: f64, y: f64| x + (y - x) * s;
                ([lerp(a.position[0], b.position[0]), lerp(a.position[1], b.position[1])], a.heading + wrap_angle(b.heading - a.heading) * s, a)
            }
            _ => (a.position, a.heading, a),
        }
    }

    /// Pose parameters of the subject at time `t`.
    pub fn subject_params(&self, t: f64, base: &Skeleton3D) -> PoseParams {
        let (pos, heading, a) = self.subject_at(t);
        let mut p = match a.posture {
            Posture::TPose => PoseParams::identity_for(base),
            Posture::RaisedRightArm => PoseParams::raised_right_arm(base),
            Posture::Walking => PoseParams::walking(base, self.subject.gait_rate * t, self.subject.gait_amplitude),
        };
        p.root_position = P3::new(pos[0], pos[1], base.joint(Joint::MidHip).z);
        p.heading = wrap_angle(heading);
        p
    }
}

use crate::error::{Error, Result};
use crate::geometry::{P3, V3};
use crate::pesdf::{Esdf, Pesdf};
use crate::viewsphere::ViewGrid;

pub const DEFAULT_HORIZON: usize = 10;
pub const DEFAULT_DT: f64 = 0.2;

/// Waypoints at a uniform timestep. The first waypoint is fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<P3>,
    pub dt: f64,
}

impl Trajectory {
    pub fn new(points: Vec<P3>, dt: f64) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::invalid("trajectory needs at least 3 waypoints"));
        }
        if !(dt > 0.0) {
            return Err(Error::invalid("timestep must be positive"));
        }
        if points.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("non-finite waypoint"));
        }
        Ok(Trajectory { points, dt })
    }

    /// Equally spaced straight line from `start` toward `goal`, ending at
    /// most `max_len` away from `start`.
    pub fn straight(start: P3, goal: P3, m: usize, dt: f64, max_len: f64) -> Result<Self> {
        let d = goal - start;
        let end = if d.norm() > max_len { start + d * (max_len / d.norm()) } else { goal };
        Self::new((0..=m).map(|k| start + (end - start) * (k as f64 / m as f64)).collect(), dt)
    }

    pub fn start(&self) -> P3 {
        self.points[0]
    }

    pub fn end(&self) -> P3 {
        *self.points.last().unwrap()
    }

    pub fn max_speed(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).fold(0.0, f64::max) / self.dt
    }

    pub fn duration(&self) -> f64 {
        self.dt * (self.points.len() - 1) as f64
    }

    /// Position at time `t`, linear between waypoints, clamped to the ends.
    pub fn position_at(&self, t: f64) -> P3 {
        let s = (t / self.dt).clamp(0.0, (self.points.len() - 1) as f64);
        let k = (s.floor() as usize).min(self.points.len() - 2);
        let f = s - k as f64;
        self.points[k] + (self.points[k + 1] - self.points[k]) * f
    }

    /// Point `s` meters along the polyline, clamped to the ends.
    pub fn point_at_distance(&self, s: f64) -> P3 {
        let mut left = s.max(0.0);
        for w in self.points.windows(2) {
            let l = (w[1] - w[0]).norm();
            if left <= l {
                return if l > 0.0 { w[0] + (w[1] - w[0]) * (left / l) } else { w[0] };
            }
            left -= l;
        }
        self.end()
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub lambda_p: f64,
    /// Pose penalty activates where `Ξ <= rho`.
    pub rho: f64,
    pub lambda_s: f64,
    pub lambda_c: f64,
    /// Clearance below which the collision penalty activates, meters.
    pub d_col: f64,
    pub v_max: f64,
    pub max_iters: usize,
    /// Initial line-search step.
    pub step: f64,
    /// Stop when the gradient norm falls below this.
    pub tol: f64,
    /// Error margin a new best view needs to displace the current one.
    pub hysteresis: f64,
    pub k_candidates: usize,
    pub horizon: usize,
    pub dt: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            lambda_p: 1.0,
            rho: 4.5,
            lambda_s: 1.0,
            lambda_c: 10.0,
            d_col: 1.0,
            v_max: 3.0,
            max_iters: 60,
            step: 0.05,
            tol: 1e-6,
            hysteresis: 0.1,
            k_candidates: 12,
            horizon: DEFAULT_HORIZON,
            dt: DEFAULT_DT,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.lambda_p, self.lambda_s, self.lambda_c, self.d_col].iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("planner weights must be non-negative"));
        }
        if !(self.rho > 0.0 && self.hysteresis > 0.0 && self.v_max > 0.0 && self.step > 0.0 && self.dt > 0.0) {
            return Err(Error::invalid("rho, hysteresis, v_max, step and dt must be positive"));
        }
        if self.k_candidates == 0 || self.horizon < 2 {
            return Err(Error::invalid("need k_candidates >= 1 and horizon >= 2"));
        }
        Ok(())
    }

    /// Whether `k_candidates` fits the grid.
    pub fn check_grid(&self, g: &ViewGrid) -> Result<()> {
        if self.k_candidates > g.len() {
            return Err(Error::invalid(format!("k_candidates {} exceeds grid size {}", self.k_candidates, g.len())));
        }
        Ok(())
    }
}

/// One-sided quadratic hinge `(x - t)^2 / (2t)` below `t`, and its slope.
pub fn hinge(x: f64, t: f64) -> (f64, f64) {
    if x.is_nan() {
        (f64::NAN, f64::NAN)
    } else if x <= t {
        ((x - t) * (x - t) / (2.0 * t), (x - t) / t)
    } else {
        (0.0, 0.0)
    }
}

/// `λ_p Σ c(Ξ(p_k))` over every waypoint, with gradient per waypoint.
pub fn cost_pose(t: &Trajectory, p: &Pesdf, cfg: &PlannerConfig) -> (f64, Vec<V3>) {
    hinge_cost(t, cfg.lambda_p, cfg.rho, |x| p.sample_clamped(x))
}

/// Collision hinge on obstacle clearance with threshold `d_col`.
pub fn cost_collide(t: &Trajectory, e: &Esdf, cfg: &PlannerConfig) -> (f64, Vec<V3>) {
    hinge_cost(t, cfg.lambda_c, cfg.d_col, |x| e.sample_clamped(x))
}

fn hinge_cost(t: &Trajectory, weight: f64, threshold: f64, field: impl Fn(&P3) -> (f64, V3)) -> (f64, Vec<V3>) {
    let mut grad = vec![V3::zeros(); t.points.len()];
    if weight == 0.0 || threshold <= 0.0 {
        return (0.0, grad);
    }
    let mut j = 0.0;
    for (k, p) in t.points.iter().enumerate() {
        let (v, g) = field(p);
        let (c, dc) = hinge(v, threshold);
        j += weight * c;
        grad[k] = g * (weight * dc);
    }
    (j, grad)
}

/// `λ_s Σ |p_{k+1} - 2 p_k + p_{k-1}|^2`.
pub fn cost_smooth(t: &Trajectory, cfg: &PlannerConfig) -> (f64, Vec<V3>) {
    let pts = &t.points;
    let mut grad = vec![V3::zeros(); pts.len()];
    let mut j = 0.0;
    for k in 1..pts.len() - 1 {
        let a: V3 = pts[k + 1].coords - pts[k].coords * 2.0 + pts[k - 1].coords;
        j += cfg.lambda_s * a.norm_squared();
        let g = a * (2.0 * cfg.lambda_s);
        grad[k + 1] += g;
        grad[k] -= g * 2.0;
        grad[k - 1] += g;
    }
    (j, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub smooth: f64,
    pub collide: f64,
    pub pose: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.smooth + self.collide + self.pose
    }
}

pub fn total_cost(t: &Trajectory, p: &Pesdf, e: &Esdf, cfg: &PlannerConfig) -> (CostBreakdown, Vec<V3>) {
    let (js, mut g) = cost_smooth(t, cfg);
    let (jc, gc) = cost_collide(t, e, cfg);
    let (jp, gp) = cost_pose(t, p, cfg);
    for k in 0..g.len() {
        g[k] += gc[k] + gp[k];
    }
    (CostBreakdown { smooth: js, collide: jc, pose: jp }, g)
}

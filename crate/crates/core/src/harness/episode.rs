use std::f64::consts::{FRAC_PI_2, PI};

use super::metrics::{keypoint_mse, pck, spine_pixels, EpisodeMetrics, PCK_ALPHA};
use super::scenario::{Scenario, World};
use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, spherical_dir, wrap_angle, P3, V3};
use crate::normalize::normalize_keypoints;
use crate::pesdf::{error_to_volume, merge, Esdf, Field3, Lattice, MergeParams, Pesdf, VolumeParams};
use crate::planner::{feasible, line_of_sight, optimize, select_viewpoint, PlannerConfig, SubjectState, TickRecord, Trajectory};
use crate::poseerrnet::PerceptionNet;
use crate::rng::derive;
use crate::skeleton::{animate, build_canonical_skeleton, detect_with_occlusion, project, CameraView, Joint, Skeleton3D, NUM_JOINTS};
use crate::viewsphere::{elevation_center, make_grid, ErrorField, ViewGrid, DEFAULT_N_AZ, DEFAULT_N_EL, DEFAULT_RADIUS};

/// Planning window around the subject, meters. The window spans the ground
/// up to the top of the view hemisphere.
pub const WINDOW_EXTENT: [f64; 3] = [16.0, 16.0, 7.0];
/// Ticks a stale error field may be reused after normalization fails.
pub const MAX_STALE_TICKS: usize = 10;
/// Radius of the keep-out cylinder around the subject, meters.
pub const SUBJECT_RADIUS: f64 = 0.5;
/// Closer than this to the subject's axis counts as a collision.
pub const SUBJECT_CONTACT: f64 = 0.3;

/// Where the error field comes from on each tick.
#[derive(Debug, Clone)]
pub enum Guidance<'a> {
    /// Predict from the normalized detection.
    Net(&'a PerceptionNet),
    /// A fixed field in the subject frame, e.g. an oracle.
    Field(ErrorField),
}

/// Camera policy of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Ours,
    Front,
    Side,
    Back,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Front, Mode::Side, Mode::Back, Mode::Ours];
    pub const BASELINES: [Mode; 3] = [Mode::Front, Mode::Side, Mode::Back];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Ours => "ours",
            Mode::Front => "front",
            Mode::Side => "side",
            Mode::Back => "back",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Fixed bearing relative to the subject heading; `None` for the planner.
    pub fn bearing(self) -> Option<f64> {
        match self {
            Mode::Ours => None,
            Mode::Front => Some(0.0),
            Mode::Side => Some(FRAC_PI_2),
            Mode::Back => Some(PI),
        }
    }
}

/// Elevation held by the fixed-bearing baselines.
pub fn baseline_elevation() -> f64 {
    elevation_center(DEFAULT_N_EL, 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub metrics: EpisodeMetrics,
    pub log: Vec<TickRecord>,
}

/// A scenario with its obstacle fields built once, ready to run episodes.
pub struct Simulator<'a> {
    pub scenario: &'a Scenario,
    pub world: World,
    pub grid: ViewGrid,
    base: Skeleton3D,
}

pub fn run_episode(sc: &Scenario, guidance: &Guidance, cfg: &PlannerConfig) -> Result<Episode> {
    Simulator::new(sc)?.run(Mode::Ours, guidance, cfg)
}

pub fn run_baseline(sc: &Scenario, mode: Mode, cfg: &PlannerConfig) -> Result<Episode> {
    if mode == Mode::Ours {
        return Err(Error::invalid("run_baseline needs a fixed-bearing mode"));
    }
    Simulator::new(sc)?.run(mode, &Guidance::Field(ErrorField::constant(&make_grid(DEFAULT_N_AZ, DEFAULT_N_EL, DEFAULT_RADIUS)?, 0.0)), cfg)
}

struct Plan {
    goal: P3,
    pesdf: Pesdf,
    rank: usize,
    azimuth: f64,
    elevation: f64,
    best_blocked: bool,
}

impl<'a> Simulator<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self> {
        scenario.validate()?;
        Ok(Simulator {
            scenario,
            world: scenario.build_world()?,
            grid: make_grid(DEFAULT_N_AZ, DEFAULT_N_EL, DEFAULT_RADIUS)?,
            base: build_canonical_skeleton(scenario.subject.height)?,
        })
    }

    /// Run one episode. `guidance` is only consulted in [`Mode::Ours`].
    pub fn run(&self, mode: Mode, guidance: &Guidance, cfg: &PlannerConfig) -> Result<Episode> {
        cfg.validate()?;
        cfg.check_grid(&self.grid)?;
        if let Guidance::Net(net) = guidance {
            if net.output_dim() != self.grid.len() {
                return Err(Error::invalid(format!("net predicts {} cells, grid has {}", net.output_dim(), self.grid.len())));
            }
        }
        if let Guidance::Field(f) = guidance {
            if f.n_az != self.grid.n_az || f.n_el != self.grid.n_el {
                return Err(Error::invalid("guidance field does not match the view grid"));
            }
        }
        let sc = self.scenario;
        let (occ, esdf) = (&self.world.occupancy, &self.world.esdf);
        let tick_dt = sc.tick_dt();
        let mut drone = P3::from(sc.drone.start);
        let mut metrics = EpisodeMetrics::new(&sc.name, mode.name());
        let mut log = Vec::with_capacity(sc.n_ticks());
        let mut last_field: Option<ErrorField> = None;
        let mut stale = 0;
        let mut current: Option<usize> = None;

        for tick in 0..sc.n_ticks() {
            let params = sc.subject_params(tick as f64 * tick_dt, &self.base);
            let skel = animate(&self.base, &params)?;
            let center = skel.center();
            let subject = SubjectState { center, heading: params.heading, head: skel.joint(Joint::Nose) };
            let root = params.root_position;

            // Observe from where the drone is now, and score the observation.
            let cam = CameraView::from_position(drone, center, self.grid.intrinsics)?;
            let mut hidden = [false; NUM_JOINTS];
            for (h, j) in hidden.iter_mut().zip(&skel.joints) {
                *h = !line_of_sight(&drone, j, occ)?;
            }
            let kp = detect_with_occlusion(&skel, &cam, &sc.detector, &hidden, derive(sc.seed, tick as u64));
            let truth = project(&skel, &cam);
            metrics.pck.push(pck(&truth, &kp, PCK_ALPHA * spine_pixels(&skel, &cam)));
            metrics.mse.push(keypoint_mse(&truth, &kp));
            metrics.occlusion_ticks += hidden.iter().any(|&h| h) as usize;
            let here = clearance(esdf, &root, sc.subject.height, &drone);
            metrics.min_clearance = metrics.min_clearance.min(esdf.sample_clamped(&drone).0);
            if occ.occupied_at(&drone) || subject_distance(&root, sc.subject.height, &drone) < SUBJECT_CONTACT {
                metrics.collisions += 1;
            }

            // Plan.
            let window = esdf.field.lattice.aligned_window(P3::new(center.x, center.y, WINDOW_EXTENT[2] / 2.0), V3::from(WINDOW_EXTENT))?;
            let local = local_esdf(esdf, &window, &root, sc.subject.height);
            let mut tick_cfg = cfg.clone();
            let plan = match mode.bearing() {
                Some(b) => {
                    tick_cfg.lambda_p = 0.0;
                    let el = baseline_elevation();
                    let goal = self.clamp_inside(center + spherical_dir(params.heading + b, el) * self.grid.radius);
                    let flat = Lattice::new(window.origin, window.res, [2, 2, 2])?;
                    Some(Plan { goal, pesdf: Pesdf { field: Field3::from_fn(flat, |_| 0.0), lambda: 1.0 }, rank: 0, azimuth: wrap_angle(b), elevation: el, best_blocked: false })
                }
                None => {
                    let field = match guidance {
                        Guidance::Field(f) => Some(f.clone()),
                        Guidance::Net(net) => match normalize_keypoints(&kp) {
                            Ok(x) => {
                                stale = 0;
                                last_field = Some(net.predict_field(&x, &self.grid)?);
                                last_field.clone()
                            }
                            Err(Error::Normalization(_)) => {
                                stale += 1;
                                if stale <= MAX_STALE_TICKS {
                                    last_field.clone()
                                } else {
                                    None
                                }
                            }
                            Err(e) => return Err(e),
                        },
                    };
                    match field {
                        Some(f) => self.plan_view(&f, &subject, &window, &local, cfg, &mut current)?,
                        None => None,
                    }
                }
            };

            let (next, costs, iterations, rank, azimuth, elevation) = match plan {
                Some(p) => {
                    metrics.fallback_ticks += p.best_blocked as usize;
                    let t0 = initial_trajectory(drone, p.goal, cfg, tick_dt)?;
                    let res = optimize(&t0, &p.pesdf, &local, &tick_cfg)?;
                    (res.trajectory.point_at_distance(cfg.v_max * tick_dt), res.costs, res.iterations, p.rank, p.azimuth, p.elevation)
                }
                None => (drone, Default::default(), 0, 0, f64::NAN, f64::NAN),
            };
            // Never step deeper into the safety margin.
            let there = clearance(esdf, &root, sc.subject.height, &next);
            let next = if there < cfg.d_col / 2.0 && there < here { drone } else { next };
            if !sc.contains(&next) {
                return Err(Error::EpisodeAbort { tick, reason: format!("drone left the environment at {next}") });
            }
            log.push(TickRecord {
                tick,
                subject: center,
                rank,
                azimuth,
                elevation,
                drone,
                j_smooth: costs.smooth,
                j_collide: costs.collide,
                j_pose: costs.pose,
                iterations,
            });
            drone = next;
        }
        metrics.finish();
        Ok(Episode { metrics, log })
    }

    fn plan_view(&self, f: &ErrorField, subject: &SubjectState, window: &Lattice, local: &Esdf, cfg: &PlannerConfig, current: &mut Option<usize>) -> Result<Option<Plan>> {
        let (occ, esdf) = (&self.world.occupancy, &self.world.esdf);
        let sel = match select_viewpoint(f, &self.grid, subject, occ, esdf, cfg, *current) {
            Ok(s) => s,
            Err(Error::NoViewpoint { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        *current = Some(sel.cell);
        let best = crate::viewsphere::best_views(f, 1)?[0].0;
        let best_blocked = !feasible(&self.grid.view_at(best, subject.center, subject.heading).position(), &subject.head, occ, esdf, cfg);
        let ev = error_to_volume(f, subject.center, subject.heading, *window, &VolumeParams::default())?;
        let pesdf = merge(&ev, local, &MergeParams::default())?;
        let v = &self.grid.views[sel.cell];
        Ok(Some(Plan { goal: sel.position(), pesdf, rank: sel.rank, azimuth: v.azimuth, elevation: v.elevation, best_blocked }))
    }

    /// Pull `p` inside the environment by half a meter on every side.
    fn clamp_inside(&self, p: P3) -> P3 {
        let e = &self.scenario.environment;
        P3::from(std::array::from_fn::<f64, 3, _>(|a| p[a].clamp(e.min[a] + 0.5, e.max[a] - 0.5)))
    }
}

/// Straight path toward `goal`, cut to what the drone can fly in one
/// planning horizon.
fn initial_trajectory(from: P3, goal: P3, cfg: &PlannerConfig, tick_dt: f64) -> Result<Trajectory> {
    let max_len = cfg.v_max * cfg.horizon as f64 * cfg.dt;
    let len = (goal - from).norm().min(max_len);
    Trajectory::straight(from, goal, cfg.horizon, (len / cfg.v_max).max(tick_dt) / cfg.horizon as f64, max_len)
}

/// Horizontal-ish distance from `p` to the subject's vertical axis segment.
fn subject_distance(root: &P3, height: f64, p: &P3) -> f64 {
    point_segment_distance(p, &P3::new(root.x, root.y, 0.0), &P3::new(root.x, root.y, height))
}

fn clearance(esdf: &Esdf, root: &P3, height: f64, p: &P3) -> f64 {
    esdf.sample_clamped(p).0.min((subject_distance(root, height, p) - SUBJECT_RADIUS).max(0.0))
}

/// Obstacle distance on `window`, with the subject treated as a cylinder.
fn local_esdf(esdf: &Esdf, window: &Lattice, root: &P3, height: f64) -> Esdf {
    let mut field = esdf.field.resample(window);
    for (i, v) in field.values.iter_mut().enumerate() {
        let d = (subject_distance(root, height, &window.center_of(i)) - SUBJECT_RADIUS).max(0.0);
        *v = v.min(d);
    }
    Esdf { field, d_max: esdf.d_max }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::write_tick_log;
    use crate::skeleton::{DetectorParams, PoseParams};
    use crate::viewsphere::compute_field;

    fn open_floor(posture: &str, duration: f64, start: [f64; 3], detector: &str) -> Scenario {
        Scenario::from_toml(&format!(
            r#"
name = "open"
duration = {duration}
seed = 5
{detector}

[environment]
min = [-8.0, -8.0, 0.0]
max = [8.0, 8.0, 8.0]

[subject]
keyframes = [{{ time = 0.0, position = [0.0, 0.0], heading = 0.4, posture = "{posture}" }}]

[drone]
start = [{}, {}, {}]
"#,
            start[0], start[1], start[2]
        ))
        .unwrap()
    }

    fn oracle(posture: PoseParams) -> ErrorField {
        let base = build_canonical_skeleton(1.8).unwrap();
        let s = animate(&base, &posture).unwrap();
        compute_field(&s, &make_grid(DEFAULT_N_AZ, DEFAULT_N_EL, DEFAULT_RADIUS).unwrap(), &DetectorParams::default(), 60, 3).unwrap()
    }

    fn tpose_field() -> ErrorField {
        let base = build_canonical_skeleton(1.8).unwrap();
        oracle(PoseParams::identity_for(&base))
    }

    #[test]
    fn oracle_guidance_reaches_best_view() {
        let sc = open_floor("t-pose", 6.0, [-4.0, 3.0, 2.0], "");
        let sim = Simulator::new(&sc).unwrap();
        let f = tpose_field();
        let ep = sim.run(Mode::Ours, &Guidance::Field(f.clone()), &PlannerConfig::default()).unwrap();
        let last = ep.log.last().unwrap();
        let d = last.drone - last.subject;
        let heading = sc.subject.keyframes[0].heading;
        let cell = sim.grid.cell_of(d.y.atan2(d.x) - heading, d.z.atan2(d.xy().norm()));
        let best = crate::viewsphere::best_views(&f, 1).unwrap()[0].0;
        assert!(sim.grid.neighborhood(best).contains(&cell), "ended in cell {cell}, best {best}");
        assert_eq!(ep.metrics.collisions, 0);
    }

    #[test]
    fn episodes_are_deterministic() {
        let sc = Scenario::bundled_named("dense").unwrap();
        let sc = Scenario { duration: 3.0, ..sc };
        let f = tpose_field();
        let log = || {
            let ep = run_episode(&sc, &Guidance::Field(f.clone()), &PlannerConfig::default()).unwrap();
            let mut buf = Vec::new();
            write_tick_log(&mut buf, &ep.log).unwrap();
            (buf, ep.metrics)
        };
        let (a, ma) = log();
        let (b, mb) = log();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
    }

    #[test]
    fn noiseless_open_floor_scores_perfectly() {
        let det = "[detector]\nsigma_visible = 0.0\nsigma_occluded = 0.0\ndrop_prob = 0.0";
        let sc = open_floor("t-pose", 1.0, [4.0, 1.0, 2.0], det);
        let sim = Simulator::new(&sc).unwrap();
        for m in Mode::ALL {
            let ep = sim.run(m, &Guidance::Field(tpose_field()), &PlannerConfig::default()).unwrap();
            assert!(ep.metrics.pck.iter().all(|&p| p == 1.0), "{}", m.name());
            assert_eq!(ep.metrics.mean_mse, 0.0);
        }
    }

    #[test]
    fn front_beats_back_on_a_frontal_pose() {
        let sc = open_floor("raised-right-arm", 4.0, [4.0, 1.0, 2.0], "");
        let cfg = PlannerConfig::default();
        let front = run_baseline(&sc, Mode::Front, &cfg).unwrap().metrics;
        let back = run_baseline(&sc, Mode::Back, &cfg).unwrap().metrics;
        assert!(front.mean_pck >= back.mean_pck, "{} < {}", front.mean_pck, back.mean_pck);
        assert!(run_baseline(&sc, Mode::Ours, &cfg).is_err());
    }

    #[test]
    fn obstacles_are_kept_at_a_distance() {
        let sc = Scenario::bundled_named("dense").unwrap();
        let sc = Scenario { duration: 6.0, ..sc };
        let sim = Simulator::new(&sc).unwrap();
        let cfg = PlannerConfig::default();
        for m in Mode::ALL {
            let ep = sim.run(m, &Guidance::Field(tpose_field()), &cfg).unwrap();
            assert_eq!(ep.metrics.collisions, 0, "{}", m.name());
            assert!(ep.metrics.min_clearance >= cfg.d_col / 2.0, "{} {}", m.name(), ep.metrics.min_clearance);
            let mse: Vec<f64> = ep.metrics.mse.iter().flatten().copied().collect();
            let mean = mse.iter().sum::<f64>() / mse.len() as f64;
            assert!((ep.metrics.mean_mse - mean).abs() < 1e-9);
            assert!(ep.metrics.pck.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn guidance_must_match_the_grid() {
        let sc = open_floor("t-pose", 1.0, [4.0, 1.0, 2.0], "");
        let small = ErrorField::new(4, 2, DEFAULT_RADIUS, vec![0.0; 8]).unwrap();
        assert!(matches!(run_episode(&sc, &Guidance::Field(small), &PlannerConfig::default()), Err(Error::InvalidArgument(_))));
    }
}

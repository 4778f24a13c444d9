use std::io::Write;

use super::cost::PlannerConfig;
use super::los::{in_grid_bounds, line_of_sight};
use crate::error::{Error, Result};
use crate::geometry::P3;
use crate::pesdf::{Esdf, OccupancyGrid};
use crate::skeleton::CameraView;
use crate::viewsphere::{best_views, ErrorField, ViewGrid};

/// What the planner needs to know about the subject at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectState {
    /// Torso center, the point cameras look at.
    pub center: P3,
    pub heading: f64,
    /// Sightline target for the occlusion check.
    pub head: P3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub cell: usize,
    /// 1-based position of `cell` in the field's ascending error order.
    pub rank: usize,
    pub view: CameraView,
}

impl Selection {
    pub fn position(&self) -> P3 {
        self.view.position()
    }
}

/// Whether a camera at `pos` can see `head` and keeps `d_col` clearance.
pub fn feasible(pos: &P3, head: &P3, occ: &OccupancyGrid, esdf: &Esdf, cfg: &PlannerConfig) -> bool {
    in_grid_bounds(occ, pos) && esdf.sample_clamped(pos).0 >= cfg.d_col && line_of_sight(pos, head, occ).unwrap_or(false)
}

fn rank_of(f: &ErrorField, cell: usize) -> usize {
    let v = f.values[cell];
    1 + f.values.iter().enumerate().filter(|&(i, &w)| w < v || (w == v && i < cell)).count()
}

/// Best feasible view among the `k_candidates` lowest-error cells, with
/// hysteresis in favour of `current`.
pub fn select_viewpoint(
    f: &ErrorField,
    g: &ViewGrid,
    subject: &SubjectState,
    occ: &OccupancyGrid,
    esdf: &Esdf,
    cfg: &PlannerConfig,
    current: Option<usize>,
) -> Result<Selection> {
    cfg.check_grid(g)?;
    if f.n_az != g.n_az || f.n_el != g.n_el {
        return Err(Error::invalid("field and grid shapes differ"));
    }
    let view = |cell: usize| g.view_at(cell, subject.center, subject.heading);
    let ok = |cell: usize| feasible(&view(cell).position(), &subject.head, occ, esdf, cfg);
    let candidates = best_views(f, cfg.k_candidates)?;
    let (cell, _) = candidates.iter().enumerate().find(|(_, (c, _))| ok(*c)).map(|(_, &c)| c).ok_or(Error::NoViewpoint { candidates: cfg.k_candidates })?;
    let chosen = match current {
        Some(cur) if cur != cell && cur < f.values.len() && f.values[cur] - f.values[cell] < cfg.hysteresis && ok(cur) => cur,
        _ => cell,
    };
    Ok(Selection { cell: chosen, rank: rank_of(f, chosen), view: view(chosen) })
}

/// One planner tick as logged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord {
    pub tick: usize,
    pub subject: P3,
    pub rank: usize,
    pub azimuth: f64,
    pub elevation: f64,
    pub drone: P3,
    pub j_smooth: f64,
    pub j_collide: f64,
    pub j_pose: f64,
    pub iterations: usize,
}

pub const TICK_LOG_HEADER: &str =
    "tick,subject_x,subject_y,subject_z,rank,azimuth,elevation,drone_x,drone_y,drone_z,j_smooth,j_collide,j_pose,iterations";

pub fn write_tick_log<W: Write>(mut w: W, records: &[TickRecord]) -> Result<()> {
    writeln!(w, "{TICK_LOG_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.tick,
            r.subject.x,
            r.subject.y,
            r.subject.z,
            r.rank,
            r.azimuth,
            r.elevation,
            r.drone.x,
            r.drone.y,
            r.drone.z,
            r.j_smooth,
            r.j_collide,
            r.j_pose,
            r.iterations
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pesdf::{esdf_from_occupancy, Lattice};
    use crate::viewsphere::make_grid;

    fn world() -> OccupancyGrid {
        OccupancyGrid::empty(Lattice::new(P3::new(-8.0, -8.0, 0.0), 0.2, [81, 81, 41]).unwrap())
    }

    fn subject() -> SubjectState {
        SubjectState { center: P3::new(0.0, 0.0, 1.2), heading: 0.0, head: P3::new(0.1, 0.0, 1.65) }
    }

    fn field(g: &ViewGrid) -> ErrorField {
        let vals = (0..g.len()).map(|i| 1.0 + (i % 24) as f64 * 0.05 + (i / 24) as f64 * 0.01).collect();
        ErrorField::new(g.n_az, g.n_el, g.radius, vals).unwrap()
    }

    #[test]
    fn empty_world_picks_rank_one() {
        let g = make_grid(24, 8, 5.0).unwrap();
        let occ = world();
        let e = esdf_from_occupancy(&occ).unwrap();
        let s = select_viewpoint(&field(&g), &g, &subject(), &occ, &e, &PlannerConfig::default(), None).unwrap();
        assert_eq!((s.cell, s.rank), (0, 1));
    }

    #[test]
    fn scale_invariant_without_hysteresis() {
        let g = make_grid(24, 8, 5.0).unwrap();
        let occ = world();
        let e = esdf_from_occupancy(&occ).unwrap();
        let f = field(&g);
        let mut scaled = f.clone();
        scaled.values.iter_mut().for_each(|v| *v *= 3.7);
        let cfg = PlannerConfig { hysteresis: 1e-300, ..Default::default() };
        for cur in [None, Some(5), Some(30)] {
            let a = select_viewpoint(&f, &g, &subject(), &occ, &e, &cfg, cur).unwrap();
            let b = select_viewpoint(&scaled, &g, &subject(), &occ, &e, &cfg, cur).unwrap();
            assert_eq!(a.rank, b.rank);
        }
    }

    #[test]
    fn blocked_everywhere_is_an_error() {
        let g = make_grid(24, 8, 5.0).unwrap();
        let mut occ = world();
        // A shell around the head blocks every sightline.
        occ.fill(|p| ((p - P3::new(0.1, 0.0, 1.65)).norm() - 1.0).abs() < 0.15);
        let e = esdf_from_occupancy(&occ).unwrap();
        let r = select_viewpoint(&field(&g), &g, &subject(), &occ, &e, &PlannerConfig::default(), None);
        assert!(matches!(r, Err(Error::NoViewpoint { candidates: 12 })));
    }

    #[test]
    fn hysteresis_keeps_near_equal_choice() {
        let g = make_grid(24, 8, 5.0).unwrap();
        let occ = world();
        let e = esdf_from_occupancy(&occ).unwrap();
        let f = field(&g);
        let cfg = PlannerConfig::default();
        // Cell 1 is 0.05 worse than cell 0: within the margin.
        assert_eq!(select_viewpoint(&f, &g, &subject(), &occ, &e, &cfg, Some(1)).unwrap().cell, 1);
        // Cell 20 is 1.0 worse: replaced.
        assert_eq!(select_viewpoint(&f, &g, &subject(), &occ, &e, &cfg, Some(20)).unwrap().cell, 0);
    }

    #[test]
    fn tick_log_has_header_and_rows() {
        let r = TickRecord {
            tick: 3,
            subject: P3::new(1.0, 2.0, 1.1),
            rank: 2,
            azimuth: 0.5,
            elevation: 0.2,
            drone: P3::new(4.0, 2.0, 2.0),
            j_smooth: 0.1,
            j_collide: 0.0,
            j_pose: 1.5,
            iterations: 7,
        };
        let mut buf = Vec::new();
        write_tick_log(&mut buf, &[r, r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), TICK_LOG_HEADER.split(',').count());
    }
}

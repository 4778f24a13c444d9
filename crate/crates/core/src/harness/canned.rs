use crate::error::Result;
use crate::geometry::P3;
use crate::pesdf::{esdf_from_occupancy, Esdf, Lattice, OccupancyGrid};
use crate::planner::{select_viewpoint, PlannerConfig, SubjectState};
use crate::viewsphere::{make_grid, ErrorField, ViewGrid, DEFAULT_N_AZ, DEFAULT_N_EL, DEFAULT_RADIUS};

/// Field cell of the best view: just left of frontal, one row up.
pub const WALL_BEST_CELL: usize = DEFAULT_N_AZ;
/// Second-best cell, well clear of the wall.
pub const WALL_SECOND_CELL: usize = DEFAULT_N_AZ + 3;

/// A subject, a hand-made field with a clear best and second-best view, and
/// a wall that hides the subject's head from the best one.
pub struct WallScene {
    pub grid: ViewGrid,
    pub field: ErrorField,
    pub subject: SubjectState,
    pub walled: (OccupancyGrid, Esdf),
    pub open: (OccupancyGrid, Esdf),
}

impl WallScene {
    pub fn new() -> Result<Self> {
        let grid = make_grid(DEFAULT_N_AZ, DEFAULT_N_EL, DEFAULT_RADIUS)?;
        let values = (0..grid.len())
            .map(|i| match i {
                WALL_BEST_CELL => 0.0,
                WALL_SECOND_CELL => 0.3,
                _ => 1.0 + 0.001 * i as f64,
            })
            .collect();
        let field = ErrorField::new(grid.n_az, grid.n_el, grid.radius, values)?;
        let subject = SubjectState { center: P3::new(0.0, 0.0, 1.2), heading: 0.0, head: P3::new(0.1, 0.0, 1.65) };
        let lattice = Lattice::new(P3::new(-8.0, -8.0, 0.0), 0.2, [81, 81, 41])?;
        let open = OccupancyGrid::empty(lattice);
        let mut walled = open.clone();
        walled.add_box(P3::new(2.4, -0.8, 0.0), P3::new(2.8, 1.4, 3.5));
        Ok(WallScene {
            grid,
            field,
            subject,
            walled: (walled.clone(), esdf_from_occupancy(&walled)?),
            open: (open.clone(), esdf_from_occupancy(&open)?),
        })
    }

    /// Select a view every tick, the wall standing for the first `blocked`
    /// ticks and gone for the next `open` ticks. Returns the chosen ranks.
    pub fn run(&self, blocked: usize, open: usize, cfg: &PlannerConfig) -> Result<Vec<usize>> {
        let mut current = None;
        let mut ranks = Vec::with_capacity(blocked + open);
        for t in 0..blocked + open {
            let (occ, esdf) = if t < blocked { &self.walled } else { &self.open };
            let s = select_viewpoint(&self.field, &self.grid, &self.subject, occ, esdf, cfg, current)?;
            current = Some(s.cell);
            ranks.push(s.rank);
        }
        Ok(ranks)
    }
}

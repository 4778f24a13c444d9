//! Perception-aware trajectory optimization and viewpoint selection.

mod cost;
mod los;
mod optimize;
mod select;

pub use cost::{
    cost_collide, cost_pose, cost_smooth, hinge, total_cost, CostBreakdown, PlannerConfig, Trajectory, DEFAULT_DT, DEFAULT_HORIZON,
};
pub use los::{first_blocking_voxel, in_grid_bounds, line_of_sight, segment_box_overlap};
pub use optimize::{optimize, OptimizeResult};
pub use select::{feasible, select_viewpoint, write_tick_log, Selection, SubjectState, TickRecord, TICK_LOG_HEADER};

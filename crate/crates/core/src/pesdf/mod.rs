//! Occupancy, exact distance fields and the pose-enhanced distance field.
//!
//! All volumes share one lattice convention (see [`Lattice`]) so that a local
//! window around the vehicle can be cut from the world distance field
//! without interpolation error.

mod esdf;
mod field;
mod volume;

pub use esdf::{esdf_brute_force, esdf_from_occupancy, esdf_with_cap, Esdf, OccupancyGrid, DEFAULT_D_MAX};
pub use field::{read_field, write_field, write_slice_csv, Field3, Lattice};
pub use volume::{
    clearance_goodness, error_to_volume, goodness_at, merge, sample_field, ErrorVolume, MergeParams, Pesdf, VolumeParams,
    VOLUME_EXTENT, VOLUME_RES,
};

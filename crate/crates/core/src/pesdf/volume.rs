use std::f64::consts::{FRAC_PI_2, TAU};

use rayon::prelude::*;

use super::esdf::Esdf;
use super::field::{Field3, Lattice};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, P3, V3};
use crate::viewsphere::{ErrorField, D_MISS};

/// Extent of the local volume around the vehicle, meters.
pub const VOLUME_EXTENT: [f64; 3] = [10.0, 10.0, 5.0];
pub const VOLUME_RES: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VolumeParams {
    /// Goodness of a zero-error view.
    pub xi_max: f64,
    /// Errors at or above this map to zero goodness.
    pub e_cap: f64,
    /// Full goodness within this distance of the hemisphere radius.
    pub band: f64,
    /// Goodness then falls linearly to zero over this further distance.
    pub taper: f64,
}

impl Default for VolumeParams {
    fn default() -> Self {
        VolumeParams { xi_max: 5.0, e_cap: D_MISS, band: 1.0, taper: 1.0 }
    }
}

/// Per-voxel viewing goodness around a subject, higher is better.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorVolume {
    pub field: Field3,
    pub xi_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pesdf {
    pub field: Field3,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MergeParams {
    pub lambda: f64,
    /// Clearance at which the obstacle term saturates.
    pub d_safe: f64,
}

impl Default for MergeParams {
    fn default() -> Self {
        MergeParams { lambda: 0.5, d_safe: 2.0 }
    }
}

/// Bilinear lookup of a field at a subject-frame direction. Azimuth wraps,
/// elevation clamps to the outermost cell centers.
pub fn sample_field(f: &ErrorField, azimuth: f64, elevation: f64) -> f64 {
    let a = wrap_angle(azimuth) / TAU * f.n_az as f64 - 0.5;
    let a0 = a.floor();
    let ta = a - a0;
    let j0 = (a0 as i64).rem_euclid(f.n_az as i64) as usize;
    let j1 = (j0 + 1) % f.n_az;
    let e = (elevation / FRAC_PI_2 * f.n_el as f64 - 0.5).clamp(0.0, (f.n_el - 1) as f64);
    let i0 = (e.floor() as usize).min(f.n_el.saturating_sub(2));
    let i1 = (i0 + 1).min(f.n_el - 1);
    let te = e - i0 as f64;
    let row = |i: usize| f.get(i, j0) * (1.0 - ta) + f.get(i, j1) * ta;
    row(i0) * (1.0 - te) + row(i1) * te
}

/// Goodness at world point `v` for a field around `center` facing `heading`.
pub fn goodness_at(f: &ErrorField, center: &P3, heading: f64, v: &P3, p: &VolumeParams) -> f64 {
    goodness_offset(f, heading, &(v - center), v.z, p)
}

/// As [`goodness_at`], given the offset `d` from the subject center and the
/// world height `z` of the query point.
fn goodness_offset(f: &ErrorField, heading: f64, d: &V3, z: f64, p: &VolumeParams) -> f64 {
    let horiz = d.x.hypot(d.y);
    let r = d.norm();
    if z < 0.0 || d.z < 0.0 || r == 0.0 {
        return 0.0;
    }
    let off = (r - f.radius).abs();
    let radial = if off <= p.band {
        1.0
    } else if p.taper > 0.0 {
        (1.0 - (off - p.band) / p.taper).max(0.0)
    } else {
        0.0
    };
    if radial == 0.0 {
        return 0.0;
    }
    let az = d.y.atan2(d.x) - heading;
    let el = d.z.atan2(horiz);
    let e = sample_field(f, az, el);
    radial * p.xi_max * (1.0 - e.min(p.e_cap) / p.e_cap)
}

/// Project a view-error field into the workspace around the subject.
pub fn error_to_volume(f: &ErrorField, center: P3, heading: f64, lattice: Lattice, p: &VolumeParams) -> Result<ErrorVolume> {
    if !heading.is_finite() || !center.coords.iter().all(|c| c.is_finite()) {
        return Err(Error::invalid("subject pose must be finite"));
    }
    if !(p.xi_max > 0.0 && p.e_cap > 0.0 && p.band >= 0.0 && p.taper >= 0.0) {
        return Err(Error::invalid("bad volume parameters"));
    }
    // Offsets are built from `origin - center` so that moving subject and
    // lattice together reproduces the volume bit for bit.
    let base = lattice.origin - center;
    let values = (0..lattice.len())
        .into_par_iter()
        .map(|i| {
            let [a, b, c] = lattice.ijk(i);
            let d = base + V3::new(a as f64, b as f64, c as f64) * lattice.res;
            goodness_offset(f, heading, &d, center.z + d.z, p)
        })
        .collect();
    Ok(ErrorVolume { field: Field3::new(lattice, values)?, xi_max: p.xi_max })
}

/// Clearance rescaled to goodness units.
pub fn clearance_goodness(d: f64, d_safe: f64, xi_max: f64) -> f64 {
    d.min(d_safe) / d_safe * xi_max
}

/// Per-voxel blend `λ·G + (1-λ)·C` of viewing goodness `G` and rescaled
/// clearance `C`, on the error volume's lattice.
pub fn merge(ev: &ErrorVolume, e: &Esdf, m: &MergeParams) -> Result<Pesdf> {
    if !(0.0..=1.0).contains(&m.lambda) {
        return Err(Error::invalid(format!("merge weight {} outside [0, 1]", m.lambda)));
    }
    if !(m.d_safe > 0.0) {
        return Err(Error::invalid("d_safe must be positive"));
    }
    let clear = e.field.resample(&ev.field.lattice);
    if clear.lattice != ev.field.lattice {
        return Err(Error::invalid("lattice mismatch after resampling"));
    }
    let values = ev
        .field
        .values
        .iter()
        .zip(&clear.values)
        .map(|(&g, &d)| blend(g, clearance_goodness(d, m.d_safe, ev.xi_max), m.lambda))
        .collect();
    Ok(Pesdf { field: Field3::new(ev.field.lattice, values)?, lambda: m.lambda })
}

fn blend(a: f64, b: f64, lambda: f64) -> f64 {
    if lambda == 1.0 {
        a
    } else if lambda == 0.0 {
        b
    } else {
        lambda * a + (1.0 - lambda) * b
    }
}

impl Pesdf {
    /// Value `Ξ(x)` and gradient; see [`Field3::sample`].
    pub fn sample(&self, x: &P3) -> Result<(f64, V3)> {
        self.field.sample(x)
    }

    pub fn sample_clamped(&self, x: &P3) -> (f64, V3) {
        self.field.sample_clamped(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pesdf::{esdf_from_occupancy, OccupancyGrid};
    use crate::viewsphere::{make_grid, ErrorField};
    use approx::assert_relative_eq;

    fn window(center: P3) -> Lattice {
        Lattice::new(center - V3::new(5.0, 5.0, 1.2), 0.2, [51, 51, 26]).unwrap()
    }

    #[test]
    fn zero_error_is_full_goodness_in_band() {
        let g = make_grid(24, 8, 5.0).unwrap();
        let f = ErrorField::constant(&g, 0.0);
        let c = P3::new(0.0, 0.0, 1.2);
        let p = VolumeParams::default();
        let ev = error_to_volume(&f, c, 0.3, window(c), &p).unwrap();
        let mut in_band = 0;
        for idx in 0..ev.field.values.len() {
            let v = ev.field.lattice.center_of(idx);
            let d = v - c;
            if d.z >= 0.0 && (d.norm() - 5.0).abs() <= p.band {
                assert_eq!(ev.field.values[idx], 5.0);
                in_band += 1;
            }
            if d.z < 0.0 || (d.norm() - 5.0).abs() >= p.band + p.taper {
                assert_eq!(ev.field.values[idx], 0.0);
            }
        }
        assert!(in_band > 1000);
    }

    #[test]
    fn bilinear_sampling_hits_cell_centers_and_wraps() {
        let g = make_grid(8, 4, 5.0).unwrap();
        let f = ErrorField::new(8, 4, 5.0, (0..32).map(|v| v as f64).collect()).unwrap();
        for idx in 0..32 {
            let (i, j) = g.cell(idx);
            let v = &g.views[idx];
            assert_relative_eq!(sample_field(&f, v.azimuth, v.elevation), f.get(i, j), epsilon = 1e-12);
        }
        // Halfway between the last and first azimuth cells.
        assert_relative_eq!(sample_field(&f, 0.0, g.views[0].elevation), (f.get(0, 7) + f.get(0, 0)) / 2.0, epsilon = 1e-12);
        assert_relative_eq!(sample_field(&f, 0.0, -1.0), sample_field(&f, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn heading_rotates_content() {
        let f = ErrorField::new(24, 8, 5.0, (0..192).map(|v| (v % 24) as f64 * 0.2).collect()).unwrap();
        let c = P3::new(1.0, -2.0, 1.1);
        let p = VolumeParams::default();
        let dth = 0.7;
        let rot = crate::geometry::rot_z(dth);
        for k in 0..200 {
            let v = c + spherical(k) * 5.2;
            let w = c + rot * (v - c);
            let a = goodness_at(&f, &c, 0.0, &v, &p);
            let b = goodness_at(&f, &c, dth, &w, &p);
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    fn spherical(k: usize) -> V3 {
        let az = k as f64 * 0.37;
        let el = (k % 13) as f64 * 0.11;
        crate::geometry::spherical_dir(az, el)
    }

    #[test]
    fn translation_invariance_is_exact() {
        let f = ErrorField::new(24, 8, 5.0, (0..192).map(|v| ((v * 37) % 11) as f64 * 0.4).collect()).unwrap();
        let c = P3::new(0.0, 0.0, 1.0);
        let t = V3::new(8.0, -4.0, 0.0);
        let p = VolumeParams::default();
        let a = error_to_volume(&f, c, 1.1, window(c), &p).unwrap();
        let b = error_to_volume(&f, c + t, 1.1, window(c + t), &p).unwrap();
        assert_eq!(a.field.values, b.field.values);
    }

    #[test]
    fn unique_best_cell_is_argmax_direction() {
        let g = make_grid(24, 8, 5.0).unwrap();
        let best = 3 * 24 + 5;
        let mut vals = vec![3.0; 192];
        vals[best] = 0.0;
        let f = ErrorField::new(24, 8, 5.0, vals).unwrap();
        let c = P3::new(0.0, 0.0, 1.2);
        let ev = error_to_volume(&f, c, 0.0, window(c), &VolumeParams::default()).unwrap();
        let (arg, _) = ev.field.values.iter().enumerate().fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        let d = ev.field.lattice.center_of(arg) - c;
        let cell = g.cell_of(d.y.atan2(d.x), d.z.atan2(d.x.hypot(d.y)));
        assert!(g.neighborhood(best).contains(&cell));
    }

    #[test]
    fn merge_endpoints_and_arithmetic() {
        let lat = Lattice::new(P3::origin(), 0.5, [6, 6, 4]).unwrap();
        let mut occ = OccupancyGrid::empty(lat);
        occ.add_box(P3::new(0.0, 0.0, 0.0), P3::new(0.6, 0.6, 0.6));
        let e = esdf_from_occupancy(&occ).unwrap();
        let ev = ErrorVolume { field: Field3::from_fn(lat, |p| (p.x + p.y).min(5.0)), xi_max: 5.0 };
        let one = merge(&ev, &e, &MergeParams { lambda: 1.0, d_safe: 2.0 }).unwrap();
        assert_eq!(one.field.values, ev.field.values);
        let zero = merge(&ev, &e, &MergeParams { lambda: 0.0, d_safe: 2.0 }).unwrap();
        let resc: Vec<f64> = e.field.values.iter().map(|&d| clearance_goodness(d, 2.0, 5.0)).collect();
        assert_eq!(zero.field.values, resc);
        assert_eq!(blend(4.0, 2.0, 0.5), 3.0);
        let half = merge(&ev, &e, &MergeParams::default()).unwrap();
        for i in 0..lat.len() {
            let (a, b) = (ev.field.values[i], resc[i]);
            let v = half.field.values[i];
            assert!(v >= a.min(b) - 1e-12 && v <= a.max(b) + 1e-12);
        }
        assert!(merge(&ev, &e, &MergeParams { lambda: 1.5, d_safe: 2.0 }).is_err());
    }
}

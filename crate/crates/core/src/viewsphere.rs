//! Hemispherical view grid and the Monte-Carlo pose-error oracle.
//!
//! Azimuth is measured in the subject frame from the facing direction toward
//! the subject's left, so `θ = π/2` views the left side and `θ ∈ (π, 2π)` is
//! the right hemisphere. Cells are stored elevation-major:
//! `index = i_el * n_az + j_az`.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, P3};
use crate::rng;
use crate::skeleton::{
    apply_detector, occlusion_mask, project, CameraView, DetectorParams, Intrinsics, Joint, Keypoints2D, Skeleton3D,
    NUM_JOINTS,
};

/// Penalty for a missing joint, in spine-length units.
pub const D_MISS: f64 = 5.0;
pub const DEFAULT_N_AZ: usize = 24;
pub const DEFAULT_N_EL: usize = 8;
pub const DEFAULT_RADIUS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ViewGrid {
    pub n_az: usize,
    pub n_el: usize,
    pub radius: f64,
    pub intrinsics: Intrinsics,
    /// Cameras around the origin, elevation-major.
    pub views: Vec<CameraView>,
}

pub fn make_grid(n_az: usize, n_el: usize, r: f64) -> Result<ViewGrid> {
    make_grid_with(n_az, n_el, r, Intrinsics::default())
}

pub fn make_grid_with(n_az: usize, n_el: usize, r: f64, intrinsics: Intrinsics) -> Result<ViewGrid> {
    if n_az < 4 || n_el < 2 {
        return Err(Error::invalid(format!("grid {n_az}x{n_el} too small (need n_az >= 4, n_el >= 2)")));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::invalid(format!("grid radius {r} must be positive")));
    }
    let mut views = Vec::with_capacity(n_az * n_el);
    for i in 0..n_el {
        for j in 0..n_az {
            views.push(CameraView::new(azimuth_center(n_az, j), elevation_center(n_el, i), r, P3::origin(), intrinsics)?);
        }
    }
    Ok(ViewGrid { n_az, n_el, radius: r, intrinsics, views })
}

pub fn azimuth_center(n_az: usize, j: usize) -> f64 {
    TAU * (j as f64 + 0.5) / n_az as f64
}

pub fn elevation_center(n_el: usize, i: usize) -> f64 {
    FRAC_PI_2 * (i as f64 + 0.5) / n_el as f64
}

impl ViewGrid {
    pub fn len(&self) -> usize {
        self.n_az * self.n_el
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(i_el, j_az)` of a flat index.
    pub fn cell(&self, idx: usize) -> (usize, usize) {
        (idx / self.n_az, idx % self.n_az)
    }

    /// Camera for cell `idx` around a subject at `center` facing `heading`.
    pub fn view_at(&self, idx: usize, center: P3, heading: f64) -> CameraView {
        let v = &self.views[idx];
        CameraView { azimuth: wrap_angle(v.azimuth + heading), look_at: center, ..*v }
    }

    /// Cell containing the subject-frame direction `(azimuth, elevation)`.
    pub fn cell_of(&self, azimuth: f64, elevation: f64) -> usize {
        let j = ((wrap_angle(azimuth) / TAU) * self.n_az as f64).floor() as usize % self.n_az;
        let i = ((elevation / FRAC_PI_2) * self.n_el as f64).floor().clamp(0.0, (self.n_el - 1) as f64) as usize;
        i * self.n_az + j
    }

    /// Cells whose elevation index differs by at most one and azimuth index
    /// by at most one (cyclically), including `idx` itself.
    pub fn neighborhood(&self, idx: usize) -> Vec<usize> {
        let (i, j) = self.cell(idx);
        let mut out = Vec::with_capacity(9);
        for di in -1i64..=1 {
            let ii = i as i64 + di;
            if ii < 0 || ii >= self.n_el as i64 {
                continue;
            }
            for dj in -1i64..=1 {
                let jj = (j as i64 + dj).rem_euclid(self.n_az as i64);
                out.push(ii as usize * self.n_az + jj as usize);
            }
        }
        out
    }

    /// Flat index of the cell mirrored across the sagittal plane (`θ → -θ`).
    pub fn mirror(&self, idx: usize) -> usize {
        let (i, j) = self.cell(idx);
        i * self.n_az + (self.n_az - 1 - j)
    }
}

/// Per-view error map over a [`ViewGrid`]: `n_el` rows of `n_az` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorField {
    pub n_az: usize,
    pub n_el: usize,
    pub radius: f64,
    pub values: Vec<f64>,
}

impl ErrorField {
    pub fn new(n_az: usize, n_el: usize, radius: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_az * n_el {
            return Err(Error::invalid(format!("field has {} values, grid needs {}", values.len(), n_az * n_el)));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("field values must be finite and non-negative"));
        }
        Ok(ErrorField { n_az, n_el, radius, values })
    }

    pub fn constant(grid: &ViewGrid, v: f64) -> Self {
        ErrorField { n_az: grid.n_az, n_el: grid.n_el, radius: grid.radius, values: vec![v; grid.len()] }
    }

    pub fn get(&self, i_el: usize, j_az: usize) -> f64 {
        self.values[i_el * self.n_az + j_az]
    }

    pub fn grid(&self) -> Result<ViewGrid> {
        make_grid(self.n_az, self.n_el, self.radius)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-trial normalized errors for one view; see [`view_error`].
pub fn view_error_samples(s: &Skeleton3D, cam: &CameraView, det: &DetectorParams, trials: usize, seed: u64, d_miss: f64) -> Result<Vec<f64>> {
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    det.validate()?;
    let truth = project(s, cam);
    let spine_px = match (truth.get(Joint::Neck), truth.get(Joint::MidHip)) {
        (Some(a), Some(b)) => ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt(),
        _ => 0.0,
    };
    if !(spine_px > 1e-9) {
        return Ok(vec![d_miss; trials]);
    }
    let mask = occlusion_mask(s, cam);
    let (w, h) = (cam.intrinsics.width as f64, cam.intrinsics.height as f64);
    Ok((0..trials)
        .map(|t| {
            let mut r = rng::rng(trial_seed(seed, t));
            let kp = apply_detector(&truth, &mask, det, &mut r, w, h);
            normalized_error(&truth, &kp, spine_px, d_miss)
        })
        .collect())
}

/// Seed used by trial `t`; `detect(.., trial_seed(seed, t))` reproduces it.
pub fn trial_seed(seed: u64, t: usize) -> u64 {
    rng::derive(seed, t as u64)
}

/// Mean per-joint pixel error between a detection and the ground-truth
/// projection, in spine-length units. Missing joints score `d_miss`, and each
/// joint's contribution is capped at `d_miss`.
pub fn normalized_error(truth: &Keypoints2D, det: &Keypoints2D, spine_px: f64, d_miss: f64) -> f64 {
    let mut sum = 0.0;
    for j in 0..NUM_JOINTS {
        sum += if truth.visible[j] && det.visible[j] {
            let (a, b) = (truth.points[j], det.points[j]);
            (((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() / spine_px).min(d_miss)
        } else {
            d_miss
        };
    }
    sum / NUM_JOINTS as f64
}

/// Average normalized detector error over `trials` draws for one camera.
pub fn view_error(s: &Skeleton3D, cam: &CameraView, det: &DetectorParams, trials: usize, seed: u64) -> Result<f64> {
    view_error_with_miss(s, cam, det, trials, seed, D_MISS)
}

pub fn view_error_with_miss(s: &Skeleton3D, cam: &CameraView, det: &DetectorParams, trials: usize, seed: u64, d_miss: f64) -> Result<f64> {
    let samples = view_error_samples(s, cam, det, trials, seed, d_miss)?;
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

/// Seed of grid cell `idx`; cells are independent streams.
pub fn cell_seed(seed: u64, idx: usize) -> u64 {
    rng::derive(seed ^ 0x5EED_F1E1_D000_0000, idx as u64)
}

/// Oracle field for a subject facing `+x`, cameras looking at its torso
/// center. Cells are evaluated in parallel; the result does not depend on
/// scheduling.
pub fn compute_field(s: &Skeleton3D, g: &ViewGrid, det: &DetectorParams, trials: usize, seed: u64) -> Result<ErrorField> {
    compute_field_oriented(s, g, det, trials, seed, 0.0, D_MISS)
}

pub fn compute_field_oriented(s: &Skeleton3D, g: &ViewGrid, det: &DetectorParams, trials: usize, seed: u64, heading: f64, d_miss: f64) -> Result<ErrorField> {
    let center = s.center();
    let values = (0..g.len())
        .into_par_iter()
        .map(|idx| view_error_with_miss(s, &g.view_at(idx, center, heading), det, trials, cell_seed(seed, idx), d_miss))
        .collect::<Result<Vec<_>>>()?;
    ErrorField::new(g.n_az, g.n_el, g.radius, values)
}

/// The `k` lowest-error cells, ascending; ties go to the smaller elevation
/// index, then the smaller azimuth index.
pub fn best_views(f: &ErrorField, k: usize) -> Result<Vec<(usize, f64)>> {
    let n = f.values.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} outside [1, {n}]")));
    }
    let mut order: Vec<(usize, f64)> = f.values.iter().copied().enumerate().collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    order.truncate(k);
    Ok(order)
}

/// Equal-width quantization of `[min, max]` into `bins` intervals, the top
/// value landing in the last bin. A constant field maps to bin 0.
pub fn quantize_bins(f: &ErrorField, bins: usize) -> Result<Vec<usize>> {
    if bins < 2 {
        return Err(Error::invalid("need at least 2 bins"));
    }
    let (lo, hi) = (f.min(), f.max());
    let width = hi - lo;
    Ok(f.values
        .iter()
        .map(|&v| {
            if !(width > 0.0) {
                0
            } else {
                (((v - lo) / width * bins as f64).floor() as usize).min(bins - 1)
            }
        })
        .collect())
}

/// CSV layout: a label row `n_az,n_el,radius`, a row with those values,
/// then `n_el` rows of `n_az` values.
pub fn write_field_csv<W: Write>(mut w: W, f: &ErrorField) -> Result<()> {
    writeln!(w, "n_az,n_el,radius")?;
    writeln!(w, "{},{},{}", f.n_az, f.n_el, f.radius)?;
    for row in f.values.chunks(f.n_az) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn read_field_csv<R: BufRead>(r: R) -> Result<ErrorField> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::format("empty field file"))??;
    if header.trim() != "n_az,n_el,radius" {
        return Err(Error::format("missing n_az,n_el,radius header"));
    }
    let dims = lines.next().ok_or_else(|| Error::format("missing grid dimensions"))??;
    let d: Vec<&str> = dims.trim().split(',').collect();
    if d.len() != 3 {
        return Err(Error::format("grid dimension row needs 3 fields"));
    }
    let n_az: usize = d[0].parse().map_err(|_| Error::format("bad n_az"))?;
    let n_el: usize = d[1].parse().map_err(|_| Error::format("bad n_el"))?;
    let radius: f64 = d[2].parse().map_err(|_| Error::format("bad radius"))?;
    let mut values = Vec::with_capacity(n_az * n_el);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line.trim().split(',').map(|v| v.parse::<f64>().map_err(|_| Error::format(format!("bad value {v}")))).collect::<Result<Vec<_>>>()?;
        if row.len() != n_az {
            return Err(Error::format(format!("row has {} values, expected {n_az}", row.len())));
        }
        values.extend(row);
    }
    ErrorField::new(n_az, n_el, radius, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{build_canonical_skeleton, detect};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn small_grid_centers() {
        let g = make_grid(4, 2, 5.0).unwrap();
        assert_eq!(g.views.len(), 8);
        assert_abs_diff_eq!(g.views[0].azimuth, PI / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.views[0].elevation, PI / 8.0, epsilon = 1e-15);
    }

    #[test]
    fn default_grid_size_and_radius() {
        let g = make_grid(24, 8, 5.0).unwrap();
        assert_eq!(g.len(), 192);
        for v in &g.views {
            assert_abs_diff_eq!((v.position() - P3::origin()).norm(), 5.0, epsilon = 1e-9);
            let uv = v.project_point(&P3::origin()).unwrap();
            assert_abs_diff_eq!(uv[0], 320.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn degenerate_grids_rejected() {
        assert!(make_grid(3, 2, 5.0).is_err());
        assert!(make_grid(4, 1, 5.0).is_err());
        assert!(make_grid(4, 2, 0.0).is_err());
    }

    #[test]
    fn cell_of_inverts_centers() {
        let g = make_grid(24, 8, 5.0).unwrap();
        for idx in 0..g.len() {
            let v = &g.views[idx];
            assert_eq!(g.cell_of(v.azimuth, v.elevation), idx);
            assert_eq!(g.mirror(g.mirror(idx)), idx);
        }
        assert_eq!(g.neighborhood(0).len(), 6);
        assert!(g.neighborhood(0).contains(&23));
    }

    #[test]
    fn zero_noise_unoccluded_view_has_zero_error() {
        let s = build_canonical_skeleton(1.8).unwrap();
        let cam = CameraView::new(0.0, 0.2, 5.0, s.center(), Intrinsics::default()).unwrap();
        let e = view_error(&s, &cam, &DetectorParams::noiseless(), 5, 1).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn saturates_at_d_miss_when_everything_dropped() {
        // Camera buried in the torso: no joint is usefully observable.
        let s = build_canonical_skeleton(1.8).unwrap();
        let cam = CameraView::new(0.0, 0.0, 0.05, s.center(), Intrinsics::default()).unwrap();
        let det = DetectorParams { drop_prob: 1.0, ..Default::default() };
        let e = view_error(&s, &cam, &det, 3, 1).unwrap();
        assert_eq!(e, D_MISS);
    }

    #[test]
    fn unprojectable_spine_scores_d_miss() {
        let s = build_canonical_skeleton(1.8).unwrap();
        let cam = CameraView::from_position(P3::new(3.0, 0.0, 1.2), P3::new(9.0, 0.0, 1.2), Intrinsics::default()).unwrap();
        assert_eq!(view_error(&s, &cam, &DetectorParams::default(), 4, 0).unwrap(), D_MISS);
    }

    #[test]
    fn view_error_matches_explicit_detect_calls() {
        let s = build_canonical_skeleton(1.8).unwrap();
        let cam = CameraView::new(2.4, 0.3, 5.0, s.center(), Intrinsics::default()).unwrap();
        let det = DetectorParams::default();
        let truth = project(&s, &cam);
        let spine = {
            let (a, b) = (truth.get(Joint::Neck).unwrap(), truth.get(Joint::MidHip).unwrap());
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
        };
        let manual: f64 = (0..7)
            .map(|t| normalized_error(&truth, &detect(&s, &cam, &det, trial_seed(77, t)), spine, D_MISS))
            .sum::<f64>()
            / 7.0;
        assert_eq!(view_error(&s, &cam, &det, 7, 77).unwrap(), manual);
    }

    #[test]
    fn frontal_beats_rear() {
        let s = build_canonical_skeleton(1.8).unwrap();
        let det = DetectorParams::default();
        let front = CameraView::new(0.0, 0.2, 5.0, s.center(), Intrinsics::default()).unwrap();
        let rear = CameraView::new(PI, 0.2, 5.0, s.center(), Intrinsics::default()).unwrap();
        let ef = view_error(&s, &front, &det, 200, 1).unwrap();
        let er = view_error(&s, &rear, &det, 200, 2).unwrap();
        assert!(ef < er, "front {ef} rear {er}");
    }

    #[test]
    fn best_views_tie_break_and_argmin() {
        let g = make_grid(24, 8, 5.0).unwrap();
        let f = ErrorField::constant(&g, 1.0);
        assert_eq!(best_views(&f, 1).unwrap()[0].0, 0);
        let mut f2 = f.clone();
        f2.values[3 * 24 + 7] = 0.5;
        assert_eq!(g.cell(best_views(&f2, 1).unwrap()[0].0), (3, 7));
        assert!(best_views(&f, 0).is_err());
        assert!(best_views(&f, 193).is_err());
    }

    #[test]
    fn full_ordering_matches_exhaustive_sort() {
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let g = make_grid(8, 4, 5.0).unwrap();
        // Coarse values force many ties.
        let vals: Vec<f64> = (0..g.len()).map(|_| (r.random_range(0..6) as f64) * 0.25).collect();
        let f = ErrorField::new(8, 4, 5.0, vals.clone()).unwrap();
        let got = best_views(&f, g.len()).unwrap();
        // Oracle: repeatedly extract the minimum scanning in index order.
        let mut left: Vec<usize> = (0..g.len()).collect();
        for (idx, v) in got {
            let mut best = 0;
            for (p, &c) in left.iter().enumerate() {
                if vals[c] < vals[left[best]] {
                    best = p;
                }
            }
            assert_eq!(left[best], idx);
            assert_eq!(vals[idx], v);
            left.remove(best);
        }
    }

    #[test]
    fn best_views_prefix_property() {
        let g = make_grid(8, 4, 5.0).unwrap();
        let vals: Vec<f64> = (0..g.len()).map(|i| ((i * 37) % 11) as f64).collect();
        let f = ErrorField::new(8, 4, 5.0, vals).unwrap();
        for k in 1..g.len() {
            let a = best_views(&f, k).unwrap();
            let b = best_views(&f, k + 1).unwrap();
            assert_eq!(a[..], b[..k]);
        }
    }

    #[test]
    fn quantization_rules() {
        let f = ErrorField::new(4, 2, 1.0, vec![0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let b = quantize_bins(&f, 2).unwrap();
        assert_eq!(&b[..3], &[0, 1, 1]);
        let c = ErrorField::new(4, 2, 1.0, vec![0.3; 8]).unwrap();
        assert!(quantize_bins(&c, 21).unwrap().iter().all(|&x| x == 0));
        assert!(quantize_bins(&c, 1).is_err());
        let vals: Vec<f64> = (0..192).map(|i| ((i * 7919) % 1000) as f64 / 999.0).collect();
        let r = ErrorField::new(24, 8, 5.0, vals).unwrap();
        assert!(quantize_bins(&r, 21).unwrap().iter().all(|&x| x <= 20));
    }

    #[test]
    fn csv_round_trip() {
        let vals: Vec<f64> = (0..32).map(|i| i as f64 / 7.0).collect();
        let f = ErrorField::new(8, 4, 5.0, vals).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &f).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("n_az,n_el,radius\n8,4,5\n"));
        assert_eq!(read_field_csv(buf.as_slice()).unwrap(), f);
    }
}

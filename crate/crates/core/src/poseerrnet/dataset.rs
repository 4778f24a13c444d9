use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::net::DatasetPair;
use crate::error::{Error, Result};
use crate::normalize::{normalize_keypoints, INPUT_DIM};
use crate::rng;
use crate::skeleton::{animate, detect, DetectorParams, PoseParams, Skeleton3D};
use crate::viewsphere::{compute_field_oriented, ErrorField, ViewGrid, D_MISS};

const MAGIC: &str = "# posefield-dataset v1";

/// Where the training observation of each pose is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationPolicy {
    /// A uniformly random grid cell; retries visit the remaining cells in
    /// random order.
    UniformRandom,
    /// A fixed cell, falling back to random cells if it fails to normalize.
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_az: usize,
    pub n_el: usize,
    pub radius: f64,
    pub pairs: Vec<DatasetPair>,
    /// Poses dropped because no view produced a normalizable detection.
    pub skipped: usize,
}

/// Walking poses with randomized gait phase, stride and arm carriage.
pub fn sample_gait_poses(base: &Skeleton3D, n: usize, seed: u64) -> Vec<PoseParams> {
    let mut r = rng::rng(seed);
    (0..n)
        .map(|_| {
            let mut p = PoseParams::walking(base, r.random_range(0.0..std::f64::consts::TAU), r.random_range(0.1..0.7));
            for side in 0..2 {
                p.shoulder_abduction[side] = r.random_range(-1.35..0.3);
                p.shoulder_flexion[side] = r.random_range(-0.3..0.9);
                p.elbow_flexion[side] = r.random_range(0.0..1.6);
            }
            p
        })
        .collect()
}

/// Label each pose with its oracle field and pair it with a normalized
/// detection from one observation view.
pub fn generate_dataset(
    base: &Skeleton3D,
    poses: &[PoseParams],
    g: &ViewGrid,
    det: &DetectorParams,
    policy: ObservationPolicy,
    trials: usize,
    seed: u64,
) -> Result<Dataset> {
    if poses.is_empty() {
        return Err(Error::invalid("empty pose list"));
    }
    if let ObservationPolicy::Fixed(idx) = policy {
        if idx >= g.len() {
            return Err(Error::invalid(format!("observation cell {idx} outside grid of {}", g.len())));
        }
    }
    let mut pairs = Vec::with_capacity(poses.len());
    let mut skipped = 0;
    for (i, pose) in poses.iter().enumerate() {
        let s = animate(base, pose)?;
        let field = compute_field_oriented(&s, g, det, trials, rng::derive(seed, 2 * i as u64), pose.heading, D_MISS)?;
        let obs_seed = rng::derive(seed, 2 * i as u64 + 1);
        let mut cells: Vec<usize> = (0..g.len()).collect();
        cells.shuffle(&mut rng::rng(obs_seed));
        if let ObservationPolicy::Fixed(idx) = policy {
            cells.retain(|&c| c != idx);
            cells.insert(0, idx);
        }
        let input = cells.iter().enumerate().find_map(|(attempt, &c)| {
            let cam = g.view_at(c, s.center(), pose.heading);
            normalize_keypoints(&detect(&s, &cam, det, rng::derive(obs_seed, 1 + attempt as u64))).ok()
        });
        match input {
            Some(x) => pairs.push(DatasetPair { input: x.to_vec(), target: field.values }),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} of {} poses with no normalizable view", poses.len());
    }
    Ok(Dataset { n_az: g.n_az, n_el: g.n_el, radius: g.radius, pairs, skipped })
}

impl Dataset {
    pub fn field(&self, i: usize) -> Result<ErrorField> {
        ErrorField::new(self.n_az, self.n_el, self.radius, self.pairs[i].target.clone())
    }
}

/// Header, grid row, then one record per line: the normalized pose vector
/// followed by the flattened field, comma-separated.
pub fn write_dataset<W: Write>(mut w: W, d: &Dataset) -> Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "n_az,n_el,radius,skipped")?;
    writeln!(w, "{},{},{},{}", d.n_az, d.n_el, d.radius, d.skipped)?;
    for p in &d.pairs {
        let cells: Vec<String> = p.input.iter().chain(&p.target).map(|v| v.to_string()).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<Dataset> {
    let mut lines = r.lines();
    let mut next = || -> Result<String> { Ok(lines.next().ok_or_else(|| Error::format("truncated dataset header"))??) };
    if next()?.trim() != MAGIC {
        return Err(Error::format("missing dataset header"));
    }
    if next()?.trim() != "n_az,n_el,radius,skipped" {
        return Err(Error::format("missing dataset grid labels"));
    }
    let row = next()?;
    let f: Vec<&str> = row.trim().split(',').collect();
    if f.len() != 4 {
        return Err(Error::format("dataset grid row needs 4 fields"));
    }
    let bad = |what: &str| Error::format(format!("bad {what}"));
    let n_az: usize = f[0].parse().map_err(|_| bad("n_az"))?;
    let n_el: usize = f[1].parse().map_err(|_| bad("n_el"))?;
    let radius: f64 = f[2].parse().map_err(|_| bad("radius"))?;
    let skipped: usize = f[3].parse().map_err(|_| bad("skip count"))?;
    let width = INPUT_DIM + n_az * n_el;
    let mut pairs = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = line.trim().split(',').map(|s| s.parse::<f64>().map_err(|_| bad("value"))).collect::<Result<Vec<_>>>()?;
        if v.len() != width {
            return Err(Error::format(format!("record has {} values, expected {width}", v.len())));
        }
        if v[INPUT_DIM..].iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::format("negative target"));
        }
        pairs.push(DatasetPair { input: v[..INPUT_DIM].to_vec(), target: v[INPUT_DIM..].to_vec() });
    }
    Ok(Dataset { n_az, n_el, radius, pairs, skipped })
}

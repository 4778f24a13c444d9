use super::field::{Field3, Lattice};
use crate::error::{Error, Result};
use crate::geometry::P3;

pub const DEFAULT_D_MAX: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub lattice: Lattice,
    pub occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn empty(lattice: Lattice) -> Self {
        OccupancyGrid { lattice, occupied: vec![false; lattice.len()] }
    }

    pub fn is_occupied(&self, i: usize, j: usize, k: usize) -> bool {
        self.occupied[self.lattice.index(i, j, k)]
    }

    /// Occupancy of the voxel containing `p`; points off the lattice are free.
    pub fn occupied_at(&self, p: &P3) -> bool {
        self.lattice.voxel_of(p).is_some_and(|[i, j, k]| self.is_occupied(i, j, k))
    }

    pub fn count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    /// Mark voxels whose centers satisfy `inside`.
    pub fn fill(&mut self, inside: impl Fn(&P3) -> bool) {
        for idx in 0..self.lattice.len() {
            if inside(&self.lattice.center_of(idx)) {
                self.occupied[idx] = true;
            }
        }
    }

    pub fn add_box(&mut self, min: P3, max: P3) {
        self.fill(|p| (0..3).all(|a| p[a] >= min[a] && p[a] <= max[a]));
    }

    /// Vertical cylinder from the ground up to `height`.
    pub fn add_column(&mut self, x: f64, y: f64, radius: f64, height: f64) {
        self.fill(|p| p.z <= height && (p.x - x).powi(2) + (p.y - y).powi(2) <= radius * radius);
    }
}

/// Distance in meters from each voxel center to the nearest occupied voxel
/// center, capped at `d_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct Esdf {
    pub field: Field3,
    pub d_max: f64,
}

const INF: i64 = i64::MAX / 4;

/// Exact 1D squared-distance transform of `f` (lower envelope of parabolas
/// rooted at finite sites), written into `out`.
fn edt_1d(f: &[i64], out: &mut [i64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    for q in 0..n {
        if f[q] >= INF {
            continue;
        }
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let s = ((f[q] + (q * q) as i64) - (f[p] + (p * p) as i64)) as f64 / (2 * (q - p)) as f64;
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = INF);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as i64 - v[k] as i64;
        *o = d * d + f[v[k]];
    }
}

/// Squared voxel distances to the nearest occupied voxel; `INF` where none.
fn squared_edt(g: &OccupancyGrid) -> Vec<i64> {
    let [nx, ny, nz] = g.lattice.dims;
    let mut d: Vec<i64> = g.occupied.iter().map(|&o| if o { 0 } else { INF }).collect();
    let (mut v, mut z) = (Vec::new(), Vec::new());
    let mut line = Vec::new();
    let mut out = Vec::new();
    let lat = g.lattice;
    let mut pass = |d: &mut Vec<i64>, n: usize, at: &dyn Fn(usize, usize, usize) -> usize, outer: (usize, usize)| {
        line.resize(n, 0);
        out.resize(n, 0);
        for a in 0..outer.0 {
            for b in 0..outer.1 {
                for t in 0..n {
                    line[t] = d[at(a, b, t)];
                }
                edt_1d(&line, &mut out, &mut v, &mut z);
                for t in 0..n {
                    d[at(a, b, t)] = out[t];
                }
            }
        }
    };
    pass(&mut d, nz, &|i, j, k| lat.index(i, j, k), (nx, ny));
    pass(&mut d, ny, &|i, k, j| lat.index(i, j, k), (nx, nz));
    pass(&mut d, nx, &|j, k, i| lat.index(i, j, k), (ny, nz));
    d
}

pub fn esdf_from_occupancy(g: &OccupancyGrid) -> Result<Esdf> {
    esdf_with_cap(g, Some(DEFAULT_D_MAX))
}

/// Exact Euclidean distance transform. Without a cap the grid must contain
/// an occupied voxel.
pub fn esdf_with_cap(g: &OccupancyGrid, d_max: Option<f64>) -> Result<Esdf> {
    if let Some(c) = d_max {
        if !(c > 0.0) {
            return Err(Error::invalid(format!("distance cap {c} must be positive")));
        }
    }
    if d_max.is_none() && g.count() == 0 {
        return Err(Error::invalid("empty occupancy grid and no distance cap"));
    }
    let cap = d_max.unwrap_or(f64::INFINITY);
    let values = squared_edt(g).into_iter().map(|d2| if d2 >= INF { cap } else { ((d2 as f64).sqrt() * g.lattice.res).min(cap) }).collect();
    Ok(Esdf { field: Field3::new(g.lattice, values)?, d_max: cap })
}

/// Reference transform by exhaustive search over occupied voxels.
pub fn esdf_brute_force(g: &OccupancyGrid, d_max: Option<f64>) -> Vec<f64> {
    let occ: Vec<[i64; 3]> = (0..g.lattice.len()).filter(|&i| g.occupied[i]).map(|i| g.lattice.ijk(i).map(|c| c as i64)).collect();
    let cap = d_max.unwrap_or(f64::INFINITY);
    (0..g.lattice.len())
        .map(|idx| {
            let p = g.lattice.ijk(idx).map(|c| c as i64);
            let best = occ.iter().map(|o| (0..3).map(|a| (o[a] - p[a]).pow(2)).sum::<i64>()).min();
            match best {
                Some(d2) => ((d2 as f64).sqrt() * g.lattice.res).min(cap),
                None => cap,
            }
        })
        .collect()
}

impl Esdf {
    pub fn sample(&self, p: &P3) -> Result<(f64, crate::geometry::V3)> {
        self.field.sample(p)
    }

    pub fn sample_clamped(&self, p: &P3) -> (f64, crate::geometry::V3) {
        self.field.sample_clamped(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn grid(n: [usize; 3], res: f64) -> OccupancyGrid {
        OccupancyGrid::empty(Lattice::new(P3::origin(), res, n).unwrap())
    }

    #[test]
    fn single_voxel_corner_distance() {
        let mut g = grid([9, 9, 9], 1.0);
        let c = g.lattice.index(4, 4, 4);
        g.occupied[c] = true;
        let e = esdf_with_cap(&g, None).unwrap();
        assert_eq!(e.field.at(0, 0, 0), 48f64.sqrt());
        assert_eq!(e.field.at(8, 0, 8), 48f64.sqrt());
        assert_eq!(e.field.at(4, 4, 4), 0.0);
    }

    #[test]
    fn full_and_empty_grids() {
        let mut g = grid([4, 5, 6], 0.5);
        assert!(matches!(esdf_with_cap(&g, None), Err(Error::InvalidArgument(_))));
        let e = esdf_from_occupancy(&g).unwrap();
        assert!(e.field.values.iter().all(|&v| v == DEFAULT_D_MAX));
        g.occupied.iter_mut().for_each(|o| *o = true);
        assert!(esdf_from_occupancy(&g).unwrap().field.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_brute_force_on_random_grids() {
        let mut r = crate::rng::rng(17);
        for _ in 0..30 {
            let dims = [r.random_range(1..14), r.random_range(1..14), r.random_range(1..14)];
            let mut g = grid(dims, 0.3);
            let p: f64 = r.random_range(0.0..0.2);
            g.occupied.iter_mut().for_each(|o| *o = r.random_bool(p));
            let cap = if g.count() == 0 { Some(2.0) } else { None };
            assert_eq!(esdf_with_cap(&g, cap).unwrap().field.values, esdf_brute_force(&g, cap));
        }
    }

    #[test]
    fn neighbours_are_lipschitz() {
        let mut g = grid([12, 10, 8], 0.2);
        g.add_column(1.0, 1.0, 0.3, 1.0);
        let e = esdf_from_occupancy(&g).unwrap();
        let l = e.field.lattice;
        let mut equality = false;
        for idx in 0..l.len() {
            let [i, j, k] = l.ijk(idx);
            if i + 1 < l.dims[0] {
                let d = (e.field.at(i, j, k) - e.field.at(i + 1, j, k)).abs();
                assert!(d <= l.res + 1e-12);
                equality |= (d - l.res).abs() < 1e-12;
            }
        }
        assert!(equality);
    }

    #[test]
    fn primitives_mark_voxel_centers() {
        let mut g = grid([10, 10, 10], 0.5);
        g.add_box(P3::new(1.0, 1.0, 0.0), P3::new(2.0, 1.5, 1.0));
        assert_eq!(g.count(), 3 * 2 * 3);
        assert!(g.occupied_at(&P3::new(1.6, 1.4, 0.3)));
        assert!(!g.occupied_at(&P3::new(3.0, 1.4, 0.3)));
        assert!(!g.occupied_at(&P3::new(-3.0, 1.4, 0.3)));
    }
}

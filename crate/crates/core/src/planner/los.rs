use crate::error::{Error, Result};
use crate::geometry::{P3, V3};
use crate::pesdf::OccupancyGrid;

/// Whether `p` lies inside the union of voxel boxes of the grid.
pub fn in_grid_bounds(g: &OccupancyGrid, p: &P3) -> bool {
    let l = &g.lattice;
    let x = l.to_grid(p);
    (0..3).all(|a| x[a] >= -0.5 && x[a] <= l.dims[a] as f64 - 0.5)
}

/// Voxel traversal (Amanatides-Woo) from `a` to `b`. Voxels are closed boxes
/// of side `res` around their centers, so a segment that only touches an
/// occupied box on an edge or corner is blocked.
pub fn line_of_sight(a: &P3, b: &P3, g: &OccupancyGrid) -> Result<bool> {
    if !in_grid_bounds(g, a) || !in_grid_bounds(g, b) {
        return Err(Error::invalid("line-of-sight endpoint outside the grid"));
    }
    Ok(first_blocking_voxel(a, b, g).is_none())
}

/// First occupied voxel met on the way from `a` to `b`, if any. Both
/// endpoints must lie inside the grid bounds.
pub fn first_blocking_voxel(a: &P3, b: &P3, g: &OccupancyGrid) -> Option<[usize; 3]> {
    const TIE: f64 = 1e-12;
    let l = &g.lattice;
    // Grid coordinates in which voxel i spans [i - 0.5, i + 0.5].
    let ga = l.to_grid(a).add_scalar(0.5);
    let gb = l.to_grid(b).add_scalar(0.5);
    let d: V3 = gb - ga;
    let dims = l.dims.map(|n| n as i64);
    let mut cell = [0i64; 3];
    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    for ax in 0..3 {
        cell[ax] = (ga[ax].floor() as i64).clamp(0, dims[ax] - 1);
        if d[ax] > 0.0 {
            step[ax] = 1;
            t_max[ax] = ((cell[ax] + 1) as f64 - ga[ax]) / d[ax];
        } else if d[ax] < 0.0 {
            step[ax] = -1;
            t_max[ax] = (cell[ax] as f64 - ga[ax]) / d[ax];
        }
    }
    let in_box = |c: [i64; 3]| -> bool {
        (0..3).all(|ax| c[ax] >= 0 && c[ax] < dims[ax]) && g.is_occupied(c[0] as usize, c[1] as usize, c[2] as usize)
    };
    // Axes along which the whole segment lies in a face plane: the boxes on
    // the lower side of that plane are touched too.
    let planar: Vec<usize> = (0..3).filter(|&ax| d[ax] == 0.0 && ga[ax] == cell[ax] as f64 && cell[ax] > 0).collect();
    let occupied = |c: [i64; 3]| -> Option<[i64; 3]> {
        (0..1u32 << planar.len()).find_map(|mask| {
            let mut n = c;
            for (bit, &ax) in planar.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    n[ax] -= 1;
                }
            }
            in_box(n).then_some(n)
        })
    };
    // A segment starting on a face, edge or corner also touches the boxes
    // sharing it.
    let on_face: Vec<usize> = (0..3).filter(|&ax| d[ax] != 0.0 && ga[ax] == cell[ax] as f64 && cell[ax] > 0).collect();
    for mask in 1..1u32 << on_face.len() {
        let mut c = cell;
        for (bit, &ax) in on_face.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                c[ax] -= 1;
            }
        }
        if let Some(n) = occupied(c) {
            return Some(n.map(|v| v as usize));
        }
    }
    loop {
        if let Some(n) = occupied(cell) {
            return Some(n.map(|v| v as usize));
        }
        let t = t_max.iter().copied().fold(f64::INFINITY, f64::min);
        if t > 1.0 {
            return None;
        }
        let tied: Vec<usize> = (0..3).filter(|&ax| t_max[ax] <= t + TIE).collect();
        // Crossing an edge or corner: every box sharing it is touched.
        if tied.len() > 1 {
            for mask in 1..(1u32 << tied.len()) - 1 {
                let mut c = cell;
                for (bit, &ax) in tied.iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        c[ax] += step[ax];
                    }
                }
                if let Some(n) = occupied(c) {
                    return Some(n.map(|v| v as usize));
                }
            }
        }
        for &ax in &tied {
            cell[ax] += step[ax];
            // Recomputed rather than accumulated so exact contacts stay exact.
            let boundary = if step[ax] > 0 { cell[ax] + 1 } else { cell[ax] };
            t_max[ax] = (boundary as f64 - ga[ax]) / d[ax];
        }
        if (0..3).any(|ax| cell[ax] < 0 || cell[ax] >= dims[ax]) {
            return None;
        }
    }
}

/// Length of the part of segment `[a, b]` inside the closed box
/// `[lo, hi]`, by slab clipping.
pub fn segment_box_overlap(a: &P3, b: &P3, lo: &P3, hi: &P3) -> f64 {
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for ax in 0..3 {
        if d[ax] == 0.0 {
            if a[ax] < lo[ax] || a[ax] > hi[ax] {
                return -1.0;
            }
        } else {
            let (mut s0, mut s1) = ((lo[ax] - a[ax]) / d[ax], (hi[ax] - a[ax]) / d[ax]);
            if s0 > s1 {
                std::mem::swap(&mut s0, &mut s1);
            }
            t0 = t0.max(s0);
            t1 = t1.min(s1);
        }
    }
    if t0 > t1 {
        -1.0
    } else {
        (t1 - t0) * d.norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pesdf::Lattice;
    use rand::Rng;

    fn grid() -> OccupancyGrid {
        OccupancyGrid::empty(Lattice::new(P3::new(0.1, 0.1, 0.1), 0.2, [20, 20, 10]).unwrap())
    }

    /// Exhaustive reference: any occupied box the segment touches.
    fn slab_blocked(a: &P3, b: &P3, g: &OccupancyGrid) -> bool {
        let h = g.lattice.res / 2.0;
        (0..g.lattice.len()).any(|i| g.occupied[i] && {
            let c = g.lattice.center_of(i);
            segment_box_overlap(a, b, &(c - V3::repeat(h)), &(c + V3::repeat(h))) >= 0.0
        })
    }

    #[test]
    fn empty_grid_is_clear() {
        let g = grid();
        assert!(line_of_sight(&P3::new(0.1, 0.1, 0.1), &P3::new(3.9, 3.9, 1.9), &g).unwrap());
    }

    #[test]
    fn blocking_voxel_midway() {
        let mut g = grid();
        let c = g.lattice.index(10, 10, 5);
        g.occupied[c] = true;
        let mid = g.lattice.center_of(c);
        assert!(!line_of_sight(&(mid - V3::new(1.5, 0.3, 0.2)), &(mid + V3::new(1.5, 0.3, 0.2)), &g).unwrap());
        assert!(line_of_sight(&(mid + V3::new(-1.5, 0.0, 0.5)), &(mid + V3::new(1.5, 0.0, 0.5)), &g).unwrap());
    }

    #[test]
    fn out_of_bounds_is_rejected() {
        let g = grid();
        assert!(matches!(line_of_sight(&P3::new(-1.0, 0.5, 0.5), &P3::new(1.0, 1.0, 1.0), &g), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn corner_touch_is_blocking() {
        let mut g = grid();
        let c = g.lattice.index(5, 5, 5);
        g.occupied[c] = true;
        let corner = g.lattice.center_of(c) + V3::repeat(0.1);
        // Passes exactly through the box corner, diagonally in x-y.
        let a = corner + V3::new(-1.0, 1.0, 0.0);
        let b = corner + V3::new(1.0, -1.0, 0.0);
        assert!(slab_blocked(&a, &b, &g));
        assert!(!line_of_sight(&a, &b, &g).unwrap());
    }

    #[test]
    fn agrees_with_exhaustive_slab_test() {
        let mut r = crate::rng::rng(8);
        let mut g = grid();
        g.occupied.iter_mut().for_each(|o| *o = r.random_bool(0.02));
        let pt = |r: &mut crate::rng::Rng| P3::new(r.random_range(0.0..4.0), r.random_range(0.0..4.0), r.random_range(0.0..2.0));
        for _ in 0..2000 {
            let (a, b) = (pt(&mut r), pt(&mut r));
            assert_eq!(line_of_sight(&a, &b, &g).unwrap(), !slab_blocked(&a, &b, &g), "{a} -> {b}");
        }
    }

    #[test]
    fn agrees_on_face_aligned_segments() {
        let mut r = crate::rng::rng(9);
        // Dyadic lattice so touching contacts are exact in floating point.
        let mut g = OccupancyGrid::empty(Lattice::new(P3::new(0.125, 0.125, 0.125), 0.25, [16, 16, 8]).unwrap());
        g.occupied.iter_mut().for_each(|o| *o = r.random_bool(0.05));
        // Multiples of half a voxel hit faces, edges and corners.
        let pt = |r: &mut crate::rng::Rng| P3::new(r.random_range(0..=32) as f64 * 0.125, r.random_range(0..=32) as f64 * 0.125, r.random_range(0..=16) as f64 * 0.125);
        for _ in 0..20_000 {
            let (a, b) = (pt(&mut r), pt(&mut r));
            assert_eq!(line_of_sight(&a, &b, &g).unwrap(), !slab_blocked(&a, &b, &g), "{a} -> {b}");
        }
    }

    /// Samples at `res / 4` spacing; blocked when a sample falls in an occupied box.
    fn sampled_blocked(a: &P3, b: &P3, g: &OccupancyGrid) -> bool {
        let res = g.lattice.res;
        let n = ((b - a).norm() / (res / 4.0)).ceil().max(1.0) as usize;
        (0..=n).any(|k| {
            let p = a + (b - a) * (k as f64 / n as f64);
            let x = g.lattice.to_grid(&p);
            let c = x.map(|v| v.round() as i64);
            (0..3).all(|ax| c[ax] >= 0 && c[ax] < g.lattice.dims[ax] as i64) && g.is_occupied(c[0] as usize, c[1] as usize, c[2] as usize)
        })
    }

    fn max_overlap(a: &P3, b: &P3, g: &OccupancyGrid) -> f64 {
        let h = g.lattice.res / 2.0;
        (0..g.lattice.len())
            .filter(|&i| g.occupied[i])
            .map(|i| {
                let c = g.lattice.center_of(i);
                segment_box_overlap(a, b, &(c - V3::repeat(h)), &(c + V3::repeat(h)))
            })
            .fold(-1.0, f64::max)
    }

    #[test]
    fn sampler_disagrees_only_on_grazing_hits() {
        let mut r = crate::rng::rng(10);
        let mut g = grid();
        g.occupied.iter_mut().for_each(|o| *o = r.random_bool(0.01));
        let pt = |r: &mut crate::rng::Rng| P3::new(r.random_range(0.0..4.0), r.random_range(0.0..4.0), r.random_range(0.0..2.0));
        let mut disagree = 0;
        for _ in 0..10_000 {
            let (a, b) = (pt(&mut r), pt(&mut r));
            let dda = !line_of_sight(&a, &b, &g).unwrap();
            let sampled = sampled_blocked(&a, &b, &g);
            if dda != sampled {
                assert!(dda && max_overlap(&a, &b, &g) < g.lattice.res / 4.0, "{a} -> {b}");
                disagree += 1;
            }
        }
        assert!(disagree < 10_000);
    }
}

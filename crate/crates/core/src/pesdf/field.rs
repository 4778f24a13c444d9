use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geometry::{P3, V3};

const MAGIC: &[u8; 4] = b"PESD";

/// Regular voxel lattice. Voxel `(i, j, k)` has its center, the sample node,
/// at `origin + res * (i, j, k)`. Flat storage is row-major with `k`
/// fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub origin: P3,
    pub res: f64,
    pub dims: [usize; 3],
}

impl Lattice {
    pub fn new(origin: P3, res: f64, dims: [usize; 3]) -> Result<Self> {
        if !(res > 0.0 && res.is_finite()) {
            return Err(Error::invalid(format!("resolution {res} must be positive")));
        }
        if dims.contains(&0) {
            return Err(Error::invalid(format!("lattice dims {dims:?} must be >= 1")));
        }
        if !origin.coords.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("lattice origin must be finite"));
        }
        Ok(Lattice { origin, res, dims })
    }

    /// Lattice covering the box `[min, max]` with nodes starting at `min`.
    pub fn covering(min: P3, max: P3, res: f64) -> Result<Self> {
        let n = |a: f64, b: f64| ((b - a) / res).round().max(0.0) as usize + 1;
        Self::new(min, res, [n(min.x, max.x), n(min.y, max.y), n(min.z, max.z)])
    }

    /// Window of `self` with at least the given extent, centered near
    /// `center` and snapped so that its nodes coincide with nodes of `self`.
    pub fn aligned_window(&self, center: P3, extent: V3) -> Result<Self> {
        let mut dims = [0; 3];
        let mut origin = P3::origin();
        for a in 0..3 {
            let n = (extent[a] / self.res).round() as usize + 1;
            let first = ((center[a] - extent[a] / 2.0 - self.origin[a]) / self.res).round();
            origin[a] = self.origin[a] + first * self.res;
            dims[a] = n;
        }
        Self::new(origin, self.res, dims)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.dims[2];
        let j = (idx / self.dims[2]) % self.dims[1];
        [idx / (self.dims[1] * self.dims[2]), j, k]
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> P3 {
        self.origin + V3::new(i as f64, j as f64, k as f64) * self.res
    }

    pub fn center_of(&self, idx: usize) -> P3 {
        let [i, j, k] = self.ijk(idx);
        self.center(i, j, k)
    }

    /// Last node position along each axis.
    pub fn max_corner(&self) -> P3 {
        self.center(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    /// Continuous grid coordinates of a world point.
    pub fn to_grid(&self, p: &P3) -> V3 {
        (p - self.origin) / self.res
    }

    /// Whether `p` lies in the node hull, where interpolation is defined.
    pub fn contains(&self, p: &P3) -> bool {
        let g = self.to_grid(p);
        (0..3).all(|a| g[a] >= 0.0 && g[a] <= (self.dims[a] - 1) as f64)
    }

    /// Nearest voxel of a point inside the voxel cells, if any.
    pub fn voxel_of(&self, p: &P3) -> Option<[usize; 3]> {
        let g = self.to_grid(p);
        let mut out = [0; 3];
        for a in 0..3 {
            let v = g[a].round();
            if !(v >= 0.0 && v < self.dims[a] as f64) {
                return None;
            }
            out[a] = v as usize;
        }
        Some(out)
    }
}

/// Scalar values on a [`Lattice`] with trilinear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Field3 {
    pub lattice: Lattice,
    pub values: Vec<f64>,
}

impl Field3 {
    pub fn new(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::invalid(format!("{} values for a lattice of {}", values.len(), lattice.len())));
        }
        Ok(Field3 { lattice, values })
    }

    pub fn from_fn(lattice: Lattice, f: impl Fn(P3) -> f64) -> Self {
        let values = (0..lattice.len()).map(|i| f(lattice.center_of(i))).collect();
        Field3 { lattice, values }
    }

    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.lattice.index(i, j, k)]
    }

    /// Trilinear value and analytic gradient at `p`, after clamping `p` into
    /// the node hull. Along a clamped axis the gradient is zero.
    pub fn sample_clamped(&self, p: &P3) -> (f64, V3) {
        let l = &self.lattice;
        let g = l.to_grid(p);
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        let mut live = [true; 3];
        for a in 0..3 {
            let hi = (l.dims[a] - 1) as f64;
            let x = if g[a].is_nan() { 0.0 } else { g[a] };
            live[a] = l.dims[a] > 1 && (0.0..=hi).contains(&x);
            let x = x.clamp(0.0, hi);
            // Cell [b, b+1] with b <= x; the last node belongs to the cell below.
            let b = if l.dims[a] == 1 { 0 } else { (x.floor() as usize).min(l.dims[a] - 2) };
            base[a] = b;
            frac[a] = x - b as f64;
        }
        let v = |di: usize, dj: usize, dk: usize| {
            let i = (base[0] + di).min(l.dims[0] - 1);
            let j = (base[1] + dj).min(l.dims[1] - 1);
            let k = (base[2] + dk).min(l.dims[2] - 1);
            self.at(i, j, k)
        };
        let [fx, fy, fz] = frac;
        let c = [[[v(0, 0, 0), v(0, 0, 1)], [v(0, 1, 0), v(0, 1, 1)]], [[v(1, 0, 0), v(1, 0, 1)], [v(1, 1, 0), v(1, 1, 1)]]];
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        // Bilinear planes in (y, z) at x = base and x = base + 1.
        let plane = |ci: &[[f64; 2]; 2]| lerp(lerp(ci[0][0], ci[0][1], fz), lerp(ci[1][0], ci[1][1], fz), fy);
        let value = lerp(plane(&c[0]), plane(&c[1]), fx);
        let dx = plane(&c[1]) - plane(&c[0]);
        let dy = lerp(lerp(c[0][1][0], c[0][1][1], fz) - lerp(c[0][0][0], c[0][0][1], fz), lerp(c[1][1][0], c[1][1][1], fz) - lerp(c[1][0][0], c[1][0][1], fz), fx);
        let dz = lerp(lerp(c[0][0][1] - c[0][0][0], c[0][1][1] - c[0][1][0], fy), lerp(c[1][0][1] - c[1][0][0], c[1][1][1] - c[1][1][0], fy), fx);
        let mut grad = V3::new(dx, dy, dz) / l.res;
        for a in 0..3 {
            if !live[a] {
                grad[a] = 0.0;
            }
        }
        (value, grad)
    }

    /// Trilinear value and gradient; points outside the node hull give
    /// [`Error::OutOfBounds`] carrying the clamped value.
    pub fn sample(&self, p: &P3) -> Result<(f64, V3)> {
        let (v, g) = self.sample_clamped(p);
        if self.lattice.contains(p) {
            Ok((v, g))
        } else {
            Err(Error::OutOfBounds { value: v })
        }
    }

    /// Resample onto another lattice by clamped trilinear interpolation.
    pub fn resample(&self, target: &Lattice) -> Field3 {
        Field3::from_fn(*target, |p| self.sample_clamped(&p).0)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Flat binary export: `PESD`, origin and resolution as little-endian f64,
/// dims as little-endian u32, then the values with `k` fastest.
pub fn write_field<W: Write>(mut w: W, f: &Field3) -> Result<()> {
    let l = &f.lattice;
    w.write_all(MAGIC)?;
    for c in [l.origin.x, l.origin.y, l.origin.z, l.res] {
        w.write_all(&c.to_le_bytes())?;
    }
    for d in l.dims {
        let d = u32::try_from(d).map_err(|_| Error::invalid("lattice too large for export"))?;
        w.write_all(&d.to_le_bytes())?;
    }
    for v in &f.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> Result<Field3> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::format("truncated field file"))?;
    if &magic != MAGIC {
        return Err(Error::format("not a PESD field file"));
    }
    let mut b8 = [0u8; 8];
    let mut f = [0.0; 4];
    for c in &mut f {
        r.read_exact(&mut b8).map_err(|_| Error::format("truncated field header"))?;
        *c = f64::from_le_bytes(b8);
    }
    let mut dims = [0usize; 3];
    let mut b4 = [0u8; 4];
    for d in &mut dims {
        r.read_exact(&mut b4).map_err(|_| Error::format("truncated field header"))?;
        *d = u32::from_le_bytes(b4) as usize;
    }
    let lattice = Lattice::new(P3::new(f[0], f[1], f[2]), f[3], dims).map_err(|e| Error::format(e.to_string()))?;
    let mut values = Vec::with_capacity(lattice.len().min(1 << 26));
    for _ in 0..lattice.len() {
        r.read_exact(&mut b8).map_err(|_| Error::format("truncated field payload"))?;
        values.push(f64::from_le_bytes(b8));
    }
    if r.read(&mut b8)? != 0 {
        return Err(Error::format("trailing bytes after field payload"));
    }
    Field3::new(lattice, values)
}

/// CSV of one `k` plane: `x,y,z,value` per node.
pub fn write_slice_csv<W: Write>(mut w: W, f: &Field3, k: usize) -> Result<()> {
    let l = &f.lattice;
    if k >= l.dims[2] {
        return Err(Error::invalid(format!("slice {k} outside {} z-planes", l.dims[2])));
    }
    writeln!(w, "x,y,z,value")?;
    for i in 0..l.dims[0] {
        for j in 0..l.dims[1] {
            let p = l.center(i, j, k);
            writeln!(w, "{},{},{},{}", p.x, p.y, p.z, f.at(i, j, k))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn lat() -> Lattice {
        Lattice::new(P3::new(-1.0, 2.0, 0.5), 0.25, [6, 5, 4]).unwrap()
    }

    #[test]
    fn index_round_trip() {
        let l = lat();
        for idx in 0..l.len() {
            let [i, j, k] = l.ijk(idx);
            assert_eq!(l.index(i, j, k), idx);
        }
        assert_eq!(l.index(0, 0, 1), 1);
    }

    #[test]
    fn node_values_are_exact() {
        let l = lat();
        let f = Field3::from_fn(l, |p| (p.x * 3.0).sin() + p.y * p.z);
        for idx in 0..l.len() {
            assert_eq!(f.sample(&l.center_of(idx)).unwrap().0, f.values[idx]);
        }
    }

    #[test]
    fn linear_field_gradient_is_exact() {
        let l = lat();
        let a = V3::new(0.7, -1.3, 2.1);
        let f = Field3::from_fn(l, |p| a.dot(&p.coords) + 0.4);
        for p in [P3::new(-0.9, 2.1, 0.6), P3::new(0.1, 2.9, 1.2), P3::new(0.24, 2.5, 1.0)] {
            let (v, g) = f.sample(&p).unwrap();
            assert_relative_eq!(v, a.dot(&p.coords) + 0.4, epsilon = 1e-12);
            assert_relative_eq!(g, a, epsilon = 1e-12);
        }
    }

    #[test]
    fn outside_reports_clamped_value() {
        let l = lat();
        let f = Field3::from_fn(l, |p| p.x);
        match f.sample(&P3::new(-5.0, 2.5, 1.0)) {
            Err(Error::OutOfBounds { value }) => assert_eq!(value, -1.0),
            other => panic!("{other:?}"),
        }
        let (_, g) = f.sample_clamped(&P3::new(-5.0, 2.5, 1.0));
        assert_eq!(g.x, 0.0);
    }

    #[test]
    fn smooth_field_gradient_matches_differences() {
        let l = lat();
        let f = Field3::from_fn(l, |p| (p.x * 1.3).sin() * (p.y * 0.7).cos() + p.z * p.z);
        let h = 1e-4;
        for p in [P3::new(-0.83, 2.11, 0.61), P3::new(0.07, 2.62, 1.13), P3::new(-0.4, 2.37, 0.88)] {
            let (_, g) = f.sample(&p).unwrap();
            for a in 0..3 {
                let mut e = V3::zeros();
                e[a] = h;
                let fd = (f.sample(&(p + e)).unwrap().0 - f.sample(&(p - e)).unwrap().0) / (2.0 * h);
                assert!((fd - g[a]).abs() <= 1e-6 * g[a].abs().max(1.0), "axis {a}: {fd} vs {}", g[a]);
            }
        }
    }

    #[test]
    fn aligned_window_shares_nodes() {
        let l = Lattice::new(P3::new(-20.0, -20.0, 0.0), 0.2, [201, 201, 26]).unwrap();
        let w = l.aligned_window(P3::new(3.33, -7.01, 2.5), V3::new(10.0, 10.0, 5.0)).unwrap();
        assert_eq!(w.dims, [51, 51, 26]);
        let g = l.to_grid(&w.origin);
        for a in 0..3 {
            assert!((g[a] - g[a].round()).abs() < 1e-9);
        }
    }

    #[test]
    fn binary_and_slice_export() {
        let f = Field3::from_fn(lat(), |p| p.x + 10.0 * p.y - p.z);
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        assert_eq!(&buf[..4], b"PESD");
        assert_eq!(buf.len(), 4 + 32 + 12 + 8 * f.values.len());
        assert_eq!(read_field(buf.as_slice()).unwrap(), f);
        assert!(read_field(&buf[..buf.len() - 3]).is_err());
        let mut csv = Vec::new();
        write_slice_csv(&mut csv, &f, 2).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 6 * 5);
        assert!(write_slice_csv(Vec::new(), &f, 4).is_err());
    }

    proptest! {
        #[test]
        fn continuous_across_cell_faces(vals in prop::collection::vec(-10.0..10.0f64, 27), y in 0.0..2.0f64, z in 0.0..2.0f64) {
            let l = Lattice::new(P3::origin(), 1.0, [3, 3, 3]).unwrap();
            let f = Field3::new(l, vals).unwrap();
            let below = f.sample_clamped(&P3::new(1.0 - 1e-13, y, z)).0;
            let at = f.sample_clamped(&P3::new(1.0, y, z)).0;
            let above = f.sample_clamped(&P3::new(1.0 + 1e-13, y, z)).0;
            prop_assert!((below - at).abs() < 1e-11 && (above - at).abs() < 1e-11);
        }
    }
}

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{BoxRegion, ParabolicCube};
use crate::scalar::Real;

/// Uniform tensor grid over a space-time box, `n` in `{1, 2}`.
///
/// Nodes are stored time-major; within a time level the first space axis
/// varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid<T> {
    n: usize,
    nx: usize,
    nt: usize,
    x_lo: Vec<T>,
    x_hi: Vec<T>,
    t_lo: T,
    t_hi: T,
    values: Vec<T>,
}

impl<T: Real> SpaceTimeGrid<T> {
    pub fn new(region: &BoxRegion<T>, nx: usize, nt: usize, values: Vec<T>) -> Result<Self> {
        let n = region.space_dim();
        if n == 0 || n > 2 {
            return invalid("grids support n = 1 or 2");
        }
        if nx < 3 || nt < 2 {
            return invalid("grid needs nx >= 3 and nt >= 2");
        }
        if values.len() != nx.pow(n as u32) * nt {
            return invalid("value count does not match grid shape");
        }
        if region.lo.iter().zip(&region.hi).any(|(a, b)| !(a < b)) {
            return invalid("degenerate grid bounds");
        }
        Ok(Self {
            n,
            nx,
            nt,
            x_lo: region.lo[..n].to_vec(),
            x_hi: region.hi[..n].to_vec(),
            t_lo: region.lo[n],
            t_hi: region.hi[n],
            values,
        })
    }

    pub fn from_fn(region: &BoxRegion<T>, nx: usize, nt: usize, f: impl Fn(&[T], T) -> T) -> Result<Self> {
        let mut g = Self::new(region, nx, nt, vec![T::zero(); nx.pow(region.space_dim() as u32) * nt])?;
        let mut x = vec![T::zero(); g.n];
        for k in 0..nt {
            let t = g.time(k);
            let m = g.space_len();
            for s in 0..m {
                g.space_coords(s, &mut x);
                let v = f(&x, t);
                g.values[k * m + s] = v;
            }
        }
        Ok(g)
    }

    /// Grid over `Q_rho(x0, t0)` including its boundary.
    pub fn over_cube(cube: &ParabolicCube<T>, nx: usize, nt: usize, f: impl Fn(&[T], T) -> T) -> Result<Self> {
        Self::from_fn(&cube.as_box(), nx, nt, f)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn region(&self) -> BoxRegion<T> {
        let mut lo = self.x_lo.clone();
        let mut hi = self.x_hi.clone();
        lo.push(self.t_lo);
        hi.push(self.t_hi);
        BoxRegion { lo, hi }
    }

    pub fn space_len(&self) -> usize {
        self.nx.pow(self.n as u32)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn dx(&self, axis: usize) -> T {
        (self.x_hi[axis] - self.x_lo[axis]) / T::from_usize(self.nx - 1).unwrap()
    }

    pub fn dt(&self) -> T {
        (self.t_hi - self.t_lo) / T::from_usize(self.nt - 1).unwrap()
    }

    pub fn coord(&self, axis: usize, i: usize) -> T {
        if i == self.nx - 1 {
            return self.x_hi[axis];
        }
        self.x_lo[axis] + self.dx(axis) * T::from_usize(i).unwrap()
    }

    pub fn time(&self, k: usize) -> T {
        if k == self.nt - 1 {
            return self.t_hi;
        }
        self.t_lo + self.dt() * T::from_usize(k).unwrap()
    }

    /// Space multi-index of flat space index `s`.
    pub fn space_index(&self, s: usize) -> [usize; 2] {
        [s % self.nx, s / self.nx]
    }

    pub fn space_coords(&self, s: usize, out: &mut [T]) {
        let idx = self.space_index(s);
        for a in 0..self.n {
            out[a] = self.coord(a, idx[a]);
        }
    }

    pub fn flat(&self, k: usize, idx: &[usize]) -> usize {
        let s = if self.n == 1 { idx[0] } else { idx[0] + self.nx * idx[1] };
        k * self.space_len() + s
    }

    pub fn at(&self, k: usize, idx: &[usize]) -> T {
        self.values[self.flat(k, idx)]
    }

    pub fn set(&mut self, k: usize, idx: &[usize], v: T) {
        let f = self.flat(k, idx);
        self.values[f] = v;
    }

    pub fn slice(&self, k: usize) -> &[T] {
        let m = self.space_len();
        &self.values[k * m..(k + 1) * m]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        let mut g = self.clone();
        g.values.iter_mut().for_each(|v| *v = f(*v));
        g
    }

    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        Self::new(&self.region(), self.nx, self.nt, values)
    }

    /// Fractional grid coordinate of `v` along an axis with `count` nodes.
    fn locate(lo: T, hi: T, count: usize, v: T) -> Option<(usize, T)> {
        if !(v >= lo && v <= hi) {
            return None;
        }
        let h = (hi - lo) / T::from_usize(count - 1).unwrap();
        let f = ((v - lo) / h).floor();
        let i = f.to_usize().unwrap_or(0).min(count - 2);
        let w = (v - lo) / h - T::from_usize(i).unwrap();
        Some((i, w.max(T::zero()).min(T::one())))
    }

    /// Multilinear interpolation; `None` outside the grid box.
    pub fn interpolate(&self, x: &[T], t: T) -> Option<T> {
        let (kt, wt) = Self::locate(self.t_lo, self.t_hi, self.nt, t)?;
        let mut cell = [(0usize, T::zero()); 2];
        for a in 0..self.n {
            cell[a] = Self::locate(self.x_lo[a], self.x_hi[a], self.nx, x[a])?;
        }
        let lerp = |a: T, b: T, w: T| if a == b { a } else { a + w * (b - a) };
        let space = |k: usize| -> T {
            if self.n == 1 {
                let (i, w) = cell[0];
                lerp(self.at(k, &[i]), self.at(k, &[i + 1]), w)
            } else {
                let ((i, wi), (j, wj)) = (cell[0], cell[1]);
                let lo = lerp(self.at(k, &[i, j]), self.at(k, &[i + 1, j]), wi);
                let hi = lerp(self.at(k, &[i, j + 1]), self.at(k, &[i + 1, j + 1]), wi);
                lerp(lo, hi, wj)
            }
        };
        Some(lerp(space(kt), space(kt + 1), wt))
    }

    /// Little-endian binary: `n, nx, nt` as u64, bounds (`lo, hi` per space
    /// axis then time) as f64, then all values as f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for v in [self.n as u64, self.nx as u64, self.nt as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        for a in 0..self.n {
            w.write_all(&self.x_lo[a].to_f64().unwrap().to_le_bytes())?;
            w.write_all(&self.x_hi[a].to_f64().unwrap().to_le_bytes())?;
        }
        w.write_all(&self.t_lo.to_f64().unwrap().to_le_bytes())?;
        w.write_all(&self.t_hi.to_f64().unwrap().to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_f64().unwrap().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let io = |e: std::io::Error| Error::InvalidArgument(format!("grid read failed: {e}"));
        let mut b8 = [0u8; 8];
        let mut next_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut b8).map_err(io)?;
            Ok(u64::from_le_bytes(b8))
        };
        let n = next_u64(&mut r)? as usize;
        let nx = next_u64(&mut r)? as usize;
        let nt = next_u64(&mut r)? as usize;
        if n == 0 || n > 2 || nx > 1 << 16 || nt > 1 << 24 {
            return invalid("grid header out of range");
        }
        let next_f64 = |r: &mut R| -> Result<T> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(io)?;
            T::from_f64(f64::from_le_bytes(b)).ok_or(Error::NonFinite("grid value"))
        };
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for _ in 0..=n {
            lo.push(next_f64(&mut r)?);
            hi.push(next_f64(&mut r)?);
        }
        let count = nx.pow(n as u32) * nt;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(next_f64(&mut r)?);
        }
        Self::new(&BoxRegion::new(lo, hi)?, nx, nt, values)
    }

    /// CSV with columns `t, x1[, x2], u`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for a in 0..self.n {
            s.push_str(&format!(",x{}", a + 1));
        }
        s.push_str(",u\n");
        let mut x = vec![T::zero(); self.n];
        for k in 0..self.nt {
            let t = self.time(k);
            for sidx in 0..self.space_len() {
                self.space_coords(sidx, &mut x);
                s.push_str(&format!("{t}"));
                for v in &x {
                    s.push_str(&format!(",{v}"));
                }
                s.push_str(&format!(",{}\n", self.values[k * self.space_len() + sidx]));
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize) -> BoxRegion<f64> {
        let mut lo = vec![-1.0; n];
        let mut hi = vec![1.0; n];
        lo.push(-1.0);
        hi.push(0.0);
        BoxRegion::new(lo, hi).unwrap()
    }

    #[test]
    fn spacing_matches_cube() {
        let q = ParabolicCube::origin(1, 2.0).unwrap();
        let g = SpaceTimeGrid::over_cube(&q, 101, 41, |_, _| 0.0).unwrap();
        assert_eq!(g.dx(0), 4.0 / 100.0);
        assert_eq!(g.dt(), 4.0 / 40.0);
        assert_eq!(g.time(40), 0.0);
    }

    #[test]
    fn interpolation_is_exact_on_affine_data() {
        let g = SpaceTimeGrid::from_fn(&unit(2), 9, 5, |x, t| 1.0 + 2.0 * x[0] - x[1] + 3.0 * t).unwrap();
        let v = g.interpolate(&[0.3, -0.71], -0.37).unwrap();
        assert!((v - (1.0 + 0.6 + 0.71 - 1.11)).abs() < 1e-13);
        let c = SpaceTimeGrid::from_fn(&unit(1), 9, 5, |_, _| 0.7).unwrap();
        assert_eq!(c.interpolate(&[0.123], -0.456).unwrap(), 0.7);
        assert!(g.interpolate(&[1.5, 0.0], -0.5).is_none());
    }

    #[test]
    fn binary_roundtrip() {
        let g = SpaceTimeGrid::from_fn(&unit(2), 5, 3, |x, t| x[0] * x[1] + t).unwrap();
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 24 + 6 * 8 + 75 * 8);
        let h = SpaceTimeGrid::<f64>::read_binary(&buf[..]).unwrap();
        assert_eq!(g, h);
        assert!(SpaceTimeGrid::<f64>::read_binary(&buf[..30]).is_err());
    }

    #[test]
    fn csv_shape() {
        let g = SpaceTimeGrid::from_fn(&unit(1), 3, 2, |x, _| x[0]).unwrap();
        let csv = g.to_csv();
        assert!(csv.starts_with("t,x1,u\n-1,-1,-1\n"));
        assert_eq!(csv.lines().count(), 7);
    }
}

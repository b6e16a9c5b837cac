use std::cmp::Ordering;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::BoxRegion;
use crate::scalar::{exact_int, Exact, Scalar};

/// Exact dyadic rational `num / 2^exp`, kept in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dyadic {
    num: i128,
    exp: u32,
}

impl Dyadic {
    pub fn new(num: i128, exp: u32) -> Self {
        let mut d = Self { num, exp };
        d.normalize();
        d
    }

    pub fn int(k: i128) -> Self {
        Self { num: k, exp: 0 }
    }

    pub fn zero() -> Self {
        Self::int(0)
    }

    fn normalize(&mut self) {
        if self.num == 0 {
            self.exp = 0;
            return;
        }
        let tz = self.num.trailing_zeros().min(self.exp);
        self.num >>= tz;
        self.exp -= tz;
    }

    pub fn numerator(&self) -> i128 {
        self.num
    }

    pub fn exponent(&self) -> u32 {
        self.exp
    }

    fn aligned(self, other: Self) -> (i128, i128, u32) {
        let e = self.exp.max(other.exp);
        (self.num << (e - self.exp), other.num << (e - other.exp), e)
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / 2f64.powi(self.exp as i32)
    }

    pub fn to_exact(&self) -> Exact {
        Exact::new(self.num.into(), num_bigint::BigInt::from(1) << self.exp)
    }

    pub fn to_scalar<T: Scalar>(&self) -> T {
        let num = T::from_i128(self.num).expect("dyadic numerator");
        let den = T::from_f64(2f64.powi(self.exp as i32)).expect("power of two");
        num / den
    }
}

impl Add for Dyadic {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let (a, b, e) = self.aligned(o);
        Self::new(a + b, e)
    }
}

impl Sub for Dyadic {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Neg for Dyadic {
    type Output = Self;
    fn neg(self) -> Self {
        Self { num: -self.num, exp: self.exp }
    }
}

impl Mul for Dyadic {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.num * o.num, self.exp + o.exp)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b, _) = self.aligned(*other);
        a.cmp(&b)
    }
}

/// Dyadic sub-cube of a root `(x0, t0) + (-s, s)^n x (0, s^2)`.
///
/// Splitting halves every space side and quarters the time side, giving
/// `2^(n+2)` children. Position is kept as integer indices at `depth`, so all
/// bounds relative to the root are exact dyadic rationals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicCube<T> {
    pub root_center: Vec<T>,
    pub root_t0: T,
    pub root_s: T,
    pub depth: u32,
    pub space: Vec<u64>,
    pub time: u64,
}

impl<T: Scalar> DyadicCube<T> {
    pub fn root(center: Vec<T>, t0: T, s: T) -> Result<Self> {
        let n = center.len();
        if n == 0 || n > 3 || s <= T::zero() {
            return invalid("dyadic root needs 1..=3 space axes and s > 0");
        }
        Ok(Self { root_center: center, root_t0: t0, root_s: s, depth: 0, space: vec![0; n], time: 0 })
    }

    pub fn dim(&self) -> usize {
        self.space.len()
    }

    pub fn child_count(&self) -> usize {
        1 << (self.dim() + 2)
    }

    /// Child `c`: bit `i` picks the space half on axis `i`, bits `n..n+2` the time quarter.
    pub fn child(&self, c: usize) -> Self {
        let n = self.dim();
        let mut k = self.clone();
        k.depth += 1;
        for i in 0..n {
            k.space[i] = 2 * self.space[i] + ((c >> i) & 1) as u64;
        }
        k.time = 4 * self.time + ((c >> n) & 3) as u64;
        k
    }

    pub fn children(&self) -> Vec<Self> {
        (0..self.child_count()).map(|c| self.child(c)).collect()
    }

    /// The cube this one was split from.
    pub fn parent(&self) -> Option<Self> {
        if self.depth == 0 {
            return None;
        }
        let mut p = self.clone();
        p.depth -= 1;
        p.space.iter_mut().for_each(|k| *k /= 2);
        p.time /= 4;
        Some(p)
    }

    /// Child indices from the root down to this cube.
    pub fn path(&self) -> Vec<usize> {
        let n = self.dim();
        (1..=self.depth)
            .map(|level| {
                let shift = self.depth - level;
                let mut c = 0usize;
                for i in 0..n {
                    c |= (((self.space[i] >> shift) & 1) as usize) << i;
                }
                c | ((((self.time >> (2 * shift)) & 3) as usize) << n)
            })
            .collect()
    }

    pub fn from_path(root: &Self, path: &[usize]) -> Self {
        path.iter().fold(root.clone(), |k, &c| k.child(c))
    }

    /// Bounds relative to the root, in units where the root is `(-1,1)^n x (0,1)`.
    pub fn normalized_bounds(&self) -> (Vec<Dyadic>, Vec<Dyadic>) {
        let d = self.depth;
        let mut lo = Vec::with_capacity(self.dim() + 1);
        let mut hi = Vec::with_capacity(self.dim() + 1);
        for &k in &self.space {
            let base = -(1i128 << d);
            lo.push(Dyadic::new(base + 2 * k as i128, d));
            hi.push(Dyadic::new(base + 2 * k as i128 + 2, d));
        }
        lo.push(Dyadic::new(self.time as i128, 2 * d));
        hi.push(Dyadic::new(self.time as i128 + 1, 2 * d));
        (lo, hi)
    }

    /// Measure relative to the root's `s^(n+2)`.
    pub fn normalized_measure(&self) -> Dyadic {
        let (lo, hi) = self.normalized_bounds();
        lo.iter().zip(&hi).fold(Dyadic::int(1), |acc, (a, b)| acc * (*b - *a))
    }

    pub fn measure_exact(&self) -> Exact {
        let s = Exact::from_f64_checked(self.root_s.to_f64_lossy()).unwrap_or_else(|| exact_int(0));
        self.normalized_measure().to_exact() * s.pow(self.dim() as i32 + 2)
    }

    fn physical(&self, lo: &[Dyadic], hi: &[Dyadic]) -> BoxRegion<T> {
        let n = self.dim();
        let s = self.root_s.clone();
        let s2 = s.clone() * s.clone();
        let mut blo = Vec::with_capacity(n + 1);
        let mut bhi = Vec::with_capacity(n + 1);
        for i in 0..n {
            blo.push(self.root_center[i].clone() + s.clone() * lo[i].to_scalar::<T>());
            bhi.push(self.root_center[i].clone() + s.clone() * hi[i].to_scalar::<T>());
        }
        blo.push(self.root_t0.clone() + s2.clone() * lo[n].to_scalar::<T>());
        bhi.push(self.root_t0.clone() + s2 * hi[n].to_scalar::<T>());
        BoxRegion { lo: blo, hi: bhi }
    }

    pub fn as_box(&self) -> BoxRegion<T> {
        let (lo, hi) = self.normalized_bounds();
        self.physical(&lo, &hi)
    }

    /// `Omega x (b, b + m (b - a))` where `Omega x (a, b)` is the parent.
    pub fn stacked_predecessor_normalized(&self, m: u32) -> Option<(Vec<Dyadic>, Vec<Dyadic>)> {
        let (mut lo, mut hi) = self.parent()?.normalized_bounds();
        let n = self.dim();
        let (a, b) = (lo[n], hi[n]);
        lo[n] = b;
        hi[n] = b + Dyadic::int(m as i128) * (b - a);
        Some((lo, hi))
    }

    pub fn stacked_predecessor(&self, m: u32) -> Option<BoxRegion<T>> {
        let (lo, hi) = self.stacked_predecessor_normalized(m)?;
        Some(self.physical(&lo, &hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dyadic_arithmetic() {
        let a = Dyadic::new(3, 2);
        let b = Dyadic::new(1, 1);
        assert_eq!(a + b, Dyadic::new(5, 2));
        assert_eq!(a - b, Dyadic::new(1, 2));
        assert_eq!(a * b, Dyadic::new(3, 3));
        assert_eq!(Dyadic::new(4, 3), Dyadic::new(1, 1));
        assert!(b < a);
        assert_eq!(a.to_f64(), 0.75);
    }

    #[test]
    fn children_partition_parent() {
        for n in 1..=3 {
            let root = DyadicCube::root(vec![0.0; n], 0.0, 1.0).unwrap();
            let kids = root.children();
            assert_eq!(kids.len(), 1 << (n + 2));
            let total = kids.iter().fold(Dyadic::zero(), |acc, k| acc + k.normalized_measure());
            assert_eq!(total, root.normalized_measure());
            assert_eq!(root.normalized_measure(), Dyadic::int(1 << n));
            for k in &kids {
                assert_eq!(k.parent().unwrap(), root);
                assert!(root.as_box().contains_box(&k.as_box()));
            }
        }
    }

    #[test]
    fn predecessor_stack_geometry() {
        let root = DyadicCube::root(vec![0.0], -1.0, 1.0).unwrap();
        let k = root.child(0).child(5);
        let bar = k.parent().unwrap().as_box();
        let st = k.stacked_predecessor(2).unwrap();
        assert_eq!(st.lo[1], bar.hi[1]);
        assert_eq!(st.hi[1] - st.lo[1], 2.0 * (bar.hi[1] - bar.lo[1]));
        assert_eq!(st.lo[0], bar.lo[0]);
        assert!(root.stacked_predecessor(1).is_none());
    }

    proptest! {
        #[test]
        fn path_roundtrip_and_measure(n in 1usize..=3, path in prop::collection::vec(0usize..32, 0..6)) {
            let root = DyadicCube::root(vec![0.5; n], 2.0, 0.75).unwrap();
            let path: Vec<usize> = path.into_iter().map(|c| c % (1 << (n + 2))).collect();
            let k = DyadicCube::from_path(&root, &path);
            prop_assert_eq!(k.path(), path.clone());
            let expect = Dyadic::new(1i128 << n, ((n + 2) * path.len()) as u32);
            prop_assert_eq!(k.normalized_measure(), expect);
            prop_assert!(root.as_box().contains_box(&k.as_box()));
        }
    }
}

//! Parabolic cubes, the fixed regions of the measure argument and the
//! dyadic covering machinery.

mod cover;
mod dyadic;

pub use cover::{cz_cover_check, random_cover_instance, CoverReport};
pub use dyadic::{Dyadic, DyadicCube};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Axis-aligned box in space-time; the last coordinate is time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Scalar> BoxRegion<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() < 2 {
            return invalid("box bounds need matching lengths and at least one space axis");
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return invalid("box bounds out of order");
        }
        Ok(Self { lo, hi })
    }

    /// Product of a space cube `|x - c|_inf < half` and a time interval.
    pub fn cylinder(center: &[T], half: T, t_lo: T, t_hi: T) -> Result<Self> {
        let mut lo: Vec<T> = center.iter().map(|c| c.clone() - half.clone()).collect();
        let mut hi: Vec<T> = center.iter().map(|c| c.clone() + half.clone()).collect();
        lo.push(t_lo);
        hi.push(t_hi);
        Self::new(lo, hi)
    }

    pub fn space_dim(&self) -> usize {
        self.lo.len() - 1
    }

    pub fn measure(&self) -> T {
        self.lo
            .iter()
            .zip(&self.hi)
            .fold(T::one(), |acc, (a, b)| acc * (b.clone() - a.clone()))
    }

    /// Inclusion of closures.
    pub fn contains_box(&self, other: &Self) -> bool {
        self.lo.len() == other.lo.len()
            && self.lo.iter().zip(&other.lo).all(|(a, b)| a <= b)
            && self.hi.iter().zip(&other.hi).all(|(a, b)| a >= b)
    }

    /// Membership in the closure.
    pub fn contains_point(&self, p: &[T]) -> bool {
        p.len() == self.lo.len() && p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| a <= v && v <= b)
    }

    /// One `axis lo hi` line per coordinate.
    pub fn to_text(&self) -> String {
        let n = self.space_dim();
        let mut s = String::new();
        for k in 0..=n {
            let name = if k == n { "t".to_string() } else { format!("x{}", k + 1) };
            s.push_str(&format!("{name} {} {}\n", self.lo[k].to_f64_lossy(), self.hi[k].to_f64_lossy()));
        }
        s
    }

    pub fn to_f64(&self) -> BoxRegion<f64> {
        BoxRegion {
            lo: self.lo.iter().map(|v| v.to_f64_lossy()).collect(),
            hi: self.hi.iter().map(|v| v.to_f64_lossy()).collect(),
        }
    }
}

/// `Q_rho(x0, t0) = {|x - x0|_inf < rho} x (t0 - rho^2, t0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParabolicCube<T> {
    pub center: Vec<T>,
    pub t0: T,
    pub rho: T,
}

impl<T: Scalar> ParabolicCube<T> {
    pub fn new(center: Vec<T>, t0: T, rho: T) -> Result<Self> {
        if center.is_empty() || center.len() > 3 {
            return invalid("space dimension must be 1..=3");
        }
        if rho <= T::zero() {
            return invalid("cube radius must be positive");
        }
        Ok(Self { center, t0, rho })
    }

    /// `Q_rho(0, 0)`.
    pub fn origin(n: usize, rho: T) -> Result<Self> {
        Self::new(vec![T::zero(); n], T::zero(), rho)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn as_box(&self) -> BoxRegion<T> {
        let r2 = self.rho.clone() * self.rho.clone();
        BoxRegion::cylinder(&self.center, self.rho.clone(), self.t0.clone() - r2, self.t0.clone()).expect("valid cube")
    }

    /// `(2 rho)^n rho^2`.
    pub fn measure(&self) -> T {
        self.as_box().measure()
    }

    /// `{|x - x0|_inf < 3 rho} x (t0, t0 + 9 rho^2)`.
    pub fn tilde(&self) -> BoxRegion<T> {
        let three = T::from_i64(3).expect("small integer");
        let nine = T::from_i64(9).expect("small integer");
        let r2 = self.rho.clone() * self.rho.clone();
        BoxRegion::cylinder(&self.center, three * self.rho.clone(), self.t0.clone(), self.t0.clone() + nine * r2)
            .expect("valid cube")
    }
}

/// `c_n = 1 / (10 n)`.
pub fn c_n<T: Scalar>(n: usize) -> T {
    T::from_ratio(1, 10 * n as i64)
}

/// The fixed regions inside `Q_1 = Q_1(0, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCatalog<T> {
    pub n: usize,
    pub q1: BoxRegion<T>,
    pub k1: BoxRegion<T>,
    pub k2: BoxRegion<T>,
    pub k3: BoxRegion<T>,
    pub khat: BoxRegion<T>,
    /// Closed set `{|x|_inf <= c/2} x [-1 + c^2/4, -1 + c^2/2]`.
    pub a: BoxRegion<T>,
}

impl<T: Scalar> RegionCatalog<T> {
    pub fn named(&self) -> Vec<(&'static str, &BoxRegion<T>)> {
        vec![("Q1", &self.q1), ("K1", &self.k1), ("K2", &self.k2), ("K3", &self.k3), ("Khat", &self.khat), ("A", &self.a)]
    }

    /// Text dump: a `# name` line followed by `axis lo hi` lines per region.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, b) in self.named() {
            s.push_str(&format!("# {name}\n{}", b.to_text()));
        }
        s
    }

    /// Rectangle outlines in the `(x1, t)` plane as closed polylines.
    pub fn outlines_csv(&self) -> String {
        let mut s = String::from("region,vertex,x1,t\n");
        for (name, b) in self.named() {
            let n = b.space_dim();
            let (x0, x1) = (b.lo[0].to_f64_lossy(), b.hi[0].to_f64_lossy());
            let (t0, t1) = (b.lo[n].to_f64_lossy(), b.hi[n].to_f64_lossy());
            for (k, (x, t)) in [(x0, t0), (x1, t0), (x1, t1), (x0, t1), (x0, t0)].iter().enumerate() {
                s.push_str(&format!("{name},{k},{x},{t}\n"));
            }
        }
        s
    }

    /// Closure inclusions `K1, K2, K3, Khat subset Q1` and `A subset Khat`.
    pub fn inclusions_hold(&self) -> bool {
        [&self.k1, &self.k2, &self.k3, &self.khat].iter().all(|b| self.q1.contains_box(b)) && self.khat.contains_box(&self.a)
    }
}

pub fn region_catalog<T: Scalar>(n: usize) -> Result<RegionCatalog<T>> {
    if n == 0 || n > 3 {
        return invalid("space dimension must be 1..=3");
    }
    let c: T = c_n(n);
    let c2 = c.clone() * c.clone();
    let one = T::one();
    let int = |k: i64| T::from_i64(k).expect("small integer");
    let zero = vec![T::zero(); n];
    let q1 = ParabolicCube::origin(n, one.clone())?.as_box();
    let k1 = BoxRegion::cylinder(&zero, c.clone(), -one.clone(), c2.clone() - one.clone())?;
    let k2 = BoxRegion::cylinder(&zero, int(3) * c.clone(), c2.clone() - one.clone(), int(10) * c2.clone() - one.clone())?;
    let k3 = BoxRegion::cylinder(&zero, int(3) * c.clone(), c2.clone() - one.clone(), T::zero())?;
    let khat = BoxRegion::cylinder(&zero, c.clone(), -one.clone(), c2.clone() / int(2) - one.clone())?;
    let a = BoxRegion::cylinder(
        &zero,
        c.clone() / int(2),
        c2.clone() / int(4) - one.clone(),
        c2.clone() / int(2) - one.clone(),
    )?;
    Ok(RegionCatalog { n, q1, k1, k2, k3, khat, a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{exact, exact_int, Exact};

    #[test]
    fn cube_measure_and_tilde() {
        let q = ParabolicCube::new(vec![exact(0.5), exact(-1.0)], exact(2.0), exact(0.25)).unwrap();
        assert_eq!(q.measure(), exact(0.5) * exact(0.5) * exact(0.0625));
        let t = q.tilde();
        assert_eq!(t.lo, vec![exact(-0.25), exact(-1.75), exact(2.0)]);
        assert_eq!(t.hi, vec![exact(1.25), exact(-0.25), exact(2.5625)]);
    }

    #[test]
    fn catalog_inclusions_are_exact() {
        for n in 1..=3 {
            let cat = region_catalog::<Exact>(n).unwrap();
            assert!(cat.inclusions_hold());
            let c = Exact::new(1.into(), (10 * n as i64).into());
            assert_eq!(cat.k1.hi[n], c.clone() * c.clone() - exact_int(1));
            assert_eq!(cat.k3.measure(), (exact_int(6) * c.clone()).pow(n as i32) * (exact_int(1) - c.clone() * c));
        }
    }

    #[test]
    fn catalog_text_format() {
        let cat = region_catalog::<f64>(1).unwrap();
        let txt = cat.to_text();
        assert!(txt.contains("# K1\nx1 -0.1 0.1\nt -1 -0.99"));
        assert_eq!(cat.outlines_csv().lines().count(), 1 + 6 * 5);
        assert!(region_catalog::<f64>(4).is_err());
    }
}

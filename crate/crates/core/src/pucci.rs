//! Symmetric matrices, a cyclic Jacobi eigen-solver and the Pucci extremal
//! operators.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

pub const MAX_DIM: usize = 3;
const MAX_SWEEPS: usize = 100;
const OFF_TOL: f64 = 1e-13;
const DEADBAND: f64 = 1e-12;

/// Symmetric `n x n` matrix (`1 <= n <= 3`) stored as its packed upper triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix<T> {
    n: usize,
    upper: Vec<T>,
}

// Packed index of (i, j), i <= j, row-major upper triangle.
fn idx(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * n - i + 1) / 2 + (j - i)
}

impl<T: Real> SymMatrix<T> {
    pub fn zeros(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return invalid(format!("dimension {n} outside 1..=3"));
        }
        Ok(Self { n, upper: vec![T::zero(); n * (n + 1) / 2] })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::diagonal(&vec![T::one(); n])
    }

    pub fn diagonal(d: &[T]) -> Result<Self> {
        let mut m = Self::zeros(d.len())?;
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        Ok(m)
    }

    /// Builds from full rows; the strict lower triangle must mirror the upper one.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zeros(n)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return invalid("ragged matrix rows");
            }
            for j in i..n {
                if row[j] != rows[j][i] {
                    return invalid(format!("matrix not symmetric at ({i},{j})"));
                }
                m.set(i, j, row[j]);
            }
        }
        Ok(m)
    }

    /// Builds from the packed upper triangle `[m00, m01, .., m0n, m11, ..]`.
    pub fn from_upper(n: usize, upper: Vec<T>) -> Result<Self> {
        if n == 0 || n > MAX_DIM || upper.len() != n * (n + 1) / 2 {
            return invalid("packed triangle has wrong length");
        }
        Ok(Self { n, upper })
    }

    /// Outer product `v v^T`.
    pub fn outer(v: &[T]) -> Result<Self> {
        let mut m = Self::zeros(v.len())?;
        for i in 0..v.len() {
            for j in i..v.len() {
                m.set(i, j, v[i] * v[j]);
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.upper[idx(self.n, i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let k = idx(self.n, i, j);
        self.upper[k] = v;
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn trace(&self) -> T {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius(&self) -> T {
        let mut s = T::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                let v = self.get(i, j);
                s = s + v * v;
            }
        }
        s.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.upper.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, k: T) -> Self {
        Self { n: self.n, upper: self.upper.iter().map(|&v| v * k).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return invalid("dimension mismatch");
        }
        let upper = self.upper.iter().zip(&other.upper).map(|(&a, &b)| a + b).collect();
        Ok(Self { n: self.n, upper })
    }

    pub fn neg(&self) -> Self {
        self.scale(-T::one())
    }

    fn dense(&self) -> [[T; MAX_DIM]; MAX_DIM] {
        let mut a = [[T::zero(); MAX_DIM]; MAX_DIM];
        for i in 0..self.n {
            for j in 0..self.n {
                a[i][j] = self.get(i, j);
            }
        }
        a
    }

    /// Eigenvalues in ascending order by cyclic Jacobi rotations.
    pub fn eigenvalues(&self) -> Result<Vec<T>> {
        if !self.is_finite() {
            return Err(Error::NonFinite("eigenvalues"));
        }
        let n = self.n;
        let mut a = self.dense();
        let scale = self.frobenius();
        let tol = T::lit(OFF_TOL).max(T::epsilon()) * scale;
        let huge = T::max_value().sqrt();
        let mut converged = false;
        for _ in 0..MAX_SWEEPS {
            let mut off = T::zero();
            for p in 0..n {
                for q in (p + 1)..n {
                    off = off + a[p][q] * a[p][q];
                }
            }
            if (off + off).sqrt() <= tol {
                converged = true;
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p][q];
                    if apq == T::zero() {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (apq + apq);
                    let t = if theta.abs() > huge {
                        T::lit(0.5) / theta
                    } else {
                        let t = T::one() / (theta.abs() + (theta * theta + T::one()).sqrt());
                        if theta < T::zero() {
                            -t
                        } else {
                            t
                        }
                    };
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                    a[p][q] = T::zero();
                    a[q][p] = T::zero();
                }
            }
        }
        if !converged {
            return Err(Error::NoConvergence(format!("jacobi after {MAX_SWEEPS} sweeps")));
        }
        let mut e: Vec<T> = (0..n).map(|i| a[i][i]).collect();
        e.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
        Ok(e)
    }
}

/// Ellipticity constants `0 < lambda <= big_lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityPair<T> {
    lambda: T,
    big_lambda: T,
}

impl<T: Real> EllipticityPair<T> {
    pub fn new(lambda: T, big_lambda: T) -> Result<Self> {
        if !lambda.is_finite() || !big_lambda.is_finite() {
            return Err(Error::NonFinite("ellipticity"));
        }
        if !(lambda > T::zero() && lambda <= big_lambda) {
            return invalid(format!("need 0 < lambda <= Lambda, got ({lambda}, {big_lambda})"));
        }
        Ok(Self { lambda, big_lambda })
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn big_lambda(&self) -> T {
        self.big_lambda
    }
}

fn split<T: Real>(eigs: &[T], deadband: T) -> (T, T) {
    let mut pos = T::zero();
    let mut neg = T::zero();
    for &e in eigs {
        if e.abs() <= deadband {
            continue;
        }
        if e > T::zero() {
            pos = pos + e;
        } else {
            neg = neg + e;
        }
    }
    (pos, neg)
}

fn deadband<T: Real>(norm: T) -> T {
    T::lit(DEADBAND).max(T::epsilon() * T::lit(4.0)) * (T::one() + norm)
}

/// `lambda * sum(e > 0) + Lambda * sum(e < 0)` from given eigenvalues.
pub fn pucci_minus_eigs<T: Real>(eigs: &[T], ell: &EllipticityPair<T>) -> T {
    let norm = eigs.iter().map(|&e| e * e).sum::<T>().sqrt();
    let (pos, neg) = split(eigs, deadband(norm));
    ell.lambda * pos + ell.big_lambda * neg
}

/// `Lambda * sum(e > 0) + lambda * sum(e < 0)` from given eigenvalues.
pub fn pucci_plus_eigs<T: Real>(eigs: &[T], ell: &EllipticityPair<T>) -> T {
    let norm = eigs.iter().map(|&e| e * e).sum::<T>().sqrt();
    let (pos, neg) = split(eigs, deadband(norm));
    ell.big_lambda * pos + ell.lambda * neg
}

/// Minimal Pucci operator `P^-(M)`.
pub fn pucci_minus<T: Real>(m: &SymMatrix<T>, ell: &EllipticityPair<T>) -> Result<T> {
    Ok(pucci_minus_eigs(&m.eigenvalues()?, ell))
}

/// Maximal Pucci operator `P^+(M)`.
pub fn pucci_plus<T: Real>(m: &SymMatrix<T>, ell: &EllipticityPair<T>) -> Result<T> {
    Ok(pucci_plus_eigs(&m.eigenvalues()?, ell))
}

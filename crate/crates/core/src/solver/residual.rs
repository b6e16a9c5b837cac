use crate::error::{invalid, Result};
use crate::nonlinearity::PhiModel;
use crate::pucci::{pucci_minus, pucci_plus, EllipticityPair, SymMatrix};
use crate::scalar::Real;
use crate::solver::SpaceTimeGrid;

/// Pointwise residuals; entries outside the interior stencil are NaN.
///
/// `super_residual = P^-(D^2u) - u_t - phi(|Du|)` is `<= 0` for supersolutions,
/// `sub_residual = P^+(D^2u) - u_t + phi(|Du|)` is `>= 0` for subsolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualField<T> {
    pub super_residual: SpaceTimeGrid<T>,
    pub sub_residual: SpaceTimeGrid<T>,
}

impl<T: Real> ResidualField<T> {
    pub fn max_super(&self) -> T {
        self.super_residual.values().iter().filter(|v| !v.is_nan()).fold(T::neg_infinity(), |a, &b| a.max(b))
    }

    pub fn min_sub(&self) -> T {
        self.sub_residual.values().iter().filter(|v| !v.is_nan()).fold(T::infinity(), |a, &b| a.min(b))
    }
}

/// Central first and second differences at an interior space node of level `k`.
pub(crate) fn central_derivatives<T: Real>(u: &SpaceTimeGrid<T>, k: usize, idx: &[usize]) -> (Vec<T>, SymMatrix<T>) {
    let n = u.n();
    let two = T::lit(2.0);
    let c = u.at(k, idx);
    let mut grad = vec![T::zero(); n];
    let mut hess = SymMatrix::zeros(n).expect("n in 1..=2");
    let shifted = |a: usize, da: isize, b: usize, db: isize| -> T {
        let mut j = [idx[0], if n > 1 { idx[1] } else { 0 }];
        j[a] = (j[a] as isize + da) as usize;
        j[b] = (j[b] as isize + db) as usize;
        u.at(k, &j[..n])
    };
    for a in 0..n {
        let h = u.dx(a);
        let (p, m) = (shifted(a, 1, a, 0), shifted(a, -1, a, 0));
        grad[a] = (p - m) / (two * h);
        hess.set(a, a, (p - two * c + m) / (h * h));
    }
    if n == 2 {
        let v = (shifted(0, 1, 1, 1) - shifted(0, 1, 1, -1) - shifted(0, -1, 1, 1) + shifted(0, -1, 1, -1))
            / (T::lit(4.0) * u.dx(0) * u.dx(1));
        hess.set(0, 1, v);
    }
    (grad, hess)
}

pub(crate) fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Finite-difference residuals: central in space, backward in time.
pub fn residuals<T: Real>(u: &SpaceTimeGrid<T>, model: &PhiModel<T>, ell: &EllipticityPair<T>) -> Result<ResidualField<T>> {
    if u.values().iter().any(|v| !v.is_finite()) {
        return invalid("grid contains non-finite values");
    }
    let n = u.n();
    let nx = u.nx();
    let mut sup = vec![T::nan(); u.values().len()];
    let mut sub = vec![T::nan(); u.values().len()];
    let dt = u.dt();
    for k in 1..u.nt() {
        for s in 0..u.space_len() {
            let idx = u.space_index(s);
            if idx[..n].iter().any(|&i| i == 0 || i == nx - 1) {
                continue;
            }
            let (grad, hess) = central_derivatives(u, k, &idx[..n]);
            let ut = (u.at(k, &idx[..n]) - u.at(k - 1, &idx[..n])) / dt;
            let f = model.phi(norm(&grad));
            let flat = u.flat(k, &idx[..n]);
            sup[flat] = pucci_minus(&hess, ell)? - ut - f;
            sub[flat] = pucci_plus(&hess, ell)? - ut + f;
        }
    }
    Ok(ResidualField { super_residual: u.with_values(sup)?, sub_residual: u.with_values(sub)? })
}

/// Closed-form solutions with exact derivatives.
pub trait AnalyticSolution<T: Real> {
    fn dim(&self) -> usize;
    fn value(&self, x: &[T], t: T) -> T;
    fn grad(&self, x: &[T], t: T) -> Vec<T>;
    fn hess(&self, x: &[T], t: T) -> SymMatrix<T>;
    fn time_derivative(&self, x: &[T], t: T) -> T;
}

/// `u = c`.
#[derive(Debug, Clone, Copy)]
pub struct Constant<T> {
    pub n: usize,
    pub c: T,
}

impl<T: Real> AnalyticSolution<T> for Constant<T> {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, _: &[T], _: T) -> T {
        self.c
    }
    fn grad(&self, _: &[T], _: T) -> Vec<T> {
        vec![T::zero(); self.n]
    }
    fn hess(&self, _: &[T], _: T) -> SymMatrix<T> {
        SymMatrix::zeros(self.n).expect("n in 1..=3")
    }
    fn time_derivative(&self, _: &[T], _: T) -> T {
        T::zero()
    }
}

/// `u = c + p . x`.
#[derive(Debug, Clone)]
pub struct Affine<T> {
    pub c: T,
    pub p: Vec<T>,
}

impl<T: Real> AnalyticSolution<T> for Affine<T> {
    fn dim(&self) -> usize {
        self.p.len()
    }
    fn value(&self, x: &[T], _: T) -> T {
        self.c + self.p.iter().zip(x).map(|(&a, &b)| a * b).sum::<T>()
    }
    fn grad(&self, _: &[T], _: T) -> Vec<T> {
        self.p.clone()
    }
    fn hess(&self, _: &[T], _: T) -> SymMatrix<T> {
        SymMatrix::zeros(self.p.len()).expect("n in 1..=3")
    }
    fn time_derivative(&self, _: &[T], _: T) -> T {
        T::zero()
    }
}

/// `u = e^(1/t) (x + 3)` for `t < 0`, `u = 0` for `t >= 0` (one space dimension).
#[derive(Debug, Clone, Copy, Default)]
pub struct VanishingExample;

impl VanishingExample {
    /// `ln u` for `t < 0` and `x > -3`.
    pub fn ln_value(x: f64, t: f64) -> f64 {
        1.0 / t + (x + 3.0).ln()
    }
}

impl<T: Real> AnalyticSolution<T> for VanishingExample {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, x: &[T], t: T) -> T {
        if t < T::zero() {
            t.recip().exp() * (x[0] + T::lit(3.0))
        } else {
            T::zero()
        }
    }
    fn grad(&self, _: &[T], t: T) -> Vec<T> {
        vec![if t < T::zero() { t.recip().exp() } else { T::zero() }]
    }
    fn hess(&self, _: &[T], _: T) -> SymMatrix<T> {
        SymMatrix::zeros(1).expect("n = 1")
    }
    fn time_derivative(&self, x: &[T], t: T) -> T {
        if t < T::zero() {
            -t.recip().exp() * (x[0] + T::lit(3.0)) / (t * t)
        } else {
            T::zero()
        }
    }
}

/// Residual pair `(super, sub)` from exact derivatives at one point.
pub fn analytic_residual<T: Real, S: AnalyticSolution<T> + ?Sized>(
    sol: &S,
    x: &[T],
    t: T,
    model: &PhiModel<T>,
    ell: &EllipticityPair<T>,
) -> Result<(T, T)> {
    let hess = sol.hess(x, t);
    let ut = sol.time_derivative(x, t);
    let f = model.phi_eval(norm(&sol.grad(x, t)))?;
    Ok((pucci_minus(&hess, ell)? - ut - f, pucci_plus(&hess, ell)? - ut + f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoxRegion;
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    fn ell() -> EllipticityPair<f64> {
        EllipticityPair::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn example_point_values() {
        let m = PhiModel::log_squared_example();
        let sol = VanishingExample;
        let x = [0.0];
        let lhs = AnalyticSolution::<f64>::hess(&sol, &x, -1.0).get(0, 0) - sol.time_derivative(&x, -1.0);
        assert_relative_eq!(lhs, 3.0 / E, max_relative = 1e-14);
        assert_relative_eq!(m.phi(sol.grad(&x, -1.0)[0]), 125.0 / E, max_relative = 1e-14);
        let (sup, sub) = analytic_residual(&sol, &x, -1.0, &m, &ell()).unwrap();
        assert!(sup < 0.0 && sub > 0.0);
    }

    #[test]
    fn constants_and_affine_residuals() {
        let m = PhiModel::log_squared_example();
        let (s, b) = analytic_residual(&Constant { n: 2, c: 4.0 }, &[0.1, 0.2], -0.5, &m, &ell()).unwrap();
        assert_eq!((s, b), (0.0, 0.0));
        let aff = Affine { c: 1.0, p: vec![0.5] };
        let (s, b) = analytic_residual(&aff, &[0.3], -0.5, &m, &ell()).unwrap();
        assert!(s < 0.0 && b > 0.0);
        assert_relative_eq!(b, m.phi(0.5), max_relative = 1e-15);
    }

    #[test]
    fn finite_differences_are_exact_on_quadratics() {
        let region = BoxRegion::new(vec![-1.0, -1.0, -1.0], vec![1.0, 1.0, 0.0]).unwrap();
        // u = x^2 + x y + 2 y^2 - t: Hessian [[2,1],[1,4]], u_t = -1.
        let u = SpaceTimeGrid::from_fn(&region, 11, 6, |x, t| x[0] * x[0] + x[0] * x[1] + 2.0 * x[1] * x[1] - t).unwrap();
        let lin = PhiModel::linear();
        let e = EllipticityPair::new(1.0, 2.0).unwrap();
        let r = residuals(&u, &lin, &e).unwrap();
        let hess = SymMatrix::from_upper(2, vec![2.0, 1.0, 4.0]).unwrap();
        let k = 3;
        let idx = [4, 6];
        let (x, y): (f64, f64) = (u.coord(0, 4), u.coord(1, 6));
        let grad = ((2.0 * x + y).powi(2) + (x + 4.0 * y).powi(2)).sqrt();
        let expect = pucci_minus(&hess, &e).unwrap() + 1.0 - grad;
        assert_relative_eq!(r.super_residual.at(k, &idx), expect, epsilon = 1e-10);
        assert!(f64::is_nan(r.super_residual.at(0, &idx)));
        assert!(f64::is_nan(r.super_residual.at(k, &[0, 6])));
    }
}

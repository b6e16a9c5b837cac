//! Level schedules `a_k` and the stacks of parabolic cubes built from them.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::ParabolicCube;
use crate::nonlinearity::PhiModel;
use crate::scalar::{Real, Scalar};

/// `a_k = 1 / (k L2 (eta(L^k) + 1))` with the derived ratios `m_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSchedule<T> {
    pub l2: T,
    pub l: T,
    pub k_max: usize,
    pub tail_horizon: usize,
    /// `a[k - 1] = a_k` for `k = 1..=tail_horizon + 1`.
    pub a: Vec<T>,
    pub k1: usize,
    /// `m[k - k1] = m_k` for `k = k1..=k_max`.
    pub m: Vec<T>,
}

impl<T: Real> LevelSchedule<T> {
    pub fn a_k(&self, k: usize) -> T {
        self.a[k - 1]
    }

    pub fn m_k(&self, k: usize) -> T {
        self.m[k - self.k1]
    }

    /// `z_i = m_{l - i}` for `1 <= i <= l - k1`.
    pub fn z(&self, l: usize, i: usize) -> T {
        self.m_k(l - i)
    }
}

/// Builds the schedule; `tail_horizon` defaults to `10 k_max`.
pub fn build_schedule<T: Real>(
    model: &PhiModel<T>,
    l2: T,
    l: T,
    k_max: usize,
    tail_horizon: Option<usize>,
) -> Result<LevelSchedule<T>> {
    if !l2.is_finite() || !l.is_finite() {
        return Err(Error::NonFinite("build_schedule"));
    }
    if l2 < T::one() || l <= T::one() {
        return invalid("schedule needs L2 >= 1 and L > 1");
    }
    if k_max < 5 {
        return invalid("k_max must be at least 5");
    }
    let horizon = tail_horizon.unwrap_or(10 * k_max).max(k_max);
    let ln_l = l.ln();
    let a: Vec<T> = (1..=horizon + 1)
        .map(|k| {
            let kt = T::from_usize(k).expect("index");
            T::one() / (kt * l2 * (model.eta_of_log(kt * ln_l) + T::one()))
        })
        .collect();
    if a.iter().any(|v| !(v.is_finite() && *v > T::zero())) {
        return Err(Error::Infeasible("a_k underflows before the tail horizon".into()));
    }
    let two = T::lit(2.0);
    let mut k1 = None;
    let mut ok_from = horizon + 1;
    for j in (1..=horizon).rev() {
        if a[j - 1] / a[j] <= two {
            ok_from = j;
        } else {
            break;
        }
    }
    if ok_from <= horizon {
        k1 = Some(ok_from.max(4));
    }
    let k1 = k1.ok_or_else(|| Error::Infeasible("ratio a_k / a_(k+1) exceeds 2 at the tail horizon".into()))?;
    if k1 >= k_max {
        return Err(Error::Infeasible(format!("k1 = {k1} is not below k_max = {k_max}")));
    }
    let mut m = vec![T::lit(3.0)];
    for k in (k1 + 1)..=k_max {
        m.push(a[k - 2] / a[k - 1]);
    }
    Ok(LevelSchedule { l2, l, k_max, tail_horizon: horizon, a, k1, m })
}

/// Cubes `Q^0 = base, Q^1, ..` with the scale factors used at each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeStack<S> {
    pub cubes: Vec<ParabolicCube<S>>,
    pub z: Vec<S>,
}

impl<S: Scalar> CubeStack<S> {
    /// Columns `k, x1.., t, radius`.
    pub fn to_csv(&self) -> String {
        let n = self.cubes.first().map(|c| c.dim()).unwrap_or(1);
        let mut s = String::from("k");
        for i in 0..n {
            s.push_str(&format!(",x{}", i + 1));
        }
        s.push_str(",t,radius\n");
        for (k, c) in self.cubes.iter().enumerate() {
            s.push_str(&k.to_string());
            for x in &c.center {
                s.push_str(&format!(",{}", x.to_f64_lossy()));
            }
            s.push_str(&format!(",{},{}\n", c.t0.to_f64_lossy(), c.rho.to_f64_lossy()));
        }
        s
    }
}

/// One step `Q^k -> Q^(k+1)` with factor `z`.
pub fn stack_step<S: Scalar>(q: &ParabolicCube<S>, z: &S) -> ParabolicCube<S> {
    let three = S::from_i64(3).expect("small integer");
    let r_next = z.clone() * q.rho.clone();
    let slack = (three - z.clone()) * q.rho.clone();
    let center = q
        .center
        .iter()
        .map(|x| S::zero().clamp_to(x.clone() - slack.clone(), x.clone() + slack.clone()))
        .collect();
    let t_next = q.t0.clone() + r_next.clone() * r_next.clone();
    ParabolicCube { center, t0: t_next, rho: r_next }
}

/// Stack of `count` cubes above `base` using `z_i = m_(l - i)`.
pub fn build_stack<T: Real, S: Scalar>(
    schedule: &LevelSchedule<T>,
    base: &ParabolicCube<S>,
    l: usize,
    count: usize,
) -> Result<CubeStack<S>> {
    if l <= schedule.k1 || l > schedule.k_max + 1 {
        return invalid(format!("need k1 < l <= k_max + 1, got l = {l}"));
    }
    if count > l - schedule.k1 {
        return invalid(format!("count {count} exceeds l - k1 = {}", l - schedule.k1));
    }
    let mut cubes = vec![base.clone()];
    let mut zs = Vec::with_capacity(count);
    for i in 1..=count {
        let zf = schedule.z(l, i).to_f64_lossy();
        let z = S::from_f64_checked(zf).ok_or(Error::NonFinite("stack factor"))?;
        let next = stack_step(cubes.last().unwrap(), &z);
        cubes.push(next);
        zs.push(z);
    }
    Ok(CubeStack { cubes, z: zs })
}

/// `dist_inf({x = 0}, Q)` for the space projection of `Q`.
pub fn axis_distance<S: Scalar>(q: &ParabolicCube<S>) -> S {
    let far = q.center.iter().fold(S::zero(), |acc, x| S::max_of(acc, x.abs()));
    S::max_of(S::zero(), far - q.rho.clone())
}

/// Outcome of [`verify_stack`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackReport {
    pub cubes: usize,
    pub radius_violations: usize,
    pub containment_violations: usize,
    pub distance_violations: usize,
}

impl StackReport {
    pub fn pass(&self) -> bool {
        self.radius_violations == 0 && self.containment_violations == 0 && self.distance_violations == 0
    }
}

/// Checks the radius product, `Q^(k+1) subset tilde Q^k` and the axis-distance
/// decrease, all in the arithmetic of `S`.
pub fn verify_stack<S: Scalar>(stack: &CubeStack<S>) -> StackReport {
    let two = S::from_i64(2).expect("small integer");
    let mut report = StackReport { cubes: stack.cubes.len(), radius_violations: 0, containment_violations: 0, distance_violations: 0 };
    let mut product = stack.cubes[0].rho.clone();
    for (k, z) in stack.z.iter().enumerate() {
        let (q, next) = (&stack.cubes[k], &stack.cubes[k + 1]);
        product = product * z.clone();
        if next.rho != product {
            report.radius_violations += 1;
        }
        if !q.tilde().contains_box(&next.as_box()) {
            report.containment_violations += 1;
        }
        let bound = S::max_of(S::zero(), axis_distance(q) - two.clone() * q.rho.clone());
        if axis_distance(next) > bound {
            report.distance_violations += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{exact, Exact};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::E;

    #[test]
    fn example_schedule_values() {
        let s = build_schedule(&PhiModel::log_squared_example(), 1.0, E, 12, None).unwrap();
        assert_relative_eq!(s.a_k(1), 1.0 / 126.0, max_relative = 1e-13);
        assert_relative_eq!(s.a_k(2), 1.0 / 362.0, max_relative = 1e-13);
        assert_eq!(s.k1, 4);
        assert_eq!(s.m_k(4), 3.0);
        for k in 5..=12 {
            assert!(s.m_k(k) > 1.0 && s.m_k(k) <= 2.0);
        }
    }

    #[test]
    fn linear_schedule_starts_at_four() {
        let s = build_schedule(&PhiModel::linear(), 1.0, E, 10, None).unwrap();
        assert_eq!(s.k1, 4);
        assert_relative_eq!(s.m_k(6), 6.0 / 5.0, max_relative = 1e-14);
    }

    #[test]
    fn fast_growth_is_infeasible() {
        let m = PhiModel::power_log(1.0, 2.0, 0.0).unwrap();
        assert!(matches!(build_schedule(&m, 1.0, E, 10, None), Err(Error::Infeasible(_))));
    }

    #[test]
    fn stack_argument_checks() {
        let s = build_schedule(&PhiModel::<f64>::linear(), 1.0, E, 10, None).unwrap();
        let base = ParabolicCube::new(vec![0.5], 0.0, 0.25).unwrap();
        assert!(build_stack(&s, &base, 4, 0).is_err());
        assert!(build_stack(&s, &base, 8, 5).is_err());
        let st = build_stack(&s, &base, 8, 4).unwrap();
        assert_eq!(st.cubes.len(), 5);
        assert_eq!(st.z[0], s.m_k(7));
        assert_eq!(st.to_csv().lines().count(), 6);
    }

    proptest! {
        #[test]
        fn exact_stacks_verify(x in prop::collection::vec(-2.0f64..2.0, 1..=3), t0 in -1.0f64..1.0,
                               rho in 0.01f64..1.0, l in 5usize..=12, frac in 0.0f64..1.0, lin in any::<bool>()) {
            let model = if lin { PhiModel::linear() } else { PhiModel::log_squared_example() };
            let s = build_schedule(&model, 1.0, E, 12, None).unwrap();
            let count = 1 + ((l - s.k1 - 1) as f64 * frac) as usize;
            let base = ParabolicCube::new(x.iter().map(|&v| exact(v)).collect(), exact(t0), exact(rho)).unwrap();
            let st: CubeStack<Exact> = build_stack(&s, &base, l, count).unwrap();
            prop_assert!(verify_stack(&st).pass());
        }
    }
}

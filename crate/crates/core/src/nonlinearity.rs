//! Nonlinearities `phi(s) = eta(s) * s` and checks of the structural
//! conditions they must satisfy.
//!
//! Every catalog family has `eta` depending on `|ln s|` only, so evaluation is
//! done through [`PhiModel::ln_eta_of_log`] and far tails never overflow.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Catalog families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `eta = 1`.
    Linear,
    /// `eta(s) = 5 (|ln s| + 4)^2`.
    LogSquaredExample,
    /// `eta(s) = a * m^b * (1 + ln m)^c` with `m = max(s, 1/s)`.
    PowerLog,
}

impl Family {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "linear" => Ok(Self::Linear),
            "log-squared-example" => Ok(Self::LogSquaredExample),
            "power-log" => Ok(Self::PowerLog),
            other => invalid(format!("unknown family {other:?}")),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::LogSquaredExample => "log-squared-example",
            Self::PowerLog => "power-log",
        }
    }
}

/// A nonlinearity `phi(s) = k * eta(s) * s` with catalog `eta` and multiplier `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiModel<T> {
    family: Family,
    params: Vec<T>,
    multiplier: T,
    lambda0: Option<T>,
}

impl<T: Real> PhiModel<T> {
    pub fn new(family: Family, params: Vec<T>, lambda0: Option<T>) -> Result<Self> {
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        match family {
            Family::Linear | Family::LogSquaredExample if !params.is_empty() => {
                return invalid(format!("{} takes no parameters", family.name()));
            }
            Family::PowerLog => {
                if params.len() != 3 {
                    return invalid("power-log takes (a, b, c)");
                }
                if params[0] < T::one() || params[1] < T::zero() || params[2] < T::zero() {
                    return invalid("power-log needs a >= 1, b >= 0, c >= 0");
                }
            }
            _ => {}
        }
        if let Some(l0) = lambda0 {
            if !(l0.is_finite() && l0 > T::zero()) {
                return invalid("lambda0 must be positive");
            }
        }
        Ok(Self { family, params, multiplier: T::one(), lambda0 })
    }

    pub fn linear() -> Self {
        Self::new(Family::Linear, vec![], Some(T::one())).expect("catalog model")
    }

    /// The worked example `phi(s) = 5 s (|ln s| + 4)^2` with `Lambda0 = 1/80`.
    pub fn log_squared_example() -> Self {
        Self::new(Family::LogSquaredExample, vec![], Some(T::lit(1.0 / 80.0))).expect("catalog model")
    }

    pub fn power_log(a: T, b: T, c: T) -> Result<Self> {
        Self::new(Family::PowerLog, vec![a, b, c], None)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn multiplier(&self) -> T {
        self.multiplier
    }

    pub fn lambda0(&self) -> Option<T> {
        self.lambda0
    }

    pub fn with_lambda0(mut self, lambda0: T) -> Result<Self> {
        if !(lambda0.is_finite() && lambda0 > T::zero()) {
            return invalid("lambda0 must be positive");
        }
        self.lambda0 = Some(lambda0);
        Ok(self)
    }

    /// `ln eta(e^l)`.
    pub fn ln_eta_of_log(&self, l: T) -> T {
        let a = l.abs();
        let base = match self.family {
            Family::Linear => T::zero(),
            Family::LogSquaredExample => T::lit(5.0).ln() + T::lit(2.0) * (a + T::lit(4.0)).ln(),
            Family::PowerLog => {
                let (pa, pb, pc) = (self.params[0], self.params[1], self.params[2]);
                pa.ln() + pb * a + pc * (T::one() + a).ln()
            }
        };
        base + self.multiplier.ln()
    }

    /// `eta(e^l)`.
    pub fn eta_of_log(&self, l: T) -> T {
        let a = l.abs();
        let base = match self.family {
            Family::Linear => T::one(),
            Family::LogSquaredExample => {
                let v = a + T::lit(4.0);
                T::lit(5.0) * v * v
            }
            Family::PowerLog => {
                let (pa, pb, pc) = (self.params[0], self.params[1], self.params[2]);
                pa * (pb * a).exp() * (T::one() + a).powf(pc)
            }
        };
        base * self.multiplier
    }

    pub fn eta_eval(&self, s: T) -> Result<T> {
        if !s.is_finite() {
            return Err(Error::NonFinite("eta_eval"));
        }
        if s <= T::zero() {
            return Err(Error::Domain(format!("eta requires s > 0, got {s}")));
        }
        Ok(self.eta_of_log(s.ln()))
    }

    pub fn phi_eval(&self, s: T) -> Result<T> {
        if !s.is_finite() {
            return Err(Error::NonFinite("phi_eval"));
        }
        if s < T::zero() {
            return Err(Error::Domain(format!("phi requires s >= 0, got {s}")));
        }
        Ok(self.phi(s))
    }

    /// Unchecked `phi` for hot loops; `s` must be finite and nonnegative.
    pub fn phi(&self, s: T) -> T {
        if s == T::zero() {
            T::zero()
        } else {
            s * self.eta_of_log(s.ln())
        }
    }

    /// Unchecked `(phi(s), phi'(s))` for hot loops; the slope at `s = 0` is
    /// the limit from the right (possibly infinite).
    pub fn phi_with_slope(&self, s: T) -> (T, T) {
        if s == T::zero() {
            let slope = match self.family {
                Family::Linear => self.multiplier,
                _ => T::infinity(),
            };
            return (T::zero(), slope);
        }
        let l = s.ln();
        let a = l.abs();
        let eta = self.eta_of_log(l);
        let dlog = match self.family {
            Family::Linear => T::zero(),
            Family::LogSquaredExample => T::lit(2.0) / (a + T::lit(4.0)),
            Family::PowerLog => self.params[1] + self.params[2] / (T::one() + a),
        };
        let dlog = if l < T::zero() { -dlog } else { dlog };
        (s * eta, eta * (T::one() + dlog))
    }

    /// Unchecked `eta` for hot loops; `s` must be finite and positive.
    pub fn eta(&self, s: T) -> T {
        self.eta_of_log(s.ln())
    }
}

/// Sampling controls for [`validate_conditions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleSpec {
    /// Log-spaced grid `[ln_min, ln_max]` for pointwise and pair conditions.
    pub ln_min: f64,
    pub ln_max: f64,
    pub count: usize,
    /// Coarser grid size for the triple sup defining `Lambda2_hat`.
    pub triple_count: usize,
    /// Tail horizon for the growth condition, as `ln t`.
    pub tail_ln_horizon: f64,
    pub growth_threshold: f64,
    pub fd_rel_step: f64,
    /// Point where the tail doubling defect is sampled.
    pub lemma_point: f64,
    pub lemma_tol: f64,
    pub lemma_gamma: f64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            ln_min: -6.0,
            ln_max: 6.0,
            count: 241,
            triple_count: 49,
            tail_ln_horizon: 1000.0,
            growth_threshold: 0.05,
            fd_rel_step: 1e-4,
            lemma_point: 1e12,
            lemma_tol: 0.05,
            lemma_gamma: 0.1,
        }
    }
}

/// Outcome of [`validate_conditions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub family: String,
    pub monotone_pass: bool,
    pub monotone_detail: String,
    pub growth_value: f64,
    pub growth_pass: bool,
    pub lambda0_hat: f64,
    pub lambda0_pass: bool,
    pub lambda1_hat: f64,
    pub lambda2_hat: f64,
    pub doubling_value: f64,
    pub doubling_pass: bool,
    pub tail_slope: f64,
    pub tail_slope_pass: bool,
}

impl ValidationReport {
    /// Structural conditions P1-P3 all hold.
    pub fn pass(&self) -> bool {
        self.monotone_pass && self.growth_pass && self.lambda0_pass
    }

    pub fn csv(&self) -> String {
        let rows = [
            ("P1_monotone", f64::NAN, f64::NAN, self.monotone_pass),
            ("P2_growth", self.growth_value, f64::NAN, self.growth_pass),
            ("P3_lambda0_hat", self.lambda0_hat, f64::NAN, self.lambda0_pass),
            ("lambda1_hat", self.lambda1_hat, f64::NAN, self.lambda1_hat.is_finite()),
            ("lambda2_hat", self.lambda2_hat, f64::NAN, self.lambda2_hat.is_finite()),
            ("tail_doubling", self.doubling_value, f64::NAN, self.doubling_pass),
            ("tail_slope", self.tail_slope, f64::NAN, self.tail_slope_pass),
        ];
        let mut out = String::from("condition,value,pass\n");
        for (name, v, _, ok) in rows {
            out.push_str(&format!("{name},{v},{ok}\n"));
        }
        out
    }

    pub fn summary(&self) -> String {
        let mark = |b: bool| if b { "pass" } else { "FAIL" };
        format!(
            "model {}\n  P1 monotonicity: {} ({})\n  P2 growth limit: {:.6e} [{}]\n  P3 Lambda0_hat: {:.9} [{}]\n  Lambda1_hat: {:.6}\n  Lambda2_hat: {:.6}\n  tail doubling |eta(2t)/eta(t)-1|: {:.6e} [{}]\n  tail log-slope: {:.6e} [{}]\n",
            self.family,
            mark(self.monotone_pass),
            self.monotone_detail,
            self.growth_value,
            mark(self.growth_pass),
            self.lambda0_hat,
            mark(self.lambda0_pass),
            self.lambda1_hat,
            self.lambda2_hat,
            self.doubling_value,
            mark(self.doubling_pass),
            self.tail_slope,
            mark(self.tail_slope_pass),
        )
    }
}

fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
}

/// Finite-difference estimate of `(t eta'/eta) * ln eta` at `t = e^l`.
pub fn growth_quantity<T: Real>(model: &PhiModel<T>, l: f64, rel_step: f64) -> f64 {
    let h = rel_step * l.abs().max(1.0);
    let up = model.ln_eta_of_log(T::lit(l + h)).to_f64_lossy();
    let dn = model.ln_eta_of_log(T::lit(l - h)).to_f64_lossy();
    let slope = (up - dn) / (2.0 * h);
    slope * model.ln_eta_of_log(T::lit(l)).to_f64_lossy()
}


/// Samples the monotonicity, growth and submultiplicativity conditions.
pub fn validate_conditions<T: Real>(model: &PhiModel<T>, spec: &SampleSpec) -> Result<ValidationReport> {
    if spec.count < 3 || spec.ln_min >= 0.0 || spec.ln_max <= 0.0 || spec.tail_ln_horizon <= 0.0 {
        return invalid("sample grid must straddle t = 1 with at least three points");
    }
    let ln_eta = |l: f64| model.ln_eta_of_log(T::lit(l)).to_f64_lossy();
    let grid = log_grid(spec.ln_min, spec.ln_max, spec.count);

    // P1
    let mut detail = String::from("ok");
    let mut mono = ln_eta(0.0) >= -1e-15;
    if !mono {
        detail = "eta(1) < 1".into();
    }
    let mut ordered: Vec<f64> = grid.clone();
    ordered.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for w in ordered.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (ea, eb) = (ln_eta(a), ln_eta(b));
        if a + ea >= b + eb {
            mono = false;
            detail = format!("phi not increasing between ln t = {a} and {b}");
            break;
        }
        if b <= 0.0 && eb > ea + 1e-15 {
            mono = false;
            detail = format!("eta increases on (0,1) near ln t = {a}");
            break;
        }
        if a >= 0.0 && eb < ea - 1e-15 {
            mono = false;
            detail = format!("eta decreases on [1,inf) near ln t = {a}");
            break;
        }
        if ea < -1e-15 {
            mono = false;
            detail = format!("phi(t) < t at ln t = {a}");
            break;
        }
    }

    // P2
    let growth = growth_quantity(model, spec.tail_ln_horizon, spec.fd_rel_step);
    let growth_pass = growth.is_finite() && growth.abs() <= spec.growth_threshold;

    // P3
    let mut l0 = f64::NEG_INFINITY;
    for &a in &grid {
        for &b in &grid {
            l0 = l0.max(ln_eta(a + b) - ln_eta(a) - ln_eta(b));
        }
    }
    let lambda0_hat = l0.exp();

    // sup eta(eta(t) t) / eta(t)
    let mut l1 = f64::NEG_INFINITY;
    for &a in &grid {
        let e = ln_eta(a);
        l1 = l1.max(ln_eta(e + a) - e);
    }

    // sup over r < s of r eta(t/r) / (s eta(t/s))
    let coarse = log_grid(spec.ln_min, spec.ln_max, spec.triple_count);
    let radii = log_grid(spec.ln_min, 0.0, spec.triple_count);
    let mut l2 = f64::NEG_INFINITY;
    for &lt in &coarse {
        for (i, &lr) in radii.iter().enumerate() {
            for &ls in &radii[i + 1..] {
                l2 = l2.max(lr + ln_eta(lt - lr) - ls - ln_eta(lt - ls));
            }
        }
    }

    let lp = spec.lemma_point.ln();
    let doubling = (ln_eta(lp + std::f64::consts::LN_2) - ln_eta(lp)).exp_m1().abs();
    let h = spec.fd_rel_step * lp.abs().max(1.0);
    let slope = (ln_eta(lp + h) - ln_eta(lp - h)) / (2.0 * h);

    Ok(ValidationReport {
        family: model.family().name().to_string(),
        monotone_pass: mono,
        monotone_detail: detail,
        growth_value: growth,
        growth_pass,
        lambda0_hat,
        lambda0_pass: lambda0_hat.is_finite(),
        lambda1_hat: l1.exp(),
        lambda2_hat: l2.exp(),
        doubling_value: doubling,
        doubling_pass: doubling <= spec.lemma_tol,
        tail_slope: slope,
        tail_slope_pass: slope < spec.lemma_gamma,
    })
}

/// `|eta(c t)/eta(t) - 1|` at a single point.
pub fn doubling_defect<T: Real>(model: &PhiModel<T>, t: f64, c: f64) -> f64 {
    let l = t.ln();
    let a = model.ln_eta_of_log(T::lit(l + c.ln())).to_f64_lossy();
    let b = model.ln_eta_of_log(T::lit(l)).to_f64_lossy();
    (a - b).exp_m1().abs()
}

/// `phi_r(s) = Lambda0 * r * eta(1/r) * phi(s)`.
pub fn scaled_phi<T: Real>(model: &PhiModel<T>, r: T) -> Result<PhiModel<T>> {
    if !r.is_finite() {
        return Err(Error::NonFinite("scaled_phi radius"));
    }
    if !(r > T::zero() && r <= T::one()) {
        return invalid(format!("scaling radius must lie in (0, 1], got {r}"));
    }
    let l0 = model
        .lambda0
        .ok_or_else(|| Error::InvalidArgument("model has no lambda0; run validation first".into()))?;
    let factor = l0 * r * model.eta_of_log(-r.ln()) / model.multiplier;
    let mut out = model.clone();
    out.multiplier = model.multiplier * factor;
    Ok(out)
}

/// Radius `1 / (L2 (eta(A) + 1))`, cross-checked against `A / (L2 (phi(A) + A))`.
pub fn scaling_radius<T: Real>(model: &PhiModel<T>, a: T, l2: T) -> Result<T> {
    if !a.is_finite() || !l2.is_finite() {
        return Err(Error::NonFinite("scaling_radius"));
    }
    if a < T::one() || l2 < T::one() {
        return invalid("scaling radius needs A >= 1 and L2 >= 1");
    }
    let by_eta = T::one() / (l2 * (model.eta(a) + T::one()));
    let by_phi = a / (l2 * (model.phi(a) + a));
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0));
    if ((by_eta - by_phi) / by_eta).abs() > tol {
        return Err(Error::Domain(format!("radius forms disagree: {by_eta} vs {by_phi}")));
    }
    Ok(by_eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn ex() -> PhiModel<f64> {
        PhiModel::log_squared_example()
    }

    #[test]
    fn phi_slope_matches_differences() {
        for m in [PhiModel::linear(), PhiModel::log_squared_example(), PhiModel::power_log(1.5, 0.5, 2.0).unwrap()] {
            for &s in &[1e-3, 0.2, 0.9, 1.7, 40.0] {
                let (v, d) = m.phi_with_slope(s);
                let h = 1e-6 * s;
                assert_relative_eq!(v, m.phi(s), max_relative = 1e-14);
                assert_relative_eq!(d, (m.phi(s + h) - m.phi(s - h)) / (2.0 * h), max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn example_values() {
        let m = ex();
        assert_relative_eq!(m.phi_eval(1.0).unwrap(), 80.0, max_relative = 1e-15);
        assert_relative_eq!(m.eta_eval(E).unwrap(), 125.0, max_relative = 1e-14);
        assert_relative_eq!(m.eta_eval(1.0 / E).unwrap(), 125.0, max_relative = 1e-14);
        assert_eq!(m.phi_eval(0.0).unwrap(), 0.0);
        assert!(m.phi_eval(-1.0).is_err());
        assert!(m.phi_eval(f64::NAN).is_err());
        assert!(m.eta_eval(0.0).is_err());
    }

    #[test]
    fn power_log_covers_the_example_shape() {
        let sq = PhiModel::power_log(1.0, 0.5, 0.0).unwrap();
        assert_relative_eq!(sq.eta_eval(16.0).unwrap(), 4.0, max_relative = 1e-14);
        assert!(PhiModel::power_log(0.5, 0.0, 0.0).is_err());
        assert!(PhiModel::<f64>::new(Family::Linear, vec![1.0], None).is_err());
    }

    #[test]
    fn scaled_example_multiplier() {
        let r = (-1.0f64).exp();
        let s = scaled_phi(&ex(), r).unwrap();
        assert_relative_eq!(s.multiplier(), 25.0 / (16.0 * E), max_relative = 1e-13);
        assert!(scaled_phi(&ex(), 1.5).is_err());
        assert!(scaled_phi(&PhiModel::power_log(1.0, 0.0, 1.0).unwrap(), 0.5).is_err());
    }

    #[test]
    fn scaling_radius_examples() {
        assert_relative_eq!(scaling_radius(&ex(), 1.0, 1.0).unwrap(), 1.0 / 81.0, max_relative = 1e-14);
        assert_relative_eq!(scaling_radius(&PhiModel::linear(), 1.0, 1.0).unwrap(), 0.5, max_relative = 1e-15);
        assert_relative_eq!(scaling_radius(&ex(), E, 2.0).unwrap(), 1.0 / 252.0, max_relative = 1e-13);
        assert!(scaling_radius(&ex(), 0.5, 1.0).is_err());
    }

    #[test]
    fn example_passes_structural_conditions() {
        let r = validate_conditions(&ex(), &SampleSpec::default()).unwrap();
        assert!(r.pass(), "{}", r.summary());
        assert!((r.lambda0_hat - 0.0125).abs() < 1e-6);
        assert!(r.doubling_pass && r.tail_slope_pass);
        let lin = validate_conditions(&PhiModel::<f64>::linear(), &SampleSpec::default()).unwrap();
        assert!(lin.pass());
        assert_relative_eq!(lin.lambda0_hat, 1.0, max_relative = 1e-15);
        assert!(lin.lambda2_hat < 1.0 && lin.lambda2_hat > 0.85);
    }

    #[test]
    fn square_root_growth_is_rejected() {
        let m = PhiModel::power_log(1.0, 0.5, 0.0).unwrap();
        let r = validate_conditions(&m, &SampleSpec::default()).unwrap();
        assert!(!r.growth_pass);
        assert!(!r.pass());
    }

    #[test]
    fn growth_quantity_matches_closed_form() {
        // (2 / (4 + l)) * (ln 5 + 2 ln(4 + l))
        for l in [10.0f64, 100.0, 1000.0] {
            let exact = 2.0 / (4.0 + l) * (5f64.ln() + 2.0 * (4.0 + l).ln());
            assert_relative_eq!(growth_quantity(&ex(), l, 1e-4), exact, max_relative = 1e-7);
        }
    }

    #[test]
    fn single_precision_model() {
        let m = PhiModel::<f32>::log_squared_example();
        assert!((m.phi_eval(1.0).unwrap() - 80.0).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn eta_at_least_one_and_phi_consistent(l in -50.0f64..50.0, a in 1.0f64..4.0, b in 0.0f64..1.0, c in 0.0f64..3.0) {
            let t = l.exp();
            for m in [ex(), PhiModel::linear(), PhiModel::power_log(a, b, c).unwrap()] {
                let e = m.eta_eval(t).unwrap();
                prop_assert!(e >= 1.0);
                prop_assert!((m.phi_eval(t).unwrap() - e * t).abs() <= 1e-12 * e * t);
            }
        }

        #[test]
        fn phi_is_increasing(l in -30.0f64..30.0, d in 1e-3f64..2.0) {
            let m = ex();
            prop_assert!(m.phi(l.exp()) < m.phi((l + d).exp()));
        }
    }
}

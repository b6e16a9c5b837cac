//! The compactly supported barrier `h` with `P^+(D^2h) - h_t + phi_r(|Dh|) <= g`,
//! `supp g` inside `K_1` and `h <= -2` on `K_3`.
//!
//! Coordinates follow the self-similar construction: `t` runs over `[0, 1]`
//! and the final barrier on `Q_1` is `h(x, t + 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::c_n;
use crate::nonlinearity::{scaled_phi, PhiModel};
use crate::pucci::{pucci_plus, pucci_plus_eigs, EllipticityPair, SymMatrix};

/// Relative slack applied to grid-certified constants.
const MARGIN: f64 = 0.01;
/// Radial samples used for the profile constants.
const RADIAL: usize = 4096;
/// Default evaluation points per axis.
pub const DEFAULT_GRID: usize = 256;

/// Smallest integer `q` with `Lambda (n-1) - lambda (q+1) + 18 n <= -1`.
pub fn exponent_q(n: usize, ell: &EllipticityPair<f64>) -> f64 {
    let nf = n as f64;
    ((ell.big_lambda() * (nf - 1.0) + 18.0 * nf + 1.0) / ell.lambda() - 1.0).ceil().max(1.0)
}

/// Radial profile `H(y) = f(|y|)`: an even quartic cap on `|y| <= 3 sqrt(n)`,
/// `beta ((6 sqrt(n))^-q - |y|^-q)` on the annulus and zero outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub n: usize,
    pub q: f64,
    /// `1 / (1 - 2^-q)`.
    pub w: f64,
    /// Inner radius `3 sqrt(n)`.
    pub r_in: f64,
    pub cap: [f64; 3],
}

impl RadialProfile {
    pub fn new(n: usize, q: f64) -> Result<Self> {
        if n == 0 || !(q > 0.0 && q.is_finite()) {
            return invalid("profile needs n >= 1 and q > 0");
        }
        let w = 1.0 / (1.0 - (-q).exp2());
        let r_in = 3.0 * (n as f64).sqrt();
        let r2 = r_in * r_in;
        let a = -1.0 - w * q * (q + 6.0) / 8.0;
        let b = q * (q + 4.0) * w / (4.0 * r2);
        let c = -q * (q + 2.0) * w / (8.0 * r2 * r2);
        Ok(Self { n, q, w, r_in, cap: [a, b, c] })
    }

    /// `beta = (3 sqrt(n))^q w`; may overflow to infinity for large `q`.
    pub fn beta(&self) -> f64 {
        self.r_in.powf(self.q) * self.w
    }

    fn region(&self, r2: f64) -> Branch {
        let nf = self.n as f64;
        if r2 >= 36.0 * nf {
            Branch::ZeroTail
        } else if r2 >= 9.0 * nf {
            Branch::Annulus
        } else {
            Branch::InnerCap
        }
    }

    /// `(f, f'/r, (f'' - f'/r)/r^2)` at squared radius `r2`.
    pub fn radial(&self, r2: f64) -> (f64, f64, f64, Branch) {
        let [a, b, c] = self.cap;
        match self.region(r2) {
            Branch::InnerCap => (a + b * r2 + c * r2 * r2, 2.0 * b + 4.0 * c * r2, 8.0 * c, Branch::InnerCap),
            Branch::Annulus => self.annulus(r2),
            _ => (0.0, 0.0, 0.0, Branch::ZeroTail),
        }
    }

    /// Annulus closed form, also used for one-sided limits at `|y| = 6 sqrt(n)`.
    fn annulus(&self, r2: f64) -> (f64, f64, f64, Branch) {
        let ratio = (self.r_in * self.r_in / r2).powf(self.q / 2.0);
        let f = self.w * ((-self.q).exp2() - ratio);
        let big_a = self.w * self.q * ratio / r2;
        let big_b = -self.w * self.q * (self.q + 2.0) * ratio / (r2 * r2);
        (f, big_a, big_b, Branch::Annulus)
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        self.radial(norm2(y)).0
    }

    pub fn grad(&self, y: &[f64]) -> Vec<f64> {
        let (_, big_a, _, _) = self.radial(norm2(y));
        y.iter().map(|v| big_a * v).collect()
    }

    pub fn hess(&self, y: &[f64]) -> SymMatrix<f64> {
        let (_, big_a, big_b, _) = self.radial(norm2(y));
        radial_hessian(y, big_a, big_b)
    }

    /// Analytic eigenvalues of `D^2 H` at radius `r`, ascending.
    pub fn eigenvalues(&self, r: f64) -> Vec<f64> {
        let (_, big_a, big_b, _) = self.radial(r * r);
        let mut e = vec![big_a; self.n - 1];
        e.push(big_a + big_b * r * r);
        e.sort_by(|x, y| x.total_cmp(y));
        e
    }

    /// `P^+(D^2H) + y . DH / 2` at radius `r`.
    pub fn drift_sup_target(&self, r: f64, ell: &EllipticityPair<f64>) -> f64 {
        let (_, big_a, _, _) = self.radial(r * r);
        pucci_plus_eigs(&self.eigenvalues(r), ell) + 0.5 * big_a * r * r
    }
}

fn norm2(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum()
}

fn radial_hessian(y: &[f64], big_a: f64, big_b: f64) -> SymMatrix<f64> {
    let n = y.len();
    let mut m = SymMatrix::zeros(n).expect("n >= 1");
    for i in 0..n {
        for j in i..n {
            let d = if i == j { big_a } else { 0.0 };
            m.set(i, j, d + big_b * y[i] * y[j]);
        }
    }
    m
}

/// Which closed form produced a barrier value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    InnerCap,
    Annulus,
    ZeroTail,
    ExponentialExtension,
    PatchedK1,
}

impl Branch {
    pub fn name(&self) -> &'static str {
        match self {
            Branch::InnerCap => "inner-cap",
            Branch::Annulus => "annulus",
            Branch::ZeroTail => "zero-tail",
            Branch::ExponentialExtension => "exponential-extension",
            Branch::PatchedK1 => "patched-K1",
        }
    }
}

/// Value and derivatives of the barrier at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEval {
    pub h: f64,
    pub grad_h: Vec<f64>,
    pub hess_h: SymMatrix<f64>,
    pub h_t: f64,
    pub branch: Branch,
}

impl BarrierEval {
    fn zero(n: usize) -> Self {
        Self { h: 0.0, grad_h: vec![0.0; n], hess_h: SymMatrix::zeros(n).expect("n >= 1"), h_t: 0.0, branch: Branch::ZeroTail }
    }

    fn scaled(mut self, k: f64) -> Self {
        self.h *= k;
        self.h_t *= k;
        self.grad_h.iter_mut().for_each(|v| *v *= k);
        self.hess_h = self.hess_h.scale(k);
        self
    }

    pub fn grad_norm(&self) -> f64 {
        norm2(&self.grad_h).sqrt()
    }
}

/// Calibrated constants of the barrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub n: usize,
    pub lambda: f64,
    pub big_lambda: f64,
    pub q: f64,
    pub p: f64,
    /// Grid sup of `P^+(D^2H) + y . DH / 2` on the cap, before the margin.
    pub m_sup: f64,
    pub kappa: f64,
    pub m_neg: f64,
    pub delta_edge: f64,
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub r0: f64,
    /// `r0 = 2^-r0_log2`.
    pub r0_log2: u32,
    /// `phi(1.1 sup |D h~|)` outside `K_1`.
    pub m1: f64,
    /// Observed grid sup of `|D h~|` outside `K_1`.
    pub grad_sup: f64,
    pub t0: f64,
    pub t_star: f64,
    pub cn: f64,
    pub calibration_grid: usize,
    pub profile: RadialProfile,
}

impl BarrierParams {
    pub fn ellipticity(&self) -> EllipticityPair<f64> {
        EllipticityPair::new(self.lambda, self.big_lambda).expect("validated at calibration")
    }

    /// `Lambda (n-1) - lambda (q+1) + 18 n`.
    pub fn q_defect(&self) -> f64 {
        let nf = self.n as f64;
        self.big_lambda * (nf - 1.0) - self.lambda * (self.q + 1.0) + 18.0 * nf
    }
}

fn check_point(n: usize, x: &[f64], t: f64) -> Result<()> {
    if x.len() != n {
        return invalid(format!("expected {n} space coordinates, got {}", x.len()));
    }
    if !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("barrier point"));
    }
    if !(0.0..=1.0).contains(&t) || x.iter().any(|v| v.abs() > 1.0) {
        return Err(Error::Domain(format!("point ({x:?}, {t}) outside [-1,1]^n x [0,1]")));
    }
    Ok(())
}

/// Self-similar branch `t^-p H(x / sqrt t)` with `inv_t = 1/t`.
fn similarity(profile: &RadialProfile, p: f64, x: &[f64], inv_t: f64) -> BarrierEval {
    let n = x.len();
    let r2 = norm2(x) * inv_t;
    let (f, big_a, big_b, branch) = profile.radial(r2);
    if branch == Branch::ZeroTail {
        return BarrierEval::zero(n);
    }
    let s = inv_t.sqrt();
    let y: Vec<f64> = x.iter().map(|v| v * s).collect();
    let tp = inv_t.powf(p);
    let grad_h = y.iter().map(|v| tp * s * big_a * v).collect();
    let hess_h = radial_hessian(&y, big_a, big_b).scale(tp * inv_t);
    let h_t = -p * tp * inv_t * f - 0.5 * tp * inv_t * big_a * r2;
    BarrierEval { h: tp * f, grad_h, hess_h, h_t, branch }
}

fn raw(params: &BarrierParams, x: &[f64], t: f64) -> BarrierEval {
    let n = params.n;
    if t < params.t0 {
        return BarrierEval::zero(n);
    }
    if t <= params.t_star {
        return similarity(&params.profile, params.p, x, 1.0 / t);
    }
    let base = similarity(&params.profile, params.p, x, 36.0 * n as f64);
    if base.branch == Branch::ZeroTail {
        return base;
    }
    let e = (params.kappa * (t - params.t_star)).exp();
    let mut out = base.scaled(e);
    out.h_t = params.kappa * out.h;
    out.branch = Branch::ExponentialExtension;
    out
}

/// Unnormalized barrier in self-similar coordinates, before the `K_1` patch.
pub fn evaluate(params: &BarrierParams, x: &[f64], t: f64) -> Result<BarrierEval> {
    check_point(params.n, x, t)?;
    Ok(raw(params, x, t))
}

fn in_k1_hat(params: &BarrierParams, x: &[f64], t: f64) -> bool {
    t > 0.0 && t < params.cn * params.cn && x.iter().all(|v| v.abs() < params.cn)
}

fn in_k3_hat(params: &BarrierParams, x: &[f64], t: f64) -> bool {
    t > params.cn * params.cn && t < 1.0 && x.iter().all(|v| v.abs() < 3.0 * params.cn)
}

fn unpatched_scaled(params: &BarrierParams, z: &[f64]) -> f64 {
    let n = params.n;
    -2.0 * raw(params, &z[..n], z[n]).h / params.alpha
}

/// Boolean-sum (Coons) interpolation of the boundary trace on the closed box of `K^_1`.
fn coons(params: &BarrierParams, z: &[f64]) -> f64 {
    let n = params.n;
    let d = n + 1;
    let mut lo = vec![-params.cn; d];
    let mut hi = vec![params.cn; d];
    lo[n] = 0.0;
    hi[n] = params.cn * params.cn;
    let mut total = 0.0;
    let mut pt = z.to_vec();
    for set in 1u32..(1 << d) {
        let axes: Vec<usize> = (0..d).filter(|a| set >> a & 1 == 1).collect();
        let sign = if axes.len() % 2 == 1 { 1.0 } else { -1.0 };
        let mut acc = 0.0;
        for corner in 0u32..(1 << axes.len()) {
            let mut weight = 1.0;
            pt.copy_from_slice(z);
            for (k, &a) in axes.iter().enumerate() {
                let s = (z[a] - lo[a]) / (hi[a] - lo[a]);
                if corner >> k & 1 == 1 {
                    pt[a] = hi[a];
                    weight *= s;
                } else {
                    pt[a] = lo[a];
                    weight *= 1.0 - s;
                }
            }
            acc += weight * unpatched_scaled(params, &pt);
        }
        total += sign * acc;
    }
    total
}

fn patched(params: &BarrierParams, x: &[f64], t: f64) -> BarrierEval {
    let n = params.n;
    let mut z = x.to_vec();
    z.push(t);
    let f = |z: &[f64]| coons(params, z);
    let h0 = f(&z);
    let steps: Vec<f64> = (0..n).map(|_| 1e-3 * params.cn).chain([1e-3 * params.cn * params.cn]).collect();
    let shifted = |moves: &[(usize, f64)]| {
        let mut w = z.clone();
        for &(a, d) in moves {
            w[a] += d * steps[a];
        }
        f(&w)
    };
    let grad_h = (0..n).map(|a| (shifted(&[(a, 1.0)]) - shifted(&[(a, -1.0)])) / (2.0 * steps[a])).collect();
    let h_t = (shifted(&[(n, 1.0)]) - shifted(&[(n, -1.0)])) / (2.0 * steps[n]);
    let mut hess_h = SymMatrix::zeros(n).expect("n >= 1");
    for a in 0..n {
        hess_h.set(a, a, (shifted(&[(a, 1.0)]) - 2.0 * h0 + shifted(&[(a, -1.0)])) / (steps[a] * steps[a]));
        for b in (a + 1)..n {
            let v = (shifted(&[(a, 1.0), (b, 1.0)]) - shifted(&[(a, 1.0), (b, -1.0)]) - shifted(&[(a, -1.0), (b, 1.0)])
                + shifted(&[(a, -1.0), (b, -1.0)]))
                / (4.0 * steps[a] * steps[b]);
            hess_h.set(a, b, v);
        }
    }
    BarrierEval { h: h0, grad_h, hess_h, h_t, branch: Branch::PatchedK1 }
}

/// Normalized barrier `-2 h / alpha` in self-similar coordinates, patched on `K^_1`.
pub fn evaluate_scaled(params: &BarrierParams, x: &[f64], t: f64) -> Result<BarrierEval> {
    check_point(params.n, x, t)?;
    if in_k1_hat(params, x, t) {
        return Ok(patched(params, x, t));
    }
    Ok(raw(params, x, t).scaled(-2.0 / params.alpha))
}

/// Final barrier on `Q_1 = (-1,1)^n x (-1,0]`.
pub fn evaluate_q1(params: &BarrierParams, x: &[f64], t: f64) -> Result<BarrierEval> {
    evaluate_scaled(params, x, t + 1.0)
}

fn raw_residual(params: &BarrierParams, e: &BarrierEval) -> Result<f64> {
    Ok(pucci_plus(&e.hess_h, &params.ellipticity())? - e.h_t)
}

/// Visits every point of the closed grid `[-1,1]^n x [0,1]` with `nx` points per axis.
fn for_grid(n: usize, nx: usize, mut visit: impl FnMut(&[f64], f64, bool) -> Result<()>) -> Result<()> {
    let coord = |i: usize| -1.0 + 2.0 * i as f64 / (nx - 1) as f64;
    let mut x = vec![0.0; n];
    for k in 0..nx {
        let t = k as f64 / (nx - 1) as f64;
        for s in 0..nx.pow(n as u32) {
            let mut on_side = false;
            let mut rest = s;
            for xa in x.iter_mut() {
                let i = rest % nx;
                rest /= nx;
                *xa = coord(i);
                on_side |= i == 0 || i == nx - 1;
            }
            visit(&x, t, on_side || k == 0)?;
        }
    }
    Ok(())
}

fn infeasible<T>(what: &str, detail: impl std::fmt::Display) -> Result<T> {
    Err(Error::Infeasible(format!("{what}: {detail}")))
}

fn finite(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        infeasible(what, format!("non-finite value {v} at double precision"))
    }
}

fn agree(what: &str, coarse: f64, fine: f64) -> Result<()> {
    if (coarse - fine).abs() > MARGIN * coarse.abs().max(fine.abs()) {
        return infeasible(what, format!("refinement changed the value from {coarse} to {fine}"));
    }
    Ok(())
}

fn radial_extreme(count: usize, hi: f64, lo: f64, include_end: bool, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let last = if include_end { count } else { count - 1 };
    (0..=last).map(|i| lo + (hi - lo) * i as f64 / count as f64).fold((f64::NEG_INFINITY, f64::INFINITY), |(mx, mn), r| {
        let v = f(r);
        (mx.max(v), mn.min(v))
    })
}

pub fn calibrate(n: usize, ell: &EllipticityPair<f64>, model: &PhiModel<f64>) -> Result<BarrierParams> {
    calibrate_with(n, ell, model, DEFAULT_GRID)
}

/// Calibrates every constant; `grid` is the number of points per axis of the
/// space-time certification grid (refined once to `2 grid - 1`).
pub fn calibrate_with(n: usize, ell: &EllipticityPair<f64>, model: &PhiModel<f64>, grid: usize) -> Result<BarrierParams> {
    if !(1..=3).contains(&n) {
        return invalid("barrier supports n in 1..=3");
    }
    if grid < 16 {
        return invalid("certification grid needs at least 16 points per axis");
    }
    let lambda0 = model.lambda0().ok_or_else(|| Error::InvalidArgument("model has no lambda0; run validation first".into()))?;
    let nf = n as f64;
    let q = exponent_q(n, ell);
    let profile = RadialProfile::new(n, q)?;
    let beta = finite("beta", profile.beta())?;

    let m_sup = {
        let eval = |count| radial_extreme(count, profile.r_in, 0.0, true, |r| profile.drift_sup_target(r, ell)).0;
        let (coarse, fine) = (eval(RADIAL), eval(2 * RADIAL));
        agree("M", coarse, fine)?;
        coarse.max(fine)
    };
    let p = (m_sup + MARGIN * m_sup.abs() + 1.0).ceil().max(1.0);
    let t_star = 1.0 / (36.0 * nf);
    let cn: f64 = c_n(n);
    let t0 = cn * cn * t_star;
    let r_out = 6.0 * nf.sqrt();

    let kappa = {
        let ratio = |r: f64| {
            let (f, _, _, _) = profile.radial(r * r);
            pucci_plus_eigs(&profile.eigenvalues(r), ell) / (t_star * f)
        };
        let eval = |count| radial_extreme(count, r_out, 0.0, false, ratio).1;
        let (coarse, fine) = (eval(RADIAL), eval(2 * RADIAL));
        agree("kappa", coarse, fine)?;
        let inf = coarse.min(fine);
        finite("kappa", inf - 1.0 - MARGIN * inf.abs())?
    };
    let scale_star = (36.0 * nf).powf(p);
    let m_neg = {
        let pplus = |r: f64| pucci_plus_eigs(&profile.eigenvalues(r), ell);
        let lo = radial_extreme(RADIAL, r_out, profile.r_in, false, pplus).1;
        finite("m", -lo * scale_star * 36.0 * nf)?
    };
    if m_neg <= 0.0 {
        return infeasible("m", "P+ of the initial slice is not negative on the outer shell");
    }
    let delta_edge = if kappa <= 0.0 {
        0.5
    } else {
        let bad = |delta: f64| {
            (0..=RADIAL).any(|i| {
                let x = 1.0 - delta + delta * i as f64 / RADIAL as f64;
                let h = scale_star * profile.radial(x * x * 36.0 * nf).0;
                -m_neg - kappa * h > -m_neg / 2.0
            })
        };
        let mut delta = 0.5;
        while bad(delta) {
            delta *= 0.5;
            if delta < 1e-12 {
                return infeasible("delta", "no edge layer keeps -m - kappa h below -m/2");
            }
        }
        delta
    };

    let mut params = BarrierParams {
        n,
        lambda: ell.lambda(),
        big_lambda: ell.big_lambda(),
        q,
        p,
        m_sup,
        kappa,
        m_neg,
        delta_edge,
        c: f64::NAN,
        alpha: f64::NAN,
        beta,
        r0: f64::NAN,
        r0_log2: 0,
        m1: f64::NAN,
        grad_sup: f64::NAN,
        t0,
        t_star,
        cn,
        calibration_grid: grid,
        profile,
    };

    let sub = if n == 1 { grid } else { (grid / 4).max(16) };
    let mut alpha = f64::NEG_INFINITY;
    for k in 0..sub {
        let t = cn * cn + (1.0 - cn * cn) * k as f64 / (sub - 1) as f64;
        for s in 0..sub.pow(n as u32) {
            let x: Vec<f64> = (0..n).map(|a| -3.0 * cn + 6.0 * cn * ((s / sub.pow(a as u32)) % sub) as f64 / (sub - 1) as f64).collect();
            alpha = alpha.max(raw(&params, &x, t).h);
        }
    }
    alpha = alpha.max(raw(&params, &vec![3.0 * cn; n], 1.0).h);
    params.alpha = finite("alpha", alpha)?;
    if alpha >= 0.0 {
        return infeasible("alpha", "barrier vanishes somewhere on K3");
    }

    let mut worst = [f64::NEG_INFINITY; 2];
    let mut grad_sup = 0.0f64;
    for (slot, nx) in [grid, 2 * grid - 1].into_iter().enumerate() {
        if n > 1 && slot == 1 {
            worst[1] = worst[0];
            break;
        }
        let nx = if n == 1 { nx } else { sub };
        for_grid(n, nx, |x, t, _| {
            if in_k1_hat(&params, x, t) {
                return Ok(());
            }
            let e = raw(&params, x, t);
            grad_sup = grad_sup.max(e.grad_norm());
            if e.h != 0.0 {
                worst[slot] = worst[slot].max(raw_residual(&params, &e)?);
            }
            Ok(())
        })?;
    }
    let edge = edge_residual_sup(&params, grid)?;
    let (c_coarse, c_fine) = (-worst[0].max(edge), -worst[1].max(edge));
    if !(c_coarse > 0.0 && c_fine > 0.0) {
        return infeasible("c", format!("residual is not negative on the support (grid sup {})", -c_coarse.min(c_fine)));
    }
    agree("c", c_coarse, c_fine)?;
    params.c = finite("c", (1.0 - MARGIN) * c_coarse.min(c_fine))?;
    params.grad_sup = finite("sup |Dh|", -2.0 / alpha * grad_sup)?;
    params.m1 = finite("M1", model.phi(1.1 * params.grad_sup))?;

    let target = 2.0 * params.c / alpha;
    let ln2 = std::f64::consts::LN_2;
    let found = (0u32..=4096).find(|&j| {
        let l = j as f64 * ln2;
        target + lambda0 * (model.ln_eta_of_log(l) - l).exp() * params.m1 <= 0.0
    });
    let Some(j) = found else {
        return infeasible("r0", "no dyadic radius down to 2^-4096 satisfies the scaling condition");
    };
    params.r0_log2 = j;
    params.r0 = (-(j as f64)).exp2();
    if params.r0 == 0.0 {
        return infeasible("r0", format!("2^-{j} underflows at double precision"));
    }
    Ok(params)
}

/// Sup over `t` of the residual's one-sided limit at the edge of the support,
/// where it is largest and which no grid point reaches.
fn edge_residual_sup(params: &BarrierParams, grid: usize) -> Result<f64> {
    let ell = params.ellipticity();
    let nf = params.n as f64;
    let r2 = 36.0 * nf;
    let (_, big_a, big_b, _) = params.profile.annulus(r2);
    let mut eigs = vec![big_a; params.n - 1];
    eigs.push(big_a + big_b * r2);
    let pplus = pucci_plus_eigs(&eigs, &ell);
    let mut sup = f64::NEG_INFINITY;
    for k in 0..=4 * grid {
        let t = params.t0 + (1.0 - params.t0) * k as f64 / (4 * grid) as f64;
        let v = if t <= params.t_star {
            (1.0 / t).powf(params.p + 1.0) * (pplus + 0.5 * big_a * r2)
        } else {
            (params.kappa * (t - params.t_star)).exp() * (36.0 * nf).powf(params.p + 1.0) * pplus
        };
        sup = sup.max(v);
    }
    finite("edge residual", sup)
}

/// Clause-by-clause outcome of [`verify`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    pub grid: usize,
    pub r: f64,
    pub points: usize,
    /// Max of `P^+(D^2h) - h_t + phi_r(|Dh|)` outside `K_1`.
    pub residual_max: f64,
    pub residual_witness: Vec<f64>,
    pub residual_pass: bool,
    /// Min of `-h` on `K_3`.
    pub k3_min: f64,
    pub k3_pass: bool,
    /// Max of `|h|` on the parabolic boundary.
    pub boundary_max: f64,
    pub boundary_pass: bool,
    pub annulus_points: usize,
    pub annulus_violations: usize,
    pub inner_points: usize,
    pub inner_violations: usize,
    pub eigen_max_rel_err: f64,
    pub eigen_pass: bool,
    pub grad_sup_observed: f64,
    pub phi_grad_sup_observed: f64,
    pub m1: f64,
    pub m1_pass: bool,
    pub sign_violations: usize,
}

impl BarrierReport {
    pub fn pass(&self) -> bool {
        self.residual_pass
            && self.k3_pass
            && self.boundary_pass
            && self.annulus_violations == 0
            && self.inner_violations == 0
            && self.eigen_pass
            && self.m1_pass
            && self.sign_violations == 0
    }
}

/// One evaluated grid point of [`verify`], in `Q_1` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSample {
    pub x: Vec<f64>,
    pub t: f64,
    pub h: f64,
    pub residual: f64,
    pub branch: Branch,
}

/// Max relative gap between analytic and Jacobi eigenvalues of `D^2 H` at
/// `samples` radii across the annulus.
pub fn eigen_agreement(profile: &RadialProfile, samples: usize) -> Result<f64> {
    let n = profile.n;
    let r_out = 2.0 * profile.r_in;
    let mut worst = 0.0f64;
    for k in 0..samples {
        let r = profile.r_in + (r_out - profile.r_in) * (k as f64 + 0.5) / samples as f64;
        let theta = 0.7 + 1.3 * k as f64;
        let dir: Vec<f64> = match n {
            1 => vec![if k % 2 == 0 { 1.0 } else { -1.0 }],
            2 => vec![theta.cos(), theta.sin()],
            _ => {
                let phi = 0.3 + 0.9 * k as f64;
                vec![theta.cos() * phi.sin(), theta.sin() * phi.sin(), phi.cos()]
            }
        };
        let y: Vec<f64> = dir.iter().map(|d| d * r).collect();
        let numeric = profile.hess(&y).eigenvalues()?;
        let analytic = profile.eigenvalues(r);
        let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in numeric.iter().zip(&analytic) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    Ok(worst)
}

/// Certifies the barrier inequalities on a grid with `nx` points per axis.
/// Returns the report and the evaluated samples.
pub fn verify(params: &BarrierParams, model: &PhiModel<f64>, r: f64, nx: usize) -> Result<(BarrierReport, Vec<BarrierSample>)> {
    if nx < 4 {
        return invalid("verification grid needs at least 4 points per axis");
    }
    let n = params.n;
    let ell = params.ellipticity();
    let phi_r = scaled_phi(model, r)?;
    let scale = -2.0 / params.alpha;
    let eigen_max_rel_err = eigen_agreement(&params.profile, 100)?;
    let mut rep = BarrierReport {
        grid: nx,
        r,
        points: 0,
        residual_max: f64::NEG_INFINITY,
        residual_witness: vec![],
        residual_pass: false,
        k3_min: f64::INFINITY,
        k3_pass: false,
        boundary_max: 0.0,
        boundary_pass: false,
        annulus_points: 0,
        annulus_violations: 0,
        inner_points: 0,
        inner_violations: 0,
        eigen_max_rel_err,
        eigen_pass: eigen_max_rel_err <= 1e-10,
        grad_sup_observed: 0.0,
        phi_grad_sup_observed: 0.0,
        m1: params.m1,
        m1_pass: false,
        sign_violations: 0,
    };
    let mut samples = Vec::with_capacity(nx.pow(n as u32 + 1));
    for_grid(n, nx, |x, t, on_boundary| {
        rep.points += 1;
        let e = evaluate_scaled(params, x, t)?;
        let inside_k1 = e.branch == Branch::PatchedK1;
        let residual = pucci_plus(&e.hess_h, &ell)? - e.h_t + phi_r.phi(e.grad_norm());
        if !inside_k1 {
            if residual > rep.residual_max {
                rep.residual_max = residual;
                rep.residual_witness = x.iter().copied().chain([t - 1.0]).collect();
            }
            rep.grad_sup_observed = rep.grad_sup_observed.max(e.grad_norm());
        }
        if in_k3_hat(params, x, t) {
            rep.k3_min = rep.k3_min.min(-e.h);
        }
        if on_boundary {
            rep.boundary_max = rep.boundary_max.max(e.h.abs());
        }
        if e.h > 0.0 {
            rep.sign_violations += 1;
        }
        if !inside_k1 && (params.t0..=params.t_star).contains(&t) {
            let r2 = norm2(x) / t;
            let raw_res = (pucci_plus(&e.hess_h, &ell)? - e.h_t) / scale;
            let bound = t.powf(-params.p - 1.0);
            match e.branch {
                Branch::Annulus => {
                    rep.annulus_points += 1;
                    if raw_res > -params.q * bound * r2.powf(-(params.q + 2.0) / 2.0) {
                        rep.annulus_violations += 1;
                    }
                }
                Branch::InnerCap => {
                    rep.inner_points += 1;
                    if raw_res > -bound {
                        rep.inner_violations += 1;
                    }
                }
                _ => {}
            }
            let negative = r2 < 36.0 * n as f64;
            if negative != (e.h < 0.0) {
                rep.sign_violations += 1;
            }
        }
        samples.push(BarrierSample { x: x.to_vec(), t: t - 1.0, h: e.h, residual, branch: e.branch });
        Ok(())
    })?;
    rep.residual_pass = rep.residual_max <= 1e-8;
    rep.k3_pass = rep.k3_min >= 2.0;
    rep.boundary_pass = rep.boundary_max <= 1e-12;
    rep.phi_grad_sup_observed = model.phi(rep.grad_sup_observed);
    rep.m1_pass = rep.phi_grad_sup_observed <= params.m1;
    Ok((rep, samples))
}

/// CSV of verification samples: `x1[,x2..],t,h,residual,branch`.
pub fn samples_csv(samples: &[BarrierSample]) -> String {
    let n = samples.first().map(|s| s.x.len()).unwrap_or(1);
    let mut out: String = (1..=n).map(|i| format!("x{i},")).collect();
    out.push_str("t,h,residual,branch\n");
    for s in samples {
        for v in &s.x {
            out.push_str(&format!("{v:.17e},"));
        }
        out.push_str(&format!("{:.17e},{:.17e},{:.17e},{}\n", s.t, s.h, s.residual, s.branch.name()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit() -> EllipticityPair<f64> {
        EllipticityPair::new(1.0, 1.0).unwrap()
    }

    fn calibrated() -> BarrierParams {
        calibrate_with(1, &unit(), &PhiModel::log_squared_example(), 64).unwrap()
    }

    #[test]
    fn exponent_examples() {
        assert_eq!(exponent_q(1, &unit()), 18.0);
        assert_eq!(exponent_q(2, &EllipticityPair::new(1.0, 2.0).unwrap()), 38.0);
        let ell = EllipticityPair::new(0.5, 3.0).unwrap();
        let q = exponent_q(3, &ell);
        let defect = |q: f64| 3.0 * 2.0 - 0.5 * (q + 1.0) + 54.0;
        assert!(defect(q) <= -1.0 && defect(q - 1.0) > -1.0);
    }

    #[test]
    fn profile_is_c2_across_the_inner_radius() {
        for n in 1..=3 {
            let prof = RadialProfile::new(n, 18.0).unwrap();
            let r = prof.r_in;
            let eps = 1e-9;
            let (fi, ai, bi, _) = prof.radial((r - eps) * (r - eps));
            let (fo, ao, bo, _) = prof.radial(r * r);
            assert_relative_eq!(fo, -1.0, epsilon = 1e-12);
            assert_relative_eq!(fi, fo, epsilon = 1e-6);
            assert_relative_eq!(ai, ao, max_relative = 1e-6);
            // second radial derivative A + B r^2
            assert_relative_eq!(ai + bi * r * r, ao + bo * r * r, max_relative = 1e-6);
        }
    }

    #[test]
    fn cap_stays_below_minus_one() {
        let prof = RadialProfile::new(1, 18.0).unwrap();
        for i in 0..=300 {
            let r = 3.0 * i as f64 / 300.0;
            assert!(prof.radial(r * r).0 <= -1.0 + 1e-12);
        }
    }

    #[test]
    fn annulus_gradient_identity() {
        let prof = RadialProfile::new(2, 38.0).unwrap();
        for &r in &[4.3, 5.0, 6.0 * 2f64.sqrt() - 0.01] {
            let y = [r * 0.6, r * 0.8];
            let g = prof.grad(&y);
            let dot = g[0] * y[0] + g[1] * y[1];
            let expect = prof.w * prof.q * (prof.r_in / r).powf(prof.q);
            assert_relative_eq!(dot, expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn outer_shell_sign_at_six_root_n() {
        let ell = unit();
        let prof = RadialProfile::new(1, 18.0).unwrap();
        let r: f64 = 6.0 - 1e-12;
        let got = pucci_plus_eigs(&prof.eigenvalues(r), &ell);
        let expect = prof.beta() * 18.0 * (0.0 - 19.0) * r.powf(-20.0);
        assert!(got < 0.0);
        assert_relative_eq!(got, expect, max_relative = 1e-9);
    }

    #[test]
    fn analytic_and_jacobi_eigenvalues_agree() {
        for (n, q) in [(1, 18.0), (2, 38.0), (3, 60.0)] {
            let err = eigen_agreement(&RadialProfile::new(n, q).unwrap(), 100).unwrap();
            assert!(err <= 1e-10, "n={n}: {err}");
        }
    }

    #[test]
    fn n1_calibration_values() {
        let p = calibrated();
        assert_eq!(p.q, 18.0);
        assert!(p.q_defect() <= -1.0);
        assert!((p.m_sup - 26.2).abs() < 0.1, "{}", p.m_sup);
        assert!(-p.p + p.m_sup <= -1.0);
        assert!(p.alpha < 0.0 && p.c > 0.0 && p.r0 > 0.0 && p.r0 <= 1.0);
        assert!(p.kappa < 0.0);
        assert!(p.m1 >= p.grad_sup);
    }

    #[test]
    fn wide_ellipticity_in_two_dimensions_is_infeasible() {
        let r = calibrate_with(2, &EllipticityPair::new(1.0, 2.0).unwrap(), &PhiModel::log_squared_example(), 32);
        assert!(matches!(r, Err(Error::Infeasible(_))), "{r:?}");
    }

    #[test]
    fn zero_tail_and_boundary() {
        let p = calibrated();
        let e = evaluate(&p, &[0.9], 0.01).unwrap();
        assert_eq!(e.branch, Branch::ZeroTail);
        assert_eq!(e.h, 0.0);
        assert!(e.grad_h.iter().all(|&g| g == 0.0) && e.h_t == 0.0);
        for &t in &[-1.0, -0.5, -0.1, 0.0] {
            assert!(evaluate_q1(&p, &[1.0], t).unwrap().h.abs() <= 1e-12);
            assert!(evaluate_q1(&p, &[-1.0], t).unwrap().h.abs() <= 1e-12);
        }
        for &x in &[-0.5, 0.0, 0.05, 0.7] {
            assert_eq!(evaluate_q1(&p, &[x], -1.0).unwrap().h, 0.0);
        }
        assert!(evaluate(&p, &[1.5], 0.5).is_err());
        assert!(evaluate(&p, &[0.0], -0.1).is_err());
    }

    #[test]
    fn patch_matches_trace_on_k1_boundary() {
        let p = calibrated();
        let c2 = p.cn * p.cn;
        let inside = evaluate_scaled(&p, &[0.5 * p.cn], 0.999999 * c2).unwrap();
        let edge = evaluate_scaled(&p, &[0.5 * p.cn], c2).unwrap();
        assert_eq!(inside.branch, Branch::PatchedK1);
        assert_relative_eq!(inside.h, edge.h, max_relative = 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn analytic_derivatives_match_differences(x in -0.9f64..0.9, t in 0.003f64..0.98) {
            let p = calibrated();
            let e = evaluate(&p, &[x], t).unwrap();
            prop_assume!(e.h != 0.0);
            let (dx, dt) = (1e-6, 1e-8);
            let f = |x: f64, t: f64| evaluate(&p, &[x], t).unwrap();
            let (xp, xm) = (f(x + dx, t), f(x - dx, t));
            prop_assume!(xp.branch == e.branch && xm.branch == e.branch);
            let (tp, tm) = (f(x, t + dt), f(x, t - dt));
            prop_assume!(tp.branch == e.branch && tm.branch == e.branch);
            let scale = e.h.abs().max(1.0);
            prop_assert!(((xp.h - xm.h) / (2.0 * dx) - e.grad_h[0]).abs() <= 1e-4 * scale.max(e.grad_h[0].abs()));
            prop_assert!(((xp.grad_h[0] - xm.grad_h[0]) / (2.0 * dx) - e.hess_h.get(0, 0)).abs()
                <= 1e-4 * e.hess_h.get(0, 0).abs().max(e.grad_h[0].abs()).max(1.0));
            prop_assert!(((tp.h - tm.h) / (2.0 * dt) - e.h_t).abs() <= 1e-4 * e.h_t.abs().max(scale));
        }
    }

    #[test]
    fn verification_passes_at_r0() {
        let p = calibrated();
        let (rep, samples) = verify(&p, &PhiModel::log_squared_example(), p.r0, 64).unwrap();
        assert!(rep.pass(), "{rep:?}");
        assert_eq!(samples.len(), 64 * 64);
        assert!(rep.annulus_points > 0 && rep.inner_points > 0);
    }

    #[test]
    fn large_radius_breaks_the_gradient_clause() {
        let p = calibrated();
        let (rep, _) = verify(&p, &PhiModel::log_squared_example(), 1.0, 64).unwrap();
        assert!(!rep.residual_pass);
        assert_eq!(rep.residual_witness.len(), 2);
    }
}

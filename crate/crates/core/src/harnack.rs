//! Empirical checks of the intrinsic Harnack inequality and its ingredients:
//! the constant sweep, the basic measure estimate, the `L^eps` tail, the
//! radii schedule and the vanishing-solution counterexample.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{c_n, region_catalog, BoxRegion, ParabolicCube};
use crate::nonlinearity::{scaled_phi, PhiModel};
use crate::pucci::EllipticityPair;
use crate::rng;
use crate::solver::{analytic_residual, evolve_extremal, EvolveParams, SpaceTimeGrid, VanishingExample};
use crate::stacks::LevelSchedule;

/// Sampling density of the scaled region per axis.
const A_SAMPLES: usize = 33;
/// Relative change in the sampled sup that triggers a denser resample.
const SUP_TOL: f64 = 1e-3;
/// Densest resample of the scaled region.
const A_SAMPLES_MAX: usize = 513;

/// `a0 = u / (C (phi(u) + u))`.
pub fn intrinsic_radius(model: &PhiModel<f64>, u00: f64, c: f64) -> Result<f64> {
    if !(u00 > 0.0 && u00.is_finite()) {
        return invalid(format!("center value must be positive, got {u00}"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return invalid(format!("C must be positive, got {c}"));
    }
    Ok(u00 / (c * (model.phi(u00) + u00)))
}

/// Outcome of one intrinsic Harnack test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackCheck {
    pub c: f64,
    pub a0: f64,
    /// `A` mapped by `(x, t) -> (a0 x, a0^2 t)`.
    pub region: BoxRegion<f64>,
    pub sup_a_value: f64,
    pub center_value: f64,
    pub ratio: f64,
    pub samples_per_axis: usize,
    pub pass: bool,
}

/// Index of the top-center node; requires an odd `nx` and a grid whose top
/// time level is `t = 0` and whose space box is centered at the origin.
fn center_value(u: &SpaceTimeGrid<f64>) -> Result<f64> {
    let n = u.n();
    let nx = u.nx();
    if nx.is_multiple_of(2) {
        return invalid("grid needs an odd nx so that x = 0 is a node");
    }
    let mid = (nx - 1) / 2;
    let idx = vec![mid; n];
    if (0..n).any(|a| u.coord(a, mid).abs() > 1e-12) || u.time(u.nt() - 1).abs() > 1e-12 {
        return invalid("grid must be centered at x = 0 with top level t = 0");
    }
    Ok(u.at(u.nt() - 1, &idx))
}

fn sample_sup(u: &SpaceTimeGrid<f64>, region: &BoxRegion<f64>, per_axis: usize) -> Result<f64> {
    let n = u.n();
    let lin = |a: usize, i: usize| region.lo[a] + (region.hi[a] - region.lo[a]) * i as f64 / (per_axis - 1) as f64;
    let mut sup = f64::NEG_INFINITY;
    let mut x = vec![0.0; n];
    for k in 0..per_axis {
        let t = lin(n, k);
        for s in 0..per_axis.pow(n as u32) {
            for (a, xa) in x.iter_mut().enumerate() {
                *xa = lin(a, (s / per_axis.pow(a as u32)) % per_axis);
            }
            let v = u.interpolate(&x, t).ok_or_else(|| Error::Domain("scaled region leaves the grid".into()))?;
            sup = sup.max(v);
        }
    }
    Ok(sup)
}

/// Checks `sup_A u(a0 x, a0^2 t) <= C u(0,0)` on a grid over `Q_2`.
pub fn harnack_check(u: &SpaceTimeGrid<f64>, model: &PhiModel<f64>, c: f64) -> Result<HarnackCheck> {
    harnack_check_scaled(u, model, c, 1.0)
}

/// As [`harnack_check`] with the threshold `factor C u(0,0)`.
pub fn harnack_check_scaled(u: &SpaceTimeGrid<f64>, model: &PhiModel<f64>, c: f64, factor: f64) -> Result<HarnackCheck> {
    if u.values().iter().any(|&v| !(v > 0.0)) {
        return invalid("harnack check needs a strictly positive solution");
    }
    let n = u.n();
    let center = center_value(u)?;
    let a0 = intrinsic_radius(model, center, c)?;
    let cn: f64 = c_n(n);
    let a = region_catalog::<f64>(n)?.a;
    let lag = a0 * a0 * (1.0 - cn * cn / 2.0);
    if lag / u.dt() < 1e-12 {
        let rho = (u.region().hi[0] - u.region().lo[0]) / 2.0;
        return Err(Error::Resolution {
            reason: format!("a0 = {a0:e} maps A below the time step {:e}", u.dt()),
            required_nx: ((2.0 * rho / (a0 * cn)).ceil() as usize).saturating_add(1),
        });
    }
    let lo: Vec<f64> = (0..n).map(|i| a0 * a.lo[i]).chain([a0 * a0 * a.lo[n]]).collect();
    let hi: Vec<f64> = (0..n).map(|i| a0 * a.hi[i]).chain([a0 * a0 * a.hi[n]]).collect();
    let region = BoxRegion::new(lo, hi)?;
    let mut per = A_SAMPLES;
    let mut sup = sample_sup(u, &region, per)?;
    while per < A_SAMPLES_MAX {
        let denser = sample_sup(u, &region, 2 * per - 1)?;
        let settled = (denser - sup).abs() <= SUP_TOL * sup.abs();
        per = 2 * per - 1;
        sup = sup.max(denser);
        if settled {
            break;
        }
    }
    Ok(HarnackCheck {
        c,
        a0,
        region,
        sup_a_value: sup,
        center_value: center,
        ratio: sup / center,
        samples_per_axis: per,
        pass: sup <= factor * c * center,
    })
}

/// `C` values `start, start + step, ...`.
pub fn c_grid(start: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start + step * i as f64).collect()
}

/// Family of positive initial profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// Positive base plus Gaussian bumps.
    Bumps,
    /// Constant profiles.
    Constants,
}

/// Ranges for the random initial profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    pub members: usize,
    pub base: [f64; 2],
    pub max_bumps: usize,
    pub amplitude: [f64; 2],
    pub center: [f64; 2],
    pub width: [f64; 2],
}

impl Default for FamilySpec {
    fn default() -> Self {
        Self {
            kind: FamilyKind::Bumps,
            members: 50,
            base: [0.5, 2.0],
            max_bumps: 3,
            amplitude: [0.0, 1.0],
            center: [-1.5, 1.5],
            width: [0.2, 0.6],
        }
    }
}

impl FamilySpec {
    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if self.members == 0 {
            return invalid("family needs at least one member");
        }
        if !(ordered(self.base) && self.base[0] > 0.0) {
            return invalid("base range must be positive and ordered");
        }
        if !(ordered(self.amplitude) && self.amplitude[0] >= 0.0) {
            return invalid("amplitude range must be nonnegative and ordered");
        }
        if !(ordered(self.width) && self.width[0] > 0.0) || !ordered(self.center) {
            return invalid("bump ranges must be ordered with positive widths");
        }
        Ok(())
    }
}

/// `base + sum A_j exp(-|x - c_j|^2 / w_j^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpProfile {
    pub base: f64,
    pub bumps: Vec<(f64, Vec<f64>, f64)>,
}

impl BumpProfile {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.bumps.iter().fold(self.base, |acc, (amp, c, w)| {
            let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            acc + amp * (-d2 / (w * w)).exp()
        })
    }
}

fn uniform(rng: &mut rng::LabRng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Member `index` of the family drawn from the `(seed, stream)` generator.
pub fn family_profile(spec: &FamilySpec, n: usize, seed: u64, stream: &str, index: usize) -> BumpProfile {
    let mut r = rng::stream(seed, stream, index as u64);
    let base = uniform(&mut r, spec.base);
    if spec.kind == FamilyKind::Constants {
        return BumpProfile { base, bumps: vec![] };
    }
    let count = r.random_range(0..=spec.max_bumps);
    let bumps = (0..count)
        .map(|_| {
            let amp = uniform(&mut r, spec.amplitude);
            let center = (0..n).map(|_| uniform(&mut r, spec.center)).collect();
            let width = uniform(&mut r, spec.width);
            (amp, center, width)
        })
        .collect();
    BumpProfile { base, bumps }
}

/// Resolution and family for [`harnack_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub n: usize,
    pub nx: usize,
    pub stored_levels: usize,
    pub seed: u64,
    pub family: FamilySpec,
}

/// Per-member sweep outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberResult {
    pub id: usize,
    pub profile: BumpProfile,
    /// `None` when the member lost positivity or failed to evolve.
    pub excluded: Option<String>,
    pub center_value: f64,
    pub ratios: Vec<f64>,
    pub passes: Vec<bool>,
    pub minimal_c: Option<f64>,
    pub upward_closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub c_grid: Vec<f64>,
    pub members: Vec<MemberResult>,
    pub excluded: usize,
    /// Smallest grid value from which every included member passes.
    pub minimal_c: Option<f64>,
    pub monotonicity_violations: usize,
}

impl SweepReport {
    /// `member,minimal_c,C,ratio,pass` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("member,minimal_c,C,ratio,pass\n");
        for m in &self.members {
            let min = m.minimal_c.map(|v| format!("{v}")).unwrap_or_else(|| "none".into());
            if m.excluded.is_some() {
                s.push_str(&format!("{},excluded,,,\n", m.id));
                continue;
            }
            for ((c, r), p) in self.c_grid.iter().zip(&m.ratios).zip(&m.passes) {
                s.push_str(&format!("{},{min},{c},{r:.17e},{}\n", m.id, u8::from(*p)));
            }
        }
        s
    }
}

/// Evolves one member on `Q_2` and returns the grid.
pub fn evolve_member(
    profile: &BumpProfile,
    model: &PhiModel<f64>,
    ell: &EllipticityPair<f64>,
    cube: &ParabolicCube<f64>,
    nx: usize,
    stored_levels: usize,
) -> Result<SpaceTimeGrid<f64>> {
    let mut params = EvolveParams::new(nx);
    params.stored_levels = Some(stored_levels);
    Ok(evolve_extremal(&|x: &[f64]| profile.value(x), model, ell, cube, &params)?.grid)
}

fn first_pass(c_grid: &[f64], passes: &[bool]) -> (Option<f64>, bool) {
    let first = passes.iter().position(|&p| p);
    let closed = first.map(|i| passes[i..].iter().all(|&p| p)).unwrap_or(true);
    (first.map(|i| c_grid[i]), closed)
}

/// Runs [`harnack_check`] for every member and every `C` in `c_grid`.
pub fn harnack_sweep(spec: &SweepSpec, model: &PhiModel<f64>, ell: &EllipticityPair<f64>, c_grid: &[f64]) -> Result<SweepReport> {
    spec.family.validate()?;
    if c_grid.is_empty() || c_grid.windows(2).any(|w| w[0] >= w[1]) || c_grid[0] <= 0.0 {
        return invalid("C grid must be positive and strictly increasing");
    }
    let cube = ParabolicCube::origin(spec.n, 2.0)?;
    let members: Vec<MemberResult> = (0..spec.family.members)
        .into_par_iter()
        .map(|id| {
            let profile = family_profile(&spec.family, spec.n, spec.seed, "harnack-family", id);
            let mut out = MemberResult {
                id,
                profile: profile.clone(),
                excluded: None,
                center_value: f64::NAN,
                ratios: vec![],
                passes: vec![],
                minimal_c: None,
                upward_closed: true,
            };
            let grid = match evolve_member(&profile, model, ell, &cube, spec.nx, spec.stored_levels) {
                Ok(g) => g,
                Err(e) => {
                    out.excluded = Some(e.to_string());
                    return Ok(out);
                }
            };
            for &c in c_grid {
                let check = harnack_check(&grid, model, c)?;
                out.center_value = check.center_value;
                out.ratios.push(check.ratio);
                out.passes.push(check.pass);
            }
            let (min, closed) = first_pass(c_grid, &out.passes);
            out.minimal_c = min;
            out.upward_closed = closed;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let included: Vec<&MemberResult> = members.iter().filter(|m| m.excluded.is_none()).collect();
    let all_pass: Vec<bool> = (0..c_grid.len()).map(|i| included.iter().all(|m| m.passes[i])).collect();
    let minimal_c = (0..c_grid.len()).find(|&i| all_pass[i..].iter().all(|&p| p)).map(|i| c_grid[i]);
    Ok(SweepReport {
        c_grid: c_grid.to_vec(),
        excluded: members.len() - included.len(),
        monotonicity_violations: included.iter().filter(|m| !m.upward_closed).count(),
        members,
        minimal_c,
    })
}

/// Constants `(L, mu, r1)` of the basic measure estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureCheckParams {
    pub l: f64,
    pub mu: f64,
    pub r1: f64,
}

impl MeasureCheckParams {
    pub fn new(l: f64, mu: f64, r1: f64) -> Result<Self> {
        if !(l > 1.0 && l.is_finite()) {
            return invalid("L must exceed 1");
        }
        if !(mu > 0.0 && mu < 1.0) || !(r1 > 0.0 && r1 < 1.0) {
            return invalid("mu and r1 must lie in (0, 1)");
        }
        Ok(Self { l, mu, r1 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub inf_k3: f64,
    pub hypothesis: bool,
    pub k1_nodes: usize,
    pub fraction: f64,
    pub pass: bool,
}

fn in_closed(b: &BoxRegion<f64>, p: &[f64]) -> bool {
    p.iter().zip(b.lo.iter().zip(&b.hi)).all(|(v, (lo, hi))| *v >= lo - 1e-12 && *v <= hi + 1e-12)
}

/// If `inf_{K3} u <= 1`, the fraction of `K1` nodes with `u <= L` must reach `mu`.
/// `delta` extends the top of `K1` by `delta^2`.
pub fn measure_estimate_check(u: &SpaceTimeGrid<f64>, params: &MeasureCheckParams, delta: f64) -> Result<MeasureReport> {
    let n = u.n();
    let cat = region_catalog::<f64>(n)?;
    let mut k1 = cat.k1.clone();
    k1.hi[n] += delta * delta;
    let mut inf_k3 = f64::INFINITY;
    let (mut k1_nodes, mut below) = (0usize, 0usize);
    let mut p = vec![0.0; n + 1];
    for k in 0..u.nt() {
        p[n] = u.time(k);
        for s in 0..u.space_len() {
            u.space_coords(s, &mut p[..n]);
            let v = u.values()[k * u.space_len() + s];
            if in_closed(&cat.k3, &p) {
                inf_k3 = inf_k3.min(v);
            }
            if in_closed(&k1, &p) {
                k1_nodes += 1;
                below += usize::from(v <= params.l);
            }
        }
    }
    if k1_nodes == 0 || !inf_k3.is_finite() {
        let required = (2.0 / c_n::<f64>(n)).ceil() as usize + 1;
        return Err(Error::Resolution { reason: "grid has no nodes in K1 or K3".into(), required_nx: required });
    }
    let hypothesis = inf_k3 <= 1.0;
    let fraction = below as f64 / k1_nodes as f64;
    Ok(MeasureReport { inf_k3, hypothesis, k1_nodes, fraction, pass: !hypothesis || fraction >= params.mu })
}

/// Number of grids passing at each `(L, mu)`; rows are `(L, mu, passing, hypothesis_count)`.
pub fn measure_scan(grids: &[SpaceTimeGrid<f64>], ls: &[f64], mus: &[f64], r1: f64, delta: f64) -> Result<Vec<(f64, f64, usize, usize)>> {
    let mut rows = Vec::with_capacity(ls.len() * mus.len());
    for &l in ls {
        for &mu in mus {
            let params = MeasureCheckParams::new(l, mu, r1)?;
            let (mut pass, mut hyp) = (0, 0);
            for g in grids {
                let rep = measure_estimate_check(g, &params, delta)?;
                pass += usize::from(rep.pass);
                hyp += usize::from(rep.hypothesis);
            }
            rows.push((l, mu, pass, hyp));
        }
    }
    Ok(rows)
}

/// Solutions of `u_t = P^-(D^2u) - phi_r(|Du|)` on `Q_1`, which are
/// supersolutions of the rescaled inequality with radius `r1`.
pub fn measure_family(
    spec: &FamilySpec,
    n: usize,
    seed: u64,
    model: &PhiModel<f64>,
    ell: &EllipticityPair<f64>,
    r1: f64,
    nx: usize,
    stored_levels: usize,
) -> Result<Vec<SpaceTimeGrid<f64>>> {
    spec.validate()?;
    let scaled = scaled_phi(model, r1)?;
    let cube = ParabolicCube::origin(n, 1.0)?;
    (0..spec.members)
        .into_par_iter()
        .map(|i| {
            let profile = family_profile(spec, n, seed, "measure-family", i);
            evolve_member(&profile, &scaled, ell, &cube, nx, stored_levels)
        })
        .collect()
}

/// Tail masses `|{u~ > tau} cap K^|` with the fitted power law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LepsReport {
    pub a_k1: f64,
    pub khat_measure: f64,
    pub cell_measure: f64,
    pub taus: Vec<f64>,
    pub masses: Vec<f64>,
    pub eps_hat: f64,
    pub c_hat: f64,
    pub degenerate: bool,
    pub dominated: bool,
}

impl LepsReport {
    pub fn pass(&self) -> bool {
        self.dominated && self.eps_hat > 0.0
    }
}

/// Samples `u~(x,t) = u(a_k1 x, a_k1^2 t)` on `K^` with `samples` points per
/// axis and fits `mass(tau) <= C tau^-eps` for `tau = 2^0..=2^15`.
pub fn leps_tail(u: &SpaceTimeGrid<f64>, schedule: &LevelSchedule<f64>, samples: usize) -> Result<LepsReport> {
    let n = u.n();
    let center = center_value(u)?;
    if !(0.99..=1.01).contains(&center) {
        return invalid(format!("u(0,0) = {center} is not normalized to 1"));
    }
    if samples < 2 {
        return invalid("need at least two samples per axis");
    }
    let ak = schedule.a_k(schedule.k1);
    let khat = region_catalog::<f64>(n)?.khat;
    let khat_measure = khat.measure();
    let total = samples.pow(n as u32 + 1);
    let cell = khat_measure / total as f64;
    let lin = |a: usize, i: usize| khat.lo[a] + (khat.hi[a] - khat.lo[a]) * (i as f64 + 0.5) / samples as f64;
    let mut values = Vec::with_capacity(total);
    let mut x = vec![0.0; n];
    for k in 0..samples {
        let t = lin(n, k);
        for s in 0..samples.pow(n as u32) {
            for (a, xa) in x.iter_mut().enumerate() {
                *xa = ak * lin(a, (s / samples.pow(a as u32)) % samples);
            }
            let v = u.interpolate(&x, ak * ak * t).ok_or_else(|| Error::Domain("scaled K^ leaves the grid".into()))?;
            values.push(v);
        }
    }
    let taus: Vec<f64> = (0..=15).map(|j| f64::from(1u32 << j)).collect();
    let masses: Vec<f64> = taus.iter().map(|&tau| values.iter().filter(|&&v| v > tau).count() as f64 * cell).collect();
    let degenerate = masses.iter().all(|&m| m == 0.0);
    let (eps_hat, c_hat) = if degenerate {
        ((khat_measure / cell).ln() / (15.0 * std::f64::consts::LN_2), khat_measure)
    } else {
        let xs: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
        let ys: Vec<f64> = masses.iter().map(|&m| m.max(cell).ln()).collect();
        let k = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let eps = -sxy / sxx;
        let intercept = taus.iter().zip(&masses).map(|(&tau, &m)| m.max(cell) * tau.powf(eps)).fold(0.0, f64::max);
        (eps, 1.05 * intercept)
    };
    let dominated = taus.iter().zip(&masses).all(|(&tau, &m)| m <= c_hat * tau.powf(-eps_hat));
    Ok(LepsReport { a_k1: ak, khat_measure, cell_measure: cell, taus, masses, eps_hat, c_hat, degenerate, dominated })
}

/// `v1(x,t) = u(g x, g^2 t) / u(0,0)` with `g = a0 r1`, resampled on the grid of `u`.
pub fn normalize_chain(u: &SpaceTimeGrid<f64>, model: &PhiModel<f64>, c: f64, r1: f64) -> Result<SpaceTimeGrid<f64>> {
    let center = center_value(u)?;
    let g = intrinsic_radius(model, center, c)? * r1;
    if !(g > 0.0 && g <= 1.0) {
        return invalid(format!("composed scaling {g} must lie in (0, 1]"));
    }
    let mut out = Vec::with_capacity(u.values().len());
    let mut x = vec![0.0; u.n()];
    for k in 0..u.nt() {
        let t = u.time(k);
        for s in 0..u.space_len() {
            u.space_coords(s, &mut x);
            x.iter_mut().for_each(|v| *v *= g);
            let v = u.interpolate(&x, g * g * t).ok_or_else(|| Error::Domain("scaled point leaves the grid".into()))?;
            out.push(v / center);
        }
    }
    u.with_values(out)
}

/// `r_l = sigma nu^(-(l+1) eps/(n+2)) (L0/2)^(-eps/(n+2))` with the first
/// index `l0` whose tails satisfy `sum r_j <= c_n/2`, `sum r_j^2 <= c_n^2/8`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiiSchedule {
    pub sigma: f64,
    pub nu: f64,
    pub big_l0: f64,
    pub eps: f64,
    pub n: usize,
    pub r: Vec<f64>,
    pub l0: usize,
    pub tail_sum: f64,
    pub tail_sq_sum: f64,
}

impl RadiiSchedule {
    fn base(&self) -> (f64, f64) {
        let theta = self.eps / (self.n as f64 + 2.0);
        (self.sigma * (self.big_l0 / 2.0).powf(-theta), self.nu.powf(-theta))
    }

    pub fn r_l(&self, l: usize) -> f64 {
        let (b, rho) = self.base();
        b * rho.powf(l as f64 + 1.0)
    }

    /// Closed-form `(sum_{j >= l} r_j, sum_{j >= l} r_j^2)`.
    pub fn tails(&self, l: usize) -> (f64, f64) {
        let (b, rho) = self.base();
        let first = b * rho.powf(l as f64 + 1.0);
        (first / (1.0 - rho), first * first / (1.0 - rho * rho))
    }

    pub fn tails_hold(&self, l: usize) -> bool {
        let cn: f64 = c_n(self.n);
        let (s1, s2) = self.tails(l);
        s1 <= cn / 2.0 && s2 <= cn * cn / 8.0
    }
}

pub fn radii_schedule(sigma: f64, nu: f64, big_l0: f64, eps: f64, n: usize) -> Result<RadiiSchedule> {
    if !(nu > 1.0 && nu.is_finite()) {
        return invalid("nu must exceed 1");
    }
    if !(big_l0 >= 2.0 && big_l0.is_finite()) || !(eps > 0.0 && eps.is_finite()) || !(sigma > 0.0 && sigma.is_finite()) {
        return invalid("radii schedule needs L0 >= 2, eps > 0 and sigma > 0");
    }
    if n == 0 {
        return invalid("n must be positive");
    }
    let mut s = RadiiSchedule { sigma, nu, big_l0, eps, n, r: vec![], l0: 0, tail_sum: 0.0, tail_sq_sum: 0.0 };
    let l0 = (0..100_000).find(|&l| s.tails_hold(l)).ok_or_else(|| Error::NoConvergence("radii tails never small enough".into()))?;
    s.l0 = l0;
    (s.tail_sum, s.tail_sq_sum) = s.tails(l0);
    s.r = (0..=l0 + 10).map(|l| s.r_l(l)).collect();
    Ok(s)
}

/// One center of the counterexample comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleRow {
    pub t0: f64,
    pub extrinsic_log_ratio: f64,
    pub intrinsic_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub residual_points: usize,
    pub x1_violations: usize,
    pub x2_violations: usize,
    pub vanishes_after_zero: bool,
    pub tau: f64,
    pub c: f64,
    pub rows: Vec<CounterexampleRow>,
    pub extrinsic_monotone: bool,
    pub intrinsic_bounded: bool,
}

impl CounterexampleReport {
    pub fn pass(&self) -> bool {
        self.x1_violations == 0 && self.x2_violations == 0 && self.vanishes_after_zero && self.extrinsic_monotone && self.intrinsic_bounded
    }

    /// `t0,extrinsic_ratio,intrinsic_ratio,extrinsic_log10`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t0,extrinsic_ratio,intrinsic_ratio,extrinsic_log10\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e}\n",
                r.t0,
                r.extrinsic_log_ratio.exp(),
                r.intrinsic_ratio,
                r.extrinsic_log_ratio / std::f64::consts::LN_10
            ));
        }
        s
    }
}

/// `ln u` for the vanishing example, `-inf` where it vanishes.
fn ln_example(x: f64, t: f64) -> f64 {
    if t < 0.0 {
        VanishingExample::ln_value(x, t)
    } else {
        f64::NEG_INFINITY
    }
}

/// Residual signs of `u = e^(1/t)(x+3)` on `Q_2(0,1)` and the fixed-lag
/// versus intrinsic-lag ratios at the centers `(0, t0)`.
pub fn counterexample_demo(model: &PhiModel<f64>, c: f64, tau: f64, t0s: &[f64]) -> Result<CounterexampleReport> {
    if !(c > 0.0) || !(tau > 0.0) {
        return invalid("C and tau must be positive");
    }
    if t0s.iter().any(|&t| !(t < 0.0 && t - tau > -3.0)) || t0s.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("centers must increase within (-3 + tau, 0)");
    }
    let ell = EllipticityPair::new(1.0, 1.0)?;
    let sol = VanishingExample;
    let (mut points, mut x1, mut x2) = (0, 0, 0);
    for k in 0..400 {
        let t = -3.0 + 3.0 * (k as f64 + 0.5) / 400.0;
        for i in 0..=40 {
            let x = -2.0 + 4.0 * i as f64 / 40.0;
            let (sup, sub) = analytic_residual(&sol, &[x], t, model, &ell)?;
            let lap_minus_ut = sub - model.phi(t.recip().exp());
            points += 1;
            x1 += usize::from(!(lap_minus_ut >= 0.0 && sub >= 0.0));
            x2 += usize::from(!(sup <= 0.0));
        }
    }
    let vanishes = (0..=20).all(|k| {
        let t = k as f64 / 20.0;
        (0..=8).all(|i| crate::solver::AnalyticSolution::value(&sol, &[-2.0 + 0.5 * i as f64], t) == 0.0)
    });

    let a = region_catalog::<f64>(1)?.a;
    let mut rows = Vec::with_capacity(t0s.len());
    for &t0 in t0s {
        let ln_center = ln_example(0.0, t0);
        let ln_sup_fixed = (0..=A_SAMPLES).map(|i| ln_example(-0.25 + 0.5 * i as f64 / A_SAMPLES as f64, t0 - tau)).fold(f64::NEG_INFINITY, f64::max);
        let eta = model.eta_of_log(ln_center);
        let a0 = 1.0 / (c * (eta + 1.0));
        let mut ln_sup = f64::NEG_INFINITY;
        for k in 0..A_SAMPLES {
            let s = a.lo[1] + (a.hi[1] - a.lo[1]) * k as f64 / (A_SAMPLES - 1) as f64;
            for i in 0..A_SAMPLES {
                let x = a.lo[0] + (a.hi[0] - a.lo[0]) * i as f64 / (A_SAMPLES - 1) as f64;
                ln_sup = ln_sup.max(ln_example(a0 * x, t0 + a0 * a0 * s));
            }
        }
        rows.push(CounterexampleRow { t0, extrinsic_log_ratio: ln_sup_fixed - ln_center, intrinsic_ratio: (ln_sup - ln_center).exp() });
    }
    let extrinsic_monotone = rows.windows(2).all(|w| w[1].extrinsic_log_ratio > w[0].extrinsic_log_ratio);
    let intrinsic_bounded = rows.iter().all(|r| r.intrinsic_ratio <= c);
    Ok(CounterexampleReport {
        residual_points: points,
        x1_violations: x1,
        x2_violations: x2,
        vanishes_after_zero: vanishes,
        tau,
        c,
        rows,
        extrinsic_monotone,
        intrinsic_bounded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stacks::build_schedule;
    use approx::assert_relative_eq;

    fn q2_grid(nx: usize, nt: usize, f: impl Fn(&[f64], f64) -> f64) -> SpaceTimeGrid<f64> {
        SpaceTimeGrid::over_cube(&ParabolicCube::origin(1, 2.0).unwrap(), nx, nt, f).unwrap()
    }

    #[test]
    fn radius_examples() {
        assert_relative_eq!(intrinsic_radius(&PhiModel::log_squared_example(), 1.0, 100.0).unwrap(), 1.0 / 8100.0, max_relative = 1e-14);
        assert_relative_eq!(intrinsic_radius(&PhiModel::linear(), 1.0, 2.0).unwrap(), 0.25, max_relative = 1e-14);
    }

    #[test]
    fn radius_monotonicity() {
        let m = PhiModel::log_squared_example();
        let cs = c_grid(1.0, 0.25, 20);
        for u in [1.0, 2.0, 10.0] {
            let a: Vec<f64> = cs.iter().map(|&c| intrinsic_radius(&m, u, c).unwrap()).collect();
            assert!(a.windows(2).all(|w| w[1] < w[0]));
        }
        // eta nondecreasing on [1, inf) makes a0 nonincreasing in u(0,0)
        let us: Vec<f64> = (0..20).map(|i| 1.0 + 0.5 * i as f64).collect();
        let a: Vec<f64> = us.iter().map(|&u| intrinsic_radius(&m, u, 2.0).unwrap()).collect();
        assert!(a.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn constants_pass_with_unit_ratio() {
        let g = q2_grid(41, 41, |_, _| 1.7);
        for c in [1.0, 1.5, 10.0] {
            let chk = harnack_check(&g, &PhiModel::log_squared_example(), c).unwrap();
            assert_eq!(chk.ratio, 1.0);
            assert!(chk.pass);
        }
        for c in [1.0, 1.5, 1.95] {
            assert!(!harnack_check_scaled(&g, &PhiModel::linear(), c, 0.5).unwrap().pass);
        }
        assert!(harnack_check_scaled(&g, &PhiModel::linear(), 2.0, 0.5).unwrap().pass);
    }

    #[test]
    fn harnack_rejects_bad_input() {
        let g = q2_grid(41, 41, |x, _| x[0]);
        assert!(harnack_check(&g, &PhiModel::linear(), 1.0).is_err());
        let even = q2_grid(40, 41, |_, _| 1.0);
        assert!(harnack_check(&even, &PhiModel::linear(), 1.0).is_err());
        let huge = q2_grid(41, 41, |_, _| 1e300);
        assert!(matches!(harnack_check(&huge, &PhiModel::log_squared_example(), 1e6), Err(Error::Resolution { .. })));
    }

    #[test]
    fn decaying_solution_needs_c_above_one() {
        // u decreasing in time: the past window sits above u(0,0)
        let g = q2_grid(41, 81, |_, t| 2.0 - t);
        let m = PhiModel::linear();
        let chk = harnack_check(&g, &m, 1.0).unwrap();
        let a0 = 0.5;
        let cn = 0.1;
        assert_relative_eq!(chk.sup_a_value, 2.0 + a0 * a0 * (1.0 - cn * cn / 4.0), max_relative = 1e-12);
        assert!(!chk.pass);
        assert!(harnack_check(&g, &m, 1.2).unwrap().pass);
    }

    #[test]
    fn constants_family_sweep() {
        let spec = SweepSpec {
            n: 1,
            nx: 21,
            stored_levels: 41,
            seed: 3,
            family: FamilySpec { kind: FamilyKind::Constants, members: 4, ..FamilySpec::default() },
        };
        let rep = harnack_sweep(&spec, &PhiModel::log_squared_example(), &EllipticityPair::new(1.0, 1.0).unwrap(), &c_grid(1.0, 0.05, 5)).unwrap();
        assert_eq!(rep.minimal_c, Some(1.0));
        assert_eq!(rep.excluded, 0);
        assert!(rep.to_csv().lines().count() == 1 + 4 * 5);
    }

    #[test]
    fn family_is_seeded() {
        let spec = FamilySpec::default();
        assert_eq!(family_profile(&spec, 1, 9, "f", 3), family_profile(&spec, 1, 9, "f", 3));
        assert_ne!(family_profile(&spec, 1, 9, "f", 3), family_profile(&spec, 1, 10, "f", 3));
        let p = family_profile(&spec, 1, 9, "f", 3);
        assert!(p.base >= 0.5 && p.base <= 2.0 && p.bumps.len() <= 3);
    }

    #[test]
    fn measure_examples() {
        let q1 = ParabolicCube::origin(1, 1.0).unwrap();
        let params = MeasureCheckParams::new(2.0, 0.9, 0.5).unwrap();
        let low = SpaceTimeGrid::over_cube(&q1, 41, 401, |_, _| 0.5).unwrap();
        let r = measure_estimate_check(&low, &params, 0.0).unwrap();
        assert!(r.hypothesis && r.fraction == 1.0 && r.pass);
        let high = low.map(|_| 10.0);
        let r = measure_estimate_check(&high, &params, 0.0).unwrap();
        assert!(!r.hypothesis && r.pass);
        assert!(MeasureCheckParams::new(1.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn leps_constant_is_degenerate_and_dominated() {
        let g = q2_grid(41, 41, |_, _| 1.0);
        let sched = build_schedule(&PhiModel::linear(), 1.0, 2.0, 8, None).unwrap();
        let r = leps_tail(&g, &sched, 17).unwrap();
        assert!(r.degenerate && r.dominated && r.eps_hat > 0.0);
        assert!(r.masses.iter().all(|&m| m == 0.0));
        let bad = g.map(|_| 2.0);
        assert!(leps_tail(&bad, &sched, 17).is_err());
    }

    #[test]
    fn leps_power_profile_fits_a_positive_exponent() {
        // u~ spans values up to ~40 across K^ after scaling.
        let g = q2_grid(81, 81, |x, t| 1.0 + 400.0 * x[0].abs() + 10.0 * t * t);
        let sched = build_schedule(&PhiModel::linear(), 1.0, 2.0, 8, None).unwrap();
        let r = leps_tail(&g, &sched, 33).unwrap();
        assert!(!r.degenerate && r.dominated && r.eps_hat > 0.0, "{r:?}");
    }

    #[test]
    fn chain_normalizes_center() {
        let g = q2_grid(41, 41, |x, t| 3.0 + x[0] - t);
        let v = normalize_chain(&g, &PhiModel::linear(), 2.0, 0.5).unwrap();
        assert_eq!(center_value(&v).unwrap(), 1.0);
    }

    #[test]
    fn radii_example() {
        let s = radii_schedule(1.0, 2.0, 2.0, 3.0, 1).unwrap();
        assert_eq!(s.l0, 5);
        assert_relative_eq!(s.r_l(0), 0.5, max_relative = 1e-14);
        assert_relative_eq!(s.tails(5).0, 2f64.powi(-5), max_relative = 1e-12);
        assert!(s.tails_hold(s.l0) && !s.tails_hold(s.l0 - 1));
        assert!(s.r.windows(2).all(|w| w[1] < w[0]));
        assert!(radii_schedule(1.0, 1.0, 2.0, 1.0, 1).is_err());
    }

    #[test]
    fn counterexample_values() {
        let m = PhiModel::log_squared_example();
        assert_relative_eq!(ln_example(0.0, -1.0).exp(), 3.0 / std::f64::consts::E, max_relative = 1e-14);
        let rep = counterexample_demo(&m, 1.05, 0.25, &[-0.5, -0.1, -0.05, -0.01]).unwrap();
        assert!(rep.pass(), "{rep:?}");
        let last = rep.rows.last().unwrap();
        assert!(last.extrinsic_log_ratio > 40.0 * std::f64::consts::LN_10);
        let closed = 100.0 - 1.0 / 0.26 + (3.25f64 / 3.0).ln();
        assert_relative_eq!(last.extrinsic_log_ratio, closed, max_relative = 1e-12);
        assert!(rep.to_csv().starts_with("t0,extrinsic_ratio,intrinsic_ratio,extrinsic_log10\n"));
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::ParabolicCube;
use crate::nonlinearity::PhiModel;
use crate::pucci::{pucci_minus_eigs, EllipticityPair};
use crate::scalar::Real;
use crate::solver::residual::{central_derivatives, norm};
use crate::solver::SpaceTimeGrid;

/// Controls for [`evolve_extremal`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveParams<T> {
    pub nx: usize,
    pub cfl_safety: T,
    /// Number of stored time levels; `None` keeps every step.
    pub stored_levels: Option<usize>,
    /// Smallest gradient magnitude at which the slope of `phi` is sampled.
    pub slope_floor: T,
    pub require_positive: bool,
}

impl<T: Real> EvolveParams<T> {
    pub fn new(nx: usize) -> Self {
        Self { nx, cfl_safety: T::lit(0.45), stored_levels: None, slope_floor: T::lit(1e-2), require_positive: true }
    }
}

/// Grid plus time-stepping diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Evolution<T> {
    pub grid: SpaceTimeGrid<T>,
    pub dt: T,
    pub steps: usize,
    pub slope: T,
    pub min_value: T,
}

/// Largest difference quotient of `phi` on a log grid over `[lo, hi]`.
pub fn sampled_slope<T: Real>(model: &PhiModel<T>, lo: T, hi: T) -> T {
    let count = 65;
    let (a, b) = (lo.ln(), hi.max(lo * T::lit(2.0)).ln());
    let pts: Vec<T> = (0..count).map(|i| (a + (b - a) * T::from_usize(i).unwrap() / T::from_usize(count - 1).unwrap()).exp()).collect();
    pts.windows(2).map(|w| (model.phi(w[1]) - model.phi(w[0])) / (w[1] - w[0])).fold(T::zero(), |m, v| m.max(v))
}

/// Explicit scheme for `u_t = P^-(D^2 u) - phi(|Du|)` on `cube` with the
/// boundary frozen at the initial trace.
///
/// The gradient in `phi` is central where the local cell Peclet number
/// `phi'(|Du|) dx / (2 lambda)` is at most one and `phi'(0+)` is finite
/// and below the same cap, and upwind (Rouy-Tourin) elsewhere. The upwind
/// drift is clamped so it never lowers a cell below its lowest neighbour,
/// which keeps a discrete minimum principle under the step restriction
/// `dt = cfl * min(dx^2 / (2 n Lambda), dx / (1 + slope))`.
pub fn evolve_extremal<T: Real>(
    initial: &dyn Fn(&[T]) -> T,
    model: &PhiModel<T>,
    ell: &EllipticityPair<T>,
    cube: &ParabolicCube<T>,
    params: &EvolveParams<T>,
) -> Result<Evolution<T>> {
    let n = cube.dim();
    if n > 2 {
        return invalid("evolution supports n = 1 or 2");
    }
    if params.nx < 5 {
        return invalid("nx must be at least 5");
    }
    if !(params.cfl_safety > T::zero() && params.cfl_safety <= T::one()) {
        return invalid("cfl safety must lie in (0, 1]");
    }
    let nx = params.nx;
    let region = cube.as_box();
    let probe = SpaceTimeGrid::from_fn(&region, nx, 2, |x, _| initial(x))?;
    let dx = probe.dx(0);
    let u0: Vec<T> = probe.slice(0).to_vec();
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial profile"));
    }
    let m = probe.space_len();
    let mut gmax = T::zero();
    for s in 0..m {
        let idx = probe.space_index(s);
        if idx[..n].iter().all(|&i| i > 0 && i < nx - 1) {
            gmax = gmax.max(norm(&central_derivatives(&probe, 0, &idx[..n]).0));
        }
    }
    let slope = sampled_slope(model, params.slope_floor, T::one().max(T::lit(2.0) * gmax));
    let nt_f = T::from_usize(n).unwrap();
    let dt_max = params.cfl_safety
        * (dx * dx / (T::lit(2.0) * nt_f * ell.big_lambda())).min(dx / (T::one() + slope));
    let duration = cube.rho * cube.rho;
    let mut steps = (duration / dt_max).ceil().to_usize().unwrap_or(usize::MAX).max(1);
    let stride = match params.stored_levels {
        Some(levels) if levels >= 2 => {
            let per = steps.div_ceil(levels - 1);
            steps = per * (levels - 1);
            per
        }
        Some(_) => return invalid("stored_levels must be at least 2"),
        None => 1,
    };
    let dt = duration / T::from_usize(steps).unwrap();
    let levels = steps / stride + 1;
    if levels.saturating_mul(m) > 1 << 27 {
        return invalid("stored grid too large; set stored_levels");
    }

    let mut stored = Vec::with_capacity(levels * m);
    stored.extend_from_slice(&u0);
    let mut cur = u0.clone();
    let mut next = u0;
    let mut min_value = cur.iter().fold(T::infinity(), |a, &b| a.min(b));
    let peclet_cap = T::lit(2.0) * ell.lambda() / dx;
    // The central form needs the secant slopes of phi from 0 bounded by the cap.
    let central_ok = model.phi_with_slope(T::zero()).1 <= peclet_cap;
    let (two, four) = (T::lit(2.0), T::lit(4.0));
    let (inv_dx, inv_dx2) = (T::one() / dx, T::one() / (dx * dx));
    let stride_y = if n == 2 { nx } else { 0 };
    for step in 1..=steps {
        for j in 0..if n == 2 { nx } else { 1 } {
            if n == 2 && (j == 0 || j == nx - 1) {
                continue;
            }
            for i in 1..nx - 1 {
                let s = i + j * nx;
                let c = cur[s];
                let (l, r) = (cur[s - 1], cur[s + 1]);
                let gx = (r - l) * inv_dx / two;
                let dxx = (r - two * c + l) * inv_dx2;
                let (pucci, pc, up2, gap) = if n == 1 {
                    let up = ((c - l).max(c - r) * inv_dx).max(T::zero());
                    (pucci_minus_eigs(&[dxx], ell), gx.abs(), up * up, c - l.min(r))
                } else {
                    let (d, u) = (cur[s - stride_y], cur[s + stride_y]);
                    let gy = (u - d) * inv_dx / two;
                    let dyy = (u - two * c + d) * inv_dx2;
                    let dxy = (cur[s + 1 + stride_y] - cur[s + 1 - stride_y] - cur[s - 1 + stride_y] + cur[s - 1 - stride_y])
                        * inv_dx2
                        / four;
                    let mid = (dxx + dyy) / two;
                    let rad = ((dxx - dyy) * (dxx - dyy) / four + dxy * dxy).sqrt();
                    let upx = ((c - l).max(c - r) * inv_dx).max(T::zero());
                    let upy = ((c - d).max(c - u) * inv_dx).max(T::zero());
                    let gap = c - l.min(r).min(d).min(u);
                    (pucci_minus_eigs(&[mid - rad, mid + rad], ell), (gx * gx + gy * gy).sqrt(), upx * upx + upy * upy, gap)
                };
                let (phi_c, slope) = model.phi_with_slope(pc);
                let diffused = c + dt * pucci;
                next[s] = if central_ok && slope <= peclet_cap {
                    diffused - dt * phi_c
                } else {
                    // The drift never carries a cell below its lowest neighbour.
                    (diffused - dt * model.phi(up2.sqrt())).max(diffused.min(c - gap))
                };
            }
        }
        let lo = next.iter().fold(T::infinity(), |a, &b| a.min(b));
        if !lo.is_finite() {
            return Err(Error::NonFinite("evolution state"));
        }
        min_value = min_value.min(lo);
        if params.require_positive && lo <= T::zero() {
            return Err(Error::PositivityLost { step, min: lo.to_f64().unwrap_or(f64::NAN) });
        }
        std::mem::swap(&mut cur, &mut next);
        if step % stride == 0 {
            stored.extend_from_slice(&cur);
        }
    }
    let grid = SpaceTimeGrid::new(&region, nx, levels, stored)?;
    Ok(Evolution { grid, dt, steps, slope, min_value })
}

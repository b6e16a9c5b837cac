use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::BoxRegion;
use crate::scalar::Real;
use crate::solver::SpaceTimeGrid;

/// `u_eps(x,t) = min_(y,s) u(y,s) + (|x-y|^2 + |t-s|^2) / eps` over all nodes.
pub fn inf_convolution<T: Real>(u: &SpaceTimeGrid<T>, eps: T) -> Result<SpaceTimeGrid<T>> {
    if !(eps > T::zero() && eps.is_finite()) {
        return invalid("eps must be positive");
    }
    let n = u.n();
    let m = u.space_len();
    let total = u.values().len();
    let mut pts: Vec<([T; 3], T)> = Vec::with_capacity(total);
    let mut x = vec![T::zero(); n];
    for k in 0..u.nt() {
        let t = u.time(k);
        for s in 0..m {
            u.space_coords(s, &mut x);
            let mut p = [T::zero(); 3];
            p[..n].copy_from_slice(&x);
            p[n] = t;
            pts.push((p, u.values()[k * m + s]));
        }
    }
    let out: Vec<T> = pts
        .iter()
        .map(|(p, _)| {
            pts.iter().fold(T::infinity(), |best, (q, v)| {
                let mut d = T::zero();
                for a in 0..=n {
                    let e = p[a] - q[a];
                    d = d + e * e;
                }
                best.min(*v + d / eps)
            })
        })
        .collect();
    u.with_values(out)
}

fn cross<T: Real>(o: (T, T), a: (T, T), b: (T, T)) -> T {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Lower convex envelope of `(xs[i], vs[i])` evaluated at `xs`; `xs` increasing.
pub fn convex_envelope_1d<T: Real>(xs: &[T], vs: &[T]) -> Vec<T> {
    let mut hull: Vec<usize> = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            if cross((xs[a], vs[a]), (xs[b], vs[b]), (xs[i], vs[i])) <= T::zero() {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut out = vec![T::zero(); xs.len()];
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a..=b {
            out[i] = if i == a {
                vs[a]
            } else if i == b {
                vs[b]
            } else {
                let lam = (xs[i] - xs[a]) / (xs[b] - xs[a]);
                vs[a] + lam * (vs[b] - vs[a])
            };
        }
    }
    if hull.len() == 1 {
        out[0] = vs[0];
    }
    out
}

fn det3<T: Real>(m: &[[T; 3]; 3]) -> T {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn solve3<T: Real>(m: &[[T; 3]; 3], rhs: [T; 3]) -> Option<[T; 3]> {
    let d = det3(m);
    if d == T::zero() || !d.is_finite() {
        return None;
    }
    let mut out = [T::zero(); 3];
    for c in 0..3 {
        let mut mc = *m;
        for r in 0..3 {
            mc[r][c] = rhs[r];
        }
        out[c] = det3(&mc) / d;
    }
    Some(out)
}

/// Value at `target` of the largest convex function below the point cloud,
/// by the simplex method on `min sum l_j v_j` subject to `sum l_j (1, p_j) = (1, target)`.
fn envelope_lp<T: Real>(pts: &[(T, T, T)], target: (T, T), start: [usize; 3]) -> Result<T> {
    let col = |j: usize| [T::one(), pts[j].0, pts[j].1];
    let rhs = [T::one(), target.0, target.1];
    let scale = pts.iter().fold(T::one(), |a, p| a.max(p.2.abs()));
    let tol = T::lit(1e-12) * scale;
    let mut basis = start;
    for iter in 0..20_000 {
        let bmat = {
            let (c0, c1, c2) = (col(basis[0]), col(basis[1]), col(basis[2]));
            [[c0[0], c1[0], c2[0]], [c0[1], c1[1], c2[1]], [c0[2], c1[2], c2[2]]]
        };
        let bt = [[bmat[0][0], bmat[1][0], bmat[2][0]], [bmat[0][1], bmat[1][1], bmat[2][1]], [bmat[0][2], bmat[1][2], bmat[2][2]]];
        let y = solve3(&bt, [pts[basis[0]].2, pts[basis[1]].2, pts[basis[2]].2])
            .ok_or_else(|| Error::NoConvergence("singular simplex basis".into()))?;
        let lam = solve3(&bmat, rhs).ok_or_else(|| Error::NoConvergence("singular simplex basis".into()))?;
        let reduced = |j: usize| pts[j].2 - (y[0] + y[1] * pts[j].0 + y[2] * pts[j].1);
        let entering = if iter < 200 {
            let mut best = None;
            let mut best_r = -tol;
            for j in 0..pts.len() {
                let r = reduced(j);
                if r < best_r && !basis.contains(&j) {
                    best_r = r;
                    best = Some(j);
                }
            }
            best
        } else {
            (0..pts.len()).find(|&j| !basis.contains(&j) && reduced(j) < -tol)
        };
        let Some(q) = entering else {
            return Ok(y[0] + y[1] * target.0 + y[2] * target.1);
        };
        let d = solve3(&bmat, col(q)).ok_or_else(|| Error::NoConvergence("singular simplex basis".into()))?;
        let mut leave = None;
        let mut best_theta = T::infinity();
        for i in 0..3 {
            if d[i] > T::lit(1e-14) {
                let theta = lam[i].max(T::zero()) / d[i];
                let better = theta < best_theta
                    || (theta == best_theta && leave.map(|l: usize| basis[i] < basis[l]).unwrap_or(true));
                if better {
                    best_theta = theta;
                    leave = Some(i);
                }
            }
        }
        let l = leave.ok_or_else(|| Error::NoConvergence("unbounded envelope program".into()))?;
        basis[l] = q;
    }
    Err(Error::NoConvergence("envelope simplex iteration cap".into()))
}

/// Lower convex envelope of a 2D grid slice (`nx * nx` values, first axis fastest).
pub fn convex_envelope_2d<T: Real>(xs: &[T], ys: &[T], vs: &[T]) -> Result<Vec<T>> {
    let (nx, ny) = (xs.len(), ys.len());
    if nx < 2 || ny < 2 || vs.len() != nx * ny {
        return invalid("slice shape mismatch");
    }
    let pts: Vec<(T, T, T)> = (0..nx * ny).map(|s| (xs[s % nx], ys[s / nx], vs[s])).collect();
    let mut out = Vec::with_capacity(nx * ny);
    for s in 0..nx * ny {
        let (i, j) = (s % nx, s / nx);
        let i2 = if i + 1 < nx { i + 1 } else { i - 1 };
        let j2 = if j + 1 < ny { j + 1 } else { j - 1 };
        let v = envelope_lp(&pts, (xs[i], ys[j]), [s, i2 + nx * j, i + nx * j2])?;
        out.push(v.min(vs[s]));
    }
    Ok(out)
}

/// Largest function below `min(u, 0)` that is convex in space on every time
/// slice and nonincreasing in time.
pub fn monotone_envelope<T: Real>(u: &SpaceTimeGrid<T>) -> Result<SpaceTimeGrid<T>> {
    let m = u.space_len();
    let nx = u.nx();
    let mut running = vec![T::zero(); m];
    let mut out = Vec::with_capacity(u.values().len());
    let xs: Vec<T> = (0..nx).map(|i| u.coord(0, i)).collect();
    for k in 0..u.nt() {
        for (r, &v) in running.iter_mut().zip(u.slice(k)) {
            *r = r.min(v.min(T::zero()));
        }
        if u.n() == 1 {
            out.extend(convex_envelope_1d(&xs, &running));
        } else {
            let ys: Vec<T> = (0..nx).map(|i| u.coord(1, i)).collect();
            out.extend(convex_envelope_2d(&xs, &ys, &running)?);
        }
    }
    u.with_values(out)
}

/// Contact set of `u` with its envelope and the map `G = (DGamma, Gamma - x . DGamma)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GMapReport {
    pub n: usize,
    /// Contact nodes as `(x.., t)`.
    pub contact: Vec<Vec<f64>>,
    /// `G` at each contact node as `(xi.., h)`.
    pub g_values: Vec<Vec<f64>>,
    pub det_checked: usize,
    pub det_max_discrepancy: f64,
}

fn g_at<T: Real>(gamma: &SpaceTimeGrid<T>, k: usize, idx: &[usize]) -> Vec<T> {
    let n = gamma.n();
    let c = gamma.at(k, idx);
    let mut out = Vec::with_capacity(n + 1);
    let mut h = c;
    for a in 0..n {
        let mut p = idx.to_vec();
        let mut q = idx.to_vec();
        p[a] += 1;
        q[a] -= 1;
        let d = (gamma.at(k, &p) - gamma.at(k, &q)) / (T::lit(2.0) * gamma.dx(a));
        out.push(d);
        h = h - gamma.coord(a, idx[a]) * d;
    }
    out.push(h);
    out
}

fn det_small<T: Real>(mut m: Vec<Vec<T>>) -> T {
    let n = m.len();
    let mut det = T::one();
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| m[a][c].abs().partial_cmp(&m[b][c].abs()).unwrap()).unwrap();
        if m[p][c] == T::zero() {
            return T::zero();
        }
        if p != c {
            m.swap(p, c);
            det = -det;
        }
        det = det * m[c][c];
        for r in (c + 1)..n {
            let f = m[r][c] / m[c][c];
            for cc in c..n {
                let v = m[c][cc];
                m[r][cc] = m[r][cc] - f * v;
            }
        }
    }
    det
}

/// Evaluates `G` on the contact set `{|u - Gamma| <= tol}` restricted to
/// `region` (closure), and compares `det DG` with `u_t det D^2 Gamma` at
/// interior contact nodes.
pub fn g_map_contact<T: Real>(
    u: &SpaceTimeGrid<T>,
    gamma: &SpaceTimeGrid<T>,
    tol: T,
    region: Option<&BoxRegion<T>>,
) -> Result<GMapReport> {
    if u.region() != gamma.region() || u.nx() != gamma.nx() || u.nt() != gamma.nt() {
        return invalid("u and Gamma must share a grid");
    }
    let n = u.n();
    let nx = u.nx();
    let mut report = GMapReport { n, contact: vec![], g_values: vec![], det_checked: 0, det_max_discrepancy: 0.0 };
    let mut x = vec![T::zero(); n];
    for k in 0..u.nt() {
        let t = u.time(k);
        for s in 0..u.space_len() {
            let idx = u.space_index(s);
            let idx = &idx[..n];
            if idx.iter().any(|&i| i == 0 || i == nx - 1) {
                continue;
            }
            if (u.at(k, idx) - gamma.at(k, idx)).abs() > tol {
                continue;
            }
            u.space_coords(s, &mut x);
            let mut p = x.clone();
            p.push(t);
            if let Some(r) = region {
                if !r.contains_point(&p) {
                    continue;
                }
            }
            let g = g_at(gamma, k, idx);
            report.contact.push(p.iter().map(|v| v.to_f64().unwrap()).collect());
            report.g_values.push(g.iter().map(|v| v.to_f64().unwrap()).collect());

            let deep = idx.iter().all(|&i| i >= 2 && i + 2 < nx) && k >= 1 && k + 1 < u.nt();
            if !deep {
                continue;
            }
            let mut jac = vec![vec![T::zero(); n + 1]; n + 1];
            for a in 0..n {
                let mut pi = idx.to_vec();
                let mut qi = idx.to_vec();
                pi[a] += 1;
                qi[a] -= 1;
                let (gp, gq) = (g_at(gamma, k, &pi), g_at(gamma, k, &qi));
                for r in 0..=n {
                    jac[r][a] = (gp[r] - gq[r]) / (T::lit(2.0) * gamma.dx(a));
                }
            }
            let (gp, gq) = (g_at(gamma, k + 1, idx), g_at(gamma, k - 1, idx));
            for r in 0..=n {
                jac[r][n] = (gp[r] - gq[r]) / (T::lit(2.0) * gamma.dt());
            }
            let mut hess = vec![vec![T::zero(); n]; n];
            for a in 0..n {
                for b in 0..n {
                    let mut pi = idx.to_vec();
                    let mut qi = idx.to_vec();
                    pi[b] += 1;
                    qi[b] -= 1;
                    hess[a][b] = (g_at(gamma, k, &pi)[a] - g_at(gamma, k, &qi)[a]) / (T::lit(2.0) * gamma.dx(b));
                }
            }
            let ut = (u.at(k + 1, idx) - u.at(k - 1, idx)) / (T::lit(2.0) * u.dt());
            let diff = (det_small(jac) - ut * det_small(hess)).abs().to_f64().unwrap();
            report.det_checked += 1;
            report.det_max_discrepancy = report.det_max_discrepancy.max(diff);
        }
    }
    Ok(report)
}

/// Worst-case distance from the target box `|xi| <= 1/4, 5/8 <= -h <= 6/8`
/// to the attained `G` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttainmentReport {
    pub targets: usize,
    pub max_distance: f64,
    pub worst_target: Vec<f64>,
    pub nearest_attained: Vec<f64>,
    pub pass: bool,
}

pub fn box_attainment(report: &GMapReport, per_axis: usize, tol: f64) -> Result<AttainmentReport> {
    if report.g_values.is_empty() {
        return invalid("empty contact set");
    }
    let n = report.n;
    let per_axis = per_axis.max(2);
    let lin = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (per_axis - 1) as f64;
    let mut targets: Vec<Vec<f64>> = Vec::new();
    for hi in 0..per_axis {
        let h = -lin(5.0 / 8.0, 6.0 / 8.0, hi);
        for a in 0..per_axis.pow(n as u32) {
            let xi: Vec<f64> = (0..n).map(|d| lin(-0.25, 0.25, (a / per_axis.pow(d as u32)) % per_axis)).collect();
            if xi.iter().map(|v| v * v).sum::<f64>() > 0.0625 + 1e-15 {
                continue;
            }
            let mut t = xi;
            t.push(h);
            targets.push(t);
        }
    }
    let mut out = AttainmentReport { targets: targets.len(), max_distance: 0.0, worst_target: vec![], nearest_attained: vec![], pass: true };
    for t in &targets {
        let (mut best, mut arg) = (f64::INFINITY, 0);
        for (j, g) in report.g_values.iter().enumerate() {
            let d = g.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if d < best {
                best = d;
                arg = j;
            }
        }
        if best >= out.max_distance {
            out.max_distance = best;
            out.worst_target = t.clone();
            out.nearest_attained = report.g_values[arg].clone();
        }
    }
    out.pass = out.max_distance <= tol;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ParabolicCube;
    use approx::assert_relative_eq;

    fn unit(n: usize) -> BoxRegion<f64> {
        let mut lo = vec![-1.0; n];
        let mut hi = vec![1.0; n];
        lo.push(-1.0);
        hi.push(0.0);
        BoxRegion::new(lo, hi).unwrap()
    }

    #[test]
    fn huber_profile() {
        let eps = 0.25;
        let u = SpaceTimeGrid::from_fn(&unit(1), 65, 5, |x, _| x[0].abs()).unwrap();
        let v = inf_convolution(&u, eps).unwrap();
        for i in 0..65 {
            let x: f64 = u.coord(0, i);
            let h = if x.abs() <= eps / 2.0 { x * x / eps } else { x.abs() - eps / 4.0 };
            assert!((v.at(2, &[i]) - h).abs() < 1e-12);
        }
    }

    #[test]
    fn hull_1d_examples() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(convex_envelope_1d(&xs, &[0.0, 5.0, 0.0, 5.0, 0.0]), vec![0.0; 5]);
        assert_eq!(convex_envelope_1d(&xs, &[4.0, 1.0, 0.0, 1.0, 4.0]), vec![4.0, 1.0, 0.0, 1.0, 4.0]);
        assert_eq!(convex_envelope_1d(&xs, &[0.0, 0.0, -4.0, 0.0, 0.0]), vec![0.0, -2.0, -4.0, -2.0, 0.0]);
    }

    #[test]
    fn hull_2d_matches_1d_on_separable_data() {
        let xs: Vec<f64> = (0..7).map(|i| i as f64 / 6.0).collect();
        let f = |x: f64| (7.0 * x).sin();
        let vs: Vec<f64> = (0..49).map(|s| f(xs[s % 7])).collect();
        let env2 = convex_envelope_2d(&xs, &xs, &vs).unwrap();
        let env1 = convex_envelope_1d(&xs, &(0..7).map(|i| f(xs[i])).collect::<Vec<_>>());
        for s in 0..49 {
            assert!((env2[s] - env1[s % 7]).abs() < 1e-12);
        }
    }

    #[test]
    fn hull_2d_brute_force_on_small_grid() {
        let xs: Vec<f64> = (0..4).map(|i| i as f64).collect();
        let vs: Vec<f64> = (0..16).map(|s| ((s * 7919) % 13) as f64 - 6.0).collect();
        let env = convex_envelope_2d(&xs, &xs, &vs).unwrap();
        let pts: Vec<(f64, f64, f64)> = (0..16).map(|s| (xs[s % 4], xs[s / 4], vs[s])).collect();
        // envelope value at a node = min over triangles containing it of barycentric interpolation
        for s in 0..16 {
            let (px, py) = (pts[s].0, pts[s].1);
            let mut best = vs[s];
            for a in 0..16 {
                for b in 0..16 {
                    for c in 0..16 {
                        let (pa, pb, pc) = (pts[a], pts[b], pts[c]);
                        let d = (pb.0 - pa.0) * (pc.1 - pa.1) - (pc.0 - pa.0) * (pb.1 - pa.1);
                        if d.abs() < 1e-12 {
                            continue;
                        }
                        let l1 = ((pb.0 - px) * (pc.1 - py) - (pc.0 - px) * (pb.1 - py)) / d;
                        let l2 = ((pc.0 - px) * (pa.1 - py) - (pa.0 - px) * (pc.1 - py)) / d;
                        let l3 = 1.0 - l1 - l2;
                        if l1 >= -1e-12 && l2 >= -1e-12 && l3 >= -1e-12 {
                            best = best.min(l1 * pa.2 + l2 * pb.2 + l3 * pc.2);
                        }
                    }
                }
            }
            assert!((env[s] - best).abs() < 1e-9, "node {s}: {} vs {best}", env[s]);
        }
    }

    #[test]
    fn envelope_of_time_profile() {
        let r = BoxRegion::new(vec![-1.0, -1.0], vec![1.0, 0.0]).unwrap();
        let u = SpaceTimeGrid::from_fn(&r, 5, 3, |_, t| t).unwrap();
        let g = monotone_envelope(&u).unwrap();
        assert!(g.values().iter().all(|&v| v == -1.0));
    }

    #[test]
    fn g_map_on_smooth_convex_witness() {
        let q = ParabolicCube::origin(1, 1.0).unwrap();
        let u = SpaceTimeGrid::over_cube(&q, 33, 17, |x, t| x[0] * x[0] / 4.0 - 2.0 - (1.0 + t)).unwrap();
        let gamma = monotone_envelope(&u).unwrap();
        let rep = g_map_contact(&u, &gamma, 1e-12, None).unwrap();
        assert_eq!(rep.contact.len(), 31 * 17);
        assert!(rep.det_checked > 0);
        assert!(rep.det_max_discrepancy < 1e-10, "{}", rep.det_max_discrepancy);
        let g = &rep.g_values[0];
        let p = &rep.contact[0];
        assert_relative_eq!(g[0], p[0] / 2.0, epsilon = 1e-12);
    }
}

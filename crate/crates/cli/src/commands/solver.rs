use anyhow::{ensure, Result};
use harnack_core::geometry::{BoxRegion, ParabolicCube};
use harnack_core::harnack::BumpProfile;
use harnack_core::rng::stream;
use harnack_core::solver::{
    box_attainment, evolve_extremal, g_map_contact, inf_convolution, monotone_envelope, residuals, EvolveParams, SpaceTimeGrid,
};
use rand::Rng;
use serde_json::json;

use super::csv;
use crate::{RunConfig, RunOutput};

pub fn evolve(cfg: &RunConfig) -> Result<RunOutput> {
    let model = cfg.model.build()?;
    let ell = cfg.ellipticity.build()?;
    let e = &cfg.evolve;
    let profile = BumpProfile { base: e.base, bumps: e.bumps.iter().map(|b| (b.amplitude, b.center.clone(), b.width)).collect() };
    let cube = ParabolicCube::origin(e.n, e.rho)?;
    let mut params = EvolveParams::new(e.nx);
    params.stored_levels = Some(e.stored_levels);
    let ev = evolve_extremal(&|x: &[f64]| profile.value(x), &model, &ell, &cube, &params)?;
    let g = &ev.grid;
    let res = residuals(g, &model, &ell)?;
    let late = (g.nt() / 2..g.nt())
        .flat_map(|k| res.super_residual.slice(k).iter().copied())
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);

    let mut out = RunOutput::default();
    out.check("positivity", ev.min_value > 0.0, json!({ "min": ev.min_value }));
    out.derive("steps", ev.steps)?;
    out.derive("dt", ev.dt)?;
    out.derive("phi_slope", ev.slope)?;
    out.derive("dx", g.dx(0))?;
    out.derive("stored_dt", g.dt())?;
    out.derive("late_super_residual_max", late)?;
    let rows = (0..g.nt()).map(|k| {
        let s = g.slice(k);
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        vec![k.to_string(), g.time(k).to_string(), lo.to_string(), hi.to_string()]
    });
    out.file("levels.csv", csv("k,t,min,max", rows));
    let mut bin = Vec::new();
    g.write_binary(&mut bin)?;
    out.file("grid.bin", bin);
    if g.values().len() <= e.csv_limit {
        out.file("grid.csv", g.to_csv());
    }
    Ok(out)
}

/// Alternates brute-force slice convexification and time monotonization of
/// `min(u, 0)` until the change drops below `1e-9`.
fn fixed_point_envelope(u: &SpaceTimeGrid<f64>) -> Vec<f64> {
    let nx = u.nx();
    let xs: Vec<f64> = (0..nx).map(|i| u.coord(0, i)).collect();
    let mut w: Vec<f64> = u.values().iter().map(|v| v.min(0.0)).collect();
    loop {
        let mut change = 0.0f64;
        for k in 0..u.nt() {
            let row = w[k * nx..(k + 1) * nx].to_vec();
            for i in 0..nx {
                let mut best = row[i];
                for j in 0..=i {
                    for l in i..nx {
                        if j == l {
                            continue;
                        }
                        let v = row[j] + (row[l] - row[j]) * (xs[i] - xs[j]) / (xs[l] - xs[j]);
                        best = best.min(v);
                    }
                }
                change = change.max(w[k * nx + i] - best);
                w[k * nx + i] = best;
            }
            if k > 0 {
                for i in 0..nx {
                    let prev = w[(k - 1) * nx + i];
                    if prev < w[k * nx + i] {
                        change = change.max(w[k * nx + i] - prev);
                        w[k * nx + i] = prev;
                    }
                }
            }
        }
        if change < 1e-9 {
            return w;
        }
    }
}

fn q1_region() -> Result<BoxRegion<f64>> {
    Ok(BoxRegion::new(vec![-1.0, -1.0], vec![1.0, 0.0])?)
}

pub fn envelope_demo(cfg: &RunConfig) -> Result<RunOutput> {
    let e = &cfg.envelope;
    let mut out = RunOutput::default();

    let (mut oracle_gap, mut upper_gap, mut convexity_gap, mut monotone_gap) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut rows = Vec::new();
    let mut random_grids = Vec::new();
    for id in 0..e.grids {
        let mut r = stream(cfg.seed, "envelope", id as u64);
        let values = (0..e.size * e.size).map(|_| r.random_range(-1.0..1.0)).collect();
        let u = SpaceTimeGrid::new(&q1_region()?, e.size, e.size, values)?;
        let gamma = monotone_envelope(&u)?;
        let oracle = fixed_point_envelope(&u);
        let gap = gamma.values().iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let above = gamma.values().iter().zip(u.values()).map(|(g, v)| g - v.min(0.0)).fold(f64::NEG_INFINITY, f64::max);
        let (mut conv, mut mono) = (0.0f64, 0.0f64);
        for k in 0..u.nt() {
            let s = gamma.slice(k);
            for i in 1..s.len() - 1 {
                conv = conv.max(2.0 * s[i] - s[i - 1] - s[i + 1]);
            }
            if k > 0 {
                for (a, b) in s.iter().zip(gamma.slice(k - 1)) {
                    mono = mono.max(a - b);
                }
            }
        }
        oracle_gap = oracle_gap.max(gap);
        upper_gap = upper_gap.max(above);
        convexity_gap = convexity_gap.max(conv);
        monotone_gap = monotone_gap.max(mono);
        rows.push(vec![id.to_string(), format!("{gap:e}"), format!("{above:e}"), format!("{conv:e}"), format!("{mono:e}")]);
        if id < 5 {
            random_grids.push(u);
        }
    }
    out.check("envelope-oracle", oracle_gap <= e.oracle_tol, json!({ "max_gap": oracle_gap, "tol": e.oracle_tol, "grids": e.grids }));
    out.check("envelope-below-data", upper_gap <= 0.0, json!({ "max_excess": upper_gap }));
    // Hull values are interpolated in floating point; allow a few ulps of the data scale.
    let ulps = 8.0 * f64::EPSILON;
    out.check("slice-convexity", convexity_gap <= ulps, json!({ "max_negative_second_difference": convexity_gap, "tol": ulps }));
    out.check("time-monotonicity", monotone_gap <= 0.0, json!({ "max_increase": monotone_gap }));
    out.file("envelope_oracle.csv", csv("grid,oracle_gap,excess,convexity_defect,monotonicity_defect", rows));

    // u = -(1+t)(1-|x|) on Q1, extended by 0 to Q2.
    let q2 = ParabolicCube::origin(1, 2.0)?;
    let witness = SpaceTimeGrid::over_cube(&q2, e.witness_nx, e.witness_nx, |x: &[f64], t: f64| {
        if x[0].abs() <= 1.0 && t >= -1.0 {
            -(1.0 + t) * (1.0 - x[0].abs())
        } else {
            0.0
        }
    })?;
    let gamma = monotone_envelope(&witness)?;
    let gmap = g_map_contact(&witness, &gamma, 1e-12, Some(&q1_region()?))?;
    let dx = witness.dx(0);
    let attain = box_attainment(&gmap, e.attain_per_axis, e.attain_dx_factor * dx)?;
    out.check(
        "box-attainment",
        attain.pass,
        json!({ "max_distance": attain.max_distance, "tol": e.attain_dx_factor * dx, "targets": attain.targets, "worst_target": attain.worst_target, "nearest": attain.nearest_attained }),
    );
    out.derive("contact_points", gmap.contact.len())?;
    out.derive("det_checked", gmap.det_checked)?;
    out.derive("det_max_discrepancy", gmap.det_max_discrepancy)?;
    let gm_rows = gmap.contact.iter().zip(&gmap.g_values).map(|(p, g)| vec![p[0].to_string(), p[1].to_string(), g[0].to_string(), g[1].to_string()]);
    out.file("gmap.csv", csv("x1,t,xi1,h", gm_rows));

    // Inf-convolution of |x| against the Huber profile, then invariants on random data too.
    let unit = q1_region()?;
    let abs = SpaceTimeGrid::from_fn(&unit, e.infconv_nx, 5, |x, _| x[0].abs())?;
    let dx = abs.dx(0);
    let mut huber_gap = 0.0f64;
    let mut inf_rows = Vec::new();
    let mut below_gap = 0.0f64;
    let mut order_gap = 0.0f64;
    let mut semi_gap = f64::NEG_INFINITY;
    let mut witnesses = vec![abs.clone()];
    witnesses.extend(random_grids);
    for (wi, u) in witnesses.iter().enumerate() {
        let mut prev: Option<SpaceTimeGrid<f64>> = None;
        for &eps in &e.eps {
            let v = inf_convolution(u, eps)?;
            if wi == 0 {
                for k in 0..v.nt() {
                    for i in 0..v.nx() {
                        let x = v.coord(0, i);
                        let h = if x.abs() <= eps / 2.0 { x * x / eps } else { x.abs() - eps / 4.0 };
                        huber_gap = huber_gap.max((v.at(k, &[i]) - h).abs());
                    }
                }
            }
            below_gap = below_gap.max(v.values().iter().zip(u.values()).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max));
            if let Some(p) = &prev {
                order_gap = order_gap.max(v.values().iter().zip(p.values()).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max));
            }
            let h = v.dx(0);
            let bound = 2.0 / eps + 4.0 * h;
            let mut worst = f64::NEG_INFINITY;
            for k in 0..v.nt() {
                let s = v.slice(k);
                for i in 1..s.len() - 1 {
                    worst = worst.max((s[i - 1] - 2.0 * s[i] + s[i + 1]) / (h * h) - bound);
                }
            }
            semi_gap = semi_gap.max(worst);
            inf_rows.push(vec![wi.to_string(), eps.to_string(), format!("{:e}", worst + bound), bound.to_string()]);
            prev = Some(v);
        }
    }
    ensure!(semi_gap.is_finite(), "inf-convolution grids too small for second differences");
    out.check("huber-profile", huber_gap <= e.huber_tol, json!({ "max_gap": huber_gap, "tol": e.huber_tol, "dx": dx }));
    out.check("infconv-below", below_gap <= 0.0, json!({ "max_excess": below_gap }));
    out.check("infconv-eps-monotone", order_gap <= 0.0, json!({ "max_increase": order_gap }));
    out.check("semiconcavity", semi_gap <= 0.0, json!({ "max_excess_over_bound": semi_gap }));
    out.file("infconv.csv", csv("witness,eps,max_second_difference,bound", inf_rows));
    Ok(out)
}

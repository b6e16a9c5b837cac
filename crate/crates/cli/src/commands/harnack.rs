use anyhow::{ensure, Result};
use harnack_core::geometry::ParabolicCube;
use harnack_core::harnack::{
    c_grid, counterexample_demo, evolve_member, family_profile, harnack_sweep as sweep, leps_tail, measure_family, measure_scan,
    normalize_chain, radii_schedule, FamilyKind, FamilySpec, SweepReport, SweepSpec,
};
use harnack_core::nonlinearity::{Family, PhiModel};
use harnack_core::pucci::EllipticityPair;
use harnack_core::stacks::build_schedule;
use rayon::prelude::*;
use serde_json::json;

use super::csv;
use crate::config::measure_family_spec;
use crate::{RunConfig, RunOutput};

pub fn measure_check(cfg: &RunConfig) -> Result<RunOutput> {
    let model = cfg.model.build()?;
    let ell = cfg.ellipticity.build()?;
    let m = &cfg.measure;
    let spec = measure_family_spec(m);
    let grids = measure_family(&spec, 1, cfg.seed, &model, &ell, m.r1, m.nx, m.stored_levels)?;
    let rows = measure_scan(&grids, &m.l_grid, &m.mu_grid, m.r1, m.delta)?;
    let mut out = RunOutput::default();
    let total = grids.len();
    let best: Vec<_> = m
        .l_grid
        .iter()
        .map(|&l| {
            let mu = rows.iter().filter(|r| r.0 == l && r.2 == total).map(|r| r.1).fold(f64::NAN, f64::max);
            json!({ "L": l, "largest_mu": if mu.is_nan() { None } else { Some(mu) } })
        })
        .collect();
    let any = rows.iter().any(|r| r.2 == total && r.3 > 0);
    let hyp = rows.first().map(|r| r.3).unwrap_or(0);
    out.check("measure-estimate", any, json!({ "members": total, "hypothesis_members": hyp }));
    out.derive("largest_mu_per_L", best)?;
    out.file(
        "measure_scan.csv",
        csv("L,mu,passing,hypothesis,members", rows.iter().map(|r| vec![r.0.to_string(), r.1.to_string(), r.2.to_string(), r.3.to_string(), total.to_string()])),
    );
    Ok(out)
}

pub fn leps(cfg: &RunConfig) -> Result<RunOutput> {
    let model = cfg.model.build()?;
    let ell = cfg.ellipticity.build()?;
    let l = &cfg.leps;
    let sched = build_schedule(&model, l.l2, l.l, l.k_max, None)?;
    let spec = FamilySpec { members: l.members, ..FamilySpec::default() };
    let cube = ParabolicCube::origin(1, 2.0)?;
    let reports = (0..l.members)
        .into_par_iter()
        .map(|i| {
            let profile = family_profile(&spec, 1, cfg.seed, "leps-family", i);
            let u = evolve_member(&profile, &model, &ell, &cube, l.nx, l.stored_levels)?;
            let v1 = normalize_chain(&u, &model, l.c, l.r1)?;
            leps_tail(&v1, &sched, l.samples)
        })
        .collect::<harnack_core::Result<Vec<_>>>()?;
    let mut out = RunOutput::default();
    let dominated = reports.iter().filter(|r| r.dominated).count();
    let positive = reports.iter().filter(|r| r.eps_hat > 0.0).count();
    let degenerate = reports.iter().filter(|r| r.degenerate).count();
    out.check("tail-dominated", dominated == reports.len(), json!({ "members": reports.len(), "dominated": dominated }));
    out.check("positive-exponent", positive == reports.len(), json!({ "members": reports.len(), "positive": positive, "degenerate": degenerate }));
    let eps_min = reports.iter().map(|r| r.eps_hat).fold(f64::INFINITY, f64::min);
    out.derive("k1", sched.k1)?;
    out.derive("a_k", &sched.a[..l.k_max])?;
    out.derive("a_k1", sched.a_k(sched.k1))?;
    out.derive("eps_hat", reports.iter().map(|r| r.eps_hat).collect::<Vec<_>>())?;
    out.derive("c_hat", reports.iter().map(|r| r.c_hat).collect::<Vec<_>>())?;
    out.derive("eps_hat_min", eps_min)?;
    ensure!(eps_min > 0.0, "no positive fitted exponent for the radii schedule");
    let radii = radii_schedule(l.sigma, l.nu, l.big_l0, eps_min, 1)?;
    out.derive("radii", &radii)?;
    let mut rows = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        for (tau, mass) in r.taus.iter().zip(&r.masses) {
            let bound = r.c_hat * tau.powf(-r.eps_hat);
            rows.push(vec![i.to_string(), tau.to_string(), format!("{mass:e}"), format!("{bound:e}"), (mass <= &bound).to_string(), r.degenerate.to_string()]);
        }
    }
    out.file("leps_tail.csv", csv("member,tau,mass,bound,dominated,degenerate", rows));
    out.file(
        "radii.csv",
        csv("l,r_l,tail_sum,tail_sq_sum", radii.r.iter().enumerate().map(|(i, v)| {
            let (a, b) = radii.tails(i);
            vec![i.to_string(), format!("{v:e}"), format!("{a:e}"), format!("{b:e}")]
        })),
    );
    Ok(out)
}

fn run_sweep(
    cfg: &RunConfig,
    model: &PhiModel<f64>,
    ell: &EllipticityPair<f64>,
    nx: usize,
    levels: usize,
    family: FamilySpec,
    grid: &[f64],
) -> Result<SweepReport> {
    let spec = SweepSpec { n: cfg.sweep.n, nx, stored_levels: levels, seed: cfg.seed, family };
    Ok(sweep(&spec, model, ell, grid)?)
}

pub fn harnack_sweep(cfg: &RunConfig) -> Result<RunOutput> {
    let model = cfg.model.build()?;
    let ell = cfg.ellipticity.build()?;
    let w = &cfg.sweep;
    let grid = c_grid(w.c_start, w.c_step, w.c_count);
    let mut out = RunOutput::default();

    let base = run_sweep(cfg, &model, &ell, w.nx, w.stored_levels, w.family.clone(), &grid)?;
    out.check("finite-minimal-C", base.minimal_c.is_some(), json!({ "minimal_c": base.minimal_c, "excluded": base.excluded }));
    out.check("upward-closed", base.monotonicity_violations == 0, json!({ "violations": base.monotonicity_violations }));
    out.derive("c_grid", &grid)?;
    out.derive("minimal_c", base.minimal_c)?;
    out.derive("member_minimal_c", base.members.iter().map(|m| m.minimal_c).collect::<Vec<_>>())?;
    out.derive("excluded", base.excluded)?;
    out.file("sweep.csv", base.to_csv());

    if let Some(rnx) = w.refine_nx {
        let fine = run_sweep(cfg, &model, &ell, rnx, w.refine_stored_levels, w.family.clone(), &grid)?;
        let stable = match (base.minimal_c, fine.minimal_c) {
            (Some(a), Some(b)) => (a - b).abs() <= w.c_step * (1.0 + 1e-9),
            _ => false,
        };
        out.check("refinement-stable", stable, json!({ "nx": w.nx, "refine_nx": rnx, "minimal_c": base.minimal_c, "refined_minimal_c": fine.minimal_c }));
        out.check("upward-closed-refined", fine.monotonicity_violations == 0, json!({ "violations": fine.monotonicity_violations }));
        out.derive("refined_minimal_c", fine.minimal_c)?;
        out.file("sweep_refined.csv", fine.to_csv());
    }
    if w.constants_members > 0 {
        let family = FamilySpec { kind: FamilyKind::Constants, members: w.constants_members, ..w.family.clone() };
        let consts = run_sweep(cfg, &model, &ell, w.nx, w.stored_levels, family, &grid)?;
        out.check("constants-minimal-C", consts.minimal_c == Some(w.c_start) && w.c_start == 1.0, json!({ "minimal_c": consts.minimal_c }));
        out.file("sweep_constants.csv", consts.to_csv());
    }
    Ok(out)
}

pub fn counterexample(cfg: &RunConfig) -> Result<RunOutput> {
    let model = cfg.model.build()?;
    ensure!(model.family() == Family::LogSquaredExample, "the vanishing example pairs with the log-squared-example model");
    let x = &cfg.counterexample;
    let rep = counterexample_demo(&model, x.c, x.tau, &x.t0)?;
    let mut out = RunOutput::default();
    out.check("supersolution-sign", rep.x2_violations == 0, json!({ "points": rep.residual_points, "violations": rep.x2_violations }));
    out.check("subsolution-sign", rep.x1_violations == 0, json!({ "points": rep.residual_points, "violations": rep.x1_violations }));
    out.check("vanishes-after-zero", rep.vanishes_after_zero, json!(null));
    out.check("extrinsic-monotone", rep.extrinsic_monotone, json!(null));
    let last = rep.rows.last().map(|r| r.extrinsic_log_ratio).unwrap_or(f64::NEG_INFINITY);
    out.check("extrinsic-blowup", last > x.blowup.ln(), json!({ "log10_ratio": last / std::f64::consts::LN_10, "required_log10": x.blowup.log10() }));
    let worst = rep.rows.iter().map(|r| r.intrinsic_ratio).fold(f64::NEG_INFINITY, f64::max);
    out.check("intrinsic-bounded", rep.intrinsic_bounded, json!({ "max_ratio": worst, "c": x.c }));
    out.derive("rows", &rep.rows)?;
    out.file("counterexample.csv", rep.to_csv());
    Ok(out)
}

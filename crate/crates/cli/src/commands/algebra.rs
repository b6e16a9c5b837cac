use anyhow::Result;
use harnack_core::barrier::{calibrate_with, exponent_q, samples_csv, verify};
use harnack_core::geometry::{cz_cover_check, random_cover_instance, region_catalog, ParabolicCube};
use harnack_core::nonlinearity::{doubling_defect, validate_conditions};
use harnack_core::pucci::{pucci_minus, pucci_plus, EllipticityPair, SymMatrix};
use harnack_core::rng::stream;
use harnack_core::scalar::exact;
use harnack_core::stacks::{build_schedule, build_stack, verify_stack};
use harnack_core::{Exact, ExactStack};
use rand::Rng;
use serde_json::json;

use super::csv;
use crate::{RunConfig, RunOutput};

pub fn validate_phi(cfg: &RunConfig) -> Result<RunOutput> {
    let model = cfg.model.build()?;
    let spec = &cfg.validate_phi;
    let rep = validate_conditions(&model, spec)?;
    let mut out = RunOutput::default();
    out.check("P1-monotone", rep.monotone_pass, json!(rep.monotone_detail));
    out.check("P2-growth", rep.growth_pass, json!({ "value": rep.growth_value, "threshold": spec.growth_threshold, "ln_horizon": spec.tail_ln_horizon }));
    out.check("P3-lambda0", rep.lambda0_pass, json!({ "lambda0_hat": rep.lambda0_hat }));
    out.check(
        "tail-doubling",
        rep.doubling_pass,
        json!({ "t": spec.lemma_point, "value": rep.doubling_value, "tol": spec.lemma_tol, "direct": doubling_defect(&model, spec.lemma_point, 2.0) }),
    );
    out.derive("report", &rep)?;
    out.derive("lambda0_hat", rep.lambda0_hat)?;
    out.file("validation.csv", rep.csv());
    out.file("summary.txt", rep.summary());
    Ok(out)
}

/// Largest violation of each identity, per dimension.
#[derive(Default, Clone, Copy)]
struct PucciErrors {
    order: f64,
    symmetry: f64,
    homogeneity: f64,
    sandwich: f64,
    ellipticity: f64,
}

fn random_sym(r: &mut impl Rng, n: usize, bound: f64) -> Result<SymMatrix<f64>> {
    let upper = (0..n * (n + 1) / 2).map(|_| r.random_range(-bound..=bound)).collect();
    Ok(SymMatrix::from_upper(n, upper)?)
}

fn random_psd(r: &mut impl Rng, n: usize, bound: f64) -> Result<SymMatrix<f64>> {
    let mut acc = SymMatrix::zeros(n)?;
    for _ in 0..n {
        let v: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..=1.0) * bound.sqrt()).collect();
        acc = acc.add(&SymMatrix::outer(&v)?)?;
    }
    Ok(acc)
}

pub fn pucci_selftest(cfg: &RunConfig) -> Result<RunOutput> {
    let p = &cfg.pucci;
    let ell = EllipticityPair::new(p.lambda, p.big_lambda)?;
    let (lam, big) = (p.lambda, p.big_lambda);
    let mut rows = Vec::new();
    let mut worst = PucciErrors::default();
    for n in 1..=3usize {
        let mut e = PucciErrors::default();
        let mut r = stream(cfg.seed, "pucci-selftest", n as u64);
        for _ in 0..p.matrices {
            let m = random_sym(&mut r, n, p.entry_bound)?;
            let other = random_sym(&mut r, n, p.entry_bound)?;
            let s: f64 = r.random_range(0.01..=10.0);
            let (mm, mp) = (pucci_minus(&m, &ell)?, pucci_plus(&m, &ell)?);
            let (nm, np) = (pucci_minus(&other, &ell)?, pucci_plus(&other, &ell)?);
            let sum = m.add(&other)?;
            let (sm, sp) = (pucci_minus(&sum, &ell)?, pucci_plus(&sum, &ell)?);
            e.order = e.order.max(mm - mp);
            e.symmetry = e.symmetry.max((pucci_plus(&m.neg(), &ell)? + mm).abs()).max((pucci_minus(&m.neg(), &ell)? + mp).abs());
            e.homogeneity = e
                .homogeneity
                .max((pucci_minus(&m.scale(s), &ell)? - s * mm).abs())
                .max((pucci_plus(&m.scale(s), &ell)? - s * mp).abs());
            for gap in [mm + nm - sm, sm - (mm + np), mm + np - sp, sp - (mp + np)] {
                e.sandwich = e.sandwich.max(gap);
            }
        }
        for _ in 0..p.increments {
            let m = random_sym(&mut r, n, p.entry_bound)?;
            let inc = random_psd(&mut r, n, p.entry_bound)?;
            let tr = inc.trace();
            let shifted = m.add(&inc)?;
            for d in [pucci_minus(&shifted, &ell)? - pucci_minus(&m, &ell)?, pucci_plus(&shifted, &ell)? - pucci_plus(&m, &ell)?] {
                e.ellipticity = e.ellipticity.max(lam * tr - d).max(d - big * tr);
            }
        }
        for (name, v) in [
            ("order", e.order),
            ("symmetry", e.symmetry),
            ("homogeneity", e.homogeneity),
            ("sandwich", e.sandwich),
            ("ellipticity", e.ellipticity),
        ] {
            rows.push(vec![n.to_string(), name.to_string(), format!("{v:e}"), (v <= p.tol).to_string()]);
        }
        worst.order = worst.order.max(e.order);
        worst.symmetry = worst.symmetry.max(e.symmetry);
        worst.homogeneity = worst.homogeneity.max(e.homogeneity);
        worst.sandwich = worst.sandwich.max(e.sandwich);
        worst.ellipticity = worst.ellipticity.max(e.ellipticity);
    }
    let mut out = RunOutput::default();
    for (name, v) in [
        ("order", worst.order),
        ("symmetry", worst.symmetry),
        ("homogeneity", worst.homogeneity),
        ("sandwich", worst.sandwich),
        ("ellipticity", worst.ellipticity),
    ] {
        out.check(name, v <= p.tol, json!({ "max_violation": v, "tol": p.tol }));
    }
    out.file("pucci_selftest.csv", csv("n,identity,max_violation,pass", rows));
    Ok(out)
}

pub fn regions(cfg: &RunConfig) -> Result<RunOutput> {
    let n = cfg.regions.n;
    let cat = region_catalog::<f64>(n)?;
    let exact_cat = region_catalog::<Exact>(n)?;
    let mut out = RunOutput::default();
    out.check("closure-inclusions", exact_cat.inclusions_hold(), json!("exact arithmetic"));
    out.derive("catalog", &cat)?;
    out.file("regions.txt", cat.to_text());
    out.file("region_outlines.csv", cat.outlines_csv());

    let c = &cfg.cover;
    let (mut admissible, mut holds) = (0usize, 0usize);
    let mut rows = Vec::new();
    let mut attempt = 0u64;
    while admissible < c.instances && attempt < 50 * c.instances as u64 {
        let mut r = stream(cfg.seed, "cover", attempt);
        attempt += 1;
        let dim = 1 + (attempt as usize % 2);
        let depth = r.random_range(2..=c.max_depth.min(if dim == 1 { 4 } else { 3 }));
        let delta: f64 = r.random_range(0.05..0.5);
        let m: u32 = r.random_range(1..=3);
        let Some((a, b)) = random_cover_instance(&mut r, dim, depth, delta, m) else { continue };
        let rep = cz_cover_check(dim, &a, &b, delta, m)?;
        if !rep.hypotheses_hold() {
            continue;
        }
        admissible += 1;
        holds += usize::from(rep.conclusion_holds);
        rows.push(vec![
            (admissible - 1).to_string(),
            dim.to_string(),
            depth.to_string(),
            delta.to_string(),
            m.to_string(),
            rep.cells_a.to_string(),
            rep.cells_b.to_string(),
            rep.total_cells.to_string(),
            rep.conclusion_holds.to_string(),
        ]);
    }
    out.check("cover-conclusion", admissible == c.instances && holds == admissible, json!({ "instances": admissible, "holds": holds, "draws": attempt }));
    out.file("cover.csv", csv("instance,n,depth,delta,m,cells_a,cells_b,total_cells,conclusion", rows));
    Ok(out)
}

pub fn stack_demo(cfg: &RunConfig) -> Result<RunOutput> {
    let model = cfg.model.build()?;
    let s = &cfg.stacks;
    let sched = build_schedule(&model, s.l2, s.l, s.k_max, None)?;
    let mut out = RunOutput::default();
    let rows = (1..=s.k_max).map(|k| {
        let m = if k >= sched.k1 { sched.m_k(k).to_string() } else { String::new() };
        vec![k.to_string(), format!("{:e}", sched.a_k(k)), m]
    });
    out.file("schedule.csv", csv("k,a_k,m_k", rows));
    out.derive("k1", sched.k1)?;
    out.derive("a_k", &sched.a[..s.k_max])?;
    out.derive("m_k", &sched.m)?;

    let (mut radius, mut containment, mut distance, mut cubes) = (0, 0, 0, 0);
    let mut first: Option<ExactStack> = None;
    for i in 0..s.count {
        let mut r = stream(cfg.seed, "stacks", i as u64);
        let n = 1 + i % 3;
        let center: Vec<Exact> = (0..n).map(|_| exact(r.random_range(-2.0..=2.0))).collect();
        let base = ParabolicCube::new(center, exact(r.random_range(-1.0..=1.0)), exact(r.random_range(0.01..=1.0)))?;
        let l = r.random_range(sched.k1 + 1..=sched.k_max + 1);
        let count = r.random_range(1..=l - sched.k1);
        let stack: ExactStack = build_stack(&sched, &base, l, count)?;
        let rep = verify_stack(&stack);
        radius += rep.radius_violations;
        containment += rep.containment_violations;
        distance += rep.distance_violations;
        cubes += rep.cubes;
        if first.is_none() {
            first = Some(stack);
        }
    }
    out.check("radius-product", radius == 0, json!({ "violations": radius, "stacks": s.count, "cubes": cubes }));
    out.check("containment", containment == 0, json!({ "violations": containment }));
    out.check("distance-decrease", distance == 0, json!({ "violations": distance }));
    if let Some(st) = first {
        out.file("stack_example.csv", st.to_csv());
    }
    Ok(out)
}

pub fn barrier_verify(cfg: &RunConfig) -> Result<RunOutput> {
    let model = cfg.model.build()?;
    let ell = cfg.ellipticity.build()?;
    let b = &cfg.barrier;
    let mut out = RunOutput::default();
    out.derive("q", exponent_q(b.n, &ell))?;
    let params = calibrate_with(b.n, &ell, &model, b.calibration_grid)?;
    let r = b.r_log2.map(|k| 2f64.powi(-(k as i32))).unwrap_or(params.r0);
    let (rep, samples) = verify(&params, &model, r, b.grid)?;
    out.check("residual-outside-K1", rep.residual_pass, json!({ "max": rep.residual_max, "witness": rep.residual_witness }));
    out.check("K3-depth", rep.k3_pass, json!({ "min_neg_h": rep.k3_min }));
    out.check("parabolic-boundary", rep.boundary_pass, json!({ "max_abs_h": rep.boundary_max }));
    out.check("annulus-bound", rep.annulus_violations == 0, json!({ "points": rep.annulus_points, "violations": rep.annulus_violations }));
    out.check("inner-bound", rep.inner_violations == 0, json!({ "points": rep.inner_points, "violations": rep.inner_violations }));
    out.check("eigenvalues", rep.eigen_pass, json!({ "max_rel_err": rep.eigen_max_rel_err }));
    out.check("gradient-bound", rep.m1_pass, json!({ "m1": rep.m1, "phi_grad_sup": rep.phi_grad_sup_observed }));
    out.check("cap-signs", rep.sign_violations == 0, json!({ "violations": rep.sign_violations }));
    out.derive("params", &params)?;
    out.derive("report", &rep)?;
    out.file("barrier_samples.csv", samples_csv(&samples));
    Ok(out)
}

//! Run configuration: one JSON document with a block per command.

use anyhow::{bail, ensure, Context, Result};
use harnack_core::harnack::{FamilyKind, FamilySpec};
use harnack_core::nonlinearity::{validate_conditions, Family, PhiModel, SampleSpec};
use harnack_core::pucci::EllipticityPair;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// `{ "family": "...", "params": [...], "lambda0": ... }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default)]
    pub lambda0: Option<f64>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { family: Family::LogSquaredExample, params: vec![], lambda0: None }
    }
}

impl ModelSpec {
    /// Builds the model; a missing `lambda0` takes the catalog value or the
    /// sampled estimate.
    pub fn build(&self) -> Result<PhiModel<f64>> {
        let base = PhiModel::new(self.family, self.params.clone(), None)?;
        let l0 = match (self.lambda0, self.family) {
            (Some(v), _) => v,
            (None, Family::Linear) => 1.0,
            (None, Family::LogSquaredExample) => 1.0 / 80.0,
            (None, Family::PowerLog) => validate_conditions(&base, &SampleSpec::default())?.lambda0_hat,
        };
        ensure!(l0.is_finite() && l0 > 0.0, "lambda0 estimate {l0} is not positive");
        Ok(base.with_lambda0(l0)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipticitySpec {
    pub lambda: f64,
    pub big_lambda: f64,
}

impl Default for EllipticitySpec {
    fn default() -> Self {
        Self { lambda: 1.0, big_lambda: 1.0 }
    }
}

impl EllipticitySpec {
    pub fn build(&self) -> Result<EllipticityPair<f64>> {
        Ok(EllipticityPair::new(self.lambda, self.big_lambda)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PucciConfig {
    pub matrices: usize,
    pub increments: usize,
    pub entry_bound: f64,
    pub lambda: f64,
    pub big_lambda: f64,
    pub tol: f64,
}

impl Default for PucciConfig {
    fn default() -> Self {
        Self { matrices: 1000, increments: 200, entry_bound: 10.0, lambda: 0.5, big_lambda: 2.0, tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionsConfig {
    pub n: usize,
}

impl Default for RegionsConfig {
    fn default() -> Self {
        Self { n: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StacksConfig {
    pub l2: f64,
    pub l: f64,
    pub k_max: usize,
    /// Random stacks verified in exact arithmetic.
    pub count: usize,
}

impl Default for StacksConfig {
    fn default() -> Self {
        Self { l2: 1.0, l: std::f64::consts::E, k_max: 12, count: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverConfig {
    pub instances: usize,
    pub max_depth: u32,
}

impl Default for CoverConfig {
    fn default() -> Self {
        Self { instances: 200, max_depth: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierConfig {
    pub n: usize,
    pub grid: usize,
    pub calibration_grid: usize,
    /// Verification radius `2^-r_log2`; defaults to the calibrated `r0`.
    pub r_log2: Option<u32>,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self { n: 1, grid: 256, calibration_grid: 256, r_log2: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub amplitude: f64,
    pub center: Vec<f64>,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub n: usize,
    pub nx: usize,
    pub rho: f64,
    pub stored_levels: usize,
    pub base: f64,
    pub bumps: Vec<BumpSpec>,
    /// Grids with at most this many values are also written as CSV.
    pub csv_limit: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            n: 1,
            nx: 101,
            rho: 1.0,
            stored_levels: 201,
            base: 1.0,
            bumps: vec![BumpSpec { amplitude: 0.8, center: vec![0.3], width: 0.4 }],
            csv_limit: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub grids: usize,
    pub size: usize,
    pub oracle_tol: f64,
    pub witness_nx: usize,
    pub attain_per_axis: usize,
    /// Attainment tolerance in units of `dx`.
    pub attain_dx_factor: f64,
    pub infconv_nx: usize,
    pub eps: Vec<f64>,
    pub huber_tol: f64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self {
            grids: 50,
            size: 17,
            oracle_tol: 1e-6,
            witness_nx: 65,
            attain_per_axis: 17,
            attain_dx_factor: 5.0,
            infconv_nx: 65,
            eps: vec![0.125, 0.25, 0.5],
            huber_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureConfig {
    pub members: usize,
    pub nx: usize,
    pub stored_levels: usize,
    pub r1: f64,
    pub delta: f64,
    pub base: [f64; 2],
    pub l_grid: Vec<f64>,
    pub mu_grid: Vec<f64>,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            members: 12,
            nx: 101,
            stored_levels: 1001,
            r1: 0.5,
            delta: 0.0,
            base: [0.2, 1.0],
            l_grid: vec![1.5, 2.0, 3.0, 5.0, 10.0],
            mu_grid: vec![0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 0.95],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LepsConfig {
    pub members: usize,
    pub nx: usize,
    pub stored_levels: usize,
    pub c: f64,
    pub r1: f64,
    pub samples: usize,
    pub l2: f64,
    pub l: f64,
    pub k_max: usize,
    pub sigma: f64,
    pub nu: f64,
    pub big_l0: f64,
}

impl Default for LepsConfig {
    fn default() -> Self {
        Self {
            members: 12,
            nx: 101,
            stored_levels: 1001,
            c: 2.0,
            r1: 0.5,
            samples: 33,
            l2: 1.0,
            l: std::f64::consts::E,
            k_max: 12,
            sigma: 1.0,
            nu: 2.0,
            big_l0: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n: usize,
    pub nx: usize,
    pub stored_levels: usize,
    /// Second resolution for the stability check; `null` skips it.
    pub refine_nx: Option<usize>,
    pub refine_stored_levels: usize,
    pub c_start: f64,
    pub c_step: f64,
    pub c_count: usize,
    /// Members of the constant family run alongside; 0 skips it.
    pub constants_members: usize,
    pub family: FamilySpec,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n: 1,
            nx: 201,
            stored_levels: 2001,
            refine_nx: Some(401),
            refine_stored_levels: 4001,
            c_start: 1.0,
            c_step: 0.05,
            c_count: 41,
            constants_members: 3,
            family: FamilySpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterexampleConfig {
    pub c: f64,
    pub tau: f64,
    pub t0: Vec<f64>,
    /// Required blowup of the fixed-lag ratio at the last center.
    pub blowup: f64,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self { c: 1.5, tau: 0.25, t0: vec![-0.5, -0.25, -0.1, -0.05, -0.02, -0.01, -0.005], blowup: 1e6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelSpec,
    pub ellipticity: EllipticitySpec,
    pub validate_phi: SampleSpec,
    pub pucci: PucciConfig,
    pub regions: RegionsConfig,
    pub stacks: StacksConfig,
    pub cover: CoverConfig,
    pub barrier: BarrierConfig,
    pub evolve: EvolveConfig,
    pub envelope: EnvelopeConfig,
    pub measure: MeasureConfig,
    pub leps: LepsConfig,
    pub sweep: SweepConfig,
    pub counterexample: CounterexampleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            model: ModelSpec::default(),
            ellipticity: EllipticitySpec::default(),
            validate_phi: SampleSpec::default(),
            pucci: PucciConfig::default(),
            regions: RegionsConfig::default(),
            stacks: StacksConfig::default(),
            cover: CoverConfig::default(),
            barrier: BarrierConfig::default(),
            evolve: EvolveConfig::default(),
            envelope: EnvelopeConfig::default(),
            measure: MeasureConfig::default(),
            leps: LepsConfig::default(),
            sweep: SweepConfig::default(),
            counterexample: CounterexampleConfig::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    ensure!(v.is_finite() && v > 0.0, "{name} must be positive and finite, got {v}");
    Ok(())
}

fn unit_open(name: &str, v: f64) -> Result<()> {
    ensure!(v > 0.0 && v < 1.0, "{name} must lie in (0, 1), got {v}");
    Ok(())
}

fn odd_nx(name: &str, nx: usize) -> Result<()> {
    ensure!(nx >= 5 && nx % 2 == 1, "{name} must be odd and at least 5, got {nx}");
    Ok(())
}

impl RunConfig {
    /// Range checks for every numeric field.
    pub fn validate(&self) -> Result<()> {
        self.model.build().context("model")?;
        self.ellipticity.build().context("ellipticity")?;
        let v = &self.validate_phi;
        ensure!(v.ln_min < v.ln_max && v.count >= 3 && v.triple_count >= 3, "validate_phi grid must be ordered with at least 3 points");
        for (name, x) in [
            ("validate_phi.tail_ln_horizon", v.tail_ln_horizon),
            ("validate_phi.growth_threshold", v.growth_threshold),
            ("validate_phi.fd_rel_step", v.fd_rel_step),
            ("validate_phi.lemma_point", v.lemma_point),
            ("validate_phi.lemma_tol", v.lemma_tol),
            ("validate_phi.lemma_gamma", v.lemma_gamma),
        ] {
            positive(name, x)?;
        }

        let p = &self.pucci;
        ensure!(p.matrices > 0 && p.increments > 0, "pucci counts must be positive");
        positive("pucci.entry_bound", p.entry_bound)?;
        positive("pucci.tol", p.tol)?;
        EllipticityPair::new(p.lambda, p.big_lambda).context("pucci ellipticity")?;

        ensure!((1..=3).contains(&self.regions.n), "regions.n must be 1..=3");

        let s = &self.stacks;
        ensure!(s.l2 >= 1.0 && s.l > 1.0 && s.k_max >= 5, "stacks needs l2 >= 1, l > 1, k_max >= 5");

        let c = &self.cover;
        ensure!(c.instances > 0 && (2..=4).contains(&c.max_depth), "cover needs instances > 0 and max_depth in 2..=4");

        let b = &self.barrier;
        ensure!((1..=3).contains(&b.n) && b.grid >= 4 && b.calibration_grid >= 16, "barrier needs n in 1..=3, grid >= 4, calibration_grid >= 16");

        let e = &self.evolve;
        ensure!((1..=2).contains(&e.n), "evolve.n must be 1 or 2");
        odd_nx("evolve.nx", e.nx)?;
        positive("evolve.rho", e.rho)?;
        positive("evolve.base", e.base)?;
        ensure!(e.stored_levels >= 2, "evolve.stored_levels must be at least 2");
        for bump in &e.bumps {
            ensure!(bump.center.len() == e.n, "bump centers must have {} coordinates", e.n);
            ensure!(bump.amplitude >= 0.0 && bump.amplitude.is_finite(), "bump amplitudes must be nonnegative");
            positive("bump width", bump.width)?;
        }

        let en = &self.envelope;
        ensure!(en.grids > 0 && en.size >= 3 && en.witness_nx >= 5 && en.infconv_nx >= 5, "envelope grid sizes too small");
        positive("envelope.oracle_tol", en.oracle_tol)?;
        positive("envelope.attain_dx_factor", en.attain_dx_factor)?;
        positive("envelope.huber_tol", en.huber_tol)?;
        ensure!(en.attain_per_axis >= 2, "envelope.attain_per_axis must be at least 2");
        ensure!(!en.eps.is_empty() && en.eps.windows(2).all(|w| w[0] < w[1]), "envelope.eps must be increasing");
        for &x in &en.eps {
            positive("envelope.eps", x)?;
        }

        let m = &self.measure;
        ensure!(m.members > 0 && m.stored_levels >= 2, "measure needs members and stored levels");
        odd_nx("measure.nx", m.nx)?;
        unit_open("measure.r1", m.r1)?;
        ensure!(m.delta >= 0.0 && m.delta < 1.0, "measure.delta must lie in [0, 1)");
        ensure!(m.base[0] > 0.0 && m.base[0] <= m.base[1], "measure.base must be positive and ordered");
        ensure!(!m.l_grid.is_empty() && m.l_grid.iter().all(|&l| l > 1.0), "measure.l_grid values must exceed 1");
        ensure!(!m.mu_grid.is_empty() && m.mu_grid.iter().all(|&x| x > 0.0 && x < 1.0), "measure.mu_grid values must lie in (0, 1)");

        let l = &self.leps;
        ensure!(l.members > 0 && l.stored_levels >= 2 && l.samples >= 2, "leps needs members, stored levels and samples");
        odd_nx("leps.nx", l.nx)?;
        positive("leps.c", l.c)?;
        unit_open("leps.r1", l.r1)?;
        ensure!(l.l2 >= 1.0 && l.l > 1.0 && l.k_max >= 5, "leps schedule needs l2 >= 1, l > 1, k_max >= 5");
        positive("leps.sigma", l.sigma)?;
        ensure!(l.nu > 1.0 && l.big_l0 >= 2.0, "leps needs nu > 1 and big_l0 >= 2");

        let w = &self.sweep;
        ensure!((1..=2).contains(&w.n), "sweep.n must be 1 or 2");
        odd_nx("sweep.nx", w.nx)?;
        if let Some(r) = w.refine_nx {
            odd_nx("sweep.refine_nx", r)?;
        }
        ensure!(w.stored_levels >= 2 && w.refine_stored_levels >= 2, "sweep stored levels must be at least 2");
        positive("sweep.c_start", w.c_start)?;
        positive("sweep.c_step", w.c_step)?;
        ensure!(w.c_count >= 1, "sweep.c_count must be positive");
        w.family.validate()?;

        let x = &self.counterexample;
        positive("counterexample.c", x.c)?;
        positive("counterexample.tau", x.tau)?;
        positive("counterexample.blowup", x.blowup)?;
        ensure!(!x.t0.is_empty(), "counterexample.t0 must be nonempty");
        Ok(())
    }

    /// Loads `path` (or the defaults), applies `--set` overrides and validates.
    pub fn load(path: Option<&std::path::Path>, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str::<Value>(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => serde_json::to_value(Self::default())?,
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg: Self = serde_json::from_value(doc).context("config does not match the schema")?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Applies `a.b.c=value`; the value is parsed as JSON and falls back to a string.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec.split_once('=').with_context(|| format!("override {spec:?} is not K=V"))?;
    ensure!(!path.is_empty(), "override {spec:?} has an empty key");
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert((*key).to_string(), value);
                    return Ok(());
                }
                map.entry((*key).to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = key.parse().with_context(|| format!("override {path:?}: {key:?} is not an index"))?;
                ensure!(idx < items.len(), "override {path:?}: index {idx} out of range");
                if last {
                    items[idx] = value;
                    return Ok(());
                }
                &mut items[idx]
            }
            Value::Null => {
                *cur = Value::Object(Default::default());
                match cur {
                    Value::Object(map) => {
                        if last {
                            map.insert((*key).to_string(), value);
                            return Ok(());
                        }
                        map.entry((*key).to_string()).or_insert_with(|| Value::Object(Default::default()))
                    }
                    _ => unreachable!(),
                }
            }
            _ => bail!("override {path:?}: {key:?} is inside a scalar"),
        };
    }
    Ok(())
}

/// Bump family with the measure-check base range.
pub fn measure_family_spec(cfg: &MeasureConfig) -> FamilySpec {
    FamilySpec { kind: FamilyKind::Bumps, members: cfg.members, base: cfg.base, ..FamilySpec::default() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_apply_by_path() {
        let cfg = RunConfig::load(None, &["sweep.nx=101".into(), "model.family=linear".into(), "counterexample.t0.0=-0.6".into()], Some(9)).unwrap();
        assert_eq!(cfg.sweep.nx, 101);
        assert_eq!(cfg.model.family, Family::Linear);
        assert_eq!(cfg.counterexample.t0[0], -0.6);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(RunConfig::load(None, &["sweep.nx=100".into()], None).is_err());
        assert!(RunConfig::load(None, &["measure.r1=1.5".into()], None).is_err());
        assert!(RunConfig::load(None, &["nosuch=1".into()], None).is_err());
        assert!(RunConfig::load(None, &["model.family=cubic".into()], None).is_err());
        assert!(RunConfig::load(None, &["seed".into()], None).is_err());
    }
}

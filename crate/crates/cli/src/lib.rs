//! Experiment driver: loads a run configuration, executes one pipeline and
//! writes its CSV artifacts plus a JSON manifest.

pub mod commands;
pub mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

pub use config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    ValidatePhi,
    PucciSelftest,
    Regions,
    StackDemo,
    BarrierVerify,
    Evolve,
    EnvelopeDemo,
    MeasureCheck,
    Leps,
    HarnackSweep,
    Counterexample,
}

impl Command {
    pub const ALL: [Command; 11] = [
        Self::ValidatePhi,
        Self::PucciSelftest,
        Self::Regions,
        Self::StackDemo,
        Self::BarrierVerify,
        Self::Evolve,
        Self::EnvelopeDemo,
        Self::MeasureCheck,
        Self::Leps,
        Self::HarnackSweep,
        Self::Counterexample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::ValidatePhi => "validate-phi",
            Self::PucciSelftest => "pucci-selftest",
            Self::Regions => "regions",
            Self::StackDemo => "stack-demo",
            Self::BarrierVerify => "barrier-verify",
            Self::Evolve => "evolve",
            Self::EnvelopeDemo => "envelope-demo",
            Self::MeasureCheck => "measure-check",
            Self::Leps => "leps",
            Self::HarnackSweep => "harnack-sweep",
            Self::Counterexample => "counterexample",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s).with_context(|| format!("unknown command {s:?}"))
    }
}

/// One named pass/fail outcome with supporting values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: Value,
}

/// Results of a pipeline before they are written.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub checks: Vec<Check>,
    pub derived: Map<String, Value>,
    pub files: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    pub fn check(&mut self, name: &str, pass: bool, detail: Value) {
        self.checks.push(Check { name: name.to_string(), pass, detail });
    }

    pub fn derive(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.derived.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn file(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), contents.into()));
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Written run: the manifest and the directory holding it.
#[derive(Debug)]
pub struct Outcome {
    pub pass: bool,
    pub manifest: Value,
    pub dir: PathBuf,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs `command` and writes its artifacts and `manifest.json` to `out`.
pub fn run(command: Command, cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let output = commands::dispatch(command, cfg)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut artifacts = Vec::new();
    for (name, bytes) in &output.files {
        std::fs::write(out.join(name), bytes).with_context(|| format!("writing {name}"))?;
        artifacts.push(json!({ "file": name, "bytes": bytes.len(), "sha256": sha256_hex(bytes) }));
    }
    let pass = output.pass();
    let manifest = json!({
        "command": command.name(),
        "seed": cfg.seed,
        "pass": pass,
        "checks": output.checks,
        "derived": output.derived,
        "artifacts": artifacts,
        "config": cfg,
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(out.join("manifest.json"), text).context("writing manifest.json")?;
    Ok(Outcome { pass, manifest, dir: out.to_path_buf() })
}

/// Machine-readable failure record.
pub fn error_record(command: Option<&str>, err: &anyhow::Error) -> Value {
    let core = err.chain().find_map(|e| e.downcast_ref::<harnack_core::Error>());
    let kind = match core {
        Some(harnack_core::Error::InvalidArgument(_)) => "invalid-argument",
        Some(harnack_core::Error::NonFinite(_)) => "non-finite",
        Some(harnack_core::Error::Domain(_)) => "domain",
        Some(harnack_core::Error::NoConvergence(_)) => "no-convergence",
        Some(harnack_core::Error::Infeasible(_)) => "infeasible",
        Some(harnack_core::Error::PositivityLost { .. }) => "positivity-lost",
        Some(harnack_core::Error::Resolution { .. }) => "resolution",
        None => "config",
    };
    let mut rec = json!({
        "command": command,
        "kind": kind,
        "message": format!("{err:#}"),
    });
    if let Some(harnack_core::Error::Resolution { required_nx, .. }) = core {
        rec["required_nx"] = json!(required_nx);
    }
    rec
}

/// Exit status: 0 all checks pass, 1 a check failed, 2 an error record was written.
pub fn run_cli(command: &str, config: Option<&Path>, overrides: &[String], seed: Option<u64>, out: &Path) -> i32 {
    let attempt = || -> Result<Outcome> {
        let cmd: Command = command.parse()?;
        let cfg = RunConfig::load(config, overrides, seed)?;
        run(cmd, &cfg, out)
    };
    match attempt() {
        Ok(o) if o.pass => 0,
        Ok(o) => {
            let failed: Vec<&str> = o.manifest["checks"]
                .as_array()
                .map(|a| a.iter().filter(|c| c["pass"] == false).filter_map(|c| c["name"].as_str()).collect())
                .unwrap_or_default();
            let rec = json!({ "command": command, "kind": "check-failed", "message": format!("failed checks: {}", failed.join(", ")), "failed": failed });
            match write_error(out, &rec) {
                Ok(()) => 1,
                Err(_) => 2,
            }
        }
        Err(e) => {
            let rec = error_record(Some(command), &e);
            eprintln!("error: {e:#}");
            let _ = write_error(out, &rec);
            2
        }
    }
}

fn write_error(out: &Path, rec: &Value) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let mut text = serde_json::to_string_pretty(rec)?;
    text.push('\n');
    std::fs::write(out.join("error.json"), text)?;
    Ok(())
}

//! Suite files.
//!
//! A suite is a TOML document:
//!
//! ```toml
//! schema_version = 1
//! output_dir = "out"          # relative to the working directory
//! seed = 7
//! controller_rate = 500.0     # Hz
//! # chain = "arm.toml"        # optional; defaults to the bundled UR10e-like arm
//!
//! [[scenario]]
//! id = "ss-z-10-velocity"
//! experiment = "ss"           # cw | os | ss | dh
//! mode = "velocity"           # velocity | position
//! trials = 3
//! [scenario.ss]
//! step_force = 10.0
//! ```
//!
//! Every scenario key except `id`, `experiment` and `mode` is optional.
//! Omitted tables and keys take the parameter-table defaults of the
//! experiment (`compliance`, `virtual_model`, `servo`, `sensor`, `contact`,
//! `metrics` and the experiment table `cw`/`os`/`ss`/`dh`); an omitted
//! `duration` is derived from the scripted motion. [`print_suite`] writes the
//! fully expanded form, which parses back to the same suite.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Value;

use super::{load_chain, ConfigError};
use crate::bench::{
    ComplianceSettings, ContactSettings, CwTargets, DhTargets, Experiment, ExperimentTargets, MetricSettings,
    OsTargets, ScenarioConfig, SensorSettings, ServoSettings, SimContext, SsTargets, VirtualSettings,
};
use crate::controller::ControlMode;
use crate::kinematics::KinematicChain;

pub const SUITE_SCHEMA_VERSION: u32 = 1;

/// Largest seed a suite file can hold (TOML integers are signed 64-bit).
pub const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSuite {
    pub scenarios: Vec<ScenarioConfig>,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Hz.
    pub controller_rate: f64,
    /// Chain file; `None` selects the bundled arm.
    pub chain: Option<PathBuf>,
}

impl ExperimentSuite {
    pub fn empty() -> Self {
        ExperimentSuite {
            scenarios: Vec::new(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            controller_rate: 500.0,
            chain: None,
        }
    }

    pub fn context(&self) -> Result<SimContext, ConfigError> {
        let mut ctx = SimContext::reference(self.controller_rate, self.seed);
        if let Some(path) = &self.chain {
            let chain: KinematicChain<f64> = load_chain(path)?;
            if chain.dof() != ctx.home.len() {
                return Err(ConfigError::validation(
                    "chain",
                    None,
                    format!("{} joints; the start configuration needs {}", chain.dof(), ctx.home.len()),
                ));
            }
            ctx.chain = chain;
        }
        Ok(ctx)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteFile {
    schema_version: u32,
    output_dir: PathBuf,
    seed: u64,
    controller_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    chain: Option<PathBuf>,
    #[serde(default)]
    scenario: Vec<ScenarioFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    id: String,
    experiment: Experiment,
    mode: ControlMode,
    trials: usize,
    duration: f64,
    seed_stride: u64,
    compliance: ComplianceSettings,
    virtual_model: VirtualSettings,
    servo: ServoSettings,
    sensor: SensorSettings,
    contact: ContactSettings,
    metrics: MetricSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cw: Option<CwTargets>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    os: Option<OsTargets>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ss: Option<SsTargets>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dh: Option<DhTargets>,
}

impl From<&ScenarioConfig> for ScenarioFile {
    fn from(c: &ScenarioConfig) -> Self {
        let (mut cw, mut os, mut ss, mut dh) = (None, None, None, None);
        match &c.targets {
            ExperimentTargets::Cw(t) => cw = Some(*t),
            ExperimentTargets::Os(t) => os = Some(t.clone()),
            ExperimentTargets::Ss(t) => ss = Some(*t),
            ExperimentTargets::Dh(t) => dh = Some(t.clone()),
        }
        ScenarioFile {
            id: c.id.clone(),
            experiment: c.experiment(),
            mode: c.mode,
            trials: c.trials,
            duration: c.duration,
            seed_stride: c.seed_stride,
            compliance: c.compliance,
            virtual_model: c.virtual_model,
            servo: c.servo,
            sensor: c.sensor,
            contact: c.contact,
            metrics: c.metrics,
            cw,
            os,
            ss,
            dh,
        }
    }
}

impl ScenarioFile {
    fn into_config(self) -> Result<ScenarioConfig, String> {
        let targets = match (self.experiment, self.cw, self.os, self.ss, self.dh) {
            (Experiment::Cw, Some(t), None, None, None) => ExperimentTargets::Cw(t),
            (Experiment::Os, None, Some(t), None, None) => ExperimentTargets::Os(t),
            (Experiment::Ss, None, None, Some(t), None) => ExperimentTargets::Ss(t),
            (Experiment::Dh, None, None, None, Some(t)) => ExperimentTargets::Dh(t),
            (e, ..) => return Err(format!("only the `{}` experiment table may be given", e.label())),
        };
        Ok(ScenarioConfig {
            id: self.id,
            mode: self.mode,
            trials: self.trials,
            duration: self.duration,
            compliance: self.compliance,
            virtual_model: self.virtual_model,
            servo: self.servo,
            sensor: self.sensor,
            contact: self.contact,
            metrics: self.metrics,
            seed_stride: self.seed_stride,
            targets,
        })
    }
}

/// Overlays `user` onto `base`, descending into tables.
fn merge(base: &mut Value, user: Value) {
    match (base, user) {
        (Value::Table(b), Value::Table(u)) => {
            for (k, v) in u {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, u) => *b = u,
    }
}

/// Line range `[start, end)` (0-based) of the `index`-th `[[scenario]]` block.
fn scenario_block(text: &str, index: usize) -> Option<(usize, usize)> {
    let heads: Vec<usize> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| l.trim() == "[[scenario]]")
        .map(|(i, _)| i)
        .collect();
    let start = *heads.get(index)?;
    let end = heads.get(index + 1).copied().unwrap_or(usize::MAX);
    Some((start, end))
}

/// Line (1-based) of `key` inside scenario `index`, or of its header.
fn scenario_line(text: &str, index: usize, key: &str) -> Option<usize> {
    let (start, end) = scenario_block(text, index)?;
    let leaf = key.rsplit('.').next().unwrap_or(key);
    let leaf = leaf.split('[').next().unwrap_or(leaf);
    text.lines()
        .enumerate()
        .skip(start)
        .take_while(|(i, _)| *i < end)
        .find(|(_, l)| {
            l.trim_start()
                .strip_prefix(leaf)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|(i, _)| i + 1)
        .or(Some(start + 1))
}

fn experiment_of(table: &toml::Table) -> Result<Experiment, String> {
    let v = table.get("experiment").ok_or("missing key `experiment`")?;
    Experiment::deserialize(v.clone()).map_err(|_| format!("unknown experiment {v}; expected cw, os, ss or dh"))
}

fn defaults_value(experiment: Experiment, mode: ControlMode) -> Value {
    let cfg = ScenarioConfig::paper("", mode, ExperimentTargets::default_for(experiment));
    Value::try_from(ScenarioFile::from(&cfg)).expect("defaults serialize")
}

/// Parses and validates suite text.
pub fn parse_suite(text: &str) -> Result<ExperimentSuite, ConfigError> {
    let mut doc: toml::Table = text.parse().map_err(|e| ConfigError::from_toml(text, &e))?;
    let raw_scenarios = match doc.remove("scenario") {
        None => Vec::new(),
        Some(Value::Array(items)) => items,
        Some(_) => {
            return Err(ConfigError::validation(
                "scenario",
                super::find_key_line(text, "scenario", 0),
                "must be an array of tables ([[scenario]])",
            ))
        }
    };
    doc.insert("scenario".into(), Value::Array(Vec::new()));
    let head: SuiteFile = Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| top_level_error(text, e))?;
    if head.schema_version != SUITE_SCHEMA_VERSION {
        return Err(ConfigError::validation(
            "schema_version",
            super::find_key_line(text, "schema_version", 0),
            format!("unsupported version {}; expected {SUITE_SCHEMA_VERSION}", head.schema_version),
        ));
    }
    if !(head.controller_rate > 0.0) || !head.controller_rate.is_finite() {
        return Err(ConfigError::validation(
            "controller_rate",
            super::find_key_line(text, "controller_rate", 0),
            "must be positive",
        ));
    }

    let mut scenarios = Vec::with_capacity(raw_scenarios.len());
    let mut ids = HashSet::new();
    for (i, raw) in raw_scenarios.into_iter().enumerate() {
        let at = |key: &str| scenario_line(text, i, key);
        let fail = |field: &str, msg: String| ConfigError::validation(format!("scenario[{i}].{field}"), at(field), msg);
        let Value::Table(table) = raw else {
            return Err(fail("", "must be a table".into()));
        };
        let experiment = experiment_of(&table).map_err(|m| fail("experiment", m))?;
        let mode = match table.get("mode") {
            Some(v) => ControlMode::deserialize(v.clone())
                .map_err(|_| fail("mode", format!("unknown mode {v}; expected velocity or position")))?,
            None => return Err(fail("mode", "missing key".into())),
        };
        let has_duration = table.contains_key("duration");
        let mut merged = defaults_value(experiment, mode);
        merge(&mut merged, Value::Table(table));
        let file: ScenarioFile = merged.try_into().map_err(|e: toml::de::Error| {
            let msg = e.message().to_string();
            let field = msg
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_default();
            ConfigError::validation(format!("scenario[{i}].{field}"), at(&field), msg)
        })?;
        let mut cfg = file.into_config().map_err(|m| fail(experiment.label(), m))?;
        if !has_duration {
            cfg.duration = cfg.natural_duration();
        }
        if !ids.insert(cfg.id.clone()) {
            return Err(fail("id", format!("duplicate scenario id `{}`", cfg.id)));
        }
        cfg.validate().map_err(|e| match e {
            crate::Error::InvalidParameter { field, reason } => fail(&field, reason),
            other => fail("", other.to_string()),
        })?;
        scenarios.push(cfg);
    }

    Ok(ExperimentSuite {
        scenarios,
        output_dir: head.output_dir,
        seed: head.seed,
        controller_rate: head.controller_rate,
        chain: head.chain,
    })
}

fn top_level_error(text: &str, e: toml::de::Error) -> ConfigError {
    let msg = e.message().to_string();
    let field = msg.split('`').nth(1).unwrap_or("").to_string();
    let line = super::find_key_line(text, &field, 0);
    ConfigError::validation(field, line, msg)
}

pub fn load_suite(path: &Path) -> Result<ExperimentSuite, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::io(path, e))?;
    parse_suite(&text)
}

/// Fully expanded suite text; `parse_suite(print_suite(s)) == s`.
///
/// Panics if `seed` or a `seed_stride` exceeds [`MAX_SEED`]; parsed suites
/// never do.
pub fn print_suite(suite: &ExperimentSuite) -> String {
    let file = SuiteFile {
        schema_version: SUITE_SCHEMA_VERSION,
        output_dir: suite.output_dir.clone(),
        seed: suite.seed,
        controller_rate: suite.controller_rate,
        chain: suite.chain.clone(),
        scenario: suite.scenarios.iter().map(ScenarioFile::from).collect(),
    };
    toml::to_string(&file).expect("suite serializes")
}

fn digest(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// `(config_hash, comparison_hash)` of a scenario in its context. The
/// comparison hash leaves out the id and the interface mode, so the two modes
/// of one scenario share it.
pub fn scenario_hashes(cfg: &ScenarioConfig, ctx: &SimContext) -> (String, String) {
    let context = format!("{:?}|{:?}|{:?}|{:?}", ctx.chain, ctx.home.as_slice(), ctx.dt, ctx.seed);
    let full = toml::to_string(&ScenarioFile::from(cfg)).expect("scenario serializes");
    let mut anon = ScenarioFile::from(cfg);
    anon.id.clear();
    let mut table = Value::try_from(&anon).expect("scenario serializes");
    if let Value::Table(t) = &mut table {
        t.remove("mode");
    }
    let anon = toml::to_string(&table).expect("scenario serializes");
    (digest(&[&context, &full]), digest(&[&context, &anon]))
}

//! Suite execution, report files and mode comparison.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ConfigError, ExperimentSuite};
use crate::bench::{run_scenario, MetricsReport, ScenarioConfig, SimContext, Stat};
use crate::controller::ControlMode;

/// Result of a suite run.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub reports: Vec<MetricsReport>,
    /// `(scenario id, message)` for every scenario that faulted.
    pub faults: Vec<(String, String)>,
    pub output_dir: PathBuf,
}

impl SuiteOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.faults.is_empty() {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportFile {
    #[serde(default)]
    report: Vec<MetricsReport>,
}

/// Writes one report as a key-value (TOML) document.
pub fn report_to_string(report: &MetricsReport) -> String {
    toml::to_string(report).expect("report serializes")
}

pub fn parse_report(text: &str) -> Result<MetricsReport, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::from_toml(text, &e))
}

pub fn load_report(path: &Path) -> Result<MetricsReport, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::io(path, e))?;
    parse_report(&text)
}

fn write(path: &Path, text: &str) -> Result<(), ConfigError> {
    fs::write(path, text).map_err(|e| ConfigError::io(path, e))
}

/// Runs every scenario, writing `<out>/<id>/trial_<k>.csv` and
/// `<out>/<id>/report.toml` per scenario plus `<out>/summary.txt` and
/// `<out>/summary.toml`. Scenarios run on up to `jobs` threads.
pub fn run_suite(suite: &ExperimentSuite, jobs: usize) -> Result<SuiteOutcome, ConfigError> {
    let ctx = suite.context()?;
    let out = suite.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| ConfigError::io(&out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ConfigError::validation("jobs", None, e.to_string()))?;
    let results: Vec<Result<Result<MetricsReport, String>, ConfigError>> = pool.install(|| {
        suite
            .scenarios
            .par_iter()
            .map(|cfg| run_one(cfg, &ctx, &out))
            .collect()
    });

    let mut reports = Vec::new();
    let mut faults = Vec::new();
    for (cfg, r) in suite.scenarios.iter().zip(results) {
        match r? {
            Ok(report) => {
                let bad: Vec<&str> = report.diagnostics().filter(|d| d.starts_with("controller fault")).collect();
                if !bad.is_empty() {
                    faults.push((cfg.id.clone(), bad.join("; ")));
                }
                reports.push(report);
            }
            Err(msg) => faults.push((cfg.id.clone(), msg)),
        }
    }

    write(&out.join("summary.toml"), &toml::to_string(&ReportFile { report: reports.clone() }).expect("reports serialize"))?;
    write(&out.join("summary.txt"), &summary_table(&reports, &faults))?;
    Ok(SuiteOutcome {
        reports,
        faults,
        output_dir: out,
    })
}

/// Outer error: I/O; inner error: the scenario faulted.
fn run_one(cfg: &ScenarioConfig, ctx: &SimContext, out: &Path) -> Result<Result<MetricsReport, String>, ConfigError> {
    let outcome = match run_scenario(cfg, ctx) {
        Ok(o) => o,
        Err(e) => return Ok(Err(e.to_string())),
    };
    let dir = out.join(&cfg.id);
    fs::create_dir_all(&dir).map_err(|e| ConfigError::io(&dir, e))?;
    for (k, trace) in outcome.traces.iter().enumerate() {
        let path = dir.join(format!("trial_{k}.csv"));
        let file = fs::File::create(&path).map_err(|e| ConfigError::io(&path, e))?;
        trace
            .write_csv(BufWriter::new(file))
            .map_err(|e| ConfigError::io(&path, e))?;
    }
    write(&dir.join("report.toml"), &report_to_string(&outcome.report))?;
    Ok(Ok(outcome.report))
}

fn cell(s: Option<Stat>) -> String {
    match s {
        Some(s) if s.n > 1 => format!("{:.3} ± {:.3}", s.mean, s.sd),
        Some(s) => format!("{:.3}", s.mean),
        None => "-".into(),
    }
}

const COLUMNS: [&str; 10] = [
    "overshoot [N]",
    "settling [s]",
    "SSE [N]",
    "total RMSE [N]",
    "ctrl RMSE [N]",
    "work [J]",
    "t_goal [s]",
    "peak [N]",
    "losses",
    "max dF/dt [N/s]",
];

fn stats(r: &MetricsReport) -> [Option<Stat>; 10] {
    [
        r.overshoot,
        r.settling_time,
        r.steady_state_error,
        r.total_rmse,
        r.controller_rmse,
        r.cumulative_work,
        r.time_to_goal,
        r.peak_force,
        r.contact_losses,
        r.max_force_rate,
    ]
}

/// Aligned text table, one row per scenario, showing only populated columns,
/// followed by velocity-versus-position comparisons of matching scenarios.
pub fn summary_table(reports: &[MetricsReport], faults: &[(String, String)]) -> String {
    let used: Vec<usize> = (0..COLUMNS.len())
        .filter(|&c| reports.iter().any(|r| stats(r)[c].is_some()))
        .collect();
    let mut rows = vec![{
        let mut h = vec!["scenario".to_string(), "exp".into(), "mode".into(), "trials".into()];
        h.extend(used.iter().map(|&c| COLUMNS[c].to_string()));
        h
    }];
    for r in reports {
        let s = stats(r);
        let mut row = vec![r.id.clone(), r.experiment.label().into(), r.mode.to_string(), r.trials.to_string()];
        row.extend(used.iter().map(|&c| cell(s[c])));
        rows.push(row);
    }
    let mut text = align(&rows);

    let mut pairs = Vec::new();
    for (i, a) in reports.iter().enumerate() {
        for b in &reports[i + 1..] {
            if a.comparison_hash == b.comparison_hash && a.mode != b.mode {
                pairs.push((a, b));
            }
        }
    }
    if !pairs.is_empty() {
        text.push_str("\nvelocity vs position\n");
        let mut rows = vec![vec![
            "velocity".to_string(),
            "position".into(),
            "metric".into(),
            "velocity".into(),
            "position".into(),
            "reduction".into(),
            "velocity better".into(),
        ]];
        for (a, b) in pairs {
            if let Ok(cmp) = compare_modes(a, b) {
                for row in &cmp.rows {
                    rows.push(vec![
                        cmp.velocity_id.clone(),
                        cmp.position_id.clone(),
                        row.metric.into(),
                        format!("{:.3}", row.velocity),
                        format!("{:.3}", row.position),
                        format!("{:.3} ({:.2}%)", row.reduction(), row.reduction_percent()),
                        row.verdict().into(),
                    ]);
                }
            }
        }
        text.push_str(&align(&rows));
    }
    for (id, msg) in faults {
        writeln!(text, "FAULT {id}: {msg}").unwrap();
    }
    text
}

fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s}{}", " ".repeat(widths[c] - s.chars().count())))
            .collect();
        writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
    }
    out
}

/// One metric of a comparison; lower is better for all of them.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub metric: &'static str,
    pub velocity: f64,
    pub position: f64,
}

impl ComparisonRow {
    /// Position minus velocity.
    pub fn reduction(&self) -> f64 {
        self.position - self.velocity
    }

    /// Reduction relative to position mode, in percent (0 when both are 0).
    pub fn reduction_percent(&self) -> f64 {
        if self.position == 0.0 {
            0.0
        } else {
            100.0 * self.reduction() / self.position
        }
    }

    pub fn velocity_dominates(&self) -> bool {
        self.velocity < self.position
    }

    /// "yes", "tie" or "NO" for the summary table.
    pub fn verdict(&self) -> &'static str {
        if self.velocity_dominates() {
            "yes"
        } else if self.velocity == self.position {
            "tie"
        } else {
            "NO"
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub velocity_id: String,
    pub position_id: String,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    /// Metrics where velocity mode is not strictly lower.
    pub fn flagged(&self) -> Vec<&'static str> {
        self.rows.iter().filter(|r| !r.velocity_dominates()).map(|r| r.metric).collect()
    }

    pub fn table(&self) -> String {
        let mut rows = vec![vec![
            "metric".to_string(),
            format!("{} (velocity)", self.velocity_id),
            format!("{} (position)", self.position_id),
            "delta".into(),
            "reduction".into(),
            "flag".into(),
        ]];
        for r in &self.rows {
            rows.push(vec![
                r.metric.into(),
                format!("{:.4}", r.velocity),
                format!("{:.4}", r.position),
                format!("{:.4}", -r.reduction()),
                format!("{:.2}%", r.reduction_percent()),
                if r.velocity_dominates() { "" } else { "velocity not lower" }.into(),
            ]);
        }
        align(&rows)
    }
}

/// Per-metric comparison of two reports of the same scenario. The reports
/// may come in either order; when both use the same mode the first one is
/// treated as the velocity side.
pub fn compare_modes(a: &MetricsReport, b: &MetricsReport) -> Result<Comparison, ConfigError> {
    if a.comparison_hash != b.comparison_hash {
        return Err(ConfigError::Mismatch(format!(
            "`{}` and `{}` were run with different parameters ({} vs {})",
            a.id,
            b.id,
            short(&a.comparison_hash),
            short(&b.comparison_hash)
        )));
    }
    let (vel, pos) = if a.mode == ControlMode::Position && b.mode == ControlMode::Velocity {
        (b, a)
    } else {
        (a, b)
    };
    let rows = vel
        .populated()
        .into_iter()
        .filter_map(|(name, v)| {
            pos.populated()
                .into_iter()
                .find(|(n, _)| *n == name)
                .map(|(_, p)| ComparisonRow {
                    metric: name,
                    velocity: v.mean,
                    position: p.mean,
                })
        })
        .collect();
    Ok(Comparison {
        velocity_id: vel.id.clone(),
        position_id: pos.id.clone(),
        rows,
    })
}

fn short(h: &str) -> &str {
    &h[..h.len().min(12)]
}

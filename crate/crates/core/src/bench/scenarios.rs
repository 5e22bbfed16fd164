//! Scripts and evaluation of the four experiments.
//!
//! Geometry is laid out relative to the home probe pose `p0`: travel runs
//! along base x, up is base z, and markers sit on the straight line through
//! `p0`.

use nalgebra::Vector3;
use rayon::prelude::*;

use super::metrics::{cumulative_work, max_rate, rmse, step_metrics, MetricError, MetricsReport, TrialMetrics};
use super::{
    run_closed_loop, CwTargets, DhTargets, ExperimentTargets, FaceList, OsTargets, ScenarioConfig, ScriptStep,
    SimContext, SsTargets, TimeSeriesTrace,
};
use crate::controller::{ControlTargets, Wrench};
use crate::error::{Error, Result};
use crate::kinematics::Pose;
use crate::plant::{Artefact, ContactLaw};

/// Traces of every trial plus the aggregated report.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub traces: Vec<TimeSeriesTrace>,
    pub report: MetricsReport,
}

const TRAVEL: Vector3<f64> = Vector3::new(1.0, 0.0, 0.0);
const UP: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

fn faces(list: &FaceList) -> Vec<(f64, f64)> {
    list.iter().map(|f| (f[0], f[1])).collect()
}

fn face_normal(angle_deg: f64) -> Vector3<f64> {
    let a = angle_deg.to_radians();
    UP * a.cos() - TRAVEL * a.sin()
}

fn face_direction(angle_deg: f64) -> Vector3<f64> {
    let a = angle_deg.to_radians();
    TRAVEL * a.cos() + UP * a.sin()
}

fn contact_law(cfg: &ScenarioConfig) -> ContactLaw {
    cfg.contact.law()
}

/// Settle-stability layout: a flat face across the push direction, one
/// standoff away from the probe.
#[derive(Debug, Clone)]
pub struct SsGeometry {
    pub push: Vector3<f64>,
    /// Probe centre when just touching.
    pub touch: Vector3<f64>,
    /// Probe centre at rest under the step force; the compliance spring is
    /// relaxed there.
    pub target: Vector3<f64>,
    pub artefact: Artefact,
}

pub fn ss_geometry(ss: &SsTargets, home: &Pose<f64>, cfg: &ScenarioConfig) -> SsGeometry {
    let push = ss.axis.push_direction();
    let touch = home.position + push * ss.standoff;
    let face = touch + push * cfg.contact.probe_radius;
    SsGeometry {
        push,
        touch,
        target: touch + push * (ss.step_force / cfg.contact.stiffness),
        artefact: Artefact::flat("S", face, -push, 0.05, contact_law(cfg)),
    }
}

/// Obstruction-stability layout along the straight segment AB.
#[derive(Debug, Clone)]
pub struct OsGeometry {
    pub a: Vector3<f64>,
    /// Arc length of C, D and B from A along travel.
    pub c: f64,
    pub d: f64,
    pub b: f64,
    pub artefact: Artefact,
}

pub fn os_geometry(os: &OsTargets, home: &Pose<f64>, cfg: &ScenarioConfig) -> OsGeometry {
    let a = home.position;
    let rise: f64 = os
        .faces
        .iter()
        .scan(0.0, |h, f| {
            *h += f[1] * f[0].to_radians().tan();
            Some(*h)
        })
        .fold(0.0, f64::max);
    let run: f64 = os.faces.iter().map(|f| f[1]).sum();
    // The path runs `interference` below the highest face.
    let base = a + TRAVEL * os.approach + UP * (os.interference - cfg.contact.probe_radius - rise);
    OsGeometry {
        a,
        c: os.approach,
        d: os.approach + run,
        b: os.approach + run + os.overrun,
        artefact: Artefact::profile(base, TRAVEL, UP, &faces(&os.faces), os.width, contact_law(cfg)),
    }
}

/// Disturbance-handling layout: the probe-centre path offset from the faces
/// by the probe radius, from A on the first face to B on the last.
#[derive(Debug, Clone)]
pub struct DhGeometry {
    pub vertices: Vec<Vector3<f64>>,
    /// Outward normal of the face under each path segment.
    pub normals: Vec<Vector3<f64>>,
    pub artefact: Artefact,
}

fn dh_layout(dh: &DhTargets, start: Vector3<f64>, radius: f64) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
    let normals: Vec<_> = dh.faces.iter().map(|f| face_normal(f[0])).collect();
    let mut edges = vec![start];
    for f in &dh.faces {
        let last = *edges.last().unwrap();
        edges.push(last + face_direction(f[0]) * (f[1] / f[0].to_radians().cos()));
    }
    let first = face_direction(dh.faces[0][0]);
    let last = face_direction(dh.faces[dh.faces.len() - 1][0]);
    let mut vertices = vec![edges[0] + first * dh.margin + normals[0] * radius];
    for i in 1..dh.faces.len() {
        let (na, nb) = (normals[i - 1], normals[i]);
        vertices.push(edges[i] + (na + nb) * (radius / (1.0 + na.dot(&nb))));
    }
    vertices.push(edges[dh.faces.len()] - last * dh.margin + normals[normals.len() - 1] * radius);
    (vertices, normals)
}

/// Length of the probe-centre path from A to B.
pub fn dh_path_length(dh: &DhTargets) -> f64 {
    if dh.faces.is_empty() {
        return 0.0;
    }
    let (v, _) = dh_layout(dh, Vector3::zeros(), 0.005);
    let len: f64 = v.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    // Margins longer than the faces fold the path back on itself.
    let span = (v[v.len() - 1] - v[0]).dot(&TRAVEL);
    if span <= 0.0 {
        0.0
    } else {
        len
    }
}

pub fn dh_geometry(dh: &DhTargets, home: &Pose<f64>, cfg: &ScenarioConfig) -> DhGeometry {
    let r = cfg.contact.probe_radius;
    let (touch, normals) = dh_layout(dh, Vector3::zeros(), r);
    // The path runs at the loaded depth, where the spring is relaxed under
    // the nominal force.
    let depth = dh.nominal_force / cfg.contact.stiffness;
    let (v0, _) = dh_layout(dh, Vector3::zeros(), r - depth);
    // Shift so that the probe starts `standoff` off A along the P1 normal.
    let shift = home.position - normals[0] * dh.standoff - touch[0];
    let vertices = v0.iter().map(|v| v + shift).collect();
    DhGeometry {
        vertices,
        normals,
        artefact: Artefact::profile(shift, TRAVEL, UP, &faces(&dh.faces), dh.width, contact_law(cfg)),
    }
}

impl DhGeometry {
    pub fn length(&self) -> f64 {
        self.vertices.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Point at arc length `s` and the index of its segment.
    pub fn at(&self, s: f64) -> (Vector3<f64>, usize) {
        let mut rest = s.max(0.0);
        for (i, w) in self.vertices.windows(2).enumerate() {
            let seg = (w[1] - w[0]).norm();
            if rest <= seg {
                return (w[0] + (w[1] - w[0]) * (rest / seg), i);
            }
            rest -= seg;
        }
        let n = self.vertices.len();
        (self.vertices[n - 1], n - 2)
    }
}

/// Raised-cosine hand position along the stroke, and its rate.
fn hand(cw: &CwTargets, period: f64, t: f64) -> (f64, f64) {
    if t >= period * f64::from(cw.cycles) {
        return (0.0, 0.0);
    }
    let w = std::f64::consts::TAU / period;
    (cw.stroke * 0.5 * (1.0 - (w * t).cos()), cw.stroke * 0.5 * w * (w * t).sin())
}

pub fn cw_period(cw: &CwTargets, trial: usize) -> f64 {
    cw.period * (1.0 + cw.period_spread * trial as f64)
}

fn trial_error(cfg: &ScenarioConfig, trial: usize, e: Error) -> Error {
    Error::Trial {
        scenario: cfg.id.clone(),
        trial,
        source: Box::new(e),
    }
}

/// Simulates one trial of any experiment.
pub fn simulate_trial(cfg: &ScenarioConfig, ctx: &SimContext, trial: usize) -> Result<TimeSeriesTrace> {
    let home = ctx.home_pose()?;
    let hold = ControlTargets::hold(home);
    let run = match &cfg.targets {
        ExperimentTargets::Cw(cw) => {
            let period = cw_period(cw, trial);
            let (kh, bh) = (cw.hand_stiffness, cw.hand_damping);
            run_closed_loop(cfg, ctx, trial, Artefact::empty(), |t, s| {
                let (x, v) = hand(cw, period, t);
                let p = s.tip_pose.position;
                let pdot = s.tip_twist.fixed_rows::<3>(0).into_owned();
                let grip = (home.position + TRAVEL * x - p) * kh + (TRAVEL * v - pdot) * bh;
                ScriptStep {
                    targets: hold,
                    operator: Wrench::from_force(grip),
                }
            })
        }
        ExperimentTargets::Os(os) => {
            let g = os_geometry(os, &home, cfg);
            run_closed_loop(cfg, ctx, trial, g.artefact.clone(), |t, _| {
                let s = ((os.speed * t / os.waypoint_spacing).floor() * os.waypoint_spacing).min(g.b);
                ScriptStep {
                    targets: ControlTargets::hold(home.translated(TRAVEL * s)),
                    operator: Wrench::zero(),
                }
            })
        }
        ExperimentTargets::Ss(ss) => {
            let g = ss_geometry(ss, &home, cfg);
            let mut goal = home;
            goal.position = g.target;
            let targets = ControlTargets::hold(goal).with_wrench(Wrench::from_force(g.push * ss.step_force));
            run_closed_loop(cfg, ctx, trial, g.artefact.clone(), |_, _| ScriptStep {
                targets,
                operator: Wrench::zero(),
            })
        }
        ExperimentTargets::Dh(dh) => {
            let g = dh_geometry(dh, &home, cfg);
            let len = g.length();
            run_closed_loop(cfg, ctx, trial, g.artefact.clone(), |t, _| {
                let s = (dh.speed * (t - dh.settle_time)).clamp(0.0, len);
                let (x, seg) = g.at(s);
                let mut goal = home;
                goal.position = x;
                ScriptStep {
                    targets: ControlTargets::hold(goal).with_wrench(Wrench::from_force(-g.normals[seg] * dh.nominal_force)),
                    operator: Wrench::zero(),
                }
            })
        }
    };
    run.map_err(|e| trial_error(cfg, trial, e))
}

fn metric<T>(r: std::result::Result<T, MetricError>, diagnostics: &mut Vec<String>) -> Option<T> {
    r.map_err(|e| diagnostics.push(e.to_string())).ok()
}

/// Metrics of one trial; a pure function of the trace and the configuration.
pub fn evaluate_trial(cfg: &ScenarioConfig, ctx: &SimContext, trial: usize, trace: &TimeSeriesTrace) -> Result<TrialMetrics> {
    let home = ctx.home_pose()?;
    let times = trace.times();
    let mut m = TrialMetrics::default();
    for (t, msg) in &trace.faults {
        m.diagnostics.push(format!("controller fault at t = {t} s: {msg}"));
    }
    match &cfg.targets {
        ExperimentTargets::Cw(_) => {
            let forces: Vec<_> = trace.rows.iter().map(|r| -r.wrench_true.force).collect();
            let positions: Vec<_> = trace.rows.iter().map(|r| r.tip_position).collect();
            m.cumulative_work = metric(cumulative_work(&forces, &positions), &mut m.diagnostics);
            m.peak_force = forces.iter().map(|f| f.norm()).reduce(f64::max);
        }
        ExperimentTargets::Ss(ss) => {
            let g = ss_geometry(ss, &home, cfg);
            let f = trace.measured_along(&g.push);
            match step_metrics(&times, &f, ss.step_force, &cfg.metrics) {
                Ok((o, s, e)) => {
                    m.overshoot = Some(o);
                    m.settling_time = Some(s);
                    m.steady_state_error = Some(e);
                }
                Err(MetricError::NoOnset { .. }) if ss.step_force == 0.0 => {}
                Err(e) => m.diagnostics.push(e.to_string()),
            }
            m.peak_force = f.iter().copied().reduce(f64::max);
        }
        ExperimentTargets::Os(os) => {
            let g = os_geometry(os, &home, cfg);
            let s: Vec<f64> = trace.rows.iter().map(|r| (r.tip_position - g.a).dot(&TRAVEL)).collect();
            let cross = |mark: f64| s.iter().position(|x| *x >= mark);
            match (cross(g.c), cross(g.d)) {
                (Some(ic), Some(id)) => m.time_to_goal = Some(times[id] - times[ic]),
                _ => m.diagnostics.push(format!("timeout: probe did not pass D within {} s", cfg.duration)),
            }
            let window: Vec<usize> = (0..s.len()).filter(|&i| s[i] >= g.c && s[i] <= g.d).collect();
            let touching: Vec<bool> = window.iter().map(|&i| trace.rows[i].wrench_true.force.norm() > 0.0).collect();
            m.contact_losses = Some(count_losses(&touching));
            let mags: Vec<f64> = trace.rows.iter().map(|r| r.wrench_meas.force.norm()).collect();
            m.peak_force = mags.iter().copied().reduce(f64::max);
            if window.len() > 1 {
                let (a, b) = (window[0], window[window.len() - 1] + 1);
                m.max_force_rate = Some(max_rate(&times[a..b], &mags[a..b]));
            }
        }
        ExperimentTargets::Dh(dh) => {
            let g = dh_geometry(dh, &home, cfg);
            let t_end = dh.settle_time + g.length() / dh.speed;
            let (mut total, mut ctrl, mut touching) = (Vec::new(), Vec::new(), Vec::new());
            for (i, r) in trace.rows.iter().enumerate() {
                if times[i] < dh.settle_time || times[i] > t_end {
                    continue;
                }
                let in_contact = r.wrench_true.force.norm() > 0.0;
                touching.push(in_contact);
                if !in_contact {
                    continue;
                }
                let n = match g.artefact.nearest_surface(&r.tip_position) {
                    Some(face) => face.plane_normal,
                    None => continue,
                };
                total.push(dh.nominal_force + r.wrench_meas.force.dot(&n));
                ctrl.push(dh.nominal_force + r.wrench_true.force.dot(&n));
            }
            let losses = count_losses(&touching) + u32::from(touching.last() == Some(&false));
            if losses > 0 {
                m.diagnostics.push(format!("contact lost {losses} time(s) during the traverse"));
            }
            m.contact_losses = Some(losses);
            if total.is_empty() {
                m.diagnostics.push("no contact during the traverse".into());
            } else {
                m.total_rmse = Some(rmse(total));
                m.controller_rmse = Some(rmse(ctrl));
            }
        }
    }
    let _ = trial;
    Ok(m)
}

/// Separations that are followed by renewed contact.
fn count_losses(touching: &[bool]) -> u32 {
    let mut losses = 0;
    let mut seen = false;
    let mut open = false;
    for &c in touching {
        if c {
            if open {
                losses += 1;
                open = false;
            }
            seen = true;
        } else if seen {
            open = true;
        }
    }
    losses
}

/// Runs every trial (in parallel) and aggregates the report.
pub fn run_scenario(cfg: &ScenarioConfig, ctx: &SimContext) -> Result<ScenarioOutcome> {
    cfg.validate()?;
    let traces = (0..cfg.trials)
        .into_par_iter()
        .map(|k| simulate_trial(cfg, ctx, k))
        .collect::<Result<Vec<_>>>()?;
    let report = report_from_traces(cfg, ctx, &traces)?;
    Ok(ScenarioOutcome { traces, report })
}

/// Rebuilds the report from (possibly re-read) traces.
pub fn report_from_traces(cfg: &ScenarioConfig, ctx: &SimContext, traces: &[TimeSeriesTrace]) -> Result<MetricsReport> {
    let per_trial = traces
        .iter()
        .enumerate()
        .map(|(k, t)| evaluate_trial(cfg, ctx, k, t))
        .collect::<Result<Vec<_>>>()?;
    let (full, cmp) = crate::config::scenario_hashes(cfg, ctx);
    Ok(MetricsReport::aggregate(&cfg.id, cfg.experiment(), cfg.mode, full, cmp, per_trial))
}

fn expect(cfg: &ScenarioConfig, want: super::Experiment) -> Result<()> {
    if cfg.experiment() == want {
        Ok(())
    } else {
        Err(Error::param(
            "experiment",
            format!("expected {}, got {}", want.label(), cfg.experiment().label()),
        ))
    }
}

pub fn run_cumulative_work(cfg: &ScenarioConfig, ctx: &SimContext) -> Result<ScenarioOutcome> {
    expect(cfg, super::Experiment::Cw)?;
    run_scenario(cfg, ctx)
}

pub fn run_obstruction_stability(cfg: &ScenarioConfig, ctx: &SimContext) -> Result<ScenarioOutcome> {
    expect(cfg, super::Experiment::Os)?;
    run_scenario(cfg, ctx)
}

pub fn run_settle_stability(cfg: &ScenarioConfig, ctx: &SimContext) -> Result<ScenarioOutcome> {
    expect(cfg, super::Experiment::Ss)?;
    run_scenario(cfg, ctx)
}

pub fn run_disturbance_handling(cfg: &ScenarioConfig, ctx: &SimContext) -> Result<ScenarioOutcome> {
    expect(cfg, super::Experiment::Dh)?;
    run_scenario(cfg, ctx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn losses_need_recontact() {
        assert_eq!(count_losses(&[false, true, true, false, false]), 0);
        assert_eq!(count_losses(&[true, false, true, false, true]), 2);
        assert_eq!(count_losses(&[]), 0);
    }

    #[test]
    fn dh_path_hugs_the_faces() {
        let dh = DhTargets::default();
        let (v, n) = dh_layout(&dh, Vector3::zeros(), 0.005);
        assert_eq!(v.len(), 4);
        // Every interior vertex is one radius off both adjacent faces.
        let edges_p2 = Vector3::new(0.02, 0.0, 0.02 * 30f64.to_radians().tan());
        assert!(((v[1] - edges_p2).dot(&n[0]) - 0.005).abs() < 1e-12);
        assert!(((v[1] - edges_p2).dot(&n[1]) - 0.005).abs() < 1e-12);
        assert!(dh_path_length(&dh) > 0.05);
    }

    #[test]
    fn hand_returns_to_marker_a() {
        let cw = CwTargets::default();
        let (x, v) = hand(&cw, cw.period, cw.period);
        assert!(x.abs() < 1e-12 && v.abs() < 1e-12);
        assert!((hand(&cw, cw.period, cw.period / 2.0).0 - cw.stroke).abs() < 1e-12);
    }
}

//! Force-control metrics. Everything here is a pure function of logged
//! samples, so recomputing from a CSV trace gives the same bits.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Experiment, MetricSettings};
use crate::controller::ControlMode;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("trace is empty")]
    Empty,
    #[error("force and time series differ in length ({times} vs {values})")]
    Length { times: usize, values: usize },
    #[error("no contact onset above {threshold} N")]
    NoOnset { threshold: f64 },
    #[error("force never settles; last value {last} N")]
    NeverSettles { last: f64 },
}

/// Landmarks of a force step response, as sample indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResponse {
    /// First sample above the onset threshold.
    pub onset: usize,
    /// First sample of the positive run that leads to the onset.
    pub impact: usize,
    /// First sample after which the force stays inside the band.
    pub settle: usize,
    /// First sample of the steady-state window.
    pub steady_start: usize,
    /// Mean force over the tail of the response.
    pub final_value: f64,
}

fn check(times: &[f64], force: &[f64]) -> Result<(), MetricError> {
    if times.len() != force.len() {
        return Err(MetricError::Length {
            times: times.len(),
            values: force.len(),
        });
    }
    if force.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Index of the first sample in the last `fraction` of `lo..hi`.
fn tail_start(lo: usize, hi: usize, fraction: f64) -> usize {
    let n = hi - lo;
    let take = ((n as f64 * fraction).ceil() as usize).clamp(1, n);
    hi - take
}

/// Finds onset, impact, settling and steady-state window of a step response
/// in `force` (already projected on the push direction).
pub fn analyze_step(times: &[f64], force: &[f64], s: &MetricSettings) -> Result<StepResponse, MetricError> {
    check(times, force)?;
    let onset = force
        .iter()
        .position(|f| *f > s.onset_threshold)
        .ok_or(MetricError::NoOnset {
            threshold: s.onset_threshold,
        })?;
    let impact = force[..onset].iter().rposition(|f| *f <= 0.0).map_or(0, |i| i + 1);
    let n = force.len();
    let final_value = mean(&force[tail_start(impact, n, s.steady_fraction)..]);
    let band = s.settle_band * final_value.abs();
    let settle = match force[impact..].iter().rposition(|f| (f - final_value).abs() > band) {
        Some(i) => impact + i + 1,
        None => impact,
    };
    let last = force[n - 1];
    if settle >= n || times[n - 1] - times[settle] < s.settle_dwell {
        return Err(MetricError::NeverSettles { last });
    }
    Ok(StepResponse {
        onset,
        impact,
        settle,
        steady_start: tail_start(settle, n, s.steady_fraction),
        final_value,
    })
}

/// Peak force between onset and the steady-state window above the final
/// value, floored at zero.
pub fn compute_overshoot(times: &[f64], force: &[f64], s: &MetricSettings) -> Result<f64, MetricError> {
    let r = analyze_step(times, force, s)?;
    Ok(overshoot_of(force, &r))
}

fn overshoot_of(force: &[f64], r: &StepResponse) -> f64 {
    let peak = force[r.onset..r.steady_start.max(r.onset + 1)]
        .iter()
        .fold(f64::NEG_INFINITY, |m, f| m.max(*f));
    (peak - r.final_value).max(0.0)
}

/// Time from impact until the force stays within the band.
pub fn compute_settling_time(times: &[f64], force: &[f64], s: &MetricSettings) -> Result<f64, MetricError> {
    let r = analyze_step(times, force, s)?;
    Ok(times[r.settle] - times[r.impact])
}

/// RMSE of `f_target − force` over the steady-state window.
pub fn compute_sse(times: &[f64], force: &[f64], f_target: f64, s: &MetricSettings) -> Result<f64, MetricError> {
    let r = analyze_step(times, force, s)?;
    Ok(sse_of(force, f_target, &r))
}

fn sse_of(force: &[f64], f_target: f64, r: &StepResponse) -> f64 {
    rmse(force[r.steady_start..].iter().map(|f| f_target - f))
}

/// Overshoot, settling time and steady-state error from one analysis.
pub fn step_metrics(
    times: &[f64],
    force: &[f64],
    f_target: f64,
    s: &MetricSettings,
) -> Result<(f64, f64, f64), MetricError> {
    let r = analyze_step(times, force, s)?;
    Ok((
        overshoot_of(force, &r),
        times[r.settle] - times[r.impact],
        sse_of(force, f_target, &r),
    ))
}

pub fn rmse(errors: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = errors.into_iter().fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Σ |F̄_k · Δx_k| with F̄_k the mean of the forces at both ends of the step.
pub fn cumulative_work(forces: &[Vector3<f64>], positions: &[Vector3<f64>]) -> Result<f64, MetricError> {
    if forces.len() != positions.len() {
        return Err(MetricError::Length {
            times: positions.len(),
            values: forces.len(),
        });
    }
    if forces.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(forces
        .windows(2)
        .zip(positions.windows(2))
        .map(|(f, x)| ((f[0] + f[1]) * 0.5).dot(&(x[1] - x[0])).abs())
        .sum())
}

/// Largest |ΔF/Δt| between consecutive samples.
pub fn max_rate(times: &[f64], force: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(force.windows(2))
        .map(|(t, f)| ((f[1] - f[0]) / (t[1] - t[0])).abs())
        .fold(0.0, f64::max)
}

/// Mean and sample standard deviation over trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        // Deviations from the first value keep identical trials exact.
        let v0 = values[0];
        let m = v0 + values.iter().map(|v| v - v0).sum::<f64>() / values.len() as f64;
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
        };
        Some(Stat {
            mean: m,
            sd,
            n: values.len(),
        })
    }
}

/// Metrics of one trial; fields not relevant to the experiment stay empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialMetrics {
    pub overshoot: Option<f64>,
    pub settling_time: Option<f64>,
    pub steady_state_error: Option<f64>,
    pub total_rmse: Option<f64>,
    pub controller_rmse: Option<f64>,
    pub cumulative_work: Option<f64>,
    pub time_to_goal: Option<f64>,
    pub peak_force: Option<f64>,
    pub contact_losses: Option<u32>,
    pub max_force_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub id: String,
    pub experiment: Experiment,
    pub mode: ControlMode,
    pub trials: usize,
    /// Hash of every parameter of the scenario.
    pub config_hash: String,
    /// Hash of every parameter except the scenario id and the interface mode.
    pub comparison_hash: String,
    pub overshoot: Option<Stat>,
    pub settling_time: Option<Stat>,
    pub steady_state_error: Option<Stat>,
    pub total_rmse: Option<Stat>,
    pub controller_rmse: Option<Stat>,
    pub cumulative_work: Option<Stat>,
    pub time_to_goal: Option<Stat>,
    pub peak_force: Option<Stat>,
    pub contact_losses: Option<Stat>,
    pub max_force_rate: Option<Stat>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_trial: Vec<TrialMetrics>,
}

impl MetricsReport {
    pub fn aggregate(
        id: &str,
        experiment: Experiment,
        mode: ControlMode,
        config_hash: String,
        comparison_hash: String,
        per_trial: Vec<TrialMetrics>,
    ) -> Self {
        fn stat(trials: &[TrialMetrics], get: impl Fn(&TrialMetrics) -> Option<f64>) -> Option<Stat> {
            Stat::of(&trials.iter().filter_map(get).collect::<Vec<_>>())
        }
        let t = &per_trial;
        MetricsReport {
            id: id.to_string(),
            experiment,
            mode,
            trials: per_trial.len(),
            config_hash,
            comparison_hash,
            overshoot: stat(t, |m| m.overshoot),
            settling_time: stat(t, |m| m.settling_time),
            steady_state_error: stat(t, |m| m.steady_state_error),
            total_rmse: stat(t, |m| m.total_rmse),
            controller_rmse: stat(t, |m| m.controller_rmse),
            cumulative_work: stat(t, |m| m.cumulative_work),
            time_to_goal: stat(t, |m| m.time_to_goal),
            peak_force: stat(t, |m| m.peak_force),
            contact_losses: stat(t, |m| m.contact_losses.map(f64::from)),
            max_force_rate: stat(t, |m| m.max_force_rate),
            per_trial,
        }
    }

    /// `(name, stat)` for every populated metric, in table order.
    pub fn populated(&self) -> Vec<(&'static str, Stat)> {
        [
            ("overshoot", self.overshoot),
            ("settling_time", self.settling_time),
            ("steady_state_error", self.steady_state_error),
            ("total_rmse", self.total_rmse),
            ("controller_rmse", self.controller_rmse),
            ("cumulative_work", self.cumulative_work),
            ("time_to_goal", self.time_to_goal),
            ("peak_force", self.peak_force),
            ("contact_losses", self.contact_losses),
            ("max_force_rate", self.max_force_rate),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|s| (k, s)))
        .collect()
    }

    pub fn diagnostics(&self) -> impl Iterator<Item = &str> {
        self.per_trial.iter().flat_map(|t| t.diagnostics.iter().map(String::as_str))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> MetricSettings {
        MetricSettings::default()
    }

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn perfect_step_settles_at_once() {
        let t = grid(1000, 0.01);
        let f: Vec<f64> = t.iter().map(|&x| if x > 0.0 { 10.0 } else { 0.0 }).collect();
        assert_eq!(compute_settling_time(&t, &f, &settings()).unwrap(), 0.0);
        assert_eq!(compute_overshoot(&t, &f, &settings()).unwrap(), 0.0);
        assert_eq!(compute_sse(&t, &f, 10.0, &settings()).unwrap(), 0.0);
    }

    #[test]
    fn no_contact_is_reported() {
        let t = grid(10, 0.1);
        let f = vec![0.1; 10];
        assert!(matches!(analyze_step(&t, &f, &settings()), Err(MetricError::NoOnset { .. })));
    }

    #[test]
    fn ramp_without_end_never_settles() {
        let t = grid(100, 0.1);
        let f: Vec<f64> = t.iter().map(|x| x * 10.0).collect();
        assert_eq!(
            analyze_step(&t, &f, &settings()),
            Err(MetricError::NeverSettles { last: f[99] })
        );
    }

    #[test]
    fn constant_offset_sse() {
        let t = grid(500, 0.01);
        let f: Vec<f64> = t.iter().map(|&x| if x > 0.0 { 11.0 } else { 0.0 }).collect();
        assert!((compute_sse(&t, &f, 10.0, &settings()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn work_of_orthogonal_force_is_zero() {
        let f = vec![Vector3::new(0.0, 5.0, 0.0); 11];
        let x: Vec<_> = (0..11).map(|k| Vector3::new(k as f64 * 0.01, 0.0, 0.0)).collect();
        assert_eq!(cumulative_work(&f, &x).unwrap(), 0.0);
        assert_eq!(cumulative_work(&[], &[]), Err(MetricError::Empty));
    }

    #[test]
    fn stat_of_single_value_has_zero_sd() {
        let s = Stat::of(&[3.0]).unwrap();
        assert_eq!((s.mean, s.sd, s.n), (3.0, 0.0, 1));
        assert!(Stat::of(&[]).is_none());
        let s = Stat::of(&[1.0, 3.0]).unwrap();
        assert!((s.sd - 2f64.sqrt()).abs() < 1e-15);
    }
}

//! Benchmark scenarios: cumulative work (CW), obstruction stability (OS),
//! settle stability (SS) and disturbance handling (DH), each run in closed
//! loop against the simulated robot under either interface.

pub mod metrics;
pub mod scenarios;
pub mod trace;

use nalgebra::{DVector, Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::config::{reference_chain, reference_home};
use crate::controller::{ComplianceParams, ControlMode, ControlTargets, FdccController, Wrench};
use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, KinematicChain, Pose};
use crate::plant::{Artefact, ContactLaw, Plant, PlantState, Sensor, SensorModel, ServoModel};
use crate::virtual_dynamics::{InertiaOverrides, VirtualModel};

pub use metrics::{MetricsReport, Stat};
pub use scenarios::{
    run_cumulative_work, run_disturbance_handling, run_obstruction_stability, run_scenario, run_settle_stability,
};
pub use trace::{TimeSeriesTrace, TraceRow};

/// Experiment family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Cw,
    Os,
    Ss,
    Dh,
}

impl Experiment {
    pub fn label(&self) -> &'static str {
        match self {
            Experiment::Cw => "cw",
            Experiment::Os => "os",
            Experiment::Ss => "ss",
            Experiment::Dh => "dh",
        }
    }
}

/// Regulator and stiffness settings, `[x y z Rx Ry Rz]` where six entries appear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplianceSettings {
    pub stiffness_trans: [f64; 3],
    pub stiffness_rot: [f64; 3],
    pub p_gains: [f64; 6],
    pub d_gains: [f64; 6],
    pub cartesian_damping: [f64; 6],
}

impl ComplianceSettings {
    /// The compliance parameter table: CW uses softer, faster gains; OS, DH
    /// and SS share one regulator tuning, with OS keeping the CW stiffness.
    pub fn paper(experiment: Experiment) -> Self {
        let (k, p, d) = match experiment {
            Experiment::Cw => ([250.0, 250.0, 100.0], [0.02, 0.3], [0.0002, 0.002]),
            Experiment::Os => ([250.0, 250.0, 100.0], [0.0025, 0.035], [0.000025, 0.00025]),
            Experiment::Dh | Experiment::Ss => ([1500.0; 3], [0.0025, 0.035], [0.000025, 0.00025]),
        };
        let split = |g: [f64; 2]| [g[0], g[0], g[0], g[1], g[1], g[1]];
        ComplianceSettings {
            stiffness_trans: k,
            stiffness_rot: [200.0; 3],
            p_gains: split(p),
            d_gains: split(d),
            cartesian_damping: [0.0; 6],
        }
    }

    pub fn params(&self) -> ComplianceParams<f64> {
        ComplianceParams {
            stiffness_trans: Vector3::from(self.stiffness_trans),
            stiffness_rot: Vector3::from(self.stiffness_rot),
            p_gains: Vector6::from(self.p_gains),
            d_gains: Vector6::from(self.d_gains),
            cartesian_damping: Vector6::from(self.cartesian_damping),
        }
    }
}

/// Mass properties and velocity damping of the virtual model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirtualSettings {
    pub end_mass: f64,
    pub link_mass: f64,
    /// Diagonal of I_e (kg·m²).
    pub end_inertia: [f64; 3],
    /// Diagonal of I_l (kg·m²).
    pub link_inertia: [f64; 3],
    /// Decay rate of the carried virtual joint velocity (1/s).
    pub joint_damping: f64,
}

impl Default for VirtualSettings {
    fn default() -> Self {
        VirtualSettings {
            end_mass: 1.0,
            link_mass: 0.01,
            end_inertia: [1.0; 3],
            link_inertia: [1e-6; 3],
            joint_damping: 20.0,
        }
    }
}

impl VirtualSettings {
    pub fn overrides(&self) -> InertiaOverrides<f64> {
        InertiaOverrides {
            end_mass: self.end_mass,
            link_mass: self.link_mass,
            end_inertia: Matrix3::from_diagonal(&Vector3::from(self.end_inertia)),
            link_inertia: Matrix3::from_diagonal(&Vector3::from(self.link_inertia)),
        }
    }

    pub fn model(&self, chain: KinematicChain<f64>) -> Result<VirtualModel<f64>> {
        VirtualModel::new(chain, self.overrides())?.with_joint_damping(self.joint_damping)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServoSettings {
    /// rad/s.
    pub velocity_bandwidth: f64,
    /// rad/s.
    pub position_frequency: f64,
    pub position_damping_ratio: f64,
    pub velocity_limit: f64,
    pub acceleration_limit: f64,
}

impl Default for ServoSettings {
    fn default() -> Self {
        let s = ServoModel::new(ControlMode::Velocity);
        ServoSettings {
            velocity_bandwidth: s.velocity_bandwidth,
            position_frequency: s.position_frequency(),
            position_damping_ratio: s.position_damping_ratio(),
            velocity_limit: s.velocity_limit,
            acceleration_limit: s.acceleration_limit,
        }
    }
}

impl ServoSettings {
    pub fn model(&self, mode: ControlMode) -> ServoModel {
        ServoModel {
            velocity_bandwidth: self.velocity_bandwidth,
            velocity_limit: self.velocity_limit,
            acceleration_limit: self.acceleration_limit,
            ..ServoModel::new(mode)
        }
        .with_position_loop(self.position_frequency, self.position_damping_ratio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSettings {
    /// N, per axis.
    pub noise_force: f64,
    /// N·m, per axis.
    pub noise_torque: f64,
    /// `[fx fy fz tx ty tz]`.
    pub bias: [f64; 6],
    /// Hz.
    pub sample_rate: f64,
}

impl Default for SensorSettings {
    fn default() -> Self {
        SensorSettings {
            noise_force: 0.02,
            noise_torque: 0.002,
            bias: [0.0; 6],
            sample_rate: 500.0,
        }
    }
}

impl SensorSettings {
    pub fn ideal() -> Self {
        SensorSettings {
            noise_force: 0.0,
            noise_torque: 0.0,
            ..SensorSettings::default()
        }
    }

    pub fn model(&self, seed: u64) -> SensorModel {
        SensorModel {
            noise_force: self.noise_force,
            noise_torque: self.noise_torque,
            bias: Wrench::from_vector(&Vector6::from(self.bias)),
            sample_rate: self.sample_rate,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactSettings {
    /// N/m.
    pub stiffness: f64,
    /// N·s/m.
    pub damping: f64,
    pub friction: f64,
    /// m.
    pub probe_radius: f64,
}

impl Default for ContactSettings {
    fn default() -> Self {
        let law = ContactLaw::default();
        ContactSettings {
            stiffness: law.stiffness,
            damping: law.damping,
            friction: law.friction,
            probe_radius: Plant::DEFAULT_PROBE_RADIUS,
        }
    }
}

impl ContactSettings {
    pub fn law(&self) -> ContactLaw {
        ContactLaw {
            stiffness: self.stiffness,
            damping: self.damping,
            friction: self.friction,
        }
    }
}

/// Thresholds used by the force-response metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSettings {
    /// Half-width of the settling band as a fraction of the final value.
    pub settle_band: f64,
    /// Time the force must stay inside the band (s).
    pub settle_dwell: f64,
    /// Measured force that marks contact onset (N).
    pub onset_threshold: f64,
    /// Fraction of the post-settling trace used as steady state.
    pub steady_fraction: f64,
}

impl Default for MetricSettings {
    fn default() -> Self {
        MetricSettings {
            settle_band: 0.05,
            settle_dwell: 1.0,
            onset_threshold: 0.5,
            steady_fraction: 0.25,
        }
    }
}

/// Direction of the settle-stability step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
    Xy,
}

impl Axis {
    /// Unit push direction in the base frame; `z` pushes downwards.
    pub fn push_direction(&self) -> Vector3<f64> {
        match self {
            Axis::X => Vector3::x(),
            Axis::Y => Vector3::y(),
            Axis::Z => -Vector3::z(),
            Axis::Xy => Vector3::new(1.0, 1.0, 0.0).normalize(),
        }
    }
}

/// Scripted operator for CW: the hand follows raised-cosine strokes between
/// markers A and B and drags the probe through a spring-damper grip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CwTargets {
    /// Distance between markers A and B (m).
    pub stroke: f64,
    /// Duration of one back-and-forth cycle (s).
    pub period: f64,
    pub cycles: u32,
    /// Grip stiffness (N/m).
    pub hand_stiffness: f64,
    /// Grip damping (N·s/m).
    pub hand_damping: f64,
    /// Relative period increase per trial, so trials differ like operators do.
    pub period_spread: f64,
}

impl Default for CwTargets {
    fn default() -> Self {
        CwTargets {
            stroke: 0.1,
            period: 8.0,
            cycles: 4,
            hand_stiffness: 1500.0,
            hand_damping: 40.0,
            period_spread: 0.15,
        }
    }
}

/// Profile of connected faces: `(angle_deg, run_m)` per face.
pub type FaceList = Vec<[f64; 2]>;

fn default_faces(run: f64) -> FaceList {
    vec![[30.0, run], [0.0, run], [-30.0, run]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OsTargets {
    /// Waypoint progression speed (m/s).
    pub speed: f64,
    pub waypoint_spacing: f64,
    /// Distance from A to marker C at the foot of P1 (m).
    pub approach: f64,
    /// Distance from marker D at the end of P3 to B (m).
    pub overrun: f64,
    /// How far the straight path AB runs below the top face (m).
    pub interference: f64,
    pub faces: FaceList,
    pub width: f64,
}

impl Default for OsTargets {
    fn default() -> Self {
        OsTargets {
            speed: 0.005,
            waypoint_spacing: 0.001,
            approach: 0.02,
            overrun: 0.02,
            interference: 0.01,
            faces: default_faces(0.04),
            width: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsTargets {
    pub axis: Axis,
    /// N.
    pub step_force: f64,
    /// Initial gap between probe and surface (m).
    pub standoff: f64,
}

impl Default for SsTargets {
    fn default() -> Self {
        SsTargets {
            axis: Axis::Z,
            step_force: 10.0,
            standoff: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhTargets {
    /// Traverse speed along the profile (m/s).
    pub speed: f64,
    /// Desired force normal to the face (N).
    pub nominal_force: f64,
    pub faces: FaceList,
    pub width: f64,
    /// Initial gap to P1 (m).
    pub standoff: f64,
    /// Distance of A after the start of P1 and of B before the end of the last face (m).
    pub margin: f64,
    /// Time allowed to establish contact before the traverse starts (s).
    pub settle_time: f64,
    /// Time held at B after the traverse (s).
    pub hold_time: f64,
}

impl Default for DhTargets {
    fn default() -> Self {
        DhTargets {
            speed: 0.001,
            nominal_force: 10.0,
            faces: default_faces(0.02),
            width: 0.05,
            standoff: 0.002,
            margin: 0.004,
            settle_time: 8.0,
            hold_time: 2.0,
        }
    }
}

/// Experiment-specific set-points.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentTargets {
    Cw(CwTargets),
    Os(OsTargets),
    Ss(SsTargets),
    Dh(DhTargets),
}

impl ExperimentTargets {
    pub fn experiment(&self) -> Experiment {
        match self {
            ExperimentTargets::Cw(_) => Experiment::Cw,
            ExperimentTargets::Os(_) => Experiment::Os,
            ExperimentTargets::Ss(_) => Experiment::Ss,
            ExperimentTargets::Dh(_) => Experiment::Dh,
        }
    }

    pub fn default_for(experiment: Experiment) -> Self {
        match experiment {
            Experiment::Cw => ExperimentTargets::Cw(CwTargets::default()),
            Experiment::Os => ExperimentTargets::Os(OsTargets::default()),
            Experiment::Ss => ExperimentTargets::Ss(SsTargets::default()),
            Experiment::Dh => ExperimentTargets::Dh(DhTargets::default()),
        }
    }
}

/// One benchmark scenario under one interface mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub id: String,
    pub mode: ControlMode,
    pub trials: usize,
    /// Simulated time per trial (s).
    pub duration: f64,
    pub compliance: ComplianceSettings,
    pub virtual_model: VirtualSettings,
    pub servo: ServoSettings,
    pub sensor: SensorSettings,
    pub contact: ContactSettings,
    pub metrics: MetricSettings,
    /// Sensor seed increment between trials; 0 repeats the same noise stream.
    pub seed_stride: u64,
    pub targets: ExperimentTargets,
}

impl ScenarioConfig {
    /// Scenario with the parameter-table compliance and default plant settings.
    pub fn paper(id: impl Into<String>, mode: ControlMode, targets: ExperimentTargets) -> Self {
        let experiment = targets.experiment();
        let (trials, duration) = match &targets {
            ExperimentTargets::Cw(_) => (4, 0.0),
            ExperimentTargets::Os(_) => (1, 0.0),
            ExperimentTargets::Ss(_) => (3, 12.0),
            ExperimentTargets::Dh(_) => (1, 0.0),
        };
        let mut cfg = ScenarioConfig {
            id: id.into(),
            mode,
            trials,
            duration,
            compliance: ComplianceSettings::paper(experiment),
            virtual_model: VirtualSettings::default(),
            servo: ServoSettings::default(),
            sensor: SensorSettings::default(),
            contact: ContactSettings::default(),
            metrics: MetricSettings::default(),
            seed_stride: 1,
            targets,
        };
        cfg.duration = cfg.natural_duration();
        cfg
    }

    pub fn experiment(&self) -> Experiment {
        self.targets.experiment()
    }

    /// Long enough for the scripted motion plus settling time.
    pub fn natural_duration(&self) -> f64 {
        match &self.targets {
            ExperimentTargets::Cw(cw) => {
                let slowest = cw.period * (1.0 + cw.period_spread * (self.trials.max(1) - 1) as f64);
                slowest * f64::from(cw.cycles) + 4.0
            }
            ExperimentTargets::Os(os) => {
                let run: f64 = os.faces.iter().map(|f| f[1]).sum();
                (os.approach + run + os.overrun) / os.speed + 90.0
            }
            ExperimentTargets::Ss(_) => self.duration.max(12.0),
            ExperimentTargets::Dh(dh) => {
                let len = scenarios::dh_path_length(dh);
                dh.settle_time + len / dh.speed + dh.hold_time
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::param("id", "must not be empty"));
        }
        if self.trials == 0 {
            return Err(Error::param("trials", "must be at least 1"));
        }
        if self.seed_stride > i64::MAX as u64 {
            return Err(Error::param("seed_stride", "must not exceed 2^63 - 1"));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::param("duration", "must be positive"));
        }
        self.compliance.params().validate()?;
        self.virtual_model.overrides();
        if !(self.virtual_model.joint_damping >= 0.0) {
            return Err(Error::param("virtual_model.joint_damping", "must be non-negative"));
        }
        self.servo.model(self.mode).validate()?;
        self.sensor.model(0).validate()?;
        if !(self.contact.stiffness > 0.0) {
            return Err(Error::param("contact.stiffness", "must be positive"));
        }
        if !(self.contact.damping >= 0.0) || !(self.contact.friction >= 0.0) {
            return Err(Error::param("contact", "damping and friction must be non-negative"));
        }
        if !(self.contact.probe_radius > 0.0) {
            return Err(Error::param("contact.probe_radius", "must be positive"));
        }
        let m = &self.metrics;
        if !(m.settle_band > 0.0 && m.settle_band < 1.0) {
            return Err(Error::param("metrics.settle_band", "must be in (0, 1)"));
        }
        if !(m.settle_dwell >= 0.0) || !(m.onset_threshold > 0.0) {
            return Err(Error::param("metrics", "dwell must be non-negative and onset threshold positive"));
        }
        if !(m.steady_fraction > 0.0 && m.steady_fraction <= 1.0) {
            return Err(Error::param("metrics.steady_fraction", "must be in (0, 1]"));
        }
        match &self.targets {
            ExperimentTargets::Cw(cw) => {
                positive("cw.period", cw.period)?;
                non_negative("cw.stroke", cw.stroke)?;
                positive("cw.hand_stiffness", cw.hand_stiffness)?;
                non_negative("cw.hand_damping", cw.hand_damping)?;
                non_negative("cw.period_spread", cw.period_spread)?;
            }
            ExperimentTargets::Os(os) => {
                positive("os.speed", os.speed)?;
                positive("os.waypoint_spacing", os.waypoint_spacing)?;
                non_negative("os.approach", os.approach)?;
                non_negative("os.overrun", os.overrun)?;
                positive("os.interference", os.interference)?;
                positive("os.width", os.width)?;
                check_faces("os.faces", &os.faces)?;
            }
            ExperimentTargets::Ss(ss) => {
                non_negative("ss.step_force", ss.step_force)?;
                non_negative("ss.standoff", ss.standoff)?;
            }
            ExperimentTargets::Dh(dh) => {
                positive("dh.speed", dh.speed)?;
                non_negative("dh.nominal_force", dh.nominal_force)?;
                positive("dh.width", dh.width)?;
                non_negative("dh.standoff", dh.standoff)?;
                non_negative("dh.margin", dh.margin)?;
                non_negative("dh.settle_time", dh.settle_time)?;
                non_negative("dh.hold_time", dh.hold_time)?;
                check_faces("dh.faces", &dh.faces)?;
                if scenarios::dh_path_length(dh) <= 0.0 {
                    return Err(Error::param("dh.margin", "leaves no path between A and B"));
                }
            }
        }
        Ok(())
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(field, "must be positive"))
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(field, "must be non-negative"))
    }
}

fn check_faces(field: &str, faces: &FaceList) -> Result<()> {
    if faces.is_empty() {
        return Err(Error::param(field, "needs at least one face"));
    }
    for (i, f) in faces.iter().enumerate() {
        if !(f[0].abs() < 80.0) || !(f[1] > 0.0) {
            return Err(Error::param(format!("{field}[{i}]"), "angle must be within ±80° and run positive"));
        }
    }
    Ok(())
}

/// Robot, start configuration, controller period and base seed shared by a suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SimContext {
    pub chain: KinematicChain<f64>,
    pub home: DVector<f64>,
    /// Controller period (s).
    pub dt: f64,
    pub seed: u64,
}

impl SimContext {
    /// UR10e-like arm with its probe, starting probe-down.
    pub fn reference(rate_hz: f64, seed: u64) -> Self {
        SimContext {
            chain: reference_chain(),
            home: DVector::from_row_slice(&reference_home()),
            dt: 1.0 / rate_hz,
            seed,
        }
    }

    pub fn home_pose(&self) -> Result<Pose<f64>> {
        forward_kinematics(&self.chain, &self.home)
    }

    pub fn trial_seed(&self, cfg: &ScenarioConfig, trial: usize) -> u64 {
        self.seed.wrapping_add(cfg.seed_stride.wrapping_mul(trial as u64))
    }
}

/// What a scenario script asks of one control period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptStep {
    pub targets: ControlTargets<f64>,
    /// Extra wrench applied on the probe by an operator.
    pub operator: Wrench<f64>,
}

/// Runs one closed-loop trial.
///
/// Every period the script sees the true plant state and returns set-points
/// plus any operator wrench; the sensor reads the interaction wrench (what the
/// probe exerts on its surroundings), the controller produces a command and
/// the plant advances. One trace row is logged per period, `duration/dt + 1`
/// rows in total.
pub fn run_closed_loop<F>(
    cfg: &ScenarioConfig,
    ctx: &SimContext,
    trial: usize,
    env: Artefact,
    mut script: F,
) -> Result<TimeSeriesTrace>
where
    F: FnMut(f64, &PlantState) -> ScriptStep,
{
    let plant = Plant::new(ctx.chain.clone(), cfg.servo.model(cfg.mode), env, ctx.dt)?
        .with_probe_radius(cfg.contact.probe_radius)?;
    let model = cfg.virtual_model.model(ctx.chain.clone())?;
    let mut controller = FdccController::new(model, cfg.compliance.params(), cfg.mode, ctx.dt, &ctx.home)?;
    let mut sensor = Sensor::new(cfg.sensor.model(ctx.trial_seed(cfg, trial)));
    let mut state = plant.initial_state(ctx.home.clone())?;

    let steps = (cfg.duration / ctx.dt).round() as usize;
    let mut trace = TimeSeriesTrace::with_capacity(cfg.mode, steps + 1);
    for k in 0..=steps {
        let time = k as f64 * ctx.dt;
        state.time = time;
        let step = script(time, &state);
        let interaction = -(state.contact_wrench_true + step.operator);
        let measured = sensor.read(&interaction, time);
        let (cmd, fault) = controller.step(&measured, &step.targets);
        if let Some(e) = fault {
            trace.note_fault(time, &e);
        }
        trace.push(TraceRow {
            time,
            wrench_meas: measured,
            wrench_true: interaction,
            tip_position: state.tip_pose.position,
            tip_orientation: state.tip_pose.orientation,
            command: cmd.values.iter().copied().collect(),
            q: state.joints.q.iter().copied().collect(),
        });
        if k < steps {
            state = plant.step(&state, &cmd)?;
        }
    }
    Ok(trace)
}

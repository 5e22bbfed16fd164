//! The closed-loop compliance law.
//!
//! Each cycle builds the net wrench `fⁿ = f^d − f + K(x^d − x) + D(ẋ^d − ẋ)`
//! from the virtual model's tip pose, shapes it with a diagonal PD regulator
//! into `f^c`, drives the virtual model with `q̈ = H⁻¹Jᵀf^c`, integrates, and
//! hands either the integrated joint positions or joint velocities to the
//! robot's low-level servos.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{jacobian_from_frames, Pose};
use crate::scalar::{all_finite, Real};
use crate::virtual_dynamics::{integrate_step, solve_from_frames, VirtualModel};

/// Force (N) and torque (N·m) acting at the probe tip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench<T: Real> {
    pub force: Vector3<T>,
    pub torque: Vector3<T>,
}

impl<T: Real> Wrench<T> {
    pub fn new(force: Vector3<T>, torque: Vector3<T>) -> Self {
        Wrench { force, torque }
    }

    pub fn zero() -> Self {
        Wrench::new(Vector3::zeros(), Vector3::zeros())
    }

    pub fn from_force(force: Vector3<T>) -> Self {
        Wrench::new(force, Vector3::zeros())
    }

    pub fn from_vector(v: &Vector6<T>) -> Self {
        Wrench::new(v.fixed_rows::<3>(0).into_owned(), v.fixed_rows::<3>(3).into_owned())
    }

    /// `[force; torque]`.
    pub fn to_vector(&self) -> Vector6<T> {
        Vector6::new(
            self.force.x,
            self.force.y,
            self.force.z,
            self.torque.x,
            self.torque.y,
            self.torque.z,
        )
    }

    pub fn is_finite(&self) -> bool {
        all_finite(self.force.iter()) && all_finite(self.torque.iter())
    }

    /// Same wrench with its components expressed in the axes of `frame`.
    pub fn in_frame(&self, frame: &Pose<T>) -> Self {
        Wrench::new(frame.to_local(&self.force), frame.to_local(&self.torque))
    }

    /// Inverse of [`Wrench::in_frame`].
    pub fn from_frame(&self, frame: &Pose<T>) -> Self {
        Wrench::new(frame.to_base(&self.force), frame.to_base(&self.torque))
    }
}

impl<T: Real> Add for Wrench<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Wrench::new(self.force + rhs.force, self.torque + rhs.torque)
    }
}

impl<T: Real> Sub for Wrench<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Wrench::new(self.force - rhs.force, self.torque - rhs.torque)
    }
}

impl<T: Real> Neg for Wrench<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Wrench::new(-self.force, -self.torque)
    }
}

impl<T: Real> Mul<T> for Wrench<T> {
    type Output = Self;
    fn mul(self, rhs: T) -> Self {
        Wrench::new(self.force * rhs, self.torque * rhs)
    }
}

/// Stiffness, regulator gains and optional Cartesian damping, all diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplianceParams<T: Real> {
    /// N/m per axis.
    pub stiffness_trans: Vector3<T>,
    /// N·m/rad per axis.
    pub stiffness_rot: Vector3<T>,
    /// Proportional regulator gains, `[x y z Rx Ry Rz]`.
    pub p_gains: Vector6<T>,
    /// Derivative regulator gains (s), `[x y z Rx Ry Rz]`.
    pub d_gains: Vector6<T>,
    /// Cartesian damping; zero reproduces the spring-only net force.
    pub cartesian_damping: Vector6<T>,
}

impl<T: Real> ComplianceParams<T> {
    pub fn new(stiffness_trans: [f64; 3], stiffness_rot: [f64; 3], p: [f64; 2], d: [f64; 2]) -> Self {
        let v3 = |a: [f64; 3]| Vector3::new(T::lit(a[0]), T::lit(a[1]), T::lit(a[2]));
        let split = |g: [f64; 2]| {
            let (t, r) = (T::lit(g[0]), T::lit(g[1]));
            Vector6::new(t, t, t, r, r, r)
        };
        ComplianceParams {
            stiffness_trans: v3(stiffness_trans),
            stiffness_rot: v3(stiffness_rot),
            p_gains: split(p),
            d_gains: split(d),
            cartesian_damping: Vector6::zeros(),
        }
    }

    pub fn stiffness(&self) -> Vector6<T> {
        let (t, r) = (&self.stiffness_trans, &self.stiffness_rot);
        Vector6::new(t.x, t.y, t.z, r.x, r.y, r.z)
    }

    pub fn validate(&self) -> Result<()> {
        let groups: [(&str, &[T]); 5] = [
            ("stiffness_trans", self.stiffness_trans.as_slice()),
            ("stiffness_rot", self.stiffness_rot.as_slice()),
            ("p_gains", self.p_gains.as_slice()),
            ("d_gains", self.d_gains.as_slice()),
            ("cartesian_damping", self.cartesian_damping.as_slice()),
        ];
        for (name, values) in groups {
            if let Some(i) = values.iter().position(|v| !(*v >= T::zero()) || !v.finite()) {
                return Err(Error::param(format!("{name}[{i}]"), "must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// Set-points of the compliance law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlTargets<T: Real> {
    pub pose: Pose<T>,
    /// Desired twist `[v; ω]`.
    pub twist: Vector6<T>,
    /// Desired wrench applied by the tool on its surroundings.
    pub wrench: Wrench<T>,
}

impl<T: Real> ControlTargets<T> {
    pub fn hold(pose: Pose<T>) -> Self {
        ControlTargets {
            pose,
            twist: Vector6::zeros(),
            wrench: Wrench::zero(),
        }
    }

    pub fn with_wrench(mut self, wrench: Wrench<T>) -> Self {
        self.wrench = wrench;
        self
    }
}

/// Low-level interface the commands are written to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlMode {
    Position,
    Velocity,
}

impl ControlMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControlMode::Position => "position",
            ControlMode::Velocity => "velocity",
        }
    }
}

impl fmt::Display for ControlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ControlMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "position" => Ok(ControlMode::Position),
            "velocity" => Ok(ControlMode::Velocity),
            other => Err(format!("unknown control mode `{other}`")),
        }
    }
}

/// Joint set-points: rad in position mode, rad/s in velocity mode.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCommand<T: Real> {
    pub mode: ControlMode,
    pub values: DVector<T>,
}

/// Virtual-model state carried between cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState<T: Real> {
    pub virtual_q: DVector<T>,
    pub virtual_qdot: DVector<T>,
    pub prev_f_n: Wrench<T>,
    pub cycle_count: u64,
}

impl<T: Real> ControllerState<T> {
    /// Starts the virtual model at rest in the measured plant configuration.
    pub fn from_plant(q: &DVector<T>) -> Self {
        ControllerState {
            virtual_q: q.clone(),
            virtual_qdot: DVector::zeros(q.len()),
            prev_f_n: Wrench::zero(),
            cycle_count: 0,
        }
    }
}

/// Net wrench driving the virtual model.
pub fn net_force<T: Real>(
    targets: &ControlTargets<T>,
    f_meas: &Wrench<T>,
    x: &Pose<T>,
    xdot: &Vector6<T>,
    params: &ComplianceParams<T>,
) -> Wrench<T> {
    let spring = params.stiffness().component_mul(&x.error_to(&targets.pose));
    let damper = params
        .cartesian_damping
        .component_mul(&(targets.twist - xdot));
    targets.wrench - *f_meas + Wrench::from_vector(&(spring + damper))
}

/// `f^c = P fⁿ + D (fⁿ − fⁿ_prev)/dt` with diagonal gains.
pub fn pd_regulate<T: Real>(f_n: &Wrench<T>, prev_f_n: &Wrench<T>, params: &ComplianceParams<T>, dt: T) -> Wrench<T> {
    let now = f_n.to_vector();
    let rate = (now - prev_f_n.to_vector()) / dt;
    Wrench::from_vector(&(params.p_gains.component_mul(&now) + params.d_gains.component_mul(&rate)))
}

/// One controller period.
///
/// Tip pose and twist come from the virtual model only; the measured wrench
/// is the sole coupling to the real robot.
#[allow(clippy::too_many_arguments)]
pub fn control_cycle<T: Real>(
    state: &ControllerState<T>,
    f_meas: &Wrench<T>,
    targets: &ControlTargets<T>,
    params: &ComplianceParams<T>,
    model: &VirtualModel<T>,
    mode: ControlMode,
    dt: T,
) -> Result<(ControllerState<T>, JointCommand<T>)> {
    if !(dt > T::zero()) {
        return Err(Error::param("dt", "must be positive"));
    }
    if !f_meas.is_finite() {
        return Err(Error::NonFinite("measured wrench"));
    }
    if state.virtual_qdot.len() != state.virtual_q.len() {
        return Err(Error::Dimension {
            what: "virtual joint velocity",
            expected: state.virtual_q.len(),
            actual: state.virtual_qdot.len(),
        });
    }
    let frames = model.chain().frames(&state.virtual_q)?;
    let x = Pose::from_isometry(&frames.tip);
    let xdot = jacobian_from_frames(&frames) * &state.virtual_qdot;

    let f_n = net_force(targets, f_meas, &x, &xdot, params);
    let prev = if state.cycle_count == 0 { f_n } else { state.prev_f_n };
    let f_c = pd_regulate(&f_n, &prev, params, dt);
    let qddot = solve_from_frames(model, &state.virtual_q, &frames, &f_c)?;

    let carried = if model.joint_damping > T::zero() {
        &state.virtual_qdot * (-model.joint_damping * dt).exp()
    } else {
        state.virtual_qdot.clone()
    };
    let (q, qdot) = integrate_step(&state.virtual_q, &carried, &qddot, dt)?;
    let values = match mode {
        ControlMode::Position => q.clone(),
        ControlMode::Velocity => qdot.clone(),
    };
    let next = ControllerState {
        virtual_q: q,
        virtual_qdot: qdot,
        prev_f_n: f_n,
        cycle_count: state.cycle_count + 1,
    };
    Ok((next, JointCommand { mode, values }))
}

/// Controller session bound to one interface mode and period.
#[derive(Debug, Clone)]
pub struct FdccController<T: Real> {
    model: VirtualModel<T>,
    params: ComplianceParams<T>,
    mode: ControlMode,
    dt: T,
    state: ControllerState<T>,
    last_command: JointCommand<T>,
}

impl<T: Real> FdccController<T> {
    pub fn new(
        model: VirtualModel<T>,
        params: ComplianceParams<T>,
        mode: ControlMode,
        dt: T,
        plant_q: &DVector<T>,
    ) -> Result<Self> {
        params.validate()?;
        if !(dt > T::zero()) || !dt.finite() {
            return Err(Error::param("dt", "must be positive and finite"));
        }
        model.chain().check_q(plant_q)?;
        let state = ControllerState::from_plant(plant_q);
        let values = match mode {
            ControlMode::Position => plant_q.clone(),
            ControlMode::Velocity => DVector::zeros(plant_q.len()),
        };
        Ok(FdccController {
            model,
            params,
            mode,
            dt,
            state,
            last_command: JointCommand { mode, values },
        })
    }

    pub fn mode(&self) -> ControlMode {
        self.mode
    }

    pub fn state(&self) -> &ControllerState<T> {
        &self.state
    }

    pub fn model(&self) -> &VirtualModel<T> {
        &self.model
    }

    pub fn params(&self) -> &ComplianceParams<T> {
        &self.params
    }

    /// Tip pose of the virtual model.
    pub fn virtual_pose(&self) -> Result<Pose<T>> {
        crate::kinematics::forward_kinematics(self.model.chain(), &self.state.virtual_q)
    }

    /// Runs one cycle. On failure the previous command is returned alongside
    /// the error and the virtual state is left untouched.
    pub fn step(&mut self, f_meas: &Wrench<T>, targets: &ControlTargets<T>) -> (JointCommand<T>, Option<Error>) {
        match control_cycle(
            &self.state,
            f_meas,
            targets,
            &self.params,
            &self.model,
            self.mode,
            self.dt,
        ) {
            Ok((state, cmd)) => {
                self.state = state;
                self.last_command = cmd.clone();
                (cmd, None)
            }
            Err(e) => (self.last_command.clone(), Some(e)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params_k(k: f64) -> ComplianceParams<f64> {
        ComplianceParams::new([k; 3], [200.0; 3], [0.0025, 0.035], [0.000025, 0.00025])
    }

    #[test]
    fn equilibrium_gives_zero_net_force() {
        let pose = Pose::new(Vector3::new(0.1, 0.2, 0.3), Default::default());
        let f = Wrench::new(Vector3::new(1.0, -2.0, 3.0), Vector3::new(0.1, 0.0, 0.0));
        let targets = ControlTargets::hold(pose).with_wrench(f);
        let out = net_force(&targets, &f, &pose, &Vector6::zeros(), &params_k(1500.0));
        assert_eq!(out.to_vector(), Vector6::zeros());
    }

    #[test]
    fn spring_term_along_z() {
        let pose = Pose::<f64>::identity();
        let targets = ControlTargets::hold(pose.translated(Vector3::new(0.0, 0.0, 0.01)));
        let out = net_force(&targets, &Wrench::zero(), &pose, &Vector6::zeros(), &params_k(1500.0));
        assert_relative_eq!(out.force, Vector3::new(0.0, 0.0, 15.0), epsilon = 1e-12);
        assert_eq!(out.torque, Vector3::zeros());
    }

    #[test]
    fn zero_stiffness_is_pure_force_control() {
        let pose = Pose::<f64>::identity();
        let mut params = params_k(0.0);
        params.stiffness_rot = Vector3::zeros();
        let targets = ControlTargets::hold(pose.translated(Vector3::new(0.3, 0.0, 0.0)))
            .with_wrench(Wrench::from_force(Vector3::new(0.0, 0.0, 10.0)));
        let out = net_force(&targets, &Wrench::zero(), &pose, &Vector6::zeros(), &params);
        assert_eq!(out.force, Vector3::new(0.0, 0.0, 10.0));
    }

    #[test]
    fn cartesian_damping_opposes_velocity() {
        let pose = Pose::<f64>::identity();
        let mut params = params_k(0.0);
        params.cartesian_damping = Vector6::repeat(50.0);
        let xdot = Vector6::new(0.1, 0.0, 0.0, 0.0, 0.0, 0.0);
        let out = net_force(&ControlTargets::hold(pose), &Wrench::zero(), &pose, &xdot, &params);
        assert_relative_eq!(out.force.x, -5.0, epsilon = 1e-12);
    }

    #[test]
    fn regulator_proportional_and_derivative_parts() {
        let params = params_k(1500.0);
        let f = Wrench::from_force(Vector3::new(4.0, 0.0, 0.0));
        let steady = pd_regulate(&f, &f, &params, 0.002);
        assert_relative_eq!(steady.force.x, 0.0025 * 4.0, epsilon = 1e-15);

        let zero = pd_regulate(&Wrench::zero(), &Wrench::zero(), &params, 0.002);
        assert_eq!(zero.to_vector(), Vector6::zeros());

        // Step 0 → u adds D·u/dt = 0.0125·u on top of P·u.
        let u = 8.0;
        let step = pd_regulate(&Wrench::from_force(Vector3::new(0.0, u, 0.0)), &Wrench::zero(), &params, 0.002);
        assert_relative_eq!(step.force.y - 0.0025 * u, 0.0125 * u, epsilon = 1e-12);
    }

    #[test]
    fn compliance_validation_names_field() {
        let mut params = params_k(100.0);
        params.stiffness_trans.y = -1.0;
        match params.validate().unwrap_err() {
            Error::InvalidParameter { field, .. } => assert_eq!(field, "stiffness_trans[1]"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn wrench_frame_round_trip() {
        let frame = Pose::new(
            Vector3::zeros(),
            nalgebra::UnitQuaternion::from_euler_angles(0.3, -1.2, 2.0),
        );
        let w = Wrench::new(Vector3::new(1.0, 2.0, 3.0), Vector3::new(-1.0, 0.5, 0.0));
        let back = w.in_frame(&frame).from_frame(&frame);
        assert_relative_eq!(back.to_vector(), w.to_vector(), epsilon = 1e-12);
    }
}

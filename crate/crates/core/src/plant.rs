//! Simulated robot: joint servos behind a position or velocity interface,
//! penalty contact between a spherical probe tip and planar artefact faces,
//! and a noisy force/torque sensor.

use nalgebra::{DVector, Matrix2, Vector2, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::controller::{ControlMode, JointCommand, Wrench};
use crate::error::{Error, Result};
use crate::kinematics::{jacobian_from_frames, JointState, KinematicChain, Pose};

/// Below this tangential speed friction is scaled down linearly (m/s).
pub const FRICTION_REGULARIZATION: f64 = 1e-4;

/// Low-level joint servo abstraction.
///
/// The velocity interface tracks commanded joint velocity through a
/// first-order pole. The position interface tracks commanded joint position
/// through `q̈ = k (q_cmd − q) − c q̇`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServoModel {
    pub mode: ControlMode,
    /// rad/s.
    pub velocity_bandwidth: f64,
    /// 1/s².
    pub position_stiffness: f64,
    /// 1/s.
    pub position_damping: f64,
    pub velocity_limit: f64,
    pub acceleration_limit: f64,
}

impl ServoModel {
    pub const DEFAULT_VELOCITY_BANDWIDTH: f64 = 80.0;
    pub const DEFAULT_POSITION_FREQUENCY: f64 = 20.0;
    pub const DEFAULT_POSITION_DAMPING_RATIO: f64 = 1.2;

    pub fn new(mode: ControlMode) -> Self {
        let wn = Self::DEFAULT_POSITION_FREQUENCY;
        ServoModel {
            mode,
            velocity_bandwidth: Self::DEFAULT_VELOCITY_BANDWIDTH,
            position_stiffness: wn * wn,
            position_damping: 2.0 * Self::DEFAULT_POSITION_DAMPING_RATIO * wn,
            velocity_limit: std::f64::consts::PI,
            acceleration_limit: 40.0,
        }
    }

    /// Position loop with natural frequency `wn` (rad/s) and damping ratio `zeta`.
    pub fn with_position_loop(mut self, wn: f64, zeta: f64) -> Self {
        self.position_stiffness = wn * wn;
        self.position_damping = 2.0 * zeta * wn;
        self
    }

    pub fn position_frequency(&self) -> f64 {
        self.position_stiffness.sqrt()
    }

    pub fn position_damping_ratio(&self) -> f64 {
        self.position_damping / (2.0 * self.position_stiffness.sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("velocity_bandwidth", self.velocity_bandwidth),
            ("position_stiffness", self.position_stiffness),
            ("position_damping", self.position_damping),
            ("velocity_limit", self.velocity_limit),
            ("acceleration_limit", self.acceleration_limit),
        ];
        for (field, v) in checks {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(field, "must be positive and finite"));
            }
        }
        Ok(())
    }

    /// Phase lag (rad) of the interface's tracking response at `hz`:
    /// commanded-to-actual velocity for the velocity interface,
    /// commanded-to-actual position for the position interface.
    pub fn phase_lag(&self, hz: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * hz;
        match self.mode {
            ControlMode::Velocity => (w / self.velocity_bandwidth).atan(),
            ControlMode::Position => (self.position_damping * w).atan2(self.position_stiffness - w * w),
        }
    }
}

/// One planar face of an artefact, bounded by a polygon lying in the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSurface {
    pub id: String,
    pub plane_point: Vector3<f64>,
    pub plane_normal: Vector3<f64>,
    /// Polygon vertices (in the plane), in order.
    pub extent: Vec<Vector3<f64>>,
    /// N/m.
    pub stiffness_env: f64,
    /// N·s/m.
    pub damping_env: f64,
    pub friction_mu: f64,
}

/// Contact law parameters shared by all faces of an artefact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactLaw {
    pub stiffness: f64,
    pub damping: f64,
    pub friction: f64,
}

impl Default for ContactLaw {
    fn default() -> Self {
        ContactLaw {
            stiffness: 1e5,
            damping: 200.0,
            friction: 0.3,
        }
    }
}

impl ContactSurface {
    pub fn validate(&self) -> Result<()> {
        if (self.plane_normal.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::param(format!("{}.plane_normal", self.id), "must be unit norm"));
        }
        if !(self.stiffness_env > 0.0) {
            return Err(Error::param(format!("{}.stiffness_env", self.id), "must be positive"));
        }
        if !(self.damping_env >= 0.0) {
            return Err(Error::param(format!("{}.damping_env", self.id), "must be non-negative"));
        }
        if !(self.friction_mu >= 0.0) {
            return Err(Error::param(format!("{}.friction_mu", self.id), "must be non-negative"));
        }
        if self.extent.len() < 3 {
            return Err(Error::param(format!("{}.extent", self.id), "needs at least three vertices"));
        }
        for v in &self.extent {
            if (v - self.plane_point).dot(&self.plane_normal).abs() > 1e-9 {
                return Err(Error::param(format!("{}.extent", self.id), "vertex off the plane"));
            }
        }
        Ok(())
    }

    /// In-plane orthonormal basis `(e1, e2)` with `e1 × e2 = n`.
    fn basis(&self) -> (Vector3<f64>, Vector3<f64>) {
        let n = self.plane_normal;
        let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = helper.cross(&n).normalize();
        (e1, n.cross(&e1))
    }

    /// Closest point of the bounded face to `p`, and whether it lies strictly
    /// inside the polygon (as opposed to on its boundary).
    pub fn closest_point(&self, p: &Vector3<f64>) -> (Vector3<f64>, bool) {
        let (e1, e2) = self.basis();
        let to2 = |v: &Vector3<f64>| {
            let d = v - self.plane_point;
            Vector2::new(d.dot(&e1), d.dot(&e2))
        };
        let poly: Vec<Vector2<f64>> = self.extent.iter().map(to2).collect();
        let target = to2(p);
        let closest2 = if point_in_polygon(&target, &poly) {
            return (self.plane_point + e1 * target.x + e2 * target.y, true);
        } else {
            let mut best = poly[0];
            let mut best_d = f64::INFINITY;
            for i in 0..poly.len() {
                let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
                let ab = b - a;
                let t = ((target - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                let c = a + ab * t;
                let d = (target - c).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        };
        (self.plane_point + e1 * closest2.x + e2 * closest2.y, false)
    }
}

fn point_in_polygon(p: &Vector2<f64>, poly: &[Vector2<f64>]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// A set of faces forming one rigid test artefact.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Artefact {
    pub surfaces: Vec<ContactSurface>,
}

impl Artefact {
    pub fn empty() -> Self {
        Artefact::default()
    }

    /// Square face of half-width `half` centred at `center` with outward `normal`.
    pub fn flat(id: &str, center: Vector3<f64>, normal: Vector3<f64>, half: f64, law: ContactLaw) -> Self {
        let n = normal.normalize();
        let mut face = ContactSurface {
            id: id.to_string(),
            plane_point: center,
            plane_normal: n,
            extent: Vec::new(),
            stiffness_env: law.stiffness,
            damping_env: law.damping,
            friction_mu: law.friction,
        };
        let (e1, e2) = face.basis();
        face.extent = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
            .iter()
            .map(|(a, b)| center + (e1 * *a + e2 * *b) * half)
            .collect();
        Artefact { surfaces: vec![face] }
    }

    /// Extruded profile of connected inclined faces.
    ///
    /// Starting at `start`, each face climbs `tan(angle)` per unit run along
    /// `travel` (projected horizontal w.r.t. `up`) for `run` metres. Faces are
    /// `width` wide and named `P1`, `P2`, ...
    pub fn profile(
        start: Vector3<f64>,
        travel: Vector3<f64>,
        up: Vector3<f64>,
        faces: &[(f64, f64)],
        width: f64,
        law: ContactLaw,
    ) -> Self {
        let up = up.normalize();
        let u = (travel - up * travel.dot(&up)).normalize();
        let side = up.cross(&u) * (width / 2.0);
        let mut surfaces = Vec::with_capacity(faces.len());
        let mut a = start;
        for (i, &(angle_deg, run)) in faces.iter().enumerate() {
            let angle = angle_deg.to_radians();
            let b = a + u * run + up * (run * angle.tan());
            let normal = (up * angle.cos() - u * angle.sin()).normalize();
            surfaces.push(ContactSurface {
                id: format!("P{}", i + 1),
                plane_point: a,
                plane_normal: normal,
                extent: vec![a - side, b - side, b + side, a + side],
                stiffness_env: law.stiffness,
                damping_env: law.damping,
                friction_mu: law.friction,
            });
            a = b;
        }
        Artefact { surfaces }
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.surfaces {
            s.validate()?;
        }
        // Consecutive faces of a profile must share an edge.
        for pair in self.surfaces.windows(2) {
            let shared = pair[0]
                .extent
                .iter()
                .filter(|v| pair[1].extent.iter().any(|w| (*v - w).norm() < 1e-6))
                .count();
            if shared < 2 {
                return Err(Error::param(
                    format!("{}/{}", pair[0].id, pair[1].id),
                    "faces do not share an edge",
                ));
            }
        }
        Ok(())
    }

    /// Face under the tip: the one whose bounded polygon is closest to `p`.
    pub fn nearest_surface(&self, p: &Vector3<f64>) -> Option<&ContactSurface> {
        self.surfaces.iter().min_by(|a, b| {
            let da = (a.closest_point(p).0 - p).norm();
            let db = (b.closest_point(p).0 - p).norm();
            da.total_cmp(&db)
        })
    }
}

/// Wrench exerted by the artefact on a probe sphere of radius `radius`
/// centred at the tip, expressed at the tip centre in the base frame.
///
/// Interior face contacts are summed; when none exists the deepest edge or
/// vertex contact is used, so a sphere rolling over a convex edge sees one
/// continuously turning normal.
pub fn contact_wrench(tip_pose: &Pose<f64>, tip_velocity: &Vector6<f64>, env: &Artefact, radius: f64) -> Wrench<f64> {
    let center = tip_pose.position;
    let lin = tip_velocity.fixed_rows::<3>(0).into_owned();
    let ang = tip_velocity.fixed_rows::<3>(3).into_owned();

    let mut face_hits = Vec::new();
    let mut edge_hit: Option<(f64, &ContactSurface, Vector3<f64>)> = None;
    for s in &env.surfaces {
        let (closest, interior) = s.closest_point(&center);
        let offset = center - closest;
        if interior {
            let gap = offset.dot(&s.plane_normal);
            let depth = radius - gap;
            if depth > 0.0 && gap > -radius {
                face_hits.push((depth, s, s.plane_normal));
            }
        } else {
            let dist = offset.norm();
            let depth = radius - dist;
            // Only from the outer side of the face.
            if depth > 0.0 && dist > 1e-12 && offset.dot(&s.plane_normal) > 0.0 {
                if edge_hit.map_or(true, |(d, _, _)| depth > d) {
                    edge_hit = Some((depth, s, offset / dist));
                }
            }
        }
    }
    if face_hits.is_empty() {
        face_hits.extend(edge_hit);
    }

    let mut total = Wrench::zero();
    for (depth, s, n) in face_hits {
        let lever = -n * radius;
        let v = lin + ang.cross(&lever);
        let penetration_rate = -v.dot(&n);
        let elastic = s.stiffness_env * depth;
        let damping = (s.damping_env * penetration_rate).clamp(-elastic, elastic);
        let normal_force = elastic + damping;
        let v_t = v - n * v.dot(&n);
        let speed = v_t.norm();
        let friction = if s.friction_mu > 0.0 && speed > 0.0 {
            -v_t * (s.friction_mu * normal_force / speed.max(FRICTION_REGULARIZATION))
        } else {
            Vector3::zeros()
        };
        let force = n * normal_force + friction;
        total = total + Wrench::new(force, lever.cross(&force));
    }
    total
}

/// Force/torque sensor model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    /// Per-axis standard deviation of force noise (N).
    pub noise_force: f64,
    /// Per-axis standard deviation of torque noise (N·m).
    pub noise_torque: f64,
    pub bias: Wrench<f64>,
    /// Hz.
    pub sample_rate: f64,
    pub seed: u64,
}

impl SensorModel {
    pub fn ideal(sample_rate: f64) -> Self {
        SensorModel {
            noise_force: 0.0,
            noise_torque: 0.0,
            bias: Wrench::zero(),
            sample_rate,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_force >= 0.0) || !(self.noise_torque >= 0.0) {
            return Err(Error::param("sensor.noise", "must be non-negative"));
        }
        if !(self.sample_rate > 0.0) {
            return Err(Error::param("sensor.sample_rate", "must be positive"));
        }
        if !self.bias.is_finite() {
            return Err(Error::param("sensor.bias", "must be finite"));
        }
        Ok(())
    }
}

/// Stateful sensor: seeded noise stream with zero-order hold at the sample rate.
#[derive(Debug, Clone)]
pub struct Sensor {
    model: SensorModel,
    rng: ChaCha8Rng,
    held: Option<(i64, Wrench<f64>)>,
}

impl Sensor {
    pub fn new(model: SensorModel) -> Self {
        Sensor {
            rng: ChaCha8Rng::seed_from_u64(model.seed),
            model,
            held: None,
        }
    }

    pub fn model(&self) -> &SensorModel {
        &self.model
    }

    fn noise(&mut self) -> Wrench<f64> {
        let (sf, st) = (self.model.noise_force, self.model.noise_torque);
        let mut draw = |s: f64| {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            z * s
        };
        let force = Vector3::new(draw(sf), draw(sf), draw(sf));
        let torque = Vector3::new(draw(st), draw(st), draw(st));
        Wrench::new(force, torque)
    }

    /// Reading of `true_wrench` at `time`.
    pub fn read(&mut self, true_wrench: &Wrench<f64>, time: f64) -> Wrench<f64> {
        let slot = (time * self.model.sample_rate + 1e-9).floor() as i64;
        if let Some((held_slot, value)) = self.held {
            if held_slot == slot {
                return value;
            }
        }
        let value = *true_wrench + self.model.bias + self.noise();
        self.held = Some((slot, value));
        value
    }
}

/// Convenience wrapper over a fresh [`Sensor`] for one-off reads.
pub fn read_sensor(true_wrench: &Wrench<f64>, sensor: &mut Sensor, time: f64) -> Wrench<f64> {
    sensor.read(true_wrench, time)
}

/// True state of the simulated robot.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub joints: JointState<f64>,
    pub tip_pose: Pose<f64>,
    /// Linear and angular tip velocity, base frame.
    pub tip_twist: Vector6<f64>,
    /// Wrench applied by the artefact on the probe.
    pub contact_wrench_true: Wrench<f64>,
    pub time: f64,
}

/// Fixed-step plant: robot kinematics, servos, probe and one artefact.
#[derive(Debug, Clone)]
pub struct Plant {
    chain: KinematicChain<f64>,
    servo: ServoModel,
    env: Artefact,
    probe_radius: f64,
    dt: f64,
    substeps: usize,
    position_transition: Matrix2<f64>,
}

impl Plant {
    pub const DEFAULT_SUBSTEPS: usize = 4;
    pub const DEFAULT_PROBE_RADIUS: f64 = 0.005;

    pub fn new(chain: KinematicChain<f64>, servo: ServoModel, env: Artefact, dt: f64) -> Result<Self> {
        servo.validate()?;
        env.validate()?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::param("dt", "must be positive and finite"));
        }
        let mut plant = Plant {
            chain,
            servo,
            env,
            probe_radius: Self::DEFAULT_PROBE_RADIUS,
            dt,
            substeps: Self::DEFAULT_SUBSTEPS,
            position_transition: Matrix2::identity(),
        };
        plant.update_transition();
        Ok(plant)
    }

    pub fn with_probe_radius(mut self, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::param("probe_radius", "must be positive"));
        }
        self.probe_radius = radius;
        Ok(self)
    }

    pub fn with_substeps(mut self, substeps: usize) -> Result<Self> {
        if substeps == 0 {
            return Err(Error::param("substeps", "must be at least 1"));
        }
        self.substeps = substeps;
        self.update_transition();
        Ok(self)
    }

    fn update_transition(&mut self) {
        // Exact transition of the error dynamics ë = −k e − c ė over one substep.
        let h = self.dt / self.substeps as f64;
        let a = Matrix2::new(0.0, 1.0, -self.servo.position_stiffness, -self.servo.position_damping);
        self.position_transition = (a * h).exp();
    }

    pub fn chain(&self) -> &KinematicChain<f64> {
        &self.chain
    }

    pub fn artefact(&self) -> &Artefact {
        &self.env
    }

    pub fn probe_radius(&self) -> f64 {
        self.probe_radius
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Plant at rest in configuration `q`.
    pub fn initial_state(&self, q: DVector<f64>) -> Result<PlantState> {
        self.observe(JointState::at_rest(q), 0.0)
    }

    fn observe(&self, joints: JointState<f64>, time: f64) -> Result<PlantState> {
        let frames = self.chain.frames(&joints.q)?;
        let tip_pose = Pose::from_isometry(&frames.tip);
        let tip_twist = jacobian_from_frames(&frames) * &joints.qdot;
        let contact_wrench_true = contact_wrench(&tip_pose, &tip_twist, &self.env, self.probe_radius);
        Ok(PlantState {
            joints,
            tip_pose,
            tip_twist,
            contact_wrench_true,
            time,
        })
    }

    /// Advances one controller period.
    pub fn step(&self, state: &PlantState, cmd: &JointCommand<f64>) -> Result<PlantState> {
        step_plant(self, state, cmd)
    }
}

/// Advances the plant by one period under `cmd`, then recomputes contact.
pub fn step_plant(plant: &Plant, state: &PlantState, cmd: &JointCommand<f64>) -> Result<PlantState> {
    let servo = &plant.servo;
    let fault = |reason: String| Error::PlantFault {
        time: state.time,
        reason,
    };
    if cmd.mode != servo.mode {
        return Err(fault(format!("{} command sent to {} servo", cmd.mode, servo.mode)));
    }
    let n = plant.chain.dof();
    if cmd.values.len() != n {
        return Err(fault(format!("command has {} entries, expected {n}", cmd.values.len())));
    }
    if let Some(i) = cmd.values.iter().position(|v| !v.is_finite()) {
        return Err(fault(format!("non-finite command on joint {i}")));
    }

    let h = plant.dt / plant.substeps as f64;
    let mut q = state.joints.q.clone();
    let mut qd = state.joints.qdot.clone();
    let (vlim, alim) = (servo.velocity_limit, servo.acceleration_limit);
    let max_dv = alim * h;
    let decay = (-servo.velocity_bandwidth * h).exp();
    for _ in 0..plant.substeps {
        for j in 0..n {
            match servo.mode {
                ControlMode::Velocity => {
                    let target = cmd.values[j].clamp(-vlim, vlim);
                    let v_free = target + (qd[j] - target) * decay;
                    let v = qd[j] + (v_free - qd[j]).clamp(-max_dv, max_dv);
                    qd[j] = v;
                    q[j] += v * h;
                }
                ControlMode::Position => {
                    let target = cmd.values[j];
                    let next = plant.position_transition * Vector2::new(q[j] - target, qd[j]);
                    let v_limited = (qd[j] + (next.y - qd[j]).clamp(-max_dv, max_dv)).clamp(-vlim, vlim);
                    if v_limited == next.y {
                        q[j] = target + next.x;
                    } else {
                        q[j] += v_limited * h;
                    }
                    qd[j] = v_limited;
                }
            }
        }
    }
    plant.observe(JointState { q, qdot: qd }, state.time + plant.dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Isometry3, UnitQuaternion};

    use crate::kinematics::Link;

    fn slider_chain() -> KinematicChain<f64> {
        KinematicChain::new(
            vec![Link::massless(Isometry3::identity())],
            Isometry3::translation(1.0, 0.0, 0.0),
        )
        .unwrap()
    }

    fn at(p: Vector3<f64>) -> Pose<f64> {
        Pose::new(p, UnitQuaternion::identity())
    }

    fn frictionless() -> ContactLaw {
        ContactLaw {
            friction: 0.0,
            ..ContactLaw::default()
        }
    }

    #[test]
    fn separated_tip_feels_nothing() {
        let env = Artefact::flat("floor", Vector3::zeros(), Vector3::z(), 1.0, ContactLaw::default());
        let w = contact_wrench(&at(Vector3::new(0.0, 0.0, 0.006)), &Vector6::zeros(), &env, 0.005);
        assert_eq!(w, Wrench::zero());
    }

    #[test]
    fn one_millimetre_penetration() {
        let env = Artefact::flat("floor", Vector3::zeros(), Vector3::z(), 1.0, frictionless());
        let w = contact_wrench(&at(Vector3::new(0.0, 0.0, 0.004)), &Vector6::zeros(), &env, 0.005);
        assert_relative_eq!(w.force, Vector3::new(0.0, 0.0, 100.0), epsilon = 1e-9);
    }

    #[test]
    fn frictionless_slide_on_inclined_face() {
        let normal = Vector3::new(-1.0, 0.0, 1.0).normalize();
        let env = Artefact::flat("ramp", Vector3::zeros(), normal, 1.0, frictionless());
        let slide = Vector3::new(1.0, 0.0, 1.0).normalize() * 0.01;
        let twist = Vector6::new(slide.x, slide.y, slide.z, 0.0, 0.0, 0.0);
        let w = contact_wrench(&at(normal * 0.004), &twist, &env, 0.005);
        assert!(w.force.norm() > 1.0);
        assert!(w.force.cross(&normal).norm() < 1e-9);
    }

    #[test]
    fn friction_opposes_sliding() {
        let env = Artefact::flat("floor", Vector3::zeros(), Vector3::z(), 1.0, ContactLaw::default());
        let twist = Vector6::new(0.01, 0.0, 0.0, 0.0, 0.0, 0.0);
        let w = contact_wrench(&at(Vector3::new(0.0, 0.0, 0.004)), &twist, &env, 0.005);
        assert_relative_eq!(w.force.x, -0.3 * w.force.z, epsilon = 1e-9);
    }

    #[test]
    fn contact_force_vanishes_at_boundary() {
        let env = Artefact::flat("floor", Vector3::zeros(), Vector3::z(), 1.0, ContactLaw::default());
        let twist = Vector6::new(0.0, 0.0, -0.5, 0.0, 0.0, 0.0);
        let mut last = f64::INFINITY;
        for k in 3..10 {
            let depth = 10f64.powi(-k);
            let w = contact_wrench(&at(Vector3::new(0.0, 0.0, 0.005 - depth)), &twist, &env, 0.005);
            assert!(w.force.norm() <= 2.0 * 1e5 * depth + 1e-12);
            assert!(w.force.norm() < last);
            last = w.force.norm();
        }
    }

    #[test]
    fn profile_faces_share_edges_and_normals_turn() {
        let env = Artefact::profile(
            Vector3::zeros(),
            Vector3::x(),
            Vector3::z(),
            &[(30.0, 0.04), (0.0, 0.04), (-30.0, 0.04)],
            0.05,
            ContactLaw::default(),
        );
        env.validate().unwrap();
        assert_eq!(env.surfaces.len(), 3);
        assert_relative_eq!(env.surfaces[0].plane_normal.x, -0.5, epsilon = 1e-12);
        assert_relative_eq!(env.surfaces[2].plane_normal.x, 0.5, epsilon = 1e-12);
        let top = env.surfaces[1].plane_point;
        assert_relative_eq!(top.z, 0.04 * 30f64.to_radians().tan(), epsilon = 1e-12);
    }

    #[test]
    fn rolling_over_convex_edge_is_continuous() {
        let env = Artefact::profile(
            Vector3::zeros(),
            Vector3::x(),
            Vector3::z(),
            &[(30.0, 0.04), (0.0, 0.04)],
            0.05,
            frictionless(),
        );
        let edge = env.surfaces[1].plane_point;
        let r = 0.005;
        let mut prev: Option<Vector3<f64>> = None;
        for k in 0..=200 {
            // Sweep the sphere centre around the edge at constant 0.1 mm depth.
            let a = (-30.0 + 30.0 * f64::from(k) / 200.0).to_radians();
            let dir = Vector3::new(a.sin(), 0.0, a.cos());
            let w = contact_wrench(&at(edge + dir * (r - 1e-4)), &Vector6::zeros(), &env, r);
            assert_relative_eq!(w.force.norm(), 10.0, epsilon = 1e-6);
            if let Some(p) = prev {
                assert!((w.force - p).norm() < 0.1);
            }
            prev = Some(w.force);
        }
    }

    #[test]
    fn sensor_is_identity_without_noise() {
        let mut s = Sensor::new(SensorModel::ideal(500.0));
        let w = Wrench::new(Vector3::new(1.0, 2.0, 3.0), Vector3::new(0.1, 0.2, 0.3));
        assert_eq!(read_sensor(&w, &mut s, 0.0), w);
    }

    #[test]
    fn sensor_stream_is_seeded() {
        let model = SensorModel {
            noise_force: 0.1,
            noise_torque: 0.01,
            seed: 7,
            ..SensorModel::ideal(500.0)
        };
        let (mut a, mut b) = (Sensor::new(model), Sensor::new(model));
        for k in 0..100 {
            let t = f64::from(k) * 0.002;
            assert_eq!(a.read(&Wrench::zero(), t), b.read(&Wrench::zero(), t));
        }
        let mut c = Sensor::new(SensorModel { seed: 8, ..model });
        assert_ne!(a.read(&Wrench::zero(), 1.0), c.read(&Wrench::zero(), 1.0));
    }

    #[test]
    fn sensor_zero_order_hold() {
        let mut s = Sensor::new(SensorModel::ideal(100.0));
        let first = s.read(&Wrench::from_force(Vector3::x()), 0.0);
        let held = s.read(&Wrench::from_force(Vector3::y()), 0.004);
        assert_eq!(first, held);
        let fresh = s.read(&Wrench::from_force(Vector3::y()), 0.010);
        assert_eq!(fresh.force, Vector3::y());
    }

    #[test]
    fn noise_standard_deviation() {
        let model = SensorModel {
            noise_force: 0.1,
            seed: 3,
            ..SensorModel::ideal(1000.0)
        };
        let mut s = Sensor::new(model);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|k| s.read(&Wrench::zero(), k as f64 / 1000.0).force.x).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var.sqrt() - 0.1).abs() < 0.005, "std {}", var.sqrt());
    }

    #[test]
    fn rest_stays_at_rest() {
        for mode in [ControlMode::Position, ControlMode::Velocity] {
            let plant = Plant::new(slider_chain(), ServoModel::new(mode), Artefact::empty(), 0.002).unwrap();
            let q0 = DVector::from_element(1, 0.4);
            let mut state = plant.initial_state(q0.clone()).unwrap();
            let values = match mode {
                ControlMode::Position => q0.clone(),
                ControlMode::Velocity => DVector::zeros(1),
            };
            let cmd = JointCommand { mode, values };
            for _ in 0..5000 {
                state = plant.step(&state, &cmd).unwrap();
            }
            assert_eq!(state.joints.q, q0);
            assert_eq!(state.joints.qdot[0], 0.0);
            assert_relative_eq!(state.time, 10.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn velocity_step_response_matches_first_order() {
        let servo = ServoModel::new(ControlMode::Velocity);
        let beta = servo.velocity_bandwidth;
        let plant = Plant::new(slider_chain(), servo, Artefact::empty(), 0.002).unwrap();
        let mut state = plant.initial_state(DVector::zeros(1)).unwrap();
        let w = 0.3;
        let cmd = JointCommand {
            mode: ControlMode::Velocity,
            values: DVector::from_element(1, w),
        };
        while state.time < 5.0 / beta - 1e-9 {
            state = plant.step(&state, &cmd).unwrap();
        }
        let expected = w * (1.0 - (-beta * state.time).exp());
        assert!((state.joints.qdot[0] - expected).abs() < 0.01 * expected);
    }

    #[test]
    fn critically_damped_position_step_does_not_overshoot() {
        let servo = ServoModel::new(ControlMode::Position).with_position_loop(20.0, 1.0);
        let plant = Plant::new(slider_chain(), servo, Artefact::empty(), 0.002).unwrap();
        let mut state = plant.initial_state(DVector::zeros(1)).unwrap();
        let target = 0.5;
        let cmd = JointCommand {
            mode: ControlMode::Position,
            values: DVector::from_element(1, target),
        };
        for _ in 0..2000 {
            state = plant.step(&state, &cmd).unwrap();
            assert!(state.joints.q[0] <= target + 1e-6);
        }
        assert!((state.joints.q[0] - target).abs() < 1e-3);
    }

    #[test]
    fn nan_command_faults() {
        let plant = Plant::new(slider_chain(), ServoModel::new(ControlMode::Velocity), Artefact::empty(), 0.002).unwrap();
        let state = plant.initial_state(DVector::zeros(1)).unwrap();
        let cmd = JointCommand {
            mode: ControlMode::Velocity,
            values: DVector::from_element(1, f64::NAN),
        };
        assert!(matches!(plant.step(&state, &cmd), Err(Error::PlantFault { .. })));
        let wrong_mode = JointCommand {
            mode: ControlMode::Position,
            values: DVector::zeros(1),
        };
        assert!(plant.step(&state, &wrong_mode).is_err());
    }

    #[test]
    fn position_interface_lags_more_at_one_hertz() {
        let pos = ServoModel::new(ControlMode::Position);
        let vel = ServoModel::new(ControlMode::Velocity);
        assert!(pos.phase_lag(1.0) > vel.phase_lag(1.0));
        assert!(vel.phase_lag(1.0).to_degrees() < 5.0);
    }

    #[test]
    fn default_position_servo_is_overdamped() {
        let s = ServoModel::new(ControlMode::Position);
        assert!(s.position_damping.powi(2) >= 4.0 * s.position_stiffness);
    }
}

//! Compliance law and regulator properties.

use fdcc_core::config::{reference_chain, reference_home};
use fdcc_core::{
    control_cycle, net_force, pd_regulate, ComplianceParams, ControlMode, ControlTargets, Controller32, ControllerState,
    InertiaOverrides, Model32, Pose, VirtualModel, Wrench,
};
use nalgebra::{DVector, UnitQuaternion, Vector3, Vector6};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(k: f64) -> ComplianceParams<f64> {
    ComplianceParams::new([k; 3], [k; 3], [0.0025, 0.035], [0.000025, 0.00025])
}

fn random_wrench(rng: &mut ChaCha8Rng, scale: f64) -> Wrench<f64> {
    let mut v = || Vector3::from_fn(|_, _| rng.gen_range(-scale..scale));
    Wrench::new(v(), v())
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose<f64> {
    let p = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    let axis = Vector3::from_fn(|_, _| rng.gen_range(-3.0..3.0));
    Pose::new(p, UnitQuaternion::from_scaled_axis(axis))
}

/// Criterion 3: with K = 0 and no Cartesian damping the net force is
/// exactly f_d − f_meas.
#[test]
fn zero_stiffness_reduces_to_force_error_exactly() {
    let zero = ComplianceParams::<f64>::new([0.0; 3], [0.0; 3], [0.0025, 0.035], [0.000025, 0.00025]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let mut targets = ControlTargets::hold(random_pose(&mut rng)).with_wrench(random_wrench(&mut rng, 100.0));
        targets.twist = Vector6::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let f = random_wrench(&mut rng, 100.0);
        let x = random_pose(&mut rng);
        let xdot = Vector6::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let out = net_force(&targets, &f, &x, &xdot, &zero);
        assert_eq!(out.to_vector(), (targets.wrench - f).to_vector());
    }
}

#[test]
fn constant_net_force_is_scaled_by_p() {
    let f = Wrench::new(Vector3::new(4.0, -2.0, 10.0), Vector3::zeros());
    let out = pd_regulate(&f, &f, &params(1500.0), 0.002);
    assert!((out.force - f.force * 0.0025).amax() < 1e-15);
}

#[test]
fn derivative_kick_lasts_one_cycle() {
    let p = params(1500.0);
    let u = Wrench::from_force(Vector3::new(0.0, 0.0, 8.0));
    let kick = pd_regulate(&u, &Wrench::zero(), &p, 0.002);
    assert!((kick.force.z - (0.0025 + 0.0125) * 8.0).abs() < 1e-12);
    let after = pd_regulate(&u, &u, &p, 0.002);
    assert!((after.force.z - 0.0025 * 8.0).abs() < 1e-15);
}

#[test]
fn first_cycle_has_no_derivative_term() {
    let chain = reference_chain();
    let home = DVector::from_row_slice(&reference_home());
    let model = VirtualModel::new(chain.clone(), InertiaOverrides::paper()).unwrap();
    let pose = fdcc_core::forward_kinematics(&chain, &home).unwrap();
    let f = Wrench::from_force(Vector3::new(0.0, 0.0, 5.0));
    let targets = ControlTargets::hold(pose);
    let state = ControllerState::from_plant(&home);
    let (next, _) = control_cycle(&state, &f, &targets, &params(1500.0), &model, ControlMode::Velocity, 0.002).unwrap();

    // Same cycle with the derivative gains removed gives the same motion.
    let mut no_d = params(1500.0);
    no_d.d_gains = Vector6::zeros();
    let (plain, _) = control_cycle(&state, &f, &targets, &no_d, &model, ControlMode::Velocity, 0.002).unwrap();
    assert!((next.virtual_qdot - plain.virtual_qdot).amax() < 1e-15);
}

#[test]
fn single_precision_aliases_run() {
    let chain = reference_chain();
    let chain32: fdcc_core::Chain32 = fdcc_core::KinematicChain::new(
        chain
            .links()
            .iter()
            .map(|l| fdcc_core::Link {
                parent_offset: l.parent_offset.cast(),
                joint_axis: nalgebra::Unit::new_normalize(l.joint_axis.into_inner().cast()),
                mass: l.mass as f32,
                inertia: l.inertia.cast(),
                com: l.com.cast(),
            })
            .collect(),
        chain.tip_offset().cast(),
    )
    .unwrap();
    let model: Model32 = VirtualModel::new(chain32, InertiaOverrides::paper()).unwrap();
    let home: DVector<f32> = DVector::from_row_slice(&reference_home()).cast();
    let pose = fdcc_core::forward_kinematics(model.chain(), &home).unwrap();
    let mut ctl = Controller32::new(model, ComplianceParams::new([1500.0; 3], [200.0; 3], [0.0025, 0.035], [0.0, 0.0]), ControlMode::Velocity, 0.002, &home).unwrap();
    let targets = ControlTargets::hold(pose);
    let push = Wrench::from_force(Vector3::new(0.0, 0.0, 10.0f32));
    for _ in 0..50 {
        let (cmd, fault) = ctl.step(&push, &targets);
        assert!(fault.is_none());
        assert!(cmd.values.iter().all(|v| v.is_finite()));
    }
    // The tool pushes up on its surroundings, so the arm yields downwards.
    let moved = ctl.virtual_pose().unwrap().position - pose.position;
    assert!(moved.z < 0.0);
}

proptest! {
    #[test]
    fn regulator_is_scale_equivariant(
        f in prop::array::uniform6(-100.0..100.0f64),
        g in prop::array::uniform6(-100.0..100.0f64),
        s in -10.0..10.0f64,
        dt in 0.0005..0.02f64,
    ) {
        let w = |v: [f64; 6]| Wrench::new(Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5]));
        let p = params(250.0);
        let scaled = pd_regulate(&(w(f) * s), &(w(g) * s), &p, dt).to_vector();
        let reference = pd_regulate(&w(f), &w(g), &p, dt).to_vector() * s;
        prop_assert!((scaled - reference).amax() <= 1e-12 * reference.amax().max(1.0));
    }

    #[test]
    fn net_force_spring_is_linear_in_position_error(
        d in prop::array::uniform3(-0.05..0.05f64),
        k in prop::array::uniform3(0.0..3000.0f64),
    ) {
        let p = ComplianceParams::<f64>::new(k, [200.0; 3], [0.0025, 0.035], [0.0, 0.0]);
        let x = Pose::identity();
        let targets = ControlTargets::hold(x.translated(Vector3::new(d[0], d[1], d[2])));
        let out = net_force(&targets, &Wrench::zero(), &x, &Vector6::zeros(), &p);
        for i in 0..3 {
            prop_assert!((out.force[i] - k[i] * d[i]).abs() < 1e-12);
        }
        prop_assert!(out.torque.amax() < 1e-12);
    }
}

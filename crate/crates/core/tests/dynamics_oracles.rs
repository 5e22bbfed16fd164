//! Joint-space inertia against a Newton–Euler inverse-dynamics oracle.
//!
//! With q̇ = 0 and no gravity, inverse dynamics at q̈ = e_j returns column j
//! of H(q). The oracle in `common` walks world frames built from raw link data
//! and never calls the library's frame or inertia code.

use std::f64::consts::PI;

mod common;

use common::{chain_bodies, one_dof, override_bodies, rnea_inertia, two_dof, Body};
use fdcc_core::config::reference_chain;
use fdcc_core::{joint_space_inertia, simplified_forward_dynamics, InertiaOverrides, Model, VirtualModel, Wrench};
use nalgebra::{DVector, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_against_oracle(model: &Model, bodies: &[Body], seed: u64) {
    let chain = model.chain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let q = DVector::from_fn(chain.dof(), |_, _| rng.gen_range(-PI..PI));
        let h = joint_space_inertia(model, &q).unwrap();
        let oracle = rnea_inertia(chain, bodies, &q);
        let err = (h.matrix() - &oracle).amax();
        assert!(err < 1e-8, "dof {} error {err} at {q}", chain.dof());
        assert!(h.asymmetry() < 1e-10);
        assert!(h.eigenvalues().min() > 0.0, "not positive definite at {q}");
    }
}

/// Criterion 2 on a 1-DOF chain.
#[test]
fn crba_matches_rnea_one_dof() {
    let chain = one_dof();
    let bodies = chain_bodies(&chain);
    check_against_oracle(&VirtualModel::from_chain(chain), &bodies, 10);
}

/// Criterion 2 on a 2-DOF chain with a skewed second axis.
#[test]
fn crba_matches_rnea_two_dof() {
    let chain = two_dof();
    let bodies = chain_bodies(&chain);
    check_against_oracle(&VirtualModel::from_chain(chain), &bodies, 11);
}

/// Criterion 2 on the 6-DOF arm, with its own masses and with the virtual
/// model's overrides.
#[test]
fn crba_matches_rnea_six_dof() {
    let chain = reference_chain();
    let bodies = chain_bodies(&chain);
    check_against_oracle(&VirtualModel::from_chain(chain.clone()), &bodies, 12);

    let o = InertiaOverrides::paper();
    let bodies = override_bodies(&chain, &o);
    check_against_oracle(&VirtualModel::new(chain, o).unwrap(), &bodies, 13);
}

fn virtual_model() -> Model {
    VirtualModel::new(reference_chain(), InertiaOverrides::paper()).unwrap()
}

proptest! {
    #[test]
    fn inertia_is_symmetric_positive_definite(q in prop::array::uniform6(-PI..PI)) {
        let h = joint_space_inertia(&virtual_model(), &DVector::from_row_slice(&q)).unwrap();
        prop_assert!(h.asymmetry() < 1e-10);
        prop_assert!(h.eigenvalues().min() > 0.0);
    }

    #[test]
    fn forward_dynamics_is_linear_in_the_wrench(
        q in prop::array::uniform6(-PI..PI),
        w1 in prop::array::uniform6(-50.0..50.0f64),
        w2 in prop::array::uniform6(-50.0..50.0f64),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
    ) {
        let model = virtual_model();
        let q = DVector::from_row_slice(&q);
        let w = |v: [f64; 6]| Wrench::new(Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5]));
        let (w1, w2) = (w(w1), w(w2));
        // Skip configurations the solver refuses as singular.
        let Ok(q1) = simplified_forward_dynamics(&model, &q, &w1) else { return Ok(()); };
        let q2 = simplified_forward_dynamics(&model, &q, &w2).unwrap();
        let q12 = simplified_forward_dynamics(&model, &q, &(w1 * a + w2 * b)).unwrap();
        let expected = q1 * a + q2 * b;
        let scale = expected.amax().max(1.0);
        prop_assert!((q12 - expected).amax() < 1e-9 * scale);
    }

    #[test]
    fn forward_dynamics_inverts_the_inertia(q in prop::array::uniform6(-PI..PI), f in prop::array::uniform6(-20.0..20.0f64)) {
        let model = virtual_model();
        let q = DVector::from_row_slice(&q);
        let wrench = Wrench::new(Vector3::new(f[0], f[1], f[2]), Vector3::new(f[3], f[4], f[5]));
        let Ok(qdd) = simplified_forward_dynamics(&model, &q, &wrench) else { return Ok(()); };
        let h = joint_space_inertia(&model, &q).unwrap();
        let jac = fdcc_core::geometric_jacobian(model.chain(), &q).unwrap();
        let tau = jac.transpose() * wrench.to_vector();
        let residual = (h.matrix() * qdd - &tau).amax();
        prop_assert!(residual < 1e-8 * tau.amax().max(1.0));
    }
}

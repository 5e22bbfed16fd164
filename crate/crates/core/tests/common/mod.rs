//! Shared oracles for the integration tests.
#![allow(dead_code)]

use fdcc_core::{Chain, InertiaOverrides, Link};
use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, Matrix4, Rotation3, Translation3, UnitQuaternion, Vector3};

pub struct Body {
    pub mass: f64,
    pub com: Vector3<f64>,
    pub inertia: Matrix3<f64>,
}

fn h4(iso: &Isometry3<f64>) -> Matrix4<f64> {
    iso.to_homogeneous()
}

/// Column j of H is the joint torque needed for q̈ = e_j at rest.
pub fn rnea_inertia(chain: &Chain, bodies: &[Body], q: &DVector<f64>) -> DMatrix<f64> {
    let n = chain.dof();
    let mut origins = Vec::new();
    let mut axes = Vec::new();
    let mut frames = Vec::new();
    let mut t = Matrix4::identity();
    for (link, &angle) in chain.links().iter().zip(q.iter()) {
        t *= h4(&link.parent_offset);
        let rot = t.fixed_view::<3, 3>(0, 0).into_owned();
        origins.push(t.fixed_view::<3, 1>(0, 3).into_owned());
        axes.push(rot * link.joint_axis.into_inner());
        let spin = Rotation3::from_axis_angle(&link.joint_axis, angle).to_homogeneous();
        t *= spin;
        frames.push(t);
    }

    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        // Forward pass: accelerations of each body at rest.
        let mut alpha = vec![Vector3::zeros(); n];
        let mut acc_com = vec![Vector3::zeros(); n];
        let mut coms = vec![Vector3::zeros(); n];
        for i in 0..n {
            let f = &frames[i];
            let c = f.fixed_view::<3, 3>(0, 0) * bodies[i].com + f.fixed_view::<3, 1>(0, 3);
            coms[i] = c;
            if i >= j {
                alpha[i] = axes[j];
                acc_com[i] = axes[j].cross(&(c - origins[j]));
            }
        }
        // Backward pass: forces and moments about each joint origin.
        let mut force = Vector3::zeros();
        let mut moment = Vector3::zeros();
        let mut child_origin = Vector3::zeros();
        for i in (0..n).rev() {
            let rot = frames[i].fixed_view::<3, 3>(0, 0).into_owned();
            let inertia_world = rot * bodies[i].inertia * rot.transpose();
            let f_i = acc_com[i] * bodies[i].mass;
            let n_i = inertia_world * alpha[i];
            let o = origins[i];
            moment = n_i + (coms[i] - o).cross(&f_i) + moment + (child_origin - o).cross(&force);
            force += f_i;
            child_origin = o;
            h[(i, j)] = axes[i].dot(&moment);
        }
    }
    h
}

pub fn chain_bodies(chain: &Chain) -> Vec<Body> {
    chain
        .links()
        .iter()
        .map(|l| Body {
            mass: l.mass,
            com: l.com,
            inertia: l.inertia,
        })
        .collect()
}

pub fn override_bodies(chain: &Chain, o: &InertiaOverrides<f64>) -> Vec<Body> {
    let n = chain.dof();
    chain
        .links()
        .iter()
        .enumerate()
        .map(|(i, l)| {
            if i + 1 == n {
                Body {
                    mass: o.end_mass,
                    com: chain.tip_offset().translation.vector,
                    inertia: o.end_inertia,
                }
            } else {
                Body {
                    mass: o.link_mass,
                    com: l.com,
                    inertia: o.link_inertia,
                }
            }
        })
        .collect()
}

pub fn one_dof() -> Chain {
    let link = Link::massless(Isometry3::identity()).with_mass(
        2.0,
        Vector3::new(0.3, 0.0, 0.1),
        Matrix3::from_diagonal(&Vector3::new(0.01, 0.02, 0.03)),
    );
    Chain::new(vec![link], Isometry3::translation(0.5, 0.0, 0.0)).unwrap()
}

pub fn two_dof() -> Chain {
    let first = Link::massless(Isometry3::identity()).with_mass(
        3.0,
        Vector3::new(0.2, 0.05, 0.0),
        Matrix3::from_diagonal(&Vector3::new(0.02, 0.05, 0.05)),
    );
    let offset = Isometry3::from_parts(
        Translation3::new(0.4, 0.0, 0.05),
        UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.3),
    );
    let second = Link::massless(offset).with_axis(Vector3::new(0.0, 1.0, 0.2)).with_mass(
        1.5,
        Vector3::new(0.15, 0.0, 0.02),
        Matrix3::new(0.01, 0.001, 0.0, 0.001, 0.02, 0.0, 0.0, 0.0, 0.02),
    );
    Chain::new(vec![first, second], Isometry3::translation(0.3, 0.0, 0.0)).unwrap()
}

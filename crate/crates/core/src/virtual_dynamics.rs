//! The virtual robot: joint-space inertia, the reduced forward dynamics
//! `q̈ = H⁻¹(q) Jᵀ f` and the integrator that turns accelerations into
//! motion set-points.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3, Vector6};

use crate::controller::Wrench;
use crate::error::{Error, Result};
use crate::kinematics::{check_inertia, jacobian_from_frames, ChainFrames, KinematicChain};
use crate::scalar::{all_finite, Real};

/// Condition number above which `H(q)` is treated as singular.
pub const MAX_INERTIA_CONDITION: f64 = 1e12;

/// Mass properties assigned to the virtual model.
///
/// The end-effector body gets `end_mass`/`end_inertia` with its centre of mass
/// at the probe tip; every other body gets `link_mass`/`link_inertia` at the
/// centre of mass declared in the chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaOverrides<T: Real> {
    pub end_mass: T,
    pub link_mass: T,
    pub end_inertia: Matrix3<T>,
    pub link_inertia: Matrix3<T>,
}

impl<T: Real> InertiaOverrides<T> {
    /// m_e = 1 kg, m_l = 0.01 kg, I_e = diag(1, 1, 1), I_l = 1e-6·I_e.
    pub fn paper() -> Self {
        let end_inertia = Matrix3::identity();
        InertiaOverrides {
            end_mass: T::one(),
            link_mass: T::lit(0.01),
            end_inertia,
            link_inertia: end_inertia * T::lit(1e-6),
        }
    }
}

/// Rigid-body parameters of one virtual body.
#[derive(Debug, Clone, Copy, PartialEq)]
struct BodyInertia<T: Real> {
    mass: T,
    com: Vector3<T>,
    inertia: Matrix3<T>,
}

/// Chain plus the inertia used for the forward-dynamics simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualModel<T: Real> {
    chain: KinematicChain<T>,
    bodies: Vec<BodyInertia<T>>,
    /// Exponential decay rate of the carried joint velocity (1/s); 0 disables it.
    pub joint_damping: T,
}

impl<T: Real> VirtualModel<T> {
    /// Model using the chain's own link masses.
    pub fn from_chain(chain: KinematicChain<T>) -> Self {
        let bodies = chain
            .links()
            .iter()
            .map(|l| BodyInertia {
                mass: l.mass,
                com: l.com,
                inertia: l.inertia,
            })
            .collect();
        VirtualModel {
            chain,
            bodies,
            joint_damping: T::zero(),
        }
    }

    pub fn new(chain: KinematicChain<T>, overrides: InertiaOverrides<T>) -> Result<Self> {
        if !(overrides.end_mass > T::zero()) {
            return Err(Error::param("end_mass", "must be positive"));
        }
        if !(overrides.link_mass >= T::zero()) {
            return Err(Error::param("link_mass", "must be non-negative"));
        }
        check_inertia(&overrides.end_inertia).map_err(|r| Error::param("end_inertia", r))?;
        check_inertia(&overrides.link_inertia).map_err(|r| Error::param("link_inertia", r))?;
        let n = chain.dof();
        let tip_com = chain.tip_offset().translation.vector;
        let bodies = chain
            .links()
            .iter()
            .enumerate()
            .map(|(i, l)| {
                if i + 1 == n {
                    BodyInertia {
                        mass: overrides.end_mass,
                        com: tip_com,
                        inertia: overrides.end_inertia,
                    }
                } else {
                    BodyInertia {
                        mass: overrides.link_mass,
                        com: l.com,
                        inertia: overrides.link_inertia,
                    }
                }
            })
            .collect();
        Ok(VirtualModel {
            chain,
            bodies,
            joint_damping: T::zero(),
        })
    }

    pub fn with_joint_damping(mut self, rate: T) -> Result<Self> {
        if !(rate >= T::zero()) || !rate.finite() {
            return Err(Error::param("joint_damping", "must be finite and non-negative"));
        }
        self.joint_damping = rate;
        Ok(self)
    }

    pub fn chain(&self) -> &KinematicChain<T> {
        &self.chain
    }

    pub fn dof(&self) -> usize {
        self.chain.dof()
    }
}

/// Joint-space inertia `H(q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InertiaMatrix<T: Real>(pub DMatrix<T>);

impl<T: Real> InertiaMatrix<T> {
    pub fn matrix(&self) -> &DMatrix<T> {
        &self.0
    }

    pub fn asymmetry(&self) -> T {
        (&self.0 - self.0.transpose()).amax()
    }

    pub fn eigenvalues(&self) -> DVector<T> {
        self.0.clone().symmetric_eigenvalues()
    }

    pub fn condition_number(&self) -> T {
        let eig = self.eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        if lo <= T::zero() {
            T::max_value().unwrap_or_else(T::one)
        } else {
            hi / lo
        }
    }
}

fn skew<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    Matrix3::new(
        T::zero(),
        -v.z,
        v.y,
        v.z,
        T::zero(),
        -v.x,
        -v.y,
        v.x,
        T::zero(),
    )
}

/// Spatial inertia about the base origin, ordering `[ω; v]`.
fn spatial_inertia_at_origin<T: Real>(mass: T, com: &Vector3<T>, rot_inertia: &Matrix3<T>) -> Matrix6<T> {
    let c = skew(com);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(rot_inertia + c * c.transpose() * mass));
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(c * mass));
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(c.transpose() * mass));
    out.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(Matrix3::identity() * mass));
    out
}

fn inertia_from_frames<T: Real>(model: &VirtualModel<T>, frames: &ChainFrames<T>) -> DMatrix<T> {
    let n = model.dof();
    // Motion subspace of each joint about the base origin: [z; o × z].
    let subspace: Vec<Vector6<T>> = frames
        .joints
        .iter()
        .map(|j| {
            let v = j.origin.cross(&j.axis);
            Vector6::new(j.axis.x, j.axis.y, j.axis.z, v.x, v.y, v.z)
        })
        .collect();

    // Composite inertias accumulated from the tip towards the base.
    let mut composite = Matrix6::zeros();
    let mut h = DMatrix::zeros(n, n);
    for j in (0..n).rev() {
        let body = &model.bodies[j];
        let frame = &frames.links[j];
        let rot = frame.rotation.to_rotation_matrix();
        let com = frame.transform_point(&body.com.into()).coords;
        let rot_inertia = rot.matrix() * body.inertia * rot.matrix().transpose();
        composite += spatial_inertia_at_origin(body.mass, &com, &rot_inertia);

        let force = composite * subspace[j];
        for i in 0..=j {
            let hij = subspace[i].dot(&force);
            h[(i, j)] = hij;
            h[(j, i)] = hij;
        }
    }
    h
}

/// Joint-space inertia by the composite-rigid-body recursion.
pub fn joint_space_inertia<T: Real>(model: &VirtualModel<T>, q: &DVector<T>) -> Result<InertiaMatrix<T>> {
    let frames = model.chain.frames(q)?;
    Ok(InertiaMatrix(inertia_from_frames(model, &frames)))
}

/// `q̈ = H⁻¹(q) Jᵀ f`: gravity, Coriolis and joint torques are all dropped.
pub fn simplified_forward_dynamics<T: Real>(
    model: &VirtualModel<T>,
    q: &DVector<T>,
    wrench: &Wrench<T>,
) -> Result<DVector<T>> {
    let frames = model.chain.frames(q)?;
    solve_from_frames(model, q, &frames, wrench)
}

pub(crate) fn solve_from_frames<T: Real>(
    model: &VirtualModel<T>,
    q: &DVector<T>,
    frames: &ChainFrames<T>,
    wrench: &Wrench<T>,
) -> Result<DVector<T>> {
    if !wrench.is_finite() {
        return Err(Error::NonFinite("wrench"));
    }
    let h = InertiaMatrix(inertia_from_frames(model, frames));
    let singular = |condition: T| Error::Singular {
        q: q.iter().map(|v| v.as_f64()).collect(),
        condition: condition.as_f64(),
    };
    let condition = h.condition_number();
    if !(condition <= T::lit(MAX_INERTIA_CONDITION)) {
        return Err(singular(condition));
    }
    let chol = h.0.clone().cholesky().ok_or_else(|| singular(condition))?;
    let jac = jacobian_from_frames(frames);
    let torque = jac.transpose() * wrench.to_vector();
    Ok(chol.solve(&torque))
}

/// One semi-implicit Euler step: `q̇' = q̇ + q̈·dt`, `q' = q + q̇'·dt`.
pub fn integrate_step<T: Real>(
    q: &DVector<T>,
    qdot: &DVector<T>,
    qddot: &DVector<T>,
    dt: T,
) -> Result<(DVector<T>, DVector<T>)> {
    if !(dt > T::zero()) || !dt.finite() {
        return Err(Error::param("dt", "must be positive and finite"));
    }
    let n = q.len();
    for (what, v) in [("joint velocity", qdot), ("joint acceleration", qddot)] {
        if v.len() != n {
            return Err(Error::Dimension {
                what,
                expected: n,
                actual: v.len(),
            });
        }
    }
    if !all_finite(q.iter()) || !all_finite(qdot.iter()) || !all_finite(qddot.iter()) {
        return Err(Error::NonFinite("integrator state"));
    }
    let qdot_next = qdot + qddot * dt;
    let q_next = q + &qdot_next * dt;
    Ok((q_next, qdot_next))
}

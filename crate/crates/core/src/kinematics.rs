//! Serial revolute chains: forward kinematics and the geometric Jacobian.
//!
//! A chain is a list of links. Each link is reached from its parent frame
//! through a fixed `parent_offset`, then rotated about `joint_axis` (expressed
//! in the frame after the offset) by the joint angle. The last link carries a
//! fixed `tip_offset` to the probe tip, which is the frame reported by
//! [`forward_kinematics`].

use nalgebra::{
    DVector, Isometry3, Matrix3, Matrix6xX, Translation3, Unit, UnitQuaternion, Vector3, Vector6,
};

use crate::error::{Error, Result};
use crate::scalar::{all_finite, Real};

/// One rigid link and the revolute joint that drives it.
#[derive(Debug, Clone, PartialEq)]
pub struct Link<T: Real> {
    pub parent_offset: Isometry3<T>,
    pub joint_axis: Unit<Vector3<T>>,
    pub mass: T,
    /// Rotational inertia about the centre of mass, link frame (kg·m²).
    pub inertia: Matrix3<T>,
    /// Centre of mass in the link frame (m).
    pub com: Vector3<T>,
}

impl<T: Real> Link<T> {
    /// Link rotating about the local z axis with no mass attached.
    pub fn massless(parent_offset: Isometry3<T>) -> Self {
        Link {
            parent_offset,
            joint_axis: Vector3::z_axis(),
            mass: T::zero(),
            inertia: Matrix3::zeros(),
            com: Vector3::zeros(),
        }
    }

    pub fn with_axis(mut self, axis: Vector3<T>) -> Self {
        self.joint_axis = Unit::new_normalize(axis);
        self
    }

    pub fn with_mass(mut self, mass: T, com: Vector3<T>, inertia: Matrix3<T>) -> Self {
        self.mass = mass;
        self.com = com;
        self.inertia = inertia;
        self
    }

    fn validate(&self, index: usize) -> Result<()> {
        let tol = T::lit(1e-9);
        if (self.joint_axis.norm() - T::one()).abs() > tol {
            return Err(Error::InvalidChain(format!("link {index}: joint axis not unit")));
        }
        if !(self.mass >= T::zero()) {
            return Err(Error::InvalidChain(format!("link {index}: negative mass")));
        }
        check_inertia(&self.inertia).map_err(|e| Error::InvalidChain(format!("link {index}: {e}")))
    }
}

/// Checks that a rotational inertia is symmetric positive semi-definite.
pub(crate) fn check_inertia<T: Real>(inertia: &Matrix3<T>) -> std::result::Result<(), String> {
    if !all_finite(inertia.iter()) {
        return Err("inertia has non-finite entries".into());
    }
    let scale = inertia.amax().max(T::one());
    if (inertia - inertia.transpose()).amax() > T::lit(1e-10) * scale {
        return Err("inertia not symmetric".into());
    }
    let min_eig = inertia.symmetric_eigenvalues().min();
    if min_eig < -T::lit(1e-12) * scale {
        return Err("inertia has a negative eigenvalue".into());
    }
    Ok(())
}

/// Ordered revolute chain ending at the probe tip.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain<T: Real> {
    links: Vec<Link<T>>,
    tip_offset: Isometry3<T>,
}

impl<T: Real> KinematicChain<T> {
    pub fn new(links: Vec<Link<T>>, tip_offset: Isometry3<T>) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::InvalidChain("chain needs at least one joint".into()));
        }
        for (i, link) in links.iter().enumerate() {
            link.validate(i)?;
        }
        // Each link must have positive length: distance from its joint to the
        // next joint (or to the tip for the last link).
        for i in 0..links.len() {
            let next = links.get(i + 1).map_or(&tip_offset, |l| &l.parent_offset);
            if next.translation.vector.norm() <= T::zero() {
                return Err(Error::InvalidChain(format!("link {i} has zero length")));
            }
        }
        Ok(KinematicChain { links, tip_offset })
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[Link<T>] {
        &self.links
    }

    pub fn tip_offset(&self) -> &Isometry3<T> {
        &self.tip_offset
    }

    /// Replaces the probe extension on the last link.
    pub fn with_tip_offset(mut self, tip_offset: Isometry3<T>) -> Result<Self> {
        if tip_offset.translation.vector.norm() <= T::zero() {
            return Err(Error::InvalidChain("tip offset has zero length".into()));
        }
        self.tip_offset = tip_offset;
        Ok(self)
    }

    pub(crate) fn check_q(&self, q: &DVector<T>) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::Dimension {
                what: "joint vector",
                expected: self.dof(),
                actual: q.len(),
            });
        }
        if !all_finite(q.iter()) {
            return Err(Error::NonFinite("joint vector"));
        }
        Ok(())
    }

    /// World frames of every joint and link at `q`, plus the tip.
    pub fn frames(&self, q: &DVector<T>) -> Result<ChainFrames<T>> {
        self.check_q(q)?;
        let n = self.dof();
        let mut joints = Vec::with_capacity(n);
        let mut links = Vec::with_capacity(n);
        let mut current = Isometry3::identity();
        for (link, &angle) in self.links.iter().zip(q.iter()) {
            let before_joint = current * link.parent_offset;
            let axis = before_joint.rotation * link.joint_axis.into_inner();
            joints.push(JointFrame {
                origin: before_joint.translation.vector,
                axis,
            });
            current = before_joint * UnitQuaternion::from_axis_angle(&link.joint_axis, angle);
            links.push(current);
        }
        let tip = current * self.tip_offset;
        Ok(ChainFrames { joints, links, tip })
    }
}

/// Joint axis and origin in the base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointFrame<T: Real> {
    pub origin: Vector3<T>,
    pub axis: Vector3<T>,
}

/// Result of a forward pass over the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainFrames<T: Real> {
    pub joints: Vec<JointFrame<T>>,
    /// Pose of each link frame (after its joint rotation).
    pub links: Vec<Isometry3<T>>,
    pub tip: Isometry3<T>,
}

/// Position and orientation of a frame in the base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T: Real> {
    pub position: Vector3<T>,
    pub orientation: UnitQuaternion<T>,
}

impl<T: Real> Pose<T> {
    pub fn new(position: Vector3<T>, orientation: UnitQuaternion<T>) -> Self {
        Pose {
            position,
            orientation,
        }
    }

    pub fn identity() -> Self {
        Pose::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn from_isometry(iso: &Isometry3<T>) -> Self {
        Pose::new(iso.translation.vector, iso.rotation)
    }

    pub fn to_isometry(&self) -> Isometry3<T> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    /// Pose displaced by `delta` in the base frame.
    pub fn translated(&self, delta: Vector3<T>) -> Self {
        Pose::new(self.position + delta, self.orientation)
    }

    /// Pose error `target − self` as a 6-vector `[dp; dθ]`, both in the base frame.
    ///
    /// The rotational part is the axis-angle vector of `R_target · Rᵀ`.
    pub fn error_to(&self, target: &Pose<T>) -> Vector6<T> {
        let dp = target.position - self.position;
        let dr = (target.orientation * self.orientation.inverse()).scaled_axis();
        Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
    }

    /// Rotates a base-frame vector into this frame's axes.
    pub fn to_local(&self, v: &Vector3<T>) -> Vector3<T> {
        self.orientation.inverse_transform_vector(v)
    }

    /// Rotates a vector expressed in this frame's axes into the base frame.
    pub fn to_base(&self, v: &Vector3<T>) -> Vector3<T> {
        self.orientation.transform_vector(v)
    }
}

/// Joint positions and velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState<T: Real> {
    pub q: DVector<T>,
    pub qdot: DVector<T>,
}

impl<T: Real> JointState<T> {
    pub fn at_rest(q: DVector<T>) -> Self {
        let n = q.len();
        JointState {
            q,
            qdot: DVector::zeros(n),
        }
    }

    pub fn is_finite(&self) -> bool {
        all_finite(self.q.iter()) && all_finite(self.qdot.iter())
    }
}

/// Probe tip pose in the base frame.
pub fn forward_kinematics<T: Real>(chain: &KinematicChain<T>, q: &DVector<T>) -> Result<Pose<T>> {
    Ok(Pose::from_isometry(&chain.frames(q)?.tip))
}

/// Geometric Jacobian at the probe tip, rows `[v; ω]` in the base frame.
pub fn geometric_jacobian<T: Real>(
    chain: &KinematicChain<T>,
    q: &DVector<T>,
) -> Result<Matrix6xX<T>> {
    Ok(jacobian_from_frames(&chain.frames(q)?))
}

pub(crate) fn jacobian_from_frames<T: Real>(frames: &ChainFrames<T>) -> Matrix6xX<T> {
    let tip = frames.tip.translation.vector;
    let mut jac = Matrix6xX::zeros(frames.joints.len());
    for (i, joint) in frames.joints.iter().enumerate() {
        let lin = joint.axis.cross(&(tip - joint.origin));
        jac.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
        jac.fixed_view_mut::<3, 1>(3, i).copy_from(&joint.axis);
    }
    jac
}

/// Builds `Tz(d)·Tx(a)·Rx(α)`, the fixed part of a standard DH row.
pub fn dh_offset<T: Real>(d: T, a: T, alpha: T) -> Isometry3<T> {
    Isometry3::from_parts(
        Translation3::new(a, T::zero(), d),
        UnitQuaternion::from_axis_angle(&Vector3::x_axis(), alpha),
    )
}

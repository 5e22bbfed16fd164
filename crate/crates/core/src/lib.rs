//! Forward dynamics compliance control for position- and velocity-interfaced
//! serial manipulators, with a simulated robot and force-control benchmarks.
//!
//! The kinematic, dynamic and control layers are generic over [`Real`]
//! (`f32`/`f64`); the simulation and benchmark layers run in `f64`.

pub mod bench;
pub mod config;
pub mod controller;
pub mod error;
pub mod kinematics;
pub mod plant;
pub mod scalar;
pub mod virtual_dynamics;

pub use controller::{
    control_cycle, net_force, pd_regulate, ComplianceParams, ControlMode, ControlTargets, ControllerState,
    FdccController, JointCommand, Wrench,
};
pub use error::{Error, Result};
pub use kinematics::{forward_kinematics, geometric_jacobian, JointState, KinematicChain, Link, Pose};
pub use scalar::Real;
pub use virtual_dynamics::{
    integrate_step, joint_space_inertia, simplified_forward_dynamics, InertiaMatrix, InertiaOverrides, VirtualModel,
};

pub type Chain = KinematicChain<f64>;
pub type Chain32 = KinematicChain<f32>;
pub type Model = VirtualModel<f64>;
pub type Model32 = VirtualModel<f32>;
pub type Controller = FdccController<f64>;
pub type Controller32 = FdccController<f32>;
pub type Wrench64 = Wrench<f64>;
pub type Pose64 = Pose<f64>;

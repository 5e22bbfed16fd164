//! Chain definition files.
//!
//! ```toml
//! schema_version = 1
//! name = "arm"
//!
//! [[link]]                      # one per joint, base to tip
//! offset_xyz = [0.0, 0.0, 0.1]  # m, from the previous link frame
//! offset_rpy = [0.0, 0.0, 0.0]  # rad, roll-pitch-yaw applied after the translation
//! axis = [0.0, 0.0, 1.0]        # joint axis after the offset (normalised on load)
//! mass = 1.0                    # kg
//! com = [0.0, 0.0, 0.05]        # m, link frame
//! inertia_diag = [0.1, 0.1, 0.1]  # kg·m² about the centre of mass
//!
//! [tip]
//! offset_xyz = [0.0, 0.0, 0.1]  # flange relative to the last link frame
//! offset_rpy = [0.0, 0.0, 0.0]
//! probe_length = 0.2            # m along the flange z axis (optional)
//! ```

use std::path::Path;

use nalgebra::{Isometry3, Matrix3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::ConfigError;
use crate::kinematics::{KinematicChain, Link};

pub const CHAIN_SCHEMA_VERSION: u32 = 1;

const REFERENCE_CHAIN: &str = include_str!("../../data/ur10e.toml");

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainFile {
    schema_version: u32,
    #[serde(default)]
    name: String,
    link: Vec<LinkEntry>,
    tip: TipEntry,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkEntry {
    offset_xyz: [f64; 3],
    #[serde(default)]
    offset_rpy: [f64; 3],
    #[serde(default = "z_axis")]
    axis: [f64; 3],
    #[serde(default)]
    mass: f64,
    #[serde(default)]
    com: [f64; 3],
    #[serde(default)]
    inertia_diag: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TipEntry {
    offset_xyz: [f64; 3],
    #[serde(default)]
    offset_rpy: [f64; 3],
    #[serde(default)]
    probe_length: f64,
}

fn z_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn offset(xyz: [f64; 3], rpy: [f64; 3]) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(xyz[0], xyz[1], xyz[2]),
        UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
    )
}

/// Parses a chain definition from TOML text.
pub fn parse_chain(text: &str) -> Result<KinematicChain<f64>, ConfigError> {
    let file: ChainFile = toml::from_str(text).map_err(|e| ConfigError::from_toml(text, &e))?;
    if file.schema_version != CHAIN_SCHEMA_VERSION {
        return Err(ConfigError::validation(
            "schema_version",
            super::find_key_line(text, "schema_version", 0),
            format!("unsupported version {}", file.schema_version),
        ));
    }
    let links = file
        .link
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let axis = Vector3::from(l.axis);
            if axis.norm() == 0.0 {
                return Err(ConfigError::validation(
                    format!("link[{i}].axis"),
                    super::find_key_line(text, "axis", i),
                    "zero axis".to_string(),
                ));
            }
            Ok(Link::massless(offset(l.offset_xyz, l.offset_rpy))
                .with_axis(axis)
                .with_mass(l.mass, Vector3::from(l.com), Matrix3::from_diagonal(&Vector3::from(l.inertia_diag))))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let tip = offset(file.tip.offset_xyz, file.tip.offset_rpy) * Translation3::new(0.0, 0.0, file.tip.probe_length);
    KinematicChain::new(links, tip).map_err(|e| ConfigError::validation("link", None, e.to_string()))
}

pub fn load_chain(path: &Path) -> Result<KinematicChain<f64>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::io(path, e))?;
    parse_chain(&text)
}

/// The shipped UR10e-like chain with its 0.20 m probe.
pub fn reference_chain() -> KinematicChain<f64> {
    parse_chain(REFERENCE_CHAIN).expect("bundled chain file is valid")
}

/// Joint configuration used as the start pose of every benchmark: elbow up,
/// probe pointing straight down.
pub fn reference_home() -> [f64; 6] {
    use std::f64::consts::FRAC_PI_2;
    [0.0, -FRAC_PI_2, FRAC_PI_2, -FRAC_PI_2, -FRAC_PI_2, 0.0]
}

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::airmass::AirMassVector;
use crate::geometry::PlanarPose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BodyId {
    Palm,
    Link { digit: usize, link: usize },
    Object { index: usize },
}

impl fmt::Display for BodyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BodyId::Palm => write!(f, "palm"),
            BodyId::Link { digit, link } => write!(f, "digit {digit} link {link}"),
            BodyId::Object { index } => write!(f, "object {index}"),
        }
    }
}

/// Planar twist of a rigid object.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Velocity {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactPoint {
    pub position: [f64; 2],
    /// Unit normal pointing from `bodies.0` to `bodies.1`.
    pub normal: [f64; 2],
    pub penetration_depth: f64,
    pub bodies: (BodyId, BodyId),
    pub normal_impulse: f64,
    pub tangent_impulse: f64,
    /// Combined Coulomb coefficient used for this contact.
    pub friction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SimStatus {
    Valid,
    Invalid { reason: String },
}

/// Full simulation state at one instant. Joint vectors are flattened in
/// digit order (see [`crate::hand::HandSpec::joint_offsets`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub joint_angles: Vec<f64>,
    pub joint_velocities: Vec<f64>,
    pub object_poses: Vec<PlanarPose>,
    pub object_velocities: Vec<Velocity>,
    pub current_airmass: AirMassVector,
    pub time: f64,
    pub contacts: Vec<ContactPoint>,
    pub status: SimStatus,
}

impl WorldState {
    pub fn is_valid(&self) -> bool {
        matches!(self.status, SimStatus::Valid)
    }
}

//! Planar simulator of a compliant multi-finger hand running open-loop
//! keyframe skills, with funnel analysis and a cube-orientation planner.

pub mod airmass;
pub mod error;
pub mod fixtures;
pub mod funnel;
pub mod geometry;
pub mod hand;
pub mod object;
pub mod planner;
pub mod sim;
pub mod skill;
pub mod world;

pub use airmass::AirMassVector;
pub use error::{Error, Result};
pub use funnel::{
    check_composable, contraction_ratio, keyframe_breakdown, sample_entrance, FunnelEstimate, FunnelSample, KeyframeBreakdown, Margin,
};
pub use geometry::PlanarPose;
pub use hand::{load_hand_spec, rest_configuration, DigitSpec, HandSpec, JointSpec, LinkSpec};
pub use object::{load_object_spec, ObjectSpec, Shape};
pub use sim::{step, SimConfig, Simulator};
pub use skill::{
    compose, interpolate, load_skill, loop_skill, play, save_skill, Keyframe, Outcome, PlayOptions, Player, PoseRegion, Skill,
    TrajectoryLog,
};
pub use world::{BodyId, ContactPoint, SimStatus, Velocity, WorldState};

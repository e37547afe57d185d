//! Experiment harness and interactive session server for `funnelhand`.

pub mod config;
pub mod plot;
pub mod protocol;
pub mod server;
pub mod session;
pub mod sweep;

use std::collections::BTreeMap;

use anyhow::Result;
use funnelhand::{AirMassVector, HandSpec, ObjectSpec, PlanarPose, SimConfig, Simulator, Skill};

pub use config::{ExperimentConfig, Resources, Sweep, Thresholds, HAND_ENV};
pub use plot::emit_plots;
pub use session::Session;
pub use sweep::{run_sweep, SweepReport};

/// Where a fresh session puts the manipulandum: centred above the palm.
pub const SESSION_START: PlanarPose = PlanarPose {
    x: 0.0,
    y: 0.03,
    theta: 0.0,
};

/// A session with the hand relaxed (all air masses zero) and object 0 at
/// [`SESSION_START`]; further objects are parked away from the hand.
pub fn new_session(hand: HandSpec, objects: Vec<ObjectSpec>, skills: BTreeMap<String, Skill>, dt: f64) -> Result<Session> {
    let sim = Simulator::new(hand, objects, SimConfig::with_dt(dt))?;
    let poses = sweep::parked_poses(&sim, SESSION_START);
    let world = sim.initial_world(&AirMassVector::zeros(sim.hand().actuator_count), &poses)?;
    Ok(Session::new(sim, world, skills))
}

//! One interactive authoring session: a world stepped at a fixed rate, a
//! slider-driven air-mass vector, a keyframe draft and skill playback.
//!
//! [`Session`] is synchronous. The server feeds it messages between steps
//! and calls [`Session::tick`] once per simulation step.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use funnelhand::planner::{Axis, CubeRotation};
use funnelhand::skill::rotation_between;
use funnelhand::{
    save_skill, Keyframe, PlanarPose, PlayOptions, Player, PoseRegion, SimStatus, Simulator, Skill, TrajectoryLog, WorldState,
};

use crate::protocol::{ClientMessage, ServerMessage, StateFrame};

/// Emitted state frames per simulated second.
pub const FRAME_RATE: f64 = 60.0;

/// Hold assigned to the newest captured keyframe until the next capture
/// fixes its transition time.
pub const CAPTURE_HOLD: f64 = 0.5;

/// Half-widths of the entrance and exit boxes written for a saved draft.
pub const DRAFT_BOX: (f64, f64) = (0.005, 0.1);

/// Name under which the unsaved draft can be played.
pub const DRAFT: &str = "draft";

#[derive(Debug, Clone)]
struct Playback {
    name: String,
    time_scale: f64,
    player: Player,
}

#[derive(Debug, Clone)]
pub struct Session {
    sim: Simulator,
    initial: WorldState,
    world: WorldState,
    library: BTreeMap<String, Skill>,
    draft: Vec<Keyframe>,
    draft_poses: Vec<PlanarPose>,
    last_capture: f64,
    playback: Option<Playback>,
    next_frame: f64,
    last_log: Option<TrajectoryLog>,
}

/// Everything a client message may change, for comparing before and after.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub world: WorldState,
    pub draft: Vec<Keyframe>,
    pub draft_poses: Vec<PlanarPose>,
    pub last_capture: f64,
    pub playing: Option<(String, usize)>,
    pub skills: Vec<String>,
}

impl Session {
    /// Starts from `initial`; `library` holds the skills playable by name.
    pub fn new(sim: Simulator, initial: WorldState, library: BTreeMap<String, Skill>) -> Self {
        Self {
            sim,
            world: initial.clone(),
            initial,
            library,
            draft: Vec::new(),
            draft_poses: Vec::new(),
            last_capture: 0.0,
            playback: None,
            next_frame: 1.0 / FRAME_RATE,
            last_log: None,
        }
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn draft(&self) -> &[Keyframe] {
        &self.draft
    }

    pub fn is_playing(&self) -> bool {
        self.playback.is_some()
    }

    /// Log of the most recent completed playback.
    pub fn last_log(&self) -> Option<&TrajectoryLog> {
        self.last_log.as_ref()
    }

    pub fn state(&self) -> SessionState {
        SessionState {
            world: self.world.clone(),
            draft: self.draft.clone(),
            draft_poses: self.draft_poses.clone(),
            last_capture: self.last_capture,
            playing: self.playback.as_ref().map(|p| (p.name.clone(), p.player.log().samples.len())),
            skills: self.library.keys().cloned().collect(),
        }
    }

    pub fn frame(&self) -> ServerMessage {
        ServerMessage::StateFrame(StateFrame {
            time: self.world.time,
            joint_angles: self.world.joint_angles.clone(),
            object_poses: self.world.object_poses.clone(),
            airmass: self.world.current_airmass.values().to_vec(),
            contacts: self.world.contacts.clone(),
            playing: self.playback.as_ref().map(|p| p.name.clone()),
        })
    }

    /// Parses and applies one raw message. Anything malformed produces an
    /// error reply and leaves the session untouched.
    pub fn handle_text(&mut self, text: &str) -> Vec<ServerMessage> {
        match ClientMessage::from_json(text) {
            Ok(m) => self.handle(m),
            Err(e) => vec![ServerMessage::error(e)],
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        let reply = match msg {
            ClientMessage::Reset => {
                self.reset();
                return Vec::new();
            }
            _ if self.playback.is_some() => Err("playback in progress".to_string()),
            ClientMessage::SetSlider { index, value } => self.set_slider(index, value).map(|_| None),
            ClientMessage::CaptureKeyframe { label } => self.capture(label).map(Some),
            ClientMessage::PlaySkill { name, time_scale } => self.start_playback(&name, time_scale).map(|_| None),
            ClientMessage::PlaceObject { pose, object } => self.place(object, pose).map(|_| None),
            ClientMessage::SaveSkill { path } => self.save(&path).map(Some),
        };
        match reply {
            Ok(Some(m)) => vec![m],
            Ok(None) => Vec::new(),
            Err(e) => vec![ServerMessage::error(e)],
        }
    }

    fn reset(&mut self) {
        self.world = self.initial.clone();
        self.draft.clear();
        self.draft_poses.clear();
        self.last_capture = self.world.time;
        self.playback = None;
        self.next_frame = self.world.time + 1.0 / FRAME_RATE;
    }

    fn set_slider(&mut self, index: usize, value: f64) -> Result<(), String> {
        if !(0.0..=1.0).contains(&value) || index >= self.sim.hand().actuator_count {
            return Err("slider out of range".into());
        }
        let a = self.world.current_airmass.with(index, value).map_err(|e| e.to_string())?;
        self.sim.set_actuation(&mut self.world, &a).map_err(|e| e.to_string())
    }

    fn capture(&mut self, label: Option<String>) -> Result<ServerMessage, String> {
        let elapsed = self.world.time - self.last_capture;
        if !self.draft.is_empty() && elapsed <= 0.0 {
            return Err("no time has passed since the previous capture".into());
        }
        let label = label.unwrap_or_else(|| format!("KF{}", self.draft.len() + 1));
        if label.is_empty() {
            return Err("keyframe label must not be empty".into());
        }
        let previous_duration_s = self.draft.last_mut().map(|k| {
            k.transition_duration = elapsed;
            elapsed
        });
        self.draft
            .push(Keyframe::new(label.clone(), self.world.current_airmass.clone(), CAPTURE_HOLD));
        self.draft_poses.push(self.world.object_poses[0]);
        self.last_capture = self.world.time;
        Ok(ServerMessage::KeyframeAck {
            label,
            index: self.draft.len() - 1,
            count: self.draft.len(),
            previous_duration_s,
        })
    }

    /// The draft as a skill: boxes around the object poses seen at the first
    /// and last capture, and the nearest quarter turn between them as effect.
    pub fn draft_skill(&self, name: &str) -> Result<Skill, String> {
        let (Some(first), Some(last)) = (self.draft_poses.first(), self.draft_poses.last()) else {
            return Err("the draft has no keyframes".into());
        };
        let around = |p: &PlanarPose| PoseRegion::point(*p).inflate(DRAFT_BOX.0, DRAFT_BOX.1);
        let turns = (rotation_between(first, last) / FRAC_PI_2).round() as i32;
        let skill = Skill::new(
            name,
            self.draft.clone(),
            CubeRotation::about(Axis::Z, turns),
            around(first),
            around(last),
        )
        .map_err(|e| e.to_string())?;
        Ok(skill.with_nominal_start(*first))
    }

    fn start_playback(&mut self, name: &str, time_scale: f64) -> Result<(), String> {
        if !self.world.is_valid() {
            return Err("the world is invalid; send reset".into());
        }
        let skill = if name == DRAFT {
            self.draft_skill(DRAFT)?
        } else {
            self.library.get(name).cloned().ok_or_else(|| format!("unknown skill `{name}`"))?
        };
        let player = Player::new(&skill, &self.sim, &self.world, &PlayOptions::scaled(time_scale)).map_err(|e| e.to_string())?;
        self.playback = Some(Playback {
            name: skill.name.clone(),
            time_scale,
            player,
        });
        Ok(())
    }

    fn place(&mut self, object: usize, pose: PlanarPose) -> Result<(), String> {
        if !(pose.x.is_finite() && pose.y.is_finite() && pose.theta.is_finite()) {
            return Err("pose must be finite".into());
        }
        self.sim.place_object(&mut self.world, object, pose).map_err(|e| e.to_string())
    }

    fn save(&mut self, path: &str) -> Result<ServerMessage, String> {
        let p = Path::new(path);
        let name = p
            .file_stem()
            .and_then(|s| s.to_str())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| format!("cannot name a skill after `{path}`"))?;
        let skill = self.draft_skill(name)?;
        std::fs::write(p, save_skill(&skill)).map_err(|e| format!("writing {path}: {e}"))?;
        let keyframes = skill.keyframes.len();
        self.library.insert(name.to_string(), skill);
        Ok(ServerMessage::SkillSaved {
            path: path.to_string(),
            name: name.to_string(),
            keyframes,
        })
    }

    /// Advances one simulation step, returning any frame or outcome due.
    pub fn tick(&mut self) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        if !self.world.is_valid() {
            return out;
        }
        if let Some(pb) = &mut self.playback {
            match pb.player.advance(&self.sim, &mut self.world) {
                Ok(false) => {}
                Ok(true) => {
                    let pb = self.playback.take().expect("playing");
                    let log = pb.player.finish();
                    out.push(ServerMessage::Outcome {
                        skill: pb.name,
                        time_scale: pb.time_scale,
                        result: log.outcome.clone(),
                        final_pose: self.world.object_poses[0],
                    });
                    self.last_log = Some(log);
                }
                Err(e) => {
                    self.playback = None;
                    out.push(ServerMessage::error(format!("playback failed: {e}")));
                }
            }
        } else if let Err(e) = self.sim.step(&mut self.world) {
            out.push(ServerMessage::error(format!("step failed: {e}")));
        }
        if let SimStatus::Invalid { reason } = &self.world.status {
            out.push(ServerMessage::error(format!("simulation became invalid: {reason}; send reset")));
        }
        if self.world.time + 1e-9 >= self.next_frame {
            out.push(self.frame());
            while self.next_frame <= self.world.time + 1e-9 {
                self.next_frame += 1.0 / FRAME_RATE;
            }
        }
        out
    }
}

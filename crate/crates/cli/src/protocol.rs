//! Session wire format: each message is a 4-byte big-endian length followed
//! by that many bytes of UTF-8 JSON. Every message carries `"v"`, the
//! protocol version, and `"type"`. See `docs/protocol.md`.

use std::io::{self, Read, Write};

use funnelhand::{ContactPoint, Outcome, PlanarPose};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u64 = 1;

/// Frames longer than this are refused and end the connection.
pub const MAX_FRAME: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    SetSlider {
        index: usize,
        value: f64,
    },
    CaptureKeyframe {
        #[serde(default)]
        label: Option<String>,
    },
    PlaySkill {
        name: String,
        #[serde(default = "unit")]
        time_scale: f64,
    },
    PlaceObject {
        pose: PlanarPose,
        #[serde(default)]
        object: usize,
    },
    Reset,
    SaveSkill {
        path: String,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub time: f64,
    pub joint_angles: Vec<f64>,
    pub object_poses: Vec<PlanarPose>,
    pub airmass: Vec<f64>,
    pub contacts: Vec<ContactPoint>,
    /// Name of the skill being played, if any.
    pub playing: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    StateFrame(StateFrame),
    KeyframeAck {
        label: String,
        index: usize,
        count: usize,
        /// Transition time assigned to the previous keyframe.
        previous_duration_s: Option<f64>,
    },
    Outcome {
        skill: String,
        time_scale: f64,
        result: Outcome,
        final_pose: PlanarPose,
    },
    SkillSaved {
        path: String,
        name: String,
        keyframes: usize,
    },
    Error {
        message: String,
    },
}

impl ServerMessage {
    pub fn error(message: impl Into<String>) -> Self {
        ServerMessage::Error { message: message.into() }
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("server message serializes");
        v["v"] = PROTOCOL_VERSION.into();
        v.to_string()
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let mut v: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        strip_version(&mut v)?;
        serde_json::from_value(v).map_err(|e| e.to_string())
    }
}

fn strip_version(v: &mut Value) -> Result<(), String> {
    let obj = v.as_object_mut().ok_or("message must be a JSON object")?;
    match obj.remove("v") {
        None => Ok(()),
        Some(Value::Number(n)) if n.as_u64() == Some(PROTOCOL_VERSION) => Ok(()),
        Some(other) => Err(format!("unsupported protocol version {other}")),
    }
}

impl ClientMessage {
    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("client message serializes");
        v["v"] = PROTOCOL_VERSION.into();
        v.to_string()
    }

    /// Parses one message. A missing `"v"` is read as the current version.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let mut v: Value = serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))?;
        strip_version(&mut v)?;
        serde_json::from_value(v).map_err(|e| format!("malformed message: {e}"))
    }
}

pub fn write_frame(w: &mut impl Write, text: &str) -> io::Result<()> {
    let len = u32::try_from(text.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too long"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(text.as_bytes())
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame(r: &mut impl Read) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {n} bytes exceeds {MAX_FRAME}"),
        ));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

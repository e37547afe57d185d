//! Bundled hand, objects and skills, embedded at compile time.

use crate::error::{Error, Result};
use crate::hand::{load_hand_spec, HandSpec};
use crate::object::{load_object_spec, load_object_specs, ObjectSpec};
use crate::skill::{load_skill, Skill};

pub const PLANAR_RBO: &str = include_str!("../fixtures/hands/planar-rbo.json");
pub const CUBE45: &str = include_str!("../fixtures/objects/cube45.json");
pub const OBJECT_SET: &str = include_str!("../fixtures/objects/object-set.json");

pub const SKILLS: [(&str, &str); 6] = [
    ("spin", include_str!("../fixtures/skills/spin.json")),
    ("shift", include_str!("../fixtures/skills/shift.json")),
    ("spin+shift", include_str!("../fixtures/skills/spin-shift.json")),
    ("twist", include_str!("../fixtures/skills/twist.json")),
    ("pivot", include_str!("../fixtures/skills/pivot.json")),
    ("mr-gait", include_str!("../fixtures/skills/mr-gait.json")),
];

pub fn default_hand() -> HandSpec {
    load_hand_spec(PLANAR_RBO).expect("bundled hand is valid")
}

pub fn cube45() -> ObjectSpec {
    load_object_spec(CUBE45).expect("bundled cube is valid")
}

pub fn object_set() -> Vec<ObjectSpec> {
    load_object_specs(OBJECT_SET).expect("bundled object set is valid")
}

pub fn skill(name: &str) -> Result<Skill> {
    SKILLS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::InvalidArgument(format!("no bundled skill named `{name}`")))
        .and_then(|(_, doc)| load_skill(doc))
}

/// The four skills whose effects drive the planner: spin, twist, pivot and
/// the MR gait.
pub fn planner_skills() -> Vec<Skill> {
    ["spin", "twist", "pivot", "mr-gait"]
        .iter()
        .map(|n| skill(n).expect("bundled skill is valid"))
        .collect()
}

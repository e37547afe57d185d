//! Hand description: digits as planar chains of capsule links with
//! torsional-spring joints whose rest angle and stiffness follow the
//! commanded air mass.

use serde::{Deserialize, Serialize};

use crate::airmass::AirMassVector;
use crate::error::{Error, Result};
use crate::geometry::{is_convex, rotate, Hull, PlanarPose, Vec2};

fn default_palm_friction() -> f64 {
    0.8
}

fn default_link_mass_per_length() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub length: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub actuator_index: usize,
    pub rest_angle_min: f64,
    pub rest_angle_max: f64,
    pub stiffness_min: f64,
    pub stiffness_max: f64,
    pub damping: f64,
    pub angle_limits: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitSpec {
    #[serde(default)]
    pub name: String,
    pub base_pose: PlanarPose,
    pub links: Vec<LinkSpec>,
    pub joints: Vec<JointSpec>,
    pub friction_coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandSpec {
    pub name: String,
    pub actuator_count: usize,
    pub palm_polygon: Vec<[f64; 2]>,
    #[serde(default = "default_palm_friction")]
    pub palm_friction: f64,
    /// Linear density of finger links (kg/m), used for joint inertia.
    #[serde(default = "default_link_mass_per_length")]
    pub link_mass_per_length: f64,
    pub digits: Vec<DigitSpec>,
}

/// Parses and validates a hand document (JSON).
pub fn load_hand_spec(document: &str) -> Result<HandSpec> {
    let spec: HandSpec = serde_json::from_str(document)?;
    spec.validate()?;
    Ok(spec)
}

impl HandSpec {
    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(self).expect("hand spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.palm_polygon.len() < 3 || !is_convex(&self.palm_polygon) {
            return Err(Error::validation("palm_polygon", "must be convex with at least 3 vertices"));
        }
        if !(self.palm_friction >= 0.0) {
            return Err(Error::validation("palm_friction", "must be ≥ 0"));
        }
        if !(self.link_mass_per_length > 0.0) {
            return Err(Error::validation("link_mass_per_length", "must be > 0"));
        }
        if self.digits.is_empty() {
            return Err(Error::validation("digits", "hand needs at least one digit"));
        }
        let mut used = vec![false; self.actuator_count];
        for (d, digit) in self.digits.iter().enumerate() {
            let f = |name: &str| format!("digits[{d}].{name}");
            if digit.links.is_empty() {
                return Err(Error::validation(f("links"), "digit needs at least one link"));
            }
            if digit.joints.len() != digit.links.len() {
                return Err(Error::validation(
                    f("joints"),
                    format!("{} joints for {} links", digit.joints.len(), digit.links.len()),
                ));
            }
            if !(digit.friction_coefficient >= 0.0) {
                return Err(Error::validation(f("friction_coefficient"), "must be ≥ 0"));
            }
            for (l, link) in digit.links.iter().enumerate() {
                if !(link.length > 0.0) || !(link.width > 0.0) {
                    return Err(Error::validation(f(&format!("links[{l}]")), "length and width must be > 0"));
                }
            }
            for (j, joint) in digit.joints.iter().enumerate() {
                let jf = |name: &str| f(&format!("joints[{j}].{name}"));
                if joint.actuator_index >= self.actuator_count {
                    return Err(Error::validation(
                        jf("actuator_index"),
                        format!("index {} outside [0, {})", joint.actuator_index, self.actuator_count),
                    ));
                }
                used[joint.actuator_index] = true;
                if !(joint.stiffness_min > 0.0) {
                    return Err(Error::validation(jf("stiffness_min"), "must be > 0"));
                }
                if !(joint.stiffness_max >= joint.stiffness_min) {
                    return Err(Error::validation(jf("stiffness_max"), "must be ≥ stiffness_min"));
                }
                if !(joint.damping >= 0.0) {
                    return Err(Error::validation(jf("damping"), "must be ≥ 0"));
                }
                let (lo, hi) = joint.angle_limits;
                let rest_lo = joint.rest_angle_min.min(joint.rest_angle_max);
                let rest_hi = joint.rest_angle_min.max(joint.rest_angle_max);
                if !(lo <= rest_lo && rest_hi <= hi) {
                    return Err(Error::validation(jf("angle_limits"), "limits must contain the rest-angle range"));
                }
            }
        }
        if let Some(unused) = used.iter().position(|u| !u) {
            return Err(Error::validation(
                "actuator_count",
                format!("actuator {unused} is not referenced by any joint"),
            ));
        }
        Ok(())
    }

    pub fn joint_count(&self) -> usize {
        self.digits.iter().map(|d| d.joints.len()).sum()
    }

    /// Index of the first joint of each digit in the flattened joint vector.
    pub fn joint_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.digits.len());
        let mut acc = 0;
        for d in &self.digits {
            offsets.push(acc);
            acc += d.joints.len();
        }
        offsets
    }

    pub fn joints(&self) -> impl Iterator<Item = &JointSpec> {
        self.digits.iter().flat_map(|d| d.joints.iter())
    }

    pub fn digit_index(&self, name: &str) -> Option<usize> {
        self.digits.iter().position(|d| d.name == name)
    }

    /// Smallest link width, used for the solver divergence threshold.
    pub fn smallest_dimension(&self) -> f64 {
        self.digits
            .iter()
            .flat_map(|d| d.links.iter().map(|l| l.width.min(l.length)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Effective inertia of every joint about its axis, computed once for the
    /// straight chain with uniform rods of `link_mass_per_length`.
    pub fn joint_inertias(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.joint_count());
        for digit in &self.digits {
            for j in 0..digit.links.len() {
                let mut inertia = 0.0;
                let mut dist = 0.0;
                for link in &digit.links[j..] {
                    let m = self.link_mass_per_length * link.length;
                    let centre = dist + 0.5 * link.length;
                    inertia += m * (centre * centre + link.length * link.length / 12.0);
                    dist += link.length;
                }
                out.push(inertia);
            }
        }
        out
    }

    pub fn palm_hull(&self) -> Hull {
        Hull::polygon(crate::geometry::ccw(&self.palm_polygon), 0.0)
    }

    /// Joint origins of one digit (one per link, plus the tip) in world frame.
    pub fn digit_points(&self, digit: usize, angles: &[f64]) -> Vec<Vec2> {
        let d = &self.digits[digit];
        let mut pts = Vec::with_capacity(d.links.len() + 1);
        let mut p = d.base_pose.position();
        let mut phi = d.base_pose.theta;
        pts.push(p);
        for (link, q) in d.links.iter().zip(angles) {
            phi += q;
            p += rotate(Vec2::new(link.length, 0.0), phi);
            pts.push(p);
        }
        pts
    }
}

/// Rest angle and stiffness per joint for the given actuation (affine in the
/// actuator value).
pub fn rest_configuration(spec: &HandSpec, a: &AirMassVector) -> Result<(Vec<f64>, Vec<f64>)> {
    a.check_len(spec.actuator_count)?;
    let values = a.values();
    let mut rest = Vec::with_capacity(spec.joint_count());
    let mut stiffness = Vec::with_capacity(spec.joint_count());
    for joint in spec.joints() {
        let u = values[joint.actuator_index];
        rest.push(joint.rest_angle_min + u * (joint.rest_angle_max - joint.rest_angle_min));
        stiffness.push(joint.stiffness_min + u * (joint.stiffness_max - joint.stiffness_min));
    }
    Ok((rest, stiffness))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_joint_hand() -> HandSpec {
        HandSpec {
            name: "test".into(),
            actuator_count: 1,
            palm_polygon: vec![[-0.05, -0.05], [0.05, -0.05], [0.05, 0.0], [-0.05, 0.0]],
            palm_friction: 0.5,
            link_mass_per_length: 0.25,
            digits: vec![DigitSpec {
                name: "f".into(),
                base_pose: PlanarPose::new(0.0, 0.0, std::f64::consts::FRAC_PI_2),
                links: vec![LinkSpec { length: 0.04, width: 0.01 }],
                joints: vec![JointSpec {
                    actuator_index: 0,
                    rest_angle_min: 0.0,
                    rest_angle_max: 1.2,
                    stiffness_min: 0.1,
                    stiffness_max: 0.5,
                    damping: 0.01,
                    angle_limits: (-0.5, 1.5),
                }],
                friction_coefficient: 0.5,
            }],
        }
    }

    #[test]
    fn affine_midpoint() {
        let spec = one_joint_hand();
        let (rest, k) = rest_configuration(&spec, &AirMassVector::filled(1, 0.5).unwrap()).unwrap();
        assert_relative_eq!(rest[0], 0.6, epsilon = 1e-15);
        assert_relative_eq!(k[0], 0.3, epsilon = 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let spec = one_joint_hand();
        assert!(matches!(
            rest_configuration(&spec, &AirMassVector::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn validation_errors_name_field() {
        let mut spec = one_joint_hand();
        spec.digits[0].joints[0].stiffness_min = 0.0;
        match spec.validate() {
            Err(Error::Validation { field, .. }) => assert!(field.contains("stiffness_min")),
            other => panic!("unexpected {other:?}"),
        }
        let mut spec = one_joint_hand();
        spec.digits[0].joints[0].angle_limits = (0.1, 1.5);
        assert!(spec.validate().is_err());
        let mut spec = one_joint_hand();
        spec.palm_polygon = vec![[0.0, 0.0], [1.0, 0.0]];
        assert!(spec.validate().is_err());
        let mut spec = one_joint_hand();
        spec.actuator_count = 2;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn forward_kinematics_straight() {
        let spec = one_joint_hand();
        let pts = spec.digit_points(0, &[0.0]);
        assert_relative_eq!(pts[1].y, 0.04, epsilon = 1e-15);
        assert_relative_eq!(pts[1].x, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn malformed_document() {
        assert!(matches!(load_hand_spec("{ not json"), Err(Error::Parse(_))));
    }
}

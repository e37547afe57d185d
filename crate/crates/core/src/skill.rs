//! Keyframe skills: linear air-mass interpolation, open-loop playback,
//! composition and the skill file format.
//!
//! A keyframe's `transition_duration` is the time taken to move from it to
//! the next keyframe. The last keyframe's duration is a hold at its
//! air-mass, so `nominal_duration` is simply the sum over all keyframes.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::airmass::AirMassVector;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, PlanarPose};
use crate::planner::CubeRotation;
use crate::sim::Simulator;
use crate::world::WorldState;

pub const FORMAT_VERSION: u32 = 1;

/// Settle time appended after the nominal duration, before time scaling.
pub const DEFAULT_SETTLE: f64 = 0.5;

/// Default recording stride of [`play`] in simulation steps.
pub const DEFAULT_SAMPLE_EVERY: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub label: String,
    pub airmass: AirMassVector,
    #[serde(rename = "duration_s")]
    pub transition_duration: f64,
}

impl Keyframe {
    pub fn new(label: impl Into<String>, airmass: AirMassVector, transition_duration: f64) -> Self {
        Self {
            label: label.into(),
            airmass,
            transition_duration,
        }
    }
}

/// Axis-aligned box in `(x, y, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRegion {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub theta_range: (f64, f64),
}

impl PoseRegion {
    pub fn new(x_range: (f64, f64), y_range: (f64, f64), theta_range: (f64, f64)) -> Result<Self> {
        let r = Self {
            x_range,
            y_range,
            theta_range,
        };
        r.validate("region")?;
        Ok(r)
    }

    /// Degenerate region holding one pose.
    pub fn point(p: PlanarPose) -> Self {
        Self {
            x_range: (p.x, p.x),
            y_range: (p.y, p.y),
            theta_range: (p.theta, p.theta),
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        for (name, (lo, hi)) in [
            ("x_range", self.x_range),
            ("y_range", self.y_range),
            ("theta_range", self.theta_range),
        ] {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::validation(format!("{field}.{name}"), "need finite lo <= hi"));
            }
        }
        Ok(())
    }

    /// Membership with θ read on a circle of circumference `period`: the
    /// pose is inside if some `θ + k·period` falls in `theta_range`.
    pub fn contains_mod(&self, p: &PlanarPose, period: f64) -> bool {
        let in_range = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        if !in_range(p.x, self.x_range) || !in_range(p.y, self.y_range) {
            return false;
        }
        let (lo, hi) = self.theta_range;
        hi - lo >= period || (p.theta - lo).rem_euclid(period) <= hi - lo
    }

    pub fn contains(&self, p: &PlanarPose) -> bool {
        self.contains_mod(p, TAU)
    }

    /// Smallest box holding every pose, using raw θ values.
    pub fn hull<'a>(poses: impl IntoIterator<Item = &'a PlanarPose>) -> Option<Self> {
        let mut it = poses.into_iter();
        let first = it.next()?;
        let mut r = Self::point(*first);
        for p in it {
            r.x_range = (r.x_range.0.min(p.x), r.x_range.1.max(p.x));
            r.y_range = (r.y_range.0.min(p.y), r.y_range.1.max(p.y));
            r.theta_range = (r.theta_range.0.min(p.theta), r.theta_range.1.max(p.theta));
        }
        Some(r)
    }

    pub fn inflate(&self, linear: f64, angular: f64) -> Self {
        Self {
            x_range: (self.x_range.0 - linear, self.x_range.1 + linear),
            y_range: (self.y_range.0 - linear, self.y_range.1 + linear),
            theta_range: (self.theta_range.0 - angular, self.theta_range.1 + angular),
        }
    }

    /// Box containment, all three axes.
    pub fn within(&self, outer: &PoseRegion) -> bool {
        let inside = |(a, b): (f64, f64), (c, d): (f64, f64)| a >= c && b <= d;
        inside(self.x_range, outer.x_range) && inside(self.y_range, outer.y_range) && inside(self.theta_range, outer.theta_range)
    }

    pub fn extent(&self) -> [f64; 3] {
        [
            self.x_range.1 - self.x_range.0,
            self.y_range.1 - self.y_range.0,
            self.theta_range.1 - self.theta_range.0,
        ]
    }

    pub fn center(&self) -> PlanarPose {
        PlanarPose::new(
            0.5 * (self.x_range.0 + self.x_range.1),
            0.5 * (self.y_range.0 + self.y_range.1),
            0.5 * (self.theta_range.0 + self.theta_range.1),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skill {
    pub name: String,
    pub keyframes: Vec<Keyframe>,
    pub symbolic_effect: CubeRotation,
    pub entrance_predicate: PoseRegion,
    pub exit_predicate: PoseRegion,
    /// Canonical start pose used by sweeps and demos; defaults to the
    /// entrance centre.
    pub nominal_start: PlanarPose,
    nominal_duration: f64,
}

impl Skill {
    pub fn new(
        name: impl Into<String>,
        keyframes: Vec<Keyframe>,
        symbolic_effect: CubeRotation,
        entrance_predicate: PoseRegion,
        exit_predicate: PoseRegion,
    ) -> Result<Self> {
        let nominal_start = entrance_predicate.center();
        let mut s = Self {
            name: name.into(),
            keyframes,
            symbolic_effect,
            entrance_predicate,
            exit_predicate,
            nominal_start,
            nominal_duration: 0.0,
        };
        s.nominal_duration = s.keyframes.iter().map(|k| k.transition_duration).sum();
        s.validate()?;
        Ok(s)
    }

    /// A skill with no keyframes: it only carries a symbolic effect for the
    /// planner and cannot be played.
    pub fn symbolic(name: impl Into<String>, effect: CubeRotation) -> Self {
        Self {
            name: name.into(),
            keyframes: Vec::new(),
            symbolic_effect: effect,
            entrance_predicate: PoseRegion::point(PlanarPose::default()),
            exit_predicate: PoseRegion::point(PlanarPose::default()),
            nominal_start: PlanarPose::default(),
            nominal_duration: 0.0,
        }
    }

    pub fn with_nominal_start(mut self, pose: PlanarPose) -> Self {
        self.nominal_start = pose;
        self
    }

    pub fn nominal_duration(&self) -> f64 {
        self.nominal_duration
    }

    pub fn is_symbolic(&self) -> bool {
        self.keyframes.is_empty()
    }

    pub fn actuator_count(&self) -> Option<usize> {
        self.keyframes.first().map(|k| k.airmass.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::validation("name", "must not be empty"));
        }
        if self.keyframes.len() == 1 {
            return Err(Error::validation(
                "keyframes",
                "need at least 2 keyframes (or none for a symbolic skill)",
            ));
        }
        if let Some(n) = self.actuator_count() {
            for (i, k) in self.keyframes.iter().enumerate() {
                if k.airmass.len() != n {
                    return Err(Error::validation(
                        format!("keyframes[{i}].airmass"),
                        format!("length {} differs from {n}", k.airmass.len()),
                    ));
                }
                if !(k.transition_duration.is_finite() && k.transition_duration > 0.0) {
                    return Err(Error::validation(format!("keyframes[{i}].duration_s"), "must be > 0"));
                }
            }
        }
        self.entrance_predicate.validate("entrance_predicate")?;
        self.exit_predicate.validate("exit_predicate")?;
        Ok(())
    }

    /// Start times of each keyframe, plus the nominal end.
    pub fn keyframe_times(&self) -> Vec<f64> {
        let mut t = Vec::with_capacity(self.keyframes.len() + 1);
        let mut acc = 0.0;
        t.push(acc);
        for k in &self.keyframes {
            acc += k.transition_duration;
            t.push(acc);
        }
        t
    }

    /// Planar rotation period of the effect: a quarter turn about the palm
    /// normal gives π/2, anything else the full circle.
    pub fn theta_period(&self) -> f64 {
        match self.symbolic_effect.planar_angle() {
            Some(a) if a != 0.0 => a.abs(),
            _ => TAU,
        }
    }
}

/// Piecewise-linear command at skill time `t`.
pub fn interpolate(skill: &Skill, t: f64) -> Result<AirMassVector> {
    if skill.is_symbolic() {
        return Err(Error::InvalidArgument(format!("skill `{}` has no keyframes", skill.name)));
    }
    let total = skill.nominal_duration;
    if !(0.0..=total).contains(&t) {
        return Err(Error::TimeOutOfRange { t, duration: total });
    }
    let ks = &skill.keyframes;
    let mut start = 0.0;
    for i in 0..ks.len() - 1 {
        let d = ks[i].transition_duration;
        if t < start + d {
            let s = (t - start) / d;
            return Ok(AirMassVector::lerp(&ks[i].airmass, &ks[i + 1].airmass, s));
        }
        start += d;
    }
    Ok(ks[ks.len() - 1].airmass.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure { reason: String },
    Invalid { reason: String },
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Failure { .. } => "failure",
            Outcome::Invalid { .. } => "invalid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    /// Seconds since the start of playback.
    pub t: f64,
    pub poses: Vec<PlanarPose>,
    pub keyframe: usize,
    pub airmass: AirMassVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub skill: String,
    pub time_scale: f64,
    pub samples: Vec<TrajectorySample>,
    /// `(label, t)` recorded when each keyframe's transition completes.
    pub keyframe_boundaries: Vec<(String, f64)>,
    pub outcome: Outcome,
}

impl TrajectoryLog {
    pub fn initial_pose(&self) -> Option<PlanarPose> {
        self.samples.first().and_then(|s| s.poses.first().copied())
    }

    pub fn final_pose(&self) -> Option<PlanarPose> {
        self.samples.last().and_then(|s| s.poses.first().copied())
    }

    /// Manipulandum pose at the completion of `label`.
    pub fn pose_at(&self, label: &str) -> Option<PlanarPose> {
        let (_, t) = self.keyframe_boundaries.iter().find(|(l, _)| l == label)?;
        self.samples.iter().find(|s| s.t == *t).and_then(|s| s.poses.first().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlayOptions {
    pub time_scale: f64,
    /// Unscaled settle time; the simulated settle is `settle · time_scale`.
    pub settle: f64,
    /// Record every n-th step (keyframe boundaries and the last step are
    /// always recorded).
    pub sample_every: usize,
}

impl Default for PlayOptions {
    fn default() -> Self {
        Self {
            time_scale: 1.0,
            settle: DEFAULT_SETTLE,
            sample_every: DEFAULT_SAMPLE_EVERY,
        }
    }
}

impl PlayOptions {
    pub fn scaled(time_scale: f64) -> Self {
        Self {
            time_scale,
            ..Self::default()
        }
    }
}

/// Open-loop playback. The command at playback time `t` is
/// `interpolate(skill, t / time_scale)`; the object state is only read for
/// logging and for the final exit check on object 0.
pub fn play(skill: &Skill, sim: &Simulator, world: &mut WorldState, opts: &PlayOptions) -> Result<TrajectoryLog> {
    let mut player = Player::new(skill, sim, world, opts)?;
    while !player.advance(sim, world)? {}
    Ok(player.finish())
}

/// [`play`] one simulation step at a time, for callers that need to look at
/// the world between steps (the session server, physics audits).
#[derive(Debug, Clone)]
pub struct Player {
    skill: Skill,
    tau: f64,
    dt: f64,
    every: usize,
    steps: usize,
    times: Vec<f64>,
    boundary_steps: Vec<usize>,
    next_boundary: usize,
    k: usize,
    start: PlanarPose,
    log: TrajectoryLog,
    done: bool,
}

impl Player {
    pub fn new(skill: &Skill, sim: &Simulator, world: &WorldState, opts: &PlayOptions) -> Result<Self> {
        if !(opts.time_scale.is_finite() && opts.time_scale > 0.0) {
            return Err(Error::InvalidArgument(format!("time_scale must be > 0, got {}", opts.time_scale)));
        }
        if skill.is_symbolic() {
            return Err(Error::InvalidArgument(format!("skill `{}` is symbolic only", skill.name)));
        }
        if world.object_poses.is_empty() {
            return Err(Error::InvalidArgument("world has no object".into()));
        }
        skill.keyframes[0].airmass.check_len(sim.hand().actuator_count)?;
        let dt = sim.dt();
        let tau = opts.time_scale;
        let every = opts.sample_every.max(1);
        let total = skill.nominal_duration;
        let steps = ((total + opts.settle.max(0.0)) * tau / dt).round() as usize;
        let times = skill.keyframe_times();
        let boundary_steps = times[1..].iter().map(|t| (t * tau / dt).round() as usize).collect();
        Ok(Self {
            skill: skill.clone(),
            tau,
            dt,
            every,
            steps,
            times,
            boundary_steps,
            next_boundary: 0,
            k: 0,
            start: world.object_poses[0],
            log: TrajectoryLog {
                skill: skill.name.clone(),
                time_scale: tau,
                samples: Vec::with_capacity(steps / every + skill.keyframes.len() + 2),
                keyframe_boundaries: Vec::with_capacity(skill.keyframes.len()),
                outcome: Outcome::Success,
            },
            done: false,
        })
    }

    /// Total simulation steps of the run.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    fn record(&mut self, world: &WorldState, t: f64, a: &AirMassVector) {
        let u = t / self.tau;
        let keyframe = self.times[1..]
            .iter()
            .position(|&e| u < e)
            .unwrap_or(self.skill.keyframes.len() - 1);
        self.log.samples.push(TrajectorySample {
            t,
            poses: world.object_poses.clone(),
            keyframe,
            airmass: a.clone(),
        });
    }

    /// Applies the command for the current step and advances the world by
    /// one step. Returns `true` once playback has finished; further calls
    /// do nothing.
    pub fn advance(&mut self, sim: &Simulator, world: &mut WorldState) -> Result<bool> {
        if self.done {
            return Ok(true);
        }
        let k = self.k;
        let t = k as f64 * self.dt;
        let a = interpolate(&self.skill, (t / self.tau).min(self.skill.nominal_duration))?;
        let is_boundary = self.boundary_steps.get(self.next_boundary) == Some(&k);
        if k.is_multiple_of(self.every) || k == self.steps || is_boundary {
            self.record(world, t, &a);
        }
        while self.boundary_steps.get(self.next_boundary) == Some(&k) {
            let label = self.skill.keyframes[self.next_boundary].label.clone();
            self.log.keyframe_boundaries.push((label, t));
            self.next_boundary += 1;
        }
        if k == self.steps {
            let fin = world.object_poses[0];
            self.log.outcome = if exit_reached(&self.skill, &self.start, &fin) {
                Outcome::Success
            } else {
                Outcome::Failure {
                    reason: format!("final pose ({:.4}, {:.4}, {:.3}) outside exit", fin.x, fin.y, fin.theta),
                }
            };
            self.done = true;
            return Ok(true);
        }
        sim.set_actuation(world, &a)?;
        sim.step(world)?;
        self.k += 1;
        if let crate::world::SimStatus::Invalid { reason } = &world.status {
            let reason = reason.clone();
            self.record(world, self.k as f64 * self.dt, &a);
            self.log.outcome = Outcome::Invalid { reason };
            self.done = true;
            return Ok(true);
        }
        Ok(false)
    }

    /// The log so far; complete once [`Player::advance`] has returned `true`.
    pub fn log(&self) -> &TrajectoryLog {
        &self.log
    }

    pub fn finish(self) -> TrajectoryLog {
        self.log
    }
}

/// Exit check for a run that started at `start`. A start that differs from
/// the nominal one by whole turns of the skill's planar rotation is the same
/// physical situation relabelled, so those turns are taken off the final θ
/// before it is compared with the exit box (on the full circle).
pub fn exit_reached(skill: &Skill, start: &PlanarPose, fin: &PlanarPose) -> bool {
    let period = skill.theta_period();
    let turns = ((start.theta - skill.nominal_start.theta) / period).round();
    let judged = PlanarPose::new(fin.x, fin.y, fin.theta - turns * period);
    skill.exit_predicate.contains(&judged)
}

/// Concatenates skills; the effect is the product applied left to right.
pub fn compose(skills: &[&Skill]) -> Result<Skill> {
    let (first, last) = match (skills.first(), skills.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::InvalidArgument("nothing to compose".into())),
    };
    let mut count = None;
    for s in skills {
        if let Some(n) = s.actuator_count() {
            match count {
                None => count = Some(n),
                Some(m) if m != n => return Err(Error::DimensionMismatch { expected: m, actual: n }),
                _ => {}
            }
        }
    }
    let keyframes: Vec<Keyframe> = skills.iter().flat_map(|s| s.keyframes.iter().cloned()).collect();
    let effect = CubeRotation::product(skills.iter().map(|s| &s.symbolic_effect));
    let name = skills.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join("+");
    let mut out = Skill {
        name,
        keyframes,
        symbolic_effect: effect,
        entrance_predicate: first.entrance_predicate,
        exit_predicate: last.exit_predicate,
        nominal_start: first.nominal_start,
        nominal_duration: 0.0,
    };
    out.nominal_duration = out.keyframes.iter().map(|k| k.transition_duration).sum();
    Ok(out)
}

/// Plays `skill` `n` times back to back on the same world, stopping after
/// the first unsuccessful iteration.
pub fn loop_skill(skill: &Skill, n: usize, sim: &Simulator, world: &mut WorldState, opts: &PlayOptions) -> Result<Vec<TrajectoryLog>> {
    if n == 0 {
        return Err(Error::InvalidArgument("loop count must be >= 1".into()));
    }
    let mut logs = Vec::with_capacity(n);
    for _ in 0..n {
        let log = play(skill, sim, world, opts)?;
        let ok = log.outcome.is_success();
        logs.push(log);
        if !ok {
            break;
        }
    }
    Ok(logs)
}

#[derive(Serialize, Deserialize)]
struct KeyframeDoc {
    label: String,
    airmass: Vec<f64>,
    duration_s: f64,
}

#[derive(Serialize, Deserialize)]
struct SkillDoc {
    format_version: u32,
    name: String,
    actuator_count: usize,
    keyframes: Vec<KeyframeDoc>,
    symbolic_effect: CubeRotation,
    entrance_predicate: PoseRegion,
    exit_predicate: PoseRegion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nominal_start: Option<PlanarPose>,
}

pub fn save_skill(skill: &Skill) -> String {
    let doc = SkillDoc {
        format_version: FORMAT_VERSION,
        name: skill.name.clone(),
        actuator_count: skill.actuator_count().unwrap_or(0),
        keyframes: skill
            .keyframes
            .iter()
            .map(|k| KeyframeDoc {
                label: k.label.clone(),
                airmass: k.airmass.values().to_vec(),
                duration_s: k.transition_duration,
            })
            .collect(),
        symbolic_effect: skill.symbolic_effect,
        entrance_predicate: skill.entrance_predicate,
        exit_predicate: skill.exit_predicate,
        nominal_start: Some(skill.nominal_start),
    };
    serde_json::to_string_pretty(&doc).expect("skill serializes")
}

pub fn load_skill(document: &str) -> Result<Skill> {
    let doc: SkillDoc = serde_json::from_str(document).map_err(|e| {
        let msg = e.to_string();
        if msg.starts_with("missing field") {
            Error::validation("document", msg)
        } else {
            Error::Parse(msg)
        }
    })?;
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::validation(
            "format_version",
            format!("unsupported version {} (expected {FORMAT_VERSION})", doc.format_version),
        ));
    }
    let mut keyframes = Vec::with_capacity(doc.keyframes.len());
    for (i, k) in doc.keyframes.into_iter().enumerate() {
        if k.airmass.len() != doc.actuator_count {
            return Err(Error::validation(
                format!("keyframes[{i}].airmass"),
                format!("length {} but actuator_count is {}", k.airmass.len(), doc.actuator_count),
            ));
        }
        let a = AirMassVector::new(k.airmass).map_err(|e| Error::validation(format!("keyframes[{i}].airmass"), e.to_string()))?;
        keyframes.push(Keyframe::new(k.label, a, k.duration_s));
    }
    if keyframes.is_empty() {
        let mut s = Skill::symbolic(doc.name, doc.symbolic_effect);
        s.entrance_predicate = doc.entrance_predicate;
        s.exit_predicate = doc.exit_predicate;
        s.nominal_start = doc.nominal_start.unwrap_or_else(|| doc.entrance_predicate.center());
        s.validate()?;
        return Ok(s);
    }
    let skill = Skill::new(doc.name, keyframes, doc.symbolic_effect, doc.entrance_predicate, doc.exit_predicate)?;
    Ok(match doc.nominal_start {
        Some(p) => skill.with_nominal_start(p),
        None => skill,
    })
}

/// Signed rotation from `a` to `b`, in (−π, π].
pub fn rotation_between(a: &PlanarPose, b: &PlanarPose) -> f64 {
    wrap_angle(b.theta - a.theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Skill {
        let region = PoseRegion::new((-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)).unwrap();
        Skill::new(
            "ramp",
            vec![
                Keyframe::new("KF1", AirMassVector::zeros(3), 2.0),
                Keyframe::new("KF2", AirMassVector::filled(3, 1.0).unwrap(), 1.0),
            ],
            CubeRotation::identity(),
            region,
            region,
        )
        .unwrap()
    }

    #[test]
    fn midpoint_and_ends() {
        let s = ramp();
        assert_eq!(interpolate(&s, 0.0).unwrap().values(), &[0.0; 3]);
        assert_eq!(interpolate(&s, 1.0).unwrap().values(), &[0.5; 3]);
        assert_eq!(interpolate(&s, 2.0).unwrap().values(), &[1.0; 3]);
        assert_eq!(interpolate(&s, 3.0).unwrap().values(), &[1.0; 3]);
        assert!(matches!(interpolate(&s, 3.5), Err(Error::TimeOutOfRange { .. })));
        assert!(interpolate(&s, -1e-9).is_err());
    }

    #[test]
    fn theta_modulo() {
        let r = PoseRegion::new((-1.0, 1.0), (-1.0, 1.0), (-0.1, 0.1)).unwrap();
        let p = PlanarPose::new(0.0, 0.0, std::f64::consts::FRAC_PI_2 + 0.05);
        assert!(!r.contains(&p));
        assert!(r.contains_mod(&p, std::f64::consts::FRAC_PI_2));
        let q = PlanarPose::new(0.0, 0.0, -std::f64::consts::FRAC_PI_2 - 0.05);
        assert!(r.contains_mod(&q, std::f64::consts::FRAC_PI_2));
    }

    #[test]
    fn single_keyframe_rejected() {
        let region = PoseRegion::point(PlanarPose::default());
        let err = Skill::new(
            "one",
            vec![Keyframe::new("KF1", AirMassVector::zeros(2), 1.0)],
            CubeRotation::identity(),
            region,
            region,
        );
        assert!(err.is_err());
    }
}

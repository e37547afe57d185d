//! Experiment configuration documents (JSON).
//!
//! Resource references are either `bundled:<name>` or a file path, resolved
//! relative to the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use funnelhand::fixtures;
use funnelhand::object::load_object_specs;
use funnelhand::{load_hand_spec, load_object_spec, load_skill, HandSpec, Margin, ObjectSpec, PoseRegion, SimConfig, Simulator, Skill};
use serde::{Deserialize, Serialize};

/// Environment variable naming the default hand document.
pub const HAND_ENV: &str = "FUNNELHAND_HAND";

const BUNDLED: &str = "bundled:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Hand reference; falls back to `$FUNNELHAND_HAND`, then the bundled hand.
    #[serde(default)]
    pub hand: Option<String>,
    #[serde(default = "default_objects")]
    pub objects: Vec<String>,
    /// Extra skill files. Bundled skills are always available by name.
    #[serde(default)]
    pub skills: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    pub sweep: Sweep,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_objects() -> Vec<String> {
    vec!["bundled:cube45".into()]
}

fn default_dt() -> f64 {
    funnelhand::sim::DEFAULT_DT
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sweep {
    Placement(PlacementParams),
    /// A placement sweep whose report centres on the keyframe breakdown.
    Breakdown(PlacementParams),
    Speed {
        skill: String,
        time_scales: Vec<f64>,
    },
    /// Plays the skill on every configured object. Without a region each
    /// object starts at the skill's nominal pose, raised or lowered so its
    /// bottom edge sits where the first object's does.
    Objects {
        skill: String,
        #[serde(default)]
        region: Option<PoseRegion>,
        #[serde(default = "one")]
        n: usize,
    },
    Endurance {
        skill: String,
        iterations: usize,
    },
    Composability {
        skill: String,
        region: PoseRegion,
        n: usize,
        margin: Margin,
        /// Second funnel; defaults to the first (self-composition).
        #[serde(default)]
        next: Option<NextFunnel>,
    },
    Plan {
        skills: Vec<String>,
        start: String,
        #[serde(default)]
        goal: Option<String>,
        /// Face sequence such as `FABCDE`.
        #[serde(default)]
        cycle: Option<String>,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementParams {
    pub skill: String,
    pub region: PoseRegion,
    pub n: usize,
    #[serde(default)]
    pub sample_every: Option<usize>,
    /// Keyframe labels before and after the clamping step.
    #[serde(default)]
    pub clamp: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NextFunnel {
    pub skill: String,
    pub region: PoseRegion,
    pub n: usize,
}

/// Pass/fail gates. Each applies to the sweep kinds that produce its metric.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default)]
    pub min_success_rate: Option<f64>,
    /// Entrance y-extent as a fraction of the object's width.
    #[serde(default)]
    pub min_entrance_y_fraction: Option<f64>,
    /// Entrance θ-extent must exceed this (rad).
    #[serde(default)]
    pub min_entrance_theta_extent: Option<f64>,
    /// Upper bound on det(last keyframe) / det(first keyframe).
    #[serde(default)]
    pub max_det_ratio: Option<f64>,
    #[serde(default)]
    pub clamp_std_y_decreases: Option<bool>,
    #[serde(default)]
    pub all_succeed: Option<bool>,
    #[serde(default)]
    pub min_loops: Option<usize>,
    #[serde(default)]
    pub composable: Option<bool>,
    #[serde(default)]
    pub closure_size: Option<usize>,
}

impl Thresholds {
    fn set(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        let mut add = |name, present: bool| {
            if present {
                v.push(name)
            }
        };
        add("min_success_rate", self.min_success_rate.is_some());
        add("min_entrance_y_fraction", self.min_entrance_y_fraction.is_some());
        add("min_entrance_theta_extent", self.min_entrance_theta_extent.is_some());
        add("max_det_ratio", self.max_det_ratio.is_some());
        add("clamp_std_y_decreases", self.clamp_std_y_decreases.is_some());
        add("all_succeed", self.all_succeed.is_some());
        add("min_loops", self.min_loops.is_some());
        add("composable", self.composable.is_some());
        add("closure_size", self.closure_size.is_some());
        v
    }
}

impl Sweep {
    pub fn kind(&self) -> &'static str {
        match self {
            Sweep::Placement(_) => "placement",
            Sweep::Breakdown(_) => "breakdown",
            Sweep::Speed { .. } => "speed",
            Sweep::Objects { .. } => "objects",
            Sweep::Endurance { .. } => "endurance",
            Sweep::Composability { .. } => "composability",
            Sweep::Plan { .. } => "plan",
        }
    }

    fn allowed_thresholds(&self) -> &'static [&'static str] {
        const PLACEMENT: &[&str] = &[
            "min_success_rate",
            "min_entrance_y_fraction",
            "min_entrance_theta_extent",
            "max_det_ratio",
            "clamp_std_y_decreases",
        ];
        match self {
            Sweep::Placement(_) | Sweep::Breakdown(_) => PLACEMENT,
            Sweep::Speed { .. } | Sweep::Objects { .. } => &["all_succeed", "min_success_rate"],
            Sweep::Endurance { .. } => &["min_loops"],
            Sweep::Composability { .. } => &["composable", "min_success_rate"],
            Sweep::Plan { .. } => &["closure_size"],
        }
    }

    /// Skill names the sweep plays physically.
    fn played_skills(&self) -> Vec<&str> {
        match self {
            Sweep::Placement(p) | Sweep::Breakdown(p) => vec![&p.skill],
            Sweep::Speed { skill, .. } | Sweep::Objects { skill, .. } | Sweep::Endurance { skill, .. } => vec![skill],
            Sweep::Composability { skill, next, .. } => {
                let mut v = vec![skill.as_str()];
                if let Some(n) = next {
                    v.push(&n.skill);
                }
                v
            }
            Sweep::Plan { .. } => vec![],
        }
    }
}

/// Everything a sweep needs, loaded and validated.
#[derive(Debug, Clone)]
pub struct Resources {
    pub hand: HandSpec,
    pub objects: Vec<ObjectSpec>,
    pub skills: BTreeMap<String, Skill>,
}

impl Resources {
    pub fn skill(&self, name: &str) -> Result<&Skill> {
        self.skills.get(name).with_context(|| format!("no skill named `{name}`"))
    }

    pub fn simulator(&self, dt: f64) -> Result<Simulator> {
        Ok(Simulator::new(self.hand.clone(), self.objects.clone(), SimConfig::with_dt(dt))?)
    }
}

/// The bundled skills keyed by name.
pub fn bundled_skills() -> BTreeMap<String, Skill> {
    fixtures::SKILLS
        .iter()
        .map(|(name, _)| (name.to_string(), fixtures::skill(name).expect("bundled skill is valid")))
        .collect()
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Loads the hand named by `reference`, else `$FUNNELHAND_HAND`, else the
/// bundled hand.
pub fn resolve_hand(reference: Option<&str>, base: &Path) -> Result<HandSpec> {
    let env = std::env::var(HAND_ENV).ok().filter(|s| !s.is_empty());
    match reference.map(str::to_string).or(env) {
        None => Ok(fixtures::default_hand()),
        Some(r) if r == "bundled:planar-rbo" => Ok(fixtures::default_hand()),
        Some(r) if r.starts_with(BUNDLED) => bail!("unknown bundled hand `{r}`"),
        Some(r) => {
            let path = base.join(&r);
            load_hand_spec(&read(&path)?).with_context(|| format!("hand {}", path.display()))
        }
    }
}

pub fn resolve_objects(references: &[String], base: &Path) -> Result<Vec<ObjectSpec>> {
    let mut out = Vec::new();
    for r in references {
        match r.strip_prefix(BUNDLED) {
            Some("object-set") => out.extend(fixtures::object_set()),
            Some(label) => {
                let o = fixtures::object_set()
                    .into_iter()
                    .find(|o| o.label == label)
                    .with_context(|| format!("unknown bundled object `{label}`"))?;
                out.push(o);
            }
            None => {
                let path = base.join(r);
                let text = read(&path)?;
                let parsed = if text.trim_start().starts_with('[') {
                    load_object_specs(&text)
                } else {
                    load_object_spec(&text).map(|o| vec![o])
                };
                out.extend(parsed.with_context(|| format!("objects {}", path.display()))?);
            }
        }
    }
    ensure!(!out.is_empty(), "at least one object is required");
    Ok(out)
}

pub fn resolve_skills(references: &[String], base: &Path) -> Result<BTreeMap<String, Skill>> {
    let mut skills = bundled_skills();
    for r in references {
        if let Some(name) = r.strip_prefix(BUNDLED) {
            ensure!(skills.contains_key(name), "unknown bundled skill `{name}`");
            continue;
        }
        let path = base.join(r);
        let s = load_skill(&read(&path)?).with_context(|| format!("skill {}", path.display()))?;
        skills.insert(s.name.clone(), s);
    }
    Ok(skills)
}

impl ExperimentConfig {
    pub fn from_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut c: ExperimentConfig = serde_json::from_str(text).context("parsing experiment config")?;
        c.base_dir = base_dir.to_path_buf();
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_str(&read(path)?, base)
    }

    /// Where outputs go; relative paths are taken from the working directory.
    pub fn output_dir(&self) -> &Path {
        &self.output_dir
    }

    /// Checks counts and ranges, loads every referenced resource and
    /// confirms that the thresholds fit the sweep kind.
    pub fn validate(&self) -> Result<Resources> {
        ensure!(!self.name.is_empty(), "config `name` must not be empty");
        ensure!(self.dt.is_finite() && self.dt > 0.0, "dt must be > 0");
        let hand = resolve_hand(self.hand.as_deref(), &self.base_dir)?;
        let objects = resolve_objects(&self.objects, &self.base_dir)?;
        let skills = resolve_skills(&self.skills, &self.base_dir)?;
        let res = Resources { hand, objects, skills };

        for name in self.sweep.played_skills() {
            let s = res.skill(name)?;
            ensure!(!s.is_symbolic(), "skill `{name}` has no keyframes and cannot be played");
            ensure!(
                s.actuator_count() == Some(res.hand.actuator_count),
                "skill `{name}` drives {:?} actuators but the hand has {}",
                s.actuator_count(),
                res.hand.actuator_count
            );
        }
        let count = |n: usize, what: &str| -> Result<()> {
            ensure!(n >= 1, "{what} must be >= 1");
            Ok(())
        };
        match &self.sweep {
            Sweep::Placement(p) | Sweep::Breakdown(p) => {
                count(p.n, "n")?;
                p.region.validate("region")?;
                if let Some((a, b)) = &p.clamp {
                    let s = res.skill(&p.skill)?;
                    for l in [a, b] {
                        ensure!(
                            s.keyframes.iter().any(|k| &k.label == l),
                            "skill `{}` has no keyframe `{l}`",
                            s.name
                        );
                    }
                }
                if matches!(self.sweep, Sweep::Breakdown(_)) {
                    ensure!(p.n >= 2, "a breakdown needs n >= 2");
                }
            }
            Sweep::Speed { time_scales, .. } => {
                count(time_scales.len(), "time_scales")?;
                ensure!(time_scales.iter().all(|t| t.is_finite() && *t > 0.0), "time scales must be > 0");
            }
            Sweep::Objects { region, n, .. } => {
                count(*n, "n")?;
                if let Some(r) = region {
                    r.validate("region")?;
                }
            }
            Sweep::Endurance { iterations, .. } => count(*iterations, "iterations")?,
            Sweep::Composability {
                region, n, margin, next, ..
            } => {
                count(*n, "n")?;
                region.validate("region")?;
                ensure!(margin.linear >= 0.0 && margin.angular >= 0.0, "margin must be >= 0");
                if let Some(nx) = next {
                    count(nx.n, "next.n")?;
                    nx.region.validate("next.region")?;
                }
            }
            Sweep::Plan {
                skills,
                start,
                goal,
                cycle,
            } => {
                count(skills.len(), "skills")?;
                for s in skills {
                    res.skill(s)?;
                }
                start.parse::<funnelhand::planner::CubeState>()?;
                match (goal, cycle) {
                    (Some(g), None) => {
                        g.parse::<funnelhand::planner::CubeState>()?;
                    }
                    (None, Some(c)) => {
                        funnelhand::planner::parse_faces(c)?;
                    }
                    _ => bail!("plan needs exactly one of `goal` or `cycle`"),
                }
            }
        }
        let allowed = self.sweep.allowed_thresholds();
        for t in self.thresholds.set() {
            ensure!(
                allowed.contains(&t),
                "threshold `{t}` does not apply to a {} sweep",
                self.sweep.kind()
            );
        }
        Ok(res)
    }
}

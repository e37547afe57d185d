//! Empirical funnels: sampled entrance regions, exit-set statistics,
//! keyframe-by-keyframe contraction and composability checks.

use std::io::Write;

use nalgebra::Matrix3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, PlanarPose};
use crate::sim::Simulator;
use crate::skill::{play, Outcome, PlayOptions, PoseRegion, Skill, TrajectoryLog};

/// Reason recorded for samples whose initial pose overlaps the hand.
pub const PLACEMENT: &str = "placement";

const BASES: [u64; 3] = [2, 3, 5];
const MAX_DIGITS: usize = 40;

/// Halton sequence in `[0, 1)^3` with seeded random digit permutations.
/// Point `i` depends only on `(seed, i)`, so prefixes are nested.
#[derive(Debug, Clone)]
pub struct ScrambledHalton {
    perms: Vec<Vec<Vec<u64>>>,
}

impl ScrambledHalton {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let perms = BASES
            .iter()
            .map(|&b| {
                (0..MAX_DIGITS)
                    .map(|_| {
                        let mut p: Vec<u64> = (0..b).collect();
                        p.shuffle(&mut rng);
                        p
                    })
                    .collect()
            })
            .collect();
        Self { perms }
    }

    pub fn point(&self, index: u64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (d, &b) in BASES.iter().enumerate() {
            let mut i = index;
            let mut f = 1.0 / b as f64;
            let mut v = 0.0;
            for perm in &self.perms[d] {
                v += perm[(i % b) as usize] as f64 * f;
                i /= b;
                f /= b as f64;
            }
            out[d] = v;
        }
        out
    }

    pub fn pose_in(&self, index: u64, region: &PoseRegion) -> PlanarPose {
        let u = self.point(index);
        let lerp = |(lo, hi): (f64, f64), s: f64| lo + s * (hi - lo);
        PlanarPose::new(
            lerp(region.x_range, u[0]),
            lerp(region.y_range, u[1]),
            lerp(region.theta_range, u[2]),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelSample {
    pub id: usize,
    pub initial: PlanarPose,
    pub outcome: Outcome,
    pub final_pose: Option<PlanarPose>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitSummary {
    pub mean: PlanarPose,
    pub covariance: [[f64; 3]; 3],
    pub hull: PoseRegion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelEstimate {
    pub skill_name: String,
    pub samples: Vec<FunnelSample>,
    /// Hull of successful initial poses; `None` if nothing succeeded.
    pub entrance_box: Option<PoseRegion>,
    pub exit_summary: Option<ExitSummary>,
    pub seed: u64,
    pub sample_count: usize,
    /// Planar rotation period of the skill's effect.
    pub theta_period: f64,
}

/// One sampled rollout, with its full log when it could be played.
#[derive(Debug, Clone)]
pub struct Trial {
    pub sample: FunnelSample,
    pub log: Option<TrajectoryLog>,
}

/// Plays `skill` from `n` scrambled-Halton poses over `region`. Trials run in
/// parallel and come back in sample order.
pub fn run_trials(skill: &Skill, sim: &Simulator, region: &PoseRegion, n: usize, seed: u64, opts: &PlayOptions) -> Result<Vec<Trial>> {
    if n == 0 {
        return Err(Error::validation("n", "sample count must be >= 1"));
    }
    region.validate("search_region")?;
    if skill.is_symbolic() {
        return Err(Error::InvalidArgument(format!("skill `{}` is symbolic only", skill.name)));
    }
    let halton = ScrambledHalton::new(seed);
    Ok((0..n)
        .into_par_iter()
        .map(|id| {
            let initial = halton.pose_in(id as u64, region);
            run_one(skill, sim, id, initial, opts)
        })
        .collect())
}

/// Plays `skill` once from `initial`, turning every failure into data.
pub fn run_one(skill: &Skill, sim: &Simulator, id: usize, initial: PlanarPose, opts: &PlayOptions) -> Trial {
    let mut poses = vec![initial];
    if let Some(rest) = sim.objects().get(1..) {
        // Extra objects are parked far from the hand.
        for (k, _) in rest.iter().enumerate() {
            poses.push(PlanarPose::new(1.0 + k as f64, 1.0, 0.0));
        }
    }
    let failed = |outcome| Trial {
        sample: FunnelSample {
            id,
            initial,
            outcome,
            final_pose: None,
        },
        log: None,
    };
    let mut world = match sim.initial_world(&skill.keyframes[0].airmass, &poses) {
        Ok(w) => w,
        Err(Error::Penetration { .. }) => return failed(Outcome::Failure { reason: PLACEMENT.into() }),
        Err(e) => return failed(Outcome::Invalid { reason: e.to_string() }),
    };
    match play(skill, sim, &mut world, opts) {
        Ok(log) => Trial {
            sample: FunnelSample {
                id,
                initial,
                outcome: log.outcome.clone(),
                final_pose: log.final_pose(),
            },
            log: Some(log),
        },
        Err(e) => failed(Outcome::Invalid { reason: e.to_string() }),
    }
}

pub fn sample_entrance(
    skill: &Skill,
    sim: &Simulator,
    region: &PoseRegion,
    n: usize,
    seed: u64,
    opts: &PlayOptions,
) -> Result<FunnelEstimate> {
    let trials = run_trials(skill, sim, region, n, seed, opts)?;
    Ok(FunnelEstimate::from_samples(
        &skill.name,
        trials.into_iter().map(|t| t.sample).collect(),
        seed,
        skill.theta_period(),
    ))
}

/// Brings every θ onto the branch nearest `reference`.
fn unwrap_near(poses: &[PlanarPose], reference: f64) -> Vec<PlanarPose> {
    poses
        .iter()
        .map(|p| PlanarPose {
            theta: reference + wrap_angle(p.theta - reference),
            ..*p
        })
        .collect()
}

fn as_arrays(poses: &[PlanarPose]) -> Vec<[f64; 3]> {
    poses.iter().map(|p| [p.x, p.y, p.theta]).collect()
}

/// Population mean and covariance.
pub fn mean_and_covariance(points: &[[f64; 3]]) -> ([f64; 3], [[f64; 3]; 3]) {
    let n = points.len() as f64;
    let mut mean = [0.0; 3];
    for p in points {
        for i in 0..3 {
            mean[i] += p[i] / n;
        }
    }
    let mut cov = [[0.0; 3]; 3];
    for p in points {
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += (p[i] - mean[i]) * (p[j] - mean[j]) / n;
            }
        }
    }
    (mean, cov)
}

pub fn determinant(m: &[[f64; 3]; 3]) -> f64 {
    Matrix3::from_fn(|i, j| m[i][j]).determinant()
}

impl FunnelEstimate {
    pub fn from_samples(skill_name: &str, samples: Vec<FunnelSample>, seed: u64, theta_period: f64) -> Self {
        let ok: Vec<&FunnelSample> = samples.iter().filter(|s| s.outcome.is_success()).collect();
        let entrance_box = PoseRegion::hull(ok.iter().map(|s| &s.initial));
        let finals: Vec<PlanarPose> = ok.iter().filter_map(|s| s.final_pose).collect();
        let exit_summary = finals.first().map(|first| {
            let finals = unwrap_near(&finals, first.theta);
            let (m, covariance) = mean_and_covariance(&as_arrays(&finals));
            ExitSummary {
                mean: PlanarPose {
                    x: m[0],
                    y: m[1],
                    theta: m[2],
                },
                covariance,
                hull: PoseRegion::hull(finals.iter()).expect("nonempty"),
            }
        });
        Self {
            skill_name: skill_name.into(),
            sample_count: samples.len(),
            samples,
            entrance_box,
            exit_summary,
            seed,
            theta_period,
        }
    }

    pub fn successes(&self) -> impl Iterator<Item = &FunnelSample> {
        self.samples.iter().filter(|s| s.outcome.is_success())
    }

    pub fn success_rate(&self) -> f64 {
        self.successes().count() as f64 / self.sample_count.max(1) as f64
    }

    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimate serializes")
    }

    /// Per-trial table with columns
    /// `sample_id, x0, y0, theta0, outcome, xf, yf, thetaf`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sample_id", "x0", "y0", "theta0", "outcome", "xf", "yf", "thetaf"])
            .map_err(csv_err)?;
        for s in &self.samples {
            let f = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([
                s.id.to_string(),
                s.initial.x.to_string(),
                s.initial.y.to_string(),
                s.initial.theta.to_string(),
                outcome_label(&s.outcome),
                f(s.final_pose.map(|p| p.x)),
                f(s.final_pose.map(|p| p.y)),
                f(s.final_pose.map(|p| p.theta)),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `success`, `invalid`, or `failure:<reason>` for tables.
pub fn outcome_label(o: &Outcome) -> String {
    match o {
        Outcome::Failure { reason } if reason == PLACEMENT => format!("failure:{PLACEMENT}"),
        Outcome::Failure { .. } => "failure".into(),
        other => other.as_str().into(),
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeStats {
    pub label: String,
    pub poses: Vec<PlanarPose>,
    pub std: [f64; 3],
    pub covariance: [[f64; 3]; 3],
    pub det: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeBreakdown {
    pub skill_name: String,
    pub keyframes: Vec<KeyframeStats>,
}

/// Object pose at every keyframe boundary, summarised across logs.
pub fn keyframe_breakdown(logs: &[&TrajectoryLog]) -> Result<KeyframeBreakdown> {
    if logs.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 logs, got {}", logs.len())));
    }
    let skill = &logs[0].skill;
    let labels: Vec<&String> = logs[0].keyframe_boundaries.iter().map(|(l, _)| l).collect();
    for log in logs {
        if &log.skill != skill {
            return Err(Error::InvalidArgument(format!("logs mix skills `{skill}` and `{}`", log.skill)));
        }
        if log.keyframe_boundaries.iter().map(|(l, _)| l).ne(labels.iter().copied()) {
            return Err(Error::InvalidArgument(format!(
                "log of `{skill}` has different keyframe boundaries"
            )));
        }
    }
    let mut keyframes = Vec::with_capacity(labels.len());
    for label in labels {
        let poses: Vec<PlanarPose> = logs
            .iter()
            .map(|l| l.pose_at(label).ok_or_else(|| Error::UnknownLabel(label.clone())))
            .collect::<Result<_>>()?;
        let unwrapped = unwrap_near(&poses, poses[0].theta);
        let (_, covariance) = mean_and_covariance(&as_arrays(&unwrapped));
        keyframes.push(KeyframeStats {
            label: label.clone(),
            std: [0, 1, 2].map(|i| covariance[i][i].max(0.0).sqrt()),
            det: determinant(&covariance),
            covariance,
            poses,
        });
    }
    Ok(KeyframeBreakdown {
        skill_name: skill.clone(),
        keyframes,
    })
}

impl KeyframeBreakdown {
    pub fn get(&self, label: &str) -> Result<&KeyframeStats> {
        self.keyframes
            .iter()
            .find(|k| k.label == label)
            .ok_or_else(|| Error::UnknownLabel(label.into()))
    }

    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(self).expect("breakdown serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contraction {
    /// `std(to) / std(from)` for x, y, θ.
    pub axes: [f64; 3],
    pub determinant: f64,
}

fn ratio(to: f64, from: f64) -> f64 {
    if to == 0.0 && from == 0.0 {
        1.0
    } else {
        to / from
    }
}

pub fn contraction_ratio(breakdown: &KeyframeBreakdown, from: &str, to: &str) -> Result<Contraction> {
    let a = breakdown.get(from)?;
    let b = breakdown.get(to)?;
    Ok(Contraction {
        axes: [0, 1, 2].map(|i| ratio(b.std[i], a.std[i])),
        determinant: ratio(b.det, a.det),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub linear: f64,
    pub angular: f64,
}

impl Margin {
    pub const ZERO: Margin = Margin { linear: 0.0, angular: 0.0 };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composability {
    /// Inflated exit hull of the first funnel lies in the second's entrance.
    pub contained: bool,
    /// Exit hull after inflation and θ alignment, as compared.
    pub inflated_exit: PoseRegion,
    pub entrance: PoseRegion,
    pub replayed: usize,
    pub replay_successes: usize,
    /// Every exit sample of the first funnel succeeded as a start of the second.
    pub replay_ok: bool,
    pub composable: bool,
}

/// Shifts a hull's θ range by whole turns of `period` so its centre lands
/// as close as possible to `target`.
fn align_theta(r: &PoseRegion, period: f64, target: f64) -> PoseRegion {
    let mid = 0.5 * (r.theta_range.0 + r.theta_range.1);
    let k = ((target - mid) / period).round();
    PoseRegion {
        theta_range: (r.theta_range.0 + k * period, r.theta_range.1 + k * period),
        ..*r
    }
}

/// Does `f1` feed `f2`? Exit θ is matched to the entrance modulo `f1`'s
/// rotation period: a square that has turned a quarter looks the same.
/// The replay half plays `skill2` from every successful exit pose of `f1`.
pub fn check_composable(
    f1: &FunnelEstimate,
    f2: &FunnelEstimate,
    margin: Margin,
    skill2: &Skill,
    sim: &Simulator,
    opts: &PlayOptions,
) -> Result<Composability> {
    let exit = f1
        .exit_summary
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("`{}` has no successful samples", f1.skill_name)))?;
    let entrance = f2
        .entrance_box
        .ok_or_else(|| Error::InvalidArgument(format!("`{}` has no successful samples", f2.skill_name)))?;
    if skill2.name != f2.skill_name {
        return Err(Error::InvalidArgument(format!(
            "replay skill `{}` does not match estimate `{}`",
            skill2.name, f2.skill_name
        )));
    }
    let aligned = align_theta(&exit.hull, f1.theta_period, entrance.center().theta);
    let inflated_exit = aligned.inflate(margin.linear, margin.angular);
    let contained = inflated_exit.within(&entrance);

    let starts: Vec<PlanarPose> = f1.successes().filter_map(|s| s.final_pose).collect();
    let results: Vec<bool> = starts
        .par_iter()
        .enumerate()
        .map(|(i, p)| run_one(skill2, sim, i, *p, opts).sample.outcome.is_success())
        .collect();
    let replay_successes = results.iter().filter(|&&ok| ok).count();
    let replay_ok = replay_successes == results.len();
    Ok(Composability {
        contained,
        inflated_exit,
        entrance,
        replayed: results.len(),
        replay_successes,
        replay_ok,
        composable: contained && replay_ok,
    })
}

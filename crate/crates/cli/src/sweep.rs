//! Batch experiments driven by an [`ExperimentConfig`].
//!
//! Every sweep writes `summary.json` plus per-trial CSV tables into the
//! output directory. Nothing time- or machine-dependent goes into the
//! outputs, so identical configs give byte-identical files.

use std::collections::{BTreeSet, VecDeque};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use funnelhand::funnel::{run_one, run_trials, Trial, PLACEMENT};
use funnelhand::planner::{build_funnel_graph, parse_faces, plan_face_cycle, plan_program, CubeState, Plan};
use funnelhand::skill::{rotation_between, DEFAULT_SAMPLE_EVERY};
use funnelhand::{
    check_composable, keyframe_breakdown, loop_skill, play, FunnelEstimate, KeyframeBreakdown, Outcome, PlanarPose, PlayOptions,
    PoseRegion, Simulator, Skill, TrajectoryLog, WorldState,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, PlacementParams, Resources, Sweep, Thresholds};

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub kind: &'static str,
    pub summary: Value,
    pub violations: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Keyframe breakdown as written to `breakdown.json`. Labels are listed even
/// when there were too few successes to compute statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownReport {
    pub skill_name: String,
    pub labels: Vec<String>,
    pub successful_trials: usize,
    pub breakdown: Option<KeyframeBreakdown>,
}

struct Out {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Out {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.files.push(path);
        Ok(BufWriter::new(f))
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let mut w = self.create(name)?;
        w.write_all(text.as_bytes())?;
        if !text.ends_with('\n') {
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    fn csv(&mut self, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
        Ok(csv::Writer::from_writer(self.create(name)?))
    }
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn pose_json(p: &PlanarPose) -> Value {
    json!({ "x": p.x, "y": p.y, "theta": p.theta })
}

/// Starting poses for all objects: the manipulandum at `first`, any others
/// parked away from the hand.
pub fn parked_poses(sim: &Simulator, first: PlanarPose) -> Vec<PlanarPose> {
    let mut poses = vec![first];
    poses.extend((1..sim.objects().len()).map(|k| PlanarPose::new(k as f64, 1.0, 0.0)));
    poses
}

pub fn start_world(sim: &Simulator, skill: &Skill, pose: PlanarPose) -> Result<WorldState> {
    Ok(sim.initial_world(&skill.keyframes[0].airmass, &parked_poses(sim, pose))?)
}

/// Runs the configured sweep, writes its outputs and checks thresholds.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    let res = config.validate()?;
    let mut out = Out::new(config.output_dir())?;
    let results = match &config.sweep {
        Sweep::Placement(p) | Sweep::Breakdown(p) => placement(config, &res, p, &mut out)?,
        Sweep::Speed { skill, time_scales } => speed(config, &res, skill, time_scales, &mut out)?,
        Sweep::Objects { skill, region, n } => objects(config, &res, skill, region.as_ref(), *n, &mut out)?,
        Sweep::Endurance { skill, iterations } => endurance(config, &res, skill, *iterations, &mut out)?,
        Sweep::Composability {
            skill,
            region,
            n,
            margin,
            next,
        } => {
            let first = PlacementParams {
                skill: skill.clone(),
                region: *region,
                n: *n,
                sample_every: None,
                clamp: None,
            };
            composability(config, &res, &first, *margin, next.as_ref(), &mut out)?
        }
        Sweep::Plan {
            skills,
            start,
            goal,
            cycle,
        } => plan(&res, skills, start, goal.as_deref(), cycle.as_deref(), &mut out)?,
    };
    let violations = check_thresholds(&config.thresholds, &results);
    let summary = json!({
        "name": config.name,
        "kind": config.sweep.kind(),
        "seed": config.seed,
        "dt": config.dt,
        "passed": violations.is_empty(),
        "violations": violations,
        "thresholds": config.thresholds,
        "results": results,
    });
    out.text("summary.json", &serde_json::to_string_pretty(&summary)?)?;
    Ok(SweepReport {
        kind: config.sweep.kind(),
        summary,
        violations,
        files: out.files,
    })
}

fn estimate_of(skill: &Skill, trials: &[Trial], seed: u64) -> FunnelEstimate {
    FunnelEstimate::from_samples(
        &skill.name,
        trials.iter().map(|t| t.sample.clone()).collect(),
        seed,
        skill.theta_period(),
    )
}

fn write_trajectories(out: &mut Out, name: &str, trials: &[Trial]) -> Result<()> {
    let mut w = out.csv(name)?;
    w.write_record(["trial", "t", "x", "y", "theta", "keyframe"])?;
    for t in trials {
        let Some(log) = &t.log else { continue };
        for s in &log.samples {
            let p = s.poses[0];
            w.write_record([
                t.sample.id.to_string(),
                fmt(s.t),
                fmt(p.x),
                fmt(p.y),
                fmt(p.theta),
                s.keyframe.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn breakdown_of(skill: &Skill, trials: &[Trial]) -> BreakdownReport {
    let logs: Vec<&TrajectoryLog> = trials
        .iter()
        .filter(|t| t.sample.outcome.is_success())
        .filter_map(|t| t.log.as_ref())
        .collect();
    BreakdownReport {
        skill_name: skill.name.clone(),
        labels: skill.keyframes.iter().map(|k| k.label.clone()).collect(),
        successful_trials: logs.len(),
        breakdown: keyframe_breakdown(&logs).ok(),
    }
}

fn estimate_json(est: &FunnelEstimate, object_width: f64) -> Value {
    let placement = est
        .samples
        .iter()
        .filter(|s| matches!(&s.outcome, Outcome::Failure { reason } if reason == PLACEMENT))
        .count();
    let entrance = est.entrance_box.map(|b| {
        let e = b.extent();
        json!({
            "box": b,
            "extent": e,
            "y_fraction_of_width": e[1] / object_width,
        })
    });
    let exit = est.exit_summary.as_ref().map(|x| {
        json!({
            "mean": pose_json(&x.mean),
            "covariance": x.covariance,
            "hull": x.hull,
        })
    });
    json!({
        "samples": est.sample_count,
        "successes": est.successes().count(),
        "placement_failures": placement,
        "success_rate": est.success_rate(),
        "entrance": entrance,
        "exit": exit,
    })
}

fn contraction_json(report: &BreakdownReport, clamp: Option<&(String, String)>) -> Value {
    let Some(b) = &report.breakdown else {
        return json!({ "table": [], "det_ratio_first_last": null, "clamp": null });
    };
    let table: Vec<Value> = b
        .keyframes
        .iter()
        .map(|k| json!({ "label": k.label, "std": k.std, "det": k.det }))
        .collect();
    let first = b.keyframes.first().map(|k| k.label.as_str()).unwrap_or_default();
    let last = b.keyframes.last().map(|k| k.label.as_str()).unwrap_or_default();
    let ratio = funnelhand::contraction_ratio(b, first, last).map(|c| c.determinant).ok();
    let clamp = clamp.and_then(|(from, to)| {
        let (a, c) = (b.get(from).ok()?, b.get(to).ok()?);
        Some(json!({
            "from": from,
            "to": to,
            "std_y_from": a.std[1],
            "std_y_to": c.std[1],
            "decreases": c.std[1] < a.std[1],
        }))
    });
    json!({
        "table": table,
        "first": first,
        "last": last,
        "det_first": b.keyframes.first().map(|k| k.det),
        "det_last": b.keyframes.last().map(|k| k.det),
        "det_ratio_first_last": ratio,
        "clamp": clamp,
    })
}

fn placement(config: &ExperimentConfig, res: &Resources, p: &PlacementParams, out: &mut Out) -> Result<Value> {
    let skill = res.skill(&p.skill)?;
    let sim = res.simulator(config.dt)?;
    let opts = PlayOptions {
        sample_every: p.sample_every.unwrap_or(DEFAULT_SAMPLE_EVERY),
        ..PlayOptions::default()
    };
    let trials = run_trials(skill, &sim, &p.region, p.n, config.seed, &opts)?;
    let est = estimate_of(skill, &trials, config.seed);
    est.write_csv(out.create("trials.csv")?)?;
    out.text("estimate.json", &est.to_document())?;
    write_trajectories(out, "trajectories.csv", &trials)?;
    let report = breakdown_of(skill, &trials);
    out.text("breakdown.json", &serde_json::to_string_pretty(&report)?)?;

    let mut v = estimate_json(&est, res.objects[0].width());
    v["skill"] = json!(skill.name);
    v["region"] = json!(p.region);
    v["contraction"] = contraction_json(&report, p.clamp.as_ref());
    Ok(v)
}

fn speed(config: &ExperimentConfig, res: &Resources, name: &str, scales: &[f64], out: &mut Out) -> Result<Value> {
    let skill = res.skill(name)?;
    let sim = res.simulator(config.dt)?;
    let mut w = out.csv("trials.csv")?;
    w.write_record(["time_scale", "outcome", "xf", "yf", "thetaf", "rotation"])?;
    let mut rows = Vec::new();
    for &tau in scales {
        let mut world = start_world(&sim, skill, skill.nominal_start)?;
        let log = play(skill, &sim, &mut world, &PlayOptions::scaled(tau))?;
        let fin = log.final_pose().expect("log has samples");
        let turned = rotation_between(&skill.nominal_start, &fin);
        w.write_record([
            fmt(tau),
            funnelhand::funnel::outcome_label(&log.outcome),
            fmt(fin.x),
            fmt(fin.y),
            fmt(fin.theta),
            fmt(turned),
        ])?;
        rows.push(json!({
            "time_scale": tau,
            "success": log.outcome.is_success(),
            "final": pose_json(&fin),
            "rotation": turned,
        }));
    }
    w.flush()?;
    let successes = rows.iter().filter(|r| r["success"] == json!(true)).count();
    Ok(json!({
        "skill": skill.name,
        "rows": rows,
        "successes": successes,
        "success_rate": successes as f64 / rows.len() as f64,
        "all_succeed": successes == rows.len(),
    }))
}

fn objects(config: &ExperimentConfig, res: &Resources, name: &str, region: Option<&PoseRegion>, n: usize, out: &mut Out) -> Result<Value> {
    let skill = res.skill(name)?;
    let reference = res.objects[0].height();
    let mut w = out.csv("trials.csv")?;
    w.write_record(["object", "sample_id", "x0", "y0", "theta0", "outcome", "xf", "yf", "thetaf"])?;
    let mut per_object = Vec::new();
    let (mut total, mut ok) = (0, 0);
    for obj in &res.objects {
        let sim = Simulator::new(res.hand.clone(), vec![obj.clone()], funnelhand::SimConfig::with_dt(config.dt))?;
        let lift = 0.5 * (obj.height() - reference);
        let opts = PlayOptions::default();
        let trials: Vec<Trial> = match region {
            Some(r) => {
                let shifted = PoseRegion {
                    y_range: (r.y_range.0 + lift, r.y_range.1 + lift),
                    ..*r
                };
                run_trials(skill, &sim, &shifted, n, config.seed, &opts)?
            }
            None => {
                let p = skill.nominal_start;
                vec![run_one(skill, &sim, 0, PlanarPose::new(p.x, p.y + lift, p.theta), &opts)]
            }
        };
        let successes = trials.iter().filter(|t| t.sample.outcome.is_success()).count();
        for t in &trials {
            let s = &t.sample;
            let f = |g: fn(&PlanarPose) -> f64| s.final_pose.as_ref().map(g).map(fmt).unwrap_or_default();
            w.write_record([
                obj.label.clone(),
                s.id.to_string(),
                fmt(s.initial.x),
                fmt(s.initial.y),
                fmt(s.initial.theta),
                funnelhand::funnel::outcome_label(&s.outcome),
                f(|p| p.x),
                f(|p| p.y),
                f(|p| p.theta),
            ])?;
        }
        total += trials.len();
        ok += successes;
        per_object.push(json!({
            "object": obj.label,
            "trials": trials.len(),
            "successes": successes,
            "success_rate": successes as f64 / trials.len() as f64,
        }));
    }
    w.flush()?;
    Ok(json!({
        "skill": skill.name,
        "objects": per_object,
        "success_rate": ok as f64 / total as f64,
        "all_succeed": ok == total,
    }))
}

fn endurance(config: &ExperimentConfig, res: &Resources, name: &str, iterations: usize, out: &mut Out) -> Result<Value> {
    let skill = res.skill(name)?;
    let sim = res.simulator(config.dt)?;
    let mut world = start_world(&sim, skill, skill.nominal_start)?;
    let logs = loop_skill(skill, iterations, &sim, &mut world, &PlayOptions::default())?;
    let period = skill.theta_period();
    let mut w = out.csv("iterations.csv")?;
    w.write_record(["iteration", "outcome", "xf", "yf", "thetaf", "in_exit"])?;
    let finals: Vec<PlanarPose> = logs.iter().map(|l| l.final_pose().expect("log has samples")).collect();
    let mut all_in_exit = true;
    let mut completed = 0;
    for (i, (log, fin)) in logs.iter().zip(&finals).enumerate() {
        let in_exit = skill.exit_predicate.contains_mod(fin, period);
        if log.outcome.is_success() {
            completed += 1;
            all_in_exit &= in_exit;
        }
        w.write_record([
            (i + 1).to_string(),
            funnelhand::funnel::outcome_label(&log.outcome),
            fmt(fin.x),
            fmt(fin.y),
            fmt(fin.theta),
            in_exit.to_string(),
        ])?;
    }
    w.flush()?;
    let drift = finals
        .iter()
        .map(|p| ((p.x - finals[0].x).powi(2) + (p.y - finals[0].y).powi(2)).sqrt())
        .fold(0.0, f64::max);
    Ok(json!({
        "skill": skill.name,
        "iterations": iterations,
        "loops_completed": completed,
        "all_in_exit": all_in_exit,
        "max_position_drift": drift,
        "first_failure": logs.iter().position(|l| !l.outcome.is_success()).map(|i| i + 1),
    }))
}

fn composability(
    config: &ExperimentConfig,
    res: &Resources,
    first: &PlacementParams,
    margin: funnelhand::Margin,
    next: Option<&crate::config::NextFunnel>,
    out: &mut Out,
) -> Result<Value> {
    let sim = res.simulator(config.dt)?;
    let opts = PlayOptions::default();
    let s1 = res.skill(&first.skill)?;
    let t1 = run_trials(s1, &sim, &first.region, first.n, config.seed, &opts)?;
    let f1 = estimate_of(s1, &t1, config.seed);
    f1.write_csv(out.create("trials.csv")?)?;
    let (s2, f2) = match next {
        Some(nx) => {
            let s2 = res.skill(&nx.skill)?;
            let t2 = run_trials(s2, &sim, &nx.region, nx.n, config.seed, &opts)?;
            let f2 = estimate_of(s2, &t2, config.seed);
            f2.write_csv(out.create("next_trials.csv")?)?;
            (s2, f2)
        }
        None => (s1, f1.clone()),
    };
    let width = res.objects[0].width();
    if f1.exit_summary.is_none() || f2.entrance_box.is_none() {
        return Ok(json!({
            "first": estimate_json(&f1, width),
            "second": estimate_json(&f2, width),
            "success_rate": f1.success_rate(),
            "composable": false,
            "reason": "a funnel has no successful samples",
        }));
    }
    let c = check_composable(&f1, &f2, margin, s2, &sim, &opts)?;
    out.text("composability.json", &serde_json::to_string_pretty(&c)?)?;
    Ok(json!({
        "first": estimate_json(&f1, width),
        "second": estimate_json(&f2, width),
        "margin": margin,
        "success_rate": f1.success_rate(),
        "contained": c.contained,
        "inflated_exit": c.inflated_exit,
        "entrance": c.entrance,
        "replayed": c.replayed,
        "replay_successes": c.replay_successes,
        "replay_ok": c.replay_ok,
        "composable": c.composable,
    }))
}

fn plan(res: &Resources, skills: &[String], start: &str, goal: Option<&str>, cycle: Option<&str>, out: &mut Out) -> Result<Value> {
    let effects: Vec<(String, funnelhand::planner::CubeRotation)> = skills
        .iter()
        .map(|n| res.skill(n).map(|s| (s.name.clone(), s.symbolic_effect)))
        .collect::<Result<_>>()?;
    let graph = build_funnel_graph(&effects)?;
    let start: CubeState = start.parse()?;
    let program = match (goal, cycle) {
        (Some(g), _) => plan_program(&graph, start, g.parse()?)?,
        (None, Some(c)) => plan_face_cycle(&graph, start, &parse_faces(c)?)?,
        (None, None) => unreachable!("validated"),
    };
    let plan = Plan::new(&graph, start, program)?;
    out.text("plan.json", &plan.to_document())?;
    let mut w = out.csv("graph.csv")?;
    w.write_record(["from", "skill", "to"])?;
    for e in &graph.edges {
        w.write_record([e.from.to_string(), e.skill.clone(), e.to.to_string()])?;
    }
    w.flush()?;

    // states reachable from the start
    let mut seen = BTreeSet::from([start.to_string()]);
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        for e in graph.edges.iter().filter(|e| e.from == s) {
            if seen.insert(e.to.to_string()) {
                queue.push_back(e.to);
            }
        }
    }
    Ok(json!({
        "skills": graph.skills.iter().map(|(n, _)| n).collect::<Vec<_>>(),
        "closure_size": seen.len(),
        "plan": plan.skills,
        "states": plan.states.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        "length": plan.skills.len(),
    }))
}

fn show(x: Option<f64>) -> String {
    x.map_or("missing".to_string(), |x| x.to_string())
}

fn check_thresholds(t: &Thresholds, r: &Value) -> Vec<String> {
    let mut v = Vec::new();
    let num = |key: &[&str]| key.iter().try_fold(r, |acc, k| acc.get(*k)).and_then(Value::as_f64);
    if let Some(min) = t.min_success_rate {
        match num(&["success_rate"]) {
            Some(x) if x >= min => {}
            x => v.push(format!("min_success_rate: {} < {min}", show(x))),
        }
    }
    if let Some(min) = t.min_entrance_y_fraction {
        match num(&["entrance", "y_fraction_of_width"]) {
            Some(x) if x >= min => {}
            x => v.push(format!("min_entrance_y_fraction: {} < {min}", show(x))),
        }
    }
    if let Some(min) = t.min_entrance_theta_extent {
        match r.pointer("/entrance/extent/2").and_then(Value::as_f64) {
            Some(x) if x > min => {}
            x => v.push(format!("min_entrance_theta_extent: {} <= {min}", show(x))),
        }
    }
    if let Some(max) = t.max_det_ratio {
        match num(&["contraction", "det_ratio_first_last"]) {
            Some(x) if x < max => {}
            x => v.push(format!("max_det_ratio: {} >= {max}", show(x))),
        }
    }
    if let Some(want) = t.clamp_std_y_decreases {
        match r.pointer("/contraction/clamp/decreases").and_then(Value::as_bool) {
            Some(x) if x == want => {}
            x => v.push(format!(
                "clamp_std_y_decreases: {}, wanted {want}",
                x.map_or("missing".to_string(), |b| b.to_string())
            )),
        }
    }
    if let Some(want) = t.all_succeed {
        if r.get("all_succeed").and_then(Value::as_bool) != Some(want) {
            v.push(format!("all_succeed: {}, wanted {want}", r["all_succeed"]));
        }
    }
    if let Some(min) = t.min_loops {
        let done = r.get("loops_completed").and_then(Value::as_u64).unwrap_or(0) as usize;
        if done < min {
            v.push(format!("min_loops: completed {done}, wanted {min}"));
        }
        if r.get("all_in_exit").and_then(Value::as_bool) != Some(true) {
            v.push("min_loops: a completed loop ended outside the exit box".into());
        }
    }
    if let Some(want) = t.composable {
        if r.get("composable").and_then(Value::as_bool) != Some(want) {
            v.push(format!("composable: {}, wanted {want}", r["composable"]));
        }
    }
    if let Some(want) = t.closure_size {
        let got = r.get("closure_size").and_then(Value::as_u64);
        if got != Some(want as u64) {
            v.push(format!(
                "closure_size: {}, wanted {want}",
                got.map_or("missing".to_string(), |g| g.to_string())
            ));
        }
    }
    v
}

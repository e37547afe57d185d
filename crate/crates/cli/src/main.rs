use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use funnelhand_cli::config::{resolve_hand, resolve_objects, resolve_skills, ExperimentConfig, Sweep, HAND_ENV};
use funnelhand_cli::server::SessionServer;
use funnelhand_cli::{emit_plots, new_session, run_sweep};

#[derive(Parser)]
#[command(name = "funnelhand", version, about = "Compliant-hand funnel experiments and authoring sessions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Overrides shared by the batch verbs.
#[derive(Args, Clone, Debug, Default)]
struct Batch {
    /// Sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulation step in seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Batch {
    fn apply(&self, c: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(dt) = self.dt {
            c.dt = dt;
        }
        if let Some(o) = &self.out {
            c.output_dir = o.clone();
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        batch: Batch,
    },
    /// Serve one interactive session over TCP.
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Hand document; the bundled hand when unset.
        #[arg(long, env = HAND_ENV)]
        hand: Option<String>,
        /// Object references (`bundled:<label>`, `bundled:object-set` or a path).
        #[arg(long, default_values_t = vec!["bundled:cube45".to_string()])]
        objects: Vec<String>,
        /// Extra skill files to make playable.
        #[arg(long)]
        skills: Vec<String>,
        #[arg(long, default_value_t = funnelhand::sim::DEFAULT_DT)]
        dt: f64,
    },
    /// Turn a sweep's report directory into plot-ready tables.
    Plot {
        report: PathBuf,
        #[command(flatten)]
        batch: Batch,
    },
    /// Plan a skill program between cube orientations.
    Plan {
        /// Start state as face-up then face-north, e.g. `FA`.
        #[arg(long, default_value = "FA")]
        start: String,
        #[arg(long, conflicts_with = "cycle", required_unless_present = "cycle")]
        goal: Option<String>,
        /// Faces to bring up in order, e.g. `FABCDE`.
        #[arg(long)]
        cycle: Option<String>,
        #[arg(long, value_delimiter = ',', default_value = "spin,twist,pivot,mr-gait")]
        skills: Vec<String>,
        #[command(flatten)]
        batch: Batch,
    },
    /// Check hand, object, skill or experiment documents.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[command(flatten)]
        batch: Batch,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Sweep { config, batch } => {
            let mut c = ExperimentConfig::load(&config)?;
            batch.apply(&mut c);
            let report = run_sweep(&c)?;
            println!("{} sweep `{}` -> {}", report.kind, c.name, c.output_dir.display());
            for v in &report.violations {
                println!("threshold violated: {v}");
            }
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Serve {
            port,
            host,
            hand,
            objects,
            skills,
            dt,
        } => {
            let base = Path::new(".");
            let hand = resolve_hand(hand.as_deref(), base)?;
            let objects = resolve_objects(&objects, base)?;
            let skills = resolve_skills(&skills, base)?;
            // fail now rather than on the first connection
            new_session(hand.clone(), objects.clone(), skills.clone(), dt)?;
            let factory = Arc::new(move || new_session(hand.clone(), objects.clone(), skills.clone(), dt).expect("checked at startup"));
            let server = SessionServer::bind((host.as_str(), port), factory, true)?;
            println!("listening on {}", server.local_addr()?);
            server.run()?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { report, batch } => {
            let out = batch.out.clone().unwrap_or_else(|| report.join("plots"));
            let files = emit_plots(&report, &out)?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plan {
            start,
            goal,
            cycle,
            skills,
            batch,
        } => {
            let mut c = ExperimentConfig {
                name: "plan".into(),
                hand: None,
                objects: vec!["bundled:cube45".into()],
                skills: Vec::new(),
                seed: 0,
                dt: funnelhand::sim::DEFAULT_DT,
                output_dir: PathBuf::from("out/plan"),
                sweep: Sweep::Plan {
                    skills,
                    start,
                    goal,
                    cycle,
                },
                thresholds: Default::default(),
                base_dir: PathBuf::from("."),
            };
            batch.apply(&mut c);
            let report = run_sweep(&c)?;
            println!("{}", serde_json::to_string_pretty(&report.summary["results"])?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { files, batch } => {
            let mut bad = 0;
            for f in &files {
                match validate_file(f, &batch) {
                    Ok(kind) => println!("ok      {} ({kind})", f.display()),
                    Err(e) => {
                        bad += 1;
                        println!("invalid {}: {e:#}", f.display());
                    }
                }
            }
            Ok(if bad == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

/// Recognises the document kind by its fields and validates it.
fn validate_file(path: &Path, batch: &Batch) -> Result<&'static str> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).context("not JSON")?;
    let has = |k: &str| value.get(k).is_some();
    if value.is_array() {
        funnelhand::object::load_object_specs(&text)?;
        Ok("object list")
    } else if has("sweep") {
        let mut c = ExperimentConfig::load(path)?;
        batch.apply(&mut c);
        c.validate()?;
        Ok("experiment config")
    } else if has("digits") {
        funnelhand::load_hand_spec(&text)?;
        Ok("hand")
    } else if has("keyframes") {
        funnelhand::load_skill(&text)?;
        Ok("skill")
    } else if has("shape") {
        funnelhand::load_object_spec(&text)?;
        Ok("object")
    } else {
        anyhow::bail!("unrecognised document")
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tom_benchgen::{
    generate_benchmark, load_benchmark, save_benchmark, verify_benchmark, GenConfig,
};
use tom_cli::solvers::{BipSolver, LabelSolver, RandomSolver};
use tom_cli::{
    emit_report, evaluate, full_bundle, solve_one, OracleKind, OracleSet, ReportFormat, Solver,
    SolverAnswer,
};
use tom_core::fusion::Condition;
use tom_core::oracle::OracleConfig;
use tom_core::textgen::{render_actions_text, render_state_text, NarrativeDocument};

/// Theory-of-mind benchmark toolkit: generate question sets from simulated
/// rational searches, answer them by Bayesian inverse planning, and score
/// solvers across input conditions.
#[derive(Parser)]
#[command(name = "tom", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark directory from a generation config.
    Gen {
        /// JSON config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "benchmark")]
        out: PathBuf,
        /// Seed override (also honors TOM_SEED).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a solver over a benchmark in one condition.
    Eval {
        #[arg(long)]
        benchmark: PathBuf,
        #[command(flatten)]
        condition: ConditionArg,
        #[command(flatten)]
        oracle: OracleArg,
        #[arg(long, value_enum, default_value = "bip")]
        solver: SolverKind,
        /// Seed for the random solver.
        #[arg(long, default_value_t = 0)]
        random_seed: u64,
        /// Question-level parallelism.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Report directory name under --reports.
        #[arg(long, default_value = "run")]
        run_id: String,
        #[arg(long, default_value = "reports")]
        reports: PathBuf,
        /// Comma-separated report formats: json,csv,md.
        #[arg(long, default_value = "json,csv,md")]
        formats: String,
    },
    /// Answer a single question, optionally with diagnostics.
    Solve {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long)]
        question: String,
        #[command(flatten)]
        condition: ConditionArg,
        #[command(flatten)]
        oracle: OracleArg,
        /// Emit a JSON-lines diagnostic record.
        #[arg(long)]
        explain: bool,
    },
    /// Render a stored episode as a narrative document.
    Render {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long)]
        episode: String,
        /// Print this question's stored document instead of the raw episode.
        #[arg(long)]
        question: Option<String>,
    },
    /// Audit a benchmark directory: schemas, invariants, and text channels.
    Validate {
        #[arg(long)]
        benchmark: PathBuf,
    },
}

#[derive(Args)]
struct ConditionArg {
    /// Input condition: mm, text, or video.
    #[arg(long, default_value = "mm")]
    condition: String,
}

impl ConditionArg {
    fn parse(&self) -> Result<Condition> {
        match self.condition.as_str() {
            "mm" | "multimodal" => Ok(Condition::Multimodal),
            "text" | "text_only" => Ok(Condition::TextOnly),
            "video" | "video_only" => Ok(Condition::VideoOnly),
            other => Err(anyhow!("unknown condition {other} (expected mm|text|video)")),
        }
    }
}

#[derive(Args)]
struct OracleArg {
    /// Likelihood backend: symbolic or remote.
    #[arg(long, default_value = "symbolic")]
    oracle: String,
    /// Remote endpoint base URL (also honors TOM_ORACLE_URL).
    #[arg(long)]
    endpoint: Option<String>,
}

impl OracleArg {
    fn kind(&self) -> Result<OracleKind> {
        match self.oracle.as_str() {
            "symbolic" => Ok(OracleKind::Symbolic),
            "remote" => {
                let cfg = OracleConfig {
                    endpoint_url: self.endpoint.clone(),
                    ..OracleConfig::default()
                };
                let endpoint = cfg.resolved_endpoint().ok_or_else(|| {
                    anyhow!("remote oracle requires --endpoint or TOM_ORACLE_URL")
                })?;
                Ok(OracleKind::Remote { endpoint })
            }
            other => Err(anyhow!("unknown oracle {other} (expected symbolic|remote)")),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverKind {
    Bip,
    Random,
    Labels,
}

/// Exit code contract: 2 validation failure, 3 oracle unreachable,
/// 4 generation shortfall.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    let text = format!("{err:#}");
    if text.contains("shortfall") {
        4
    } else if text.contains("unreachable") || text.contains("requires --endpoint") {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { config, out, seed } => {
            let mut cfg: GenConfig = match &config {
                Some(path) => serde_json::from_str(
                    &std::fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?,
                )
                .context("parsing generation config")?,
                None => GenConfig::default(),
            };
            if let Some(seed) =
                seed.or_else(|| std::env::var("TOM_SEED").ok().and_then(|s| s.parse().ok()))
            {
                cfg.seed = seed;
            }
            let benchmark = generate_benchmark(&cfg)?;
            save_benchmark(&out, &benchmark)?;
            println!(
                "wrote {} questions over {} episodes to {}",
                benchmark.questions.len(),
                benchmark.episodes.len(),
                out.display()
            );
            Ok(())
        }
        Command::Eval {
            benchmark,
            condition,
            oracle,
            solver,
            random_seed,
            jobs,
            run_id,
            reports,
            formats,
        } => {
            let bench = load_benchmark(&benchmark)?;
            let condition = condition.parse()?;
            let solver: Box<dyn Solver> = match solver {
                SolverKind::Bip => Box::new(BipSolver {
                    oracles: OracleSet::new(
                        oracle.kind()?,
                        bench.manifest.config.planner.clone(),
                        OracleConfig::default(),
                    ),
                }),
                SolverKind::Random => Box::new(RandomSolver { seed: random_seed }),
                SolverKind::Labels => Box::new(LabelSolver),
            };
            let report = evaluate(&bench, solver.as_ref(), condition, jobs.max(1))?;
            let dir = reports.join(&run_id);
            std::fs::create_dir_all(&dir)?;
            for name in formats.split(',') {
                let format = ReportFormat::parse(name.trim())
                    .ok_or_else(|| anyhow!("unknown report format {name}"))?;
                let path = dir.join(format!("report.{}", format.extension()));
                std::fs::write(&path, emit_report(&report, format))?;
            }
            println!("{}", emit_report(&report, ReportFormat::Markdown).trim_end());
            if !report.failures.is_empty() {
                eprintln!("{} solver failures", report.failures.len());
            }
            Ok(())
        }
        Command::Solve {
            benchmark,
            question,
            condition,
            oracle,
            explain,
        } => {
            let bench = load_benchmark(&benchmark)?;
            let condition = condition.parse()?;
            let solver = BipSolver {
                oracles: OracleSet::new(
                    oracle.kind()?,
                    bench.manifest.config.planner.clone(),
                    OracleConfig::default(),
                ),
            };
            let (outcome, truth) = solve_one(&bench, &solver, &question, condition)?;
            let verdict = match &outcome.answer {
                SolverAnswer::Label(label) => format!("{label:?}").to_lowercase(),
                SolverAnswer::Abstain => "abstain".to_owned(),
            };
            println!("{question}: answered {verdict} (label {truth:?})");
            if explain {
                if let Some(record) = outcome.explain {
                    println!("{record}");
                }
            }
            Ok(())
        }
        Command::Render {
            benchmark,
            episode,
            question,
        } => {
            let bench = load_benchmark(&benchmark)?;
            let record = bench
                .episode(&episode)
                .ok_or_else(|| anyhow!("unknown episode {episode}"))?;
            let world = bench
                .world(&record.world_id)
                .ok_or_else(|| anyhow!("unknown world {}", record.world_id))?;
            match question {
                Some(qid) => {
                    let q = bench
                        .questions
                        .iter()
                        .find(|q| q.question.id == qid)
                        .ok_or_else(|| anyhow!("unknown question {qid}"))?;
                    let doc = NarrativeDocument {
                        agent_name: q.agent_name.clone(),
                        state_section: q.text_state.clone(),
                        action_section: q.text_actions.clone(),
                        question_section: q.text_question.clone(),
                    };
                    println!("{doc}");
                }
                None => {
                    let layout = &world.file.layout;
                    let state_section = render_state_text(&world.file.initial_state);
                    let action_section = render_actions_text(
                        layout,
                        &record.agent_name,
                        &world.file.initial_state.agent_room,
                        &record.episode.actions,
                    );
                    println!(
                        "What's inside the apartment:\n{state_section}\n\nActions taken by {}:\n{action_section}",
                        record.agent_name
                    );
                }
            }
            Ok(())
        }
        Command::Validate { benchmark } => {
            let bench = load_benchmark(&benchmark)?;
            let mut problems = Vec::new();
            for world in &bench.worlds {
                if let Err(e) = world.file.layout.validate() {
                    problems.push(format!("{}: {e}", world.id));
                }
                let report = tom_core::domain::validate_state(&world.file.initial_state);
                for violation in report.violations {
                    problems.push(format!("{}: {violation}", world.id));
                }
            }
            let mut warning_count = 0usize;
            for record in &bench.questions {
                if let Some(world) = bench.world(&record.world_id) {
                    let (_, warnings) = full_bundle(&world.file.layout, record);
                    warning_count += warnings.len();
                    for w in warnings {
                        problems.push(format!("{}: {w}", record.question.id));
                    }
                }
            }
            if let Err(e) = verify_benchmark(&bench) {
                problems.push(e);
            }
            if problems.is_empty() {
                println!(
                    "ok: {} questions, {} episodes, {} worlds, 0 parse warnings",
                    bench.questions.len(),
                    bench.episodes.len(),
                    bench.worlds.len()
                );
                Ok(())
            } else {
                for p in &problems {
                    eprintln!("{p}");
                }
                Err(anyhow!(
                    "validation failed with {} problems ({warning_count} parse warnings)",
                    problems.len()
                ))
            }
        }
    }
}

//! Evaluation harness: run solvers over generated benchmarks in the three
//! input conditions, score per question type, and emit reports.

pub mod report;
pub mod solvers;

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use tom_benchgen::{Benchmark, QuestionRecord};
use tom_core::domain::{AnswerLabel, PlannerConfig, QType};
use tom_core::fusion::{Condition, ModalityBundle, TextActionFacts, TextStateFacts};
use tom_core::oracle::{ActionOracle, OracleConfig, RemoteOracle, SymbolicOracle};
use tom_core::textgen::{parse_actions_text, parse_state_text, ParseWarning};
use tom_core::world::WorldLayout;

pub use report::{emit_report, ReportFormat};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("question {0} references unknown world {1}")]
    UnknownWorld(String, String),
    #[error("oracle construction failed: {0}")]
    Oracle(#[from] tom_core::oracle::OracleError),
    #[error(transparent)]
    Fusion(#[from] tom_core::fusion::FusionError),
    #[error(transparent)]
    Infer(#[from] tom_core::infer::InferError),
    #[error(transparent)]
    Text(#[from] tom_core::textgen::TextError),
    #[error("solver failure: {0}")]
    Solver(String),
}

/// What a solver sees for one question: the layout, the stored record, and
/// the channel bundle already projected to the evaluation condition.
pub struct QuestionContext<'a> {
    pub layout: &'a WorldLayout,
    pub record: &'a QuestionRecord,
    pub bundle: ModalityBundle,
    pub condition: Condition,
}

/// A solver's verdict on one question.
#[derive(Clone, Debug, PartialEq)]
pub enum SolverAnswer {
    Label(AnswerLabel),
    Abstain,
}

/// The verdict plus optional diagnostics for `--explain`.
pub struct SolverOutcome {
    pub answer: SolverAnswer,
    pub explain: Option<serde_json::Value>,
}

pub trait Solver: Sync {
    fn id(&self) -> String;
    fn answer(&self, ctx: &QuestionContext) -> Result<SolverOutcome, EvalError>;
}

/// Parses a stored record's text channels and assembles the full bundle.
pub fn full_bundle(
    layout: &WorldLayout,
    record: &QuestionRecord,
) -> (ModalityBundle, Vec<ParseWarning>) {
    let mut warnings = Vec::new();
    let state = parse_state_text(layout, &record.text_state);
    warnings.extend(state.warnings);
    let actions = parse_actions_text(layout, &record.text_actions);
    warnings.extend(actions.warnings);
    let bundle = ModalityBundle {
        condition: Condition::Multimodal,
        video: Some(record.video.clone()),
        text_state: Some(TextStateFacts {
            predicates: state.facts.predicates,
            explicit_empty: state.facts.explicit_empty,
        }),
        text_actions: Some(TextActionFacts {
            start_room: actions.facts.start_room,
            actions: actions.facts.actions,
        }),
    };
    (bundle, warnings)
}

/// Factory for externally constructed oracles (wrappers, stubs, mocks).
pub type OracleFactory = std::sync::Arc<
    dyn Fn(&WorldLayout, &PlannerConfig) -> std::sync::Arc<dyn ActionOracle> + Send + Sync,
>;

/// Which likelihood backend the inference solver runs on.
#[derive(Clone)]
pub enum OracleKind {
    Symbolic,
    Remote { endpoint: String },
    Custom(OracleFactory),
}

/// Per-world oracle cache: one engine (or remote client) per layout, built
/// with the benchmark's generator-matched planner constants.
pub struct OracleSet {
    kind: OracleKind,
    planner: PlannerConfig,
    oracle_cfg: OracleConfig,
    cache: Mutex<BTreeMap<String, std::sync::Arc<dyn ActionOracle>>>,
}

impl OracleSet {
    pub fn new(kind: OracleKind, planner: PlannerConfig, oracle_cfg: OracleConfig) -> Self {
        Self {
            kind,
            planner,
            oracle_cfg,
            cache: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn for_world(
        &self,
        world_id: &str,
        layout: &WorldLayout,
    ) -> Result<std::sync::Arc<dyn ActionOracle>, EvalError> {
        let mut cache = self.cache.lock().unwrap();
        if let Some(oracle) = cache.get(world_id) {
            return Ok(oracle.clone());
        }
        let oracle: std::sync::Arc<dyn ActionOracle> = match &self.kind {
            OracleKind::Symbolic => {
                std::sync::Arc::new(SymbolicOracle::new(layout, self.planner.clone()))
            }
            OracleKind::Remote { endpoint } => {
                let cfg = OracleConfig {
                    backend: tom_core::oracle::OracleBackend::Remote,
                    endpoint_url: Some(endpoint.clone()),
                    ..self.oracle_cfg.clone()
                };
                std::sync::Arc::new(RemoteOracle::new(layout, cfg)?)
            }
            OracleKind::Custom(factory) => factory(layout, &self.planner),
        };
        cache.insert(world_id.to_owned(), oracle.clone());
        Ok(oracle)
    }
}

/// Accuracy bucket for one question type.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeScore {
    pub n: usize,
    pub correct: usize,
    pub abstained: usize,
    pub failed: usize,
    pub accuracy: Option<f64>,
}

impl TypeScore {
    fn finish(&mut self) {
        if self.n > 0 {
            self.accuracy =
                Some((self.correct as f64 + 0.5 * self.abstained as f64) / self.n as f64);
        }
    }

    fn merge(&mut self, other: &TypeScore) {
        self.n += other.n;
        self.correct += other.correct;
        self.abstained += other.abstained;
        self.failed += other.failed;
    }
}

/// Full evaluation result: per-type accuracies plus category aggregates,
/// mirroring the belief/goal/all report layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub solver_id: String,
    pub condition: Condition,
    pub n: usize,
    pub seed: u64,
    pub wall_time_ms: u64,
    pub per_type: BTreeMap<QType, TypeScore>,
    pub belief_all: TypeScore,
    pub goal_all: TypeScore,
    pub overall: TypeScore,
    pub failures: Vec<String>,
}

impl EvalReport {
    pub fn accuracy(&self, qtype: QType) -> Option<f64> {
        self.per_type.get(&qtype).and_then(|s| s.accuracy)
    }
}

/// Evaluates a solver over every question, each projected to the condition.
/// Question-level parallelism is controlled by `jobs`; results are
/// deterministic regardless of thread count for deterministic solvers.
pub fn evaluate(
    benchmark: &Benchmark,
    solver: &dyn Solver,
    condition: Condition,
    jobs: usize,
) -> Result<EvalReport, EvalError> {
    let start = Instant::now();
    let one = |record: &QuestionRecord| -> Result<SolverAnswer, EvalError> {
        let world = benchmark
            .world(&record.world_id)
            .ok_or_else(|| EvalError::UnknownWorld(record.question.id.clone(), record.world_id.clone()))?;
        let (bundle, _warnings) = full_bundle(&world.file.layout, record);
        let bundle = bundle.project(condition);
        bundle.validate()?;
        let ctx = QuestionContext {
            layout: &world.file.layout,
            record,
            bundle,
            condition,
        };
        Ok(solver.answer(&ctx)?.answer)
    };

    let outcomes: Vec<Result<SolverAnswer, EvalError>> = if jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool");
        pool.install(|| benchmark.questions.par_iter().map(one).collect())
    } else {
        benchmark.questions.iter().map(one).collect()
    };

    let mut per_type: BTreeMap<QType, TypeScore> = BTreeMap::new();
    let mut failures = Vec::new();
    for (record, outcome) in benchmark.questions.iter().zip(outcomes) {
        let score = per_type.entry(record.question.qtype).or_default();
        score.n += 1;
        match outcome {
            Ok(SolverAnswer::Label(label)) if label == record.question.answer => {
                score.correct += 1;
            }
            Ok(SolverAnswer::Label(_)) => {}
            Ok(SolverAnswer::Abstain) => score.abstained += 1,
            Err(e) => {
                // Recorded and scored incorrect.
                score.failed += 1;
                failures.push(format!("{}: {e}", record.question.id));
            }
        }
    }
    let mut belief_all = TypeScore::default();
    let mut goal_all = TypeScore::default();
    let mut overall = TypeScore::default();
    for (qtype, score) in per_type.iter_mut() {
        score.finish();
        if qtype.is_belief() {
            belief_all.merge(score);
        } else {
            goal_all.merge(score);
        }
        overall.merge(score);
    }
    belief_all.finish();
    goal_all.finish();
    overall.finish();
    Ok(EvalReport {
        solver_id: solver.id(),
        condition,
        n: benchmark.questions.len(),
        seed: benchmark.manifest.seed,
        wall_time_ms: start.elapsed().as_millis() as u64,
        per_type,
        belief_all,
        goal_all,
        overall,
        failures,
    })
}

/// Convenience: evaluate one question by id, returning the outcome with
/// diagnostics.
pub fn solve_one(
    benchmark: &Benchmark,
    solver: &dyn Solver,
    question_id: &str,
    condition: Condition,
) -> Result<(SolverOutcome, AnswerLabel), EvalError> {
    let record = benchmark
        .questions
        .iter()
        .find(|q| q.question.id == question_id)
        .ok_or_else(|| EvalError::Solver(format!("unknown question {question_id}")))?;
    let world = benchmark
        .world(&record.world_id)
        .ok_or_else(|| EvalError::UnknownWorld(question_id.to_owned(), record.world_id.clone()))?;
    let (bundle, _) = full_bundle(&world.file.layout, record);
    let bundle = bundle.project(condition);
    let ctx = QuestionContext {
        layout: &world.file.layout,
        record,
        bundle,
        condition,
    };
    Ok((solver.answer(&ctx)?, record.question.answer))
}

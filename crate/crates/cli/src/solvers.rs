//! The shipped solvers: inverse planning over fused channels, a uniform
//! random baseline, and the label-reading ceiling.

use tom_core::domain::AnswerLabel;
use tom_core::fusion::align_streams;
use tom_core::infer::{
    answer_belief_question, answer_goal_question, question_classes, ExplainRecord,
    InferenceContext,
};
use tom_core::textgen::parse_question;

use crate::{EvalError, OracleSet, QuestionContext, Solver, SolverAnswer, SolverOutcome};

/// Bayesian inverse planning: parse the question text, align the permitted
/// channels into an episode representation, estimate the agent's beliefs,
/// and score the two hypotheses with the likelihood oracle.
pub struct BipSolver {
    pub oracles: OracleSet,
}

impl Solver for BipSolver {
    fn id(&self) -> String {
        "bip".to_owned()
    }

    fn answer(&self, ctx: &QuestionContext) -> Result<SolverOutcome, EvalError> {
        let layout = ctx.layout;
        let form = parse_question(layout, &ctx.record.text_question)?;
        let question = form.to_question(
            &ctx.record.question.id,
            ctx.record.question.qtype,
            ctx.record.question.timestep,
        );
        let repr = align_streams(layout, &ctx.bundle)?;
        let classes = question_classes(&question);
        let infer_ctx = InferenceContext::new(layout, &repr, &classes)?;
        let oracle = self
            .oracles
            .for_world(&ctx.record.world_id, layout)?;
        let answered = if question.qtype.is_belief() {
            answer_belief_question(&infer_ctx, &question, oracle.as_ref())?
        } else {
            answer_goal_question(&infer_ctx, &question, oracle.as_ref())?
        };
        let explain = ExplainRecord {
            question_id: question.id.clone(),
            qtype: question.qtype,
            winner: answered.winner,
            detail: answered.explain,
        };
        Ok(SolverOutcome {
            answer: SolverAnswer::Label(answered.winner),
            explain: serde_json::to_value(&explain).ok(),
        })
    }
}

/// Uniform random baseline; deterministic per (seed, question id).
pub struct RandomSolver {
    pub seed: u64,
}

impl Solver for RandomSolver {
    fn id(&self) -> String {
        format!("random({})", self.seed)
    }

    fn answer(&self, ctx: &QuestionContext) -> Result<SolverOutcome, EvalError> {
        let mut h = self.seed ^ 0xD1B5_4A32_D192_ED03;
        for byte in ctx.record.question.id.bytes() {
            h = (h ^ byte as u64).wrapping_mul(0x100_0000_01B3);
        }
        h ^= h >> 33;
        h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
        h ^= h >> 33;
        let label = if h & 1 == 0 { AnswerLabel::A } else { AnswerLabel::B };
        Ok(SolverOutcome {
            answer: SolverAnswer::Label(label),
            explain: None,
        })
    }
}

/// Reads the hidden label; the ceiling used to sanity-check the harness.
pub struct LabelSolver;

impl Solver for LabelSolver {
    fn id(&self) -> String {
        "labels".to_owned()
    }

    fn answer(&self, ctx: &QuestionContext) -> Result<SolverOutcome, EvalError> {
        Ok(SolverOutcome {
            answer: SolverAnswer::Label(ctx.record.question.answer),
            explain: None,
        })
    }
}

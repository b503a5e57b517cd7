//! Procedural benchmark factory: samples apartments, goals, and rational
//! search episodes; runs an ideal observer that partitions goal/belief
//! hypotheses into consistent and eliminated sets; instantiates the seven
//! question types with one consistent and one eliminated option; and
//! balances and serializes the result.

mod config;
mod observer;
mod questions;
mod sample;
mod serialize;

pub use config::GenConfig;
pub use observer::{EpisodeAnalysis, HypothesisFate, IdealObserverState};
pub use questions::{certified_hypothesis, instantiate_question, QuestionDraft};
pub use sample::sample_world;
pub use serialize::{load_benchmark, save_benchmark};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use tom_core::domain::{
    Action, AnswerLabel, Episode, ObjectClass, Predicate, QType, Question, State,
};
use tom_core::fusion::{VideoStep, VideoStream};
use tom_core::planner::{rollout_with_engine, PlannerError, PolicyEngine, RolloutOptions};
use tom_core::textgen::{
    agent_names, render_actions_text_with, render_question_with, render_state_text_with, TextStyle,
};
use tom_core::world::{camera_channel, transition, WorldFile, WorldLayout};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("world sampling exhausted after {0} attempts")]
    SamplingExhausted(usize),
    #[error("generation shortfall for type {qtype}: produced {got} of {want} questions")]
    GenerationShortfall {
        qtype: QType,
        got: usize,
        want: usize,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    World(#[from] tom_core::world::WorldError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Domain(#[from] tom_core::domain::DomainError),
    #[error(transparent)]
    Text(#[from] tom_core::textgen::TextError),
}

/// Splits one seed into independent deterministic substreams.
pub fn derive_rng(base: u64, tag: &str, index: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut h = base ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1));
    for byte in tag.bytes() {
        h = (h ^ byte as u64).wrapping_mul(0x100_0000_01B3);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// One stored world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldRecord {
    pub id: String,
    #[serde(flatten)]
    pub file: WorldFile,
}

/// One stored episode with its world binding and display name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub id: String,
    pub world_id: String,
    pub agent_name: String,
    pub episode: Episode,
}

/// One stored question with its modality projections: narrative text
/// sections for the text channel and the per-step predicate stream for the
/// video channel. Types 1.1/1.2 present the prefix with the final open
/// rendered as a reach toward the still-closed container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question: Question,
    pub episode_id: String,
    pub world_id: String,
    pub agent_name: String,
    pub text_state: String,
    pub text_actions: String,
    pub text_question: String,
    pub video: VideoStream,
}

/// Generation metadata stored alongside the questions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: GenConfig,
    pub counts: BTreeMap<QType, usize>,
}

/// A complete generated benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct Benchmark {
    pub manifest: Manifest,
    pub worlds: Vec<WorldRecord>,
    pub episodes: Vec<EpisodeRecord>,
    pub questions: Vec<QuestionRecord>,
}

impl Benchmark {
    pub fn world(&self, id: &str) -> Option<&WorldRecord> {
        self.worlds.iter().find(|w| w.id == id)
    }

    pub fn episode(&self, id: &str) -> Option<&EpisodeRecord> {
        self.episodes.iter().find(|e| e.id == id)
    }
}

/// The action prefix a question presents: types 1.1/1.2 swap the final open
/// for a reach toward the container.
pub fn question_prefix(question: &Question, episode: &Episode) -> Vec<Action> {
    let mut actions: Vec<Action> = episode.actions[..question.timestep].to_vec();
    if matches!(question.qtype, QType::B11 | QType::B12) {
        if let Some(Action::Open(c)) = actions.last().cloned() {
            *actions.last_mut().unwrap() = Action::AboutToOpen(c);
        }
    }
    actions
}

/// Camera stream over a prefix, replayed from the initial state.
pub fn video_stream_for(
    layout: &WorldLayout,
    initial_state: &State,
    actions: &[Action],
) -> Result<VideoStream, GenError> {
    let initial = camera_channel(initial_state, &Action::Idle);
    let mut state = initial_state.clone();
    let mut steps = Vec::with_capacity(actions.len());
    for action in actions {
        state = transition(layout, &state, action)?;
        steps.push(VideoStep {
            action: action.clone(),
            predicates: camera_channel(&state, action),
        });
    }
    Ok(VideoStream { initial, steps })
}

/// Generates a full benchmark from the config. Deterministic in the seed:
/// the same config yields byte-identical serialized output.
pub fn generate_benchmark(config: &GenConfig) -> Result<Benchmark, GenError> {
    config.validate().map_err(GenError::InvalidConfig)?;
    let want: BTreeMap<QType, usize> = config.questions_per_type.clone();
    let mut pools: BTreeMap<QType, Vec<(usize, QuestionDraft)>> = BTreeMap::new();
    let mut kept: Vec<(WorldLayout, State, Episode)> = Vec::new();

    for ep_index in 0..config.max_episodes {
        let filled = want
            .iter()
            .all(|(qtype, want)| pools.get(qtype).map(|p| p.len()).unwrap_or(0) >= want + 2);
        if filled {
            break;
        }
        let mut world_rng = derive_rng(config.seed, "world", ep_index as u64);
        let (layout, initial_state) = match sample_world(config, &mut world_rng) {
            Ok(pair) => pair,
            Err(_) => continue,
        };
        let classes: Vec<ObjectClass> = tom_core::planner::present_classes(&initial_state)
            .into_iter()
            .collect();
        if classes.is_empty() {
            continue;
        }
        let goal_class = classes[world_rng.gen_range(0..classes.len())].clone();
        let engine = PolicyEngine::new(&layout, config.planner.clone());
        let mut rollout_rng = derive_rng(config.seed, "rollout", ep_index as u64);
        let opts = RolloutOptions {
            max_steps: config.max_episode_len,
            min_action_share: config.consistency_threshold,
        };
        let episode = match rollout_with_engine(
            &engine,
            &initial_state,
            &tom_core::domain::Goal { target: goal_class },
            &opts,
            &mut rollout_rng,
        ) {
            Ok(episode) => episode,
            // Flagged and excluded: a capped agent yields no questions.
            Err(PlannerError::HorizonExhausted(_)) => continue,
            Err(e) => return Err(e.into()),
        };
        let analysis = EpisodeAnalysis::new(&layout, &episode, engine, config)?;
        let mut qrng = derive_rng(config.seed, "questions", ep_index as u64);
        let mut drafts_here: Vec<QuestionDraft> = Vec::new();
        for t in 1..=episode.len() {
            let needy: Vec<QType> = QType::ALL
                .iter()
                .copied()
                .filter(|qtype| {
                    let have = pools.get(qtype).map(|p| p.len()).unwrap_or(0);
                    // Overfill slightly so the balancing subsample has slack.
                    have < want.get(qtype).copied().unwrap_or(0) + 3
                })
                .collect();
            if needy.is_empty() {
                continue;
            }
            let mut drafts = Vec::new();
            for qtype in needy {
                if let Some(draft) = instantiate_question(&analysis, t, qtype, &mut qrng) {
                    drafts.push(draft);
                }
            }
            // At most one question per (episode, step).
            if let Some(draft) = drafts.choose(&mut qrng).cloned() {
                drafts_here.push(draft);
            }
        }
        if !drafts_here.is_empty() {
            for draft in drafts_here {
                pools
                    .entry(draft.qtype)
                    .or_default()
                    .push((kept.len(), draft));
            }
            kept.push((layout, initial_state, episode));
        }
    }

    for (qtype, want) in &want {
        let got = pools.get(qtype).map(|p| p.len()).unwrap_or(0);
        if got < *want {
            return Err(GenError::GenerationShortfall {
                qtype: *qtype,
                got,
                want: *want,
            });
        }
    }

    // Balance: per type, sample exactly the requested count.
    let mut selected: Vec<(usize, QuestionDraft)> = Vec::new();
    let mut balance_rng = derive_rng(config.seed, "balance", 0);
    for (qtype, want) in &want {
        let mut pool = pools.remove(qtype).unwrap_or_default();
        pool.shuffle(&mut balance_rng);
        pool.truncate(*want);
        selected.extend(pool);
    }
    selected.sort_by_key(|(ep, draft)| (*ep, draft.timestep, draft.qtype));

    // Materialize records.
    let mut worlds = Vec::new();
    let mut episodes = Vec::new();
    let mut used: BTreeMap<usize, usize> = BTreeMap::new();
    for (ep_idx, _) in &selected {
        if !used.contains_key(ep_idx) {
            let id = used.len();
            used.insert(*ep_idx, id);
            let (layout, initial_state, episode) = &kept[*ep_idx];
            let mut name_rng = derive_rng(config.seed, "name", *ep_idx as u64);
            let roster = agent_names();
            let agent_name = roster[name_rng.gen_range(0..roster.len())].name.clone();
            worlds.push(WorldRecord {
                id: format!("w_{id:03}"),
                file: WorldFile {
                    layout: layout.clone(),
                    initial_state: initial_state.clone(),
                },
            });
            episodes.push(EpisodeRecord {
                id: format!("ep_{id:03}"),
                world_id: format!("w_{id:03}"),
                agent_name,
                episode: episode.clone(),
            });
        }
    }

    let mut questions = Vec::new();
    let mut counts: BTreeMap<QType, usize> = BTreeMap::new();
    for (q_index, (ep_idx, draft)) in selected.iter().enumerate() {
        let stored = used[ep_idx];
        let (layout, initial_state, episode) = &kept[*ep_idx];
        let agent_name = episodes[stored].agent_name.clone();
        let mut question =
            draft.to_question(&mut derive_rng(config.seed, "options", q_index as u64));
        question.id = format!("q_{q_index:03}");
        let prefix = question_prefix(&question, episode);
        let mut style = TextStyle::Seeded(derive_rng(config.seed, "text", q_index as u64));
        let text_state = render_state_text_with(initial_state, &mut style);
        let text_actions = render_actions_text_with(
            layout,
            &agent_name,
            &initial_state.agent_room,
            &prefix,
            &mut style,
        );
        let text_question = render_question_with(layout, &agent_name, &question, &mut style)?;
        let video = video_stream_for(layout, initial_state, &prefix)?;
        *counts.entry(question.qtype).or_default() += 1;
        questions.push(QuestionRecord {
            question,
            episode_id: format!("ep_{stored:03}"),
            world_id: format!("w_{stored:03}"),
            agent_name,
            text_state,
            text_actions,
            text_question,
            video,
        });
    }

    Ok(Benchmark {
        manifest: Manifest {
            seed: config.seed,
            config: config.clone(),
            counts,
        },
        worlds,
        episodes,
        questions,
    })
}

/// Independently re-verifies every stored question: the labeled answer's
/// hypothesis must be consistent and the distractor eliminated under a fresh
/// ideal-observer run; no two questions may share an (episode, step) pair;
/// the true annotation never appears as the eliminated option.
pub fn verify_benchmark(benchmark: &Benchmark) -> Result<(), String> {
    let mut seen_steps = std::collections::BTreeSet::new();
    for record in &benchmark.questions {
        let world = benchmark
            .world(&record.world_id)
            .ok_or_else(|| format!("{}: missing world", record.question.id))?;
        let episode = benchmark
            .episode(&record.episode_id)
            .ok_or_else(|| format!("{}: missing episode", record.question.id))?;
        if !seen_steps.insert((record.episode_id.clone(), record.question.timestep)) {
            return Err(format!(
                "{}: duplicate (episode, timestep) pair",
                record.question.id
            ));
        }
        let engine = PolicyEngine::new(
            &world.file.layout,
            benchmark.manifest.config.planner.clone(),
        );
        let analysis = EpisodeAnalysis::new(
            &world.file.layout,
            &episode.episode,
            engine,
            &benchmark.manifest.config,
        )
        .map_err(|e| format!("{}: {e}", record.question.id))?;
        let observer = analysis.ideal_observer(record.question.timestep);
        let question = &record.question;
        let (correct, distractor) = match question.answer {
            AnswerLabel::A => (&question.option_a, &question.option_b),
            AnswerLabel::B => (&question.option_b, &question.option_a),
        };
        let correct_h = certified_hypothesis(question, correct);
        let distractor_h = certified_hypothesis(question, distractor);
        if observer.fate(&correct_h) != Some(HypothesisFate::Consistent) {
            return Err(format!(
                "{}: labeled answer is not ideal-observer consistent",
                question.id
            ));
        }
        match observer.fate(&distractor_h) {
            Some(HypothesisFate::Consistent) | None => {
                return Err(format!("{}: distractor was not eliminated", question.id));
            }
            _ => {}
        }
        if let Some(annotations) = &episode.episode.annotations {
            let truth = tom_core::domain::Hypothesis {
                goal: annotations.true_goal.clone(),
                belief: None,
            };
            if distractor_h == truth {
                return Err(format!("{}: distractor equals the true goal", question.id));
            }
        }
    }
    Ok(())
}

/// Parsed text channels of a stored question, used by round-trip tests.
pub fn text_channel_predicates(
    layout: &WorldLayout,
    record: &QuestionRecord,
) -> (Vec<Predicate>, Vec<Action>) {
    let state = tom_core::textgen::parse_state_text(layout, &record.text_state);
    let actions = tom_core::textgen::parse_actions_text(layout, &record.text_actions);
    (
        state.facts.predicates.into_iter().collect(),
        actions.facts.actions,
    )
}

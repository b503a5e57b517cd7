//! Canonical JSON round-trips over randomized instances of the four
//! serialized document types, plus belief normalization checks.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tom_benchgen::{derive_rng, sample_world, GenConfig};
use tom_core::domain::{
    from_canonical_json, to_canonical_json, AnswerLabel, Belief, BeliefStatement, Episode, Goal,
    Hypothesis, Location, ObjectClass, Polarity, QType, Question, QuestionCondition, State,
    CLASS_REGISTRY,
};
use tom_core::domain::PlannerConfig;
use tom_core::planner::{rollout, RolloutOptions};

fn random_state(rng: &mut ChaCha8Rng) -> State {
    let config = GenConfig::default();
    sample_world(&config, rng).expect("world samples").1
}

#[test]
fn state_json_round_trips_over_1000_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for i in 0..1000 {
        let state = random_state(&mut rng);
        let json = to_canonical_json(&state).unwrap();
        let back: State = from_canonical_json(&json).unwrap();
        assert_eq!(state, back, "instance {i}");
    }
}

#[test]
fn belief_json_round_trips_over_1000_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for i in 0..1000 {
        let mut belief = Belief::default();
        let class_count = rng.gen_range(1..=4);
        for info in CLASS_REGISTRY.iter().take(class_count) {
            let n = rng.gen_range(1..=5);
            let mut dist = BTreeMap::new();
            let mut remaining = 1.0f64;
            for k in 0..n {
                let p = if k == n - 1 {
                    remaining
                } else {
                    let p = rng.gen::<f64>() * remaining;
                    remaining -= p;
                    p
                };
                dist.insert(
                    Location::InContainer(format!("cabinet_{k}").as_str().into()),
                    p,
                );
            }
            belief.classes.insert(ObjectClass::new(info.name), dist);
        }
        assert!(belief.is_normalized(), "instance {i}");
        let json = to_canonical_json(&belief).unwrap();
        let back: Belief = from_canonical_json(&json).unwrap();
        assert_eq!(belief, back, "instance {i}");
        assert!(back.is_normalized(), "instance {i} after decode");
    }
}

#[test]
fn episode_json_round_trips_over_1000_instances() {
    // Episodes come from real rollouts over sampled worlds; beliefs in the
    // annotations stress the float paths.
    let config = GenConfig::default();
    let planner = PlannerConfig {
        beta: 50.0,
        step_cost: -0.02,
        goal_reward: 2.0,
        ..Default::default()
    };
    let mut episodes = 0;
    let mut index = 0u64;
    while episodes < 1000 {
        let mut rng = derive_rng(4242, "ser_episode", index);
        index += 1;
        let Ok((layout, state)) = sample_world(&config, &mut rng) else {
            continue;
        };
        let classes: Vec<ObjectClass> =
            tom_core::planner::present_classes(&state).into_iter().collect();
        let Some(goal) = classes.choose(&mut rng) else {
            continue;
        };
        let Ok(episode) = rollout(
            &layout,
            &state,
            &Goal { target: goal.clone() },
            &planner,
            &RolloutOptions::default(),
            &mut rng,
        ) else {
            continue;
        };
        let json = to_canonical_json(&episode).unwrap();
        let back: Episode = from_canonical_json(&json).unwrap();
        assert_eq!(episode, back, "episode {episodes}");
        episodes += 1;
    }
}

#[test]
fn question_json_round_trips_over_1000_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let classes: Vec<&str> = CLASS_REGISTRY.iter().map(|c| c.name).collect();
    for i in 0..1000 {
        let qtype = QType::ALL[rng.gen_range(0..QType::ALL.len())];
        let class_a = ObjectClass::new(*classes.choose(&mut rng).unwrap());
        let class_b = ObjectClass::new(*classes.choose(&mut rng).unwrap());
        let container: tom_core::domain::EntityId =
            format!("cabinet_{}", rng.gen_range(1..4)).as_str().into();
        let statement = |polarity| BeliefStatement {
            object: class_a.clone(),
            container: container.clone(),
            polarity,
        };
        let (condition, option_a, option_b) = if qtype.is_belief() {
            (
                Some(QuestionCondition::GivenGoal(Goal { target: class_a.clone() })),
                Hypothesis {
                    goal: Goal { target: class_a.clone() },
                    belief: Some(statement(Polarity::Affirmed)),
                },
                Hypothesis {
                    goal: Goal { target: class_a.clone() },
                    belief: Some(statement(Polarity::Negated)),
                },
            )
        } else {
            let condition = (qtype == QType::G22)
                .then(|| QuestionCondition::GivenBelief(statement(Polarity::Negated)));
            (
                condition,
                Hypothesis { goal: Goal { target: class_a.clone() }, belief: None },
                Hypothesis { goal: Goal { target: class_b.clone() }, belief: None },
            )
        };
        let question = Question {
            id: format!("q_{i}"),
            qtype,
            timestep: rng.gen_range(1..25),
            condition,
            option_a,
            option_b,
            answer: if rng.gen_bool(0.5) { AnswerLabel::A } else { AnswerLabel::B },
        };
        let json = to_canonical_json(&question).unwrap();
        let back: Question = from_canonical_json(&json).unwrap();
        assert_eq!(question, back, "instance {i}");
    }
}

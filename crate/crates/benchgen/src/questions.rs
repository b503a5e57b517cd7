use rand::seq::SliceRandom;
use rand::Rng;

use tom_core::domain::{
    Action, AnswerLabel, BeliefStatement, EntityId, Goal, Hypothesis, Location, ObjectClass,
    Polarity, QType, Question, QuestionCondition, WalkTarget,
};

use crate::observer::{EpisodeAnalysis, HypothesisFate};

/// A question before option-order randomization: the scenario parameters
/// plus the certified consistent and eliminated hypotheses.
#[derive(Clone, Debug, PartialEq)]
pub struct QuestionDraft {
    pub qtype: QType,
    pub timestep: usize,
    pub condition: Option<QuestionCondition>,
    pub consistent_option: Hypothesis,
    pub eliminated_option: Hypothesis,
}

impl QuestionDraft {
    /// Builds the final question with randomized option order.
    pub fn to_question(&self, rng: &mut impl Rng) -> Question {
        let consistent_first = rng.gen_bool(0.5);
        let (option_a, option_b, answer) = if consistent_first {
            (
                self.consistent_option.clone(),
                self.eliminated_option.clone(),
                AnswerLabel::A,
            )
        } else {
            (
                self.eliminated_option.clone(),
                self.consistent_option.clone(),
                AnswerLabel::B,
            )
        };
        Question {
            id: String::new(),
            qtype: self.qtype,
            timestep: self.timestep,
            condition: self.condition.clone(),
            option_a,
            option_b,
            answer,
        }
    }
}

/// The hypothesis the ideal observer certifies for one stored option: the
/// option itself with the question's given-belief condition injected.
pub fn certified_hypothesis(question: &Question, option: &Hypothesis) -> Hypothesis {
    let injected = match &question.condition {
        Some(QuestionCondition::GivenBelief(stmt)) => Some(stmt.clone()),
        _ => None,
    };
    Hypothesis {
        goal: option.goal.clone(),
        belief: option.belief.clone().or(injected),
    }
}

fn statement(object: &ObjectClass, container: &EntityId, polarity: Polarity) -> BeliefStatement {
    BeliefStatement {
        object: object.clone(),
        container: container.clone(),
        polarity,
    }
}

fn belief_pair(goal: &ObjectClass, container: &EntityId) -> (Hypothesis, Hypothesis) {
    let affirmed = Hypothesis {
        goal: Goal { target: goal.clone() },
        belief: Some(statement(goal, container, Polarity::Affirmed)),
    };
    let negated = Hypothesis {
        goal: Goal { target: goal.clone() },
        belief: Some(statement(goal, container, Polarity::Negated)),
    };
    (affirmed, negated)
}

fn goal_only(class: &ObjectClass) -> Hypothesis {
    Hypothesis {
        goal: Goal { target: class.clone() },
        belief: None,
    }
}

fn has_instance_in(analysis: &EpisodeAnalysis, t: usize, class: &ObjectClass, c: &EntityId) -> bool {
    analysis.classes_in_container(t, c).contains(class)
}

/// Tries to instantiate one question of the given type at step `t`,
/// sampling among qualifying parameterizations. Returns `None` when the
/// step does not satisfy the type's scenario precondition.
pub fn instantiate_question(
    analysis: &EpisodeAnalysis,
    t: usize,
    qtype: QType,
    rng: &mut impl Rng,
) -> Option<QuestionDraft> {
    if t == 0 || t > analysis.episode.len() {
        return None;
    }
    let action = &analysis.episode.actions[t - 1];
    match qtype {
        QType::B11 | QType::B12 => {
            let Action::Open(container) = action else {
                return None;
            };
            let want_inside = qtype == QType::B11;
            let mut candidates = Vec::new();
            for x in &analysis.classes {
                if !analysis.unseen_at(x, t) {
                    continue;
                }
                if has_instance_in(analysis, t, x, container) != want_inside {
                    continue;
                }
                let target = Location::InContainer(container.clone());
                if !analysis.support_at(t, x).contains(&target) {
                    continue;
                }
                let (affirmed, negated) = belief_pair(x, container);
                if analysis.fate(&affirmed, t) == HypothesisFate::Consistent
                    && analysis.fate(&negated, t) != HypothesisFate::Consistent
                    && analysis.score_margin(&affirmed, &negated, t) >= analysis.min_score_margin
                {
                    candidates.push(x.clone());
                }
            }
            let x = candidates.choose(rng)?.clone();
            let (affirmed, negated) = belief_pair(&x, container);
            Some(QuestionDraft {
                qtype,
                timestep: t,
                condition: Some(QuestionCondition::GivenGoal(Goal { target: x })),
                consistent_option: affirmed,
                eliminated_option: negated,
            })
        }
        QType::B13 => {
            // The agent walks out of a room leaving a plausible container
            // unchecked: believing the object was inside would have made
            // leaving irrational.
            let Action::WalkTowards(WalkTarget::Room(target_room)) = action else {
                return None;
            };
            let room = &analysis.state_before(t).agent_room;
            if target_room == room {
                return None;
            }
            let mut candidates = Vec::new();
            for container in analysis
                .layout
                .containers
                .iter()
                .filter(|c| &c.room == room)
            {
                if !analysis.never_opened(t, &container.id) {
                    continue;
                }
                for x in &analysis.classes {
                    if !analysis.unseen_at(x, t) {
                        continue;
                    }
                    let target = Location::InContainer(container.id.clone());
                    if !analysis.support_at(t, x).contains(&target) {
                        continue;
                    }
                    let (affirmed, negated) = belief_pair(x, &container.id);
                    if analysis.fate(&negated, t) == HypothesisFate::Consistent
                        && analysis.fate(&affirmed, t) != HypothesisFate::Consistent
                        && analysis.score_margin(&negated, &affirmed, t)
                            >= analysis.min_score_margin
                    {
                        candidates.push((x.clone(), container.id.clone()));
                    }
                }
            }
            let (x, container) = candidates.choose(rng)?.clone();
            let (affirmed, negated) = belief_pair(&x, &container);
            Some(QuestionDraft {
                qtype,
                timestep: t,
                condition: Some(QuestionCondition::GivenGoal(Goal { target: x })),
                consistent_option: negated,
                eliminated_option: affirmed,
            })
        }
        QType::G21 | QType::G24 => {
            // Walking toward an unopened container. 2.1's likely goal is an
            // unseen object really inside it; 2.4's is an unseen object
            // stored further along the search path. The unlikely goal is an
            // object the person already saw and ignored.
            let Action::WalkTowards(WalkTarget::Entity(container)) = action else {
                return None;
            };
            analysis.layout.container(container)?;
            if !analysis.never_opened(t, container) {
                return None;
            }
            let mut likely = Vec::new();
            for x in &analysis.classes {
                if !analysis.unseen_at(x, t) {
                    continue;
                }
                let inside = has_instance_in(analysis, t, x, container);
                if (qtype == QType::G21) != inside {
                    continue;
                }
                let target = Location::InContainer(container.clone());
                if !analysis.support_at(t, x).contains(&target) {
                    continue;
                }
                if analysis.fate(&goal_only(x), t) == HypothesisFate::Consistent {
                    likely.push(x.clone());
                }
            }
            let mut unlikely = Vec::new();
            for x in &analysis.classes {
                if analysis.seen_by(x, t)
                    && analysis.fate(&goal_only(x), t) != HypothesisFate::Consistent
                {
                    unlikely.push(x.clone());
                }
            }
            let mut pairs = Vec::new();
            for a in &likely {
                for b in &unlikely {
                    if a != b
                        && analysis.score_margin(&goal_only(a), &goal_only(b), t)
                            >= analysis.min_score_margin
                    {
                        pairs.push((a.clone(), b.clone()));
                    }
                }
            }
            let (a, b) = pairs.choose(rng)?.clone();
            Some(QuestionDraft {
                qtype,
                timestep: t,
                condition: None,
                consistent_option: goal_only(&a),
                eliminated_option: goal_only(&b),
            })
        }
        QType::G22 => {
            // Walking toward a container that really holds A, conditioned on
            // the person believing there is no A inside: the goal must be
            // something else they suspect could be there.
            let Action::WalkTowards(WalkTarget::Entity(container)) = action else {
                return None;
            };
            analysis.layout.container(container)?;
            if !analysis.never_opened(t, container) {
                return None;
            }
            let target = Location::InContainer(container.clone());
            let mut pairs = Vec::new();
            for a in &analysis.classes {
                if !analysis.unseen_at(a, t) || !has_instance_in(analysis, t, a, container) {
                    continue;
                }
                if !analysis.support_at(t, a).contains(&target) {
                    continue;
                }
                let stmt = statement(a, container, Polarity::Negated);
                let conditioned_a = Hypothesis {
                    goal: Goal { target: a.clone() },
                    belief: Some(stmt.clone()),
                };
                if analysis.fate(&conditioned_a, t) == HypothesisFate::Consistent {
                    continue;
                }
                for b in &analysis.classes {
                    if b == a || !analysis.unseen_at(b, t) {
                        continue;
                    }
                    if !analysis.support_at(t, b).contains(&target) {
                        continue;
                    }
                    let conditioned_b = Hypothesis {
                        goal: Goal { target: b.clone() },
                        belief: Some(stmt.clone()),
                    };
                    if analysis.fate(&conditioned_b, t) == HypothesisFate::Consistent
                        && analysis.score_margin(&conditioned_b, &conditioned_a, t)
                            >= analysis.min_score_margin
                    {
                        pairs.push((a.clone(), b.clone()));
                    }
                }
            }
            let (a, b) = pairs.choose(rng)?.clone();
            Some(QuestionDraft {
                qtype,
                timestep: t,
                condition: Some(QuestionCondition::GivenBelief(statement(
                    &a,
                    container,
                    Polarity::Negated,
                ))),
                consistent_option: goal_only(&b),
                eliminated_option: goal_only(&a),
            })
        }
        QType::G23 => {
            // Opened and closed without taking anything: whatever was inside
            // is not the goal; something still unseen is.
            let Action::Close(container) = action else {
                return None;
            };
            if t < 2 || !matches!(&analysis.episode.actions[t - 2], Action::Open(c) if c == container)
            {
                return None;
            }
            let contents = analysis.classes_in_container(t, container);
            if contents.is_empty() {
                return None;
            }
            let mut ignored = Vec::new();
            for a in &contents {
                if analysis.fate(&goal_only(a), t) != HypothesisFate::Consistent {
                    ignored.push(a.clone());
                }
            }
            let mut unseen = Vec::new();
            for b in &analysis.classes {
                if analysis.unseen_at(b, t)
                    && analysis.fate(&goal_only(b), t) == HypothesisFate::Consistent
                {
                    unseen.push(b.clone());
                }
            }
            let mut pairs = Vec::new();
            for a in &ignored {
                for b in &unseen {
                    if a != b
                        && analysis.score_margin(&goal_only(b), &goal_only(a), t)
                            >= analysis.min_score_margin
                    {
                        pairs.push((a.clone(), b.clone()));
                    }
                }
            }
            let (a, b) = pairs.choose(rng)?.clone();
            Some(QuestionDraft {
                qtype,
                timestep: t,
                condition: None,
                consistent_option: goal_only(&b),
                eliminated_option: goal_only(&a),
            })
        }
    }
}

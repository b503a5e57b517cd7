use std::collections::{BTreeMap, BTreeSet};

use tom_core::domain::{
    Action, BeliefStatement, Episode, Goal, Hypothesis, Location, ObjectClass, Polarity, State,
};
use tom_core::infer::conditioned_support;
use tom_core::planner::{ActionDistribution, PolicyEngine, StateAbstraction, StepEvidence};
use tom_core::world::WorldLayout;

use crate::{GenConfig, GenError};

/// How the ideal observer disposed of a hypothesis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum HypothesisFate {
    Consistent,
    /// The statement contradicts what the agent has plainly seen.
    ObservationInconsistent,
    /// Simulated behavior under the hypothesis makes the actual action at
    /// this step implausible.
    ActionInconsistent { step: usize },
}

/// The observer's partition of the hypothesis space at one step.
#[derive(Clone, Debug, Default)]
pub struct IdealObserverState {
    pub consistent: BTreeSet<Hypothesis>,
    pub eliminated: BTreeSet<Hypothesis>,
    fates: BTreeMap<Hypothesis, HypothesisFate>,
}

impl IdealObserverState {
    pub fn fate(&self, hypothesis: &Hypothesis) -> Option<HypothesisFate> {
        self.fates.get(hypothesis).copied()
    }
}

/// Per-episode caches for hypothesis filtering: the agent's annotated belief
/// trajectory, per-step state abstractions, and the action distribution
/// under every candidate goal at every step.
pub struct EpisodeAnalysis<'a> {
    pub layout: &'a WorldLayout,
    pub episode: &'a Episode,
    pub engine: PolicyEngine,
    pub threshold: f64,
    pub min_score_margin: f64,
    pub classes: Vec<ObjectClass>,
    abstractions: Vec<StateAbstraction>,
    distributions: BTreeMap<ObjectClass, Vec<ActionDistribution>>,
    step_ok: BTreeMap<ObjectClass, Vec<bool>>,
    /// First 1-based action index at whose pre-action state the class was in
    /// plain view.
    sighted_by: BTreeMap<ObjectClass, usize>,
}

impl<'a> EpisodeAnalysis<'a> {
    pub fn new(
        layout: &'a WorldLayout,
        episode: &'a Episode,
        engine: PolicyEngine,
        config: &GenConfig,
    ) -> Result<Self, GenError> {
        let annotations = episode
            .annotations
            .as_ref()
            .expect("generated episodes carry annotations");
        let classes: Vec<ObjectClass> = annotations.belief_trajectory[0]
            .classes
            .keys()
            .cloned()
            .collect();
        let mut abstractions = Vec::with_capacity(episode.len());
        let mut sighted_by = BTreeMap::new();
        for t in 1..=episode.len() {
            let state = episode.state_before(t);
            abstractions.push(StateAbstraction::from_state(state));
            for seen in StepEvidence::from_state(state).scanned.values() {
                for class in seen {
                    sighted_by.entry(class.clone()).or_insert(t);
                }
            }
        }
        let mut distributions = BTreeMap::new();
        let mut step_ok = BTreeMap::new();
        for class in &classes {
            let mut dists = Vec::with_capacity(episode.len());
            let mut oks = Vec::with_capacity(episode.len());
            for t in 1..=episode.len() {
                let support = annotations.belief_trajectory[t].support(class);
                let dist =
                    engine.action_distribution(&abstractions[t - 1], &support, None, class)?;
                let ok = dist
                    .probability(&episode.actions[t - 1])
                    .map(|p| p >= config.consistency_threshold * dist.max_probability())
                    .unwrap_or(false);
                dists.push(dist);
                oks.push(ok);
            }
            distributions.insert(class.clone(), dists);
            step_ok.insert(class.clone(), oks);
        }
        Ok(Self {
            layout,
            episode,
            engine,
            threshold: config.consistency_threshold,
            min_score_margin: config.min_score_margin,
            classes,
            abstractions,
            distributions,
            step_ok,
            sighted_by,
        })
    }

    pub fn state_before(&self, t: usize) -> &State {
        self.episode.state_before(t)
    }

    fn trajectory(&self) -> &[tom_core::domain::Belief] {
        &self
            .episode
            .annotations
            .as_ref()
            .expect("annotated")
            .belief_trajectory
    }

    /// Support of the agent's estimated belief about `class` when choosing
    /// action `t`.
    pub fn support_at(&self, t: usize, class: &ObjectClass) -> Vec<Location> {
        self.trajectory()[t].support(class)
    }

    /// True when the class had not been in the agent's view before choosing
    /// action `t`.
    pub fn unseen_at(&self, class: &ObjectClass, t: usize) -> bool {
        self.sighted_by.get(class).map(|s| *s > t).unwrap_or(true)
    }

    pub fn seen_by(&self, class: &ObjectClass, t: usize) -> bool {
        !self.unseen_at(class, t)
    }

    /// Plain per-step plausibility of the actual action under a goal.
    pub fn step_ok(&self, goal: &ObjectClass, t: usize) -> bool {
        self.step_ok
            .get(goal)
            .and_then(|oks| oks.get(t - 1))
            .copied()
            .unwrap_or(false)
    }

    /// Distribution under a goal at a step, from the cache.
    pub fn distribution(&self, goal: &ObjectClass, t: usize) -> Option<&ActionDistribution> {
        self.distributions.get(goal).and_then(|d| d.get(t - 1))
    }

    /// Final-step plausibility under a hypothesis-conditioned belief.
    fn conditioned_ok(&self, goal: &ObjectClass, t: usize, stmt: &BeliefStatement) -> bool {
        let support = self.support_at(t, goal);
        let conditioned = conditioned_support(&support, stmt);
        if conditioned == support {
            return self.step_ok(goal, t);
        }
        let Ok(dist) =
            self.engine
                .action_distribution(&self.abstractions[t - 1], &conditioned, None, goal)
        else {
            return false;
        };
        dist.probability(&self.episode.actions[t - 1])
            .map(|p| p >= self.threshold * dist.max_probability())
            .unwrap_or(false)
    }

    /// Whether a statement is compatible with what the agent has seen: an
    /// affirmed claim needs surviving mass on the location, a negated claim
    /// fails only when the agent knows the object is exactly there.
    pub fn observation_ok(&self, stmt: &BeliefStatement, t: usize) -> bool {
        let belief = &self.trajectory()[t];
        let target = Location::InContainer(stmt.container.clone());
        let support = belief.support(&stmt.object);
        match stmt.polarity {
            Polarity::Affirmed => support.contains(&target),
            Polarity::Negated => support != vec![target],
        }
    }

    /// Full fate of a hypothesis over the prefix of length `t`.
    pub fn fate(&self, hypothesis: &Hypothesis, t: usize) -> HypothesisFate {
        if let Some(stmt) = &hypothesis.belief {
            if !self.observation_ok(stmt, t) {
                return HypothesisFate::ObservationInconsistent;
            }
        }
        let goal = &hypothesis.goal.target;
        for step in 1..t {
            if !self.step_ok(goal, step) {
                return HypothesisFate::ActionInconsistent { step };
            }
        }
        if t >= 1 {
            let final_ok = match &hypothesis.belief {
                Some(stmt) if &stmt.object == goal => self.conditioned_ok(goal, t, stmt),
                _ => self.step_ok(goal, t),
            };
            if !final_ok {
                return HypothesisFate::ActionInconsistent { step: t };
            }
        }
        HypothesisFate::Consistent
    }

    /// Enumerates every (goal, statement) hypothesis and partitions it.
    pub fn ideal_observer(&self, t: usize) -> IdealObserverState {
        let mut out = IdealObserverState::default();
        let containers: Vec<_> = self.layout.containers.iter().map(|c| c.id.clone()).collect();
        let mut hypotheses = Vec::new();
        for goal in &self.classes {
            hypotheses.push(Hypothesis {
                goal: Goal { target: goal.clone() },
                belief: None,
            });
            for object in &self.classes {
                for container in &containers {
                    for polarity in [Polarity::Affirmed, Polarity::Negated] {
                        hypotheses.push(Hypothesis {
                            goal: Goal { target: goal.clone() },
                            belief: Some(BeliefStatement {
                                object: object.clone(),
                                container: container.clone(),
                                polarity,
                            }),
                        });
                    }
                }
            }
        }
        for hypothesis in hypotheses {
            let fate = if t == 0 {
                HypothesisFate::Consistent
            } else {
                self.fate(&hypothesis, t)
            };
            if fate == HypothesisFate::Consistent {
                out.consistent.insert(hypothesis.clone());
            } else {
                out.eliminated.insert(hypothesis.clone());
            }
            out.fates.insert(hypothesis, fate);
        }
        out
    }

    /// Full log-likelihood of a hypothesis over the prefix of length `t`,
    /// mirroring the solver's scoring: past action terms under the estimated
    /// beliefs, the final term under the conditioned belief, plus the
    /// statement probability.
    pub fn full_log_score(&self, hypothesis: &Hypothesis, t: usize) -> f64 {
        let goal = &hypothesis.goal.target;
        let mut total = 0.0;
        for step in 1..=t {
            let likelihood = if step == t {
                match &hypothesis.belief {
                    Some(stmt) if &stmt.object == goal => {
                        let support = self.support_at(t, goal);
                        let conditioned = conditioned_support(&support, stmt);
                        self.engine
                            .action_distribution(
                                &self.abstractions[t - 1],
                                &conditioned,
                                None,
                                goal,
                            )
                            .ok()
                            .and_then(|d| d.probability(&self.episode.actions[t - 1]))
                    }
                    _ => self
                        .distribution(goal, t)
                        .and_then(|d| d.probability(&self.episode.actions[t - 1])),
                }
            } else {
                self.distribution(goal, step)
                    .and_then(|d| d.probability(&self.episode.actions[step - 1]))
            };
            total += likelihood
                .unwrap_or(tom_core::planner::SMOOTHING_FLOOR)
                .ln();
        }
        if let Some(stmt) = &hypothesis.belief {
            let p = tom_core::infer::belief_statement_probability(stmt, &self.trajectory()[t]);
            total += p.clamp(tom_core::planner::SMOOTHING_FLOOR, 1.0).ln();
        }
        total
    }

    /// Score separation between two hypotheses, used to reject questions
    /// whose evidence is ambivalent.
    pub fn score_margin(&self, favored: &Hypothesis, other: &Hypothesis, t: usize) -> f64 {
        self.full_log_score(favored, t) - self.full_log_score(other, t)
    }

    /// Classes with at least one instance inside the container at the state
    /// action `t` is chosen in.
    pub fn classes_in_container(
        &self,
        t: usize,
        container: &tom_core::domain::EntityId,
    ) -> BTreeSet<ObjectClass> {
        let location = Location::InContainer(container.clone());
        self.state_before(t)
            .instances_at(&location)
            .map(|x| x.class.clone())
            .collect()
    }

    /// True when no action in the prefix opened the container.
    pub fn never_opened(&self, t: usize, container: &tom_core::domain::EntityId) -> bool {
        !self.episode.actions[..t]
            .iter()
            .any(|a| matches!(a, Action::Open(c) if c == container))
    }
}

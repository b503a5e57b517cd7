use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use tom_core::domain::{PlannerConfig, QType};

/// Generation parameters: per-type question counts, world-size ranges,
/// episode limits, the hypothesis-consistency threshold, and the planner
/// constants the synthetic agents run on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    /// Exact question counts per type; generation fails loudly on shortfall.
    pub questions_per_type: BTreeMap<QType, usize>,
    /// Number of rooms, drawn from the four archetypes in order.
    pub rooms: usize,
    pub containers_per_room: (usize, usize),
    pub surfaces_per_room: (usize, usize),
    pub object_classes: (usize, usize),
    pub instances_per_class: (usize, usize),
    pub max_episode_len: usize,
    /// Rollout budget before generation gives up on a type.
    pub max_episodes: usize,
    /// A hypothesis survives a step only while the actual action keeps at
    /// least this share of the max-action likelihood.
    pub consistency_threshold: f64,
    /// Minimum log-likelihood separation between a question's two options;
    /// ambivalent pairings are rejected.
    pub min_score_margin: f64,
    pub planner: PlannerConfig,
}

impl Default for GenConfig {
    fn default() -> Self {
        // Belief types outnumber goal types 4:3 per type by default.
        //
        // The synthetic agents plan with a sharper temperature and a larger
        // reward-to-cost ratio than the library's bare planner defaults:
        // finding the goal must outweigh the walking it takes (otherwise a
        // whole-apartment search has almost no value and the softmax goes
        // mushy), and implausible actions must actually fall below the
        // consistency threshold for hypothesis elimination to bite. These
        // values ship in the manifest and solvers read them back for
        // generator-matched inference.
        let mut questions_per_type = BTreeMap::new();
        for qtype in QType::ALL {
            questions_per_type.insert(qtype, if qtype.is_belief() { 20 } else { 15 });
        }
        Self {
            seed: 7,
            questions_per_type,
            rooms: 4,
            containers_per_room: (1, 3),
            surfaces_per_room: (1, 2),
            object_classes: (6, 9),
            instances_per_class: (1, 2),
            max_episode_len: 25,
            max_episodes: 600,
            consistency_threshold: 0.05,
            min_score_margin: 1.5,
            planner: PlannerConfig {
                beta: 50.0,
                step_cost: -0.02,
                goal_reward: 2.0,
                ..PlannerConfig::default()
            },
        }
    }
}

impl GenConfig {
    /// The fixed-seed desk benchmark: 20 questions of each type.
    pub fn desk(seed: u64) -> Self {
        let mut cfg = GenConfig::default();
        cfg.seed = seed;
        for count in cfg.questions_per_type.values_mut() {
            *count = 20;
        }
        cfg
    }

    pub fn total_questions(&self) -> usize {
        self.questions_per_type.values().sum()
    }

    pub fn validate(&self) -> Result<(), String> {
        self.planner.validate()?;
        if self.rooms == 0 || self.rooms > 4 {
            return Err(format!("rooms must be 1..=4, got {}", self.rooms));
        }
        for (name, (lo, hi)) in [
            ("containers_per_room", self.containers_per_room),
            ("surfaces_per_room", self.surfaces_per_room),
            ("object_classes", self.object_classes),
            ("instances_per_class", self.instances_per_class),
        ] {
            if lo > hi || hi == 0 {
                return Err(format!("{name} range ({lo}, {hi}) is empty"));
            }
        }
        if self.max_episode_len == 0 {
            return Err("max_episode_len must be positive".into());
        }
        if !(0.0..1.0).contains(&self.consistency_threshold) {
            return Err(format!(
                "consistency_threshold must be in [0,1), got {}",
                self.consistency_threshold
            ));
        }
        if self.min_score_margin < 0.0 {
            return Err("min_score_margin must be non-negative".into());
        }
        Ok(())
    }
}

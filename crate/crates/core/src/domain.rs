//! Shared vocabulary of world, mental-state, and benchmark types.
//!
//! Everything here is an immutable value type: cheap to clone, safe to send
//! across threads, and serializable with a stable field layout so that
//! fixed-seed pipelines produce byte-identical artifacts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Version stamped on every canonical JSON document.
pub const SCHEMA_VERSION: u32 = 1;

/// Tolerance for belief-distribution normalization checks.
pub const BELIEF_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("unknown object class: {0}")]
    UnknownObjectClass(String),
    #[error("malformed object instance id: {0}")]
    MalformedInstance(String),
    #[error("schema version mismatch: expected {expected}, got {got}")]
    SchemaVersion { expected: u32, got: u32 },
    #[error("duplicate placement for {0}")]
    DuplicatePlacement(ObjectInstance),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(
            Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

id_newtype!(
    /// A room identifier, e.g. `kitchen`.
    RoomId
);
id_newtype!(
    /// A container or surface identifier, e.g. `fridge` or `kitchencabinet_2`.
    EntityId
);

/// An object class drawn from the registered catalog, e.g. `apple`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectClass(pub String);

impl ObjectClass {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ObjectClass {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// One concrete object: a class plus an instance index, rendered `apple_2`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectInstance {
    pub class: ObjectClass,
    pub index: u32,
}

impl ObjectInstance {
    pub fn new(class: impl Into<ObjectClass>, index: u32) -> Self {
        Self { class: class.into(), index }
    }
}

impl fmt::Display for ObjectInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.class, self.index)
    }
}

impl FromStr for ObjectInstance {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (class, idx) = s
            .rsplit_once('_')
            .ok_or_else(|| DomainError::MalformedInstance(s.to_owned()))?;
        let index = idx
            .parse::<u32>()
            .map_err(|_| DomainError::MalformedInstance(s.to_owned()))?;
        if class.is_empty() {
            return Err(DomainError::MalformedInstance(s.to_owned()));
        }
        Ok(Self { class: ObjectClass::new(class), index })
    }
}

impl Serialize for ObjectInstance {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ObjectInstance {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// Where an object can be.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    InContainer(EntityId),
    OnSurface(EntityId),
    InRoom(RoomId),
    HeldByAgent,
}

impl Location {
    pub fn entity(&self) -> Option<&EntityId> {
        match self {
            Location::InContainer(e) | Location::OnSurface(e) => Some(e),
            _ => None,
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::InContainer(e) => write!(f, "in({e})"),
            Location::OnSurface(e) => write!(f, "on({e})"),
            Location::InRoom(r) => write!(f, "room({r})"),
            Location::HeldByAgent => f.write_str("held"),
        }
    }
}

impl FromStr for Location {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = |s: &str, head: &str| -> Option<String> {
            s.strip_prefix(head)?.strip_suffix(')').map(str::to_owned)
        };
        if s == "held" {
            Ok(Location::HeldByAgent)
        } else if let Some(e) = inner(s, "in(") {
            Ok(Location::InContainer(EntityId(e)))
        } else if let Some(e) = inner(s, "on(") {
            Ok(Location::OnSurface(EntityId(e)))
        } else if let Some(r) = inner(s, "room(") {
            Ok(Location::InRoom(RoomId(r)))
        } else {
            Err(DomainError::MalformedInstance(s.to_owned()))
        }
    }
}

/// One atomic spatial or status fact.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    In(ObjectInstance, EntityId),
    On(ObjectInstance, EntityId),
    AgentInRoom(RoomId),
    CloseTo(EntityId),
    IsOpen(EntityId),
    IsClosed(EntityId),
    Holding(ObjectInstance),
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::In(x, c) => write!(f, "In({x}, {c})"),
            Predicate::On(x, s) => write!(f, "On({x}, {s})"),
            Predicate::AgentInRoom(r) => write!(f, "AgentInRoom({r})"),
            Predicate::CloseTo(e) => write!(f, "CloseTo({e})"),
            Predicate::IsOpen(c) => write!(f, "IsOpen({c})"),
            Predicate::IsClosed(c) => write!(f, "IsClosed({c})"),
            Predicate::Holding(x) => write!(f, "Holding({x})"),
        }
    }
}

impl FromStr for Predicate {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || DomainError::MalformedInstance(s.to_owned());
        let (head, rest) = s.split_once('(').ok_or_else(malformed)?;
        let args = rest.strip_suffix(')').ok_or_else(malformed)?;
        let parts: Vec<&str> = args.split(", ").collect();
        let one = || -> Result<&str, DomainError> {
            (parts.len() == 1).then(|| parts[0]).ok_or_else(malformed)
        };
        let two = || -> Result<(&str, &str), DomainError> {
            (parts.len() == 2)
                .then(|| (parts[0], parts[1]))
                .ok_or_else(malformed)
        };
        Ok(match head {
            "In" => {
                let (x, c) = two()?;
                Predicate::In(x.parse()?, EntityId::new(c))
            }
            "On" => {
                let (x, sfc) = two()?;
                Predicate::On(x.parse()?, EntityId::new(sfc))
            }
            "AgentInRoom" => Predicate::AgentInRoom(RoomId::new(one()?)),
            "CloseTo" => Predicate::CloseTo(EntityId::new(one()?)),
            "IsOpen" => Predicate::IsOpen(EntityId::new(one()?)),
            "IsClosed" => Predicate::IsClosed(EntityId::new(one()?)),
            "Holding" => Predicate::Holding(one()?.parse()?),
            _ => return Err(malformed()),
        })
    }
}

/// Target of a walk: a room or an in-room entity.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkTarget {
    Room(RoomId),
    Entity(EntityId),
}

/// A symbolic action command.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    WalkTowards(WalkTarget),
    Open(EntityId),
    Close(EntityId),
    Grab(ObjectInstance),
    /// Reaching toward a container without having opened it yet. Appears
    /// only as the final action of an episode prefix; scored like `Open`.
    AboutToOpen(EntityId),
    Idle,
}

impl Action {
    pub fn walk_room(r: impl Into<RoomId>) -> Self {
        Action::WalkTowards(WalkTarget::Room(r.into()))
    }
    pub fn walk_entity(e: impl Into<EntityId>) -> Self {
        Action::WalkTowards(WalkTarget::Entity(e.into()))
    }

    /// Canonical ordering key: walks, then open, close, grab, about-to-open,
    /// idle; ties broken by target id. Used for deterministic tie-breaking.
    pub fn sort_key(&self) -> (u8, String) {
        match self {
            Action::WalkTowards(WalkTarget::Room(r)) => (0, r.0.clone()),
            Action::WalkTowards(WalkTarget::Entity(e)) => (0, e.0.clone()),
            Action::Open(c) => (1, c.0.clone()),
            Action::Close(c) => (2, c.0.clone()),
            Action::Grab(x) => (3, x.to_string()),
            Action::AboutToOpen(c) => (4, c.0.clone()),
            Action::Idle => (5, String::new()),
        }
    }

    /// The paper-style surface form, e.g. `walktowards kitchen`.
    pub fn surface_form(&self) -> String {
        match self {
            Action::WalkTowards(WalkTarget::Room(r)) => format!("walktowards {r}"),
            Action::WalkTowards(WalkTarget::Entity(e)) => format!("walktowards {e}"),
            Action::Open(c) => format!("open {c}"),
            Action::Close(c) => format!("close {c}"),
            Action::Grab(x) => format!("grab {x}"),
            Action::AboutToOpen(c) => format!("about to open {c}"),
            Action::Idle => "idle".to_owned(),
        }
    }
}

/// A container plus its home room and open flag.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerState {
    pub id: EntityId,
    pub room: RoomId,
    pub open: bool,
}

/// A surface plus its home room.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceState {
    pub id: EntityId,
    pub room: RoomId,
}

/// Complete ground-truth world snapshot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    pub rooms: Vec<RoomId>,
    pub containers: Vec<ContainerState>,
    pub surfaces: Vec<SurfaceState>,
    pub placements: BTreeMap<ObjectInstance, Location>,
    pub agent_room: RoomId,
    pub agent_near: Option<EntityId>,
}

impl State {
    pub fn container(&self, id: &EntityId) -> Option<&ContainerState> {
        self.containers.iter().find(|c| &c.id == id)
    }

    pub fn surface(&self, id: &EntityId) -> Option<&SurfaceState> {
        self.surfaces.iter().find(|s| &s.id == id)
    }

    pub fn is_container(&self, id: &EntityId) -> bool {
        self.container(id).is_some()
    }

    /// Room an entity (container or surface) lives in.
    pub fn entity_room(&self, id: &EntityId) -> Option<&RoomId> {
        self.container(id)
            .map(|c| &c.room)
            .or_else(|| self.surface(id).map(|s| &s.room))
    }

    /// Instances currently placed at `loc`.
    pub fn instances_at<'a>(
        &'a self,
        loc: &'a Location,
    ) -> impl Iterator<Item = &'a ObjectInstance> + 'a {
        self.placements
            .iter()
            .filter(move |(_, l)| *l == loc)
            .map(|(x, _)| x)
    }

    /// The instance currently held by the agent, if any.
    pub fn held(&self) -> Option<&ObjectInstance> {
        self.placements
            .iter()
            .find(|(_, l)| **l == Location::HeldByAgent)
            .map(|(x, _)| x)
    }
}

/// A search goal: get hold of one instance of the target class.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Goal {
    pub target: ObjectClass,
}

impl Goal {
    pub fn new(target: impl Into<ObjectClass>) -> Self {
        Self { target: target.into() }
    }
}

/// Per-object-class probability distribution over candidate locations.
///
/// Invariants: every distribution sums to 1 within [`BELIEF_TOLERANCE`] and
/// has no negative entries. Updates preserve mass ratios of survivors, so a
/// distribution that starts uniform stays uniform over its support.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Belief {
    pub classes: BTreeMap<ObjectClass, BTreeMap<Location, f64>>,
}

impl Belief {
    pub fn support(&self, class: &ObjectClass) -> Vec<Location> {
        self.classes
            .get(class)
            .map(|d| {
                d.iter()
                    .filter(|(_, p)| **p > 0.0)
                    .map(|(l, _)| l.clone())
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Probability mass a class's distribution assigns to one location.
    pub fn mass(&self, class: &ObjectClass, loc: &Location) -> f64 {
        self.classes
            .get(class)
            .and_then(|d| d.get(loc))
            .copied()
            .unwrap_or(0.0)
    }

    /// Checks normalization and non-negativity for every class.
    pub fn is_normalized(&self) -> bool {
        self.classes.values().all(|d| {
            let sum: f64 = d.values().sum();
            (sum - 1.0).abs() <= BELIEF_TOLERANCE && d.values().all(|p| *p >= 0.0)
        })
    }
}

impl Serialize for Belief {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut outer = serializer.serialize_map(Some(self.classes.len()))?;
        for (class, dist) in &self.classes {
            let keyed: BTreeMap<String, f64> =
                dist.iter().map(|(l, p)| (l.to_string(), *p)).collect();
            outer.serialize_entry(class, &keyed)?;
        }
        outer.end()
    }
}

impl<'de> Deserialize<'de> for Belief {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw: BTreeMap<ObjectClass, BTreeMap<String, f64>> =
            BTreeMap::deserialize(deserializer)?;
        let mut classes = BTreeMap::new();
        for (class, dist) in raw {
            let mut parsed = BTreeMap::new();
            for (key, p) in dist {
                let loc: Location = key.parse().map_err(D::Error::custom)?;
                parsed.insert(loc, p);
            }
            classes.insert(class, parsed);
        }
        Ok(Belief { classes })
    }
}

/// Affirmed or negated containment claim about an agent's belief.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Affirmed,
    Negated,
}

/// "Thinks there is / isn't a `{object}` inside `{container}`."
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BeliefStatement {
    pub object: ObjectClass,
    pub container: EntityId,
    pub polarity: Polarity,
}

/// A (goal, belief-statement) pair scored by inverse planning.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Hypothesis {
    pub goal: Goal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belief: Option<BeliefStatement>,
}

/// Ground-truth annotations attached to generated episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeAnnotations {
    pub true_goal: Goal,
    /// `belief_trajectory[0]` is the pre-observation uniform prior;
    /// `belief_trajectory[t]` is the belief held when choosing action `t`
    /// (1-based), i.e. after observing the state the action is taken in.
    pub belief_trajectory: Vec<Belief>,
}

/// One simulated search: initial state, actions, and post-action states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub initial_state: State,
    pub actions: Vec<Action>,
    /// `states[t]` is the state after `actions[t]`.
    pub states: Vec<State>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<EpisodeAnnotations>,
}

impl Episode {
    /// State the agent stands in when choosing 1-based action `t`.
    pub fn state_before(&self, t: usize) -> &State {
        if t <= 1 {
            &self.initial_state
        } else {
            &self.states[t - 2]
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// The seven benchmark question types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QType {
    #[serde(rename = "1.1")]
    B11,
    #[serde(rename = "1.2")]
    B12,
    #[serde(rename = "1.3")]
    B13,
    #[serde(rename = "2.1")]
    G21,
    #[serde(rename = "2.2")]
    G22,
    #[serde(rename = "2.3")]
    G23,
    #[serde(rename = "2.4")]
    G24,
}

impl QType {
    pub const ALL: [QType; 7] = [
        QType::B11,
        QType::B12,
        QType::B13,
        QType::G21,
        QType::G22,
        QType::G23,
        QType::G24,
    ];

    pub fn is_belief(self) -> bool {
        matches!(self, QType::B11 | QType::B12 | QType::B13)
    }

    pub fn label(self) -> &'static str {
        match self {
            QType::B11 => "1.1",
            QType::B12 => "1.2",
            QType::B13 => "1.3",
            QType::G21 => "2.1",
            QType::G22 => "2.2",
            QType::G23 => "2.3",
            QType::G24 => "2.4",
        }
    }
}

impl fmt::Display for QType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Hidden answer label of a two-option question.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerLabel {
    A,
    B,
}

impl AnswerLabel {
    pub fn flipped(self) -> Self {
        match self {
            AnswerLabel::A => AnswerLabel::B,
            AnswerLabel::B => AnswerLabel::A,
        }
    }
}

/// The conditioning clause a question carries, if any.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionCondition {
    GivenGoal(Goal),
    GivenBelief(BeliefStatement),
}

/// A typed two-option query bound to an episode timestep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub qtype: QType,
    /// Number of actions in the prefix the question is asked after.
    pub timestep: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<QuestionCondition>,
    pub option_a: Hypothesis,
    pub option_b: Hypothesis,
    pub answer: AnswerLabel,
}

/// Planner constants: discount, rationality temperature, search depth,
/// per-step cost, and grab reward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub gamma: f64,
    pub beta: f64,
    pub horizon: u32,
    pub step_cost: f64,
    pub goal_reward: f64,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            beta: 3.0,
            horizon: 12,
            step_cost: -0.05,
            goal_reward: 1.0,
            seed: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(format!("gamma must be in (0,1], got {}", self.gamma));
        }
        if self.horizon < 1 {
            return Err("horizon must be >= 1".to_owned());
        }
        if self.beta < 0.0 || !self.beta.is_finite() {
            return Err(format!("beta must be finite and >= 0, got {}", self.beta));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Object-class registry
// ---------------------------------------------------------------------------

/// Static description of a registered object class.
pub struct ClassInfo {
    pub name: &'static str,
    /// Spaced display form used in rendered prose ("water glass").
    pub display: &'static str,
    pub display_plural: &'static str,
    /// Container kinds this class may be stored in. Surfaces accept all
    /// classes.
    pub container_kinds: &'static [&'static str],
}

pub const CONTAINER_KINDS: &[&str] = &[
    "fridge",
    "kitchencabinet",
    "cabinet",
    "microwave",
    "oven",
    "dishwasher",
];

pub const SURFACE_KINDS: &[&str] = &["kitchentable", "coffeetable", "desk", "sofa", "bed"];

pub const ROOM_KINDS: &[&str] = &["kitchen", "livingroom", "bedroom", "bathroom"];

/// The registered object catalog, mirroring typical apartment inventories.
pub const CLASS_REGISTRY: &[ClassInfo] = &[
    ClassInfo {
        name: "apple",
        display: "apple",
        display_plural: "apples",
        container_kinds: &["fridge", "kitchencabinet", "cabinet"],
    },
    ClassInfo {
        name: "cupcake",
        display: "cupcake",
        display_plural: "cupcakes",
        container_kinds: &["fridge", "kitchencabinet", "cabinet", "microwave", "oven"],
    },
    ClassInfo {
        name: "salmon",
        display: "salmon",
        display_plural: "salmon",
        container_kinds: &["fridge", "microwave", "oven"],
    },
    ClassInfo {
        name: "wine",
        display: "bottle of wine",
        display_plural: "bottles of wine",
        container_kinds: &["fridge", "cabinet"],
    },
    ClassInfo {
        name: "plate",
        display: "plate",
        display_plural: "plates",
        container_kinds: &["fridge", "kitchencabinet", "cabinet", "oven", "dishwasher"],
    },
    ClassInfo {
        name: "dishbowl",
        display: "dish bowl",
        display_plural: "dish bowls",
        container_kinds: &["fridge", "kitchencabinet", "cabinet", "dishwasher"],
    },
    ClassInfo {
        name: "waterglass",
        display: "water glass",
        display_plural: "water glasses",
        container_kinds: &["kitchencabinet", "cabinet", "dishwasher", "microwave"],
    },
    ClassInfo {
        name: "wineglass",
        display: "wine glass",
        display_plural: "wine glasses",
        container_kinds: &["kitchencabinet", "cabinet", "dishwasher"],
    },
    ClassInfo {
        name: "condimentbottle",
        display: "condiment bottle",
        display_plural: "condiment bottles",
        container_kinds: &["fridge", "kitchencabinet", "cabinet", "microwave"],
    },
    ClassInfo {
        name: "chips",
        display: "bag of chips",
        display_plural: "bags of chips",
        container_kinds: &["kitchencabinet", "cabinet"],
    },
    ClassInfo {
        name: "book",
        display: "book",
        display_plural: "books",
        container_kinds: &["cabinet"],
    },
    ClassInfo {
        name: "remotecontrol",
        display: "remote control",
        display_plural: "remote controls",
        container_kinds: &["cabinet"],
    },
];

pub fn class_info(class: &ObjectClass) -> Option<&'static ClassInfo> {
    CLASS_REGISTRY.iter().find(|c| c.name == class.as_str())
}

/// Container kind of an entity id like `kitchencabinet_2` (strips the index).
pub fn entity_kind(id: &EntityId) -> &str {
    match id.as_str().rsplit_once('_') {
        Some((kind, idx)) if idx.chars().all(|c| c.is_ascii_digit()) => kind,
        _ => id.as_str(),
    }
}

pub fn class_fits_container(class: &ObjectClass, container: &EntityId) -> bool {
    class_info(class)
        .map(|info| info.container_kinds.contains(&entity_kind(container)))
        .unwrap_or(false)
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Result of [`validate_state`]: empty means every invariant holds.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every structural invariant of a state and reports violations with
/// the offending entity ids.
pub fn validate_state(state: &State) -> ValidationReport {
    let mut violations = Vec::new();
    if state.rooms.is_empty() {
        violations.push("no rooms".to_owned());
    }
    let rooms: BTreeSet<&RoomId> = state.rooms.iter().collect();
    let mut seen_entities: BTreeSet<&EntityId> = BTreeSet::new();
    for c in &state.containers {
        if !rooms.contains(&c.room) {
            violations.push(format!("container {} in unknown room {}", c.id, c.room));
        }
        if !seen_entities.insert(&c.id) {
            violations.push(format!("duplicate entity id {}", c.id));
        }
    }
    for s in &state.surfaces {
        if !rooms.contains(&s.room) {
            violations.push(format!("surface {} in unknown room {}", s.id, s.room));
        }
        if !seen_entities.insert(&s.id) {
            violations.push(format!("duplicate entity id {}", s.id));
        }
    }
    let mut held = 0usize;
    for (obj, loc) in &state.placements {
        match loc {
            Location::InContainer(c) => {
                if state.container(c).is_none() {
                    violations.push(format!("{obj} placed in unknown container {c}"));
                }
            }
            Location::OnSurface(s) => {
                if state.surface(s).is_none() {
                    violations.push(format!("{obj} placed on unknown surface {s}"));
                }
            }
            Location::InRoom(r) => {
                if !rooms.contains(r) {
                    violations.push(format!("{obj} placed in unknown room {r}"));
                }
            }
            Location::HeldByAgent => held += 1,
        }
    }
    if held > 1 {
        violations.push("agent holds more than one object".to_owned());
    }
    if !rooms.contains(&state.agent_room) {
        violations.push(format!("agent in unknown room {}", state.agent_room));
    }
    if let Some(near) = &state.agent_near {
        match state.entity_room(near) {
            None => violations.push(format!("agent near unknown entity {near}")),
            Some(room) if *room != state.agent_room => {
                violations.push(format!("agent near {near} outside agent room"))
            }
            _ => {}
        }
    }
    ValidationReport { violations }
}

/// Builds a placement map from raw containment predicates, rejecting
/// duplicates (an instance may appear in at most one In/On/Holding fact).
pub fn placements_from_predicates(
    predicates: &BTreeSet<Predicate>,
) -> Result<BTreeMap<ObjectInstance, Location>, DomainError> {
    let mut placements = BTreeMap::new();
    for p in predicates {
        let (obj, loc) = match p {
            Predicate::In(x, c) => (x, Location::InContainer(c.clone())),
            Predicate::On(x, s) => (x, Location::OnSurface(s.clone())),
            Predicate::Holding(x) => (x, Location::HeldByAgent),
            _ => continue,
        };
        if placements.insert(obj.clone(), loc).is_some() {
            return Err(DomainError::DuplicatePlacement(obj.clone()));
        }
    }
    Ok(placements)
}

// ---------------------------------------------------------------------------
// Versioned JSON envelope
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct VersionedRef<'a, T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    payload: &'a T,
}

#[derive(Deserialize)]
struct VersionedOwned<T> {
    schema_version: u32,
    #[serde(flatten)]
    payload: T,
}

/// Serializes a document with the canonical `schema_version` header.
pub fn to_canonical_json<T: Serialize>(payload: &T) -> Result<String, DomainError> {
    Ok(serde_json::to_string_pretty(&VersionedRef {
        schema_version: SCHEMA_VERSION,
        payload,
    })?)
}

/// Decodes a canonical document, enforcing the schema version.
pub fn from_canonical_json<T: for<'de> Deserialize<'de>>(json: &str) -> Result<T, DomainError> {
    let doc: VersionedOwned<T> = serde_json::from_str(json)?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(DomainError::SchemaVersion {
            expected: SCHEMA_VERSION,
            got: doc.schema_version,
        });
    }
    Ok(doc.payload)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k2_state() -> State {
        State {
            rooms: vec!["kitchen".into(), "livingroom".into()],
            containers: vec![
                ContainerState { id: "fridge".into(), room: "kitchen".into(), open: false },
                ContainerState { id: "cabinet".into(), room: "kitchen".into(), open: false },
            ],
            surfaces: vec![
                SurfaceState { id: "kitchentable".into(), room: "kitchen".into() },
                SurfaceState { id: "coffeetable".into(), room: "livingroom".into() },
            ],
            placements: BTreeMap::from([(
                ObjectInstance::new("apple", 1),
                Location::InContainer("fridge".into()),
            )]),
            agent_room: "livingroom".into(),
            agent_near: None,
        }
    }

    #[test]
    fn empty_world_reports_no_rooms() {
        let state = State {
            rooms: vec![],
            containers: vec![],
            surfaces: vec![],
            placements: BTreeMap::new(),
            agent_room: "kitchen".into(),
            agent_near: None,
        };
        let report = validate_state(&state);
        assert!(report.violations.iter().any(|v| v.contains("no rooms")));
    }

    #[test]
    fn k2_fixture_validates() {
        assert!(validate_state(&k2_state()).is_ok());
    }

    #[test]
    fn duplicate_placement_is_rejected() {
        let preds = BTreeSet::from([
            Predicate::In(ObjectInstance::new("apple", 1), "fridge".into()),
            Predicate::On(ObjectInstance::new("apple", 1), "kitchentable".into()),
        ]);
        let err = placements_from_predicates(&preds).unwrap_err();
        assert!(matches!(err, DomainError::DuplicatePlacement(_)));
    }

    #[test]
    fn agent_near_must_be_in_agent_room() {
        let mut state = k2_state();
        state.agent_near = Some("fridge".into());
        let report = validate_state(&state);
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("outside agent room")));
    }

    #[test]
    fn object_instance_round_trips_through_display() {
        let x = ObjectInstance::new("waterglass", 12);
        let parsed: ObjectInstance = x.to_string().parse().unwrap();
        assert_eq!(x, parsed);
    }

    #[test]
    fn location_string_form_round_trips() {
        for loc in [
            Location::InContainer("fridge".into()),
            Location::OnSurface("kitchentable".into()),
            Location::InRoom("kitchen".into()),
            Location::HeldByAgent,
        ] {
            let parsed: Location = loc.to_string().parse().unwrap();
            assert_eq!(loc, parsed);
        }
    }

    #[test]
    fn canonical_json_carries_schema_version() {
        let state = k2_state();
        let json = to_canonical_json(&state).unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["schema_version"], 1);
        let back: State = from_canonical_json(&json).unwrap();
        assert_eq!(state, back);
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let state = k2_state();
        let json = to_canonical_json(&state)
            .unwrap()
            .replace("\"schema_version\": 1", "\"schema_version\": 9");
        let err = from_canonical_json::<State>(&json).unwrap_err();
        assert!(matches!(err, DomainError::SchemaVersion { got: 9, .. }));
    }

    #[test]
    fn belief_json_round_trips() {
        let mut dist = BTreeMap::new();
        dist.insert(Location::InContainer("fridge".into()), 0.5);
        dist.insert(Location::OnSurface("kitchentable".into()), 0.5);
        let belief = Belief {
            classes: BTreeMap::from([(ObjectClass::new("apple"), dist)]),
        };
        assert!(belief.is_normalized());
        let json = to_canonical_json(&belief).unwrap();
        let back: Belief = from_canonical_json(&json).unwrap();
        assert_eq!(belief, back);
    }

    #[test]
    fn class_compatibility_follows_registry() {
        assert!(class_fits_container(&"salmon".into(), &"fridge".into()));
        assert!(!class_fits_container(&"salmon".into(), &"kitchencabinet_2".into()));
        assert!(class_fits_container(&"plate".into(), &"kitchencabinet_2".into()));
        assert!(!class_fits_container(&"piano".into(), &"fridge".into()));
    }
}

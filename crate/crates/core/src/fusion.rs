//! Alignment and merging of the video-channel predicate stream with
//! text-channel state/action descriptions into one unified episode
//! representation.
//!
//! The two channels are complementary by construction: text discloses the
//! full initial containment but nothing about proximity, while video carries
//! the agent's whereabouts and status changes but reveals container contents
//! only at the moment of opening. Fusing both yields complete knowledge;
//! either alone yields a partial state, which is why the observer tracks a
//! closed-world set alongside known placements.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    Action, EntityId, Location, ObjectClass, ObjectInstance, Predicate, RoomId, State, WalkTarget,
};
use crate::planner::StepEvidence;
use crate::world::WorldLayout;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("alignment mismatch at step {step}: text {text:?} vs video {video:?}")]
    AlignmentMismatch {
        step: usize,
        text: Option<Action>,
        video: Option<Action>,
    },
    #[error("bundle has no channel for condition {0:?}")]
    EmptyBundle(Condition),
    #[error("initial agent room is not known from any channel")]
    UnknownStartRoom,
    #[error("channel inconsistent with condition {condition:?}: {detail}")]
    ConditionMismatch { condition: Condition, detail: String },
}

/// The three evaluation conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Multimodal,
    TextOnly,
    VideoOnly,
}

impl Condition {
    pub const ALL: [Condition; 3] = [
        Condition::Multimodal,
        Condition::TextOnly,
        Condition::VideoOnly,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Condition::Multimodal => "multimodal",
            Condition::TextOnly => "text_only",
            Condition::VideoOnly => "video_only",
        }
    }
}

/// One step of the video channel, tagged with the detected action.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoStep {
    pub action: Action,
    pub predicates: BTreeSet<Predicate>,
}

/// The per-step video predicate stream, including the pre-action frame.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoStream {
    pub initial: BTreeSet<Predicate>,
    pub steps: Vec<VideoStep>,
}

/// Parsed text-channel initial state: containment facts plus the containers
/// stated to be empty (their absence of facts is knowledge, not ignorance).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextStateFacts {
    pub predicates: BTreeSet<Predicate>,
    pub explicit_empty: BTreeSet<EntityId>,
}

/// Parsed text-channel action description.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextActionFacts {
    pub start_room: Option<RoomId>,
    pub actions: Vec<Action>,
}

/// The per-question projection of an episode into input channels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityBundle {
    pub condition: Condition,
    pub video: Option<VideoStream>,
    pub text_state: Option<TextStateFacts>,
    pub text_actions: Option<TextActionFacts>,
}

impl ModalityBundle {
    pub fn validate(&self) -> Result<(), FusionError> {
        let mismatch = |detail: &str| FusionError::ConditionMismatch {
            condition: self.condition,
            detail: detail.to_owned(),
        };
        match self.condition {
            Condition::Multimodal => {
                if self.video.is_none() || self.text_state.is_none() || self.text_actions.is_none()
                {
                    return Err(mismatch("multimodal requires video and text channels"));
                }
            }
            Condition::TextOnly => {
                if self.video.is_some() {
                    return Err(mismatch("text-only bundle carries video bytes"));
                }
                if self.text_state.is_none() || self.text_actions.is_none() {
                    return Err(mismatch("text-only requires both text sections"));
                }
            }
            Condition::VideoOnly => {
                if self.text_state.is_some() || self.text_actions.is_some() {
                    return Err(mismatch("video-only bundle carries text bytes"));
                }
                if self.video.is_none() {
                    return Err(FusionError::EmptyBundle(self.condition));
                }
            }
        }
        Ok(())
    }

    /// Strips channels not permitted by `condition`.
    pub fn project(&self, condition: Condition) -> ModalityBundle {
        let mut out = self.clone();
        out.condition = condition;
        match condition {
            Condition::Multimodal => {}
            Condition::TextOnly => out.video = None,
            Condition::VideoOnly => {
                out.text_state = None;
                out.text_actions = None;
            }
        }
        out
    }
}

/// Union of both predicate sets minus video predicates contradicted by a
/// text predicate: a different placement for the same object, or an opposite
/// open flag for the same container. Text wins conflicts.
pub fn resolve_conflicts(
    video: &BTreeSet<Predicate>,
    text: &BTreeSet<Predicate>,
) -> BTreeSet<Predicate> {
    let mut text_placement: BTreeMap<&ObjectInstance, &Predicate> = BTreeMap::new();
    let mut text_flag: BTreeMap<&EntityId, bool> = BTreeMap::new();
    for p in text {
        match p {
            Predicate::In(x, _) | Predicate::On(x, _) | Predicate::Holding(x) => {
                text_placement.insert(x, p);
            }
            Predicate::IsOpen(c) => {
                text_flag.insert(c, true);
            }
            Predicate::IsClosed(c) => {
                text_flag.insert(c, false);
            }
            _ => {}
        }
    }
    let mut out = text.clone();
    for p in video {
        let contradicted = match p {
            Predicate::In(x, _) | Predicate::On(x, _) | Predicate::Holding(x) => {
                text_placement.get(x).map(|tp| *tp != p).unwrap_or(false)
            }
            Predicate::IsOpen(c) => text_flag.get(c).map(|open| !open).unwrap_or(false),
            Predicate::IsClosed(c) => text_flag.get(c).copied().unwrap_or(false),
            _ => false,
        };
        if !contradicted {
            out.insert(p.clone());
        }
    }
    out
}

/// The observer's knowledge of the world at one step: known pose and flags,
/// known placements, and the set of locations whose full contents are known.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnownState {
    pub agent_room: RoomId,
    pub agent_near: Option<EntityId>,
    pub open: BTreeMap<EntityId, bool>,
    pub placements: BTreeMap<ObjectInstance, Location>,
    /// Locations with closed-world contents: absence of a placement here is
    /// knowledge of absence, not ignorance.
    pub known_contents: BTreeSet<Location>,
}

impl KnownState {
    /// Full knowledge of a ground-truth state.
    pub fn from_state(state: &State) -> Self {
        let mut known_contents = BTreeSet::new();
        let mut open = BTreeMap::new();
        for c in &state.containers {
            known_contents.insert(Location::InContainer(c.id.clone()));
            open.insert(c.id.clone(), c.open);
        }
        for s in &state.surfaces {
            known_contents.insert(Location::OnSurface(s.id.clone()));
        }
        Self {
            agent_room: state.agent_room.clone(),
            agent_near: state.agent_near.clone(),
            open,
            placements: state.placements.clone(),
            known_contents,
        }
    }

    /// Predicate summary fed to the policy oracle: pose, every container
    /// flag, and every known placement.
    pub fn summary_predicates(&self, layout: &WorldLayout) -> BTreeSet<Predicate> {
        let mut out = BTreeSet::new();
        out.insert(Predicate::AgentInRoom(self.agent_room.clone()));
        if let Some(near) = &self.agent_near {
            out.insert(Predicate::CloseTo(near.clone()));
        }
        for c in &layout.containers {
            let is_open = self.open.get(&c.id).copied().unwrap_or(false);
            out.insert(if is_open {
                Predicate::IsOpen(c.id.clone())
            } else {
                Predicate::IsClosed(c.id.clone())
            });
        }
        for (x, loc) in &self.placements {
            match loc {
                Location::InContainer(c) => {
                    out.insert(Predicate::In(x.clone(), c.clone()));
                }
                Location::OnSurface(s) => {
                    out.insert(Predicate::On(x.clone(), s.clone()));
                }
                Location::HeldByAgent => {
                    out.insert(Predicate::Holding(x.clone()));
                }
                Location::InRoom(_) => {}
            }
        }
        out
    }

    /// What the observer can assert the agent saw here: locations in the
    /// agent's view whose contents the observer knows. Locations in view but
    /// outside the closed world stay open belief candidates.
    pub fn evidence(&self, layout: &WorldLayout) -> StepEvidence {
        let mut scanned: BTreeMap<Location, BTreeSet<ObjectClass>> = BTreeMap::new();
        for c in &layout.containers {
            let loc = Location::InContainer(c.id.clone());
            if c.room == self.agent_room
                && self.open.get(&c.id).copied().unwrap_or(false)
                && self.known_contents.contains(&loc)
            {
                scanned.insert(loc, BTreeSet::new());
            }
        }
        for s in &layout.surfaces {
            let loc = Location::OnSurface(s.id.clone());
            if s.room == self.agent_room && self.known_contents.contains(&loc) {
                scanned.insert(loc, BTreeSet::new());
            }
        }
        for (x, loc) in &self.placements {
            if let Some(classes) = scanned.get_mut(loc) {
                classes.insert(x.class.clone());
            }
        }
        StepEvidence { scanned }
    }

    /// Replays one action's effects on the known parts of the state.
    fn apply_action(&mut self, layout: &WorldLayout, action: &Action) {
        match action {
            Action::WalkTowards(WalkTarget::Room(room)) => {
                if *room == self.agent_room {
                    self.agent_near = None;
                } else if let Some(hop) = layout.next_hop(&self.agent_room, room) {
                    self.agent_room = hop;
                    self.agent_near = None;
                }
            }
            Action::WalkTowards(WalkTarget::Entity(entity)) => {
                match layout.entity_room(entity) {
                    Some(home) if *home == self.agent_room => {
                        self.agent_near = Some(entity.clone());
                    }
                    Some(home) => {
                        if let Some(hop) = layout.next_hop(&self.agent_room, home) {
                            self.agent_room = hop;
                            self.agent_near = None;
                        }
                    }
                    None => {}
                }
            }
            Action::Open(c) => {
                self.open.insert(c.clone(), true);
            }
            Action::Close(c) => {
                self.open.insert(c.clone(), false);
            }
            Action::Grab(x) => {
                if self.placements.contains_key(x) {
                    self.placements.insert(x.clone(), Location::HeldByAgent);
                } else if let Some(near) = self.agent_near.clone() {
                    // Parsed grabs carry a placeholder index; bind to a
                    // matching instance at the agent's location.
                    let near_locs = [
                        Location::InContainer(near.clone()),
                        Location::OnSurface(near),
                    ];
                    let bound = self
                        .placements
                        .iter()
                        .find(|(inst, loc)| {
                            inst.class == x.class && near_locs.contains(loc)
                        })
                        .map(|(inst, _)| inst.clone());
                    if let Some(inst) = bound {
                        self.placements.insert(inst, Location::HeldByAgent);
                    }
                }
            }
            Action::AboutToOpen(_) | Action::Idle => {}
        }
    }

    /// Merges one step's video predicates into the state.
    fn absorb_video(&mut self, opened: Option<&EntityId>, predicates: &BTreeSet<Predicate>) {
        for p in predicates {
            match p {
                Predicate::AgentInRoom(r) => self.agent_room = r.clone(),
                Predicate::CloseTo(e) => self.agent_near = Some(e.clone()),
                Predicate::IsOpen(c) => {
                    self.open.insert(c.clone(), true);
                }
                Predicate::IsClosed(c) => {
                    self.open.insert(c.clone(), false);
                }
                Predicate::In(x, c) => {
                    self.placements
                        .insert(x.clone(), Location::InContainer(c.clone()));
                }
                Predicate::On(x, s) => {
                    self.placements
                        .insert(x.clone(), Location::OnSurface(s.clone()));
                }
                Predicate::Holding(x) => {
                    self.placements.insert(x.clone(), Location::HeldByAgent);
                }
            }
        }
        if let Some(c) = opened {
            // The camera enumerates a container's contents as it opens.
            self.known_contents
                .insert(Location::InContainer(c.clone()));
        }
    }
}

/// The unified representation Eq.-style scoring consumes: per-step known
/// states `s_0..s_t` and the action prefix `a_1..a_t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpisodeRepr {
    pub states: Vec<KnownState>,
    pub actions: Vec<Action>,
}

impl EpisodeRepr {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Known state the agent stands in when choosing 1-based action `t`.
    pub fn state_before(&self, t: usize) -> &KnownState {
        &self.states[t.saturating_sub(1)]
    }
}

/// Aligns the bundle's channels and reconstructs the state/action sequences.
///
/// With text present the initial containment is complete; with video present
/// the pose stream and disclosure events are exact; with both, conflicts
/// resolve in favor of text.
pub fn align_streams(
    layout: &WorldLayout,
    bundle: &ModalityBundle,
) -> Result<EpisodeRepr, FusionError> {
    bundle.validate()?;

    // Action sequence: text actions, video actions, or their agreement.
    let text_actions = bundle.text_actions.as_ref().map(|t| &t.actions);
    let video_actions: Option<Vec<&Action>> = bundle
        .video
        .as_ref()
        .map(|v| v.steps.iter().map(|s| &s.action).collect());
    let actions: Vec<Action> = match (text_actions, &video_actions) {
        (Some(text), Some(video)) => {
            if text.len() != video.len() {
                return Err(FusionError::AlignmentMismatch {
                    step: text.len().min(video.len()),
                    text: text.get(video.len()).cloned(),
                    video: video.get(text.len()).map(|a| (*a).clone()),
                });
            }
            for (i, (t, v)) in text.iter().zip(video.iter()).enumerate() {
                if t != *v {
                    return Err(FusionError::AlignmentMismatch {
                        step: i,
                        text: Some(t.clone()),
                        video: Some((*v).clone()),
                    });
                }
            }
            text.clone()
        }
        (Some(text), None) => text.clone(),
        (None, Some(video)) => video.iter().map(|a| (*a).clone()).collect(),
        (None, None) => return Err(FusionError::EmptyBundle(bundle.condition)),
    };

    // Initial knowledge.
    let video_initial = bundle.video.as_ref().map(|v| &v.initial);
    let text_preds = bundle
        .text_state
        .as_ref()
        .map(|t| t.predicates.clone())
        .unwrap_or_default();
    let merged_initial = match video_initial {
        Some(video) => resolve_conflicts(video, &text_preds),
        None => text_preds,
    };

    let start_room = bundle
        .text_actions
        .as_ref()
        .and_then(|t| t.start_room.clone())
        .or_else(|| {
            merged_initial.iter().find_map(|p| match p {
                Predicate::AgentInRoom(r) => Some(r.clone()),
                _ => None,
            })
        })
        .ok_or(FusionError::UnknownStartRoom)?;
    let start_near = merged_initial.iter().find_map(|p| match p {
        Predicate::CloseTo(e) => Some(e.clone()),
        _ => None,
    });

    let mut open: BTreeMap<EntityId, bool> =
        layout.containers.iter().map(|c| (c.id.clone(), false)).collect();
    let mut placements = BTreeMap::new();
    for p in &merged_initial {
        match p {
            Predicate::IsOpen(c) => {
                open.insert(c.clone(), true);
            }
            Predicate::In(x, c) => {
                placements.insert(x.clone(), Location::InContainer(c.clone()));
            }
            Predicate::On(x, s) => {
                placements.insert(x.clone(), Location::OnSurface(s.clone()));
            }
            Predicate::Holding(x) => {
                placements.insert(x.clone(), Location::HeldByAgent);
            }
            _ => {}
        }
    }
    let known_contents: BTreeSet<Location> = if bundle.text_state.is_some() {
        // Text discloses the full initial containment: closed world.
        layout
            .containers
            .iter()
            .map(|c| Location::InContainer(c.id.clone()))
            .chain(
                layout
                    .surfaces
                    .iter()
                    .map(|s| Location::OnSurface(s.id.clone())),
            )
            .collect()
    } else {
        BTreeSet::new()
    };

    let mut state = KnownState {
        agent_room: start_room,
        agent_near: start_near,
        open,
        placements,
        known_contents,
    };
    let mut states = vec![state.clone()];
    for (i, action) in actions.iter().enumerate() {
        state.apply_action(layout, action);
        if let Some(video) = &bundle.video {
            let opened = match action {
                Action::Open(c) => Some(c),
                _ => None,
            };
            state.absorb_video(opened, &video.steps[i].predicates);
        }
        states.push(state.clone());
    }
    Ok(EpisodeRepr { states, actions })
}

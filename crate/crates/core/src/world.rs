//! Deterministic household world: transition function and observation
//! functions over symbolic states.
//!
//! Movement is room-granular: one walk covers one room hop or one
//! within-room approach. The agent's observation reveals everything in its
//! room that is not inside a closed container. The camera channel is
//! narrower: it reports the agent's whereabouts, proximity, open/close
//! status changes, and container contents only at the moment of opening.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    class_fits_container, validate_state, Action, DomainError, EntityId, Location,
    ObjectClass, Predicate, RoomId, State, WalkTarget,
};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("precondition violation for {action}: {reason}")]
    Precondition { action: String, reason: String },
    #[error("unknown object class: {0}")]
    UnknownObjectClass(ObjectClass),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

fn precondition(action: &Action, reason: impl Into<String>) -> WorldError {
    WorldError::Precondition {
        action: action.surface_form(),
        reason: reason.into(),
    }
}

/// Static structure of an apartment: rooms, furniture, adjacency, catalog.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldLayout {
    pub rooms: Vec<RoomId>,
    /// Symmetric adjacency, stored with both orientations present.
    pub adjacency: BTreeSet<(RoomId, RoomId)>,
    pub containers: Vec<ContainerSpec>,
    pub surfaces: Vec<SurfaceSpec>,
    pub catalog: BTreeSet<ObjectClass>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerSpec {
    pub id: EntityId,
    pub room: RoomId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub id: EntityId,
    pub room: RoomId,
}

impl WorldLayout {
    pub fn container(&self, id: &EntityId) -> Option<&ContainerSpec> {
        self.containers.iter().find(|c| &c.id == id)
    }

    pub fn surface(&self, id: &EntityId) -> Option<&SurfaceSpec> {
        self.surfaces.iter().find(|s| &s.id == id)
    }

    pub fn entity_room(&self, id: &EntityId) -> Option<&RoomId> {
        self.container(id)
            .map(|c| &c.room)
            .or_else(|| self.surface(id).map(|s| &s.room))
    }

    pub fn adjacent(&self, a: &RoomId, b: &RoomId) -> bool {
        self.adjacency.contains(&(a.clone(), b.clone()))
    }

    /// Rooms adjacent to `room`, in id order.
    pub fn neighbors<'a>(&'a self, room: &'a RoomId) -> impl Iterator<Item = &'a RoomId> {
        self.adjacency
            .iter()
            .filter(move |(a, _)| a == room)
            .map(|(_, b)| b)
    }

    /// First hop of a shortest path from `from` to `to`; ties broken by room
    /// id order. `None` when unreachable or already there.
    pub fn next_hop(&self, from: &RoomId, to: &RoomId) -> Option<RoomId> {
        if from == to {
            return None;
        }
        let mut prev: BTreeMap<&RoomId, &RoomId> = BTreeMap::new();
        let mut queue = VecDeque::from([from]);
        while let Some(room) = queue.pop_front() {
            for next in self.neighbors(room) {
                if next != from && !prev.contains_key(next) {
                    prev.insert(next, room);
                    if next == to {
                        let mut hop = next;
                        while prev.get(hop).copied() != Some(from) {
                            hop = prev[hop];
                        }
                        return Some(hop.clone());
                    }
                    queue.push_back(next);
                }
            }
        }
        None
    }

    /// Room-hop distance between rooms (0 for the same room).
    pub fn room_distance(&self, from: &RoomId, to: &RoomId) -> Option<usize> {
        if from == to {
            return Some(0);
        }
        let mut dist: BTreeMap<&RoomId, usize> = BTreeMap::from([(from, 0)]);
        let mut queue = VecDeque::from([from]);
        while let Some(room) = queue.pop_front() {
            let d = dist[room];
            for next in self.neighbors(room) {
                if !dist.contains_key(next) {
                    dist.insert(next, d + 1);
                    if next == to {
                        return Some(d + 1);
                    }
                    queue.push_back(next);
                }
            }
        }
        None
    }

    /// Checks adjacency symmetry, connectivity, and referential integrity.
    pub fn validate(&self) -> Result<(), WorldError> {
        let rooms: BTreeSet<&RoomId> = self.rooms.iter().collect();
        for (a, b) in &self.adjacency {
            if !rooms.contains(a) || !rooms.contains(b) {
                return Err(WorldError::InvalidLayout(format!(
                    "adjacency references unknown room ({a}, {b})"
                )));
            }
            if !self.adjacency.contains(&(b.clone(), a.clone())) {
                return Err(WorldError::InvalidLayout(format!(
                    "adjacency not symmetric for ({a}, {b})"
                )));
            }
        }
        if let Some(first) = self.rooms.first() {
            for room in &self.rooms {
                if self.room_distance(first, room).is_none() {
                    return Err(WorldError::InvalidLayout(format!(
                        "room graph not connected: {room} unreachable"
                    )));
                }
            }
        }
        for c in &self.containers {
            if !rooms.contains(&c.room) {
                return Err(WorldError::InvalidLayout(format!(
                    "container {} in unknown room {}",
                    c.id, c.room
                )));
            }
        }
        for s in &self.surfaces {
            if !rooms.contains(&s.room) {
                return Err(WorldError::InvalidLayout(format!(
                    "surface {} in unknown room {}",
                    s.id, s.room
                )));
            }
        }
        Ok(())
    }
}

/// A world fixture file: layout plus an initial state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldFile {
    pub layout: WorldLayout,
    pub initial_state: State,
}

impl WorldFile {
    pub fn from_json(json: &str) -> Result<Self, WorldError> {
        let file: WorldFile = crate::domain::from_canonical_json(json)?;
        file.layout.validate()?;
        let report = validate_state(&file.initial_state);
        if !report.is_ok() {
            return Err(WorldError::InvalidLayout(report.violations.join("; ")));
        }
        Ok(file)
    }
}

/// The two-room test fixture shipped at `worlds/k2.json`.
pub fn k2_fixture() -> WorldFile {
    WorldFile::from_json(include_str!("../../../worlds/k2.json")).expect("k2 fixture is valid")
}

/// What the agent perceives in one state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub predicates: BTreeSet<Predicate>,
    pub timestep: usize,
}

/// All containers and surfaces that may hold the class, in deterministic
/// order. Surfaces always qualify; containers are filtered by the registry's
/// compatibility table.
pub fn candidate_locations(
    layout: &WorldLayout,
    class: &ObjectClass,
) -> Result<BTreeSet<Location>, WorldError> {
    if !layout.catalog.contains(class) {
        return Err(WorldError::UnknownObjectClass(class.clone()));
    }
    let mut out: BTreeSet<Location> = layout
        .containers
        .iter()
        .filter(|c| class_fits_container(class, &c.id))
        .map(|c| Location::InContainer(c.id.clone()))
        .collect();
    out.extend(
        layout
            .surfaces
            .iter()
            .map(|s| Location::OnSurface(s.id.clone())),
    );
    Ok(out)
}

/// Applies one action to a state. Pure and deterministic; all facts not
/// touched by the action are inertial.
pub fn transition(layout: &WorldLayout, state: &State, action: &Action) -> Result<State, WorldError> {
    let mut next = state.clone();
    match action {
        Action::Idle => {}
        Action::WalkTowards(WalkTarget::Room(room)) => {
            if !state.rooms.contains(room) {
                return Err(precondition(action, format!("unknown room {room}")));
            }
            if *room == state.agent_room {
                next.agent_near = None;
            } else {
                let hop = layout
                    .next_hop(&state.agent_room, room)
                    .ok_or_else(|| precondition(action, format!("{room} unreachable")))?;
                next.agent_room = hop;
                next.agent_near = None;
            }
        }
        Action::WalkTowards(WalkTarget::Entity(entity)) => {
            let home = state
                .entity_room(entity)
                .ok_or_else(|| precondition(action, format!("unknown entity {entity}")))?
                .clone();
            if home == state.agent_room {
                next.agent_near = Some(entity.clone());
            } else {
                let hop = layout
                    .next_hop(&state.agent_room, &home)
                    .ok_or_else(|| precondition(action, format!("{home} unreachable")))?;
                next.agent_room = hop;
                next.agent_near = None;
            }
        }
        Action::Open(c) | Action::AboutToOpen(c) => {
            let container = state
                .container(c)
                .ok_or_else(|| precondition(action, format!("unknown container {c}")))?;
            if container.room != state.agent_room || state.agent_near.as_ref() != Some(c) {
                return Err(precondition(action, "not near"));
            }
            if container.open {
                return Err(precondition(action, "already open"));
            }
            if let Action::Open(_) = action {
                for cs in &mut next.containers {
                    if &cs.id == c {
                        cs.open = true;
                    }
                }
            }
        }
        Action::Close(c) => {
            let container = state
                .container(c)
                .ok_or_else(|| precondition(action, format!("unknown container {c}")))?;
            if container.room != state.agent_room || state.agent_near.as_ref() != Some(c) {
                return Err(precondition(action, "not near"));
            }
            if !container.open {
                return Err(precondition(action, "already closed"));
            }
            for cs in &mut next.containers {
                if &cs.id == c {
                    cs.open = false;
                }
            }
        }
        Action::Grab(obj) => {
            if state.held().is_some() {
                return Err(precondition(action, "already holding an object"));
            }
            let loc = state
                .placements
                .get(obj)
                .ok_or_else(|| precondition(action, format!("unknown object {obj}")))?;
            let reachable = match loc {
                Location::InContainer(c) => {
                    let container = state
                        .container(c)
                        .ok_or_else(|| precondition(action, format!("unknown container {c}")))?;
                    container.open
                        && container.room == state.agent_room
                        && state.agent_near.as_ref() == Some(c)
                }
                Location::OnSurface(s) => {
                    state
                        .surface(s)
                        .map(|sf| sf.room == state.agent_room)
                        .unwrap_or(false)
                        && state.agent_near.as_ref() == Some(s)
                }
                Location::InRoom(r) => *r == state.agent_room,
                Location::HeldByAgent => false,
            };
            if !reachable {
                return Err(precondition(action, "object not visible and reachable"));
            }
            next.placements.insert(obj.clone(), Location::HeldByAgent);
        }
    }
    Ok(next)
}

/// The agent's observation: everything in its room that is not inside a
/// closed container, plus container open/closed status and its own pose.
pub fn observe(state: &State) -> Observation {
    let mut predicates = BTreeSet::new();
    predicates.insert(Predicate::AgentInRoom(state.agent_room.clone()));
    if let Some(near) = &state.agent_near {
        predicates.insert(Predicate::CloseTo(near.clone()));
    }
    for c in &state.containers {
        if c.room == state.agent_room {
            predicates.insert(if c.open {
                Predicate::IsOpen(c.id.clone())
            } else {
                Predicate::IsClosed(c.id.clone())
            });
        }
    }
    for (obj, loc) in &state.placements {
        match loc {
            Location::InContainer(c) => {
                if let Some(container) = state.container(c) {
                    if container.room == state.agent_room && container.open {
                        predicates.insert(Predicate::In(obj.clone(), c.clone()));
                    }
                }
            }
            Location::OnSurface(s) => {
                if let Some(surface) = state.surface(s) {
                    if surface.room == state.agent_room {
                        predicates.insert(Predicate::On(obj.clone(), s.clone()));
                    }
                }
            }
            Location::HeldByAgent => {
                predicates.insert(Predicate::Holding(obj.clone()));
            }
            Location::InRoom(_) => {}
        }
    }
    Observation { predicates, timestep: 0 }
}

/// The video-side predicate stream for one step, computed from the
/// post-action state. The camera follows the person: it reports the room,
/// proximity, status changes, and the contents of a container at the moment
/// it is opened. It never sees inside containers that stay closed.
pub fn camera_channel(post_state: &State, action: &Action) -> BTreeSet<Predicate> {
    let mut predicates = BTreeSet::new();
    predicates.insert(Predicate::AgentInRoom(post_state.agent_room.clone()));
    if let Some(near) = &post_state.agent_near {
        predicates.insert(Predicate::CloseTo(near.clone()));
    }
    match action {
        Action::Open(c) => {
            predicates.insert(Predicate::IsOpen(c.clone()));
            for obj in post_state.instances_at(&Location::InContainer(c.clone())) {
                predicates.insert(Predicate::In(obj.clone(), c.clone()));
            }
        }
        Action::Close(c) => {
            predicates.insert(Predicate::IsClosed(c.clone()));
        }
        Action::Grab(obj) => {
            predicates.insert(Predicate::Holding(obj.clone()));
        }
        Action::WalkTowards(_) | Action::AboutToOpen(_) | Action::Idle => {}
    }
    predicates
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ObjectInstance;

    fn k2() -> (WorldLayout, State) {
        let file = k2_fixture();
        (file.layout, file.initial_state)
    }

    #[test]
    fn k2_fixture_loads_and_validates() {
        let (layout, state) = k2();
        layout.validate().unwrap();
        assert!(validate_state(&state).is_ok());
        assert_eq!(state.agent_room, RoomId::new("livingroom"));
    }

    #[test]
    fn idle_is_identity() {
        let (layout, state) = k2();
        let next = transition(&layout, &state, &Action::Idle).unwrap();
        assert_eq!(state, next);
    }

    #[test]
    fn open_near_closed_fridge_opens_it() {
        let (layout, mut state) = k2();
        state.agent_room = "kitchen".into();
        state.agent_near = Some("fridge".into());
        let next = transition(&layout, &state, &Action::Open("fridge".into())).unwrap();
        assert!(next.container(&"fridge".into()).unwrap().open);
        // Everything else inertial.
        assert_eq!(next.placements, state.placements);
        assert_eq!(next.agent_room, state.agent_room);
    }

    #[test]
    fn open_from_another_room_violates_precondition() {
        let (layout, state) = k2();
        let err = transition(&layout, &state, &Action::Open("fridge".into())).unwrap_err();
        match err {
            WorldError::Precondition { reason, .. } => assert_eq!(reason, "not near"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn walk_to_entity_in_other_room_hops_one_room() {
        let (layout, state) = k2();
        let next = transition(&layout, &state, &Action::walk_entity("fridge")).unwrap();
        assert_eq!(next.agent_room, RoomId::new("kitchen"));
        assert_eq!(next.agent_near, None);
        let next2 = transition(&layout, &next, &Action::walk_entity("fridge")).unwrap();
        assert_eq!(next2.agent_near, Some(EntityId::new("fridge")));
    }

    #[test]
    fn grab_requires_open_container_and_proximity() {
        let (layout, mut state) = k2();
        state.agent_room = "kitchen".into();
        state.agent_near = Some("fridge".into());
        let apple = ObjectInstance::new("apple", 1);
        assert!(transition(&layout, &state, &Action::Grab(apple.clone())).is_err());
        let opened = transition(&layout, &state, &Action::Open("fridge".into())).unwrap();
        let grabbed = transition(&layout, &opened, &Action::Grab(apple.clone())).unwrap();
        assert_eq!(grabbed.placements[&apple], Location::HeldByAgent);
    }

    #[test]
    fn observation_occludes_other_rooms() {
        let (_, state) = k2();
        let obs = observe(&state);
        assert!(obs
            .predicates
            .iter()
            .all(|p| !matches!(p, Predicate::In(_, _) | Predicate::IsClosed(_))));
        assert!(obs
            .predicates
            .contains(&Predicate::AgentInRoom("livingroom".into())));
    }

    #[test]
    fn observation_reveals_open_fridge_contents() {
        let (layout, mut state) = k2();
        state.agent_room = "kitchen".into();
        state.agent_near = Some("fridge".into());
        let opened = transition(&layout, &state, &Action::Open("fridge".into())).unwrap();
        let obs = observe(&opened);
        assert!(obs
            .predicates
            .contains(&Predicate::In(ObjectInstance::new("apple", 1), "fridge".into())));
    }

    #[test]
    fn observation_hides_closed_fridge_contents() {
        let (_, mut state) = k2();
        state.agent_room = "kitchen".into();
        let obs = observe(&state);
        assert!(obs.predicates.contains(&Predicate::IsClosed("fridge".into())));
        assert!(!obs
            .predicates
            .contains(&Predicate::In(ObjectInstance::new("apple", 1), "fridge".into())));
    }

    #[test]
    fn camera_reports_contents_at_opening() {
        let (layout, mut state) = k2();
        state.agent_room = "kitchen".into();
        state.agent_near = Some("fridge".into());
        let action = Action::Open("fridge".into());
        let post = transition(&layout, &state, &action).unwrap();
        let preds = camera_channel(&post, &action);
        assert!(preds.contains(&Predicate::IsOpen("fridge".into())));
        assert!(preds.contains(&Predicate::In(ObjectInstance::new("apple", 1), "fridge".into())));
    }

    #[test]
    fn camera_walk_step_shows_proximity_but_no_contents() {
        let (layout, mut state) = k2();
        state.agent_room = "kitchen".into();
        let action = Action::walk_entity("cabinet");
        let post = transition(&layout, &state, &action).unwrap();
        let preds = camera_channel(&post, &action);
        assert!(preds.contains(&Predicate::CloseTo("cabinet".into())));
        assert!(preds.iter().all(|p| !matches!(p, Predicate::In(_, _))));
    }

    #[test]
    fn camera_idle_in_empty_room_is_room_only() {
        let (layout, state) = k2();
        let post = transition(&layout, &state, &Action::Idle).unwrap();
        let preds = camera_channel(&post, &Action::Idle);
        assert_eq!(
            preds,
            BTreeSet::from([Predicate::AgentInRoom("livingroom".into())])
        );
    }

    #[test]
    fn candidate_locations_for_apple_in_k2() {
        let (layout, _) = k2();
        let locs = candidate_locations(&layout, &"apple".into()).unwrap();
        assert!(locs.contains(&Location::InContainer("fridge".into())));
        assert!(locs.contains(&Location::InContainer("cabinet".into())));
        assert!(locs.contains(&Location::OnSurface("kitchentable".into())));
        assert!(locs.contains(&Location::OnSurface("coffeetable".into())));
    }

    #[test]
    fn candidate_locations_fall_back_to_surfaces() {
        let (mut layout, _) = k2();
        layout.containers.clear();
        let locs = candidate_locations(&layout, &"apple".into()).unwrap();
        assert!(!locs.is_empty());
        assert!(locs
            .iter()
            .all(|l| matches!(l, Location::OnSurface(_))));
    }

    #[test]
    fn candidate_locations_reject_unregistered_class() {
        let (layout, _) = k2();
        let err = candidate_locations(&layout, &"piano".into()).unwrap_err();
        assert!(matches!(err, WorldError::UnknownObjectClass(_)));
    }

    #[test]
    fn object_conservation_under_transitions() {
        let (layout, mut state) = k2();
        let objects: BTreeSet<_> = state.placements.keys().cloned().collect();
        for action in [
            Action::walk_entity("fridge"),
            Action::walk_entity("fridge"),
            Action::Open("fridge".into()),
            Action::Grab(ObjectInstance::new("apple", 1)),
        ] {
            state = transition(&layout, &state, &action).unwrap();
            let now: BTreeSet<_> = state.placements.keys().cloned().collect();
            assert_eq!(objects, now);
        }
    }
}

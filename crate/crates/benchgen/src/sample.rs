use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use tom_core::domain::{
    class_fits_container, validate_state, ContainerState, Location, ObjectClass, ObjectInstance,
    RoomId, State, SurfaceState, CLASS_REGISTRY,
};
use tom_core::textgen::canonicalize_instances;
use tom_core::world::{ContainerSpec, SurfaceSpec, WorldLayout};

use crate::{GenConfig, GenError};

const MAX_ATTEMPTS: usize = 32;

/// Furniture pools per room archetype: the kitchen is container-rich, the
/// bathroom holds a single cabinet.
fn container_pool(room: &str) -> &'static [&'static str] {
    match room {
        "kitchen" => &[
            "fridge",
            "kitchencabinet",
            "kitchencabinet",
            "kitchencabinet",
            "kitchencabinet",
            "microwave",
            "oven",
            "dishwasher",
        ],
        "livingroom" | "bedroom" => &["cabinet", "cabinet"],
        "bathroom" => &["cabinet"],
        _ => &[],
    }
}

fn surface_pool(room: &str) -> &'static [&'static str] {
    match room {
        "kitchen" => &["kitchentable"],
        "livingroom" => &["coffeetable", "sofa", "desk"],
        "bedroom" => &["bed", "desk", "coffeetable"],
        "bathroom" => &[],
        _ => &[],
    }
}

/// Samples a connected apartment plus a canonical initial state: every
/// container closed, objects placed at class-compatible locations, the agent
/// in a random room. Retries on degenerate draws and fails after a bounded
/// number of attempts.
pub fn sample_world(
    config: &GenConfig,
    rng: &mut impl Rng,
) -> Result<(WorldLayout, State), GenError> {
    for _ in 0..MAX_ATTEMPTS {
        if let Some(pair) = try_sample(config, rng) {
            return Ok(pair);
        }
    }
    Err(GenError::SamplingExhausted(MAX_ATTEMPTS))
}

fn try_sample(config: &GenConfig, rng: &mut impl Rng) -> Option<(WorldLayout, State)> {
    let archetypes = ["kitchen", "livingroom", "bedroom", "bathroom"];
    let rooms: Vec<RoomId> = archetypes[..config.rooms].iter().map(|r| (*r).into()).collect();

    // Chain adjacency in room order plus occasional extra edges.
    let mut adjacency = BTreeSet::new();
    for pair in rooms.windows(2) {
        adjacency.insert((pair[0].clone(), pair[1].clone()));
        adjacency.insert((pair[1].clone(), pair[0].clone()));
    }
    if rooms.len() >= 3 {
        for i in 0..rooms.len() {
            for j in i + 2..rooms.len() {
                if rng.gen_bool(0.3) {
                    adjacency.insert((rooms[i].clone(), rooms[j].clone()));
                    adjacency.insert((rooms[j].clone(), rooms[i].clone()));
                }
            }
        }
    }

    // Furniture: sample counts per room from the pools, then number entity
    // ids globally per kind.
    let mut kind_totals: BTreeMap<&str, usize> = BTreeMap::new();
    let mut chosen: Vec<(RoomId, &str, bool)> = Vec::new();
    for room in &rooms {
        let pool = container_pool(room.as_str());
        let bonus = if room.as_str() == "kitchen" { 2 } else { 0 };
        let (lo, hi) = config.containers_per_room;
        let count = (rng.gen_range(lo..=hi) + bonus).min(pool.len());
        let mut pool: Vec<&str> = pool.to_vec();
        pool.shuffle(rng);
        for kind in pool.into_iter().take(count.max(1)) {
            chosen.push((room.clone(), kind, true));
            *kind_totals.entry(kind).or_default() += 1;
        }
        let pool = surface_pool(room.as_str());
        if !pool.is_empty() {
            let (lo, hi) = config.surfaces_per_room;
            let count = rng.gen_range(lo..=hi).min(pool.len());
            let mut pool: Vec<&str> = pool.to_vec();
            pool.shuffle(rng);
            for kind in pool.into_iter().take(count) {
                chosen.push((room.clone(), kind, false));
                *kind_totals.entry(kind).or_default() += 1;
            }
        }
    }
    chosen.sort_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)));
    let mut kind_seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut containers = Vec::new();
    let mut surfaces = Vec::new();
    for (room, kind, is_container) in chosen {
        let n = kind_seen.entry(kind).or_default();
        *n += 1;
        let id = format!("{kind}_{n}");
        if is_container {
            containers.push(ContainerSpec {
                id: tom_core::domain::EntityId::new(id),
                room,
            });
        } else {
            surfaces.push(SurfaceSpec {
                id: tom_core::domain::EntityId::new(id),
                room,
            });
        }
    }
    containers.sort_by(|a, b| a.id.cmp(&b.id));
    surfaces.sort_by(|a, b| a.id.cmp(&b.id));
    if containers.is_empty() {
        return None;
    }

    // Object classes: a random subset of the registry that can be placed.
    let (lo, hi) = config.object_classes;
    let class_count = rng.gen_range(lo..=hi).min(CLASS_REGISTRY.len());
    let mut class_pool: Vec<&str> = CLASS_REGISTRY.iter().map(|c| c.name).collect();
    class_pool.shuffle(rng);
    let mut catalog = BTreeSet::new();
    let mut placements = BTreeMap::new();
    for name in class_pool {
        if catalog.len() >= class_count {
            break;
        }
        let class = ObjectClass::new(name);
        let mut spots: Vec<Location> = containers
            .iter()
            .filter(|c| class_fits_container(&class, &c.id))
            .map(|c| Location::InContainer(c.id.clone()))
            .collect();
        spots.extend(surfaces.iter().map(|s| Location::OnSurface(s.id.clone())));
        if spots.is_empty() {
            continue;
        }
        let (ilo, ihi) = config.instances_per_class;
        let instances = rng.gen_range(ilo..=ihi);
        for i in 0..instances {
            let spot = spots[rng.gen_range(0..spots.len())].clone();
            placements.insert(ObjectInstance::new(name, i as u32 + 1), spot);
        }
        catalog.insert(class);
    }
    if catalog.is_empty() {
        return None;
    }

    let layout = WorldLayout {
        rooms: rooms.clone(),
        adjacency,
        containers: containers.clone(),
        surfaces: surfaces.clone(),
        catalog,
    };
    layout.validate().ok()?;

    let agent_room = rooms[rng.gen_range(0..rooms.len())].clone();
    let state = State {
        rooms,
        containers: containers
            .into_iter()
            .map(|c| ContainerState {
                id: c.id,
                room: c.room,
                open: false,
            })
            .collect(),
        surfaces: surfaces
            .into_iter()
            .map(|s| SurfaceState { id: s.id, room: s.room })
            .collect(),
        placements,
        agent_room,
        agent_near: None,
    };
    let state = canonicalize_instances(&state);
    validate_state(&state).is_ok().then_some((layout, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn minimal_config_yields_a_valid_world() {
        let config = GenConfig {
            rooms: 1,
            containers_per_room: (1, 1),
            surfaces_per_room: (1, 1),
            object_classes: (1, 1),
            instances_per_class: (1, 1),
            ..GenConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (layout, state) = sample_world(&config, &mut rng).unwrap();
        layout.validate().unwrap();
        assert!(validate_state(&state).is_ok());
        assert_eq!(layout.rooms.len(), 1);
    }

    #[test]
    fn default_config_stays_within_bounds() {
        let config = GenConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (layout, state) = sample_world(&config, &mut rng).unwrap();
            assert_eq!(layout.rooms.len(), 4);
            assert!(validate_state(&state).is_ok());
            for room in &layout.rooms {
                let containers = layout
                    .containers
                    .iter()
                    .filter(|c| &c.room == room)
                    .count();
                let bonus = if room.as_str() == "kitchen" { 2 } else { 0 };
                assert!(containers <= config.containers_per_room.1 + bonus);
            }
            let classes = tom_core::planner::present_classes(&state);
            assert!(!classes.is_empty());
            // Every placed class is a plausible candidate somewhere.
            for class in &classes {
                assert!(
                    !tom_core::world::candidate_locations(&layout, class)
                        .unwrap()
                        .is_empty()
                );
            }
        }
    }

    #[test]
    fn fixed_seed_reproduces_the_world() {
        let config = GenConfig::default();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_world(&config, &mut rng).unwrap()
        };
        assert_eq!(run(42), run(42));
    }
}

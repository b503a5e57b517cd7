use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use tom_core::domain::SCHEMA_VERSION;

use crate::{Benchmark, EpisodeRecord, GenError, Manifest, QuestionRecord, WorldRecord};

#[derive(Serialize)]
struct VersionedRef<'a, T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    payload: &'a T,
}

#[derive(Deserialize)]
struct VersionedOwned<T> {
    #[allow(dead_code)]
    schema_version: u32,
    #[serde(flatten)]
    payload: T,
}

fn write_pretty<T: Serialize>(path: &Path, payload: &T) -> Result<(), GenError> {
    let doc = serde_json::to_string_pretty(&VersionedRef {
        schema_version: SCHEMA_VERSION,
        payload,
    })
    .map_err(tom_core::domain::DomainError::from)?;
    fs::write(path, doc + "\n")?;
    Ok(())
}

fn read_versioned<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, GenError> {
    let text = fs::read_to_string(path)?;
    let doc: VersionedOwned<T> =
        serde_json::from_str(&text).map_err(tom_core::domain::DomainError::from)?;
    Ok(doc.payload)
}

/// Writes the benchmark directory layout:
/// `manifest.json`, `questions.jsonl`, `episodes/*.json`, `worlds/*.json`.
pub fn save_benchmark(dir: &Path, benchmark: &Benchmark) -> Result<(), GenError> {
    fs::create_dir_all(dir.join("episodes"))?;
    fs::create_dir_all(dir.join("worlds"))?;
    write_pretty(&dir.join("manifest.json"), &benchmark.manifest)?;
    for world in &benchmark.worlds {
        write_pretty(&dir.join("worlds").join(format!("{}.json", world.id)), world)?;
    }
    for episode in &benchmark.episodes {
        write_pretty(
            &dir.join("episodes").join(format!("{}.json", episode.id)),
            episode,
        )?;
    }
    let mut file = fs::File::create(dir.join("questions.jsonl"))?;
    for record in &benchmark.questions {
        let line = serde_json::to_string(&VersionedRef {
            schema_version: SCHEMA_VERSION,
            payload: record,
        })
        .map_err(tom_core::domain::DomainError::from)?;
        writeln!(file, "{line}")?;
    }
    Ok(())
}

/// Loads a benchmark directory written by [`save_benchmark`].
pub fn load_benchmark(dir: &Path) -> Result<Benchmark, GenError> {
    let manifest: Manifest = read_versioned(&dir.join("manifest.json"))?;
    let mut worlds = Vec::new();
    let mut world_paths: Vec<_> = fs::read_dir(dir.join("worlds"))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    world_paths.sort();
    for path in world_paths {
        worlds.push(read_versioned::<WorldRecord>(&path)?);
    }
    let mut episodes = Vec::new();
    let mut episode_paths: Vec<_> = fs::read_dir(dir.join("episodes"))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    episode_paths.sort();
    for path in episode_paths {
        episodes.push(read_versioned::<EpisodeRecord>(&path)?);
    }
    let mut questions = Vec::new();
    let reader = BufReader::new(fs::File::open(dir.join("questions.jsonl"))?);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: VersionedOwned<QuestionRecord> =
            serde_json::from_str(&line).map_err(tom_core::domain::DomainError::from)?;
        questions.push(doc.payload);
    }
    Ok(Benchmark {
        manifest,
        worlds,
        episodes,
        questions,
    })
}

//! Scenario batch generation: seed-named files plus a manifest carrying
//! the config hash for reproducibility checks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feeder::{FeederModel, RoadGraph};
use crate::hazard::{generate_scenario, HazardConfig, HazardScenario};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub config_hash: String,
    /// Loadable feeder spec (bundled alias or path), from the hazard config.
    pub feeder_spec: String,
    pub feeder_fingerprint: String,
    pub seed_base: u64,
    pub count: usize,
    pub files: Vec<String>,
}

/// Writes `count` scenario files named by seed plus the manifest. Refuses
/// a non-empty output directory unless `force` is set.
pub fn gen_scenarios(
    config: &HazardConfig,
    feeder: &FeederModel,
    roads: &RoadGraph,
    count: usize,
    seed_base: u64,
    out_dir: &Path,
    force: bool,
) -> Result<Manifest> {
    if out_dir.exists() {
        let non_empty = std::fs::read_dir(out_dir)?.next().is_some();
        if non_empty && !force {
            return Err(Error::Config(format!(
                "output directory {} is not empty (use --force to overwrite)",
                out_dir.display()
            )));
        }
    } else {
        std::fs::create_dir_all(out_dir)?;
    }
    let mut files = Vec::with_capacity(count);
    for i in 0..count {
        let seed = seed_base + i as u64;
        let scenario = generate_scenario(config, feeder, roads, seed)?;
        let name = format!("scenario_{seed}.json");
        scenario.write_to(&out_dir.join(&name))?;
        files.push(name);
    }
    let manifest = Manifest {
        version: 1,
        config_hash: config.hash.clone(),
        feeder_spec: config.feeder.clone(),
        feeder_fingerprint: feeder.fingerprint(),
        seed_base,
        count,
        files,
    };
    std::fs::write(
        out_dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(manifest)
}

/// Reads a generated batch back, ordered by seed, verifying that every
/// scenario carries the manifest's config hash.
pub fn read_scenario_dir(dir: &Path) -> Result<(Manifest, Vec<(u64, HazardScenario)>)> {
    let manifest_text = std::fs::read_to_string(dir.join(MANIFEST_FILE)).map_err(|e| {
        Error::Config(format!(
            "cannot read {} in {}: {e}",
            MANIFEST_FILE,
            dir.display()
        ))
    })?;
    let manifest: Manifest = serde_json::from_str(&manifest_text)
        .map_err(|e| Error::Config(format!("manifest parse: {e}")))?;
    let mut scenarios = Vec::with_capacity(manifest.files.len());
    for name in &manifest.files {
        let s = HazardScenario::read_from(&dir.join(name))?;
        if s.config_hash != manifest.config_hash {
            return Err(Error::Config(format!(
                "{name}: config hash {} does not match manifest {}",
                s.config_hash, manifest.config_hash
            )));
        }
        scenarios.push((s.seed, s));
    }
    scenarios.sort_by_key(|(seed, _)| *seed);
    Ok((manifest, scenarios))
}

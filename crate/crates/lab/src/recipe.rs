//! Dataset recipes: groups of scenario templates expanded into seeded sequences.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sot3d_core::synth::{generate_sequence, ScenarioConfig};

use crate::dataio::write_generated;
use crate::error::{read_string, LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeGroup {
    pub count: usize,
    /// Template; its seed is replaced per sequence.
    pub scenario: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecipe {
    pub name: String,
    #[serde(default = "default_fraction")]
    pub split_fraction: f64,
    pub groups: Vec<RecipeGroup>,
}

fn default_fraction() -> f64 {
    0.7
}

/// The bundled easy recipe: one rigid box class on a ground plane with light clutter.
pub const EASY_RECIPE: &str = include_str!("../recipes/easy.json");

pub fn parse_recipe(text: &str, path: &Path) -> Result<DatasetRecipe> {
    let r: DatasetRecipe = serde_json::from_str(text).map_err(|e| LabError::format(path, e.to_string()))?;
    if r.name.is_empty() || r.groups.is_empty() {
        return Err(LabError::format(path, "recipe needs a name and at least one group"));
    }
    Ok(r)
}

pub fn read_recipe(path: &Path) -> Result<DatasetRecipe> {
    parse_recipe(&read_string(path)?, path)
}

pub fn easy_recipe() -> DatasetRecipe {
    parse_recipe(EASY_RECIPE, Path::new("recipes/easy.json")).expect("bundled recipe parses")
}

/// SplitMix64 finalizer; decorrelates per-sequence seeds.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-sequence ids (`<name>-NNNN`) and scenario configs.
pub fn expand_recipe(recipe: &DatasetRecipe, seed: u64) -> Vec<(String, ScenarioConfig)> {
    let mut out = Vec::new();
    for g in &recipe.groups {
        for _ in 0..g.count {
            let index = out.len();
            let mut cfg = g.scenario.clone();
            cfg.seed = mix_seed(seed, index as u64);
            out.push((format!("{}-{index:04}", recipe.name), cfg));
        }
    }
    out
}

/// Writes every sequence of the recipe under `out`, in parallel on the current rayon pool.
pub fn generate_dataset(recipe: &DatasetRecipe, out: &Path, seed: u64) -> Result<Vec<String>> {
    let items = expand_recipe(recipe, seed);
    items
        .par_iter()
        .map(|(id, cfg)| {
            let seq = generate_sequence(cfg)?;
            write_generated(&out.join(id), id, &seq)?;
            Ok(id.clone())
        })
        .collect()
}

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitOutcome {
    pub manifest: SplitManifest,
    pub warnings: Vec<String>,
}

/// Rounds half up.
fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor() as usize
}

/// Stratified, seeded train/test split of `(id, category)` pairs.
///
/// The train total is `round_half_up(n * fraction)`, shared between classes by largest
/// remainder; every class with at least two sequences keeps at least one on each side.
/// A class with a single sequence goes to train and produces a warning. Both lists are
/// returned sorted.
pub fn make_split(items: &[(String, String)], fraction: f64, seed: u64) -> Result<SplitOutcome> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(LabError::Usage(format!("train fraction must lie in (0, 1), got {fraction}")));
    }
    let mut seen = BTreeSet::new();
    let mut classes: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, cat) in items {
        if !seen.insert(id.as_str()) {
            return Err(LabError::Usage(format!("duplicate sequence id {id}")));
        }
        classes.entry(cat.as_str()).or_default().push(id.as_str());
    }
    let n = items.len();
    let total = round_half_up(n as f64 * fraction);
    let mut quota: BTreeMap<&str, usize> = BTreeMap::new();
    let mut rema: Vec<(f64, &str)> = Vec::new();
    for (cat, ids) in &classes {
        let ideal = ids.len() as f64 * fraction;
        quota.insert(cat, ideal.floor() as usize);
        rema.push((ideal - ideal.floor(), cat));
    }
    rema.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    let mut left = total.saturating_sub(quota.values().sum());
    for (_, cat) in &rema {
        if left == 0 {
            break;
        }
        *quota.get_mut(cat).expect("class present") += 1;
        left -= 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut manifest = SplitManifest { train: Vec::new(), test: Vec::new() };
    let mut warnings = Vec::new();
    for (cat, ids) in classes {
        let mut ids: Vec<&str> = ids;
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let k = if ids.len() == 1 {
            warnings.push(format!("class {cat} has a single sequence; assigned to train"));
            1
        } else {
            quota[cat].clamp(1, ids.len() - 1)
        };
        manifest.train.extend(ids[..k].iter().map(|s| s.to_string()));
        manifest.test.extend(ids[k..].iter().map(|s| s.to_string()));
    }
    manifest.train.sort();
    manifest.test.sort();
    Ok(SplitOutcome { manifest, warnings })
}

pub fn encode_split(m: &SplitManifest) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("split serializes");
    s.push('\n');
    s
}

pub fn decode_split(text: &str, path: &std::path::Path) -> Result<SplitManifest> {
    let m: SplitManifest = serde_json::from_str(text).map_err(|e| LabError::format(path, e.to_string()))?;
    let train: BTreeSet<&String> = m.train.iter().collect();
    if let Some(dup) = m.test.iter().find(|id| train.contains(id)) {
        return Err(LabError::format(path, format!("sequence {dup} is in both train and test")));
    }
    Ok(m)
}

//! Run manifests tie every emitted artifact to the exact inputs and settings
//! that produced it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::TrainConfig;
use crate::kg::Dataset;

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), "-", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub phase: String,
    pub config: TrainConfig,
    pub dataset_fingerprint: String,
    pub seed: u64,
    pub version: String,
    /// Extra identifying inputs, e.g. feature-file hashes or parent manifests.
    pub inputs: BTreeMap<String, String>,
    /// Wall-clock seconds per phase. Excluded from the hash.
    pub timings: BTreeMap<String, f64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Content hash over every split in id form plus both vocabularies.
pub fn dataset_fingerprint(dataset: &Dataset) -> String {
    let mut text = String::new();
    text.push_str(&dataset.entities.dump());
    text.push('\n');
    text.push_str(&dataset.relations.dump());
    for split in [&dataset.train, &dataset.valid, &dataset.test] {
        text.push('\n');
        text.push_str(&dataset.render_split(split));
    }
    sha256_hex(text.as_bytes())
}

impl RunManifest {
    pub fn new(phase: &str, config: &TrainConfig, dataset: &Dataset) -> Self {
        Self {
            phase: phase.into(),
            config: config.clone(),
            dataset_fingerprint: dataset_fingerprint(dataset),
            seed: config.seed,
            version: VERSION.into(),
            inputs: BTreeMap::new(),
            timings: BTreeMap::new(),
        }
    }

    /// Stable hash of everything except timings.
    pub fn hash(&self) -> String {
        let mut stable = self.clone();
        stable.timings.clear();
        sha256_hex(&serde_json::to_vec(&stable).expect("manifest serializes"))
    }

    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_string()
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        v["hash"] = serde_json::Value::String(self.hash());
        serde_json::to_string_pretty(&v).expect("json") + "\n"
    }
}

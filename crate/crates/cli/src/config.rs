//! Pipeline configuration: a TOML file with per-stage sections, plus JSON
//! override flags deep-merged on top. Every command receives the resolved
//! configuration and its hash through [`Context`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use tacforce_core::error::{Error, Result};
use tacforce_core::flowfeat::FlowConfig;
use tacforce_core::learning::TrainConfig;
use tacforce_core::synth::SynthConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Root seed; all stage randomness derives from it by stable labels.
    pub seed: u64,
    pub threads: usize,
    /// Per-axis F/T sensor resolution attached to ingested readings, N.
    pub ft_resolution_n: [f64; 3],
    pub fit: FitSection,
    pub grid: GridSection,
    pub regions: RegionSection,
    pub flow: FlowConfig,
    pub synth: SynthConfig,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 1,
            ft_resolution_n: [0.03, 0.03, 0.06],
            fit: FitSection::default(),
            grid: GridSection::default(),
            regions: RegionSection::default(),
            flow: FlowConfig::default(),
            synth: SynthConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSection {
    pub order: usize,
    pub starts: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        Self { order: 2, starts: 32, max_iters: 2000, tol: 1e-14 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSection {
    pub rows: usize,
    pub cols: usize,
    pub extent_mm: [f64; 2],
}

impl Default for GridSection {
    fn default() -> Self {
        Self { rows: 20, cols: 20, extent_mm: [32.0, 32.0] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RegionSection {
    pub rows: usize,
    pub cols: usize,
}

impl Default for RegionSection {
    fn default() -> Self {
        Self { rows: 40, cols: 40 }
    }
}

/// Resolved configuration shared by all commands.
pub struct Context {
    pub config: PipelineConfig,
    /// FNV-1a hash of the resolved configuration, embedded in reports.
    pub config_hash: String,
}

impl Context {
    pub fn load(
        path: Option<&Path>,
        overrides: &[String],
        seed_flag: Option<u64>,
        threads_flag: Option<usize>,
    ) -> Result<Self> {
        let mut config: PipelineConfig = match path {
            Some(p) => {
                if !p.exists() {
                    return Err(Error::config(format!("config file {} does not exist", p.display())));
                }
                let text = std::fs::read_to_string(p)?;
                toml::from_str(&text)
                    .map_err(|e| Error::config(format!("{}: {e}", p.display())))?
            }
            None => PipelineConfig::default(),
        };

        if !overrides.is_empty() {
            let mut value = serde_json::to_value(&config)?;
            for raw in overrides {
                let patch: serde_json::Value = serde_json::from_str(raw)
                    .map_err(|e| Error::config(format!("--set is not valid JSON: {e}")))?;
                if !patch.is_object() {
                    return Err(Error::config("--set must be a JSON object".to_string()));
                }
                merge(&mut value, patch);
            }
            config = serde_json::from_value(value)
                .map_err(|e| Error::config(format!("override produced an invalid config: {e}")))?;
        }

        if let Some(seed) = seed_flag {
            config.seed = seed;
        }
        if let Some(threads) = threads_flag {
            config.threads = threads;
        }
        // One root seed drives every stage; sections carry it forward.
        config.train.seed = config.seed;
        config.synth.threads = config.threads;
        config.flow = config.synth.flow.clone();

        let canonical = serde_json::to_string(&config)?;
        Ok(Self {
            config,
            config_hash: fnv1a_hex(canonical.as_bytes()),
        })
    }
}

fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(base_map), serde_json::Value::Object(patch_map)) => {
            for (k, v) in patch_map {
                match base_map.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        base_map.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

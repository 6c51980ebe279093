//! Experiment configuration (a single JSON document).
//!
//! Every benchmark constant has a key defaulting to its published value.
//! The feed concentration `plant.cA0` has no default and must be present.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::bo::BoConfig;
use crate::error::{Error, Result};
use crate::harness::{BaselineConfig, HarnessConfig, ThetaBounds};
use crate::mpc::MpcConfig;
use crate::plant::{NoiseSpec, PlantParams, PlantState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[default]
    NoiseFree,
    Noisy,
}

impl Scenario {
    pub fn default_noise(self) -> NoiseSpec {
        match self {
            Scenario::NoiseFree => NoiseSpec::NONE,
            Scenario::Noisy => NoiseSpec {
                sigma_B: 0.2,
                sigma_R: 10.0,
            },
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_replicates() -> usize {
    1
}

fn default_assessment_runs() -> usize {
    100
}

fn default_horizon() -> usize {
    40
}

fn default_substeps() -> usize {
    10
}

fn default_epsilon() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub scenario: Scenario,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(deserialize_with = "plant_with_required_feed")]
    pub plant: PlantParams,
    /// Overrides the scenario's default measurement noise.
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default = "initial_state")]
    pub initial_state: PlantState,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub theta_bounds: ThetaBounds,
    #[serde(default)]
    pub bo: BoConfig,
    /// Closed-loop replicates per BO evaluation.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_assessment_runs")]
    pub assessment_runs: usize,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn initial_state() -> PlantState {
    PlantState::INITIAL
}

/// Requires `cA0` and fills every other plant constant from the benchmark table.
fn plant_with_required_feed<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<PlantParams, D::Error> {
    use serde::de::Error as _;
    let overrides = serde_json::Map::<String, serde_json::Value>::deserialize(d)?;
    let c_a0 = overrides
        .get("cA0")
        .and_then(|v| v.as_f64())
        .ok_or_else(|| D::Error::custom("plant.cA0 (feed concentration, mol/L) is required and has no default"))?;
    let mut merged = serde_json::to_value(PlantParams::benchmark(c_a0)).map_err(D::Error::custom)?;
    let table = merged.as_object_mut().expect("struct serializes to an object");
    for (k, v) in overrides {
        if !table.contains_key(&k) {
            return Err(D::Error::custom(format!("unknown plant parameter '{k}'")));
        }
        table.insert(k, v);
    }
    serde_json::from_value(merged).map_err(D::Error::custom)
}

impl ExperimentConfig {
    /// Benchmark experiment with every default and the given feed concentration.
    pub fn benchmark(c_a0: f64, scenario: Scenario) -> Self {
        let json = serde_json::json!({ "scenario": scenario, "plant": { "cA0": c_a0 } });
        serde_json::from_value(json).expect("benchmark config parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn noise(&self) -> NoiseSpec {
        self.noise.unwrap_or_else(|| self.scenario.default_noise())
    }

    pub fn harness(&self) -> HarnessConfig {
        HarnessConfig {
            plant: self.plant,
            initial_state: self.initial_state,
            mpc: self.mpc.clone(),
            horizon: self.horizon,
            substeps: self.substeps,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.harness().validate()?;
        self.bo.validate()?;
        self.theta_bounds.validate()?;
        let n = self.noise();
        NoiseSpec::new(n.sigma_B, n.sigma_R)?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.replicates == 0 || self.assessment_runs == 0 {
            return Err(Error::Config("replicates and assessment_runs must be >= 1".into()));
        }
        let b = &self.baseline;
        if b.prbs_hold == 0 || !(b.train_fraction > 0.0 && b.train_fraction < 1.0) {
            return Err(Error::Config("invalid baseline PRBS settings".into()));
        }
        if self.theta_bounds.narx.0 < -1e6 || self.theta_bounds.backoff.1 > 1.0 {
            return Err(Error::Config("tuning bounds out of the supported range".into()));
        }
        if (self.mpc.t_bounds.0, self.mpc.t_bounds.1) != (self.mpc.scaling.TR.min, self.mpc.scaling.TR.max) {
            // the backoff is expressed in scaled temperature units
            return Err(Error::Config(
                "mpc.t_bounds must match the temperature scaling range".into(),
            ));
        }
        Ok(())
    }
}

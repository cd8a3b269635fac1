//! JSON configuration and the named baseline presets.
//!
//! Layout (unknown keys are rejected):
//!
//! ```json
//! {
//!   "seed": 1,
//!   "graph_shape": { "d": 2, "b": 2, "p": 0.0 },
//!   "reward": { "high_r": 1.0, "fail_r": 0.0, "std_r": 0.0, "mode": "needle", "goal": [1, 2] },
//!   "observations": { "MDP_D": true, "MDP_W": true, "W_IDs": [5, 11], "D_IDs": [2, 4] },
//!   "image_set": { "seed": 1, "1D": false, "nr_images": 12, "noise_on_read": 0.0, "rotation_on_read": 0.0 }
//! }
//! ```
//!
//! `reward.mode` (default `needle`), `reward.goal` (drawn from the seed when
//! absent) and `observations.h_ids` / `observations.e_ids` (default `[0,0]`
//! and `[1,1]`) are optional.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::observations::{IdRange, ObservationConfig, ObservationError, END_CLASS, HOME_CLASS};
use crate::rewards::{RewardError, RewardMode, TaskSpec};
use crate::topology::{GraphShape, TopologyError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed configuration: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error("unknown preset {name:?}; valid presets: {}", PRESET_NAMES.join(", "))]
    UnknownPreset { name: String },
}

impl ConfigError {
    fn invalid(key: &str, reason: impl ToString) -> Self {
        ConfigError::Invalid { key: key.to_string(), reason: reason.to_string() }
    }
}

impl From<ObservationError> for ConfigError {
    fn from(e: ObservationError) -> Self {
        match e {
            ObservationError::Invalid { key, reason } => ConfigError::invalid(key, reason),
            ObservationError::Topology(t) => ConfigError::invalid("graph_shape", t),
            other => ConfigError::invalid("image_set", other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeParams {
    pub d: u32,
    pub b: u32,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardParams {
    pub high_r: f64,
    pub fail_r: f64,
    pub std_r: f64,
    #[serde(default)]
    pub mode: RewardMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationParams {
    #[serde(rename = "MDP_D")]
    pub mdp_d: bool,
    #[serde(rename = "MDP_W")]
    pub mdp_w: bool,
    #[serde(rename = "W_IDs")]
    pub w_ids: IdRange,
    #[serde(rename = "D_IDs")]
    pub d_ids: IdRange,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_ids: Option<IdRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_ids: Option<IdRange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSetParams {
    pub seed: u64,
    #[serde(rename = "1D")]
    pub one_d: bool,
    pub nr_images: u32,
    pub noise_on_read: f64,
    pub rotation_on_read: f64,
}

/// Complete description of one graph and its task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    /// Master seed for dynamics, observation sampling, reward noise and goal draws.
    pub seed: u64,
    pub graph_shape: ShapeParams,
    pub reward: RewardParams,
    pub observations: ObservationParams,
    pub image_set: ImageSetParams,
}

impl GraphSpec {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let spec: GraphSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn shape(&self) -> Result<GraphShape, ConfigError> {
        let ShapeParams { d, b, p } = self.graph_shape;
        GraphShape::new(b, d, p).map_err(|e| match e {
            TopologyError::Branching(_) => ConfigError::invalid("graph_shape.b", e),
            TopologyError::Depth(_) => ConfigError::invalid("graph_shape.d", e),
            TopologyError::WaitProbability(_) => ConfigError::invalid("graph_shape.p", e),
            other => ConfigError::invalid("graph_shape", other),
        })
    }

    pub fn observation_config(&self) -> ObservationConfig {
        let o = &self.observations;
        let i = &self.image_set;
        ObservationConfig {
            one_d: i.one_d,
            nr_images: i.nr_images,
            mdp_d: o.mdp_d,
            mdp_w: o.mdp_w,
            w_ids: o.w_ids,
            d_ids: o.d_ids,
            h_ids: o.h_ids.unwrap_or(IdRange::single(HOME_CLASS)),
            e_ids: o.e_ids.unwrap_or(IdRange::single(END_CLASS)),
            noise_on_read: i.noise_on_read,
            rotation_on_read: i.rotation_on_read,
            image_seed: i.seed,
        }
    }

    /// Task with the given goal and this spec's reward parameters.
    pub fn task_with_goal(&self, goal: Vec<u32>) -> TaskSpec {
        TaskSpec {
            goal,
            mode: self.reward.mode,
            high_r: self.reward.high_r,
            fail_r: self.reward.fail_r,
            std_r: self.reward.std_r,
        }
    }

    /// Runs every range and cardinality check.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let shape = self.shape()?;
        crate::topology::count_states(&shape).map_err(|e| ConfigError::invalid("graph_shape", e))?;
        for (key, v) in [
            ("reward.high_r", self.reward.high_r),
            ("reward.fail_r", self.reward.fail_r),
        ] {
            if !v.is_finite() {
                return Err(ConfigError::invalid(key, format!("must be finite, got {v}")));
            }
        }
        self.observation_config().validate(&shape)?;
        let goal = self.reward.goal.clone().unwrap_or_else(|| vec![1; shape.depth() as usize]);
        self.task_with_goal(goal).validate(&shape).map_err(|e| match e {
            RewardError::StdDev(_) => ConfigError::invalid("reward.std_r", e),
            other => ConfigError::invalid("reward.goal", other),
        })
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<GraphSpec, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    GraphSpec::from_json(&text)
}

pub fn write_config(spec: &GraphSpec, path: impl AsRef<Path>) -> Result<(), ConfigError> {
    let path = path.as_ref();
    fs::write(path, spec.to_json() + "\n").map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })
}

pub const PRESET_NAMES: [&str; 5] = ["CT-FO-B1", "CT-FO-B2", "CT-SU-B1", "CT-CO-B1", "CT-POSR-B1"];

fn base(d: u32, p: f64, mdp: bool, d_ids: IdRange, w_ids: IdRange, nr_images: u32) -> GraphSpec {
    GraphSpec {
        seed: 1,
        graph_shape: ShapeParams { d, b: 2, p },
        reward: RewardParams { high_r: 1.0, fail_r: 0.0, std_r: 0.0, mode: RewardMode::Needle, goal: None },
        observations: ObservationParams { mdp_d: mdp, mdp_w: mdp, w_ids, d_ids, h_ids: None, e_ids: None },
        image_set: ImageSetParams { seed: 1, one_d: false, nr_images, noise_on_read: 0.0, rotation_on_read: 0.0 },
    }
}

/// The baseline configurations, by name.
///
/// Fully observable presets reserve ids 0 and 1 for home and end and then
/// lay out one id per decision state followed by one id per wait state.
pub fn preset(name: &str) -> Result<GraphSpec, ConfigError> {
    let spec = match name {
        "CT-FO-B1" => base(2, 0.0, true, IdRange::new(2, 4), IdRange::new(5, 11), 12),
        "CT-FO-B2" => base(3, 0.5, true, IdRange::new(2, 8), IdRange::new(9, 23), 24),
        "CT-SU-B1" => base(2, 0.0, false, IdRange::single(2), IdRange::single(3), 5),
        "CT-CO-B1" => base(2, 0.0, false, IdRange::single(2), IdRange::new(3, 102), 103),
        "CT-POSR-B1" => base(2, 0.5, false, IdRange::single(2), IdRange::single(3), 5),
        _ => return Err(ConfigError::UnknownPreset { name: name.to_string() }),
    };
    debug_assert!(spec.validate().is_ok());
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FO_B1_JSON: &str = r#"{
        "seed": 1,
        "graph_shape": { "d": 2, "b": 2, "p": 0.0 },
        "reward": { "high_r": 1.0, "fail_r": 0.0, "std_r": 0.0 },
        "observations": { "MDP_D": true, "MDP_W": true, "W_IDs": [5, 11], "D_IDs": [2, 4] },
        "image_set": { "seed": 1, "1D": false, "nr_images": 12, "noise_on_read": 0.0, "rotation_on_read": 0.0 }
    }"#;

    fn key_of(err: ConfigError) -> String {
        match err {
            ConfigError::Invalid { key, .. } => key,
            other => panic!("expected an invalid-key error, got {other}"),
        }
    }

    #[test]
    fn parses_table_layout() {
        let spec = GraphSpec::from_json(FO_B1_JSON).unwrap();
        assert_eq!(spec, preset("CT-FO-B1").unwrap());
    }

    #[test]
    fn presets_match_published_parameters() {
        let fo1 = preset("CT-FO-B1").unwrap();
        assert_eq!((fo1.graph_shape.d, fo1.graph_shape.b, fo1.graph_shape.p), (2, 2, 0.0));
        assert!(fo1.observations.mdp_d && fo1.observations.mdp_w);

        let fo2 = preset("CT-FO-B2").unwrap();
        assert_eq!((fo2.graph_shape.d, fo2.graph_shape.b, fo2.graph_shape.p), (3, 2, 0.5));
        assert!(fo2.observations.mdp_d && fo2.observations.mdp_w);

        let su = preset("CT-SU-B1").unwrap();
        assert_eq!((su.graph_shape.d, su.graph_shape.b, su.graph_shape.p), (2, 2, 0.0));
        assert!(!su.observations.mdp_d && !su.observations.mdp_w);
        assert_eq!(su.observations.d_ids, IdRange::new(2, 2));
        assert_eq!(su.observations.w_ids, IdRange::new(3, 3));

        let co = preset("CT-CO-B1").unwrap();
        assert_eq!(co.observations.d_ids, IdRange::new(2, 2));
        assert_eq!(co.observations.w_ids, IdRange::new(3, 102));
        assert_eq!(co.observations.w_ids.len(), 100);

        let posr = preset("CT-POSR-B1").unwrap();
        assert_eq!((posr.graph_shape.d, posr.graph_shape.b, posr.graph_shape.p), (2, 2, 0.5));
        assert!(!posr.observations.mdp_d && !posr.observations.mdp_w);
    }

    #[test]
    fn every_preset_round_trips() {
        for name in PRESET_NAMES {
            let spec = preset(name).unwrap();
            spec.validate().unwrap();
            let back = GraphSpec::from_json(&spec.to_json()).unwrap();
            assert_eq!(back, spec, "{name}");
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        let mut spec = preset("CT-CO-B1").unwrap();
        spec.reward.goal = Some(vec![2, 1]);
        spec.reward.mode = RewardMode::Stochastic;
        spec.reward.std_r = 0.1;
        write_config(&spec, &path).unwrap();
        assert_eq!(load_config(&path).unwrap(), spec);
    }

    #[test]
    fn unknown_preset_lists_names() {
        let err = preset("CT-XX").unwrap_err();
        let msg = err.to_string();
        for name in PRESET_NAMES {
            assert!(msg.contains(name));
        }
    }

    #[test]
    fn rejects_bad_probability() {
        let text = FO_B1_JSON.replace("\"p\": 0.0", "\"p\": 1.2");
        assert_eq!(key_of(GraphSpec::from_json(&text).unwrap_err()), "graph_shape.p");
    }

    #[test]
    fn missing_key_is_named() {
        let text = FO_B1_JSON.replace("\"b\": 2, ", "");
        let err = GraphSpec::from_json(&text).unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
        assert!(err.to_string().contains("`b`"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = FO_B1_JSON.replace("\"seed\": 1,\n", "\"seed\": 1, \"colour\": 3,\n");
        let err = GraphSpec::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        let text = FO_B1_JSON.replace("\"high_r\": 1.0", "\"high_r\": 1.0, \"low_r\": 0.5");
        assert!(GraphSpec::from_json(&text).is_err());
    }

    #[test]
    fn invariant_errors_name_rows() {
        let mut spec = preset("CT-SU-B1").unwrap();
        spec.graph_shape.b = 1;
        assert_eq!(key_of(spec.validate().unwrap_err()), "graph_shape.b");
        let mut spec = preset("CT-SU-B1").unwrap();
        spec.graph_shape.d = 0;
        assert_eq!(key_of(spec.validate().unwrap_err()), "graph_shape.d");
        let mut spec = preset("CT-SU-B1").unwrap();
        spec.reward.goal = Some(vec![1, 3]);
        assert_eq!(key_of(spec.validate().unwrap_err()), "reward.goal");
        let mut spec = preset("CT-SU-B1").unwrap();
        spec.reward.std_r = -1.0;
        assert_eq!(key_of(spec.validate().unwrap_err()), "reward.std_r");
        let mut spec = preset("CT-SU-B1").unwrap();
        spec.observations.mdp_d = true;
        assert_eq!(key_of(spec.validate().unwrap_err()), "observations.D_IDs");
        let mut spec = preset("CT-SU-B1").unwrap();
        spec.image_set.nr_images = 4;
        assert_eq!(key_of(spec.validate().unwrap_err()), "image_set.nr_images");
        let mut spec = preset("CT-SU-B1").unwrap();
        spec.observations.w_ids = IdRange::single(0);
        assert_eq!(key_of(spec.validate().unwrap_err()), "observations.W_IDs");
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_config("/nonexistent/ct.json"), Err(ConfigError::Io { .. })));
    }
}

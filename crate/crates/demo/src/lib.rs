//! WebAssembly exports for the static demo page in `www/`.
//!
//! Everything crosses the boundary as JSON strings or flat numeric arrays so
//! the page needs no generated type glue beyond the functions themselves.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use ctgraph::analytics::{episode_length_pmf, GraphAnalytics};
use ctgraph::config::{preset, GraphSpec, PRESET_NAMES};
use ctgraph::dynamics::{Action, Env};
use ctgraph::observations::{build_image_set, Observation, IMAGE_PIXELS};
use ctgraph::topology::GraphShape;

/// Longest episode-length axis the page will request.
const MAX_PMF_POINTS: u32 = 4096;

/// Names accepted by [`DemoEnv::new`].
#[wasm_bindgen]
pub fn preset_names() -> String {
    json!(PRESET_NAMES).to_string()
}

/// Closed-form analytics for `<b, d, p>` plus the episode-length pmf from the
/// shortest length up to `points` lengths further.
#[wasm_bindgen]
pub fn analyze(b: u32, d: u32, p: f64, points: u32) -> Result<String, String> {
    let shape = GraphShape::new(b, d, p).map_err(|e| e.to_string())?;
    let a = GraphAnalytics::compute(&shape).map_err(|e| e.to_string())?;
    let first = 2 * (d as u64 + 1);
    let pmf: Vec<f64> = (0..points.min(MAX_PMF_POINTS) as u64)
        .map(|i| episode_length_pmf(d, p, first + i).expect("p validated above"))
        .collect();
    Ok(json!({
        "b": a.b,
        "d": a.d,
        "p": a.p,
        "expected_rho": a.expected_rho,
        "p_r": a.p_r,
        "p_e": a.p_e,
        "p_rnp": a.p_rnp,
        "n_states": a.n_states,
        "n_end_states": a.n_end_states,
        "expected_kappa": a.expected_kappa,
        "pmf_first_length": first,
        "pmf": pmf,
    })
    .to_string())
}

/// Canonical pixels of every image class, `144` bytes per class in id order,
/// values in `{0, 1, 2}`.
#[wasm_bindgen]
pub fn image_set_pixels(nr_images: u32, seed: u64) -> Result<Vec<u8>, String> {
    let set = build_image_set(nr_images, seed).map_err(|e| e.to_string())?;
    Ok(set.classes.iter().flat_map(|c| c.canonical).collect())
}

/// A live environment the page can step by hand.
#[wasm_bindgen]
pub struct DemoEnv {
    env: Env,
    last: Observation,
    total: f64,
}

#[wasm_bindgen]
impl DemoEnv {
    /// Builds a preset (or a JSON configuration when `source` starts with
    /// `{`) with the given seed, then resets it.
    #[wasm_bindgen(constructor)]
    pub fn new(source: &str, seed: u64) -> Result<DemoEnv, String> {
        let mut spec = if source.trim_start().starts_with('{') {
            GraphSpec::from_json(source).map_err(|e| e.to_string())?
        } else {
            preset(source).map_err(|e| e.to_string())?
        };
        spec.seed = seed;
        let mut env = Env::new(&spec).map_err(|e| e.to_string())?;
        let last = env.reset();
        Ok(DemoEnv { env, last, total: 0.0 })
    }

    pub fn action_count(&self) -> u32 {
        self.env.action_count()
    }

    pub fn goal(&self) -> String {
        json!(self.env.task().goal).to_string()
    }

    pub fn reset(&mut self) -> String {
        self.last = self.env.reset();
        self.total = 0.0;
        self.snapshot(0.0)
    }

    pub fn step(&mut self, action: u32) -> Result<String, String> {
        let step = self.env.step(Action(action)).map_err(|e| e.to_string())?;
        self.last = step.observation;
        self.total += step.reward;
        Ok(self.snapshot(step.reward))
    }

    /// Pixels of the latest observation in `[0, 1]`, or an empty array in
    /// one-hot mode.
    pub fn pixels(&self) -> Vec<f32> {
        let v = self.last.payload.to_vec();
        if v.len() == IMAGE_PIXELS {
            v
        } else {
            Vec::new()
        }
    }

    fn snapshot(&self, reward: f64) -> String {
        let cursor = self.env.cursor();
        let info = self.env.info();
        let value: Value = json!({
            "state": cursor.state.to_string(),
            "state_kind": info.state_kind.as_str(),
            "depth": info.depth,
            "obs_class": info.obs_class,
            "step": cursor.step_count,
            "reward": reward,
            "total_return": self.total,
            "done": cursor.done,
        });
        value.to_string()
    }
}

//! Task sequences for lifelong-learning protocols.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{draw_goal, RewardError, TaskSpec};
use crate::config::GraphSpec;
use crate::observations::IdRange;
use crate::rng;
use crate::topology::{self, GraphShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurriculumMode {
    /// Same graph, a different goal end state per task.
    Reward,
    /// Same graph and goal, a different image set per task.
    Images,
    /// Depths `d, d+1, ...`.
    Depth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumTask {
    /// Self-contained configuration; `reward.goal` is always set.
    pub spec: GraphSpec,
    pub task: TaskSpec,
}

fn err(msg: impl Into<String>) -> RewardError {
    RewardError::Curriculum(msg.into())
}

fn base_goal<R: Rng>(base: &GraphSpec, shape: &GraphShape, rng: &mut R) -> Vec<u32> {
    base.reward.goal.clone().unwrap_or_else(|| draw_goal(shape, rng))
}

fn goal_from_rank(mut rank: u64, shape: &GraphShape) -> Vec<u32> {
    let b = shape.branching() as u64;
    let mut goal = vec![0u32; shape.depth() as usize];
    for slot in goal.iter_mut().rev() {
        *slot = (rank % b) as u32 + 1;
        rank /= b;
    }
    goal
}

/// Builds `k` tasks from `base`. Draws come from the base seed's goal stream,
/// so the same inputs always yield the same curriculum. `aligned_goals` only
/// affects [`CurriculumMode::Depth`]: each deeper goal then extends the
/// previous one.
pub fn make_curriculum(
    base: &GraphSpec,
    mode: CurriculumMode,
    k: usize,
    aligned_goals: bool,
) -> Result<Vec<CurriculumTask>, RewardError> {
    if k == 0 {
        return Err(err("a curriculum needs at least one task"));
    }
    let shape = base.shape().map_err(|e| err(e.to_string()))?;
    let mut rng = rng::substream(base.seed, rng::TASK_GEN, 1);
    let specs: Vec<GraphSpec> = match mode {
        CurriculumMode::Reward => {
            let ends = topology::count_end_states(&shape).map_err(|e| err(e.to_string()))?;
            if k as u64 > ends {
                return Err(err(format!("{k} reward tasks requested but the graph has only {ends} end states")));
            }
            let ranks: Vec<u64> = if ends <= u32::MAX as u64 {
                index::sample(&mut rng, ends as usize, k).into_iter().map(|r| r as u64).collect()
            } else {
                let mut seen = HashSet::new();
                std::iter::from_fn(|| Some(rng.gen_range(0..ends)))
                    .filter(|r| seen.insert(*r))
                    .take(k)
                    .collect()
            };
            ranks
                .into_iter()
                .map(|rank| {
                    let mut spec = base.clone();
                    spec.reward.goal = Some(goal_from_rank(rank, &shape));
                    spec
                })
                .collect()
        }
        CurriculumMode::Images => {
            let goal = base_goal(base, &shape, &mut rng);
            let mut seen = HashSet::new();
            let mut specs = Vec::with_capacity(k);
            while specs.len() < k {
                let seed = rng.gen_range(0..u32::MAX as u64);
                if seen.insert(seed) {
                    let mut spec = base.clone();
                    spec.image_set.seed = seed;
                    spec.reward.goal = Some(goal.clone());
                    specs.push(spec);
                }
            }
            specs
        }
        CurriculumMode::Depth => {
            let mut goal = base_goal(base, &shape, &mut rng);
            let mut specs = Vec::with_capacity(k);
            for step in 0..k as u32 {
                let mut spec = base.clone();
                spec.graph_shape.d = base.graph_shape.d + step;
                let deeper = spec.shape().map_err(|e| err(e.to_string()))?;
                if step > 0 {
                    if aligned_goals {
                        goal.push(rng.gen_range(1..=deeper.branching()));
                    } else {
                        goal = draw_goal(&deeper, &mut rng);
                    }
                }
                spec.reward.goal = Some(goal.clone());
                relayout_unique_ids(&mut spec, &deeper).map_err(|e| err(e.to_string()))?;
                specs.push(spec);
            }
            specs
        }
    };
    specs
        .into_iter()
        .map(|spec| {
            spec.validate().map_err(|e| err(e.to_string()))?;
            let task = spec.task_with_goal(spec.reward.goal.clone().expect("goal set above"));
            Ok(CurriculumTask { spec, task })
        })
        .collect()
}

/// Under the unique-id flags a deeper graph needs more ids; lay them out
/// after the home/end ranges, decisions first, and grow the image set to fit.
fn relayout_unique_ids(spec: &mut GraphSpec, shape: &GraphShape) -> Result<(), topology::TopologyError> {
    if !spec.observations.mdp_d && !spec.observations.mdp_w {
        return Ok(());
    }
    let cfg = spec.observation_config();
    let obs = &mut spec.observations;
    let mut next = cfg.h_ids.hi.max(cfg.e_ids.hi) + 1;
    let n_decision = topology::count_decision_states(shape)? as u32;
    let n_wait = topology::count_wait_states(shape)? as u32;
    let d_len = if obs.mdp_d { n_decision } else { obs.d_ids.len() as u32 };
    obs.d_ids = IdRange::new(next, next + d_len - 1);
    next += d_len;
    let w_len = if obs.mdp_w { n_wait } else { obs.w_ids.len() as u32 };
    obs.w_ids = IdRange::new(next, next + w_len - 1);
    next += w_len;
    spec.image_set.nr_images = spec.image_set.nr_images.max(next);
    Ok(())
}

//! Goal sequences and the end-state reward functions.

mod curriculum;

pub use curriculum::{make_curriculum, CurriculumMode, CurriculumTask};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::GraphShape;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("decision trace has {got} entries, the graph needs {expected}")]
    IncompleteTrace { got: usize, expected: usize },
    #[error("goal sequence has {got} entries, the graph depth is {expected}")]
    GoalLength { got: usize, expected: usize },
    #[error("goal entry {0} is outside [1, b]")]
    GoalEntry(u32),
    #[error("std_r must be finite and >= 0, got {0}")]
    StdDev(f64),
    #[error("curriculum: {0}")]
    Curriculum(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    #[default]
    Needle,
    Gradient,
    Stochastic,
}

/// Decision actions taken so far this episode, in order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecisionTrace(Vec<u32>);

impl DecisionTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, action: u32) {
        self.0.push(action);
    }

    pub fn clear(&mut self) {
        self.0.clear();
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<u32>> for DecisionTrace {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub goal: Vec<u32>,
    pub mode: RewardMode,
    pub high_r: f64,
    pub fail_r: f64,
    pub std_r: f64,
}

/// Uniform draw over the `b^d` end states.
pub fn draw_goal<R: Rng + ?Sized>(shape: &GraphShape, rng: &mut R) -> Vec<u32> {
    (0..shape.depth()).map(|_| rng.gen_range(1..=shape.branching())).collect()
}

impl TaskSpec {
    pub fn validate(&self, shape: &GraphShape) -> Result<(), RewardError> {
        if self.goal.len() != shape.depth() as usize {
            return Err(RewardError::GoalLength { got: self.goal.len(), expected: shape.depth() as usize });
        }
        if let Some(&bad) = self.goal.iter().find(|&&a| a < 1 || a > shape.branching()) {
            return Err(RewardError::GoalEntry(bad));
        }
        if !(self.std_r >= 0.0 && self.std_r.is_finite()) {
            return Err(RewardError::StdDev(self.std_r));
        }
        Ok(())
    }

    fn check_trace(&self, trace: &[u32]) -> Result<(), RewardError> {
        if trace.len() != self.goal.len() {
            return Err(RewardError::IncompleteTrace { got: trace.len(), expected: self.goal.len() });
        }
        Ok(())
    }

    pub fn needle_reward(&self, trace: &[u32]) -> Result<f64, RewardError> {
        self.check_trace(trace)?;
        Ok(if trace == self.goal.as_slice() { self.high_r } else { 0.0 })
    }

    /// Closeness `c` in `[0, 1]`: one minus the place-weighted deviation from
    /// the goal (weights `b^{d-1} .. b^0`) over its maximum `b^d - 1`.
    pub fn closeness(&self, trace: &[u32], b: u32) -> Result<f64, RewardError> {
        self.check_trace(trace)?;
        let b = b as f64;
        let d = self.goal.len() as i32;
        let deviation: f64 = self
            .goal
            .iter()
            .zip(trace)
            .enumerate()
            .map(|(i, (&g, &t))| (g as f64 - t as f64).abs() * b.powi(d - 1 - i as i32))
            .sum();
        Ok(1.0 - deviation / (b.powi(d) - 1.0))
    }

    pub fn gradient_reward(&self, trace: &[u32], b: u32) -> Result<f64, RewardError> {
        Ok(self.high_r * self.closeness(trace, b)?)
    }

    /// Gaussian around the gradient reward; negative samples are kept.
    pub fn stochastic_reward<R: Rng + ?Sized>(&self, trace: &[u32], b: u32, rng: &mut R) -> Result<f64, RewardError> {
        let mean = self.gradient_reward(trace, b)?;
        if self.std_r == 0.0 {
            return Ok(mean);
        }
        let normal = Normal::new(mean, self.std_r).map_err(|_| RewardError::StdDev(self.std_r))?;
        Ok(normal.sample(rng))
    }

    /// Reward for entering the end state reached by `trace`, under this task's mode.
    pub fn end_reward<R: Rng + ?Sized>(&self, trace: &[u32], b: u32, rng: &mut R) -> Result<f64, RewardError> {
        match self.mode {
            RewardMode::Needle => self.needle_reward(trace),
            RewardMode::Gradient => self.gradient_reward(trace, b),
            RewardMode::Stochastic => self.stochastic_reward(trace, b, rng),
        }
    }
}

/// Every decision sequence of length `d`, in mixed-radix order.
pub fn all_traces(b: u32, d: u32) -> impl Iterator<Item = Vec<u32>> {
    let total = (b as u64).pow(d);
    (0..total).map(move |mut rank| {
        let mut path = vec![0u32; d as usize];
        for slot in path.iter_mut().rev() {
            *slot = (rank % b as u64) as u32 + 1;
            rank /= b as u64;
        }
        path
    })
}

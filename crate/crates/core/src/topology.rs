//! Tree layout, canonical state identities and state-counting.
//!
//! A graph of branching `b` and depth `d` is laid out level by level. Each
//! level `k` in `0..=d` holds `b^k` wait states; levels `0..d` additionally
//! hold `b^k` decision states and level `d` holds the `b^d` end states. Home
//! and fail sit outside the levels. States are addressed by their kind and
//! branch path, so a cursor needs `O(d)` memory no matter how large the graph
//! is; the dense index is only used by tabular agents and enumeration.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("branching factor must be >= 2, got {0}")]
    Branching(u32),
    #[error("depth must be >= 1, got {0}")]
    Depth(u32),
    #[error("wait probability must lie in [0, 1), got {0}")]
    WaitProbability(f64),
    #[error("state count for b={b}, d={d} overflows a 64-bit integer")]
    Overflow { b: u32, d: u32 },
    #[error("graph has {count} states, exceeding the enumeration budget of {budget}")]
    BudgetExceeded { count: u64, budget: u64 },
    #[error("state index {index} out of range for a graph with {count} states")]
    IndexOutOfRange { index: u64, count: u64 },
    #[error("invalid state identity: {0}")]
    InvalidState(String),
}

/// Branching factor, depth and wait-stay probability of a graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphShape {
    b: u32,
    d: u32,
    p: f64,
}

impl GraphShape {
    pub fn new(b: u32, d: u32, p: f64) -> Result<Self, TopologyError> {
        if b < 2 {
            return Err(TopologyError::Branching(b));
        }
        if d < 1 {
            return Err(TopologyError::Depth(d));
        }
        if !(0.0..1.0).contains(&p) {
            return Err(TopologyError::WaitProbability(p));
        }
        Ok(Self { b, d, p })
    }

    pub fn branching(&self) -> u32 {
        self.b
    }

    pub fn depth(&self) -> u32 {
        self.d
    }

    pub fn wait_probability(&self) -> f64 {
        self.p
    }

    /// Number of actions available everywhere: the wait action plus `b` decisions.
    pub fn action_count(&self) -> u32 {
        self.b + 1
    }

    fn pow(&self, exp: u32) -> Result<u64, TopologyError> {
        (self.b as u64)
            .checked_pow(exp)
            .ok_or(TopologyError::Overflow { b: self.b, d: self.d })
    }

    /// `sum_{x=0}^{k-1} b^x`, the number of nodes in levels `0..k`.
    fn geometric_sum(&self, k: u32) -> Result<u64, TopologyError> {
        let mut total: u64 = 0;
        for x in 0..k {
            total = total
                .checked_add(self.pow(x)?)
                .ok_or(TopologyError::Overflow { b: self.b, d: self.d })?;
        }
        Ok(total)
    }
}

pub fn count_end_states(shape: &GraphShape) -> Result<u64, TopologyError> {
    shape.pow(shape.d)
}

pub fn count_wait_states(shape: &GraphShape) -> Result<u64, TopologyError> {
    shape.geometric_sum(shape.d + 1)
}

pub fn count_decision_states(shape: &GraphShape) -> Result<u64, TopologyError> {
    shape.geometric_sum(shape.d)
}

/// Number of wait (equivalently decision) nodes on the levels above `level`.
pub fn nodes_above(shape: &GraphShape, level: u32) -> Result<u64, TopologyError> {
    shape.geometric_sum(level)
}

/// Total number of states: `2 * sum_{x=0}^{d} b^x + 2`.
pub fn count_states(shape: &GraphShape) -> Result<u64, TopologyError> {
    let overflow = TopologyError::Overflow { b: shape.b, d: shape.d };
    count_wait_states(shape)?
        .checked_mul(2)
        .and_then(|n| n.checked_add(2))
        .ok_or(overflow)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Home,
    Wait,
    Decision,
    End,
    Fail,
}

impl StateKind {
    pub fn is_terminal(self) -> bool {
        matches!(self, StateKind::End | StateKind::Fail)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StateKind::Home => "home",
            StateKind::Wait => "wait",
            StateKind::Decision => "decision",
            StateKind::End => "end",
            StateKind::Fail => "fail",
        }
    }
}

impl fmt::Display for StateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A state addressed by kind and the branch choices (each in `1..=b`) that lead to it.
///
/// The depth of wait, decision and end states is the length of their path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateId {
    kind: StateKind,
    path: Vec<u32>,
}

impl StateId {
    pub fn home() -> Self {
        Self { kind: StateKind::Home, path: Vec::new() }
    }

    pub fn fail() -> Self {
        Self { kind: StateKind::Fail, path: Vec::new() }
    }

    /// Checked constructor for arbitrary states of `shape`.
    pub fn new(kind: StateKind, path: Vec<u32>, shape: &GraphShape) -> Result<Self, TopologyError> {
        let id = Self { kind, path };
        id.check(shape)?;
        Ok(id)
    }

    pub(crate) fn set_kind(&mut self, kind: StateKind) {
        self.kind = kind;
    }

    pub(crate) fn push_branch(&mut self, branch: u32) {
        self.path.push(branch);
    }

    pub(crate) fn reset_to(&mut self, kind: StateKind) {
        self.kind = kind;
        self.path.clear();
    }

    pub fn kind(&self) -> StateKind {
        self.kind
    }

    pub fn path(&self) -> &[u32] {
        &self.path
    }

    pub fn depth(&self) -> u32 {
        self.path.len() as u32
    }

    fn check(&self, shape: &GraphShape) -> Result<(), TopologyError> {
        let len = self.path.len() as u32;
        let ok_len = match self.kind {
            StateKind::Home | StateKind::Fail => len == 0,
            StateKind::Wait => len <= shape.d,
            StateKind::Decision => len < shape.d,
            StateKind::End => len == shape.d,
        };
        if !ok_len {
            return Err(TopologyError::InvalidState(format!(
                "{} state with path length {} in a depth-{} graph",
                self.kind, len, shape.d
            )));
        }
        if let Some(bad) = self.path.iter().find(|&&c| c < 1 || c > shape.b) {
            return Err(TopologyError::InvalidState(format!(
                "branch {} outside [1, {}]",
                bad, shape.b
            )));
        }
        Ok(())
    }

    /// Mixed-radix rank of the path among all paths of the same length,
    /// most significant choice first.
    pub fn path_rank(&self, b: u32) -> u64 {
        self.path
            .iter()
            .fold(0u64, |acc, &c| acc * b as u64 + (c as u64 - 1))
    }

    /// Dense canonical index in `0..count_states(shape)`.
    ///
    /// Order: home, then for each level its wait states, decision states
    /// (or end states on the last level), then fail.
    pub fn index(&self, shape: &GraphShape) -> Result<u64, TopologyError> {
        self.check(shape)?;
        let level = self.depth();
        let rank = self.path_rank(shape.b);
        // 1 + 2 * sum_{j<level} b^j is where the level starts.
        let level_start = || -> Result<u64, TopologyError> {
            Ok(1 + 2 * shape.geometric_sum(level)?)
        };
        Ok(match self.kind {
            StateKind::Home => 0,
            StateKind::Wait => level_start()? + rank,
            StateKind::Decision | StateKind::End => level_start()? + shape.pow(level)? + rank,
            StateKind::Fail => count_states(shape)? - 1,
        })
    }

    pub fn from_index(index: u64, shape: &GraphShape) -> Result<Self, TopologyError> {
        let count = count_states(shape)?;
        if index >= count {
            return Err(TopologyError::IndexOutOfRange { index, count });
        }
        if index == 0 {
            return Ok(Self::home());
        }
        if index == count - 1 {
            return Ok(Self::fail());
        }
        let mut offset = index - 1;
        for level in 0..=shape.d {
            let width = shape.pow(level)?;
            let (kind, rank) = if offset < width {
                (StateKind::Wait, offset)
            } else if offset < 2 * width {
                let kind = if level == shape.d { StateKind::End } else { StateKind::Decision };
                (kind, offset - width)
            } else {
                offset -= 2 * width;
                continue;
            };
            return Ok(Self { kind, path: unrank_path(rank, level, shape.b) });
        }
        unreachable!("index {index} below count {count} must land on a level")
    }
}

fn unrank_path(mut rank: u64, len: u32, b: u32) -> Vec<u32> {
    let mut path = vec![0u32; len as usize];
    for slot in path.iter_mut().rev() {
        *slot = (rank % b as u64) as u32 + 1;
        rank /= b as u64;
    }
    path
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        if !self.path.is_empty() {
            write!(f, "{:?}", self.path)?;
        } else if matches!(self.kind, StateKind::Wait | StateKind::Decision) {
            f.write_str("@0")?;
        }
        Ok(())
    }
}

/// Lazily yields every state of the graph in canonical order.
///
/// Fails up front when the graph holds more than `budget` states.
pub fn enumerate_states(
    shape: &GraphShape,
    budget: u64,
) -> Result<impl Iterator<Item = StateId> + '_, TopologyError> {
    let count = count_states(shape)?;
    if count > budget {
        return Err(TopologyError::BudgetExceeded { count, budget });
    }
    Ok((0..count).map(move |i| StateId::from_index(i, shape).expect("index below count")))
}

//! Reference policies (random, navigation, optimal) and a tabular Q-learner.

use std::collections::HashMap;
use std::io::{self, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dynamics::{run_episode_summary, Action, Env, EnvError, Policy, DEFAULT_STEP_CAP};
use crate::observations::{Observation, Payload};
use crate::rewards::TaskSpec;
use crate::rng;
use crate::topology::{StateId, StateKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("no action is defined in terminal state {0}")]
    Terminal(StateKind),
    #[error("decision index {index} is past the goal of length {len}")]
    DecisionIndex { index: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Random,
    NavigationOracle,
    OptimalOracle,
    TabularQ,
}

pub fn act_random<R: Rng + ?Sized>(b: u32, rng: &mut R) -> Action {
    Action(rng.gen_range(0..=b))
}

/// Never fails: waits outside decision states, picks a random branch inside them.
pub fn act_navigation<R: Rng + ?Sized>(kind: StateKind, b: u32, rng: &mut R) -> Result<Action, AgentError> {
    match kind {
        StateKind::Home | StateKind::Wait => Ok(Action::WAIT),
        StateKind::Decision => Ok(Action(rng.gen_range(1..=b))),
        terminal => Err(AgentError::Terminal(terminal)),
    }
}

/// Navigation plus the goal's branch at the `decision_index`-th decision state.
pub fn act_optimal(kind: StateKind, decision_index: usize, task: &TaskSpec) -> Result<Action, AgentError> {
    match kind {
        StateKind::Home | StateKind::Wait => Ok(Action::WAIT),
        StateKind::Decision => task
            .goal
            .get(decision_index)
            .map(|&a| Action(a))
            .ok_or(AgentError::DecisionIndex { index: decision_index, len: task.goal.len() }),
        terminal => Err(AgentError::Terminal(terminal)),
    }
}

#[derive(Debug, Clone)]
pub struct RandomPolicy {
    b: u32,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(b: u32, seed: u64, shard: u64) -> Self {
        Self { b, rng: rng::substream(seed, rng::POLICY, shard) }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _observation: &Observation, _state: &StateId) -> Action {
        act_random(self.b, &mut self.rng)
    }
}

#[derive(Debug, Clone)]
pub struct NavigationOracle {
    b: u32,
    rng: ChaCha8Rng,
}

impl NavigationOracle {
    pub fn new(b: u32, seed: u64, shard: u64) -> Self {
        Self { b, rng: rng::substream(seed, rng::POLICY, shard) }
    }
}

impl Policy for NavigationOracle {
    fn act(&mut self, _observation: &Observation, state: &StateId) -> Action {
        act_navigation(state.kind(), self.b, &mut self.rng).expect("not asked to act in terminal states")
    }
}

#[derive(Debug, Clone)]
pub struct OptimalOracle {
    task: TaskSpec,
}

impl OptimalOracle {
    pub fn new(task: TaskSpec) -> Self {
        Self { task }
    }

    /// Retargets the oracle to a different end state.
    pub fn set_goal(&mut self, goal: Vec<u32>) {
        self.task.goal = goal;
    }
}

impl Policy for OptimalOracle {
    fn act(&mut self, _observation: &Observation, state: &StateId) -> Action {
        // A decision state's depth is the number of decisions already taken.
        act_optimal(state.kind(), state.depth() as usize, &self.task).expect("depth below goal length")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QHyperParams {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the episodes over which epsilon decays linearly.
    pub decay_fraction: f64,
    /// Final episodes run greedily (epsilon 0) while still updating.
    pub greedy_tail: usize,
}

impl Default for QHyperParams {
    fn default() -> Self {
        Self { alpha: 0.1, gamma: 0.95, epsilon_start: 1.0, epsilon_end: 0.05, decay_fraction: 0.5, greedy_tail: 100 }
    }
}

impl QHyperParams {
    pub fn epsilon(&self, episode: usize, episodes: usize) -> f64 {
        if episode + self.greedy_tail >= episodes {
            return 0.0;
        }
        let horizon = self.decay_fraction * episodes as f64;
        let t = if horizon > 0.0 { (episode as f64 / horizon).min(1.0) } else { 1.0 };
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * t
    }
}

/// Action values keyed by observation: the one-hot index in 1D mode, the
/// class label otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    actions: u32,
    values: HashMap<u64, Vec<f64>>,
}

impl QTable {
    pub fn new(actions: u32) -> Self {
        Self { actions, values: HashMap::new() }
    }

    pub fn key(observation: &Observation) -> u64 {
        match observation.payload {
            Payload::OneHot { index, .. } => index,
            _ => observation.class_id as u64,
        }
    }

    pub fn values(&self, key: u64) -> Option<&[f64]> {
        self.values.get(&key).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn row_mut(&mut self, key: u64) -> &mut Vec<f64> {
        let actions = self.actions as usize;
        self.values.entry(key).or_insert_with(|| vec![0.0; actions])
    }

    pub fn max_value(&self, key: u64) -> f64 {
        self.values(key).map_or(0.0, |row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Highest-valued action, ties broken uniformly.
    pub fn greedy<R: Rng + ?Sized>(&self, key: u64, rng: &mut R) -> Action {
        let Some(row) = self.values(key) else {
            return Action(rng.gen_range(0..self.actions));
        };
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<u32> = (0..self.actions).filter(|&a| row[a as usize] == best).collect();
        Action(ties[rng.gen_range(0..ties.len())])
    }
}

/// Epsilon-greedy one-step Q-learning.
#[derive(Debug, Clone)]
pub struct QLearner {
    pub table: QTable,
    pub hyper: QHyperParams,
    pub epsilon: f64,
    rng: ChaCha8Rng,
    last_key: u64,
}

impl QLearner {
    pub fn new(actions: u32, hyper: QHyperParams, seed: u64) -> Self {
        Self {
            table: QTable::new(actions),
            hyper,
            epsilon: hyper.epsilon_start,
            rng: rng::substream(seed, rng::POLICY, 0),
            last_key: 0,
        }
    }
}

impl Policy for QLearner {
    fn act(&mut self, observation: &Observation, _state: &StateId) -> Action {
        self.last_key = QTable::key(observation);
        if self.rng.gen::<f64>() < self.epsilon {
            Action(self.rng.gen_range(0..self.table.actions))
        } else {
            self.table.greedy(self.last_key, &mut self.rng)
        }
    }

    fn observe(&mut self, action: Action, reward: f64, next: &Observation, done: bool) {
        let bootstrap = if done { 0.0 } else { self.hyper.gamma * self.table.max_value(QTable::key(next)) };
        let alpha = self.hyper.alpha;
        let q = &mut self.table.row_mut(self.last_key)[action.0 as usize];
        *q += alpha * (reward + bootstrap - *q);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub episode: usize,
    pub total_return: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct QLearnReport {
    pub table: QTable,
    pub curve: Vec<CurvePoint>,
    /// False when observations do not identify states; convergence is then not expected.
    pub fully_observable: bool,
}

impl QLearnReport {
    /// Mean return over the last `n` episodes.
    pub fn tail_mean(&self, n: usize) -> f64 {
        let tail = &self.curve[self.curve.len().saturating_sub(n)..];
        tail.iter().map(|c| c.total_return).sum::<f64>() / tail.len().max(1) as f64
    }

    pub fn write_curve_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "episode,return,epsilon")?;
        for c in &self.curve {
            writeln!(out, "{},{},{}", c.episode, c.total_return, c.epsilon)?;
        }
        Ok(())
    }
}

/// Trains a fresh Q-table on `env` for `episodes` episodes.
pub fn q_learn(env: &mut Env, episodes: usize, hyper: QHyperParams, seed: u64) -> Result<QLearnReport, EnvError> {
    let cfg = env.model().config();
    let fully_observable = cfg.one_d || (cfg.mdp_d && cfg.mdp_w);
    let mut learner = QLearner::new(env.action_count(), hyper, seed);
    let mut curve = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        learner.epsilon = hyper.epsilon(episode, episodes);
        let summary = run_episode_summary(env, &mut learner, DEFAULT_STEP_CAP)?;
        curve.push(CurvePoint { episode, total_return: summary.total_return, epsilon: learner.epsilon });
    }
    Ok(QLearnReport { table: learner.table, curve, fully_observable })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset;
    use crate::dynamics::run_episode;
    use crate::rewards::RewardMode;

    fn env(name: &str, goal: Vec<u32>, p: Option<f64>) -> Env {
        let mut spec = preset(name).unwrap();
        spec.reward.goal = Some(goal);
        if let Some(p) = p {
            spec.graph_shape.p = p;
        }
        let mut env = Env::new(&spec).unwrap();
        env.set_rendering(false);
        env
    }

    #[test]
    fn random_actions_are_uniform() {
        let mut rng = rng::substream(5, rng::POLICY, 0);
        let mut counts = [0u32; 3];
        for _ in 0..100_000 {
            counts[act_random(2, &mut rng).0 as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e5 - 1.0 / 3.0).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn oracle_contracts() {
        let mut rng = rng::substream(5, rng::POLICY, 0);
        assert_eq!(act_navigation(StateKind::Wait, 2, &mut rng), Ok(Action::WAIT));
        assert_eq!(act_navigation(StateKind::End, 2, &mut rng), Err(AgentError::Terminal(StateKind::End)));
        let task = TaskSpec { goal: vec![2, 1], mode: RewardMode::Needle, high_r: 1.0, fail_r: 0.0, std_r: 0.0 };
        assert_eq!(act_optimal(StateKind::Decision, 0, &task), Ok(Action(2)));
        assert_eq!(act_optimal(StateKind::Decision, 1, &task), Ok(Action(1)));
        assert_eq!(act_optimal(StateKind::Home, 9, &task), Ok(Action::WAIT));
        assert!(act_optimal(StateKind::Decision, 2, &task).is_err());
        assert!(act_optimal(StateKind::Fail, 0, &task).is_err());
    }

    #[test]
    fn navigation_never_fails() {
        let mut e = env("CT-FO-B2", vec![1, 2, 1], None);
        let mut nav = NavigationOracle::new(2, 1, 0);
        let mut hits = 0;
        for _ in 0..20_000 {
            let s = run_episode_summary(&mut e, &mut nav, DEFAULT_STEP_CAP).unwrap();
            assert_eq!(s.final_state.kind(), StateKind::End);
            if s.total_return > 0.0 {
                hits += 1;
            }
        }
        // 1/8 of 20000 = 2500, sd ~47.
        assert!((2300..=2700).contains(&hits), "{hits}");
    }

    #[test]
    fn optimal_follows_goal_with_minimal_length() {
        let mut e = env("CT-FO-B2", vec![2, 1, 2], Some(0.0));
        let mut opt = OptimalOracle::new(e.task().clone());
        for _ in 0..10 {
            let t = run_episode(&mut e, &mut opt, DEFAULT_STEP_CAP).unwrap();
            assert_eq!(t.len(), 8);
            assert_eq!(t.total_return(), 1.0);
            assert_eq!(e.decision_trace().as_slice(), &[2, 1, 2]);
        }
    }

    #[test]
    fn epsilon_schedule() {
        let h = QHyperParams::default();
        assert_eq!(h.epsilon(0, 1000), 1.0);
        assert!((h.epsilon(250, 1000) - 0.525).abs() < 1e-12);
        assert!((h.epsilon(500, 1000) - 0.05).abs() < 1e-12);
        assert!((h.epsilon(899, 1000) - 0.05).abs() < 1e-12);
        assert_eq!(h.epsilon(900, 1000), 0.0);
    }

    #[test]
    fn zero_discount_learns_nothing_before_the_end() {
        let mut e = env("CT-FO-B1", vec![1, 1], None);
        let hyper = QHyperParams { gamma: 0.0, ..QHyperParams::default() };
        let report = q_learn(&mut e, 2000, hyper, 3).unwrap();
        // Only the last wait states (one step from an end) ever see a nonzero target.
        let last_waits = [8u64, 9, 10, 11];
        for (&key, row) in &report.table.values {
            if !last_waits.contains(&key) {
                assert!(row.iter().all(|&v| v == 0.0), "key {key}: {row:?}");
            }
        }
    }

    #[test]
    fn learns_fully_observable_baseline() {
        let mut e = env("CT-FO-B1", vec![2, 1], None);
        let report = q_learn(&mut e, 3000, QHyperParams::default(), 11).unwrap();
        assert!(report.fully_observable);
        assert!(report.tail_mean(100) >= 0.95, "{}", report.tail_mean(100));
        let mut buf = Vec::new();
        report.write_curve_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("episode,return,epsilon\n0,"));
        assert_eq!(text.lines().count(), 3001);
    }
}

//! Monte Carlo estimators for the closed forms in [`crate::analytics`].
//!
//! Episodes are split over a fixed number of shards, each with streams
//! derived from `(seed, shard)`, and merged in shard order. Results therefore
//! do not depend on how many worker threads run the shards.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::agents::{NavigationOracle, OptimalOracle, RandomPolicy};
use crate::analytics::{self, AnalyticsError};
use crate::config::{ConfigError, GraphSpec};
use crate::dynamics::{run_episode_summary, Env, EnvError, DEFAULT_STEP_CAP};
use crate::rewards::{RewardMode, TaskSpec};
use crate::rng::{self, RngStreams};
use crate::topology::{self, StateKind};

pub const SHARDS: u64 = 64;

/// Largest end-state count the kappa search will enumerate.
pub const KAPPA_MAX_END_STATES: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McQuantity {
    /// Random policy reaches the goal end state.
    RewardProbability,
    /// Random policy reaches any end state.
    EndProbability,
    /// Episode length under the navigation oracle.
    MeanLength,
    /// Episodes an exhaustive without-replacement search needs to find the goal.
    Kappa,
}

impl McQuantity {
    pub fn name(self) -> &'static str {
        match self {
            McQuantity::RewardProbability => "P_R",
            McQuantity::EndProbability => "P_E",
            McQuantity::MeanLength => "rho_mean",
            McQuantity::Kappa => "kappa",
        }
    }

    fn is_proportion(self) -> bool {
        matches!(self, McQuantity::RewardProbability | McQuantity::EndProbability)
    }

    /// The closed-form value this quantity estimates.
    pub fn closed_form(self, spec: &GraphSpec) -> Result<f64, EnvError> {
        let shape = spec.shape()?;
        let (b, d, p) = (shape.branching(), shape.depth(), shape.wait_probability());
        let value = match self {
            McQuantity::RewardProbability => analytics::p_random_reward(b, d, p),
            McQuantity::EndProbability => analytics::p_any_end(b, d, p),
            McQuantity::MeanLength => analytics::expected_rho(d, p),
            McQuantity::Kappa => Ok(analytics::expected_kappa(b, d)),
        };
        Ok(value.expect("shape validated p"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub quantity: McQuantity,
    pub estimate: f64,
    /// Binomial error for proportions, sample standard error for means.
    pub std_error: f64,
    pub samples: u64,
    /// Episodes cut off by the step cap; nonzero means the estimate is biased.
    pub truncated: u64,
}

impl McEstimate {
    /// Standardized deviation from `expected`. Proportions use the binomial
    /// error implied by `expected` itself, so a zero estimate of a tiny
    /// probability still gives a finite score.
    pub fn z_score(&self, expected: f64) -> f64 {
        let se = if self.quantity.is_proportion() {
            (expected * (1.0 - expected) / self.samples as f64).sqrt()
        } else {
            self.std_error
        };
        if se == 0.0 {
            if self.estimate == expected {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.estimate - expected) / se
        }
    }

    pub fn is_contaminated(&self) -> bool {
        self.truncated > 0
    }
}

#[derive(Debug, Default, Clone)]
struct Tally {
    episodes: u64,
    goal_hits: u64,
    end_hits: u64,
    sum: f64,
    sum_sq: f64,
    truncated: u64,
    lengths: BTreeMap<u64, u64>,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        self.episodes += other.episodes;
        self.goal_hits += other.goal_hits;
        self.end_hits += other.end_hits;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.truncated += other.truncated;
        for (l, n) in other.lengths {
            *self.lengths.entry(l).or_default() += n;
        }
        self
    }

    fn record(&mut self, value: f64) {
        self.episodes += 1;
        self.sum += value;
        self.sum_sq += value * value;
    }

    fn mean_and_error(&self) -> (f64, f64) {
        let n = self.episodes as f64;
        let mean = self.sum / n;
        if self.episodes < 2 {
            return (mean, 0.0);
        }
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (mean, (var / n).sqrt())
    }
}

fn shard_sizes(total: u64) -> impl Iterator<Item = (u64, u64)> {
    (0..SHARDS).map(move |s| (s, total / SHARDS + u64::from(s < total % SHARDS)))
}

fn run_shards<F>(total: u64, work: F) -> Result<Tally, EnvError>
where
    F: Fn(u64, u64) -> Result<Tally, EnvError> + Sync + Send,
{
    let shards: Vec<(u64, u64)> = shard_sizes(total).filter(|&(_, n)| n > 0).collect();
    #[cfg(feature = "parallel")]
    let results: Vec<Result<Tally, EnvError>> = {
        use rayon::prelude::*;
        shards.par_iter().map(|&(s, n)| work(s, n)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<Tally, EnvError>> = shards.iter().map(|&(s, n)| work(s, n)).collect();
    results.into_iter().try_fold(Tally::default(), |acc, t| Ok(acc.merge(t?)))
}

fn shard_env(base: &Env, seed: u64, shard: u64) -> Result<Env, EnvError> {
    let mut env = Env::from_parts(
        *base.shape(),
        base.model().clone(),
        base.task().clone(),
        RngStreams::for_shard(seed, shard + 1),
    )?;
    env.set_rendering(false);
    Ok(env)
}

fn random_policy_tally(spec: &GraphSpec, episodes: u64, seed: u64) -> Result<Tally, EnvError> {
    let base = Env::new(spec)?;
    let goal = base.task().goal.clone();
    let b = base.shape().branching();
    run_shards(episodes, |shard, n| {
        let mut env = shard_env(&base, seed, shard)?;
        let mut policy = RandomPolicy::new(b, seed, shard);
        let mut tally = Tally::default();
        for _ in 0..n {
            let s = run_episode_summary(&mut env, &mut policy, DEFAULT_STEP_CAP)?;
            tally.episodes += 1;
            tally.truncated += u64::from(s.truncated);
            if s.final_state.kind() == StateKind::End {
                tally.end_hits += 1;
                if s.final_state.path() == goal.as_slice() {
                    tally.goal_hits += 1;
                }
            }
        }
        Ok(tally)
    })
}

fn navigation_tally(spec: &GraphSpec, episodes: u64, seed: u64) -> Result<Tally, EnvError> {
    let base = Env::new(spec)?;
    let b = base.shape().branching();
    run_shards(episodes, |shard, n| {
        let mut env = shard_env(&base, seed, shard)?;
        let mut policy = NavigationOracle::new(b, seed, shard);
        let mut tally = Tally::default();
        for _ in 0..n {
            let s = run_episode_summary(&mut env, &mut policy, DEFAULT_STEP_CAP)?;
            tally.record(s.length as f64);
            tally.truncated += u64::from(s.truncated);
            *tally.lengths.entry(s.length).or_default() += 1;
        }
        Ok(tally)
    })
}

/// Plays needle-reward episodes with the optimal oracle aimed at end states
/// drawn without replacement until the goal pays; records the episode count.
fn kappa_tally(spec: &GraphSpec, trials: u64, seed: u64) -> Result<Tally, EnvError> {
    let base = Env::new(spec)?;
    let shape = *base.shape();
    let ends = topology::count_end_states(&shape).map_err(|e| ConfigError::Invalid { key: "graph_shape".into(), reason: e.to_string() })?;
    if ends > KAPPA_MAX_END_STATES {
        return Err(EnvError::Config(ConfigError::Invalid {
            key: "graph_shape".into(),
            reason: format!("kappa search supports at most {KAPPA_MAX_END_STATES} end states, graph has {ends}"),
        }));
    }
    let b = shape.branching();
    let d = shape.depth();
    run_shards(trials, |shard, n| {
        let mut env = shard_env(&base, seed, shard)?;
        let mut goal_rng = rng::substream(seed, rng::TASK_GEN, shard + 1);
        let mut pick_rng = rng::substream(seed, rng::POLICY, shard);
        let mut tally = Tally::default();
        for _ in 0..n {
            let goal = crate::rewards::draw_goal(&shape, &mut goal_rng);
            let task = TaskSpec { goal: goal.clone(), mode: RewardMode::Needle, high_r: 1.0, fail_r: 0.0, std_r: 0.0 };
            env.set_task(task.clone())?;
            let mut oracle = OptimalOracle::new(task);
            let mut tried = HashSet::new();
            let mut episodes = 0u64;
            loop {
                let rank = loop {
                    let r = pick_rng.gen_range(0..ends);
                    if tried.insert(r) {
                        break r;
                    }
                };
                let mut target = vec![0u32; d as usize];
                let mut rest = rank;
                for slot in target.iter_mut().rev() {
                    *slot = (rest % b as u64) as u32 + 1;
                    rest /= b as u64;
                }
                oracle.set_goal(target);
                let s = run_episode_summary(&mut env, &mut oracle, DEFAULT_STEP_CAP)?;
                tally.truncated += u64::from(s.truncated);
                episodes += 1;
                if s.total_return > 0.0 {
                    break;
                }
            }
            tally.record(episodes as f64);
        }
        Ok(tally)
    })
}

/// Estimates `quantity` from `episodes` episodes (or search trials for kappa).
pub fn mc_estimate(spec: &GraphSpec, quantity: McQuantity, episodes: u64, seed: u64) -> Result<McEstimate, EnvError> {
    assert!(episodes >= 1, "need at least one episode");
    let (estimate, std_error, tally) = match quantity {
        McQuantity::RewardProbability | McQuantity::EndProbability => {
            let t = random_policy_tally(spec, episodes, seed)?;
            let hits = if quantity == McQuantity::RewardProbability { t.goal_hits } else { t.end_hits };
            let phat = hits as f64 / t.episodes as f64;
            (phat, (phat * (1.0 - phat) / t.episodes as f64).sqrt(), t)
        }
        McQuantity::MeanLength => {
            let t = navigation_tally(spec, episodes, seed)?;
            let (m, se) = t.mean_and_error();
            (m, se, t)
        }
        McQuantity::Kappa => {
            let t = kappa_tally(spec, episodes, seed)?;
            let (m, se) = t.mean_and_error();
            (m, se, t)
        }
    };
    Ok(McEstimate { quantity, estimate, std_error, samples: tally.episodes, truncated: tally.truncated })
}

/// Empirical episode lengths under the navigation oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthHistogram {
    pub counts: BTreeMap<u64, u64>,
    pub episodes: u64,
    pub truncated: u64,
}

pub fn mc_length_histogram(spec: &GraphSpec, episodes: u64, seed: u64) -> Result<LengthHistogram, EnvError> {
    let t = navigation_tally(spec, episodes, seed)?;
    Ok(LengthHistogram { counts: t.lengths, episodes: t.episodes, truncated: t.truncated })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: u64,
    pub p_value: f64,
}

impl ChiSquareTest {
    pub fn rejects_at(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Pearson goodness of fit of `hist` against the closed-form length pmf.
///
/// Consecutive lengths are pooled until each bin expects at least
/// `min_expected` episodes; everything beyond the last full bin forms a tail bin.
pub fn chi_square_lengths(
    hist: &LengthHistogram,
    d: u32,
    p: f64,
    min_expected: f64,
) -> Result<ChiSquareTest, AnalyticsError> {
    let n = hist.episodes as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut exp_acc, mut obs_acc, mut mass) = (0.0, 0.0, 0.0);
    let mut length = 2 * (d as u64 + 1);
    while n * (1.0 - mass) >= min_expected {
        let pm = analytics::episode_length_pmf(d, p, length)?;
        mass += pm;
        exp_acc += n * pm;
        obs_acc += *hist.counts.get(&length).unwrap_or(&0) as f64;
        if exp_acc >= min_expected {
            bins.push((obs_acc, exp_acc));
            exp_acc = 0.0;
            obs_acc = 0.0;
        }
        length += 1;
    }
    // Tail: every length not yet binned.
    let tail_obs: f64 = hist.counts.range(length..).map(|(_, &c)| c as f64).sum::<f64>() + obs_acc;
    let tail_exp = (n * (1.0 - mass)).max(0.0) + exp_acc;
    match bins.last_mut() {
        Some(last) if tail_exp < min_expected => {
            last.0 += tail_obs;
            last.1 += tail_exp;
        }
        _ => bins.push((tail_obs, tail_exp)),
    }
    bins.retain(|&(_, e)| e > 0.0);
    let statistic: f64 = bins.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len().saturating_sub(1) as u64;
    let p_value = if dof == 0 {
        if statistic == 0.0 { 1.0 } else { 0.0 }
    } else {
        let dist = ChiSquared::new(dof as f64).expect("positive dof");
        1.0 - dist.cdf(statistic)
    };
    Ok(ChiSquareTest { statistic, dof, p_value })
}

//! Closed-form quantities of a graph.
//!
//! Probabilities are evaluated in log space so that deep graphs (reward
//! probabilities around 1e-23 and below) neither underflow nor lose digits.

use std::fmt::Write as _;

use thiserror::Error;

use crate::topology::{self, GraphShape, TopologyError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("wait probability {0} must lie in [0, 1); episode length diverges at p = 1")]
    Divergent(f64),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

fn check_p(p: f64) -> Result<(), AnalyticsError> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(AnalyticsError::Divergent(p))
    }
}

/// Mean episode length under any non-failing policy: `(d+1)/(1-p) + d + 1`.
pub fn expected_rho(d: u32, p: f64) -> Result<f64, AnalyticsError> {
    check_p(p)?;
    let layers = d as f64 + 1.0;
    Ok(layers / (1.0 - p) + layers)
}

fn ln_p_random_reward(b: u32, d: u32, p: f64) -> f64 {
    let b1 = b as f64 + 1.0;
    (b1).ln() + (d as f64 + 1.0) * ((1.0 - p).ln() - b1.ln() - (b1 - p).ln())
}

/// Probability that a uniformly random policy over the `b + 1` actions
/// reaches one particular end state: `(b+1) * ((1-p) / ((b+1)(b+1-p)))^(d+1)`.
pub fn p_random_reward(b: u32, d: u32, p: f64) -> Result<f64, AnalyticsError> {
    check_p(p)?;
    Ok(ln_p_random_reward(b, d, p).exp())
}

/// Probability that a random policy reaches any end state: `P_R * b^d`.
pub fn p_any_end(b: u32, d: u32, p: f64) -> Result<f64, AnalyticsError> {
    check_p(p)?;
    Ok((ln_p_random_reward(b, d, p) + d as f64 * (b as f64).ln()).exp())
}

/// Goal probability under a navigation policy: `1 / b^d`.
pub fn p_rnp(b: u32, d: u32) -> f64 {
    (-(d as f64) * (b as f64).ln()).exp()
}

/// Mean number of episodes an exhaustive without-replacement search needs: `(b^d + 1) / 2`.
pub fn expected_kappa(b: u32, d: u32) -> f64 {
    ((b as f64).powi(d as i32) + 1.0) / 2.0
}

/// `ln C(n + d, d)`, summed term by term.
fn ln_binomial(n: u64, d: u32) -> f64 {
    (1..=d as u64).map(|i| ((n + i) as f64).ln() - (i as f64).ln()).sum()
}

/// Probability that a non-failing episode lasts exactly `length` steps.
///
/// With `n = length - 2(d+1)` self-transitions spread over the `d + 1` wait
/// layers this is `p^n (1-p)^(d+1) C(n+d, d)`, and 0 below `2(d+1)`.
pub fn episode_length_pmf(d: u32, p: f64, length: u64) -> Result<f64, AnalyticsError> {
    check_p(p)?;
    let min = 2 * (d as u64 + 1);
    if length < min {
        return Ok(0.0);
    }
    let n = length - min;
    if p == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let ln = n as f64 * p.ln() + (d as f64 + 1.0) * (1.0 - p).ln() + ln_binomial(n, d);
    Ok(ln.exp())
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Sums `term(n)` for `n = 0, 1, ...` until the terms are past their peak
/// and below `rel_tol` of the running total.
fn sum_series(mut term: impl FnMut(u64) -> f64, rel_tol: f64) -> f64 {
    let mut acc = CompensatedSum::default();
    let mut prev = 0.0;
    for n in 0.. {
        let t = term(n);
        acc.add(t);
        if t <= prev && t <= rel_tol * acc.value() {
            break;
        }
        prev = t;
    }
    acc.value()
}

/// Random-policy reward probability by summing over episode lengths: each
/// length-`l` trajectory needs `l - 1` specific actions (home accepts any).
/// Converges to [`p_random_reward`].
pub fn p_random_reward_series(b: u32, d: u32, p: f64) -> Result<f64, AnalyticsError> {
    check_p(p)?;
    let min = 2 * (d as u64 + 1);
    let ln_b1 = (b as f64 + 1.0).ln();
    Ok(sum_series(
        |n| {
            let l = min + n;
            let pmf = episode_length_pmf(d, p, l).expect("p checked");
            pmf * (-((l - 1) as f64) * ln_b1).exp()
        },
        1e-16,
    ))
}

/// Total mass of the length distribution, truncated once the tail is below `1e-12`.
pub fn episode_length_total_mass(d: u32, p: f64) -> Result<f64, AnalyticsError> {
    check_p(p)?;
    let min = 2 * (d as u64 + 1);
    Ok(sum_series(|n| episode_length_pmf(d, p, min + n).expect("p checked"), 1e-14))
}

/// Every closed-form quantity of one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphAnalytics {
    pub b: u32,
    pub d: u32,
    pub p: f64,
    pub expected_rho: f64,
    pub p_r: f64,
    pub p_e: f64,
    pub p_rnp: f64,
    pub n_states: u64,
    pub n_end_states: u64,
    pub expected_kappa: f64,
}

pub const ANALYTICS_CSV_HEADER: &str = "b,d,p,expected_rho,p_r,p_e,p_rnp,n_states,n_end_states,expected_kappa";

impl GraphAnalytics {
    pub fn compute(shape: &GraphShape) -> Result<Self, AnalyticsError> {
        let (b, d, p) = (shape.branching(), shape.depth(), shape.wait_probability());
        Ok(Self {
            b,
            d,
            p,
            expected_rho: expected_rho(d, p)?,
            p_r: p_random_reward(b, d, p)?,
            p_e: p_any_end(b, d, p)?,
            p_rnp: p_rnp(b, d),
            n_states: topology::count_states(shape)?,
            n_end_states: topology::count_end_states(shape)?,
            expected_kappa: expected_kappa(b, d),
        })
    }

    /// `key=value` lines, one per field.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "b={}", self.b);
        let _ = writeln!(s, "d={}", self.d);
        let _ = writeln!(s, "p={}", self.p);
        let _ = writeln!(s, "expected_rho={}", self.expected_rho);
        let _ = writeln!(s, "p_r={:.6e}", self.p_r);
        let _ = writeln!(s, "p_e={:.6e}", self.p_e);
        let _ = writeln!(s, "p_rnp={:.6e}", self.p_rnp);
        let _ = writeln!(s, "n_states={}", self.n_states);
        let _ = writeln!(s, "n_end_states={}", self.n_end_states);
        let _ = writeln!(s, "expected_kappa={}", self.expected_kappa);
        s
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6e},{:.6e},{:.6e},{},{},{}",
            self.b,
            self.d,
            self.p,
            self.expected_rho,
            self.p_r,
            self.p_e,
            self.p_rnp,
            self.n_states,
            self.n_end_states,
            self.expected_kappa
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn expected_rho_examples() {
        assert!(close(expected_rho(2, 1.0 - 1e-2).unwrap(), 303.0, 1e-12));
        assert_eq!(expected_rho(2, 0.0).unwrap(), 6.0);
        assert!(close(expected_rho(2, 0.9).unwrap(), 33.0, 1e-12));
        assert_eq!(expected_rho(2, 0.5).unwrap(), 9.0);
        assert_eq!(expected_rho(3, 0.5).unwrap(), 12.0);
        assert_eq!(expected_rho(2, 1.0), Err(AnalyticsError::Divergent(1.0)));
    }

    #[test]
    fn reward_probability_examples() {
        // Direct evaluation of (b+1) * ((1-p)/((b+1)(b+1-p)))^(d+1).
        let direct = |b: f64, d: i32, p: f64| (b + 1.0) * ((1.0 - p) / ((b + 1.0) * (b + 1.0 - p))).powi(d + 1);
        assert!(close(p_random_reward(2, 2, 0.9).unwrap(), 3.0 * (0.1f64 / 6.3).powi(3), 1e-12));
        assert!(close(p_random_reward(2, 2, 0.5).unwrap(), 3.0 / 3375.0, 1e-12));
        assert!(close(p_random_reward(2, 3, 0.5).unwrap(), 1.0 / 16875.0, 1e-12));
        assert!(close(p_random_reward(2, 2, 0.0).unwrap(), 1.0 / 243.0, 1e-12));
        for (b, d, p) in [(2, 1, 0.0), (3, 2, 0.9), (2, 4, 0.9), (3, 10, 0.9)] {
            assert!(close(p_random_reward(b, d, p).unwrap(), direct(b as f64, d as i32, p), 1e-12));
        }
    }

    #[test]
    fn end_probability_examples() {
        assert!(close(p_any_end(2, 1, 0.0).unwrap(), 6.0 / 81.0, 1e-12));
        assert!(close(p_any_end(3, 2, 0.9).unwrap(), 1.888_2e-5, 1e-4));
        assert!(close(p_any_end(2, 16, 0.5).unwrap(), 3.0 * 65536.0 / 15f64.powi(17), 1e-12));
    }

    #[test]
    fn navigation_and_kappa() {
        assert_eq!(p_rnp(2, 4), 1.0 / 16.0);
        assert!(close(p_rnp(3, 10), 1.0 / 59049.0, 1e-14));
        assert_eq!(p_rnp(2, 1), 0.5);
        assert_eq!(expected_kappa(2, 2), 2.5);
        assert_eq!(expected_kappa(2, 1), 1.5);
        assert_eq!(expected_kappa(3, 2), 5.0);
    }

    #[test]
    fn kappa_matches_uniform_position_enumeration() {
        // Mean 1-based position of the goal in a uniformly random order of N items.
        for (b, d) in [(2u32, 1u32), (2, 2), (3, 2), (2, 3)] {
            let n = b.pow(d) as f64;
            let mean: f64 = (1..=b.pow(d)).map(|k| k as f64 / n).sum();
            assert!(close(expected_kappa(b, d), mean, 1e-12));
        }
    }

    #[test]
    fn pmf_examples() {
        assert_eq!(episode_length_pmf(2, 0.0, 6).unwrap(), 1.0);
        assert_eq!(episode_length_pmf(2, 0.0, 7).unwrap(), 0.0);
        assert_eq!(episode_length_pmf(2, 0.0, 5).unwrap(), 0.0);
        assert!(close(episode_length_pmf(2, 0.5, 6).unwrap(), 0.125, 1e-12));
        // n = 1: 0.5 * 0.125 * C(3, 2) = 0.1875
        assert!(close(episode_length_pmf(2, 0.5, 7).unwrap(), 0.1875, 1e-12));
        assert_eq!(episode_length_pmf(2, 0.5, 3).unwrap(), 0.0);
    }

    #[test]
    fn pmf_normalizes() {
        for (d, p) in [(1, 0.0), (2, 0.5), (2, 0.9), (4, 0.9), (10, 0.9), (16, 0.5), (2, 0.99)] {
            let mass = episode_length_total_mass(d, p).unwrap();
            assert!((mass - 1.0).abs() < 1e-10, "d={d} p={p} mass={mass}");
        }
    }

    #[test]
    fn pmf_mean_matches_expected_rho() {
        let (d, p) = (2u32, 0.9);
        let mut mean = CompensatedSum::default();
        for l in 0..5000u64 {
            mean.add(l as f64 * episode_length_pmf(d, p, l).unwrap());
        }
        assert!(close(mean.value(), expected_rho(d, p).unwrap(), 1e-9));
    }

    #[test]
    fn large_lengths_do_not_overflow() {
        let v = episode_length_pmf(16, 0.99, 100_000).unwrap();
        assert!(v.is_finite() && v >= 0.0);
    }

    #[test]
    fn series_matches_closed_form() {
        for (b, d, p) in [(2, 1, 0.0), (2, 2, 0.9), (3, 2, 0.9), (2, 4, 0.9), (3, 10, 0.9), (2, 16, 0.5), (2, 2, 0.5)] {
            let closed = p_random_reward(b, d, p).unwrap();
            let series = p_random_reward_series(b, d, p).unwrap();
            assert!(((series - closed) / closed).abs() < 1e-12, "b={b} d={d} p={p}");
        }
    }

    #[test]
    fn reward_probability_decreases_in_each_parameter() {
        let pr = |b, d, p| p_random_reward(b, d, p).unwrap();
        for b in 2..6 {
            for d in 1..6 {
                for p in [0.0, 0.3, 0.6, 0.9] {
                    assert!(pr(b + 1, d, p) < pr(b, d, p));
                    assert!(pr(b, d + 1, p) < pr(b, d, p));
                    assert!(pr(b, d, p + 0.05) < pr(b, d, p));
                }
            }
        }
    }

    #[test]
    fn analytics_block() {
        let a = GraphAnalytics::compute(&GraphShape::new(2, 16, 0.5).unwrap()).unwrap();
        assert!(a.p_r <= a.p_e && a.p_e <= 1.0);
        assert!(close(a.p_e, a.p_r * 65536.0, 1e-12));
        let kv = a.to_key_value();
        assert!(kv.contains("p_e=1.995491e-15\n"), "{kv}");
        assert!(kv.contains("n_states=262144\n"));
        assert_eq!(a.to_csv_row().split(',').count(), ANALYTICS_CSV_HEADER.split(',').count());
    }
}

//! Finite MDPs, stationary policies, exact policy evaluation and the
//! one-step Bellman operators.

use std::ops::Index;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, argmax, Matrix, Vector};

/// Probability rows must sum to one within this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// A finite discounted MDP `(S, A, P, r, γ)`.
///
/// Transitions are stored densely as `P[s][a][s']` and rewards as `r[s][a]`.
/// `r_max = max |r(s,a)|` is computed once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
    gamma: f64,
    r_max: f64,
}

impl Mdp {
    /// Builds an MDP from nested `rewards[s][a]` and `transitions[s][a][s']`.
    pub fn new(gamma: f64, rewards: Vec<Vec<f64>>, transitions: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n_states = rewards.len();
        let n_actions = rewards.first().map_or(0, Vec::len);
        check_dim("transition state count", n_states, transitions.len())?;
        let mut flat_r = Vec::with_capacity(n_states * n_actions);
        let mut flat_p = Vec::with_capacity(n_states * n_actions * n_states);
        for (s, (r_row, p_rows)) in rewards.into_iter().zip(transitions).enumerate() {
            if r_row.len() != n_actions {
                return Err(Error::InvalidMdp(format!(
                    "rewards[{s}] has {} actions, expected {n_actions}",
                    r_row.len()
                )));
            }
            if p_rows.len() != n_actions {
                return Err(Error::InvalidMdp(format!(
                    "transitions[{s}] has {} actions, expected {n_actions}",
                    p_rows.len()
                )));
            }
            flat_r.extend(r_row);
            for (a, row) in p_rows.into_iter().enumerate() {
                if row.len() != n_states {
                    return Err(Error::InvalidMdp(format!(
                        "transitions[{s}][{a}] has length {}, expected {n_states}",
                        row.len()
                    )));
                }
                flat_p.extend(row);
            }
        }
        Self::from_flat(n_states, n_actions, gamma, flat_r, flat_p)
    }

    /// Builds an MDP from row-major flat tables.
    pub fn from_flat(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        rewards: Vec<f64>,
        transitions: Vec<f64>,
    ) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidMdp(format!("gamma must lie in (0,1), got {gamma}")));
        }
        Self::build(n_states, n_actions, gamma, rewards, transitions)
    }

    /// Same validation as [`Mdp::from_flat`] but with the discount relaxed to
    /// `[0, 1)`. Used for the κγ-discounted surrogate problems.
    pub(crate) fn with_relaxed_discount(
        n_states: usize,
        n_actions: usize,
        discount: f64,
        rewards: Vec<f64>,
        transitions: Vec<f64>,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidMdp(format!(
                "surrogate discount must lie in [0,1), got {discount}"
            )));
        }
        Self::build(n_states, n_actions, discount, rewards, transitions)
    }

    fn build(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        rewards: Vec<f64>,
        transitions: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidMdp("need at least one state and one action".into()));
        }
        check_dim("reward table size", n_states * n_actions, rewards.len())?;
        check_dim("transition tensor size", n_states * n_actions * n_states, transitions.len())?;
        for s in 0..n_states {
            for a in 0..n_actions {
                let r = rewards[s * n_actions + a];
                if !r.is_finite() {
                    return Err(Error::InvalidMdp(format!("reward at state {s}, action {a} is not finite")));
                }
                let start = (s * n_actions + a) * n_states;
                let row = &transitions[start..start + n_states];
                if let Some(sp) = row.iter().position(|&p| !(p >= 0.0) || !p.is_finite()) {
                    return Err(Error::InvalidMdp(format!(
                        "transition row at state {s}, action {a} has invalid entry {} at next state {sp}",
                        row[sp]
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::InvalidMdp(format!(
                        "transition row at state {s}, action {a} sums to {sum}, not 1"
                    )));
                }
            }
        }
        let r_max = rewards.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            gamma,
            r_max,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    /// Next-state distribution `P(·|s,a)`.
    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    pub fn rewards_flat(&self) -> &[f64] {
        &self.rewards
    }

    pub fn transitions_flat(&self) -> &[f64] {
        &self.transitions
    }

    /// `Σ_{s'} P(s'|s,a) v(s')`.
    pub fn expected_next(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        self.transition(s, a).iter().zip(v).map(|(p, x)| p * x).sum()
    }

    /// The state kernel `P^π` as a dense matrix.
    pub fn policy_kernel(&self, pi: &Policy) -> Matrix {
        let n = self.n_states;
        let mut k = Matrix::zeros(n, n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let w = pi.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for (sp, p) in self.transition(s, a).iter().enumerate() {
                    k[(s, sp)] += w * p;
                }
            }
        }
        k
    }

    /// The reward vector `r^π`.
    pub fn policy_reward(&self, pi: &Policy) -> Vector {
        Vector::from_iterator(
            self.n_states,
            (0..self.n_states).map(|s| (0..self.n_actions).map(|a| pi.prob(s, a) * self.reward(s, a)).sum()),
        )
    }

    pub(crate) fn check_policy(&self, pi: &Policy) -> Result<()> {
        check_dim("policy state count", self.n_states, pi.n_states())?;
        check_dim("policy action count", self.n_actions, pi.n_actions())
    }

    pub(crate) fn check_value(&self, v: &ValueFunction) -> Result<()> {
        check_dim("value function length", self.n_states, v.len())
    }

    pub(crate) fn check_q(&self, q: &QFunction) -> Result<()> {
        check_dim("q-function state count", self.n_states, q.n_states())?;
        check_dim("q-function action count", self.n_actions, q.n_actions())
    }

    pub(crate) fn check_distribution(&self, d: &StateDistribution) -> Result<()> {
        check_dim("distribution length", self.n_states, d.len())
    }
}

/// A stationary, possibly stochastic, policy `π(a|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for (s, row) in rows.into_iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::invalid(format!("policy row {s} has {} actions, expected {n_actions}", row.len())));
            }
            probs.extend(row);
        }
        Self::from_flat(n_states, n_actions, probs)
    }

    pub fn from_flat(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::invalid("policy needs at least one state and one action"));
        }
        check_dim("policy table size", n_states * n_actions, probs.len())?;
        for s in 0..n_states {
            let row = &probs[s * n_actions..(s + 1) * n_actions];
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::invalid(format!("policy row {s} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::invalid(format!("policy row {s} sums to {sum}, not 1")));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    /// One-hot policy choosing `actions[s]` in state `s`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::invalid(format!("action {a} at state {s} out of range")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Self::from_flat(actions.len(), n_actions, probs)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub(crate) fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn probs_flat(&self) -> &[f64] {
        &self.probs
    }

    pub fn is_deterministic(&self) -> bool {
        (0..self.n_states).all(|s| {
            let row = self.row(s);
            row.iter().filter(|&&p| p == 1.0).count() == 1 && row.iter().all(|&p| p == 0.0 || p == 1.0)
        })
    }

    /// Most likely action at `s` (lowest index on ties). For a deterministic
    /// policy this is the action taken.
    pub fn mode_action(&self, s: usize) -> usize {
        argmax(self.row(s).iter().copied())
    }

    /// The action list of a deterministic policy.
    pub fn actions(&self) -> Option<Vec<usize>> {
        self.is_deterministic()
            .then(|| (0..self.n_states).map(|s| self.mode_action(s)).collect())
    }

    /// `max_s Σ_a |π1(a|s) - π2(a|s)|`.
    pub fn distance(&self, other: &Policy) -> f64 {
        (0..self.n_states)
            .map(|s| self.row(s).iter().zip(other.row(s)).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// A real vector over states.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction(Vec<f64>);

impl ValueFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn max_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &ValueFunction) -> f64 {
        linalg::max_abs_diff(&self.0, &other.0)
    }

    pub(crate) fn to_vector(&self) -> Vector {
        Vector::from_column_slice(&self.0)
    }

    pub(crate) fn from_vector(v: Vector) -> Self {
        Self(v.iter().copied().collect())
    }
}

impl Index<usize> for ValueFunction {
    type Output = f64;

    fn index(&self, s: usize) -> &f64 {
        &self.0[s]
    }
}

/// A real table over state-action pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct QFunction {
    n_states: usize,
    n_actions: usize,
    data: Vec<f64>,
}

impl QFunction {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            data: vec![0.0; n_states * n_actions],
        }
    }

    pub fn from_flat(n_states: usize, n_actions: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("q table size", n_states * n_actions, data.len())?;
        Ok(Self {
            n_states,
            n_actions,
            data,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.data[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.data[s * self.n_actions + a] = value;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_at(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy_action(&self, s: usize) -> usize {
        argmax(self.row(s).iter().copied())
    }

    /// Deterministic greedy policy, lowest index on ties.
    pub fn greedy_policy(&self) -> Policy {
        let actions: Vec<usize> = (0..self.n_states).map(|s| self.greedy_action(s)).collect();
        Policy::deterministic(self.n_actions, &actions).expect("greedy actions are in range")
    }

    /// `Σ_a π(a|s) q(s,a)`.
    pub fn policy_average(&self, pi: &Policy, s: usize) -> f64 {
        self.row(s).iter().zip(pi.row(s)).map(|(q, p)| q * p).sum()
    }

    pub fn max_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &QFunction) -> f64 {
        linalg::max_abs_diff(&self.data, &other.data)
    }
}

/// A probability vector over states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution(Vec<f64>);

impl StateDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidMeasure("empty distribution".into()));
        }
        if let Some(s) = p.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidMeasure(format!("entry {s} is {}", p[s])));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidMeasure(format!("entries sum to {sum}, not 1")));
        }
        Ok(Self(p))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn point(n: usize, s: usize) -> Self {
        let mut p = vec![0.0; n];
        p[s] = 1.0;
        Self(p)
    }

    /// `(1-α) self + α other`.
    pub fn mix(&self, other: &StateDistribution, alpha: f64) -> Result<Self> {
        check_dim("distribution length", self.len(), other.len())?;
        Self::new(self.0.iter().zip(&other.0).map(|(a, b)| (1.0 - alpha) * a + alpha * b).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.0.iter().all(|&x| x > 0.0)
    }

    /// Sampling measures must put mass on every state.
    pub fn require_strictly_positive(&self) -> Result<()> {
        match self.0.iter().position(|&x| x <= 0.0) {
            None => Ok(()),
            Some(s) => Err(Error::InvalidMeasure(format!("sampling measure has zero mass at state {s}"))),
        }
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.0.iter().zip(v).map(|(p, x)| p * x).sum()
    }
}

impl Index<usize> for StateDistribution {
    type Output = f64;

    fn index(&self, s: usize) -> &f64 {
        &self.0[s]
    }
}

/// `v^π = (I - γP^π)^{-1} r^π` by a direct LU solve.
pub fn evaluate_policy(mdp: &Mdp, pi: &Policy) -> Result<ValueFunction> {
    mdp.check_policy(pi)?;
    let k = mdp.policy_kernel(pi);
    let r = mdp.policy_reward(pi);
    linalg::solve_discounted(&k, mdp.gamma(), &r).map(ValueFunction::from_vector)
}

/// `q(s,a) = r(s,a) + γ Σ_{s'} P(s'|s,a) v(s')`.
pub fn q_from_value(mdp: &Mdp, v: &ValueFunction) -> Result<QFunction> {
    mdp.check_value(v)?;
    let mut q = QFunction::zeros(mdp.n_states(), mdp.n_actions());
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            q.set(s, a, mdp.reward(s, a) + mdp.gamma() * mdp.expected_next(s, a, v.as_slice()));
        }
    }
    Ok(q)
}

pub fn q_of_policy(mdp: &Mdp, pi: &Policy) -> Result<QFunction> {
    let v = evaluate_policy(mdp, pi)?;
    q_from_value(mdp, &v)
}

/// `T^π v = r^π + γP^π v`.
pub fn apply_bellman(mdp: &Mdp, pi: &Policy, v: &ValueFunction) -> Result<ValueFunction> {
    mdp.check_policy(pi)?;
    mdp.check_value(v)?;
    let out = (0..mdp.n_states())
        .map(|s| {
            (0..mdp.n_actions())
                .map(|a| pi.prob(s, a) * (mdp.reward(s, a) + mdp.gamma() * mdp.expected_next(s, a, v.as_slice())))
                .sum()
        })
        .collect();
    Ok(ValueFunction::new(out))
}

/// `(T v, π)` with `π` the lowest-index deterministic member of `G(v)`.
pub fn apply_optimal_bellman(mdp: &Mdp, v: &ValueFunction) -> Result<(ValueFunction, Policy)> {
    let q = q_from_value(mdp, v)?;
    let tv = (0..mdp.n_states()).map(|s| q.max_at(s)).collect();
    Ok((ValueFunction::new(tv), q.greedy_policy()))
}

/// Value iteration until `‖Tv - v‖∞ ≤ tol (1-γ)/(2γ)`, which leaves the
/// returned value within `tol` of `v*`. The policy is greedy w.r.t. the
/// returned value.
pub fn solve_optimal(mdp: &Mdp, tol: f64) -> Result<(ValueFunction, Policy)> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tol must be positive, got {tol}")));
    }
    let gamma = mdp.gamma();
    let mut v = ValueFunction::zeros(mdp.n_states());
    if gamma == 0.0 {
        let (tv, _) = apply_optimal_bellman(mdp, &v)?;
        let (_, pi) = apply_optimal_bellman(mdp, &tv)?;
        return Ok((tv, pi));
    }
    let threshold = tol * (1.0 - gamma) / (2.0 * gamma);
    loop {
        let (tv, _) = apply_optimal_bellman(mdp, &v)?;
        let gap = tv.max_abs_diff(&v);
        v = tv;
        if gap <= threshold {
            break;
        }
    }
    let (_, pi) = apply_optimal_bellman(mdp, &v)?;
    Ok((v, pi))
}

/// Howard policy iteration started from `pi`, switching an action only on
/// a strict improvement. Returns the exact value of the final policy.
pub fn polish_policy(mdp: &Mdp, mut pi: Policy) -> Result<(ValueFunction, Policy)> {
    const MAX_SWEEPS: usize = 1000;
    for _ in 0..MAX_SWEEPS {
        let v = evaluate_policy(mdp, &pi)?;
        let q = q_from_value(mdp, &v)?;
        let scale = 1.0 + v.max_norm();
        let mut actions = Vec::with_capacity(mdp.n_states());
        let mut changed = false;
        for s in 0..mdp.n_states() {
            let current = pi.mode_action(s);
            let best = q.greedy_action(s);
            let gain = q.get(s, best) - q.policy_average(&pi, s);
            if gain > 1e-12 * scale && best != current {
                actions.push(best);
                changed = true;
            } else {
                actions.push(current);
            }
        }
        let next = Policy::deterministic(mdp.n_actions(), &actions)?;
        if !changed && next == pi {
            return Ok((v, pi));
        }
        pi = next;
    }
    Err(Error::invalid("policy polishing did not terminate"))
}

/// Reference optimum: value iteration followed by Howard polishing, giving
/// `v*` as the exact value of a deterministic optimal policy.
pub fn solve_optimal_exact(mdp: &Mdp) -> Result<(ValueFunction, Policy)> {
    let (_, pi) = solve_optimal(mdp, 1e-10)?;
    polish_policy(mdp, pi)
}

/// Row-wise `(1-α) p1 + α p2`.
pub fn mix_policies(p1: &Policy, p2: &Policy, alpha: f64) -> Result<Policy> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("mixture weight must lie in [0,1], got {alpha}")));
    }
    check_dim("policy state count", p1.n_states(), p2.n_states())?;
    check_dim("policy action count", p1.n_actions(), p2.n_actions())?;
    if alpha == 0.0 {
        return Ok(p1.clone());
    }
    if alpha == 1.0 {
        return Ok(p2.clone());
    }
    let probs = p1
        .probs
        .iter()
        .zip(&p2.probs)
        .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
        .collect();
    Policy::from_flat(p1.n_states(), p1.n_actions(), probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state(r: f64, gamma: f64) -> Mdp {
        Mdp::new(gamma, vec![vec![r]], vec![vec![vec![1.0]]]).unwrap()
    }

    #[test]
    fn rejects_bad_rows_with_location() {
        let err = Mdp::new(0.9, vec![vec![0.0, 0.0]], vec![vec![vec![1.0], vec![0.5]]]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("state 0, action 1"), "{msg}");
        assert!(Mdp::new(1.0, vec![vec![0.0]], vec![vec![vec![1.0]]]).is_err());
        assert!(Mdp::new(0.0, vec![vec![0.0]], vec![vec![vec![1.0]]]).is_err());
        assert!(Mdp::new(0.9, vec![vec![0.0]], vec![vec![vec![-0.5, 1.5]]]).is_err());
    }

    #[test]
    fn r_max_is_cached_absolute_max() {
        let mdp = Mdp::new(0.5, vec![vec![1.0, -3.0]], vec![vec![vec![1.0], vec![1.0]]]).unwrap();
        assert_eq!(mdp.r_max(), 3.0);
    }

    #[test]
    fn single_state_geometric_value() {
        let mdp = single_state(1.0, 0.5);
        let pi = Policy::uniform(1, 1);
        let v = evaluate_policy(&mdp, &pi).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-14);
        let q = q_of_policy(&mdp, &pi).unwrap();
        assert!((q.get(0, 0) - 2.0).abs() < 1e-14);
        let (vs, _) = solve_optimal(&mdp, 1e-10).unwrap();
        assert!((vs[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn zero_reward_gives_zero_value() {
        let mdp = Mdp::new(
            0.9,
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            vec![vec![vec![0.3, 0.7], vec![1.0, 0.0]], vec![vec![0.5, 0.5], vec![0.0, 1.0]]],
        )
        .unwrap();
        let v = evaluate_policy(&mdp, &Policy::uniform(2, 2)).unwrap();
        assert_eq!(v.max_norm(), 0.0);
        let (vs, _) = solve_optimal(&mdp, 1e-8).unwrap();
        assert_eq!(vs.max_norm(), 0.0);
    }

    #[test]
    fn bellman_on_zero_is_reward() {
        let mdp = Mdp::new(
            0.9,
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            vec![vec![vec![0.3, 0.7], vec![1.0, 0.0]], vec![vec![0.5, 0.5], vec![0.0, 1.0]]],
        )
        .unwrap();
        let pi = Policy::new(vec![vec![0.25, 0.75], vec![1.0, 0.0]]).unwrap();
        let tv = apply_bellman(&mdp, &pi, &ValueFunction::zeros(2)).unwrap();
        assert!((tv[0] - 1.75).abs() < 1e-15);
        assert!((tv[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_action_optimal_bellman_matches_policy_bellman() {
        let mdp = Mdp::new(0.8, vec![vec![1.0], vec![-1.0]], vec![vec![vec![0.5, 0.5]], vec![vec![0.1, 0.9]]]).unwrap();
        let v = ValueFunction::new(vec![3.0, -2.0]);
        let (tv, _) = apply_optimal_bellman(&mdp, &v).unwrap();
        let tpv = apply_bellman(&mdp, &Policy::uniform(2, 1), &v).unwrap();
        assert!(tv.max_abs_diff(&tpv) < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mdp = single_state(1.0, 0.5);
        let pi = Policy::uniform(2, 1);
        assert!(matches!(evaluate_policy(&mdp, &pi), Err(Error::DimensionMismatch { .. })));
        assert!(apply_bellman(&mdp, &Policy::uniform(1, 1), &ValueFunction::zeros(3)).is_err());
    }

    #[test]
    fn mixing_endpoints_and_midpoint() {
        let p1 = Policy::deterministic(2, &[0, 1]).unwrap();
        let p2 = Policy::deterministic(2, &[1, 1]).unwrap();
        assert_eq!(mix_policies(&p1, &p2, 0.0).unwrap(), p1);
        assert_eq!(mix_policies(&p1, &p2, 1.0).unwrap(), p2);
        let mid = mix_policies(&p1, &p2, 0.5).unwrap();
        assert_eq!(mid.row(0), &[0.5, 0.5]);
        assert_eq!(mid.row(1), &[0.0, 1.0]);
        assert!(mix_policies(&p1, &p2, 1.5).is_err());
        assert!(mix_policies(&p1, &p2, -0.1).is_err());
    }

    #[test]
    fn invalid_tol_rejected() {
        assert!(solve_optimal(&single_state(1.0, 0.5), 0.0).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(StateDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(StateDistribution::new(vec![-0.5, 1.5]).is_err());
        let d = StateDistribution::new(vec![0.0, 1.0]).unwrap();
        assert!(!d.is_strictly_positive());
        assert!(matches!(d.require_strictly_positive(), Err(Error::InvalidMeasure(_))));
    }
}

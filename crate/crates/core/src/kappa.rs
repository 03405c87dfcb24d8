//! κ- and h-greedy operators.
//!
//! The κ-greedy step w.r.t. `v` is the optimal policy of a κγ-discounted
//! surrogate MDP whose reward is shaped by `(1-κ)γ P v`. Surrogates are
//! ordinary [`Mdp`] values with the discount relaxed to `[0, 1)`.

use crate::error::{Error, Result};
use crate::linalg::{self, Vector};
use crate::mdp::{
    apply_optimal_bellman, evaluate_policy, polish_policy, q_from_value, solve_optimal, Mdp, Policy, QFunction,
    ValueFunction,
};

/// Default accuracy of surrogate solves.
pub const DEFAULT_GREEDY_TOL: f64 = 1e-10;

fn check_kappa(kappa: f64) -> Result<()> {
    if (0.0..=1.0).contains(&kappa) {
        Ok(())
    } else {
        Err(Error::invalid(format!("kappa must lie in [0,1], got {kappa}")))
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("tol must be positive, got {tol}")))
    }
}

/// `ξ_κ = γ(1-κ)/(1-γκ)`, the contraction factor of `T_κ^π` and `T_κ`.
pub fn xi(gamma: f64, kappa: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("gamma must lie in (0,1), got {gamma}")));
    }
    check_kappa(kappa)?;
    Ok(gamma * (1.0 - kappa) / (1.0 - gamma * kappa))
}

/// κ together with the discount it is applied to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaContext {
    kappa: f64,
    gamma: f64,
    xi: f64,
}

impl KappaContext {
    pub fn new(gamma: f64, kappa: f64) -> Result<Self> {
        Ok(Self {
            kappa,
            gamma,
            xi: xi(gamma, kappa)?,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// Discount of the surrogate problem, `κγ`.
    pub fn surrogate_discount(&self) -> f64 {
        self.kappa * self.gamma
    }
}

/// The κγ-discounted problem with reward `r(s,a) + (1-κ)γ Σ P(s'|s,a) v(s')`.
#[derive(Debug, Clone)]
pub struct SurrogateMdp {
    mdp: Mdp,
    kappa: f64,
    base_gamma: f64,
    shaping_value: ValueFunction,
}

impl SurrogateMdp {
    pub fn mdp(&self) -> &Mdp {
        &self.mdp
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn base_gamma(&self) -> f64 {
        self.base_gamma
    }

    /// The value function used to shape the reward.
    pub fn shaping_value(&self) -> &ValueFunction {
        &self.shaping_value
    }
}

pub fn build_surrogate(mdp: &Mdp, v: &ValueFunction, kappa: f64) -> Result<SurrogateMdp> {
    check_kappa(kappa)?;
    mdp.check_value(v)?;
    let gamma = mdp.gamma();
    let mut rewards = Vec::with_capacity(mdp.n_states() * mdp.n_actions());
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let shaping = if kappa == 1.0 {
                0.0
            } else {
                (1.0 - kappa) * gamma * mdp.expected_next(s, a, v.as_slice())
            };
            rewards.push(mdp.reward(s, a) + shaping);
        }
    }
    let surrogate = Mdp::with_relaxed_discount(
        mdp.n_states(),
        mdp.n_actions(),
        kappa * gamma,
        rewards,
        mdp.transitions_flat().to_vec(),
    )?;
    Ok(SurrogateMdp {
        mdp: surrogate,
        kappa,
        base_gamma: gamma,
        shaping_value: v.clone(),
    })
}

/// `T_κ^π v = (I - κγP^π)^{-1}(r^π + (1-κ)γP^π v)`.
pub fn apply_t_kappa_pi(mdp: &Mdp, pi: &Policy, kappa: f64, v: &ValueFunction) -> Result<ValueFunction> {
    check_kappa(kappa)?;
    mdp.check_policy(pi)?;
    mdp.check_value(v)?;
    let gamma = mdp.gamma();
    let k = mdp.policy_kernel(pi);
    let rhs: Vector = mdp.policy_reward(pi) + (&k * v.to_vector()) * ((1.0 - kappa) * gamma);
    linalg::solve_discounted(&k, kappa * gamma, &rhs).map(ValueFunction::from_vector)
}

/// `(T_κ v, π)` where `π ∈ G_κ(v)` is deterministic.
///
/// The surrogate is solved by value iteration to `tol` and the resulting
/// policy is polished by exact surrogate policy iteration; the returned
/// value is `T_κ^π v` for that policy, computed by a linear solve.
pub fn apply_t_kappa(mdp: &Mdp, kappa: f64, v: &ValueFunction, tol: f64) -> Result<(ValueFunction, Policy)> {
    check_tol(tol)?;
    let surrogate = build_surrogate(mdp, v, kappa)?;
    let (_, pi) = solve_optimal(surrogate.mdp(), tol)?;
    let (value, pi) = polish_policy(surrogate.mdp(), pi)?;
    Ok((value, pi))
}

pub fn kappa_greedy_policy(mdp: &Mdp, v: &ValueFunction, kappa: f64, tol: f64) -> Result<Policy> {
    apply_t_kappa(mdp, kappa, v, tol).map(|(_, pi)| pi)
}

/// Optimal q-function of the surrogate shaped by `v`, by q-value iteration.
pub fn q_kappa_of_value(mdp: &Mdp, v: &ValueFunction, kappa: f64, tol: f64) -> Result<QFunction> {
    check_tol(tol)?;
    let surrogate = build_surrogate(mdp, v, kappa)?;
    let sm = surrogate.mdp();
    let beta = sm.gamma();
    let (n_s, n_a) = (sm.n_states(), sm.n_actions());
    let mut q = QFunction::zeros(n_s, n_a);
    let threshold = if beta == 0.0 {
        f64::INFINITY
    } else {
        tol * (1.0 - beta) / (2.0 * beta)
    };
    loop {
        let maxes: Vec<f64> = (0..n_s).map(|s| q.max_at(s)).collect();
        let mut next = QFunction::zeros(n_s, n_a);
        for s in 0..n_s {
            for a in 0..n_a {
                next.set(s, a, sm.reward(s, a) + beta * sm.expected_next(s, a, &maxes));
            }
        }
        let gap = next.max_abs_diff(&q);
        q = next;
        if gap <= threshold {
            return Ok(q);
        }
    }
}

/// `q^π_κ`: the surrogate optimal q-function shaped by `v^π`.
pub fn q_kappa(mdp: &Mdp, pi: &Policy, kappa: f64, tol: f64) -> Result<QFunction> {
    let v = evaluate_policy(mdp, pi)?;
    q_kappa_of_value(mdp, &v, kappa, tol)
}

/// 1-step greedy policy w.r.t. `T^{h-1} v`.
pub fn h_greedy_policy(mdp: &Mdp, v: &ValueFunction, h: usize) -> Result<Policy> {
    if h < 1 {
        return Err(Error::invalid("horizon h must be at least 1"));
    }
    mdp.check_value(v)?;
    let mut w = v.clone();
    for _ in 1..h {
        w = apply_optimal_bellman(mdp, &w)?.0;
    }
    Ok(q_from_value(mdp, &w)?.greedy_policy())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// `‖v^{π_k} - v^{π_{k-1}}‖∞`.
    pub value_change: f64,
    /// `‖v* - v^{π_k}‖∞` when a reference optimum was supplied.
    pub error_to_optimal: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct KappaPiOutcome {
    pub policy: Policy,
    pub value: ValueFunction,
    pub records: Vec<IterationRecord>,
    /// Set when `max_iters` ran out before convergence.
    pub truncated: bool,
}

/// Exact κ-PI from the uniform policy: κ-greedy improvement alternated with
/// exact evaluation until successive values differ by at most `tol`.
pub fn exact_kappa_pi(
    mdp: &Mdp,
    kappa: f64,
    tol: f64,
    max_iters: usize,
    v_star: Option<&ValueFunction>,
) -> Result<KappaPiOutcome> {
    exact_kappa_pi_from(mdp, kappa, tol, max_iters, Policy::uniform(mdp.n_states(), mdp.n_actions()), v_star)
}

pub fn exact_kappa_pi_from(
    mdp: &Mdp,
    kappa: f64,
    tol: f64,
    max_iters: usize,
    initial: Policy,
    v_star: Option<&ValueFunction>,
) -> Result<KappaPiOutcome> {
    check_tol(tol)?;
    check_kappa(kappa)?;
    if let Some(vs) = v_star {
        mdp.check_value(vs)?;
    }
    let greedy_tol = DEFAULT_GREEDY_TOL.min(tol);
    let mut policy = initial;
    let mut value = evaluate_policy(mdp, &policy)?;
    let mut records = Vec::new();
    for iter in 1..=max_iters {
        let next = kappa_greedy_policy(mdp, &value, kappa, greedy_tol)?;
        let next_value = evaluate_policy(mdp, &next)?;
        let value_change = next_value.max_abs_diff(&value);
        records.push(IterationRecord {
            iter,
            value_change,
            error_to_optimal: v_star.map(|vs| vs.max_abs_diff(&next_value)),
        });
        policy = next;
        value = next_value;
        if value_change <= tol {
            return Ok(KappaPiOutcome {
                policy,
                value,
                records,
                truncated: false,
            });
        }
    }
    Ok(KappaPiOutcome {
        policy,
        value,
        records,
        truncated: true,
    })
}

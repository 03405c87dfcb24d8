//! Soft (mixture) policy updates and the Tightrope Walking MDP, the family
//! on which κ- and h-greedy soft steps fail to improve.

use crate::error::{Error, Result};
use crate::kappa::{h_greedy_policy, kappa_greedy_policy};
use crate::mdp::{evaluate_policy, mix_policies, Mdp, Policy, ValueFunction};

/// Entrywise comparisons treat differences above `-IMPROVEMENT_TOL` as
/// non-negative.
pub const IMPROVEMENT_TOL: f64 = 1e-9;

/// State indices of the Tightrope MDP.
pub const S0: usize = 0;
pub const S1: usize = 1;
pub const S2: usize = 2;
pub const S3: usize = 3;

/// Four states, two actions. `s0` waits (a0) or moves to `s1` (a1); at
/// `s1`, a0 falls to `s3` and a1 reaches `s2`. `s2` pays 1 and `s3` pays
/// `-c` forever; both absorbing states expose two identical actions.
pub fn tightrope_mdp(c: f64, gamma: f64) -> Result<Mdp> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::invalid(format!("tightrope penalty c must be positive, got {c}")));
    }
    let e = |s: usize| {
        let mut row = vec![0.0; 4];
        row[s] = 1.0;
        row
    };
    Mdp::new(
        gamma,
        vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0], vec![-c, -c]],
        vec![
            vec![e(S0), e(S1)],
            vec![e(S3), e(S2)],
            vec![e(S2), e(S2)],
            vec![e(S3), e(S3)],
        ],
    )
}

/// The policy taking a0 everywhere.
pub fn hesitant_policy() -> Policy {
    Policy::deterministic(2, &[0, 0, 0, 0]).expect("valid actions")
}

/// The optimal tightrope policy (a1 at s0 and s1).
pub fn tightrope_optimal_policy() -> Policy {
    Policy::deterministic(2, &[1, 1, 0, 0]).expect("valid actions")
}

/// `(α/(1-α), κ/(1-κ))`: the soft step of size α fails to improve on the
/// hesitant policy when `c > c_low`, and the κ-greedy policy w.r.t. its
/// value is optimal when `c ≤ c_high`. The upper end is infinite at κ = 1.
pub fn tightrope_bounds(alpha: f64, kappa: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::invalid(format!("kappa must lie in (0,1], got {kappa}")));
    }
    let c_high = if kappa == 1.0 {
        f64::INFINITY
    } else {
        kappa / (1.0 - kappa)
    };
    Ok((alpha / (1.0 - alpha), c_high))
}

/// Values at `s0` and `s1` of the mixture `(1-α)π0 + απ*` on the tightrope.
pub fn closed_form_mixture_value(c: f64, gamma: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(c > 0.0) {
        return Err(Error::invalid(format!("c must be positive, got {c}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("gamma must lie in (0,1), got {gamma}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0,1], got {alpha}")));
    }
    let v_s1 = gamma * (-c * (1.0 - alpha) + alpha) / (1.0 - gamma);
    let v_s0 = gamma * alpha / (1.0 - gamma * (1.0 - alpha)) * v_s1;
    Ok((v_s0, v_s1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GreedyMode {
    Kappa(f64),
    H(usize),
}

impl std::fmt::Display for GreedyMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GreedyMode::Kappa(k) => write!(f, "kappa={k}"),
            GreedyMode::H(h) => write!(f, "h={h}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImprovementReport {
    pub improved_everywhere: bool,
    pub strict_somewhere: bool,
    /// `v^{mix} - v^π`.
    pub delta_vector: Vec<f64>,
    pub alpha: f64,
    pub mode: GreedyMode,
    pub greedy_policy: Policy,
    pub mixture_value: ValueFunction,
}

impl ImprovementReport {
    pub fn min_delta(&self) -> f64 {
        self.delta_vector.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Forms `(1-α)π + απ'` with `π'` greedy w.r.t. `v^π` for the given mode and
/// compares the two values entrywise.
pub fn improvement_report(mdp: &Mdp, pi: &Policy, alpha: f64, mode: GreedyMode, tol: f64) -> Result<ImprovementReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0,1], got {alpha}")));
    }
    let v = evaluate_policy(mdp, pi)?;
    let greedy = match mode {
        GreedyMode::Kappa(kappa) => kappa_greedy_policy(mdp, &v, kappa, tol)?,
        GreedyMode::H(h) => h_greedy_policy(mdp, &v, h)?,
    };
    let mix = mix_policies(pi, &greedy, alpha)?;
    let v_mix = evaluate_policy(mdp, &mix)?;
    let delta_vector: Vec<f64> = v_mix.as_slice().iter().zip(v.as_slice()).map(|(a, b)| a - b).collect();
    Ok(ImprovementReport {
        improved_everywhere: delta_vector.iter().all(|&d| d >= -IMPROVEMENT_TOL),
        strict_somewhere: delta_vector.iter().any(|&d| d > IMPROVEMENT_TOL),
        delta_vector,
        alpha,
        mode,
        greedy_policy: greedy,
        mixture_value: v_mix,
    })
}

/// The penalty used for the necessity witness at `(α, κ)`: the midpoint of
/// `(c_low, min(c_high, 4 c_low))`.
pub fn witness_penalty(alpha: f64, kappa: f64) -> Result<f64> {
    let (lo, hi) = tightrope_bounds(alpha, kappa)?;
    if lo >= hi {
        return Err(Error::invalid(format!("no witness exists for alpha={alpha} >= kappa={kappa}")));
    }
    Ok((lo + hi.min(4.0 * lo)) / 2.0)
}

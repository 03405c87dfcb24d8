//! Approximate κ-greedy steps and the two hard-update schemes built on
//! them: κ-API (re-evaluate after every step) and κ-PSDP (compose the
//! `T_κ^{π}` operators and keep every stage policy).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::concentrability::mul_inf;
use crate::error::{Error, Result};
use crate::kappa::{apply_t_kappa, apply_t_kappa_pi, xi};
use crate::mdp::{evaluate_policy, solve_optimal_exact, Mdp, Policy, StateDistribution, ValueFunction};

/// Surrogate solves inside the oracle use this tolerance.
const ORACLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorruptionMode {
    /// Always return the exact κ-greedy policy.
    None,
    /// Try per-state swaps to the runner-up action, costliest first.
    WorstStateSwap,
    /// Try per-state swaps in a random order.
    RandomSwap,
}

impl std::str::FromStr for CorruptionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "worst_state_swap" | "worst-state-swap" => Ok(Self::WorstStateSwap),
            "random_swap" | "random-swap" => Ok(Self::RandomSwap),
            other => Err(Error::invalid(format!("unknown corruption mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOracleConfig {
    pub delta: f64,
    pub nu: StateDistribution,
    pub corruption_mode: CorruptionMode,
    pub seed: u64,
}

impl GreedyOracleConfig {
    pub fn new(delta: f64, nu: StateDistribution, corruption_mode: CorruptionMode, seed: u64) -> Result<Self> {
        let cfg = Self {
            delta,
            nu,
            corruption_mode,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::invalid(format!("oracle error delta must be finite and >= 0, got {}", self.delta)));
        }
        StateDistribution::new(self.nu.as_slice().to_vec()).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput {
    pub policy: Policy,
    /// `ν(T_κ v - T_κ^π v)`, within `[0, δ]`.
    pub achieved_slack: f64,
    /// `T_κ v`.
    pub t_kappa_v: ValueFunction,
}

fn with_action(pi: &Policy, s: usize, a: usize) -> Policy {
    let mut actions = pi.actions().expect("oracle policies are deterministic");
    actions[s] = a;
    Policy::deterministic(pi.n_actions(), &actions).expect("actions in range")
}

/// A deterministic policy `π` with `ν T_κ^π v ≥ ν T_κ v - δ`.
///
/// Starts from the exact κ-greedy policy. Unless the mode is `None`, each
/// state is offered a swap to its runner-up surrogate action; a swap is
/// kept when it raises the accumulated slack without exceeding `δ`.
pub fn approx_kappa_greedy<R: Rng + ?Sized>(
    mdp: &Mdp,
    v: &ValueFunction,
    kappa: f64,
    cfg: &GreedyOracleConfig,
    rng: &mut R,
) -> Result<OracleOutput> {
    cfg.validate()?;
    mdp.check_distribution(&cfg.nu)?;
    let (t_v, greedy) = apply_t_kappa(mdp, kappa, v, ORACLE_TOL)?;
    if cfg.delta == 0.0 || cfg.corruption_mode == CorruptionMode::None || mdp.n_actions() == 1 {
        return Ok(OracleOutput {
            policy: greedy,
            achieved_slack: 0.0,
            t_kappa_v: t_v,
        });
    }
    let nu = &cfg.nu;
    let slack_of = |pi: &Policy| -> Result<f64> {
        let tv_pi = apply_t_kappa_pi(mdp, pi, kappa, v)?;
        Ok(nu.dot(t_v.as_slice()) - nu.dot(tv_pi.as_slice()))
    };

    // Runner-up by the surrogate q-function at its optimum.
    let beta = kappa * mdp.gamma();
    let runner_up: Vec<usize> = (0..mdp.n_states())
        .map(|s| {
            let best = greedy.mode_action(s);
            let score = |a: usize| {
                mdp.reward(s, a)
                    + (1.0 - kappa) * mdp.gamma() * mdp.expected_next(s, a, v.as_slice())
                    + beta * mdp.expected_next(s, a, t_v.as_slice())
            };
            (0..mdp.n_actions())
                .filter(|&a| a != best)
                .fold((usize::MAX, f64::NEG_INFINITY), |(ba, bs), a| {
                    let sc = score(a);
                    if sc > bs {
                        (a, sc)
                    } else {
                        (ba, bs)
                    }
                })
                .0
        })
        .collect();

    let costs = (0..mdp.n_states())
        .map(|s| slack_of(&with_action(&greedy, s, runner_up[s])))
        .collect::<Result<Vec<f64>>>()?;
    let mut order: Vec<usize> = (0..mdp.n_states()).collect();
    match cfg.corruption_mode {
        CorruptionMode::WorstStateSwap => order.sort_by(|&a, &b| costs[b].total_cmp(&costs[a]).then(a.cmp(&b))),
        CorruptionMode::RandomSwap => order.shuffle(rng),
        CorruptionMode::None => unreachable!(),
    }

    let mut policy = greedy;
    let mut slack = 0.0;
    for s in order {
        if costs[s] <= 0.0 {
            continue;
        }
        let candidate = with_action(&policy, s, runner_up[s]);
        let cand_slack = slack_of(&candidate)?;
        if cand_slack > slack && cand_slack <= cfg.delta {
            policy = candidate;
            slack = cand_slack;
        }
    }
    Ok(OracleOutput {
        policy,
        achieved_slack: slack.max(0.0),
        t_kappa_v: t_v,
    })
}

/// `Π[1..k]` with the base policy `π_0`; stage `Π[k]` runs first.
#[derive(Debug, Clone, PartialEq)]
pub struct NonStationaryPolicy {
    stages: Vec<Policy>,
    kappa: f64,
    base_policy: Policy,
}

impl NonStationaryPolicy {
    pub fn new(kappa: f64, base_policy: Policy) -> Result<Self> {
        if !(0.0..=1.0).contains(&kappa) {
            return Err(Error::invalid(format!("kappa must lie in [0,1], got {kappa}")));
        }
        Ok(Self {
            stages: Vec::new(),
            kappa,
            base_policy,
        })
    }

    /// Appends the next (newest) stage.
    pub fn push(&mut self, stage: Policy) -> Result<()> {
        if !stage.is_deterministic() {
            return Err(Error::invalid("stage policies must be deterministic"));
        }
        if stage.n_states() != self.base_policy.n_states() || stage.n_actions() != self.base_policy.n_actions() {
            return Err(Error::invalid("stage policy shape differs from the base policy"));
        }
        self.stages.push(stage);
        Ok(())
    }

    pub fn stages(&self) -> &[Policy] {
        &self.stages
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn base_policy(&self) -> &Policy {
        &self.base_policy
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }
}

/// `T_κ^{Π[k]} ⋯ T_κ^{Π[1]} v^{π_0}`.
pub fn eval_sigma(mdp: &Mdp, sigma: &NonStationaryPolicy) -> Result<ValueFunction> {
    let mut v = evaluate_policy(mdp, &sigma.base_policy)?;
    for stage in &sigma.stages {
        v = apply_t_kappa_pi(mdp, stage, sigma.kappa, &v)?;
    }
    Ok(v)
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// One discounted return of `σ` from `s0`, truncated after `horizon` steps.
///
/// Every stage acts for at least one step; after each step the walk moves
/// to the next older stage with probability `1-κ`, so stage durations are
/// geometric on `{1, 2, …}`. Once the base policy is reached it runs until
/// the horizon.
pub fn rollout_sigma<R: Rng + ?Sized>(
    mdp: &Mdp,
    sigma: &NonStationaryPolicy,
    s0: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<f64> {
    if horizon < 1 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    if s0 >= mdp.n_states() {
        return Err(Error::invalid(format!("start state {s0} out of range")));
    }
    mdp.check_policy(&sigma.base_policy)?;
    let gamma = mdp.gamma();
    let mut stage = sigma.stages.len();
    let mut s = s0;
    let mut ret = 0.0;
    let mut discount = 1.0;
    for _ in 0..horizon {
        let pi = if stage == 0 {
            &sigma.base_policy
        } else {
            &sigma.stages[stage - 1]
        };
        let a = sample_index(pi.row(s), rng);
        ret += discount * mdp.reward(s, a);
        discount *= gamma;
        s = sample_index(mdp.transition(s, a), rng);
        if stage > 0 && rng.random::<f64>() >= sigma.kappa {
            stage -= 1;
        }
    }
    Ok(ret)
}

/// `μ(v* - v)`.
pub fn loss(mu: &StateDistribution, v_star: &ValueFunction, v: &ValueFunction) -> Result<f64> {
    crate::error::check_dim("v* length", mu.len(), v_star.len())?;
    crate::error::check_dim("value length", mu.len(), v.len())?;
    Ok(mu.dot(v_star.as_slice()) - mu.dot(v.as_slice()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiRecord {
    /// 1-based.
    pub iter: usize,
    pub policy: Policy,
    /// `v^{π_k}` for κ-API, `v^{σ_{κ,k}}` for κ-PSDP.
    pub value: ValueFunction,
    pub loss: f64,
    pub achieved_slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiTrace {
    pub records: Vec<ApiRecord>,
    pub v_star: ValueFunction,
}

impl ApiTrace {
    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

fn check_iters(k: usize) -> Result<()> {
    if k < 1 {
        Err(Error::invalid("number of iterations must be at least 1"))
    } else {
        Ok(())
    }
}

/// κ-API: `π_k ← oracle(v^{π_{k-1}})` followed by exact evaluation.
/// Losses are measured under `mu`.
pub fn kappa_api(
    mdp: &Mdp,
    kappa: f64,
    cfg: &GreedyOracleConfig,
    k: usize,
    pi0: &Policy,
    mu: &StateDistribution,
) -> Result<ApiTrace> {
    check_iters(k)?;
    mdp.check_distribution(mu)?;
    let (v_star, _) = solve_optimal_exact(mdp)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut v = evaluate_policy(mdp, pi0)?;
    let mut records = Vec::with_capacity(k);
    for iter in 1..=k {
        let out = approx_kappa_greedy(mdp, &v, kappa, cfg, &mut rng)?;
        v = evaluate_policy(mdp, &out.policy)?;
        records.push(ApiRecord {
            iter,
            loss: loss(mu, &v_star, &v)?,
            policy: out.policy,
            value: v.clone(),
            achieved_slack: out.achieved_slack,
        });
    }
    Ok(ApiTrace { records, v_star })
}

/// κ-PSDP: `π_k ← oracle(v)`, `v ← T_κ^{π_k} v`, and `π_k` is appended to
/// the non-stationary policy. The recorded value is `eval_sigma` of the
/// policy built so far.
pub fn kappa_psdp(
    mdp: &Mdp,
    kappa: f64,
    cfg: &GreedyOracleConfig,
    k: usize,
    pi0: &Policy,
    mu: &StateDistribution,
) -> Result<(NonStationaryPolicy, ApiTrace)> {
    check_iters(k)?;
    mdp.check_distribution(mu)?;
    let (v_star, _) = solve_optimal_exact(mdp)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sigma = NonStationaryPolicy::new(kappa, pi0.clone())?;
    let mut v = evaluate_policy(mdp, pi0)?;
    let mut records = Vec::with_capacity(k);
    for iter in 1..=k {
        let out = approx_kappa_greedy(mdp, &v, kappa, cfg, &mut rng)?;
        v = apply_t_kappa_pi(mdp, &out.policy, kappa, &v)?;
        sigma.push(out.policy.clone())?;
        let v_sigma = eval_sigma(mdp, &sigma)?;
        records.push(ApiRecord {
            iter,
            loss: loss(mu, &v_star, &v_sigma)?,
            policy: out.policy,
            value: v_sigma,
            achieved_slack: out.achieved_slack,
        });
    }
    Ok((sigma, ApiTrace { records, v_star }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundKind {
    ApiFixed,
    ApiKstar,
    PsdpFixed,
    PsdpKstar,
}

/// Inputs of the error bounds. Coefficients may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub kappa: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Iteration index for the fixed-`k` bounds.
    pub k: usize,
    pub r_max: f64,
    /// `C^{(1)}`.
    pub c1: f64,
    /// `C^{(2)}`.
    pub c2: f64,
    /// `C^{(2,k*)}`, used only by [`BoundKind::ApiKstar`].
    pub c2k: f64,
    /// `C^{π*}_κ`.
    pub c_pi_star_kappa: f64,
    /// `C^{π*(1)}_κ`.
    pub c_pi_star_1_kappa: f64,
    /// Upper bound on the bounded function `g(κ)` of the k* API bound.
    pub g: f64,
}

impl BoundParams {
    /// Default `g(κ) = 1`; this is not a proven bound, see [`BoundParams::g_is_heuristic`].
    pub const DEFAULT_G: f64 = 1.0;

    pub fn g_is_heuristic(&self) -> bool {
        self.g == Self::DEFAULT_G
    }
}

/// `k* = ⌈ln(R_max/(δ(1-γ)))/(1-ξ)⌉`, at least 1.
pub fn k_star(gamma: f64, kappa: f64, delta: f64, r_max: f64) -> Result<usize> {
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("k* needs delta > 0, got {delta}")));
    }
    let ratio = r_max / (delta * (1.0 - gamma));
    if !(ratio > 1.0) {
        return Err(Error::invalid(format!(
            "k* needs R_max > delta (1-gamma), got R_max={r_max}, delta={delta}"
        )));
    }
    let x = xi(gamma, kappa)?;
    Ok(((ratio.ln() / (1.0 - x)).ceil() as usize).max(1))
}

/// `C_{κ-API} = (1-κ)² C^{(2)} + (1-γ)κ((1-κ)C^{(1)} + (1-γκ)C^{π*(1)}_κ)`.
pub fn c_kappa_api(p: &BoundParams) -> f64 {
    let (k, g) = (p.kappa, p.gamma);
    mul_inf((1.0 - k).powi(2), p.c2)
        + mul_inf((1.0 - g) * k, mul_inf(1.0 - k, p.c1) + mul_inf(1.0 - g * k, p.c_pi_star_1_kappa))
}

/// Right-hand side of the selected bound.
pub fn theorem_bounds(kind: BoundKind, p: &BoundParams) -> Result<f64> {
    let (kappa, gamma, delta) = (p.kappa, p.gamma, p.delta);
    if !(delta >= 0.0) {
        return Err(Error::invalid(format!("delta must be >= 0, got {delta}")));
    }
    let x = xi(gamma, kappa)?;
    let decay = |k: usize| x.powi(k as i32) * p.r_max / (1.0 - gamma);
    match kind {
        BoundKind::ApiFixed => Ok(mul_inf(c_kappa_api(p) / (1.0 - gamma).powi(2), delta) + decay(p.k)),
        BoundKind::PsdpFixed => Ok(mul_inf(p.c_pi_star_1_kappa / (1.0 - x), delta) + decay(p.k)),
        BoundKind::ApiKstar => {
            let ks = k_star(gamma, kappa, delta, p.r_max)?;
            let log_term = (p.r_max / ((1.0 - gamma) * delta)).ln();
            let c_k1 = mul_inf(
                1.0 - kappa * gamma,
                mul_inf(kappa * (1.0 - kappa * gamma), p.c_pi_star_kappa) + mul_inf((1.0 - kappa).powi(2), p.c1),
            );
            let c_k2 = mul_inf(
                (1.0 - kappa) * kappa,
                mul_inf(1.0 - gamma, p.c1) + mul_inf(p.g * (1.0 - kappa) * gamma.powi(ks as i32), p.c2k),
            );
            let scale = (1.0 - gamma).powi(2);
            Ok(mul_inf(c_k1 / scale, log_term * delta) + mul_inf(c_k2 / scale, delta) + delta)
        }
        BoundKind::PsdpKstar => {
            k_star(gamma, kappa, delta, p.r_max)?;
            let log_term = (p.r_max / ((1.0 - gamma) * delta)).ln();
            Ok(mul_inf(p.c_pi_star_kappa / (1.0 - x).powi(2), log_term * delta) + delta)
        }
    }
}

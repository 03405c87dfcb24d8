//! Two-timescale online κ-PI driven by a generative model.
//!
//! `q` and `q_κ` move on the fast timescale, the policy on the slow one,
//! and the policy is only pulled towards the κ-greedy action when the
//! current 1-step estimate certifies that this does not degrade it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::linalg::argmax;
use crate::mdp::{q_from_value, solve_optimal_exact, Mdp, Policy, QFunction, StateDistribution};

/// Stepsizes `μ_f(n) = n^{-fast}` and `μ_s(n) = n^{-slow}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    fast_exponent: f64,
    slow_exponent: f64,
}

impl StepSchedule {
    /// Requires `0.5 < fast < slow ≤ 1`.
    pub fn new(fast_exponent: f64, slow_exponent: f64) -> Result<Self> {
        if !(0.5 < fast_exponent && fast_exponent < slow_exponent && slow_exponent <= 1.0) {
            return Err(Error::invalid(format!(
                "step exponents must satisfy 0.5 < fast < slow <= 1, got fast={fast_exponent}, slow={slow_exponent}"
            )));
        }
        Ok(Self {
            fast_exponent,
            slow_exponent,
        })
    }

    pub fn fast_exponent(&self) -> f64 {
        self.fast_exponent
    }

    pub fn slow_exponent(&self) -> f64 {
        self.slow_exponent
    }

    pub fn fast(&self, n: u64) -> f64 {
        (n as f64).powf(-self.fast_exponent)
    }

    pub fn slow(&self, n: u64) -> f64 {
        (n as f64).powf(-self.slow_exponent)
    }
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self {
            fast_exponent: 0.6,
            slow_exponent: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineState {
    pub q: QFunction,
    pub q_kappa: QFunction,
    pub pi: Policy,
    /// `ν_n(s)`.
    pub state_counts: Vec<u64>,
    /// `φ_n(s,a)`, row-major.
    pub sa_counts: Vec<u64>,
    pub step: u64,
}

impl OnlineState {
    /// `q = q_κ = 0`, uniform policy, zero counters.
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            q: QFunction::zeros(n_states, n_actions),
            q_kappa: QFunction::zeros(n_states, n_actions),
            pi: Policy::uniform(n_states, n_actions),
            state_counts: vec![0; n_states],
            sa_counts: vec![0; n_states * n_actions],
            step: 0,
        }
    }

    /// `q = q_κ = R_max/(1−γ)` (an upper bound on every value), uniform
    /// policy, zero counters.
    ///
    /// Actions are drawn from `π_n`, and `μ_s(1) = 1` makes each row
    /// one-hot on its first visit. From a zero start with nonnegative
    /// rewards an untried action never wins the argmax, so the run can lock
    /// onto arbitrary actions. Starting above every value makes each untried
    /// action look best until it has been tried.
    pub fn optimistic(mdp: &Mdp) -> Self {
        let mut state = Self::new(mdp.n_states(), mdp.n_actions());
        let top = mdp.r_max() / (1.0 - mdp.gamma());
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                state.q.set(s, a, top);
                state.q_kappa.set(s, a, top);
            }
        }
        state
    }

    pub fn sa_count(&self, s: usize, a: usize) -> u64 {
        self.sa_counts[s * self.q.n_actions() + a]
    }

    pub fn counters_consistent(&self) -> bool {
        self.state_counts.iter().sum::<u64>() == self.step && self.sa_counts.iter().sum::<u64>() == self.step
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub q_err_inf: f64,
    pub qk_err_inf: f64,
    /// Fraction of states where the most likely action of `π_n` is optimal.
    pub policy_match_frac: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OnlineTrace {
    pub snapshots: Vec<Snapshot>,
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
    // Rounding can leave the cumulative sum a hair below one.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// One draw `s ~ ν, a ~ π(s), s' ~ P(·|s,a)` with the deterministic reward.
pub fn sample_step<R: Rng + ?Sized>(mdp: &Mdp, nu: &StateDistribution, pi: &Policy, rng: &mut R) -> Result<Transition> {
    mdp.check_distribution(nu)?;
    mdp.check_policy(pi)?;
    nu.require_strictly_positive()?;
    Ok(draw(mdp, nu, pi, rng))
}

fn draw<R: Rng + ?Sized>(mdp: &Mdp, nu: &StateDistribution, pi: &Policy, rng: &mut R) -> Transition {
    let s = sample_index(nu.as_slice(), rng);
    let a = sample_index(pi.row(s), rng);
    let s_next = sample_index(mdp.transition(s, a), rng);
    Transition {
        s,
        a,
        r: mdp.reward(s, a),
        s_next,
    }
}

/// The κ-greedy action of `q_kappa` when `q` rates it at least as high as
/// the current policy does, otherwise the 1-step greedy action of `q`.
pub fn cautious_action(s: usize, q: &QFunction, q_kappa: &QFunction, pi: &Policy) -> usize {
    let a_kappa = q_kappa.greedy_action(s);
    if q.get(s, a_kappa) >= q.policy_average(pi, s) {
        a_kappa
    } else {
        argmax(q.row(s).iter().copied())
    }
}

/// One fast/slow update from transition `t`. Counters are incremented
/// before the stepsizes are looked up.
pub fn online_update(mdp: &Mdp, state: &mut OnlineState, t: &Transition, sched: &StepSchedule, kappa: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::invalid(format!("kappa must lie in [0,1], got {kappa}")));
    }
    mdp.check_q(&state.q)?;
    mdp.check_q(&state.q_kappa)?;
    mdp.check_policy(&state.pi)?;
    check_dim("state counter length", mdp.n_states(), state.state_counts.len())?;
    check_dim("state-action counter length", mdp.n_states() * mdp.n_actions(), state.sa_counts.len())?;
    if t.s >= mdp.n_states() || t.s_next >= mdp.n_states() || t.a >= mdp.n_actions() {
        return Err(Error::invalid(format!("transition {t:?} out of range")));
    }
    update_unchecked(mdp.gamma(), state, t, sched, kappa);
    Ok(())
}

fn update_unchecked(gamma: f64, state: &mut OnlineState, t: &Transition, sched: &StepSchedule, kappa: f64) {
    let n_a = state.q.n_actions();
    let (s, a, sp) = (t.s, t.a, t.s_next);
    state.step += 1;
    state.state_counts[s] += 1;
    state.sa_counts[s * n_a + a] += 1;

    let v_next = state.q.policy_average(&state.pi, sp);
    let delta = t.r + gamma * v_next - state.q.get(s, a);
    let delta_kappa =
        t.r + gamma * (1.0 - kappa) * v_next + kappa * gamma * state.q_kappa.max_at(sp) - state.q_kappa.get(s, a);
    let mu_f = sched.fast(state.sa_counts[s * n_a + a]);
    state.q.set(s, a, state.q.get(s, a) + mu_f * delta);
    state.q_kappa.set(s, a, state.q_kappa.get(s, a) + mu_f * delta_kappa);

    let b = cautious_action(s, &state.q, &state.q_kappa, &state.pi);
    let mu_s = sched.slow(state.state_counts[s]);
    for (i, p) in state.pi.row_mut(s).iter_mut().enumerate() {
        let target = if i == b { 1.0 } else { 0.0 };
        *p = (1.0 - mu_s) * *p + mu_s * target;
    }
}

/// `H_κ^π(q, q_κ)`.
pub fn apply_h(mdp: &Mdp, pi: &Policy, kappa: f64, q: &QFunction, q_kappa: &QFunction) -> Result<(QFunction, QFunction)> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::invalid(format!("kappa must lie in [0,1], got {kappa}")));
    }
    mdp.check_policy(pi)?;
    mdp.check_q(q)?;
    mdp.check_q(q_kappa)?;
    let gamma = mdp.gamma();
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let v_pi: Vec<f64> = (0..n_s).map(|s| q.policy_average(pi, s)).collect();
    let v_max: Vec<f64> = (0..n_s).map(|s| q_kappa.max_at(s)).collect();
    let mut h1 = QFunction::zeros(n_s, n_a);
    let mut h2 = QFunction::zeros(n_s, n_a);
    for s in 0..n_s {
        for a in 0..n_a {
            let r = mdp.reward(s, a);
            let e_pi = mdp.expected_next(s, a, &v_pi);
            let e_max = mdp.expected_next(s, a, &v_max);
            h1.set(s, a, r + gamma * e_pi);
            h2.set(s, a, r + gamma * (1.0 - kappa) * e_pi + kappa * gamma * e_max);
        }
    }
    Ok((h1, h2))
}

/// Runs `n_steps` samples of the online scheme from
/// [`OnlineState::optimistic`]. Snapshots against `q*` are taken every
/// `snapshot_stride` steps and at the final step.
pub fn run_online(
    mdp: &Mdp,
    nu: &StateDistribution,
    kappa: f64,
    sched: &StepSchedule,
    n_steps: u64,
    seed: u64,
    snapshot_stride: u64,
) -> Result<(OnlineState, OnlineTrace)> {
    run_online_from(mdp, nu, kappa, sched, n_steps, seed, snapshot_stride, OnlineState::optimistic(mdp))
}

/// [`run_online`] from an explicit starting state.
#[allow(clippy::too_many_arguments)]
pub fn run_online_from(
    mdp: &Mdp,
    nu: &StateDistribution,
    kappa: f64,
    sched: &StepSchedule,
    n_steps: u64,
    seed: u64,
    snapshot_stride: u64,
    initial: OnlineState,
) -> Result<(OnlineState, OnlineTrace)> {
    mdp.check_distribution(nu)?;
    nu.require_strictly_positive()?;
    if n_steps < 1 {
        return Err(Error::invalid("n_steps must be at least 1"));
    }
    if snapshot_stride < 1 {
        return Err(Error::invalid("snapshot stride must be at least 1"));
    }
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::invalid(format!("kappa must lie in [0,1], got {kappa}")));
    }
    mdp.check_q(&initial.q)?;
    mdp.check_q(&initial.q_kappa)?;
    mdp.check_policy(&initial.pi)?;
    check_dim("state counter length", mdp.n_states(), initial.state_counts.len())?;
    check_dim("state-action counter length", mdp.n_states() * mdp.n_actions(), initial.sa_counts.len())?;
    let (v_star, pi_star) = solve_optimal_exact(mdp)?;
    let q_star = q_from_value(mdp, &v_star)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = initial;
    let mut trace = OnlineTrace::default();
    let snapshot = |state: &OnlineState| {
        let matches = (0..mdp.n_states())
            .filter(|&s| state.pi.mode_action(s) == pi_star.mode_action(s))
            .count();
        Snapshot {
            step: state.step,
            q_err_inf: state.q.max_abs_diff(&q_star),
            qk_err_inf: state.q_kappa.max_abs_diff(&q_star),
            policy_match_frac: matches as f64 / mdp.n_states() as f64,
        }
    };
    for n in 1..=n_steps {
        let t = draw(mdp, nu, &state.pi, &mut rng);
        update_unchecked(mdp.gamma(), &mut state, &t, sched, kappa);
        if n % snapshot_stride == 0 || n == n_steps {
            trace.snapshots.push(snapshot(&state));
        }
    }
    Ok((state, trace))
}

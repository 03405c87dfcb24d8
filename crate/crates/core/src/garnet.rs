//! Seeded random ("Garnet") MDPs.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Mdp, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarnetSpec {
    pub n_states: usize,
    pub n_actions: usize,
    /// Reachable successors per state-action pair.
    pub branching: usize,
    /// Probability that a state-action pair carries a nonzero reward.
    pub reward_density: f64,
    pub seed: u64,
    pub gamma: f64,
}

impl GarnetSpec {
    /// Branching `⌈n_states/2⌉`, reward density 0.5, γ = 0.9.
    pub fn new(n_states: usize, n_actions: usize, seed: u64) -> Self {
        Self {
            n_states,
            n_actions,
            branching: n_states.div_ceil(2).max(1),
            reward_density: 0.5,
            seed,
            gamma: 0.9,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_branching(mut self, branching: usize) -> Self {
        self.branching = branching;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::invalid("garnet needs at least one state and one action"));
        }
        if self.branching < 1 || self.branching > self.n_states {
            return Err(Error::invalid(format!(
                "branching must lie in [1, {}], got {}",
                self.n_states, self.branching
            )));
        }
        if !(0.0..=1.0).contains(&self.reward_density) {
            return Err(Error::invalid(format!("reward density must lie in [0,1], got {}", self.reward_density)));
        }
        Ok(())
    }
}

/// Each `(s,a)` reaches `branching` distinct successors with probabilities
/// given by the gaps between sorted uniform cut points. Rewards are
/// `U[0,1]` on a random subset of pairs of the given density (at least one
/// pair when the density is positive) and zero elsewhere.
pub fn generate_garnet(spec: &GarnetSpec) -> Result<Mdp> {
    spec.validate()?;
    let (n_s, n_a, b) = (spec.n_states, spec.n_actions, spec.branching);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut transitions = vec![0.0; n_s * n_a * n_s];
    for sa in 0..n_s * n_a {
        let mut cuts: Vec<f64> = (0..b - 1).map(|_| rng.random::<f64>()).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.push(1.0);
        let targets = sample(&mut rng, n_s, b);
        let row = &mut transitions[sa * n_s..(sa + 1) * n_s];
        let mut prev = 0.0;
        for (target, cut) in targets.iter().zip(&cuts) {
            row[target] = cut - prev;
            prev = *cut;
        }
        // Fold rounding into the largest entry so the row sums to one.
        let sum: f64 = row.iter().sum();
        let big = crate::linalg::argmax(row.iter().copied());
        row[big] += 1.0 - sum;
    }
    let mut rewards = vec![0.0; n_s * n_a];
    let mut any = false;
    for r in rewards.iter_mut() {
        if rng.random::<f64>() < spec.reward_density {
            *r = rng.random::<f64>();
            any = true;
        }
    }
    if !any && spec.reward_density > 0.0 {
        let idx = rng.random_range(0..n_s * n_a);
        rewards[idx] = rng.random::<f64>();
    }
    Mdp::from_flat(n_s, n_a, spec.gamma, rewards, transitions)
}

/// A policy with independent `U[0,1]` weights normalized per row.
pub fn random_policy<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Policy {
    let mut probs = Vec::with_capacity(n_states * n_actions);
    for _ in 0..n_states {
        let w: Vec<f64> = (0..n_actions).map(|_| rng.random::<f64>() + 1e-3).collect();
        let sum: f64 = w.iter().sum();
        let start = probs.len();
        probs.extend(w.iter().map(|x| x / sum));
        let row_sum: f64 = probs[start..].iter().sum();
        probs[start] += 1.0 - row_sum;
    }
    Policy::from_flat(n_states, n_actions, probs).expect("normalized rows")
}

/// A uniformly random deterministic policy.
pub fn random_deterministic_policy<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Policy {
    let actions: Vec<usize> = (0..n_states).map(|_| rng.random_range(0..n_actions)).collect();
    Policy::deterministic(n_actions, &actions).expect("actions in range")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_state_is_self_loop() {
        let mdp = generate_garnet(&GarnetSpec::new(1, 1, 5).with_branching(1)).unwrap();
        assert_eq!(mdp.transition(0, 0), &[1.0]);
    }

    #[test]
    fn same_seed_same_mdp() {
        let spec = GarnetSpec::new(7, 3, 42);
        assert_eq!(generate_garnet(&spec).unwrap(), generate_garnet(&spec).unwrap());
        let other = GarnetSpec::new(7, 3, 43);
        assert_ne!(generate_garnet(&spec).unwrap(), generate_garnet(&other).unwrap());
    }

    #[test]
    fn branching_is_respected() {
        let spec = GarnetSpec::new(10, 2, 1).with_branching(3);
        let mdp = generate_garnet(&spec).unwrap();
        for s in 0..10 {
            for a in 0..2 {
                assert!(mdp.transition(s, a).iter().filter(|&&p| p > 0.0).count() <= 3);
            }
        }
        assert!(mdp.r_max() > 0.0);
    }

    #[test]
    fn oversized_branching_rejected() {
        assert!(generate_garnet(&GarnetSpec::new(3, 2, 0).with_branching(4)).is_err());
        assert!(generate_garnet(&GarnetSpec::new(3, 2, 0).with_branching(0)).is_err());
    }
}

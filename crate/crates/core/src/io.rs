//! JSON file formats for MDPs and state distributions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mdp::{Mdp, StateDistribution};

/// On-disk MDP document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub gamma: f64,
    pub n_states: usize,
    pub n_actions: usize,
    /// `rewards[s][a]`.
    pub rewards: Vec<Vec<f64>>,
    /// `transitions[s][a][s']`.
    pub transitions: Vec<Vec<Vec<f64>>>,
}

impl MdpFile {
    pub fn from_mdp(mdp: &Mdp) -> Self {
        let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
        Self {
            gamma: mdp.gamma(),
            n_states: n_s,
            n_actions: n_a,
            rewards: (0..n_s).map(|s| (0..n_a).map(|a| mdp.reward(s, a)).collect()).collect(),
            transitions: (0..n_s)
                .map(|s| (0..n_a).map(|a| mdp.transition(s, a).to_vec()).collect())
                .collect(),
        }
    }

    pub fn into_mdp(self) -> Result<Mdp> {
        check_dim("rewards state count", self.n_states, self.rewards.len())?;
        check_dim("transitions state count", self.n_states, self.transitions.len())?;
        if let Some(row) = self.rewards.first() {
            check_dim("rewards action count", self.n_actions, row.len())?;
        }
        Mdp::new(self.gamma, self.rewards, self.transitions)
    }
}

pub fn parse_mdp(json: &str) -> Result<Mdp> {
    serde_json::from_str::<MdpFile>(json)?.into_mdp()
}

pub fn mdp_to_json(mdp: &Mdp) -> String {
    serde_json::to_string_pretty(&MdpFile::from_mdp(mdp)).expect("MDP serializes")
}

pub fn load_mdp(path: &Path) -> Result<Mdp> {
    parse_mdp(&std::fs::read_to_string(path)?)
}

pub fn save_mdp(mdp: &Mdp, path: &Path) -> Result<()> {
    std::fs::write(path, mdp_to_json(mdp) + "\n")?;
    Ok(())
}

/// A JSON array of probabilities of length `n_states`.
pub fn parse_distribution(json: &str, n_states: usize) -> Result<StateDistribution> {
    let p: Vec<f64> = serde_json::from_str(json)?;
    check_dim("distribution length", n_states, p.len())?;
    StateDistribution::new(p)
}

pub fn load_distribution(path: &Path, n_states: usize) -> Result<StateDistribution> {
    parse_distribution(&std::fs::read_to_string(path)?, n_states)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

//! Behavioral policies for dataset generation and for the exact pipeline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::maze::{compute_layers, DeterministicMdp, LayerDecomposition};
use super::EnvError;

/// How the offline dataset behaves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PolicySpec {
    /// Uniform over all actions everywhere.
    UniformRandom,
    /// Per trajectory, picks a random target state and moves greedily toward
    /// it with probability `1 - eps`, acting uniformly otherwise.
    EpsGreedyRandomGoals { eps: f64 },
    /// Moves one shortest-path layer closer to a fixed goal at every step
    /// (uniform over the shortest-path actions); stays at the goal.
    LayerMonotone,
}

impl PolicySpec {
    pub fn parse(s: &str, eps: f64) -> Result<Self, EnvError> {
        match s {
            "uniform-random" => Ok(PolicySpec::UniformRandom),
            "eps-greedy-random-goals" => Ok(PolicySpec::EpsGreedyRandomGoals { eps }),
            "layer-monotone" => Ok(PolicySpec::LayerMonotone),
            other => Err(EnvError::BadPolicy(other.to_string())),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            PolicySpec::UniformRandom => "uniform-random".to_string(),
            PolicySpec::EpsGreedyRandomGoals { eps } => format!("eps-greedy-random-goals(eps={eps})"),
            PolicySpec::LayerMonotone => "layer-monotone".to_string(),
        }
    }
}

/// A stationary stochastic policy as a row-stochastic table over `(s, a)`.
#[derive(Debug, Clone)]
pub struct PolicyTable {
    n_actions: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    pub fn uniform(mdp: &DeterministicMdp) -> Self {
        let p = 1.0 / mdp.n_actions as f64;
        PolicyTable { n_actions: mdp.n_actions, probs: vec![p; mdp.n_states * mdp.n_actions] }
    }

    /// Uniform over the shortest-path actions toward `layers.goal`; `stay`
    /// at the goal and at unreachable states.
    pub fn layer_monotone(mdp: &DeterministicMdp, layers: &LayerDecomposition) -> Self {
        let stay = mdp.n_actions - 1;
        let mut probs = vec![0.0; mdp.n_states * mdp.n_actions];
        for s in 0..mdp.n_states {
            let descending = layers.shortest_path_actions(mdp, s);
            if descending.is_empty() {
                probs[s * mdp.n_actions + stay] = 1.0;
            } else {
                let p = 1.0 / descending.len() as f64;
                for a in descending {
                    probs[s * mdp.n_actions + a] = p;
                }
            }
        }
        PolicyTable { n_actions: mdp.n_actions, probs }
    }

    /// Builds the stationary table for a spec, when one exists.
    /// `EpsGreedyRandomGoals` has no stationary table (the target changes per
    /// trajectory) and returns an error.
    pub fn from_spec(mdp: &DeterministicMdp, spec: PolicySpec, goal: usize) -> Result<Self, EnvError> {
        match spec {
            PolicySpec::UniformRandom => Ok(Self::uniform(mdp)),
            PolicySpec::LayerMonotone => {
                if goal >= mdp.n_states {
                    return Err(EnvError::InvalidState(goal));
                }
                Ok(Self::layer_monotone(mdp, &compute_layers(mdp, goal)))
            }
            PolicySpec::EpsGreedyRandomGoals { .. } => Err(EnvError::BadPolicy(
                "eps-greedy-random-goals has no stationary policy table".to_string(),
            )),
        }
    }

    pub(crate) fn raw(n_actions: usize, probs: Vec<f64>) -> Self {
        PolicyTable { n_actions, probs }
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn sample<R: Rng>(&self, s: usize, rng: &mut R) -> usize {
        let row = &self.probs[s * self.n_actions..(s + 1) * self.n_actions];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        self.n_actions - 1
    }

    pub fn supported_actions(&self, s: usize) -> Vec<usize> {
        (0..self.n_actions).filter(|&a| self.prob(s, a) > 0.0).collect()
    }

    pub fn is_row_stochastic(&self) -> bool {
        self.probs
            .chunks(self.n_actions)
            .all(|row| (row.iter().sum::<f64>() - 1.0).abs() < 1e-12 && row.iter().all(|&p| p >= 0.0))
    }
}

//! Offline datasets: trajectory rollouts with `(s, a, s', a')` tuples,
//! JSON Lines persistence, and the embedded view consumed by the learned
//! pipeline.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::maze::{compute_layers, DeterministicMdp};
use super::policy::{PolicySpec, PolicyTable};
use super::EnvError;
use crate::util::indexed_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TabularTuple {
    pub traj_id: usize,
    pub t: usize,
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
    pub a_next: usize,
}

/// Trajectories of `(s, a, s', a')` tuples under a behavioral policy, with
/// trajectory boundaries preserved. `a_next` is the policy's action at `s'`
/// (computed but not executed for the final tuple of a trajectory).
#[derive(Debug, Clone)]
pub struct TabularDataset {
    pub tuples: Vec<TabularTuple>,
    /// Per-trajectory state sequences, length `horizon + 1`.
    pub traj_states: Vec<Vec<usize>>,
    /// Per-trajectory action sequences, length `horizon + 1` (the last entry
    /// is the unexecuted action at the final state).
    pub traj_actions: Vec<Vec<usize>>,
    pub n_states: usize,
    pub n_actions: usize,
    pub policy: String,
}

impl TabularDataset {
    pub fn n_trajectories(&self) -> usize {
        self.traj_states.len()
    }

    /// Empirical visit counts over states (both `s` and `s_next` of tuples).
    pub fn state_visit_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_states];
        for traj in &self.traj_states {
            for &s in traj {
                counts[s] += 1;
            }
        }
        counts
    }

    /// Empirical behavioral policy, uniform at never-visited states.
    pub fn empirical_policy(&self) -> PolicyTable {
        let mut counts = vec![0.0f64; self.n_states * self.n_actions];
        for tr in &self.tuples {
            counts[tr.s * self.n_actions + tr.a] += 1.0;
        }
        let mut probs = counts;
        for s in 0..self.n_states {
            let row = &mut probs[s * self.n_actions..(s + 1) * self.n_actions];
            let total: f64 = row.iter().sum();
            if total == 0.0 {
                row.fill(1.0 / self.n_actions as f64);
            } else {
                for p in row.iter_mut() {
                    *p /= total;
                }
            }
        }
        PolicyTable::raw(self.n_actions, probs)
    }
}

/// Rolls out `n_trajectories` trajectories of `horizon` transitions each.
///
/// Starts are uniform over states. For `LayerMonotone` the policy descends
/// toward `goal`; for `EpsGreedyRandomGoals` each trajectory draws its own
/// target state. Per-trajectory RNG streams are derived from `seed`, so
/// generation is deterministic and order-independent.
pub fn generate_dataset(
    mdp: &DeterministicMdp,
    spec: PolicySpec,
    goal: usize,
    n_trajectories: usize,
    horizon: usize,
    seed: u64,
) -> Result<TabularDataset, EnvError> {
    if horizon < 1 {
        return Err(EnvError::BadHorizon(horizon));
    }
    if goal >= mdp.n_states {
        return Err(EnvError::InvalidState(goal));
    }
    let stationary = match spec {
        PolicySpec::EpsGreedyRandomGoals { .. } => None,
        _ => Some(PolicyTable::from_spec(mdp, spec, goal)?),
    };
    // Greedy tables toward arbitrary targets, built lazily for eps-greedy.
    let mut greedy_cache: HashMap<usize, PolicyTable> = HashMap::new();

    let mut tuples = Vec::with_capacity(n_trajectories * horizon);
    let mut traj_states = Vec::with_capacity(n_trajectories);
    let mut traj_actions = Vec::with_capacity(n_trajectories);
    for traj_id in 0..n_trajectories {
        let mut rng = indexed_rng(seed, "dataset-traj", traj_id as u64);
        let start = rng.random_range(0..mdp.n_states);
        let (states, actions) = match spec {
            PolicySpec::EpsGreedyRandomGoals { eps } => {
                let target = rng.random_range(0..mdp.n_states);
                let greedy = greedy_cache
                    .entry(target)
                    .or_insert_with(|| PolicyTable::layer_monotone(mdp, &compute_layers(mdp, target)));
                rollout_eps_greedy(mdp, greedy, eps, start, horizon, &mut rng)
            }
            _ => rollout(mdp, stationary.as_ref().unwrap(), start, horizon, &mut rng),
        };
        for t in 0..horizon {
            tuples.push(TabularTuple {
                traj_id,
                t,
                s: states[t],
                a: actions[t],
                s_next: states[t + 1],
                a_next: actions[t + 1],
            });
        }
        traj_states.push(states);
        traj_actions.push(actions);
    }
    Ok(TabularDataset {
        tuples,
        traj_states,
        traj_actions,
        n_states: mdp.n_states,
        n_actions: mdp.n_actions,
        policy: spec.describe(),
    })
}

fn rollout<R: Rng>(
    mdp: &DeterministicMdp,
    pi: &PolicyTable,
    start: usize,
    horizon: usize,
    rng: &mut R,
) -> (Vec<usize>, Vec<usize>) {
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon + 1);
    let mut s = start;
    for _ in 0..horizon {
        let a = pi.sample(s, rng);
        states.push(s);
        actions.push(a);
        s = mdp.successor(s, a);
    }
    states.push(s);
    actions.push(pi.sample(s, rng));
    (states, actions)
}

fn rollout_eps_greedy<R: Rng>(
    mdp: &DeterministicMdp,
    greedy: &PolicyTable,
    eps: f64,
    start: usize,
    horizon: usize,
    rng: &mut R,
) -> (Vec<usize>, Vec<usize>) {
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon + 1);
    let mut s = start;
    let pick = |s: usize, rng: &mut R| {
        if rng.random::<f64>() < eps {
            rng.random_range(0..mdp.n_actions)
        } else {
            greedy.sample(s, rng)
        }
    };
    for _ in 0..horizon {
        let a = pick(s, rng);
        states.push(s);
        actions.push(a);
        s = mdp.successor(s, a);
    }
    states.push(s);
    actions.push(pick(s, rng));
    (states, actions)
}

/// One serialized dataset tuple. States are coordinate arrays; actions are
/// integer ids for discrete MDPs or real arrays for continuous ones.
#[derive(Debug, Serialize, Deserialize)]
pub struct JsonTuple {
    pub traj_id: usize,
    pub t: usize,
    pub s: Vec<f64>,
    pub a: ActionField,
    pub s_next: Vec<f64>,
    pub a_next: ActionField,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActionField {
    Id(usize),
    Vector(Vec<f64>),
}

pub fn write_jsonl(ds: &TabularDataset, mdp: &DeterministicMdp, path: &Path) -> Result<(), EnvError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for tr in &ds.tuples {
        let row = JsonTuple {
            traj_id: tr.traj_id,
            t: tr.t,
            s: mdp.embed(tr.s).to_vec(),
            a: ActionField::Id(tr.a),
            s_next: mdp.embed(tr.s_next).to_vec(),
            a_next: ActionField::Id(tr.a_next),
        };
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(path: &Path, mdp: &DeterministicMdp) -> Result<TabularDataset, EnvError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut tuples = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonTuple = serde_json::from_str(&line)
            .map_err(|e| EnvError::BadDatasetRow { row: i + 1, msg: e.to_string() })?;
        let take_id = |a: &ActionField, row: usize| -> Result<usize, EnvError> {
            match a {
                ActionField::Id(id) if *id < mdp.n_actions => Ok(*id),
                ActionField::Id(id) => {
                    Err(EnvError::BadDatasetRow { row, msg: format!("action id {id} out of range") })
                }
                ActionField::Vector(_) => Err(EnvError::BadDatasetRow {
                    row,
                    msg: "expected integer action for a discrete MDP".to_string(),
                }),
            }
        };
        tuples.push(TabularTuple {
            traj_id: row.traj_id,
            t: row.t,
            s: mdp
                .state_for_embed(&row.s)
                .map_err(|e| EnvError::BadDatasetRow { row: i + 1, msg: e.to_string() })?,
            a: take_id(&row.a, i + 1)?,
            s_next: mdp
                .state_for_embed(&row.s_next)
                .map_err(|e| EnvError::BadDatasetRow { row: i + 1, msg: e.to_string() })?,
            a_next: take_id(&row.a_next, i + 1)?,
        });
    }
    // Rebuild trajectory sequences from the tuples, verifying the chain.
    let n_traj = tuples.iter().map(|t| t.traj_id + 1).max().unwrap_or(0);
    let mut traj_states: Vec<Vec<usize>> = vec![Vec::new(); n_traj];
    let mut traj_actions: Vec<Vec<usize>> = vec![Vec::new(); n_traj];
    for tr in &tuples {
        let states = &mut traj_states[tr.traj_id];
        if let Some(&prev) = states.last() {
            if prev != tr.s {
                return Err(EnvError::BadDatasetRow {
                    row: 0,
                    msg: format!("trajectory {} does not chain at t={}", tr.traj_id, tr.t),
                });
            }
        } else {
            states.push(tr.s);
        }
        states.push(tr.s_next);
        traj_actions[tr.traj_id].push(tr.a);
    }
    // The final a_next of each trajectory is the unexecuted action at its
    // last state.
    for tr in &tuples {
        if tr.t + 2 == traj_states[tr.traj_id].len() {
            traj_actions[tr.traj_id].push(tr.a_next);
        }
    }
    Ok(TabularDataset {
        tuples,
        traj_states,
        traj_actions,
        n_states: mdp.n_states,
        n_actions: mdp.n_actions,
        policy: "loaded".to_string(),
    })
}

/// One tuple of the embedded view: everything the learned pipeline consumes.
#[derive(Debug, Clone)]
pub struct EmbeddedTuple {
    pub s: Vec<f64>,
    /// Conditioning embedding of the action for the occupancy / reward nets
    /// (one-hot for discrete actions, raw vector for continuous ones).
    pub a_cond: Vec<f64>,
    /// Action embedding in the policy's output space (grid displacement for
    /// discrete mazes, raw vector for continuous domains).
    pub a_vec: Vec<f64>,
    pub s_next: Vec<f64>,
    pub a_next_cond: Vec<f64>,
    pub traj_id: usize,
    pub t: usize,
    pub s_id: Option<usize>,
    pub a_id: Option<usize>,
    pub s_next_id: Option<usize>,
}

/// Dataset in embedding space, with per-trajectory state sequences retained
/// for hindsight goal sampling and geometric-horizon future sampling.
#[derive(Debug, Clone)]
pub struct EmbeddedDataset {
    pub tuples: Vec<EmbeddedTuple>,
    pub traj_states: Vec<Vec<Vec<f64>>>,
    pub traj_state_ids: Option<Vec<Vec<usize>>>,
    pub state_dim: usize,
    pub cond_action_dim: usize,
    pub action_dim: usize,
}

impl EmbeddedDataset {
    pub fn from_tabular(mdp: &DeterministicMdp, ds: &TabularDataset) -> Self {
        let one_hot = |a: usize| {
            let mut v = vec![0.0; mdp.n_actions];
            v[a] = 1.0;
            v
        };
        let tuples = ds
            .tuples
            .iter()
            .map(|tr| EmbeddedTuple {
                s: mdp.embed(tr.s).to_vec(),
                a_cond: one_hot(tr.a),
                a_vec: mdp.action_vector(tr.a).to_vec(),
                s_next: mdp.embed(tr.s_next).to_vec(),
                a_next_cond: one_hot(tr.a_next),
                traj_id: tr.traj_id,
                t: tr.t,
                s_id: Some(tr.s),
                a_id: Some(tr.a),
                s_next_id: Some(tr.s_next),
            })
            .collect();
        let traj_states = ds
            .traj_states
            .iter()
            .map(|traj| traj.iter().map(|&s| mdp.embed(s).to_vec()).collect())
            .collect();
        EmbeddedDataset {
            tuples,
            traj_states,
            traj_state_ids: Some(ds.traj_states.clone()),
            state_dim: mdp.embed_dim(),
            cond_action_dim: mdp.n_actions,
            action_dim: mdp.action_vector(0).len(),
        }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }
}

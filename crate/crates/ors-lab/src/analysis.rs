//! Value non-monotonicity study: analytic value recursion with injected
//! multiplicative noise along expert trajectories, the fraction-of-inversions
//! metric, sweeps over noise levels, and reward-field dumps for plotting.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::{compute_layers, DeterministicMdp, PolicyTable};
use crate::occupancy::{solve_wasserstein_recursion, OccError, WassersteinTable, DIRECT_SOLVE_LIMIT};
use crate::util::{indexed_rng, mean_se, spearman};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("trajectory does not end at the goal")]
    NotAtGoal,
    #[error("trace needs at least 2 states")]
    TooShort,
    #[error("no path from state {0} to the goal")]
    Unreachable(usize),
    #[error(transparent)]
    Occ(#[from] OccError),
}

/// Which reward feeds the value recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// `r(s, g) = -1[s != g]`.
    Sparse,
    /// The exact shaped reward `-M(s, a, g) / scale`.
    Ors,
    /// No recursion: the state-averaged reward itself as the value estimate.
    RawRw,
}

impl RewardMode {
    pub fn label(&self) -> &'static str {
        match self {
            RewardMode::Sparse => "sparse",
            RewardMode::Ors => "ors",
            RewardMode::RawRw => "raw_rw",
        }
    }
}

/// One expert trajectory with everything needed to score it: the state/action
/// path, its goal, and the exact Wasserstein table for that goal.
#[derive(Debug, Clone)]
pub struct TraceInstance {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub goal: usize,
    pub m: WassersteinTable,
    pub scale: f64,
}

impl TraceInstance {
    /// Builds the shortest path from `start` to `goal` (following lowest-id
    /// shortest-path actions) and solves the exact tables for the goal under
    /// the layer-monotone behavioral policy.
    pub fn shortest_path(
        mdp: &DeterministicMdp,
        gamma: f64,
        start: usize,
        goal: usize,
        scale: f64,
    ) -> Result<Self, AnalysisError> {
        let layers = compute_layers(mdp, goal);
        if layers.steps[start].is_none() {
            return Err(AnalysisError::Unreachable(start));
        }
        let mut states = vec![start];
        let mut actions = Vec::new();
        let mut s = start;
        while s != goal {
            let a = layers.shortest_path_actions(mdp, s)[0];
            actions.push(a);
            s = mdp.successor(s, a);
            states.push(s);
        }
        let pi = PolicyTable::layer_monotone(mdp, &layers);
        let amdp = mdp.absorbing(goal);
        let m = if mdp.n_states * mdp.n_actions <= DIRECT_SOLVE_LIMIT {
            crate::occupancy::goal_tables(mdp, &pi, gamma, goal)?
        } else {
            solve_wasserstein_recursion(&amdp, &pi, gamma, goal)?
        };
        Ok(TraceInstance { states, actions, goal, m, scale })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Per-state value estimates along one trajectory under one reward mode and
/// noise level.
#[derive(Debug, Clone)]
pub struct NoisyValueTrace {
    pub values: Vec<f64>,
    pub mode: RewardMode,
    pub sigma: f64,
}

/// Backward value recursion `V(s_t) = r_t + gamma * (1 + eps_t) * V(s_{t+1})`
/// anchored at `V(goal) = 0`, with `eps_t ~ N(0, sigma^2)` drawn fresh per
/// state. The raw-reward mode skips the recursion and perturbs the reward
/// itself, consuming the same number of draws so RNG streams stay paired
/// across modes.
pub fn noisy_value_trace<R: Rng>(
    inst: &TraceInstance,
    mode: RewardMode,
    gamma: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<NoisyValueTrace, AnalysisError> {
    let n = inst.states.len();
    if n < 2 {
        return Err(AnalysisError::TooShort);
    }
    if *inst.states.last().unwrap() != inst.goal {
        return Err(AnalysisError::NotAtGoal);
    }
    let mut values = vec![0.0; n];
    for i in (0..n - 1).rev() {
        let eps: f64 = {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        };
        let s = inst.states[i];
        match mode {
            RewardMode::Sparse => {
                let r = if s == inst.goal { 0.0 } else { -1.0 };
                values[i] = r + gamma * (values[i + 1] + eps * values[i + 1]);
            }
            RewardMode::Ors => {
                let r = -inst.m.value(s, inst.actions[i]) / inst.scale;
                values[i] = r + gamma * (values[i + 1] + eps * values[i + 1]);
            }
            RewardMode::RawRw => {
                let r = -inst.m.state_value(s) / inst.scale;
                values[i] = (1.0 + eps) * r;
            }
        }
    }
    Ok(NoisyValueTrace { values, mode, sigma })
}

/// Fraction of steps where the value estimate decreases toward the goal.
pub fn delta_v(trace: &NoisyValueTrace) -> Result<f64, AnalysisError> {
    if trace.values.len() < 2 {
        return Err(AnalysisError::TooShort);
    }
    let inversions =
        trace.values.windows(2).filter(|w| w[1] < w[0]).count();
    Ok(inversions as f64 / (trace.values.len() - 1) as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub mode: String,
    pub sigma: f64,
    pub mean_delta_v: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,sigma,mean_delta_v,se\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.mode, row.sigma, row.mean_delta_v, row.se
            ));
        }
        out
    }

    pub fn mean_for(&self, mode: RewardMode, sigma: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.mode == mode.label() && r.sigma == sigma)
            .map(|r| r.mean_delta_v)
    }
}

/// Mean non-monotonicity per `(mode, sigma)` cell, averaged with equal
/// weight per trajectory and then over seeds. Noise streams are derived from
/// `(trajectory, seed)` only, so every mode and noise level sees the same
/// standard normal draws (paired comparisons).
pub fn sweep_sigma(
    instances: &[TraceInstance],
    modes: &[RewardMode],
    sigmas: &[f64],
    n_seeds: usize,
    gamma: f64,
    base_seed: u64,
) -> Result<SweepTable, AnalysisError> {
    let mut rows = Vec::new();
    for &mode in modes {
        for &sigma in sigmas {
            let mut per_seed = Vec::with_capacity(n_seeds);
            for seed in 0..n_seeds {
                let mut acc = 0.0;
                for (ti, inst) in instances.iter().enumerate() {
                    let mut rng =
                        indexed_rng(base_seed, "value-noise", (seed * instances.len() + ti) as u64);
                    let trace = noisy_value_trace(inst, mode, gamma, sigma, &mut rng)?;
                    acc += delta_v(&trace)?;
                }
                per_seed.push(acc / instances.len() as f64);
            }
            let (mean, se) = mean_se(&per_seed);
            rows.push(SweepRow { mode: mode.label().to_string(), sigma, mean_delta_v: mean, se });
        }
    }
    Ok(SweepTable { rows })
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldRecord {
    pub x: f64,
    pub y: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldDump {
    pub goal: usize,
    pub records: Vec<FieldRecord>,
    /// Rank correlation between `-max_a r(s, a, g)` and the shortest-path
    /// step count, over all reachable states.
    pub spearman_vs_steps: f64,
}

impl FieldDump {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,reward\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{}\n", r.x, r.y, r.reward));
        }
        out
    }
}

/// Emits `max_a r(s, a, g)` per reachable state for external plotting, along
/// with how faithfully the reward decays with shortest-path distance.
///
/// The correlation is taken over states at least one step from the goal:
/// the best action one step out reaches the absorbing goal and ties the
/// goal's own zero reward exactly, so including the goal state would cap
/// the statistic below 1 even on instances where the decay is perfect.
pub fn reward_field_dump(
    mdp: &DeterministicMdp,
    m: &WassersteinTable,
    scale: f64,
) -> FieldDump {
    let layers = compute_layers(mdp, m.goal);
    let mut records = Vec::new();
    let mut neg_rewards = Vec::new();
    let mut steps = Vec::new();
    for s in 0..mdp.n_states {
        let Some(k) = layers.steps[s] else { continue };
        let best = -m.min_over_actions(s) / scale;
        let e = mdp.embed(s);
        records.push(FieldRecord { x: e[0], y: e[1], reward: best });
        if k >= 1 {
            neg_rewards.push(-best);
            steps.push(k as f64);
        }
    }
    FieldDump {
        goal: m.goal,
        records,
        spearman_vs_steps: spearman(&neg_rewards, &steps),
    }
}

//! Offline goal-conditioned policy learning on top of a reward source:
//! expectile-regression value/Q critics with hindsight goal sampling,
//! behavior-regularized deterministic-gradient policy extraction for
//! continuous actions, and exact Q-iteration for tabular instances.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::{DeterministicMdp, EmbeddedDataset};
use crate::nn::{AdamState, Gradients, Mlp, NnError, TargetCopy};
use crate::occupancy::{value_iteration, OccError, TabularSolution};
use crate::reward::{RewardError, ShapedRewardSource};
use crate::util::{indexed_rng, stream_rng};

#[derive(Debug, Error)]
pub enum GcrlError {
    #[error("goal sampler probabilities must be non-negative and sum to 1 (got {0}, {1}, {2})")]
    BadSampler(f64, f64, f64),
    #[error("non-finite loss at batch index {0}")]
    NonFiniteLoss(usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("goal set is empty")]
    NoGoals,
    #[error("expectile must be in (0, 1), got {0}")]
    BadExpectile(f64),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Occ(#[from] OccError),
}

/// How within-trajectory future goals are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FutureSampling {
    Uniform,
    Geometric { gamma: f64 },
}

/// Hindsight goal mixture: current state, future state of the same
/// trajectory, or a uniformly random dataset state.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GoalSampler {
    pub p_cur: f64,
    pub p_traj: f64,
    pub p_rand: f64,
    pub future: FutureSampling,
}

impl GoalSampler {
    pub fn new(p_cur: f64, p_traj: f64, p_rand: f64) -> Result<Self, GcrlError> {
        let sampler = GoalSampler { p_cur, p_traj, p_rand, future: FutureSampling::Uniform };
        sampler.validate()?;
        Ok(sampler)
    }

    pub fn validate(&self) -> Result<(), GcrlError> {
        let ok = self.p_cur >= 0.0
            && self.p_traj >= 0.0
            && self.p_rand >= 0.0
            && (self.p_cur + self.p_traj + self.p_rand - 1.0).abs() < 1e-12;
        if ok {
            Ok(())
        } else {
            Err(GcrlError::BadSampler(self.p_cur, self.p_traj, self.p_rand))
        }
    }
}

/// A sampled goal: its embedding plus the state id when the dataset is
/// tabular.
#[derive(Debug, Clone)]
pub struct GoalDraw {
    pub embed: Vec<f64>,
    pub id: Option<usize>,
}

/// Draws one goal per batch element from the mixture. Future goals come
/// strictly from later indices of the same trajectory; a draw at a
/// trajectory's final state falls back to the state itself.
pub fn sample_goals<R: Rng>(
    ds: &EmbeddedDataset,
    batch: &[usize],
    sampler: &GoalSampler,
    rng: &mut R,
) -> Vec<GoalDraw> {
    let goal_at = |traj: usize, idx: usize| -> GoalDraw {
        GoalDraw {
            embed: ds.traj_states[traj][idx].clone(),
            id: ds.traj_state_ids.as_ref().map(|ids| ids[traj][idx]),
        }
    };
    batch
        .iter()
        .map(|&i| {
            let tuple = &ds.tuples[i];
            let u: f64 = rng.random();
            if u < sampler.p_cur {
                goal_at(tuple.traj_id, tuple.t)
            } else if u < sampler.p_cur + sampler.p_traj {
                let len = ds.traj_states[tuple.traj_id].len();
                if tuple.t + 1 >= len {
                    goal_at(tuple.traj_id, tuple.t)
                } else {
                    let idx = match sampler.future {
                        FutureSampling::Uniform => rng.random_range(tuple.t + 1..len),
                        FutureSampling::Geometric { gamma } => {
                            let dt = crate::flow::sample_geometric(gamma, rng);
                            (tuple.t + dt).min(len - 1)
                        }
                    };
                    goal_at(tuple.traj_id, idx)
                }
            } else {
                let j = rng.random_range(0..ds.tuples.len());
                let other = &ds.tuples[j];
                goal_at(other.traj_id, other.t)
            }
        })
        .collect()
}

/// Reward supplied to the critic: the shaped source (exact tables or the
/// distilled net) or the sparse control `r(s, g) = -1[s != g]`.
#[derive(Debug, Clone)]
pub enum RewardSource {
    Shaped(ShapedRewardSource),
    Sparse,
}

impl RewardSource {
    pub fn reward(&self, s: usize, a: usize, g: usize) -> Result<f64, RewardError> {
        match self {
            RewardSource::Shaped(src) => src.reward(s, a, g),
            RewardSource::Sparse => Ok(if s == g { 0.0 } else { -1.0 }),
        }
    }
}

/// Asymmetric squared loss: `|kappa - 1[u < 0]| * u^2`.
pub fn expectile_loss(u: f64, kappa: f64) -> f64 {
    let w = if u < 0.0 { 1.0 - kappa } else { kappa };
    w * u * u
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GciqlConfig {
    pub kappa: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub target_rate: f64,
    pub hidden: Vec<usize>,
    pub steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub eval_horizon: usize,
}

impl Default for GciqlConfig {
    fn default() -> Self {
        GciqlConfig {
            kappa: 0.6,
            alpha: 0.3,
            gamma: 0.99,
            batch_size: 256,
            lr: 3e-4,
            target_rate: 0.005,
            hidden: vec![64, 64],
            steps: 3000,
            eval_every: 500,
            eval_episodes: 50,
            eval_horizon: 40,
        }
    }
}

/// Expectile value net, double Q-nets, and their Polyak target copies.
pub struct ExpectileCritic {
    v: Mlp,
    q1: Mlp,
    q2: Mlp,
    tq1: TargetCopy,
    tq2: TargetCopy,
    adam_v: AdamState,
    adam_q1: AdamState,
    adam_q2: AdamState,
    pub kappa: f64,
    pub gamma: f64,
    pub target_rate: f64,
    state_dim: usize,
    action_dim: usize,
}

impl ExpectileCritic {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        goal_dim: usize,
        cfg: &GciqlConfig,
        seed: u64,
    ) -> Result<Self, GcrlError> {
        if !(cfg.kappa > 0.0 && cfg.kappa < 1.0) {
            return Err(GcrlError::BadExpectile(cfg.kappa));
        }
        let mut rng = stream_rng(seed, "critic-init");
        let v = Mlp::new(state_dim + goal_dim, &cfg.hidden, 1, &mut rng);
        let q1 = Mlp::new(state_dim + action_dim + goal_dim, &cfg.hidden, 1, &mut rng);
        let q2 = Mlp::new(state_dim + action_dim + goal_dim, &cfg.hidden, 1, &mut rng);
        let tq1 = TargetCopy::new(&q1);
        let tq2 = TargetCopy::new(&q2);
        Ok(ExpectileCritic {
            adam_v: AdamState::new(v.param_count(), cfg.lr),
            adam_q1: AdamState::new(q1.param_count(), cfg.lr),
            adam_q2: AdamState::new(q2.param_count(), cfg.lr),
            v,
            q1,
            q2,
            tq1,
            tq2,
            kappa: cfg.kappa,
            gamma: cfg.gamma,
            target_rate: cfg.target_rate,
            state_dim,
            action_dim,
        })
    }

    fn sg(&self, s: &[f64], g: &[f64]) -> Vec<f64> {
        let mut input = Vec::with_capacity(s.len() + g.len());
        input.extend_from_slice(s);
        input.extend_from_slice(g);
        input
    }

    fn sag(&self, s: &[f64], a: &[f64], g: &[f64]) -> Vec<f64> {
        let mut input = Vec::with_capacity(s.len() + a.len() + g.len());
        input.extend_from_slice(s);
        input.extend_from_slice(a);
        input.extend_from_slice(g);
        input
    }

    pub fn v_value(&self, s: &[f64], g: &[f64]) -> f64 {
        self.v.forward(&self.sg(s, g)).expect("v input")[0]
    }

    pub fn q_min(&self, s: &[f64], a: &[f64], g: &[f64]) -> f64 {
        let input = self.sag(s, a, g);
        let q1 = self.q1.forward(&input).expect("q input")[0];
        let q2 = self.q2.forward(&input).expect("q input")[0];
        q1.min(q2)
    }

    /// Minimum of the two target Q copies, the regression target for V.
    pub fn target_min_q(&self, s: &[f64], a: &[f64], g: &[f64]) -> f64 {
        let input = self.sag(s, a, g);
        let q1 = self.tq1.net().forward(&input).expect("q input")[0];
        let q2 = self.tq2.net().forward(&input).expect("q input")[0];
        q1.min(q2)
    }

    /// Overwrites the target copies; tests use this to pin orderings.
    pub fn set_targets(&mut self, tq1: Mlp, tq2: Mlp) {
        self.tq1 = TargetCopy::new(&tq1);
        self.tq2 = TargetCopy::new(&tq2);
    }
}

/// Gaussian policy head: `(s, g) -> (mean, log_std)` with the log-std
/// clamped to a configured range.
pub struct GaussianPolicy {
    net: Mlp,
    adam: AdamState,
    pub action_dim: usize,
    pub logstd_range: (f64, f64),
    /// Mean actions are squashed to `[-bound, bound]` per dimension.
    pub action_bound: f64,
}

impl GaussianPolicy {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        goal_dim: usize,
        cfg: &GciqlConfig,
        seed: u64,
    ) -> Self {
        let mut rng = stream_rng(seed, "policy-init");
        let net = Mlp::new(state_dim + goal_dim, &cfg.hidden, 2 * action_dim, &mut rng);
        GaussianPolicy {
            adam: AdamState::new(net.param_count(), cfg.lr),
            net,
            action_dim,
            logstd_range: (-5.0, 2.0),
            action_bound: 1.0,
        }
    }

    /// Rebuilds a policy around a checkpointed network (optimizer state is
    /// not preserved; this is for evaluation).
    pub fn from_net(net: Mlp, action_dim: usize, cfg: &GciqlConfig) -> Self {
        GaussianPolicy {
            adam: AdamState::new(net.param_count(), cfg.lr),
            net,
            action_dim,
            logstd_range: (-5.0, 2.0),
            action_bound: 1.0,
        }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    fn input(&self, s: &[f64], g: &[f64]) -> Vec<f64> {
        let mut input = Vec::with_capacity(s.len() + g.len());
        input.extend_from_slice(s);
        input.extend_from_slice(g);
        input
    }

    /// Squashed mean, clamped log-std, the derivative of the squash at each
    /// mean head, and a mask of clamped log-std entries (zero gradient).
    pub fn mean_logstd(&self, s: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<bool>) {
        let out = self.net.forward(&self.input(s, g)).expect("policy input");
        let mut mean = Vec::with_capacity(self.action_dim);
        let mut dmean = Vec::with_capacity(self.action_dim);
        for &v in &out[..self.action_dim] {
            let t = v.tanh();
            mean.push(self.action_bound * t);
            dmean.push(self.action_bound * (1.0 - t * t));
        }
        let mut clamped = vec![false; self.action_dim];
        let logstd: Vec<f64> = out[self.action_dim..]
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v < self.logstd_range.0 || v > self.logstd_range.1 {
                    clamped[i] = true;
                    v.clamp(self.logstd_range.0, self.logstd_range.1)
                } else {
                    v
                }
            })
            .collect();
        (mean, logstd, dmean, clamped)
    }

    /// Deterministic evaluation action: the policy mean.
    pub fn mean_action(&self, s: &[f64], g: &[f64]) -> Vec<f64> {
        self.mean_logstd(s, g).0
    }

    /// Action bound for continuous rollouts.
    pub fn bound(&self) -> f64 {
        self.action_bound
    }
}

/// One training row: a dataset tuple with its sampled critic and actor
/// goals and the critic's reward.
pub struct TrainRow {
    pub s: Vec<f64>,
    pub a_vec: Vec<f64>,
    pub s_next: Vec<f64>,
    pub critic_goal: GoalDraw,
    pub actor_goal: GoalDraw,
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GciqlLosses {
    pub v: f64,
    pub q: f64,
    pub pi: f64,
}

/// One simultaneous update of V (expectile regression toward the minimum of
/// the target double-Q), both Q-nets (TD regression with the supplied
/// reward), and the policy (normalized deterministic Q-gradient plus
/// behavioral log-likelihood), followed by a Polyak update of the target
/// copies. All gradients are computed at the pre-step parameters.
pub fn gciql_step(
    critic: &mut ExpectileCritic,
    policy: &mut GaussianPolicy,
    rows: &[TrainRow],
    alpha: f64,
) -> Result<GciqlLosses, GcrlError> {
    if rows.is_empty() {
        return Err(GcrlError::EmptyDataset);
    }
    let inv_b = 1.0 / rows.len() as f64;
    let kappa = critic.kappa;

    // V: expectile regression toward min target-Q.
    let mut v_grads = Gradients::zeros_like(&critic.v);
    let mut loss_v = 0.0;
    for (i, row) in rows.iter().enumerate() {
        let q_bar = critic.target_min_q(&row.s, &row.a_vec, &row.critic_goal.embed);
        let input = critic.sg(&row.s, &row.critic_goal.embed);
        let v = critic.v.forward(&input)?[0];
        let u = q_bar - v;
        let w = if u < 0.0 { 1.0 - kappa } else { kappa };
        loss_v += expectile_loss(u, kappa) * inv_b;
        if !loss_v.is_finite() {
            return Err(GcrlError::NonFiniteLoss(i));
        }
        critic.v.backward_into(&input, &[-2.0 * w * u * inv_b], &mut v_grads);
    }

    // Q: TD regression toward r + gamma * V(s', g), per net.
    let mut q1_grads = Gradients::zeros_like(&critic.q1);
    let mut q2_grads = Gradients::zeros_like(&critic.q2);
    let mut loss_q = 0.0;
    for (i, row) in rows.iter().enumerate() {
        let y = row.reward + critic.gamma * critic.v_value(&row.s_next, &row.critic_goal.embed);
        let input = critic.sag(&row.s, &row.a_vec, &row.critic_goal.embed);
        let q1 = critic.q1.forward(&input)?[0];
        let q2 = critic.q2.forward(&input)?[0];
        loss_q += 0.5 * ((q1 - y) * (q1 - y) + (q2 - y) * (q2 - y)) * inv_b;
        if !loss_q.is_finite() {
            return Err(GcrlError::NonFiniteLoss(i));
        }
        critic.q1.backward_into(&input, &[2.0 * (q1 - y) * inv_b], &mut q1_grads);
        critic.q2.backward_into(&input, &[2.0 * (q2 - y) * inv_b], &mut q2_grads);
    }

    // Policy: maximize lam * minQ(s, mu, g) + alpha * log pi(a | s, g).
    // First pass collects Q values at the mean action for the normalizer.
    let mut q_at_mu = Vec::with_capacity(rows.len());
    let mut heads = Vec::with_capacity(rows.len());
    for row in rows {
        let (mean, logstd, dmean, clamped) = policy.mean_logstd(&row.s, &row.actor_goal.embed);
        let input = critic.sag(&row.s, &mean, &row.actor_goal.embed);
        let q1 = critic.q1.forward(&input)?[0];
        let q2 = critic.q2.forward(&input)?[0];
        q_at_mu.push(q1.min(q2));
        heads.push((mean, logstd, dmean, clamped, q1 <= q2));
    }
    let mean_abs_q =
        q_at_mu.iter().map(|q| q.abs()).sum::<f64>() * inv_b;
    let lam = 1.0 / mean_abs_q.max(1e-8);
    let mut pi_grads = Gradients::zeros_like(&policy.net);
    let mut loss_pi = 0.0;
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    for (i, row) in rows.iter().enumerate() {
        let (mean, logstd, dmean, clamped, q1_is_min) = &heads[i];
        // dQ/da at a = mu, through the smaller of the two online nets.
        let qnet = if *q1_is_min { &critic.q1 } else { &critic.q2 };
        let input = critic.sag(&row.s, mean, &row.actor_goal.embed);
        let (_, input_grad) = qnet.backward(&input, &[1.0])?;
        let dq_da = &input_grad[critic.state_dim..critic.state_dim + critic.action_dim];
        // Behavioral log-likelihood of the dataset action.
        let mut logp = 0.0;
        let mut dlogp_dmean = vec![0.0; policy.action_dim];
        let mut dlogp_dlogstd = vec![0.0; policy.action_dim];
        for d in 0..policy.action_dim {
            let sigma = logstd[d].exp();
            let z = (row.a_vec[d] - mean[d]) / sigma;
            logp += -half_log_2pi - logstd[d] - 0.5 * z * z;
            dlogp_dmean[d] = z / sigma;
            dlogp_dlogstd[d] = if clamped[d] { 0.0 } else { z * z - 1.0 };
        }
        loss_pi -= (lam * q_at_mu[i] + alpha * logp) * inv_b;
        if !loss_pi.is_finite() {
            return Err(GcrlError::NonFiniteLoss(i));
        }
        // Seed for the policy net output: [d(-J)/d mean, d(-J)/d logstd].
        let mut seed = vec![0.0; 2 * policy.action_dim];
        for d in 0..policy.action_dim {
            // Chain rule through the tanh squash on the mean head.
            seed[d] = -(lam * dq_da[d] + alpha * dlogp_dmean[d]) * dmean[d] * inv_b;
            seed[policy.action_dim + d] = -(alpha * dlogp_dlogstd[d]) * inv_b;
        }
        let input = policy.input(&row.s, &row.actor_goal.embed);
        policy.net.backward_into(&input, &seed, &mut pi_grads);
    }

    // Apply all updates from the pre-step gradients, then move targets.
    let mut params = critic.v.flat_params();
    critic.adam_v.step(&mut params, v_grads.as_slice())?;
    critic.v.set_flat_params(&params)?;
    let mut params = critic.q1.flat_params();
    critic.adam_q1.step(&mut params, q1_grads.as_slice())?;
    critic.q1.set_flat_params(&params)?;
    let mut params = critic.q2.flat_params();
    critic.adam_q2.step(&mut params, q2_grads.as_slice())?;
    critic.q2.set_flat_params(&params)?;
    let mut params = policy.net.flat_params();
    policy.adam.step(&mut params, pi_grads.as_slice())?;
    policy.net.set_flat_params(&params)?;
    critic.tq1.polyak_update(&critic.q1, critic.target_rate)?;
    critic.tq2.polyak_update(&critic.q2, critic.target_rate)?;

    Ok(GciqlLosses { v: loss_v, q: loss_q, pi: loss_pi })
}

/// One row of the metrics stream CSV.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub step: usize,
    pub loss_v: f64,
    pub loss_q: f64,
    pub loss_pi: f64,
    pub eval_success: f64,
    pub eval_return: f64,
}

/// Full GCIQL training run on a tabular maze dataset. Evaluation snaps the
/// policy mean to the nearest discrete action and rolls it out in the maze.
#[allow(clippy::too_many_arguments)]
pub fn train_gciql(
    mdp: &DeterministicMdp,
    ds: &EmbeddedDataset,
    reward: &RewardSource,
    critic_sampler: &GoalSampler,
    actor_sampler: &GoalSampler,
    cfg: &GciqlConfig,
    eval_goals: &[usize],
    seed: u64,
) -> Result<(GaussianPolicy, ExpectileCritic, Vec<MetricsRow>), GcrlError> {
    if ds.is_empty() {
        return Err(GcrlError::EmptyDataset);
    }
    critic_sampler.validate()?;
    actor_sampler.validate()?;
    let goal_dim = ds.state_dim;
    let mut critic = ExpectileCritic::new(ds.state_dim, ds.action_dim, goal_dim, cfg, seed)?;
    let mut policy = GaussianPolicy::new(ds.state_dim, ds.action_dim, goal_dim, cfg, seed);
    let mut rng = stream_rng(seed, "gciql-train");
    let mut metrics = Vec::new();
    let mut last_losses = GciqlLosses { v: 0.0, q: 0.0, pi: 0.0 };
    for step in 0..cfg.steps {
        let batch: Vec<usize> =
            (0..cfg.batch_size).map(|_| rng.random_range(0..ds.len())).collect();
        let critic_goals = sample_goals(ds, &batch, critic_sampler, &mut rng);
        let actor_goals = sample_goals(ds, &batch, actor_sampler, &mut rng);
        let mut rows = Vec::with_capacity(batch.len());
        for ((&idx, cg), ag) in batch.iter().zip(critic_goals).zip(actor_goals) {
            let tuple = &ds.tuples[idx];
            let r = reward.reward(
                tuple.s_id.expect("tabular dataset"),
                tuple.a_id.expect("tabular dataset"),
                cg.id.expect("tabular dataset"),
            )?;
            rows.push(TrainRow {
                s: tuple.s.clone(),
                a_vec: tuple.a_vec.clone(),
                s_next: tuple.s_next.clone(),
                critic_goal: cg,
                actor_goal: ag,
                reward: r,
            });
        }
        last_losses = gciql_step(&mut critic, &mut policy, &rows, cfg.alpha)?;
        if (step + 1) % cfg.eval_every == 0 || step + 1 == cfg.steps {
            let report = evaluate_net_policy(
                mdp,
                &policy,
                eval_goals,
                cfg.eval_episodes,
                cfg.eval_horizon,
                seed,
            )?;
            metrics.push(MetricsRow {
                step: step + 1,
                loss_v: last_losses.v,
                loss_q: last_losses.q,
                loss_pi: last_losses.pi,
                eval_success: report.mean_success,
                eval_return: report.mean_return,
            });
        }
    }
    let _ = last_losses;
    Ok((policy, critic, metrics))
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub mean_success: f64,
    pub mean_return: f64,
    pub per_goal: Vec<(usize, f64)>,
}

/// Binary-success evaluation of the net policy on a maze: per episode the
/// policy mean is snapped to the nearest discrete action; success means
/// exact goal match within the horizon. Starts are uniform over non-goal
/// states with per-episode seeds, so reports are deterministic.
pub fn evaluate_net_policy(
    mdp: &DeterministicMdp,
    policy: &GaussianPolicy,
    goals: &[usize],
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<EvalReport, GcrlError> {
    evaluate_policy_impl(mdp, goals, episodes, horizon, seed, |s, g| {
        let mean = policy.mean_action(mdp.embed(s), mdp.embed(g));
        nearest_action(mdp, &mean)
    })
}

/// Same evaluation surface for a tabular policy (one action per state,
/// already goal-specific).
pub fn evaluate_tabular_policy(
    mdp: &DeterministicMdp,
    action_for: &dyn Fn(usize, usize) -> usize,
    goals: &[usize],
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<EvalReport, GcrlError> {
    evaluate_policy_impl(mdp, goals, episodes, horizon, seed, action_for)
}

fn evaluate_policy_impl(
    mdp: &DeterministicMdp,
    goals: &[usize],
    episodes: usize,
    horizon: usize,
    seed: u64,
    action_for: impl Fn(usize, usize) -> usize,
) -> Result<EvalReport, GcrlError> {
    if goals.is_empty() {
        return Err(GcrlError::NoGoals);
    }
    let mut per_goal = Vec::with_capacity(goals.len());
    let mut total_success = 0.0;
    let mut total_return = 0.0;
    for (gi, &g) in goals.iter().enumerate() {
        let mut successes = 0usize;
        for ep in 0..episodes {
            let mut rng = indexed_rng(seed, "eval-episode", (gi * episodes + ep) as u64);
            let mut s = rng.random_range(0..mdp.n_states);
            while s == g && mdp.n_states > 1 {
                s = rng.random_range(0..mdp.n_states);
            }
            let mut reached = s == g;
            let mut ep_return = 0.0;
            for _ in 0..horizon {
                if reached {
                    break;
                }
                ep_return += -1.0; // sparse step cost while away from goal
                let a = action_for(s, g);
                s = mdp.successor(s, a);
                if s == g {
                    reached = true;
                }
            }
            if reached {
                successes += 1;
            }
            total_return += ep_return;
        }
        let rate = successes as f64 / episodes as f64;
        per_goal.push((g, rate));
        total_success += rate;
    }
    Ok(EvalReport {
        mean_success: total_success / goals.len() as f64,
        mean_return: total_return / (goals.len() * episodes) as f64,
        per_goal,
    })
}

/// The discrete action whose displacement embedding is closest to `a`.
pub fn nearest_action(mdp: &DeterministicMdp, a: &[f64]) -> usize {
    (0..mdp.n_actions)
        .min_by(|&i, &j| {
            let di: f64 =
                mdp.action_vector(i).iter().zip(a).map(|(x, y)| (x - y) * (x - y)).sum();
            let dj: f64 =
                mdp.action_vector(j).iter().zip(a).map(|(x, y)| (x - y) * (x - y)).sum();
            di.partial_cmp(&dj).unwrap()
        })
        .expect("at least one action")
}

/// Exact Q-value iteration for a tabular instance: fixed point of
/// `Q(s,a) = r(s,a) + gamma * max_a' Q(f(s,a), a')` with lowest-id greedy
/// tie-breaking and the full argmax set per state.
pub fn tabular_q_iteration(
    mdp: &DeterministicMdp,
    reward: &dyn Fn(usize, usize) -> f64,
    gamma: f64,
    tol: f64,
) -> Result<TabularSolution, OccError> {
    value_iteration(mdp, reward, gamma, tol, 2_000_000)
}

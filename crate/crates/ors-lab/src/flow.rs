//! Learned generative occupancy model: a flow-matching velocity field over
//! future states conditioned on a state-action pair.
//!
//! Training has two phases. The warm-start phase regresses the velocity
//! toward `x1 - x0` where `x1` is a geometric-horizon future state drawn
//! from the same trajectory. The bootstrapped phase mixes the plain
//! next-state flow loss with a temporal-difference branch whose regression
//! target is the frozen velocity of a Polyak target copy, evaluated at an
//! interpolant built from the target copy's own samples. Samples are drawn
//! by Euler integration of the learned field from a standard normal base.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::EmbeddedDataset;
use crate::nn::{AdamState, Gradients, Mlp, NnError, TargetCopy};
use crate::util::stream_rng;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample {sample} diverged at Euler step {step}")]
    Diverged { sample: usize, step: usize },
    #[error("flow_steps must be at least 1")]
    BadFlowSteps,
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// How the bootstrapped branch builds the interpolation point `x_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FutureTargetMode {
    /// `x1` is sampled from the target copy's own flow (one Euler rollout
    /// per batch element).
    TargetSample,
    /// `x1` is replaced by a fresh standard normal draw, so `x_t` is a
    /// Gaussian-mixture point; both velocity fields are compared there.
    NoiseInterpolant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub gamma: f64,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
    /// Warm-start iterations (geometric-horizon regression).
    pub pretrain_steps: usize,
    /// Bootstrapped iterations.
    pub flow_steps_train: usize,
    /// Euler integration steps, shared by sampling and by the bootstrap
    /// branch's target rollouts.
    pub flow_steps_sample: usize,
    pub target_rate: f64,
    pub future_target_mode: FutureTargetMode,
    /// Multiplier applied to state embeddings before training; the flow
    /// transports the unit Gaussian to the scaled data, and samples are
    /// mapped back. Larger scales separate discrete modes more sharply
    /// relative to the base distribution.
    pub embed_scale: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            gamma: 0.99,
            hidden: vec![64, 64],
            lr: 3e-4,
            batch_size: 256,
            pretrain_steps: 2000,
            flow_steps_train: 2000,
            flow_steps_sample: 16,
            target_rate: 0.005,
            future_target_mode: FutureTargetMode::TargetSample,
            embed_scale: 1.0,
        }
    }
}

/// Velocity field `v(t, s, a, x)` with a Polyak-averaged target copy.
#[derive(Debug, Clone)]
pub struct VelocityFieldNet {
    net: Mlp,
    target: TargetCopy,
    pub state_dim: usize,
    pub cond_dim: usize,
    pub flow_steps: usize,
    pub gamma: f64,
    pub embed_scale: f64,
}

impl VelocityFieldNet {
    pub fn new(state_dim: usize, cond_dim: usize, cfg: &FlowConfig, seed: u64) -> Self {
        let mut rng = stream_rng(seed, "flow-init");
        let input_dim = 1 + state_dim + cond_dim + state_dim;
        let net = Mlp::new(input_dim, &cfg.hidden, state_dim, &mut rng);
        let target = TargetCopy::new(&net);
        VelocityFieldNet {
            net,
            target,
            state_dim,
            cond_dim,
            flow_steps: cfg.flow_steps_sample,
            gamma: cfg.gamma,
            embed_scale: cfg.embed_scale,
        }
    }

    pub fn from_net(net: Mlp, state_dim: usize, cond_dim: usize, flow_steps: usize, gamma: f64) -> Self {
        let target = TargetCopy::new(&net);
        VelocityFieldNet { net, target, state_dim, cond_dim, flow_steps, gamma, embed_scale: 1.0 }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn target_net(&self) -> &Mlp {
        self.target.net()
    }

    /// Overwrites the target copy; tests use this to probe stop-gradient.
    pub fn set_target_params(&mut self, params: &[f64]) -> Result<(), NnError> {
        let mut net = self.target.net().clone();
        net.set_flat_params(params)?;
        self.target = TargetCopy::new(&net);
        Ok(())
    }

    /// Maps an embedding-space vector into the model's latent space.
    pub fn latent(&self, v: &[f64]) -> Vec<f64> {
        v.iter().map(|x| x * self.embed_scale).collect()
    }

    /// Latent-space input layout: `(t, s_latent, a, x_latent)`.
    fn assemble(&self, t: f64, s: &[f64], a: &[f64], x: &[f64]) -> Vec<f64> {
        let mut input = Vec::with_capacity(1 + s.len() + a.len() + x.len());
        input.push(t);
        input.extend_from_slice(s);
        input.extend_from_slice(a);
        input.extend_from_slice(x);
        input
    }

    /// Velocity in latent coordinates: `s` is an embedding-space state,
    /// `x` a latent-space point.
    pub fn velocity(&self, t: f64, s: &[f64], a: &[f64], x: &[f64]) -> Vec<f64> {
        let s_lat = self.latent(s);
        self.net.forward(&self.assemble(t, &s_lat, a, x)).expect("velocity input shape")
    }

    pub fn velocity_target(&self, t: f64, s: &[f64], a: &[f64], x: &[f64]) -> Vec<f64> {
        let s_lat = self.latent(s);
        self.target.net().forward(&self.assemble(t, &s_lat, a, x)).expect("velocity input shape")
    }

    /// Euler integration in latent coordinates; `s` is an embedding-space
    /// state and the returned endpoint is latent.
    fn euler_with<R: Rng>(
        &self,
        net: &Mlp,
        s: &[f64],
        a: &[f64],
        flow_steps: usize,
        sample_idx: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>, FlowError> {
        let s_lat = self.latent(s);
        let mut x: Vec<f64> =
            (0..self.state_dim).map(|_| StandardNormal.sample(rng)).collect();
        let dt = 1.0 / flow_steps as f64;
        for step in 0..flow_steps {
            let t = step as f64 * dt;
            let v = net.forward(&self.assemble(t, &s_lat, a, &x))?;
            for (xi, vi) in x.iter_mut().zip(&v) {
                *xi += dt * vi;
                if !xi.is_finite() {
                    return Err(FlowError::Diverged { sample: sample_idx, step });
                }
            }
        }
        Ok(x)
    }

    /// Draws future-state samples by integrating `dx/dt = v(t, s, a, x)`
    /// from `x0 ~ N(0, I)` at `t = 0` to `t = 1` with uniform Euler steps.
    pub fn sample_future<R: Rng>(
        &self,
        s: &[f64],
        a: &[f64],
        n_samples: usize,
        flow_steps: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>, FlowError> {
        if flow_steps < 1 {
            return Err(FlowError::BadFlowSteps);
        }
        (0..n_samples)
            .map(|i| {
                self.euler_with(&self.net, s, a, flow_steps, i, rng)
                    .map(|x| x.iter().map(|v| v / self.embed_scale).collect())
            })
            .collect()
    }
}

/// Draw from the geometric distribution with success probability `1 - gamma`
/// (support `1, 2, ...`). `gamma = 0` returns 1 without consuming
/// randomness, which keeps RNG streams aligned with the plain flow loss.
pub fn sample_geometric<R: Rng>(gamma: f64, rng: &mut R) -> usize {
    if gamma <= 0.0 {
        return 1;
    }
    let u: f64 = rng.random();
    1 + ((1.0 - u).ln() / gamma.ln()).floor() as usize
}

/// Shared regression core: `loss = mean ||net(input) - target||^2`, with
/// parameter gradients scaled by `weight` accumulated into `grads`.
fn velocity_regression(
    net: &Mlp,
    rows: &[(Vec<f64>, Vec<f64>)],
    weight: f64,
    grads: &mut Gradients,
) -> Result<f64, FlowError> {
    if rows.is_empty() {
        return Err(FlowError::EmptyBatch);
    }
    let inv_b = 1.0 / rows.len() as f64;
    let mut loss = 0.0;
    for (input, target) in rows {
        let out = net.forward(input)?;
        let err: Vec<f64> = out.iter().zip(target).map(|(o, t)| o - t).collect();
        loss += err.iter().map(|e| e * e).sum::<f64>() * inv_b;
        let seed: Vec<f64> = err.iter().map(|e| 2.0 * e * inv_b * weight).collect();
        net.backward_into(input, &seed, grads);
    }
    Ok(loss)
}

/// Frozen regression targets for the bootstrapped branch: everything the
/// online update needs, with no live dependence on the target network.
pub struct FutureTargets {
    rows: Vec<(Vec<f64>, Vec<f64>)>,
}

impl FutureTargets {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Builds the bootstrapped branch's regression rows from the target copy:
/// per element, sample `x1` (per the configured mode), draw a fresh
/// `(x0, t)`, form `x_t`, and record the frozen target velocity
/// `v_target(t, s', a', x_t)`. The online input conditions on `(s, a)`.
pub fn build_future_targets<R: Rng>(
    model: &VelocityFieldNet,
    ds: &EmbeddedDataset,
    batch: &[usize],
    flow_steps: usize,
    mode: FutureTargetMode,
    rng: &mut R,
) -> Result<FutureTargets, FlowError> {
    let mut rows = Vec::with_capacity(batch.len());
    for (i, &idx) in batch.iter().enumerate() {
        let tuple = &ds.tuples[idx];
        let x1 = match mode {
            FutureTargetMode::TargetSample => model.euler_with(
                model.target.net(),
                &tuple.s_next,
                &tuple.a_next_cond,
                flow_steps,
                i,
                rng,
            )?,
            FutureTargetMode::NoiseInterpolant => {
                (0..model.state_dim).map(|_| StandardNormal.sample(rng)).collect()
            }
        };
        let x0: Vec<f64> = (0..model.state_dim).map(|_| StandardNormal.sample(rng)).collect();
        let t: f64 = rng.random();
        let x_t: Vec<f64> =
            x0.iter().zip(&x1).map(|(x0i, x1i)| (1.0 - t) * x0i + t * x1i).collect();
        let target_v = model.velocity_target(t, &tuple.s_next, &tuple.a_next_cond, &x_t);
        let input = model.assemble(t, &model.latent(&tuple.s), &tuple.a_cond, &x_t);
        rows.push((input, target_v));
    }
    Ok(FutureTargets { rows })
}

/// Gradient of the bootstrapped regression against frozen targets. This is
/// the only path from the future branch into the online parameters; it never
/// touches the target network.
pub fn future_regression_grad(
    net: &Mlp,
    targets: &FutureTargets,
    weight: f64,
    grads: &mut Gradients,
) -> Result<f64, FlowError> {
    velocity_regression(net, &targets.rows, weight, grads)
}

#[derive(Debug, Clone, Copy)]
pub struct StepLosses {
    pub total: f64,
    pub next: f64,
    pub future: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LossPoint {
    pub step: usize,
    pub phase: &'static str,
    pub total: f64,
    pub next: f64,
    pub future: f64,
}

/// Owns the model and its optimizer state during training.
pub struct FlowTrainer {
    pub model: VelocityFieldNet,
    adam: AdamState,
    cfg: FlowConfig,
}

impl FlowTrainer {
    pub fn new(state_dim: usize, cond_dim: usize, cfg: FlowConfig, seed: u64) -> Self {
        let model = VelocityFieldNet::new(state_dim, cond_dim, &cfg, seed);
        let adam = AdamState::new(model.net.param_count(), cfg.lr);
        FlowTrainer { model, adam, cfg }
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }

    fn sample_batch<R: Rng>(&self, ds: &EmbeddedDataset, rng: &mut R) -> Vec<usize> {
        (0..self.cfg.batch_size).map(|_| rng.random_range(0..ds.len())).collect()
    }

    /// One warm-start step: regress toward `x1 - x0` with `x1` a
    /// geometric-horizon future state from the same trajectory (clamped at
    /// the trajectory tail). Returns the pre-step loss.
    pub fn pretrain_step<R: Rng>(&mut self, ds: &EmbeddedDataset, rng: &mut R) -> Result<f64, FlowError> {
        if ds.is_empty() {
            return Err(FlowError::EmptyDataset);
        }
        let batch = self.sample_batch(ds, rng);
        let mut rows = Vec::with_capacity(batch.len());
        for &idx in &batch {
            let tuple = &ds.tuples[idx];
            let traj = &ds.traj_states[tuple.traj_id];
            let t_tau = sample_geometric(self.cfg.gamma, rng);
            let future = (tuple.t + t_tau).min(traj.len() - 1);
            let x1 = self.model.latent(&traj[future]);
            let x0: Vec<f64> =
                (0..self.model.state_dim).map(|_| StandardNormal.sample(rng)).collect();
            let t: f64 = rng.random();
            let x_t: Vec<f64> =
                x0.iter().zip(&x1).map(|(x0i, x1i)| (1.0 - t) * x0i + t * x1i).collect();
            let target: Vec<f64> = x1.iter().zip(&x0).map(|(x1i, x0i)| x1i - x0i).collect();
            let input = self.model.assemble(t, &self.model.latent(&tuple.s), &tuple.a_cond, &x_t);
            rows.push((input, target));
        }
        let mut grads = Gradients::zeros_like(&self.model.net);
        let loss = velocity_regression(&self.model.net, &rows, 1.0, &mut grads)?;
        let mut params = self.model.net.flat_params();
        self.adam.step(&mut params, grads.as_slice())?;
        self.model.net.set_flat_params(&params)?;
        Ok(loss)
    }

    /// One bootstrapped step on
    /// `(1 - gamma) * L_next + gamma * L_future`, followed by a Polyak
    /// update of the target copy. With `gamma = 0` the future branch is
    /// skipped entirely and consumes no randomness.
    pub fn flow_loss_step<R: Rng>(
        &mut self,
        ds: &EmbeddedDataset,
        rng: &mut R,
    ) -> Result<StepLosses, FlowError> {
        if ds.is_empty() {
            return Err(FlowError::EmptyDataset);
        }
        let gamma = self.cfg.gamma;
        let batch = self.sample_batch(ds, rng);
        let mut next_rows = Vec::with_capacity(batch.len());
        for &idx in &batch {
            let tuple = &ds.tuples[idx];
            let x1 = self.model.latent(&tuple.s_next);
            let x0: Vec<f64> =
                (0..self.model.state_dim).map(|_| StandardNormal.sample(rng)).collect();
            let t: f64 = rng.random();
            let x_t: Vec<f64> =
                x0.iter().zip(&x1).map(|(x0i, x1i)| (1.0 - t) * x0i + t * x1i).collect();
            let target: Vec<f64> = x1.iter().zip(&x0).map(|(x1i, x0i)| x1i - x0i).collect();
            let input = self.model.assemble(t, &self.model.latent(&tuple.s), &tuple.a_cond, &x_t);
            next_rows.push((input, target));
        }
        let mut grads = Gradients::zeros_like(&self.model.net);
        let loss_next = velocity_regression(&self.model.net, &next_rows, 1.0 - gamma, &mut grads)?;
        let loss_future = if gamma > 0.0 {
            let targets = build_future_targets(
                &self.model,
                ds,
                &batch,
                self.cfg.flow_steps_sample,
                self.cfg.future_target_mode,
                rng,
            )?;
            future_regression_grad(&self.model.net, &targets, gamma, &mut grads)?
        } else {
            0.0
        };
        let mut params = self.model.net.flat_params();
        self.adam.step(&mut params, grads.as_slice())?;
        self.model.net.set_flat_params(&params)?;
        if gamma > 0.0 {
            self.model.target.polyak_update(&self.model.net, self.cfg.target_rate)?;
        }
        Ok(StepLosses {
            total: (1.0 - gamma) * loss_next + gamma * loss_future,
            next: loss_next,
            future: loss_future,
        })
    }
}

/// Full training run: warm-start steps, then bootstrapped steps, exactly in
/// that order. Deterministic per seed; zero steps returns the initialized
/// net unchanged.
pub fn train_occupancy(
    ds: &EmbeddedDataset,
    cfg: FlowConfig,
    seed: u64,
) -> Result<(VelocityFieldNet, Vec<LossPoint>), FlowError> {
    if ds.is_empty() {
        return Err(FlowError::EmptyDataset);
    }
    let mut trainer = FlowTrainer::new(ds.state_dim, ds.cond_action_dim, cfg, seed);
    let mut rng: ChaCha12Rng = stream_rng(seed, "flow-train");
    let mut curve = Vec::new();
    for step in 0..trainer.cfg.pretrain_steps {
        let loss = trainer.pretrain_step(ds, &mut rng)?;
        curve.push(LossPoint { step, phase: "pretrain", total: loss, next: loss, future: 0.0 });
    }
    for step in 0..trainer.cfg.flow_steps_train {
        let losses = trainer.flow_loss_step(ds, &mut rng)?;
        curve.push(LossPoint {
            step: trainer.cfg.pretrain_steps + step,
            phase: "flow",
            total: losses.total,
            next: losses.next,
            future: losses.future,
        });
    }
    Ok((trainer.model, curve))
}

/// Snapped-sample distribution over a finite embedding set: draws samples,
/// snaps each to the nearest embedding, and returns empirical frequencies.
pub fn snapped_distribution<R: Rng>(
    model: &VelocityFieldNet,
    s: &[f64],
    a: &[f64],
    embeddings: &[Vec<f64>],
    n_samples: usize,
    flow_steps: usize,
    rng: &mut R,
) -> Result<Vec<f64>, FlowError> {
    let samples = model.sample_future(s, a, n_samples, flow_steps, rng)?;
    let mut counts = vec![0usize; embeddings.len()];
    for sample in &samples {
        let nearest = embeddings
            .iter()
            .enumerate()
            .min_by(|(_, e1), (_, e2)| {
                let d1: f64 = e1.iter().zip(sample).map(|(a, b)| (a - b) * (a - b)).sum();
                let d2: f64 = e2.iter().zip(sample).map(|(a, b)| (a - b) * (a - b)).sum();
                d1.partial_cmp(&d2).unwrap()
            })
            .map(|(i, _)| i)
            .expect("non-empty embedding set");
        counts[nearest] += 1;
    }
    Ok(counts.iter().map(|&c| c as f64 / n_samples as f64).collect())
}

pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{generate_dataset, DeterministicMdp, EmbeddedDataset, GridMaze, PolicySpec, PolicyTable};
    use crate::nn::{Activation, LayerSpec};
    use crate::occupancy::{solve_occupancy, OccupancyTable};
    use rand::SeedableRng;

    fn small_cfg() -> FlowConfig {
        FlowConfig {
            gamma: 0.5,
            hidden: vec![32, 32],
            batch_size: 64,
            pretrain_steps: 0,
            flow_steps_train: 0,
            flow_steps_sample: 8,
            ..FlowConfig::default()
        }
    }

    fn chain_dataset(n: usize, gamma: f64, seed: u64) -> (DeterministicMdp, EmbeddedDataset) {
        let mdp = DeterministicMdp::from_maze(&GridMaze::chain(n), gamma);
        let ds = generate_dataset(&mdp, PolicySpec::UniformRandom, 0, 40, 30, seed).unwrap();
        let emb = EmbeddedDataset::from_tabular(&mdp, &ds);
        (mdp, emb)
    }

    #[test]
    fn zero_target_regression_loss_is_mean_squared_velocity() {
        // When x1 = x0 the regression target is the zero vector, so the loss
        // must equal the mean squared velocity norm.
        let mut rng = stream_rng(3, "t");
        let net = Mlp::new(4, &[8], 2, &mut rng);
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..16)
            .map(|i| {
                let input: Vec<f64> = (0..4).map(|j| ((i * 4 + j) as f64).sin()).collect();
                (input, vec![0.0, 0.0])
            })
            .collect();
        let mut grads = Gradients::zeros_like(&net);
        let loss = velocity_regression(&net, &rows, 1.0, &mut grads).unwrap();
        let expected: f64 = rows
            .iter()
            .map(|(input, _)| net.forward(input).unwrap().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / rows.len() as f64;
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn geometric_mean_matches_closed_form() {
        let mut rng = stream_rng(11, "geom");
        let n = 100_000;
        let mean = (0..n).map(|_| sample_geometric(0.99, &mut rng) as f64).sum::<f64>() / n as f64;
        assert!((mean - 100.0).abs() / 100.0 < 0.05, "mean {mean}");
        // gamma = 0 is the deterministic one-step case and draws nothing.
        let before = rng.clone();
        assert_eq!(sample_geometric(0.0, &mut rng), 1);
        assert_eq!(rng, before);
    }

    #[test]
    fn zero_velocity_field_returns_base_draws() {
        let specs = [LayerSpec { width: 2, activation: Activation::Identity, layer_norm: false }];
        let net = Mlp::zeroed(7, &specs);
        let model = VelocityFieldNet::from_net(net, 2, 2, 8, 0.5);
        let mut r1 = stream_rng(5, "draw");
        let samples = model.sample_future(&[0.0, 0.0], &[1.0, 0.0], 4, 8, &mut r1).unwrap();
        let mut r2 = stream_rng(5, "draw");
        for sample in samples {
            let x0: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut r2)).collect();
            assert_eq!(sample, x0);
        }
    }

    #[test]
    fn single_step_euler_is_one_velocity_increment() {
        let mut rng = stream_rng(6, "net");
        let net = Mlp::new(7, &[8], 2, &mut rng);
        let model = VelocityFieldNet::from_net(net, 2, 2, 1, 0.5);
        let s = [0.5, 0.5];
        let a = [1.0, 0.0];
        let mut r1 = stream_rng(7, "draw");
        let sample = &model.sample_future(&s, &a, 1, 1, &mut r1).unwrap()[0];
        let mut r2 = stream_rng(7, "draw");
        let x0: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut r2)).collect();
        let v = model.velocity(0.0, &s, &a, &x0);
        for i in 0..2 {
            assert!((sample[i] - (x0[i] + v[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn flow_steps_zero_rejected() {
        let mut rng = stream_rng(6, "net");
        let net = Mlp::new(7, &[8], 2, &mut rng);
        let model = VelocityFieldNet::from_net(net, 2, 2, 1, 0.5);
        let mut r = stream_rng(0, "r");
        assert!(matches!(
            model.sample_future(&[0.0, 0.0], &[1.0, 0.0], 1, 0, &mut r),
            Err(FlowError::BadFlowSteps)
        ));
    }

    #[test]
    fn overfit_single_datum_drives_loss_down() {
        let (_, emb) = chain_dataset(3, 0.5, 1);
        let single = EmbeddedDataset {
            tuples: vec![emb.tuples[0].clone()],
            traj_states: emb.traj_states.clone(),
            traj_state_ids: emb.traj_state_ids.clone(),
            state_dim: emb.state_dim,
            cond_action_dim: emb.cond_action_dim,
            action_dim: emb.action_dim,
        };
        let mut cfg = small_cfg();
        cfg.gamma = 0.5;
        cfg.batch_size = 16;
        let mut trainer = FlowTrainer::new(2, 5, cfg, 42);
        let mut rng = stream_rng(42, "overfit");
        let initial = trainer.pretrain_step(&single, &mut rng).unwrap();
        let mut last = initial;
        for _ in 0..5000 {
            last = trainer.pretrain_step(&single, &mut rng).unwrap();
        }
        assert!(last < 0.1 * initial, "initial {initial}, final {last}");
    }

    #[test]
    fn gamma_zero_flow_step_equals_pretrain_step() {
        let (_, emb) = chain_dataset(4, 0.5, 2);
        let mut cfg = small_cfg();
        cfg.gamma = 0.0;
        let mut a = FlowTrainer::new(2, 5, cfg.clone(), 9);
        let mut b = FlowTrainer::new(2, 5, cfg, 9);
        assert_eq!(a.model.net.flat_params(), b.model.net.flat_params());
        let mut rng_a = stream_rng(77, "shared");
        let mut rng_b = stream_rng(77, "shared");
        for _ in 0..5 {
            let la = a.flow_loss_step(&emb, &mut rng_a).unwrap();
            let lb = b.pretrain_step(&emb, &mut rng_b).unwrap();
            assert_eq!(la.next, lb);
        }
        assert_eq!(a.model.net.flat_params(), b.model.net.flat_params());
    }

    #[test]
    fn gamma_near_zero_matches_plain_flow_loss() {
        let (_, emb) = chain_dataset(4, 0.5, 3);
        let mut cfg = small_cfg();
        cfg.gamma = 1e-8;
        let mut trainer = FlowTrainer::new(2, 5, cfg, 13);
        let mut rng = stream_rng(8, "mix");
        let losses = trainer.flow_loss_step(&emb, &mut rng).unwrap();
        assert!((losses.total - losses.next).abs() / losses.next.abs().max(1e-12) < 1e-6);
    }

    #[test]
    fn mixture_weights_combine_branch_losses() {
        let (_, emb) = chain_dataset(4, 0.5, 4);
        let mut cfg = small_cfg();
        cfg.gamma = 0.37;
        let mut trainer = FlowTrainer::new(2, 5, cfg, 21);
        let mut rng = stream_rng(31, "combine");
        let losses = trainer.flow_loss_step(&emb, &mut rng).unwrap();
        let expected = (1.0 - 0.37) * losses.next + 0.37 * losses.future;
        assert!((losses.total - expected).abs() < 1e-12);
    }

    #[test]
    fn future_branch_gradient_ignores_live_target_perturbation() {
        let (_, emb) = chain_dataset(4, 0.5, 5);
        let cfg = small_cfg();
        let mut trainer = FlowTrainer::new(2, 5, cfg, 33);
        let batch: Vec<usize> = (0..16).collect();
        let mut rng = stream_rng(51, "targets");
        let targets = build_future_targets(
            &trainer.model,
            &emb,
            &batch,
            8,
            FutureTargetMode::TargetSample,
            &mut rng,
        )
        .unwrap();
        let mut g1 = Gradients::zeros_like(trainer.model.net());
        future_regression_grad(trainer.model.net(), &targets, 1.0, &mut g1).unwrap();
        // Perturb the target net after target construction; the online
        // gradient against the frozen targets must not move at all.
        let mut perturbed = trainer.model.target_net().flat_params();
        for p in &mut perturbed {
            *p += 1e-3;
        }
        trainer.model.set_target_params(&perturbed).unwrap();
        let mut g2 = Gradients::zeros_like(trainer.model.net());
        future_regression_grad(trainer.model.net(), &targets, 1.0, &mut g2).unwrap();
        let max_diff = g1
            .as_slice()
            .iter()
            .zip(g2.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff < 1e-8, "stop-gradient leak: {max_diff}");
    }

    #[test]
    fn future_branch_gradient_matches_finite_differences() {
        let (_, emb) = chain_dataset(3, 0.5, 6);
        let trainer = FlowTrainer::new(2, 5, small_cfg(), 35);
        let batch: Vec<usize> = (0..8).collect();
        let mut rng = stream_rng(52, "targets");
        let targets =
            build_future_targets(&trainer.model, &emb, &batch, 4, FutureTargetMode::TargetSample, &mut rng)
                .unwrap();
        let net = trainer.model.net().clone();
        let mut grads = Gradients::zeros_like(&net);
        future_regression_grad(&net, &targets, 1.0, &mut grads).unwrap();
        let analytic = grads.as_slice().to_vec();
        let mut params = net.flat_params();
        let h = 1e-4;
        let loss_of = |net: &Mlp| -> f64 {
            let mut sink = Gradients::zeros_like(net);
            future_regression_grad(net, &targets, 1.0, &mut sink).unwrap()
        };
        let mut rng_idx = stream_rng(53, "probe");
        for _ in 0..16 {
            let i = rng_idx.random_range(0..params.len());
            let orig = params[i];
            params[i] = orig + h;
            let mut plus = net.clone();
            plus.set_flat_params(&params).unwrap();
            params[i] = orig - h;
            let mut minus = net.clone();
            minus.set_flat_params(&params).unwrap();
            params[i] = orig;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let denom = analytic[i].abs().max(fd.abs()).max(1e-2);
            assert!((analytic[i] - fd).abs() / denom < 1e-5, "param {i}");
        }
    }

    #[test]
    fn target_only_drifts_by_polyak() {
        let (_, emb) = chain_dataset(4, 0.5, 7);
        let mut cfg = small_cfg();
        cfg.target_rate = 0.1;
        let mut trainer = FlowTrainer::new(2, 5, cfg, 61);
        let mut rng = stream_rng(62, "drift");
        let target_before = trainer.model.target_net().flat_params();
        trainer.flow_loss_step(&emb, &mut rng).unwrap();
        let online_after = trainer.model.net().flat_params();
        let target_after = trainer.model.target_net().flat_params();
        for ((tb, oa), ta) in target_before.iter().zip(&online_after).zip(&target_after) {
            assert!((ta - (0.9 * tb + 0.1 * oa)).abs() < 1e-15);
        }
    }

    #[test]
    fn train_with_zero_steps_returns_initialized_net() {
        let (_, emb) = chain_dataset(3, 0.5, 8);
        let cfg = small_cfg();
        let init = FlowTrainer::new(emb.state_dim, emb.cond_action_dim, cfg.clone(), 71);
        let (model, curve) = train_occupancy(&emb, cfg, 71).unwrap();
        assert!(curve.is_empty());
        assert_eq!(model.net().flat_params(), init.model.net().flat_params());
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let (_, emb) = chain_dataset(3, 0.5, 9);
        let mut cfg = small_cfg();
        cfg.pretrain_steps = 20;
        cfg.flow_steps_train = 20;
        let (m1, c1) = train_occupancy(&emb, cfg.clone(), 123).unwrap();
        let (m2, c2) = train_occupancy(&emb, cfg, 123).unwrap();
        assert_eq!(m1.net().flat_params(), m2.net().flat_params());
        assert_eq!(c1.len(), c2.len());
        for (a, b) in c1.iter().zip(&c2) {
            assert_eq!(a.total, b.total);
        }
    }

    #[test]
    fn euler_error_shrinks_when_steps_double() {
        // Smooth random field: endpoint shift between consecutive step
        // counts must shrink by at least 1.5x when steps double.
        let mut rng = stream_rng(81, "field");
        let net = Mlp::new(7, &[16], 2, &mut rng);
        let model = VelocityFieldNet::from_net(net, 2, 2, 8, 0.5);
        let s = [0.3, 0.7];
        let a = [0.5, 0.5];
        let endpoint = |steps: usize, seed: u64| -> Vec<Vec<f64>> {
            let mut r = stream_rng(seed, "euler");
            model.sample_future(&s, &a, 32, steps, &mut r).unwrap()
        };
        let e8 = endpoint(8, 5);
        let e16 = endpoint(16, 5);
        let e32 = endpoint(32, 5);
        let mean_shift = |a: &[Vec<f64>], b: &[Vec<f64>]| -> f64 {
            a.iter()
                .zip(b)
                .map(|(x, y)| {
                    x.iter().zip(y).map(|(xi, yi)| (xi - yi) * (xi - yi)).sum::<f64>().sqrt()
                })
                .sum::<f64>()
                / a.len() as f64
        };
        let shift1 = mean_shift(&e8, &e16);
        let shift2 = mean_shift(&e16, &e32);
        assert!(shift1 >= 1.5 * shift2, "shift1 {shift1}, shift2 {shift2}");
    }

    /// Exact occupancy rows for a tabular instance, for fidelity comparison.
    fn exact_rows(mdp: &DeterministicMdp, gamma: f64) -> OccupancyTable {
        let pi = PolicyTable::uniform(mdp);
        solve_occupancy(mdp, &pi, gamma).unwrap()
    }

    #[test]
    fn trained_two_state_chain_recovers_occupancy_modes() {
        let gamma = 0.5;
        let mdp = DeterministicMdp::from_maze(&GridMaze::chain(2), gamma);
        let ds = generate_dataset(&mdp, PolicySpec::UniformRandom, 0, 120, 40, 17).unwrap();
        let emb = EmbeddedDataset::from_tabular(&mdp, &ds);
        // Warm-start-heavy schedule: this dataset fully covers the chain, so
        // the bootstrapped phase adds bias without any stitching to do.
        let cfg = FlowConfig {
            gamma,
            hidden: vec![64, 64],
            batch_size: 128,
            pretrain_steps: 12_000,
            flow_steps_train: 0,
            flow_steps_sample: 16,
            target_rate: 0.02,
            embed_scale: 1.0,
            ..FlowConfig::default()
        };
        let (model, _) = train_occupancy(&emb, cfg, 2024).unwrap();
        let exact = exact_rows(&mdp, gamma);
        let embeddings: Vec<Vec<f64>> = (0..2).map(|s| mdp.embed(s).to_vec()).collect();
        let mut rng = stream_rng(90, "fidelity");
        for s in 0..2 {
            for a in 0..mdp.n_actions {
                let samples = model
                    .sample_future(mdp.embed(s), &one_hot(a, mdp.n_actions), 800, 96, &mut rng)
                    .unwrap();
                // Nearly all samples land within 0.2 of a state embedding.
                let near = samples
                    .iter()
                    .filter(|smp| {
                        embeddings.iter().any(|e| {
                            e.iter()
                                .zip(smp.iter())
                                .map(|(a, b)| (a - b) * (a - b))
                                .sum::<f64>()
                                .sqrt()
                                < 0.2
                        })
                    })
                    .count();
                assert!(
                    near as f64 / samples.len() as f64 >= 0.95,
                    "({s},{a}): only {near}/800 samples near a mode"
                );
                let snapped = snapped_distribution(
                    &model,
                    mdp.embed(s),
                    &one_hot(a, mdp.n_actions),
                    &embeddings,
                    800,
                    96,
                    &mut rng,
                )
                .unwrap();
                for sp in 0..2 {
                    assert!(
                        (snapped[sp] - exact.prob(s, a, sp)).abs() < 0.1,
                        "({s},{a}) mode {sp}: {} vs exact {}",
                        snapped[sp],
                        exact.prob(s, a, sp)
                    );
                }
            }
        }
    }

    fn one_hot(a: usize, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[a] = 1.0;
        v
    }
}

//! From a trained occupancy model to rewards: the Monte-Carlo velocity-MSE
//! estimator, its empirical upper-bound validation against the exact tables,
//! and the distilled reward network.
//!
//! Run with: cargo run --release --example reward_distillation

use ors_lab::envs::{generate_dataset, DeterministicMdp, EmbeddedDataset, GridMaze, PolicySpec};
use ors_lab::flow::{train_occupancy, FlowConfig};
use ors_lab::gcrl::GoalSampler;
use ors_lab::occupancy::{solve_occupancy, wasserstein_to_goal};
use ors_lab::reward::{
    estimate_w2_mse, train_reward, validate_w2_bound, RewardTrainConfig, ShapedRewardSource,
};
use ors_lab::util::stream_rng;

fn one_hot(a: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[a] = 1.0;
    v
}

fn main() {
    let gamma = 0.5;
    let mdp = DeterministicMdp::from_maze(&GridMaze::chain(4), gamma);
    let ds = generate_dataset(&mdp, PolicySpec::UniformRandom, 0, 200, 40, 3).unwrap();
    let emb = EmbeddedDataset::from_tabular(&mdp, &ds);
    let cfg = FlowConfig {
        gamma,
        hidden: vec![64, 64],
        batch_size: 128,
        pretrain_steps: 6000,
        flow_steps_train: 500,
        flow_steps_sample: 16,
        target_rate: 0.02,
        ..FlowConfig::default()
    };
    println!("training occupancy model on the 4-chain...");
    let (model, _) = train_occupancy(&emb, cfg, 11).unwrap();

    // Exact tables under the dataset policy (no goal absorption: this is
    // the distribution the model actually learned).
    let pi = ds.empirical_policy();
    let occ = solve_occupancy(&mdp, &pi, gamma).unwrap();
    let tables: Vec<_> =
        (0..mdp.n_states).map(|g| wasserstein_to_goal(&mdp, &occ, &pi, g).unwrap()).collect();

    let mut rng = stream_rng(4, "demo");
    println!("\nvelocity-MSE estimates vs exact squared distances (s=0, a=right):");
    for g in 0..mdp.n_states {
        let est = estimate_w2_mse(
            &model,
            mdp.embed(0),
            &one_hot(2, mdp.n_actions),
            mdp.embed(g),
            2000,
            &mut rng,
        )
        .unwrap();
        println!(
            "  goal {g}: estimate {:7.3} +- {:.3}   exact {:7.3}",
            est.mean,
            est.std_error,
            tables[g].value(0, 2)
        );
    }

    let report = validate_w2_bound(&model, &mdp, &tables, 128, false, &mut rng).unwrap();
    println!(
        "\nbound over all {} triples: C_hat {:.3}, spearman {:.4}, {} violations -> {}",
        report.triples,
        report.c_hat,
        report.spearman_rho,
        report.violations.len(),
        if report.passed { "pass" } else { "fail" }
    );

    println!("\ndistilling the reward net...");
    let sampler = GoalSampler::new(0.2, 0.5, 0.3).unwrap();
    let rcfg = RewardTrainConfig { steps: 1500, ..RewardTrainConfig::default() };
    let (net, losses) = train_reward(&model, &emb, &sampler, &rcfg, 21).unwrap();
    println!("regression loss {:.4} -> {:.4}", losses.first().unwrap().1, losses.last().unwrap().1);

    let distilled = ShapedRewardSource::distilled(&mdp, net);
    let exact = ShapedRewardSource::Exact { tables, scale: 1.0 };
    println!("\nshaped rewards, distilled vs exact (goal = state 3):");
    for s in 0..mdp.n_states {
        let d = distilled.reward(s, 2, 3).unwrap();
        let e = exact.reward(s, 2, 3).unwrap();
        println!("  s={s}: distilled {d:8.3}   exact {e:8.3}");
    }
}

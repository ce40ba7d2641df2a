//! GCIQL policy training with shaped vs sparse rewards on a maze, under an
//! identical limited training budget.
//!
//! Run with: cargo run --release --example policy_training

use ors_lab::envs::{generate_dataset, DeterministicMdp, EmbeddedDataset, GridMaze, PolicySpec};
use ors_lab::gcrl::{train_gciql, GciqlConfig, GoalSampler, RewardSource};
use ors_lab::reward::ShapedRewardSource;

fn main() {
    let mdp = DeterministicMdp::from_maze(&GridMaze::open(8, 8), 0.99);
    let eval_goals: Vec<usize> = (0..5).map(|i| i * (mdp.n_states - 1) / 4).collect();
    let cfg = GciqlConfig {
        kappa: 0.6,
        alpha: 0.1,
        gamma: 0.99,
        batch_size: 128,
        lr: 3e-4,
        target_rate: 0.005,
        hidden: vec![64, 64],
        steps: 1000,
        eval_every: 250,
        eval_episodes: 50,
        eval_horizon: 40,
    };
    let sampler = GoalSampler::new(0.2, 0.5, 0.3).unwrap();

    let ds = generate_dataset(&mdp, PolicySpec::EpsGreedyRandomGoals { eps: 0.4 }, 0, 300, 40, 1000)
        .unwrap();
    let emb = EmbeddedDataset::from_tabular(&mdp, &ds);
    println!(
        "8x8 maze, mediocre behavioral dataset ({} tuples), {} training steps per arm",
        emb.len(),
        cfg.steps
    );

    let shaped =
        ShapedRewardSource::exact_all_goals_normalized(&mdp, &ds.empirical_policy(), 0.99).unwrap();
    for (name, reward) in
        [("shaped", RewardSource::Shaped(shaped)), ("sparse", RewardSource::Sparse)]
    {
        let start = std::time::Instant::now();
        let (_, _, metrics) =
            train_gciql(&mdp, &emb, &reward, &sampler, &sampler, &cfg, &eval_goals, 0).unwrap();
        let curve: Vec<String> =
            metrics.iter().map(|m| format!("{:.2}@{}", m.eval_success, m.step)).collect();
        println!(
            "{name:>7}: final success {:.3} (curve: {}) in {:.1?}",
            metrics.last().unwrap().eval_success,
            curve.join(" "),
            start.elapsed()
        );
    }
}

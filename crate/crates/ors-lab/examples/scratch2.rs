use ors_lab::envs::{generate_dataset, DeterministicMdp, EmbeddedDataset, GridMaze, PolicySpec};
use ors_lab::gcrl::{train_gciql, GciqlConfig, GoalSampler, RewardSource};
use ors_lab::reward::ShapedRewardSource;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(3000);
    let hidden: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(64);
    let batch: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(128);
    let eps: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.4);
    let n_seeds: u64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(4);
    let alpha: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(0.3);
    let horizon: usize = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(40);

    let side: usize = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(8);
    let n_traj: usize = args.get(9).map(|s| s.parse().unwrap()).unwrap_or(400);
    let traj_len: usize = args.get(10).map(|s| s.parse().unwrap()).unwrap_or(40);
    let kappa: f64 = args.get(11).map(|s| s.parse().unwrap()).unwrap_or(0.6);
    let start = std::time::Instant::now();
    let mdp = DeterministicMdp::from_maze(&GridMaze::open(side, side), 0.99);
    let eval_goals: Vec<usize> = (0..5).map(|i| i * (mdp.n_states - 1) / 4).collect();
    let cfg = GciqlConfig {
        kappa,
        alpha,
        gamma: 0.99,
        batch_size: batch,
        lr: 3e-4,
        target_rate: 0.005,
        hidden: vec![hidden, hidden],
        steps,
        eval_every: steps / 4,
        eval_episodes: 50,
        eval_horizon: horizon,
    };
    let sampler = GoalSampler::new(0.2, 0.5, 0.3).unwrap();
    let mut ors_scores = Vec::new();
    let mut sparse_scores = Vec::new();
    for seed in 0..n_seeds {
        let ds = generate_dataset(
            &mdp,
            PolicySpec::EpsGreedyRandomGoals { eps },
            0,
            n_traj,
            traj_len,
            1000 + seed,
        )
        .unwrap();
        let emb = EmbeddedDataset::from_tabular(&mdp, &ds);
        // Normalize shaped rewards to [-1, 0] so Q scales match sparse.
        let pi_hat = ds.empirical_policy();
        let tables: Vec<_> = (0..mdp.n_states)
            .map(|g| ors_lab::occupancy::goal_tables(&mdp, &pi_hat, 0.99, g).unwrap())
            .collect();
        // Mean-magnitude normalization: typical rewards near -1.
        let scale = {
            let mut total = 0.0;
            let mut count = 0usize;
            for t in &tables {
                for st in 0..mdp.n_states {
                    for a in 0..mdp.n_actions {
                        total += t.value(st, a);
                        count += 1;
                    }
                }
            }
            (total / count as f64).max(1.0)
        };
        let exact = ShapedRewardSource::Exact { tables, scale };
        for (name, reward) in
            [("ors", RewardSource::Shaped(exact)), ("sparse", RewardSource::Sparse)]
        {
            let (policy, critic, metrics) = train_gciql(
                &mdp, &emb, &reward, &sampler, &sampler, &cfg, &eval_goals, seed,
            )
            .unwrap();
            let success = metrics.last().unwrap().eval_success;
            let curve: Vec<String> =
                metrics.iter().map(|m| format!("{:.2}", m.eval_success)).collect();
            println!("  curve: {}", curve.join(" "));
            // Diagnostics: how often does the snapped mean action move, and
            // does greedy-over-Q navigate?
            let g = eval_goals[2];
            let mut stay_count = 0;
            for st in 0..mdp.n_states {
                let mean = policy.mean_action(mdp.embed(st), mdp.embed(g));
                if ors_lab::gcrl::nearest_action(&mdp, &mean) == 4 {
                    stay_count += 1;
                }
            }
            let greedy_q = ors_lab::gcrl::evaluate_tabular_policy(
                &mdp,
                &|st, gl| {
                    (0..mdp.n_actions)
                        .max_by(|&a, &b| {
                            critic
                                .q_min(mdp.embed(st), mdp.action_vector(a), mdp.embed(gl))
                                .partial_cmp(&critic.q_min(
                                    mdp.embed(st),
                                    mdp.action_vector(b),
                                    mdp.embed(gl),
                                ))
                                .unwrap()
                        })
                        .unwrap()
                },
                &eval_goals,
                50,
                horizon,
                seed,
            )
            .unwrap();
            println!(
                "seed {seed} {name}: success {success:.3} stay-frac {:.2} greedyQ {:.3} ({:?})",
                stay_count as f64 / mdp.n_states as f64,
                greedy_q.mean_success,
                start.elapsed()
            );
            if name == "ors" {
                ors_scores.push(success);
            } else {
                sparse_scores.push(success);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "ORS mean {:.3} vs sparse mean {:.3} -> {}",
        mean(&ors_scores),
        mean(&sparse_scores),
        if mean(&ors_scores) >= mean(&sparse_scores) { "OK" } else { "ORDERING FAILS" }
    );
}

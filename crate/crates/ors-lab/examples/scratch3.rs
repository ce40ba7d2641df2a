use ors_lab::envs::{generate_dataset, DeterministicMdp, EmbeddedDataset, GridMaze, PolicySpec};
use ors_lab::flow::{train_occupancy, FlowConfig};
use ors_lab::gcrl::GoalSampler;
use ors_lab::occupancy::{solve_occupancy, wasserstein_to_goal};
use ors_lab::reward::{estimate_w2_mse, train_reward, RewardTrainConfig, ShapedRewardSource};
use ors_lab::util::stream_rng;

fn one_hot(a: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[a] = 1.0;
    v
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let inst = args.get(1).cloned().unwrap_or("chain5".to_string());
    let pretrain: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(8000);
    let rsteps: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(3000);
    let gamma = 0.5;
    let maze = match inst.as_str() {
        "chain5" => GridMaze::chain(5),
        "grid3" => GridMaze::open(3, 3),
        other => panic!("unknown {other}"),
    };
    let start = std::time::Instant::now();
    let mdp = DeterministicMdp::from_maze(&maze, gamma);
    let ds = generate_dataset(&mdp, PolicySpec::UniformRandom, 0, 800, 60, 17).unwrap();
    let emb = EmbeddedDataset::from_tabular(&mdp, &ds);
    let fcfg = FlowConfig {
        gamma,
        hidden: vec![96, 96],
        batch_size: 256,
        pretrain_steps: pretrain,
        flow_steps_train: 800,
        flow_steps_sample: 16,
        target_rate: 0.02,
        embed_scale: 1.0,
        ..FlowConfig::default()
    };
    let (model, _) = train_occupancy(&emb, fcfg, 2024).unwrap();
    println!("flow trained in {:?}", start.elapsed());

    let pi = ds.empirical_policy();
    let occ = solve_occupancy(&mdp, &pi, gamma).unwrap();
    let tables: Vec<_> =
        (0..mdp.n_states).map(|g| wasserstein_to_goal(&mdp, &occ, &pi, g).unwrap()).collect();

    let sampler = GoalSampler::new(0.2, 0.5, 0.3).unwrap();
    let rcfg = RewardTrainConfig {
        steps: rsteps,
        batch_size: 64,
        mc_draws: 32,
        hidden: vec![64, 64],
        ..RewardTrainConfig::default()
    };
    let (net, losses) = train_reward(&model, &emb, &sampler, &rcfg, 77).unwrap();
    println!(
        "reward trained in {:?} (loss {:.4} -> {:.4})",
        start.elapsed(),
        losses.first().unwrap().1,
        losses.last().unwrap().1
    );

    // Self-consistency: distilled output vs fresh direct MC estimates.
    let mut rng = stream_rng(5, "holdout");
    let mut rels = Vec::new();
    for _ in 0..30 {
        use rand::Rng;
        let s = rng.random_range(0..mdp.n_states);
        let a = rng.random_range(0..mdp.n_actions);
        let g = rng.random_range(0..mdp.n_states);
        let target = -estimate_w2_mse(
            &model,
            mdp.embed(s),
            &one_hot(a, mdp.n_actions),
            mdp.embed(g),
            4000,
            &mut rng,
        )
        .unwrap()
        .mean;
        let pred = net.raw_value(mdp.embed(s), &one_hot(a, mdp.n_actions), mdp.embed(g));
        rels.push((pred - target).abs() / target.abs().max(1e-6));
    }
    let mean_rel = rels.iter().sum::<f64>() / rels.len() as f64;
    println!("distilled vs direct MC: mean rel dev {:.4} (max {:.4})", mean_rel, rels.iter().cloned().fold(0.0, f64::max));

    // Argmax agreement vs exact tables and mean-abs-deviation vs range.
    let distilled = ShapedRewardSource::distilled(&mdp, net);
    let mut agree = 0;
    let mut total = 0;
    let mut dev_sum = 0.0;
    let mut n_dev = 0;
    let mut min_r = f64::INFINITY;
    let mut max_r = f64::NEG_INFINITY;
    for g in 0..mdp.n_states {
        for s in 0..mdp.n_states {
            let best_distilled = (0..mdp.n_actions)
                .max_by(|&a, &b| {
                    distilled.reward(s, a, g).unwrap().partial_cmp(&distilled.reward(s, b, g).unwrap()).unwrap()
                })
                .unwrap();
            let exact_min = (0..mdp.n_actions)
                .map(|a| tables[g].value(s, a))
                .fold(f64::INFINITY, f64::min);
            let exact_set: Vec<usize> = (0..mdp.n_actions)
                .filter(|&a| tables[g].value(s, a) <= exact_min + 1e-9)
                .collect();
            if exact_set.contains(&best_distilled) {
                agree += 1;
            }
            total += 1;
            for a in 0..mdp.n_actions {
                let e = -tables[g].value(s, a);
                min_r = min_r.min(e);
                max_r = max_r.max(e);
                dev_sum += (distilled.reward(s, a, g).unwrap() - e).abs();
                n_dev += 1;
            }
        }
    }
    println!(
        "argmax agreement: {}/{} = {:.3}; mean abs dev {:.4} vs exact range {:.4} -> {:.1}%",
        agree,
        total,
        agree as f64 / total as f64,
        dev_sum / n_dev as f64,
        max_r - min_r,
        100.0 * (dev_sum / n_dev as f64) / (max_r - min_r)
    );
    println!("elapsed {:?}", start.elapsed());
}

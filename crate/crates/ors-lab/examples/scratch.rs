use ors_lab::envs::{generate_dataset, DeterministicMdp, EmbeddedDataset, GridMaze, PolicySpec, PolicyTable};
use ors_lab::flow::{snapped_distribution, train_occupancy, tv_distance, FlowConfig};
use ors_lab::occupancy::solve_occupancy;
use ors_lab::util::stream_rng;

fn one_hot(a: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[a] = 1.0;
    v
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let pretrain: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1500);
    let flowsteps: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1000);
    let hidden: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(32);
    let lr: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(3e-4);
    let euler: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(8);
    let gamma: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(0.5);

    let start = std::time::Instant::now();
    let inst = args.get(9).map(|s| s.clone()).unwrap_or("chain2".to_string());
    let maze = match inst.as_str() {
        "chain2" => GridMaze::chain(2),
        "chain5" => GridMaze::chain(5),
        "grid3" => GridMaze::open(3, 3),
        other => panic!("unknown instance {other}"),
    };
    let mdp = DeterministicMdp::from_maze(&maze, gamma);
    let n_traj: usize = args.get(10).map(|s| s.parse().unwrap()).unwrap_or(200);
    let horizon: usize = args.get(12).map(|s| s.parse().unwrap()).unwrap_or(40);
    let n_eval: usize = args.get(13).map(|s| s.parse().unwrap()).unwrap_or(1000);
    let ds = generate_dataset(&mdp, PolicySpec::UniformRandom, 0, n_traj, horizon, 17).unwrap();
    let emb = EmbeddedDataset::from_tabular(&mdp, &ds);
    let cfg = FlowConfig {
        gamma,
        hidden: vec![hidden, hidden],
        batch_size: args.get(11).map(|s| s.parse().unwrap()).unwrap_or(128),
        lr,
        pretrain_steps: pretrain,
        flow_steps_train: flowsteps,
        flow_steps_sample: euler,
        embed_scale: args.get(14).map(|s| s.parse().unwrap()).unwrap_or(2.0),
        target_rate: args.get(8).map(|s| s.parse().unwrap()).unwrap_or(0.005),
        ..FlowConfig::default()
    };
    let (model, curve) = train_occupancy(&emb, cfg, 2024).unwrap();
    let eval_euler: usize = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(euler);
    println!(
        "trained in {:?}; first loss {:.4}, last {:.4}",
        start.elapsed(),
        curve.first().map(|c| c.total).unwrap_or(0.0),
        curve.last().map(|c| c.total).unwrap_or(0.0)
    );
    let pi = PolicyTable::uniform(&mdp);
    let exact = solve_occupancy(&mdp, &pi, gamma).unwrap();
    let embeddings: Vec<Vec<f64>> = (0..mdp.n_states).map(|s| mdp.embed(s).to_vec()).collect();
    let mut rng = stream_rng(90, "fidelity");
    let mut worst_tv = 0.0f64;
    let mut worst_near = 1.0f64;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let samples = model
                .sample_future(mdp.embed(s), &one_hot(a, mdp.n_actions), n_eval, eval_euler, &mut rng)
                .unwrap();
            let near = samples
                .iter()
                .filter(|smp| {
                    embeddings.iter().any(|e| {
                        e.iter().zip(smp.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() < 0.2
                    })
                })
                .count() as f64
                / samples.len() as f64;
            let snapped = snapped_distribution(
                &model,
                mdp.embed(s),
                &one_hot(a, mdp.n_actions),
                &embeddings,
                n_eval,
                eval_euler,
                &mut rng,
            )
            .unwrap();
            let tv = tv_distance(&snapped, exact.row(s, a));
            worst_tv = worst_tv.max(tv);
            worst_near = worst_near.min(near);
            println!("  ({s},{a}): near={near:.3} tv={tv:.3}  snapped={snapped:?} exact={:?}", exact.row(s, a));
        }
    }
    println!("worst near={worst_near:.3} worst tv={worst_tv:.3} elapsed={:?}", start.elapsed());
}

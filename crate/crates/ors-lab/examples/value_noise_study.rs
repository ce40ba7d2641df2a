//! How value-estimate noise breaks monotonicity along expert trajectories:
//! sparse rewards vs the exact shaped reward, over a range of noise levels,
//! plus the reward-field decay dump.
//!
//! Run with: cargo run --release --example value_noise_study

use ors_lab::analysis::{reward_field_dump, sweep_sigma, RewardMode, TraceInstance};
use ors_lab::envs::{DeterministicMdp, GridMaze, PolicySpec, PolicyTable};
use ors_lab::occupancy::goal_tables;

fn main() {
    let gamma = 0.99;
    // Expert trajectories of varying lengths, each on its own chain with the
    // goal at the far end.
    let lengths = [450usize, 405, 360, 315, 270];
    println!("building {} expert trajectories (lengths {:?})...", lengths.len(), lengths);
    let instances: Vec<TraceInstance> = lengths
        .iter()
        .map(|&n| {
            let mdp = DeterministicMdp::from_maze(&GridMaze::chain(n), gamma);
            TraceInstance::shortest_path(&mdp, gamma, 0, n - 1, 1.0).unwrap()
        })
        .collect();

    let sigmas = [0.0, 1e-4, 5e-4, 1e-3, 5e-3];
    let table = sweep_sigma(
        &instances,
        &[RewardMode::Sparse, RewardMode::Ors, RewardMode::RawRw],
        &sigmas,
        100,
        gamma,
        7,
    )
    .unwrap();
    println!("\nmean value non-monotonicity (100 paired seeds):");
    println!("{:>10} {:>12} {:>12} {:>12}", "sigma", "sparse", "shaped", "raw-reward");
    for &sigma in &sigmas {
        println!(
            "{:>10} {:>12.5} {:>12.5} {:>12.5}",
            sigma,
            table.mean_for(RewardMode::Sparse, sigma).unwrap(),
            table.mean_for(RewardMode::Ors, sigma).unwrap(),
            table.mean_for(RewardMode::RawRw, sigma).unwrap(),
        );
    }

    // Reward-field decay on a maze: best shaped reward per state vs
    // shortest-path distance.
    let mdp = DeterministicMdp::from_maze(&GridMaze::open(8, 8), gamma);
    let goal = mdp.state_at(3, 4).unwrap();
    let pi = PolicyTable::from_spec(&mdp, PolicySpec::LayerMonotone, goal).unwrap();
    let m = goal_tables(&mdp, &pi, gamma, goal).unwrap();
    let dump = reward_field_dump(&mdp, &m, 1.0);
    println!(
        "\nreward field on the 8x8 maze (goal {:?}): {} records, \
         spearman(-max_a r, shortest-path steps) = {:.4}",
        mdp.coords(goal),
        dump.records.len(),
        dump.spearman_vs_steps
    );
}

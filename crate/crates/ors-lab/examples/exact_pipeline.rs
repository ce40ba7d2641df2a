//! The exact tabular pipeline end to end: occupancy tables, Wasserstein
//! distances to a goal, the shaped reward, and the two theory checks
//! (layer monotonicity and greedy-equals-shortest-path).
//!
//! Run with: cargo run --release --example exact_pipeline

use ors_lab::envs::{compute_layers, DeterministicMdp, GridMaze, PolicySpec, PolicyTable};
use ors_lab::occupancy::{
    goal_tables, shaped_reward_exact, solve_occupancy, verify_greedy_optimality,
    verify_monotonicity, wasserstein_to_goal,
};

fn main() {
    let gamma = 0.95;
    let maze = GridMaze::with_walls(4, 4, &[(0, 0)]);
    let mdp = DeterministicMdp::from_maze(&maze, gamma);
    let goal = mdp.state_at(1, 2).unwrap();
    println!("maze:\n{}", maze.to_text());
    println!("goal: state {goal} at {:?}, gamma {gamma}", mdp.coords(goal));

    // Shortest-path layers.
    let layers = compute_layers(&mdp, goal);
    println!("\nlayers:");
    for (k, layer) in layers.layers.iter().enumerate() {
        println!("  S_{k}: {layer:?}");
    }

    // Exact occupancy of the layer-monotone behavioral policy, with the
    // goal made absorbing.
    let pi = PolicyTable::from_spec(&mdp, PolicySpec::LayerMonotone, goal).unwrap();
    let amdp = mdp.absorbing(goal);
    let occ = solve_occupancy(&amdp, &pi, gamma).unwrap();
    println!(
        "\noccupancy solved: row-sum error {:.2e}, Bellman residual {:.2e}",
        occ.max_row_sum_error(),
        occ.bellman_residual(&amdp, &pi)
    );

    // Squared Wasserstein-2 distance to the goal Dirac, per (s, a).
    let m = wasserstein_to_goal(&amdp, &occ, &pi, goal).unwrap();
    let reward = shaped_reward_exact(&m, 1.0).unwrap();
    println!("\nstate-averaged M and best shaped reward per layer:");
    for (k, layer) in layers.layers.iter().enumerate() {
        let s = layer[0];
        println!(
            "  S_{k} (state {s}): M(s) = {:8.4}   max_a r(s,a) = {:8.4}",
            m.state_value(s),
            reward.max_over_actions(s)
        );
    }

    // Theory checks.
    let mono = verify_monotonicity(&mdp, &pi, gamma, goal).unwrap();
    println!(
        "\nmonotonicity: {} comparisons, {} violations (preconditions met: {})",
        mono.instances_checked,
        mono.violations.len(),
        mono.preconditions_met
    );
    let greedy = verify_greedy_optimality(&mdp, &pi, gamma, goal).unwrap();
    println!(
        "greedy-vs-shortest-path: {} states checked, {} violations, \
         value iteration residual {:.1e} after {} sweeps",
        greedy.instances_checked,
        greedy.violations.len(),
        greedy.residual,
        greedy.iterations
    );

    // The same tables double as a multi-goal reward source.
    let m2 = goal_tables(&mdp, &pi, gamma, 0).unwrap();
    println!(
        "\nsame pipeline for goal 0: M(farthest corner) = {:.3}",
        m2.state_value(mdp.n_states - 1)
    );
}

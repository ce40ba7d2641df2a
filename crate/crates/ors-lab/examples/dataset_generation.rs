//! Behavioral policies, offline datasets, and the assumption detectors —
//! including an instance built to violate the potential-monotonicity
//! contract.
//!
//! Run with: cargo run --release --example dataset_generation

use ors_lab::envs::{
    check_assumptions, generate_dataset, DeterministicMdp, GridMaze, PolicySpec,
};

fn report_line(name: &str, holds: bool, detail: &Option<String>) {
    match detail {
        Some(d) if !holds => println!("  {name}: VIOLATED ({d})"),
        _ => println!("  {name}: {}", if holds { "holds" } else { "violated" }),
    }
}

fn main() {
    let gamma = 0.95;
    let mdp = DeterministicMdp::from_maze(&GridMaze::open(4, 4), gamma);
    let goal = mdp.state_at(1, 1).unwrap();

    for spec in [
        PolicySpec::LayerMonotone,
        PolicySpec::UniformRandom,
        PolicySpec::EpsGreedyRandomGoals { eps: 0.5 },
    ] {
        let ds = generate_dataset(&mdp, spec, goal, 120, 20, 7).unwrap();
        let report = check_assumptions(&mdp, &ds, goal);
        println!(
            "4x4 grid, {} ({} tuples): all assumptions hold = {}",
            ds.policy,
            ds.tuples.len(),
            report.all_hold()
        );
        report_line(
            "deterministic dynamics",
            report.deterministic_dynamics.holds,
            &report.deterministic_dynamics.counterexample,
        );
        report_line(
            "one-step reachability",
            report.one_step_reachability.holds,
            &report.one_step_reachability.counterexample,
        );
        report_line(
            "potential monotone",
            report.potential_monotone.holds,
            &report.potential_monotone.counterexample,
        );
        report_line(
            "policy layer-monotone",
            report.policy_layer_monotone.holds,
            &report.policy_layer_monotone.counterexample,
        );
        if let Some(delta) = report.delta_phi {
            println!("  minimum potential gap between adjacent layers: {delta}");
        }
        println!();
    }

    // A maze built so squared Euclidean distance inverts around the wall:
    // states just above it are geometrically close to the goal but far on
    // foot. The detector names a witness pair.
    let umaze = GridMaze::u_maze();
    println!("u-maze:\n{}", umaze.to_text());
    let mdp = DeterministicMdp::from_maze(&umaze, gamma);
    let goal = mdp.state_at(3, 1).unwrap();
    let ds = generate_dataset(&mdp, PolicySpec::LayerMonotone, goal, 40, 20, 7).unwrap();
    let report = check_assumptions(&mdp, &ds, goal);
    println!("u-maze with goal {goal}: all assumptions hold = {}", report.all_hold());
    report_line(
        "potential monotone",
        report.potential_monotone.holds,
        &report.potential_monotone.counterexample,
    );
}

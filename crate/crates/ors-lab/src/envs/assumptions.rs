//! Detectors for the four dataset-generation contracts the exact theory
//! rests on: deterministic dynamics, one-step reachability, layer-monotone
//! potential, and a layer-monotone behavioral policy.

use serde::{Deserialize, Serialize};

use super::dataset::TabularDataset;
use super::maze::{compute_layers, DeterministicMdp, LayerDecomposition};
use super::policy::PolicyTable;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckOutcome {
    pub holds: bool,
    /// A concrete counterexample when violated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<String>,
}

impl CheckOutcome {
    fn holds() -> Self {
        CheckOutcome { holds: true, counterexample: None }
    }

    fn violated(detail: String) -> Self {
        CheckOutcome { holds: false, counterexample: Some(detail) }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Dynamics are deterministic and the dataset respects the successor
    /// function.
    pub deterministic_dynamics: CheckOutcome,
    /// Every reachable state at layer k >= 1 has an action into layer k-1.
    pub one_step_reachability: CheckOutcome,
    /// The squared-Euclidean potential is monotone across shortest-path
    /// layers, with a strictly positive minimum gap between adjacent layers.
    pub potential_monotone: CheckOutcome,
    /// The behavioral policy preserves layer ordering: the worst successor
    /// layer from S_{k-1} never exceeds the best successor layer from S_k.
    pub policy_layer_monotone: CheckOutcome,
    /// Empirical minimum potential gap between adjacent layers, when defined.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_phi: Option<f64>,
    pub unreachable_states: usize,
    pub goal: usize,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.deterministic_dynamics.holds
            && self.one_step_reachability.holds
            && self.potential_monotone.holds
            && self.policy_layer_monotone.holds
    }
}

/// Checks the assumptions against an offline dataset: dynamics from the
/// recorded tuples, policy monotonicity from the empirically supported
/// actions.
pub fn check_assumptions(mdp: &DeterministicMdp, ds: &TabularDataset, g: usize) -> AssumptionReport {
    let layers = compute_layers(mdp, g);
    let deterministic = check_dataset_dynamics(mdp, ds);
    let (reach, unreachable) = check_one_step_reachability(mdp, &layers);
    let (potential, delta_phi) = check_potential_monotone(mdp, &layers);
    let policy = check_policy_layer_monotone(mdp, &layers, &ds.empirical_policy());
    AssumptionReport {
        deterministic_dynamics: deterministic,
        one_step_reachability: reach,
        potential_monotone: potential,
        policy_layer_monotone: policy,
        delta_phi,
        unreachable_states: unreachable,
        goal: g,
    }
}

/// Checks the assumptions for an exact-pipeline instance: a fixed MDP, a
/// stationary policy table, and a goal. Dynamics are deterministic by
/// construction of [`DeterministicMdp`].
pub fn check_instance(mdp: &DeterministicMdp, pi: &PolicyTable, g: usize) -> AssumptionReport {
    let layers = compute_layers(mdp, g);
    let (reach, unreachable) = check_one_step_reachability(mdp, &layers);
    let (potential, delta_phi) = check_potential_monotone(mdp, &layers);
    let policy = check_policy_layer_monotone(mdp, &layers, pi);
    AssumptionReport {
        deterministic_dynamics: CheckOutcome::holds(),
        one_step_reachability: reach,
        potential_monotone: potential,
        policy_layer_monotone: policy,
        delta_phi,
        unreachable_states: unreachable,
        goal: g,
    }
}

fn check_dataset_dynamics(mdp: &DeterministicMdp, ds: &TabularDataset) -> CheckOutcome {
    for tr in &ds.tuples {
        let expected = mdp.successor(tr.s, tr.a);
        if tr.s_next != expected {
            return CheckOutcome::violated(format!(
                "tuple (traj {}, t {}): s={} a={} recorded s'={} but f(s,a)={}",
                tr.traj_id, tr.t, tr.s, tr.a, tr.s_next, expected
            ));
        }
    }
    CheckOutcome::holds()
}

fn check_one_step_reachability(
    mdp: &DeterministicMdp,
    layers: &LayerDecomposition,
) -> (CheckOutcome, usize) {
    let unreachable = layers.steps.iter().filter(|s| s.is_none()).count();
    for (k, layer) in layers.layers.iter().enumerate().skip(1) {
        for &s in layer {
            if layers.shortest_path_actions(mdp, s).is_empty() {
                return (
                    CheckOutcome::violated(format!("state {s} in layer {k} has no descending action")),
                    unreachable,
                );
            }
        }
    }
    (CheckOutcome::holds(), unreachable)
}

/// Cross-layer monotonicity of the potential: for every adjacent layer pair,
/// `min over S_{k+1}` must exceed `max over S_k` by a positive gap. The
/// minimum of those gaps is the empirical delta.
fn check_potential_monotone(
    mdp: &DeterministicMdp,
    layers: &LayerDecomposition,
) -> (CheckOutcome, Option<f64>) {
    let g = layers.goal;
    let mut min_gap: Option<f64> = None;
    for k in 0..layers.layers.len().saturating_sub(1) {
        let (mut max_lo, mut argmax_lo) = (f64::NEG_INFINITY, 0usize);
        for &s in &layers.layers[k] {
            let p = mdp.phi(s, g);
            if p > max_lo {
                max_lo = p;
                argmax_lo = s;
            }
        }
        let (mut min_hi, mut argmin_hi) = (f64::INFINITY, 0usize);
        for &s in &layers.layers[k + 1] {
            let p = mdp.phi(s, g);
            if p < min_hi {
                min_hi = p;
                argmin_hi = s;
            }
        }
        let gap = min_hi - max_lo;
        if gap <= 0.0 {
            return (
                CheckOutcome::violated(format!(
                    "phi inverted across layers {k}/{}: state {argmax_lo} (layer {k}, phi={max_lo}) \
                     vs state {argmin_hi} (layer {}, phi={min_hi})",
                    k + 1,
                    k + 1
                )),
                None,
            );
        }
        min_gap = Some(min_gap.map_or(gap, |m: f64| m.min(gap)));
    }
    (CheckOutcome::holds(), min_gap)
}

/// Layer monotonicity of the policy: the successor layer from any supported
/// action in S_{k-1} never exceeds the successor layer from any supported
/// action in S_k.
fn check_policy_layer_monotone(
    mdp: &DeterministicMdp,
    layers: &LayerDecomposition,
    pi: &PolicyTable,
) -> CheckOutcome {
    let succ_layer_range = |layer: &[usize]| -> Option<(u32, usize, u32, usize)> {
        // (max successor layer, witness state, min successor layer, witness)
        let mut max: Option<(u32, usize)> = None;
        let mut min: Option<(u32, usize)> = None;
        for &s in layer {
            for a in pi.supported_actions(s) {
                let next = mdp.successor(s, a);
                let k = layers.steps[next]?;
                if max.map_or(true, |(m, _)| k > m) {
                    max = Some((k, s));
                }
                if min.map_or(true, |(m, _)| k < m) {
                    min = Some((k, s));
                }
            }
        }
        let (mx, ms) = max?;
        let (mn, mns) = min?;
        Some((mx, ms, mn, mns))
    };
    for k in 1..layers.layers.len() {
        let Some((max_lo, lo_state, _, _)) = succ_layer_range(&layers.layers[k - 1]) else {
            return CheckOutcome::violated(format!(
                "a supported action in layer {} leads to an unreachable state",
                k - 1
            ));
        };
        let Some((_, _, min_hi, hi_state)) = succ_layer_range(&layers.layers[k]) else {
            return CheckOutcome::violated(format!(
                "a supported action in layer {k} leads to an unreachable state"
            ));
        };
        if max_lo > min_hi {
            return CheckOutcome::violated(format!(
                "policy inverts layers {}/{k}: from state {lo_state} (layer {}) a successor lands \
                 in layer {max_lo}, while from state {hi_state} (layer {k}) one lands in layer {min_hi}",
                k - 1,
                k - 1
            ));
        }
    }
    CheckOutcome::holds()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{generate_dataset, GridMaze, PolicySpec};

    #[test]
    fn open_grid_central_goal_satisfies_potential() {
        let mdp = DeterministicMdp::from_maze(&GridMaze::open(4, 4), 0.9);
        let g = mdp.state_at(1, 1).unwrap();
        let pi = PolicyTable::from_spec(&mdp, PolicySpec::LayerMonotone, g).unwrap();
        let report = check_instance(&mdp, &pi, g);
        assert!(report.all_hold(), "{report:?}");
        assert!(report.delta_phi.unwrap() > 0.0);
    }

    #[test]
    fn u_maze_violates_potential_with_witness_pair() {
        let mdp = DeterministicMdp::from_maze(&GridMaze::u_maze(), 0.9);
        let g = mdp.state_at(3, 1).unwrap();
        let pi = PolicyTable::from_spec(&mdp, PolicySpec::LayerMonotone, g).unwrap();
        let report = check_instance(&mdp, &pi, g);
        assert!(!report.potential_monotone.holds);
        assert!(report.potential_monotone.counterexample.is_some());
        // The structural assumptions still hold.
        assert!(report.one_step_reachability.holds);
        assert!(report.policy_layer_monotone.holds);
    }

    #[test]
    fn layer_monotone_dataset_passes_policy_check() {
        let mdp = DeterministicMdp::from_maze(&GridMaze::open(3, 3), 0.9);
        let g = mdp.state_at(1, 1).unwrap();
        let ds = generate_dataset(&mdp, PolicySpec::LayerMonotone, g, 60, 8, 17).unwrap();
        let report = check_assumptions(&mdp, &ds, g);
        assert!(report.all_hold(), "{report:?}");
    }

    #[test]
    fn uniform_dataset_violates_policy_monotonicity() {
        let mdp = DeterministicMdp::from_maze(&GridMaze::open(4, 4), 0.9);
        let g = mdp.state_at(1, 1).unwrap();
        let ds = generate_dataset(&mdp, PolicySpec::UniformRandom, g, 100, 20, 23).unwrap();
        let report = check_assumptions(&mdp, &ds, g);
        assert!(!report.policy_layer_monotone.holds);
    }

    #[test]
    fn corrupted_dataset_fails_determinism_check() {
        let mdp = DeterministicMdp::from_maze(&GridMaze::open(3, 3), 0.9);
        let g = 4;
        let mut ds = generate_dataset(&mdp, PolicySpec::UniformRandom, g, 5, 5, 29).unwrap();
        let tr = &mut ds.tuples[7];
        tr.s_next = (tr.s_next + 1) % mdp.n_states;
        if tr.s_next == mdp.successor(tr.s, tr.a) {
            tr.s_next = (tr.s_next + 1) % mdp.n_states;
        }
        let report = check_assumptions(&mdp, &ds, g);
        assert!(!report.deterministic_dynamics.holds);
        assert!(report.deterministic_dynamics.counterexample.as_ref().unwrap().contains("t 2"));
    }

    #[test]
    fn report_serializes() {
        let mdp = DeterministicMdp::from_maze(&GridMaze::chain(5), 0.9);
        let pi = PolicyTable::from_spec(&mdp, PolicySpec::LayerMonotone, 4).unwrap();
        let report = check_instance(&mdp, &pi, 4);
        let json = serde_json::to_string_pretty(&report).unwrap();
        assert!(json.contains("potential_monotone"));
    }
}

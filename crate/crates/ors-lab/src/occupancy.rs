//! Exact tabular occupancy measures, Wasserstein-2 distances to a goal
//! Dirac, the shaped reward they induce, and machine checks that the shaped
//! reward is layer-monotone and that greedy value iteration under it
//! recovers shortest paths.
//!
//! Everything here is closed-form linear algebra on the discounted
//! future-state distribution
//! `d(s+|s,a) = (1-gamma) * 1[f(s,a)=s+] + gamma * E_{a'} d(s+|s',a')`,
//! solved either by a dense LU factorization or by fixed-point iteration.
//! These tables are the oracles the learned pipeline is judged against.

use serde::Serialize;
use thiserror::Error;

use crate::envs::{check_instance, compute_layers, AssumptionReport, DeterministicMdp, PolicyTable};

/// Above this many `(s, a)` rows the linear system is solved by fixed-point
/// iteration instead of a dense factorization.
pub const DIRECT_SOLVE_LIMIT: usize = 4096;

/// Tolerance for exact identities (Bellman residuals, recursion agreement,
/// monotonicity margins).
pub const EXACT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OccError {
    #[error("gamma {0} outside (0, 1)")]
    BadGamma(f64),
    #[error("scale {0} must be positive")]
    BadScale(f64),
    #[error("invalid state {0}")]
    InvalidState(usize),
    #[error("linear system is singular at pivot {0}")]
    Singular(usize),
    #[error("occupancy solve produced a negative probability {value} at row {row}")]
    NegativeProbability { row: usize, value: f64 },
    #[error("recursion cross-check failed: residual {0}")]
    RecursionResidual(f64),
    #[error("value iteration did not converge in {iterations} iterations (residual {residual})")]
    NoConvergence { iterations: usize, residual: f64 },
}

/// The exact discounted future-state distribution `d(s+|s,a)` as a
/// row-stochastic matrix of shape `(n_states * n_actions, n_states)`.
#[derive(Debug, Clone)]
pub struct OccupancyTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    d: Vec<f64>,
}

impl OccupancyTable {
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let idx = s * self.n_actions + a;
        &self.d[idx * self.n_states..(idx + 1) * self.n_states]
    }

    pub fn prob(&self, s: usize, a: usize, s_plus: usize) -> f64 {
        self.row(s, a)[s_plus]
    }

    /// Sup-norm residual of the defining recursion under `pi`.
    pub fn bellman_residual(&self, mdp: &DeterministicMdp, pi: &PolicyTable) -> f64 {
        let mut worst = 0.0f64;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let s_next = mdp.successor(s, a);
                for sp in 0..self.n_states {
                    let mut boot = 0.0;
                    for ap in 0..self.n_actions {
                        let p = pi.prob(s_next, ap);
                        if p > 0.0 {
                            boot += p * self.prob(s_next, ap, sp);
                        }
                    }
                    let expected =
                        (1.0 - self.gamma) * f64::from(u8::from(sp == s_next)) + self.gamma * boot;
                    worst = worst.max((self.prob(s, a, sp) - expected).abs());
                }
            }
        }
        worst
    }

    pub fn max_row_sum_error(&self) -> f64 {
        self.d
            .chunks(self.n_states)
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Solves the occupancy fixed point exactly: a dense LU solve of
/// `(I - gamma * W) D = (1 - gamma) * P` when the system is small enough,
/// fixed-point iteration otherwise.
pub fn solve_occupancy(
    mdp: &DeterministicMdp,
    pi: &PolicyTable,
    gamma: f64,
) -> Result<OccupancyTable, OccError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(OccError::BadGamma(gamma));
    }
    let n = mdp.n_states * mdp.n_actions;
    let mut d = if n <= DIRECT_SOLVE_LIMIT {
        solve_occupancy_direct(mdp, pi, gamma)?
    } else {
        solve_occupancy_iterative(mdp, pi, gamma)
    };
    // The mathematical solution is a probability table; anything beyond
    // rounding junk signals a real bug.
    for (i, v) in d.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v < -EXACT_TOL {
                return Err(OccError::NegativeProbability { row: i / mdp.n_states, value: *v });
            }
            *v = 0.0;
        }
    }
    Ok(OccupancyTable { n_states: mdp.n_states, n_actions: mdp.n_actions, gamma, d })
}

fn solve_occupancy_direct(
    mdp: &DeterministicMdp,
    pi: &PolicyTable,
    gamma: f64,
) -> Result<Vec<f64>, OccError> {
    let n_states = mdp.n_states;
    let n_actions = mdp.n_actions;
    let n = n_states * n_actions;
    // A = I - gamma * W, where W[(s,a),(s',a')] = pi(a'|s') at s' = f(s,a).
    let mut a_mat = vec![0.0f64; n * n];
    for idx in 0..n {
        a_mat[idx * n + idx] += 1.0;
        let (s, a) = (idx / n_actions, idx % n_actions);
        let s_next = mdp.successor(s, a);
        for ap in 0..n_actions {
            let p = pi.prob(s_next, ap);
            if p > 0.0 {
                a_mat[idx * n + s_next * n_actions + ap] -= gamma * p;
            }
        }
    }
    let lu = LuFactors::factorize(a_mat, n)?;
    // One RHS column per future state s+.
    let mut d = vec![0.0f64; n * n_states];
    let mut col = vec![0.0f64; n];
    for sp in 0..n_states {
        col.fill(0.0);
        for idx in 0..n {
            let (s, a) = (idx / n_actions, idx % n_actions);
            if mdp.successor(s, a) == sp {
                col[idx] = 1.0 - gamma;
            }
        }
        lu.solve_in_place(&mut col);
        for idx in 0..n {
            d[idx * n_states + sp] = col[idx];
        }
    }
    Ok(d)
}

fn solve_occupancy_iterative(mdp: &DeterministicMdp, pi: &PolicyTable, gamma: f64) -> Vec<f64> {
    let n_states = mdp.n_states;
    let n_actions = mdp.n_actions;
    let n = n_states * n_actions;
    let mut d = vec![0.0f64; n * n_states];
    let mut next = vec![0.0f64; n * n_states];
    // Synchronous iteration contracts by gamma per sweep, so a sweep-to-sweep
    // change below tol bounds the Bellman residual by gamma * tol.
    let tol = 1e-12;
    loop {
        let mut change = 0.0f64;
        for idx in 0..n {
            let (s, a) = (idx / n_actions, idx % n_actions);
            let s_next = mdp.successor(s, a);
            let row = &mut next[idx * n_states..(idx + 1) * n_states];
            row.fill(0.0);
            row[s_next] = 1.0 - gamma;
            for ap in 0..n_actions {
                let p = pi.prob(s_next, ap);
                if p > 0.0 {
                    let src = &d[(s_next * n_actions + ap) * n_states
                        ..(s_next * n_actions + ap + 1) * n_states];
                    for (r, v) in row.iter_mut().zip(src) {
                        *r += gamma * p * v;
                    }
                }
            }
        }
        for (old, new) in d.iter().zip(&next) {
            change = change.max((old - new).abs());
        }
        std::mem::swap(&mut d, &mut next);
        if change < tol {
            break;
        }
    }
    d
}

/// Dense LU with partial pivoting, row-major.
struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl LuFactors {
    fn factorize(mut a: Vec<f64>, n: usize) -> Result<Self, OccError> {
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut pivot = k;
            let mut best = a[k * n + k].abs();
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    pivot = i;
                }
            }
            if best == 0.0 {
                return Err(OccError::Singular(k));
            }
            if pivot != k {
                for j in 0..n {
                    a.swap(k * n + j, pivot * n + j);
                }
                perm.swap(k, pivot);
            }
            let pkk = a[k * n + k];
            for i in k + 1..n {
                let l = a[i * n + k] / pkk;
                a[i * n + k] = l;
                if l != 0.0 {
                    for j in k + 1..n {
                        a[i * n + j] -= l * a[k * n + j];
                    }
                }
            }
        }
        Ok(LuFactors { n, lu: a, perm })
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let permuted: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        b.copy_from_slice(&permuted);
        for i in 1..n {
            let mut acc = b[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * b[j];
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..n {
                acc -= self.lu[i * n + j] * b[j];
            }
            b[i] = acc / self.lu[i * n + i];
        }
    }
}

/// Exact `W2^2(delta_g, d(.|s,a))` per state-action pair, with the
/// policy-averaged per-state version alongside.
#[derive(Debug, Clone)]
pub struct WassersteinTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub goal: usize,
    m_sa: Vec<f64>,
    m_s: Vec<f64>,
}

impl WassersteinTable {
    pub fn value(&self, s: usize, a: usize) -> f64 {
        self.m_sa[s * self.n_actions + a]
    }

    pub fn state_value(&self, s: usize) -> f64 {
        self.m_s[s]
    }

    pub fn min_over_actions(&self, s: usize) -> f64 {
        (0..self.n_actions).map(|a| self.value(s, a)).fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.m_sa.iter().fold(0.0f64, |m, &v| m.max(v))
    }
}

/// Direct expectation `M(s,a) = sum_{s+} d(s+|s,a) * phi(s+, g)`, cross-checked
/// against the recursion `M(s,a) = (1-gamma) phi(f(s,a), g) + gamma E_{a'} M(s',a')`
/// to [`EXACT_TOL`] (relative to the potential's magnitude).
pub fn wasserstein_to_goal(
    mdp: &DeterministicMdp,
    occ: &OccupancyTable,
    pi: &PolicyTable,
    g: usize,
) -> Result<WassersteinTable, OccError> {
    if g >= mdp.n_states {
        return Err(OccError::InvalidState(g));
    }
    let n_states = mdp.n_states;
    let n_actions = mdp.n_actions;
    let phis: Vec<f64> = (0..n_states).map(|sp| mdp.phi(sp, g)).collect();
    let mut m_sa = vec![0.0f64; n_states * n_actions];
    for s in 0..n_states {
        for a in 0..n_actions {
            m_sa[s * n_actions + a] = occ.row(s, a).iter().zip(&phis).map(|(d, p)| d * p).sum();
        }
    }
    let scale = phis.iter().fold(1.0f64, |m, &p| m.max(p));
    let mut residual = 0.0f64;
    for s in 0..n_states {
        for a in 0..n_actions {
            let s_next = mdp.successor(s, a);
            let mut boot = 0.0;
            for ap in 0..n_actions {
                let p = pi.prob(s_next, ap);
                if p > 0.0 {
                    boot += p * m_sa[s_next * n_actions + ap];
                }
            }
            let expected = (1.0 - occ.gamma) * phis[s_next] + occ.gamma * boot;
            residual = residual.max((m_sa[s * n_actions + a] - expected).abs() / scale);
        }
    }
    if residual >= EXACT_TOL {
        return Err(OccError::RecursionResidual(residual));
    }
    Ok(finish_wasserstein(mdp, pi, occ.gamma, g, m_sa))
}

/// Matrix-free route to the same table: iterates the `M` recursion directly,
/// without the occupancy matrix. Used for large instances and as the second
/// computation in cross-checks.
pub fn solve_wasserstein_recursion(
    mdp: &DeterministicMdp,
    pi: &PolicyTable,
    gamma: f64,
    g: usize,
) -> Result<WassersteinTable, OccError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(OccError::BadGamma(gamma));
    }
    if g >= mdp.n_states {
        return Err(OccError::InvalidState(g));
    }
    let n_states = mdp.n_states;
    let n_actions = mdp.n_actions;
    let phis: Vec<f64> = (0..n_states).map(|sp| mdp.phi(sp, g)).collect();
    let scale = phis.iter().fold(1.0f64, |m, &p| m.max(p));
    let mut m = vec![0.0f64; n_states * n_actions];
    let mut next = vec![0.0f64; n_states * n_actions];
    let tol = 1e-13 * scale;
    loop {
        let mut change = 0.0f64;
        for s in 0..n_states {
            for a in 0..n_actions {
                let s_next = mdp.successor(s, a);
                let mut boot = 0.0;
                for ap in 0..n_actions {
                    let p = pi.prob(s_next, ap);
                    if p > 0.0 {
                        boot += p * m[s_next * n_actions + ap];
                    }
                }
                let v = (1.0 - gamma) * phis[s_next] + gamma * boot;
                change = change.max((v - m[s * n_actions + a]).abs());
                next[s * n_actions + a] = v;
            }
        }
        std::mem::swap(&mut m, &mut next);
        if change < tol {
            break;
        }
    }
    Ok(finish_wasserstein(mdp, pi, gamma, g, m))
}

fn finish_wasserstein(
    mdp: &DeterministicMdp,
    pi: &PolicyTable,
    gamma: f64,
    g: usize,
    m_sa: Vec<f64>,
) -> WassersteinTable {
    let m_s = (0..mdp.n_states)
        .map(|s| (0..mdp.n_actions).map(|a| pi.prob(s, a) * m_sa[s * mdp.n_actions + a]).sum())
        .collect();
    WassersteinTable { n_states: mdp.n_states, n_actions: mdp.n_actions, gamma, goal: g, m_sa, m_s }
}

/// Exact goal-conditioned tables for one instance: the MDP is made absorbing
/// at `g` before solving, so `M(g, ., g) = 0` holds exactly.
pub fn goal_tables(
    mdp: &DeterministicMdp,
    pi: &PolicyTable,
    gamma: f64,
    g: usize,
) -> Result<WassersteinTable, OccError> {
    let amdp = mdp.absorbing(g);
    let n = mdp.n_states * mdp.n_actions;
    if n <= DIRECT_SOLVE_LIMIT {
        let occ = solve_occupancy(&amdp, pi, gamma)?;
        wasserstein_to_goal(&amdp, &occ, pi, g)
    } else {
        solve_wasserstein_recursion(&amdp, pi, gamma, g)
    }
}

/// The shaped reward `r(s,a) = -M(s,a,g) / scale` for one goal.
#[derive(Debug, Clone)]
pub struct RewardTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub goal: usize,
    pub scale: f64,
    values: Vec<f64>,
}

impl RewardTable {
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn max_over_actions(&self, s: usize) -> f64 {
        (0..self.n_actions).map(|a| self.reward(s, a)).fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn shaped_reward_exact(m: &WassersteinTable, scale: f64) -> Result<RewardTable, OccError> {
    if !(scale > 0.0) {
        return Err(OccError::BadScale(scale));
    }
    let values = (0..m.n_states * m.n_actions)
        .map(|idx| -m.value(idx / m.n_actions, idx % m.n_actions) / scale)
        .collect();
    Ok(RewardTable { n_states: m.n_states, n_actions: m.n_actions, goal: m.goal, scale, values })
}

/// A single violating comparison found by one of the verifiers.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Per-state averaged M is not monotone across an adjacent layer pair.
    LayerPair { layer: usize, closer_state: usize, farther_state: usize, m_closer: f64, m_farther: f64 },
    /// A shortest-path action does not minimize M at its state.
    ActionPair { state: usize, optimal_action: usize, other_action: usize, m_optimal: f64, m_other: f64 },
    /// The greedy argmax set is not contained in the shortest-path set.
    GreedyMismatch { state: usize, greedy: Vec<usize>, shortest_path: Vec<usize> },
    /// An adjacent layer pair misses the optimal-value gap bound.
    ValueGap { layer: usize, bound: f64, actual: f64 },
}

/// Outcome of the layer/action monotonicity check for one instance.
#[derive(Debug, Serialize)]
pub struct MonotonicityReport {
    pub assumption_report: AssumptionReport,
    pub preconditions_met: bool,
    pub violations: Vec<Violation>,
    pub max_violation_magnitude: f64,
    pub instances_checked: usize,
}

impl MonotonicityReport {
    pub fn clean(&self) -> bool {
        self.preconditions_met && self.violations.is_empty()
    }
}

/// Checks, on the absorbing instance, that (i) the policy-averaged `M` is
/// monotone across adjacent shortest-path layers and (ii) every
/// shortest-path action minimizes `M(s, ., g)` against every
/// non-shortest-path action, both at tolerance [`EXACT_TOL`]. When the
/// assumption gate fails, the report flags unmet preconditions instead of
/// claiming anything.
pub fn verify_monotonicity(
    mdp: &DeterministicMdp,
    pi: &PolicyTable,
    gamma: f64,
    g: usize,
) -> Result<MonotonicityReport, OccError> {
    let amdp = mdp.absorbing(g);
    let assumption_report = check_instance(&amdp, pi, g);
    if !assumption_report.all_hold() {
        return Ok(MonotonicityReport {
            assumption_report,
            preconditions_met: false,
            violations: Vec::new(),
            max_violation_magnitude: 0.0,
            instances_checked: 0,
        });
    }
    let m = goal_tables(mdp, pi, gamma, g)?;
    let layers = compute_layers(&amdp, g);
    let mut violations = Vec::new();
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for k in 1..layers.layers.len() {
        for &s1 in &layers.layers[k - 1] {
            for &s2 in &layers.layers[k] {
                checked += 1;
                let (m1, m2) = (m.state_value(s1), m.state_value(s2));
                if m1 > m2 + EXACT_TOL {
                    worst = worst.max(m1 - m2);
                    violations.push(Violation::LayerPair {
                        layer: k,
                        closer_state: s1,
                        farther_state: s2,
                        m_closer: m1,
                        m_farther: m2,
                    });
                }
            }
        }
    }
    for s in 0..mdp.n_states {
        let Some(k) = layers.steps[s] else { continue };
        if k == 0 {
            continue;
        }
        let optimal = layers.shortest_path_actions(&amdp, s);
        for &a_star in &optimal {
            for a in 0..mdp.n_actions {
                if optimal.contains(&a) {
                    continue;
                }
                checked += 1;
                let (m_opt, m_other) = (m.value(s, a_star), m.value(s, a));
                if m_opt > m_other + EXACT_TOL {
                    worst = worst.max(m_opt - m_other);
                    violations.push(Violation::ActionPair {
                        state: s,
                        optimal_action: a_star,
                        other_action: a,
                        m_optimal: m_opt,
                        m_other,
                    });
                }
            }
        }
    }
    Ok(MonotonicityReport {
        assumption_report,
        preconditions_met: true,
        violations,
        max_violation_magnitude: worst,
        instances_checked: checked,
    })
}

/// Outcome of the greedy-equals-shortest-path check for one instance.
#[derive(Debug, Serialize)]
pub struct GreedyReport {
    pub assumption_report: AssumptionReport,
    pub preconditions_met: bool,
    pub violations: Vec<Violation>,
    pub max_violation_magnitude: f64,
    pub instances_checked: usize,
    pub iterations: usize,
    pub residual: f64,
}

impl GreedyReport {
    pub fn clean(&self) -> bool {
        self.preconditions_met && self.violations.is_empty()
    }
}

/// Runs exact Q-value iteration under the shaped reward to residual `< 1e-10`
/// and checks that (a) at every reachable non-goal state the greedy argmax
/// set is contained in the BFS shortest-path action set, and (b) adjacent
/// layers satisfy the optimal-value gap bound
/// `V*(S_{k-1}) - V*(S_k) >= (1 - gamma^{k-1}) * delta_phi`.
pub fn verify_greedy_optimality(
    mdp: &DeterministicMdp,
    pi: &PolicyTable,
    gamma: f64,
    g: usize,
) -> Result<GreedyReport, OccError> {
    let amdp = mdp.absorbing(g);
    let assumption_report = check_instance(&amdp, pi, g);
    if !assumption_report.all_hold() {
        return Ok(GreedyReport {
            assumption_report,
            preconditions_met: false,
            violations: Vec::new(),
            max_violation_magnitude: 0.0,
            instances_checked: 0,
            iterations: 0,
            residual: 0.0,
        });
    }
    let m = goal_tables(mdp, pi, gamma, g)?;
    let reward = shaped_reward_exact(&m, 1.0)?;
    let sol = value_iteration(&amdp, &|s, a| reward.reward(s, a), gamma, 1e-10, 2_000_000)?;
    let layers = compute_layers(&amdp, g);
    let mut violations = Vec::new();
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for s in 0..mdp.n_states {
        let Some(k) = layers.steps[s] else { continue };
        if k == 0 {
            continue;
        }
        checked += 1;
        let shortest = layers.shortest_path_actions(&amdp, s);
        let greedy = &sol.greedy_sets[s];
        if !greedy.iter().all(|a| shortest.contains(a)) {
            violations.push(Violation::GreedyMismatch {
                state: s,
                greedy: greedy.clone(),
                shortest_path: shortest,
            });
            worst = worst.max(1.0);
        }
    }
    if let Some(delta_phi) = assumption_report.delta_phi {
        for k in 1..layers.layers.len() {
            checked += 1;
            let min_closer =
                layers.layers[k - 1].iter().map(|&s| sol.v[s]).fold(f64::INFINITY, f64::min);
            let max_farther =
                layers.layers[k].iter().map(|&s| sol.v[s]).fold(f64::NEG_INFINITY, f64::max);
            let bound = (1.0 - gamma.powi(k as i32 - 1)) * delta_phi;
            let actual = min_closer - max_farther;
            if actual < bound - EXACT_TOL {
                worst = worst.max(bound - actual);
                violations.push(Violation::ValueGap { layer: k, bound, actual });
            }
        }
    }
    Ok(GreedyReport {
        assumption_report,
        preconditions_met: true,
        violations,
        max_violation_magnitude: worst,
        instances_checked: checked,
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

/// Fixed point of `Q(s,a) = r(s,a) + gamma * max_a' Q(f(s,a), a')` plus the
/// derived greedy policy. Tie-breaking is lowest action id; `greedy_sets`
/// lists every action within [`EXACT_TOL`] of the maximum.
#[derive(Debug, Clone)]
pub struct TabularSolution {
    pub n_actions: usize,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub greedy: Vec<usize>,
    pub greedy_sets: Vec<Vec<usize>>,
    pub iterations: usize,
    pub residual: f64,
}

impl TabularSolution {
    pub fn q_value(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }
}

pub fn value_iteration(
    mdp: &DeterministicMdp,
    reward: &dyn Fn(usize, usize) -> f64,
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<TabularSolution, OccError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(OccError::BadGamma(gamma));
    }
    let n_states = mdp.n_states;
    let n_actions = mdp.n_actions;
    let mut q = vec![0.0f64; n_states * n_actions];
    let mut v = vec![0.0f64; n_states];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while residual >= tol {
        if iterations >= max_iter {
            return Err(OccError::NoConvergence { iterations, residual });
        }
        residual = 0.0;
        for s in 0..n_states {
            for a in 0..n_actions {
                let next = mdp.successor(s, a);
                let new_q = reward(s, a) + gamma * v[next];
                residual = residual.max((new_q - q[s * n_actions + a]).abs());
                q[s * n_actions + a] = new_q;
            }
        }
        for s in 0..n_states {
            v[s] =
                (0..n_actions).map(|a| q[s * n_actions + a]).fold(f64::NEG_INFINITY, f64::max);
        }
        iterations += 1;
    }
    let mut greedy = Vec::with_capacity(n_states);
    let mut greedy_sets = Vec::with_capacity(n_states);
    for s in 0..n_states {
        let best = v[s];
        let set: Vec<usize> =
            (0..n_actions).filter(|&a| q[s * n_actions + a] >= best - EXACT_TOL).collect();
        greedy.push(set[0]);
        greedy_sets.push(set);
    }
    Ok(TabularSolution { n_actions, q, v, greedy, greedy_sets, iterations, residual })
}

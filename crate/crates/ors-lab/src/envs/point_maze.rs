//! A continuous 2D point maze: bounded box, wall segments, fixed step size,
//! and an optional action-noise knob for deliberately violating determinism.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::{EmbeddedDataset, EmbeddedTuple};
use crate::util::indexed_rng;

#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

fn orient(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
}

fn on_segment(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> bool {
    r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
}

/// Whether segments `p1p2` and `q1q2` intersect (including touching).
pub fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Continuous 2D maze in the unit box. Actions are clipped to `step_size` in
/// norm; a move whose path would cross a wall segment leaves the state in
/// place, and states are always clamped to the bounds.
#[derive(Debug, Clone)]
pub struct PointMaze2d {
    pub walls: Vec<Segment>,
    pub step_size: f64,
    pub goal_radius: f64,
    pub action_noise: f64,
}

impl PointMaze2d {
    pub fn open(action_noise: f64) -> Self {
        PointMaze2d { walls: Vec::new(), step_size: 0.1, goal_radius: 0.1, action_noise }
    }

    /// Unit box with a single interior wall from (0.5, 0.0) to (0.5, 0.7).
    pub fn single_wall(action_noise: f64) -> Self {
        PointMaze2d {
            walls: vec![Segment { a: [0.5, 0.0], b: [0.5, 0.7] }],
            step_size: 0.1,
            goal_radius: 0.1,
            action_noise,
        }
    }

    pub fn step<R: Rng>(&self, s: [f64; 2], action: [f64; 2], rng: &mut R) -> [f64; 2] {
        let mut a = action;
        if self.action_noise > 0.0 {
            let normal = Normal::new(0.0, self.action_noise).expect("valid noise std");
            a[0] += normal.sample(rng);
            a[1] += normal.sample(rng);
        }
        let norm = (a[0] * a[0] + a[1] * a[1]).sqrt();
        if norm > self.step_size {
            let scale = self.step_size / norm;
            a[0] *= scale;
            a[1] *= scale;
        }
        let target = [
            (s[0] + a[0]).clamp(0.0, 1.0),
            (s[1] + a[1]).clamp(0.0, 1.0),
        ];
        for wall in &self.walls {
            if segments_intersect(s, target, wall.a, wall.b) {
                return s;
            }
        }
        target
    }

    pub fn reached(&self, s: [f64; 2], g: [f64; 2]) -> bool {
        let dx = s[0] - g[0];
        let dy = s[1] - g[1];
        (dx * dx + dy * dy).sqrt() <= self.goal_radius
    }
}

/// Continuous offline dataset of `(s, a, s', a')` tuples.
#[derive(Debug, Clone)]
pub struct ContinuousDataset {
    pub traj_states: Vec<Vec<[f64; 2]>>,
    pub traj_actions: Vec<Vec<[f64; 2]>>,
}

impl ContinuousDataset {
    pub fn to_embedded(&self) -> EmbeddedDataset {
        let mut tuples = Vec::new();
        for (traj_id, (states, actions)) in
            self.traj_states.iter().zip(&self.traj_actions).enumerate()
        {
            for t in 0..states.len() - 1 {
                tuples.push(EmbeddedTuple {
                    s: states[t].to_vec(),
                    a_cond: actions[t].to_vec(),
                    a_vec: actions[t].to_vec(),
                    s_next: states[t + 1].to_vec(),
                    a_next_cond: actions[t + 1].to_vec(),
                    traj_id,
                    t,
                    s_id: None,
                    a_id: None,
                    s_next_id: None,
                });
            }
        }
        let traj_states = self
            .traj_states
            .iter()
            .map(|traj| traj.iter().map(|s| s.to_vec()).collect())
            .collect();
        EmbeddedDataset {
            tuples,
            traj_states,
            traj_state_ids: None,
            state_dim: 2,
            cond_action_dim: 2,
            action_dim: 2,
        }
    }
}

/// Random-waypoint rollouts: each trajectory repeatedly picks a waypoint and
/// walks noisily toward it.
pub fn generate_point_maze_dataset(
    maze: &PointMaze2d,
    n_trajectories: usize,
    horizon: usize,
    seed: u64,
) -> ContinuousDataset {
    let mut traj_states = Vec::with_capacity(n_trajectories);
    let mut traj_actions = Vec::with_capacity(n_trajectories);
    for traj in 0..n_trajectories {
        let mut rng = indexed_rng(seed, "point-maze-traj", traj as u64);
        let mut s = [rng.random::<f64>(), rng.random::<f64>()];
        let mut waypoint = [rng.random::<f64>(), rng.random::<f64>()];
        let mut states = vec![s];
        let mut actions = Vec::with_capacity(horizon + 1);
        for _ in 0..=horizon {
            if maze.reached(s, waypoint) {
                waypoint = [rng.random::<f64>(), rng.random::<f64>()];
            }
            let toward = [waypoint[0] - s[0], waypoint[1] - s[1]];
            let jitter = 0.3 * maze.step_size;
            let a = [
                toward[0].clamp(-maze.step_size, maze.step_size) + rng.random_range(-jitter..jitter),
                toward[1].clamp(-maze.step_size, maze.step_size) + rng.random_range(-jitter..jitter),
            ];
            actions.push(a);
            if actions.len() <= horizon {
                s = maze.step(s, a, &mut rng);
                states.push(s);
            }
        }
        traj_states.push(states);
        traj_actions.push(actions);
    }
    ContinuousDataset { traj_states, traj_actions }
}

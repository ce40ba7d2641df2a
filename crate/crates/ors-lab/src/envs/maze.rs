//! Grid mazes as deterministic MDPs with a total successor function.
//!
//! Maze text format: `#` wall, `.` free, `G` free cell carrying an optional
//! goal marker. Every free cell is a state; actions are
//! `{up, down, right, left, stay}` and bumping a wall or the border maps to
//! `stay`, keeping the successor function total.

use std::collections::HashMap;
use std::path::Path;

use super::EnvError;

pub const N_ACTIONS: usize = 5;
pub const ACTION_NAMES: [&str; N_ACTIONS] = ["up", "down", "right", "left", "stay"];
/// Per-action (row, col) displacement, indexed like [`ACTION_NAMES`].
const ACTION_DELTAS: [(i64, i64); N_ACTIONS] = [(-1, 0), (1, 0), (0, 1), (0, -1), (0, 0)];

#[derive(Debug, Clone)]
pub struct GridMaze {
    pub rows: usize,
    pub cols: usize,
    walls: Vec<bool>,
    pub goal_marker: Option<(usize, usize)>,
}

impl GridMaze {
    /// Open rectangular maze with no interior walls.
    pub fn open(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0);
        GridMaze { rows, cols, walls: vec![false; rows * cols], goal_marker: None }
    }

    /// 1D chain of `n` cells.
    pub fn chain(n: usize) -> Self {
        Self::open(1, n)
    }

    pub fn with_walls(rows: usize, cols: usize, walls: &[(usize, usize)]) -> Self {
        let mut maze = Self::open(rows, cols);
        for &(r, c) in walls {
            assert!(r < rows && c < cols, "wall out of bounds");
            maze.walls[r * cols + c] = true;
        }
        maze
    }

    /// A maze where squared Euclidean distance inverts around a wall: states
    /// just above the wall are geometrically close to the goal below it but
    /// many steps away on foot.
    pub fn u_maze() -> Self {
        let mut maze = Self::open(5, 5);
        for c in 0..4 {
            maze.walls[2 * 5 + c] = true;
        }
        maze.goal_marker = Some((3, 1));
        maze
    }

    pub fn parse(text: &str) -> Result<Self, EnvError> {
        let mut rows: Vec<Vec<bool>> = Vec::new();
        let mut goal_marker = None;
        let mut width = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let mut row = Vec::with_capacity(line.len());
            for (c, ch) in line.chars().enumerate() {
                match ch {
                    '#' => row.push(true),
                    '.' => row.push(false),
                    'G' => {
                        if goal_marker.is_some() {
                            return Err(EnvError::MazeParse {
                                line: i + 1,
                                msg: "multiple goal markers".to_string(),
                            });
                        }
                        goal_marker = Some((rows.len(), c));
                        row.push(false);
                    }
                    other => {
                        return Err(EnvError::MazeParse {
                            line: i + 1,
                            msg: format!("unexpected character {other:?}"),
                        })
                    }
                }
            }
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(EnvError::MazeParse {
                        line: i + 1,
                        msg: format!("row width {} differs from {}", row.len(), w),
                    })
                }
                _ => {}
            }
            rows.push(row);
        }
        let cols = width.ok_or(EnvError::MazeParse { line: 1, msg: "empty maze".to_string() })?;
        if rows.iter().flatten().all(|&w| w) {
            return Err(EnvError::MazeParse { line: 1, msg: "maze has no free cell".to_string() });
        }
        Ok(GridMaze {
            rows: rows.len(),
            cols,
            walls: rows.into_iter().flatten().collect(),
            goal_marker,
        })
    }

    pub fn load(path: &Path) -> Result<Self, EnvError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn is_wall(&self, r: usize, c: usize) -> bool {
        self.walls[r * self.cols + c]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let ch = if self.is_wall(r, c) {
                    '#'
                } else if self.goal_marker == Some((r, c)) {
                    'G'
                } else {
                    '.'
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

/// An enumerable MDP with a total deterministic successor function, a
/// coordinate embedding per state, and a discount factor.
#[derive(Debug, Clone)]
pub struct DeterministicMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    successor: Vec<usize>,
    embed: Vec<Vec<f64>>,
    /// Per-action embedding used by continuous-action policy learners:
    /// the (dx, dy) displacement of each grid action.
    action_vectors: Vec<Vec<f64>>,
    coords: Vec<(usize, usize)>,
    coord_to_state: HashMap<(usize, usize), usize>,
}

impl DeterministicMdp {
    /// MDP from an explicit successor table (`n_states * n_actions` entries)
    /// and per-state embedding vectors. Used for non-maze instances such as
    /// cycles.
    pub fn custom(n_states: usize, n_actions: usize, successor: Vec<usize>, embed: Vec<Vec<f64>>, gamma: f64) -> Self {
        assert!(gamma > 0.0 && gamma < 1.0, "gamma must be in (0,1)");
        assert_eq!(successor.len(), n_states * n_actions);
        assert_eq!(embed.len(), n_states);
        assert!(successor.iter().all(|&s| s < n_states), "successor out of range");
        let dim = embed[0].len();
        assert!(embed.iter().all(|e| e.len() == dim));
        DeterministicMdp {
            n_states,
            n_actions,
            gamma,
            successor,
            embed,
            action_vectors: (0..n_actions).map(|a| vec![a as f64]).collect(),
            coords: vec![(0, 0); n_states],
            coord_to_state: HashMap::new(),
        }
    }

    pub fn from_maze(maze: &GridMaze, gamma: f64) -> Self {
        assert!(gamma > 0.0 && gamma < 1.0, "gamma must be in (0,1)");
        let mut coords = Vec::new();
        let mut coord_to_state = HashMap::new();
        for r in 0..maze.rows {
            for c in 0..maze.cols {
                if !maze.is_wall(r, c) {
                    coord_to_state.insert((r, c), coords.len());
                    coords.push((r, c));
                }
            }
        }
        let n_states = coords.len();
        let mut successor = vec![0usize; n_states * N_ACTIONS];
        for (s, &(r, c)) in coords.iter().enumerate() {
            for (a, &(dr, dc)) in ACTION_DELTAS.iter().enumerate() {
                let nr = r as i64 + dr;
                let nc = c as i64 + dc;
                let next = if nr >= 0
                    && nc >= 0
                    && (nr as usize) < maze.rows
                    && (nc as usize) < maze.cols
                    && !maze.is_wall(nr as usize, nc as usize)
                {
                    coord_to_state[&(nr as usize, nc as usize)]
                } else {
                    s
                };
                successor[s * N_ACTIONS + a] = next;
            }
        }
        // Embedding: (x, y) = (col, row) in unit cells.
        let embed = coords.iter().map(|&(r, c)| vec![c as f64, r as f64]).collect();
        let action_vectors = ACTION_DELTAS
            .iter()
            .map(|&(dr, dc)| vec![dc as f64, dr as f64])
            .collect();
        DeterministicMdp {
            n_states,
            n_actions: N_ACTIONS,
            gamma,
            successor,
            embed,
            action_vectors,
            coords,
            coord_to_state,
        }
    }

    pub fn successor(&self, s: usize, a: usize) -> usize {
        self.successor[s * self.n_actions + a]
    }

    pub fn embed(&self, s: usize) -> &[f64] {
        &self.embed[s]
    }

    pub fn embed_dim(&self) -> usize {
        self.embed[0].len()
    }

    pub fn action_vector(&self, a: usize) -> &[f64] {
        &self.action_vectors[a]
    }

    pub fn coords(&self, s: usize) -> (usize, usize) {
        self.coords[s]
    }

    pub fn state_at(&self, row: usize, col: usize) -> Option<usize> {
        self.coord_to_state.get(&(row, col)).copied()
    }

    /// Resolves a serialized coordinate embedding back to a state id.
    pub fn state_for_embed(&self, xy: &[f64]) -> Result<usize, EnvError> {
        let col = xy[0].round();
        let row = xy[1].round();
        if (xy[0] - col).abs() > 1e-6 || (xy[1] - row).abs() > 1e-6 || row < 0.0 || col < 0.0 {
            return Err(EnvError::NoStateAt(xy[0], xy[1]));
        }
        self.state_at(row as usize, col as usize).ok_or(EnvError::NoStateAt(xy[0], xy[1]))
    }

    /// Squared Euclidean distance between the embeddings of two states.
    pub fn phi(&self, s: usize, g: usize) -> f64 {
        self.embed[s]
            .iter()
            .zip(&self.embed[g])
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Copy of this MDP where all actions at `g` return `g`.
    pub fn absorbing(&self, g: usize) -> Self {
        let mut out = self.clone();
        for a in 0..self.n_actions {
            out.successor[g * self.n_actions + a] = g;
        }
        out
    }

    /// Longest finite shortest-path distance to `g` over all states.
    pub fn eccentricity(&self, g: usize) -> usize {
        compute_layers(self, g).layers.len().saturating_sub(1)
    }
}

/// BFS layer decomposition for a fixed goal: `steps[s]` is the exact
/// shortest-path step count to `g` (``None`` when unreachable) and
/// `layers[k]` lists the states at distance `k`.
#[derive(Debug, Clone)]
pub struct LayerDecomposition {
    pub goal: usize,
    pub steps: Vec<Option<u32>>,
    pub layers: Vec<Vec<usize>>,
}

impl LayerDecomposition {
    /// Actions at `s` whose successor is one layer closer to the goal.
    pub fn shortest_path_actions(&self, mdp: &DeterministicMdp, s: usize) -> Vec<usize> {
        let Some(k) = self.steps[s] else { return Vec::new() };
        if k == 0 {
            return Vec::new();
        }
        (0..mdp.n_actions)
            .filter(|&a| self.steps[mdp.successor(s, a)] == Some(k - 1))
            .collect()
    }
}

pub fn compute_layers(mdp: &DeterministicMdp, g: usize) -> LayerDecomposition {
    assert!(g < mdp.n_states, "goal out of range");
    // Reverse adjacency: predecessors of each state under any action.
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); mdp.n_states];
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let next = mdp.successor(s, a);
            if next != s {
                preds[next].push(s);
            }
        }
    }
    let mut steps = vec![None; mdp.n_states];
    steps[g] = Some(0u32);
    let mut layers = vec![vec![g]];
    let mut frontier = vec![g];
    while !frontier.is_empty() {
        let mut next_layer = Vec::new();
        for &s in &frontier {
            for &p in &preds[s] {
                if steps[p].is_none() {
                    steps[p] = Some(layers.len() as u32);
                    next_layer.push(p);
                }
            }
        }
        if next_layer.is_empty() {
            break;
        }
        next_layer.sort_unstable();
        layers.push(next_layer.clone());
        frontier = next_layer;
    }
    LayerDecomposition { goal: g, steps, layers }
}

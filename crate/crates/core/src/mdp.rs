//! Finite deterministic MDPs and the environments used throughout the crate.
//!
//! States are dense integer ids. Grid environments assign ids row-major over
//! free cells and keep the id map in [`GridLayout`].

use std::collections::VecDeque;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

pub use crate::dataset::Trajectory;

/// Chain actions.
pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const STAY: usize = 2;

/// Gridworld actions.
pub const GRID_UP: usize = 0;
pub const GRID_DOWN: usize = 1;
pub const GRID_LEFT: usize = 2;
pub const GRID_RIGHT: usize = 3;
pub const GRID_STAY: usize = 4;

/// Row/column position of every state of a gridworld.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    /// `cells[state] = (row, col)`.
    pub cells: Vec<(usize, usize)>,
}

impl GridLayout {
    pub fn state_at(&self, row: usize, col: usize) -> Option<usize> {
        self.cells.iter().position(|&c| c == (row, col))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    name: String,
    n_states: usize,
    n_actions: usize,
    transition: Vec<usize>,
    initial: Vec<(usize, f64)>,
    action_names: Vec<String>,
    layout: Option<GridLayout>,
}

impl Mdp {
    /// Builds an MDP from a row-major `(state, action) -> state` table.
    pub fn new(
        name: impl Into<String>,
        n_states: usize,
        n_actions: usize,
        transition: Vec<usize>,
        initial: Vec<(usize, f64)>,
    ) -> Result<Self> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!(
                "mdp name must be non-empty without whitespace, got {name:?}"
            )));
        }
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidArgument(
                "an mdp needs at least one state and one action".into(),
            ));
        }
        if transition.len() != n_states * n_actions {
            return Err(Error::InvalidArgument(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                n_states * n_actions
            )));
        }
        if let Some(bad) = transition.iter().position(|&t| t >= n_states) {
            return Err(Error::InvalidArgument(format!(
                "transition({}, {}) = {} is out of range",
                bad / n_actions,
                bad % n_actions,
                transition[bad]
            )));
        }
        if initial.is_empty() {
            return Err(Error::InvalidArgument("empty initial distribution".into()));
        }
        let mut total = 0.0;
        for &(s, w) in &initial {
            if s >= n_states || !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "invalid initial entry ({s}, {w})"
                )));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "initial weights sum to {total}, expected 1"
            )));
        }
        let action_names = (0..n_actions).map(|a| format!("a{a}")).collect();
        Ok(Mdp {
            name,
            n_states,
            n_actions,
            transition,
            initial,
            action_names,
            layout: None,
        })
    }

    fn with_action_names(mut self, names: &[&str]) -> Self {
        self.action_names = names.iter().map(|n| n.to_string()).collect();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn step(&self, s: usize, a: usize) -> usize {
        self.transition[s * self.n_actions + a]
    }

    /// `N(s)`: the successor of every action, indexed by action.
    pub fn successors(&self, s: usize) -> &[usize] {
        &self.transition[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn initial_states(&self) -> &[(usize, f64)] {
        &self.initial
    }

    pub fn action_name(&self, a: usize) -> &str {
        &self.action_names[a]
    }

    pub fn layout(&self) -> Option<&GridLayout> {
        self.layout.as_ref()
    }
}

impl fmt::Display for Mdp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({} states, {} actions)",
            self.name, self.n_states, self.n_actions
        )
    }
}

/// Chain of `length` states with actions Left, Right, Stay.
pub fn build_chain(length: usize) -> Result<Mdp> {
    if length < 2 {
        return Err(Error::InvalidArgument(format!(
            "chain length must be at least 2, got {length}"
        )));
    }
    let mut transition = Vec::with_capacity(length * 3);
    for s in 0..length {
        transition.push(s.saturating_sub(1));
        transition.push((s + 1).min(length - 1));
        transition.push(s);
    }
    let w = 1.0 / length as f64;
    let initial = (0..length).map(|s| (s, w)).collect();
    Ok(Mdp::new(format!("chain{length}"), length, 3, transition, initial)?
        .with_action_names(&["left", "right", "stay"]))
}

/// Parses a map of `.`, `#` and `S` cells into a gridworld.
pub fn build_gridworld(map_text: &str) -> Result<Mdp> {
    build_named_gridworld("grid", map_text)
}

pub fn build_named_gridworld(name: &str, map_text: &str) -> Result<Mdp> {
    let rows: Vec<&str> = map_text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .collect();
    let rows: Vec<&str> = match rows.iter().rposition(|r| !r.is_empty()) {
        Some(last) => rows[..=last].to_vec(),
        None => Vec::new(),
    };
    if rows.is_empty() {
        return Err(Error::InvalidMap("map has no rows".into()));
    }
    let width = rows[0].chars().count();
    let height = rows.len();
    let mut cells = Vec::new();
    let mut starts = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        if row.chars().count() != width {
            return Err(Error::InvalidMap(format!(
                "row {} has width {}, expected {width}",
                r + 1,
                row.chars().count()
            )));
        }
        for (c, ch) in row.chars().enumerate() {
            match ch {
                '#' => {}
                '.' => cells.push((r, c)),
                'S' => {
                    starts.push(cells.len());
                    cells.push((r, c));
                }
                other => {
                    return Err(Error::InvalidMap(format!(
                        "unexpected character {other:?} at row {}, column {}",
                        r + 1,
                        c + 1
                    )))
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::InvalidMap("map has no free cells".into()));
    }

    let mut index = vec![usize::MAX; width * height];
    for (id, &(r, c)) in cells.iter().enumerate() {
        index[r * width + c] = id;
    }
    let lookup = |r: isize, c: isize| -> Option<usize> {
        if r < 0 || c < 0 || r as usize >= height || c as usize >= width {
            return None;
        }
        let id = index[r as usize * width + c as usize];
        (id != usize::MAX).then_some(id)
    };

    const MOVES: [(isize, isize); 5] = [(-1, 0), (1, 0), (0, -1), (0, 1), (0, 0)];
    let mut transition = Vec::with_capacity(cells.len() * MOVES.len());
    for (id, &(r, c)) in cells.iter().enumerate() {
        for (dr, dc) in MOVES {
            let next = lookup(r as isize + dr, c as isize + dc).unwrap_or(id);
            transition.push(next);
        }
    }

    // One connected component.
    let n = cells.len();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(s) = queue.pop_front() {
        for &t in &transition[s * 5..s * 5 + 5] {
            if !seen[t] {
                seen[t] = true;
                queue.push_back(t);
            }
        }
    }
    if let Some(unreached) = seen.iter().position(|&v| !v) {
        let (r, c) = cells[unreached];
        return Err(Error::InvalidMap(format!(
            "free cell at row {}, column {} is disconnected",
            r + 1,
            c + 1
        )));
    }

    let initial_ids: Vec<usize> = if starts.is_empty() {
        (0..n).collect()
    } else {
        starts
    };
    let w = 1.0 / initial_ids.len() as f64;
    let initial = initial_ids.into_iter().map(|s| (s, w)).collect();
    let mut mdp = Mdp::new(name, n, 5, transition, initial)?
        .with_action_names(&["up", "down", "left", "right", "stay"]);
    mdp.layout = Some(GridLayout {
        width,
        height,
        cells,
    });
    Ok(mdp)
}

/// Map text of an open `width x height` grid.
pub fn open_grid_map(width: usize, height: usize) -> String {
    let mut map = String::with_capacity((width + 1) * height);
    for _ in 0..height {
        map.extend(std::iter::repeat_n('.', width));
        map.push('\n');
    }
    map
}

/// 16x16 four-rooms map: four 7x7 rooms separated by one-cell walls on row
/// and column 7, bounded by walls on row and column 15, with one doorway in
/// each internal wall segment.
#[allow(clippy::needless_range_loop)]
pub fn four_rooms_map() -> String {
    let mut grid = vec![vec!['.'; 16]; 16];
    for i in 0..16 {
        grid[7][i] = '#';
        grid[i][7] = '#';
        grid[15][i] = '#';
        grid[i][15] = '#';
    }
    for (r, c) in [(3, 7), (11, 7), (7, 3), (7, 11)] {
        grid[r][c] = '.';
    }
    grid.into_iter()
        .map(|row| row.into_iter().collect::<String>() + "\n")
        .collect()
}

/// Serpentine corridor of exactly `length` free cells, folded into rows of
/// `width` cells joined by single connector cells at alternating ends.
pub fn corridor_maze_map(length: usize, width: usize) -> Result<String> {
    if length < 2 || width < 2 {
        return Err(Error::InvalidArgument(format!(
            "corridor needs length >= 2 and width >= 2, got {length} and {width}"
        )));
    }
    let mut path = Vec::with_capacity(length);
    let mut row = 0;
    let mut left_to_right = true;
    'fill: loop {
        let cols: Vec<usize> = if left_to_right {
            (0..width).collect()
        } else {
            (0..width).rev().collect()
        };
        for c in cols {
            path.push((row, c));
            if path.len() == length {
                break 'fill;
            }
        }
        let end = if left_to_right { width - 1 } else { 0 };
        path.push((row + 1, end));
        if path.len() == length {
            break;
        }
        row += 2;
        left_to_right = !left_to_right;
    }
    let height = path.iter().map(|&(r, _)| r).max().unwrap_or(0) + 1;
    let mut grid = vec![vec!['#'; width]; height];
    for (r, c) in path {
        grid[r][c] = '.';
    }
    Ok(grid
        .into_iter()
        .map(|row| row.into_iter().collect::<String>() + "\n")
        .collect())
}

/// Task reward `r(s, a, s')`, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardFn {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl RewardFn {
    pub fn from_fn(mdp: &Mdp, f: impl Fn(usize, usize, usize) -> f64) -> Result<Self> {
        let (n, na) = (mdp.n_states(), mdp.n_actions());
        let mut values = Vec::with_capacity(n * na * n);
        for s in 0..n {
            for a in 0..na {
                for next in 0..n {
                    let v = f(s, a, next);
                    if !v.is_finite() {
                        return Err(Error::InvalidArgument(format!(
                            "reward r({s}, {a}, {next}) = {v} is not finite"
                        )));
                    }
                    values.push(v);
                }
            }
        }
        Ok(RewardFn {
            n_states: n,
            n_actions: na,
            values,
        })
    }

    pub fn zero(mdp: &Mdp) -> Self {
        RewardFn {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            values: vec![0.0; mdp.n_states() * mdp.n_actions() * mdp.n_states()],
        }
    }

    /// State-only reward `r(s)`, constant over `(a, s')`.
    pub fn from_state_values(mdp: &Mdp, per_state: &[f64]) -> Result<Self> {
        if per_state.len() != mdp.n_states() {
            return Err(Error::InvalidArgument(format!(
                "expected {} state rewards, got {}",
                mdp.n_states(),
                per_state.len()
            )));
        }
        Self::from_fn(mdp, |s, _, _| per_state[s])
    }

    /// `r = 1` while the agent occupies `goal`.
    pub fn goal_indicator(mdp: &Mdp, goal: usize) -> Result<Self> {
        check_state(mdp, goal)?;
        Self::from_fn(mdp, |s, _, _| if s == goal { 1.0 } else { 0.0 })
    }

    /// `r = 1` on every transition that ends in `goal`, including staying.
    pub fn arrival(mdp: &Mdp, goal: usize) -> Result<Self> {
        check_state(mdp, goal)?;
        Self::from_fn(mdp, |_, _, next| if next == goal { 1.0 } else { 0.0 })
    }

    /// `r = 1` on transitions that enter `goal` from another state.
    pub fn entering(mdp: &Mdp, goal: usize) -> Result<Self> {
        check_state(mdp, goal)?;
        Self::from_fn(mdp, |s, _, next| {
            if next == goal && s != goal {
                1.0
            } else {
                0.0
            }
        })
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize, next: usize) -> f64 {
        self.values[(s * self.n_actions + a) * self.n_states + next]
    }

    pub fn scaled(&self, c: f64) -> Self {
        RewardFn {
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }
}

pub(crate) fn check_state(mdp: &Mdp, s: usize) -> Result<()> {
    if s >= mdp.n_states() {
        return Err(Error::InvalidArgument(format!(
            "state {s} out of range for {mdp}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_boundaries_and_identity() {
        let m = build_chain(5).unwrap();
        assert_eq!(m.step(0, LEFT), 0);
        assert_eq!(m.step(2, RIGHT), 3);
        assert_eq!(m.step(4, STAY), 4);
        assert_eq!(m.step(4, RIGHT), 4);
        assert!(build_chain(1).is_err());
        let total: f64 = m.initial_states().iter().map(|x| x.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_grid_is_a_chain() {
        let m = build_gridworld("...").unwrap();
        assert_eq!(m.n_states(), 3);
        assert_eq!(m.n_actions(), 5);
        assert_eq!(m.step(0, GRID_RIGHT), 1);
        assert_eq!(m.step(0, GRID_LEFT), 0);
        assert_eq!(m.step(1, GRID_UP), 1);
    }

    #[test]
    fn wall_blocks_movement() {
        let m = build_gridworld("...\n.#.\n...\n").unwrap();
        assert_eq!(m.n_states(), 8);
        let layout = m.layout().unwrap();
        let below = layout.state_at(2, 1).unwrap();
        assert_eq!(m.step(below, GRID_UP), below);
        assert_ne!(m.step(below, GRID_LEFT), below);
    }

    #[test]
    fn start_cells_define_initial_distribution() {
        let m = build_gridworld("S..\n..S").unwrap();
        let init = m.initial_states();
        assert_eq!(init.len(), 2);
        assert_eq!(init[0], (0, 0.5));
        assert_eq!(init[1], (5, 0.5));
    }

    #[test]
    fn malformed_maps_are_rejected() {
        assert!(matches!(build_gridworld("..\n."), Err(Error::InvalidMap(_))));
        assert!(matches!(build_gridworld("##\n##"), Err(Error::InvalidMap(_))));
        assert!(matches!(build_gridworld(".#."), Err(Error::InvalidMap(_))));
        assert!(matches!(build_gridworld("..x"), Err(Error::InvalidMap(_))));
        assert!(matches!(build_gridworld(""), Err(Error::InvalidMap(_))));
    }

    #[test]
    fn four_rooms_has_two_hundred_cells() {
        let map = four_rooms_map();
        let free = map.chars().filter(|&c| c == '.').count();
        assert_eq!(free, 200);
        assert_eq!(build_gridworld(&map).unwrap().n_states(), 200);
    }

    #[test]
    fn corridor_maze_has_requested_length() {
        let map = corridor_maze_map(64, 16).unwrap();
        let m = build_gridworld(&map).unwrap();
        assert_eq!(m.n_states(), 64);
        let map = corridor_maze_map(5, 3).unwrap();
        assert_eq!(map, "...\n##.\n##.\n");
    }

    #[test]
    fn open_grid_interior_moves() {
        let m = build_gridworld(&open_grid_map(4, 3)).unwrap();
        assert_eq!(m.n_states(), 12);
        let layout = m.layout().unwrap();
        for s in 0..m.n_states() {
            let (r, c) = layout.cells[s];
            if r > 0 && r < 2 && c > 0 && c < 3 {
                let moving = m.successors(s).iter().filter(|&&t| t != s).count();
                assert_eq!(moving, 4);
            }
        }
    }

    #[test]
    fn reward_constructors() {
        let m = build_chain(5).unwrap();
        let r = RewardFn::goal_indicator(&m, 4).unwrap();
        assert_eq!(r.get(4, STAY, 4), 1.0);
        assert_eq!(r.get(3, RIGHT, 4), 0.0);
        let e = RewardFn::entering(&m, 4).unwrap();
        assert_eq!(e.get(3, RIGHT, 4), 1.0);
        assert_eq!(e.get(4, STAY, 4), 0.0);
        assert!(RewardFn::from_fn(&m, |_, _, _| f64::NAN).is_err());
        assert_eq!(r.scaled(3.0).get(4, STAY, 4), 3.0);
    }
}

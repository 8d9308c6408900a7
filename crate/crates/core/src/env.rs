//! Deterministic gridworld maze MDPs with an exact shortest-path oracle.
//!
//! States and goals share the same space (free cells of the maze). The five
//! discrete actions are up, down, left, right, stay; moves into walls or off
//! the grid leave the state unchanged.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// A single grid cell, stored as a flat `row * width + col` index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell(pub usize);

impl Cell {
    pub fn from_rc(row: usize, col: usize, width: usize) -> Self {
        Cell(row * width + col)
    }

    pub fn row(self, width: usize) -> usize {
        self.0 / width
    }

    pub fn col(self, width: usize) -> usize {
        self.0 % width
    }
}

/// The fixed, ordered action set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
    Stay = 4,
}

pub const ACTIONS: [Action; 5] = [
    Action::Up,
    Action::Down,
    Action::Left,
    Action::Right,
    Action::Stay,
];

pub const NUM_ACTIONS: usize = 5;

impl Action {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        ACTIONS
            .get(i)
            .copied()
            .ok_or_else(|| Error::Format(format!("invalid action index {i}")))
    }
}

/// Shortest-path distance between two free cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distance {
    Steps(usize),
    Unreachable,
}

impl Distance {
    pub fn steps(self) -> Option<usize> {
        match self {
            Distance::Steps(d) => Some(d),
            Distance::Unreachable => None,
        }
    }
}

/// An immutable maze MDP. Safe to share across threads once built.
#[derive(Debug, Clone)]
pub struct GridWorld {
    width: usize,
    height: usize,
    wall: Vec<bool>,
    /// Flat indices of free cells, in row-major order.
    free_cells: Vec<Cell>,
    /// Maps a flat cell index to its position in `free_cells`, if free.
    free_index: Vec<Option<usize>>,
    /// Raw maze text this grid was parsed from (normalized, '\n'-joined).
    text: String,
}

impl GridWorld {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn is_wall(&self, c: Cell) -> bool {
        self.wall[c.0]
    }

    pub fn free_cells(&self) -> &[Cell] {
        &self.free_cells
    }

    pub fn num_free(&self) -> usize {
        self.free_cells.len()
    }

    /// Compact index of a free cell in `[0, num_free)`.
    pub fn free_index(&self, c: Cell) -> Result<usize> {
        self.free_index
            .get(c.0)
            .copied()
            .flatten()
            .ok_or(Error::InvalidState(c.0))
    }

    pub fn check_free(&self, c: Cell) -> Result<Cell> {
        if c.0 < self.wall.len() && !self.wall[c.0] {
            Ok(c)
        } else {
            Err(Error::InvalidState(c.0))
        }
    }

    /// Deterministic transition. Blocked moves and `stay` return `s` itself.
    pub fn step(&self, s: Cell, a: Action) -> Result<Cell> {
        self.check_free(s)?;
        let (r, c) = (s.row(self.width), s.col(self.width));
        let target = match a {
            Action::Up => (r > 0).then(|| Cell::from_rc(r - 1, c, self.width)),
            Action::Down => (r + 1 < self.height).then(|| Cell::from_rc(r + 1, c, self.width)),
            Action::Left => (c > 0).then(|| Cell::from_rc(r, c - 1, self.width)),
            Action::Right => (c + 1 < self.width).then(|| Cell::from_rc(r, c + 1, self.width)),
            Action::Stay => None,
        };
        Ok(match target {
            Some(t) if !self.wall[t.0] => t,
            _ => s,
        })
    }

    /// BFS distances from `src` to every free cell, indexed by compact free index.
    pub fn bfs_distances(&self, src: Cell) -> Result<Vec<Option<usize>>> {
        let si = self.free_index(src)?;
        let mut dist = vec![None; self.num_free()];
        dist[si] = Some(0);
        let mut queue = VecDeque::new();
        queue.push_back(src);
        while let Some(cur) = queue.pop_front() {
            let d = dist[self.free_index(cur)?].unwrap();
            for a in &ACTIONS[..4] {
                let next = self.step(cur, *a)?;
                let ni = self.free_index(next)?;
                if dist[ni].is_none() {
                    dist[ni] = Some(d + 1);
                    queue.push_back(next);
                }
            }
        }
        Ok(dist)
    }

    /// Minimum number of move steps from `s` to `g`.
    pub fn shortest_path_distance(&self, s: Cell, g: Cell) -> Result<Distance> {
        self.check_free(g)?;
        let dist = self.bfs_distances(s)?;
        Ok(match dist[self.free_index(g)?] {
            Some(d) => Distance::Steps(d),
            None => Distance::Unreachable,
        })
    }

    /// All-pairs shortest-path table, `table[si][gi]` over compact free indices.
    pub fn all_pairs_distances(&self) -> Result<Vec<Vec<Option<usize>>>> {
        self.free_cells
            .iter()
            .map(|&s| self.bfs_distances(s))
            .collect()
    }

    /// True if every free cell is reachable from every other.
    pub fn is_connected(&self) -> bool {
        match self.bfs_distances(self.free_cells[0]) {
            Ok(d) => d.iter().all(|x| x.is_some()),
            Err(_) => false,
        }
    }

    /// Longest shortest-path distance over all free-cell pairs.
    pub fn diameter(&self) -> Result<usize> {
        let mut diam = 0;
        for &s in &self.free_cells {
            for d in self.bfs_distances(s)?.iter().flatten() {
                diam = diam.max(*d);
            }
        }
        Ok(diam)
    }
}

/// Parse a maze from text: '#' is a wall, '.' is free, rows must be rectangular.
pub fn parse_maze(text: &str) -> Result<GridWorld> {
    let rows: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
    if rows.is_empty() {
        return Err(Error::EmptyMaze);
    }
    let width = rows[0].chars().count();
    let height = rows.len();
    let mut wall = Vec::with_capacity(width * height);
    for row in &rows {
        if row.chars().count() != width {
            return Err(Error::Format(format!(
                "ragged maze row: expected width {width}, got {}",
                row.chars().count()
            )));
        }
        for ch in row.chars() {
            match ch {
                '#' => wall.push(true),
                '.' => wall.push(false),
                other => {
                    return Err(Error::Format(format!("invalid maze character {other:?}")));
                }
            }
        }
    }
    let mut free_cells = Vec::new();
    let mut free_index = vec![None; wall.len()];
    for (i, &w) in wall.iter().enumerate() {
        if !w {
            free_index[i] = Some(free_cells.len());
            free_cells.push(Cell(i));
        }
    }
    if free_cells.is_empty() {
        return Err(Error::EmptyMaze);
    }
    Ok(GridWorld {
        width,
        height,
        wall,
        free_cells,
        free_index,
        text: rows.join("\n"),
    })
}

/// Bundled maze assets.
pub mod assets {
    pub const GRID_MEDIUM: &str = include_str!("../assets/grid-medium.txt");
    pub const GRID_LARGE: &str = include_str!("../assets/grid-large.txt");
    pub const GRID_CORRIDOR: &str = include_str!("../assets/grid-corridor.txt");

    /// Look up a bundled maze by name.
    pub fn by_name(name: &str) -> Option<&'static str> {
        match name {
            "grid-medium" => Some(GRID_MEDIUM),
            "grid-large" => Some(GRID_LARGE),
            "grid-corridor" => Some(GRID_CORRIDOR),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open3x3() -> GridWorld {
        parse_maze("...\n...\n...").unwrap()
    }

    #[test]
    fn parse_smallest_open_grid() {
        let g = parse_maze("..\n..").unwrap();
        assert_eq!(g.num_free(), 4);
        assert_eq!((g.width(), g.height()), (2, 2));
    }

    #[test]
    fn parse_single_wall() {
        let g = parse_maze("#.\n..").unwrap();
        assert_eq!(g.num_free(), 3);
        assert!(g.is_wall(Cell(0)));
    }

    #[test]
    fn parse_rejects_ragged_rows() {
        assert!(matches!(parse_maze("..\n..."), Err(Error::Format(_))));
    }

    #[test]
    fn parse_rejects_all_walls() {
        assert!(matches!(parse_maze("##\n##"), Err(Error::EmptyMaze)));
    }

    #[test]
    fn parse_tolerates_trailing_newline() {
        let a = parse_maze("..\n..").unwrap();
        let b = parse_maze("..\n..\n").unwrap();
        assert_eq!(a.text(), b.text());
    }

    #[test]
    fn bundled_medium_free_count_matches_dots() {
        let g = parse_maze(assets::GRID_MEDIUM).unwrap();
        let dots = assets::GRID_MEDIUM.chars().filter(|&c| c == '.').count();
        assert_eq!(g.num_free(), dots);
    }

    #[test]
    fn step_free_move() {
        let g = open3x3();
        let s = Cell::from_rc(1, 1, 3);
        assert_eq!(g.step(s, Action::Up).unwrap(), Cell::from_rc(0, 1, 3));
    }

    #[test]
    fn step_blocked_is_identity() {
        let g = parse_maze("#..\n...\n...").unwrap();
        let s = Cell::from_rc(1, 0, 3);
        assert_eq!(g.step(s, Action::Up).unwrap(), s);
        // off-grid is also identity
        assert_eq!(g.step(Cell::from_rc(0, 1, 3), Action::Up).unwrap(), Cell::from_rc(0, 1, 3));
    }

    #[test]
    fn step_stay_is_identity() {
        let g = open3x3();
        for &s in g.free_cells() {
            assert_eq!(g.step(s, Action::Stay).unwrap(), s);
        }
    }

    #[test]
    fn step_rejects_wall_state() {
        let g = parse_maze("#.\n..").unwrap();
        assert!(g.step(Cell(0), Action::Down).is_err());
    }

    #[test]
    fn distance_zero_iff_same_cell() {
        let g = open3x3();
        let s = Cell::from_rc(2, 0, 3);
        assert_eq!(g.shortest_path_distance(s, s).unwrap(), Distance::Steps(0));
    }

    #[test]
    fn distance_is_manhattan_on_open_grid() {
        let g = open3x3();
        let d = g
            .shortest_path_distance(Cell::from_rc(0, 0, 3), Cell::from_rc(2, 2, 3))
            .unwrap();
        assert_eq!(d, Distance::Steps(4));
    }

    #[test]
    fn distance_unreachable_when_disconnected() {
        let g = parse_maze(".#.\n###\n.#.").unwrap();
        let d = g
            .shortest_path_distance(Cell::from_rc(0, 0, 3), Cell::from_rc(0, 2, 3))
            .unwrap();
        assert_eq!(d, Distance::Unreachable);
    }

    #[test]
    fn bundled_mazes_are_connected() {
        for text in [assets::GRID_MEDIUM, assets::GRID_LARGE, assets::GRID_CORRIDOR] {
            assert!(parse_maze(text).unwrap().is_connected());
        }
    }

    #[test]
    fn corridor_diameter_is_at_least_200() {
        let g = parse_maze(assets::GRID_CORRIDOR).unwrap();
        assert!(g.diameter().unwrap() >= 200);
    }

    #[test]
    fn distance_symmetry_and_triangle_on_medium() {
        let g = parse_maze(assets::GRID_MEDIUM).unwrap();
        assert!(g.num_free() <= 200);
        let d = g.all_pairs_distances().unwrap();
        let n = g.num_free();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(d[i][j], d[j][i]);
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let (dij, dik, dkj) = (d[i][j].unwrap(), d[i][k].unwrap(), d[k][j].unwrap());
                    assert!(dij <= dik + dkj);
                }
            }
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const U_MAZE: &str = "\
#####
#...#
###.#
#...#
#####";

const M_MAZE: &str = "\
########
#..##..#
#..#...#
##...###
#..#...#
#.#..#.#
#...#..#
########";

const L_MAZE: &str = "\
############
#....#.....#
#.##.#.#.#.#
#......#...#
#.####.###.#
#..#.#.....#
##.#.#.#.###
#..#...#...#
############";

/// A grid maze: `walls[row][col]`, with `x` along columns and `y` along rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeLayout {
    pub id: String,
    pub walls: Vec<Vec<bool>>,
    pub cell_size: f64,
}

pub type Cell = (usize, usize);

impl MazeLayout {
    /// Parses `#` (wall) / `.` (free) rows.
    pub fn from_ascii(id: &str, text: &str, cell_size: f64) -> Result<Self> {
        let walls: Vec<Vec<bool>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|line| {
                line.chars()
                    .map(|c| match c {
                        '#' => Ok(true),
                        '.' => Ok(false),
                        other => Err(Error::InvalidLayout(format!("unexpected character {other:?}"))),
                    })
                    .collect::<Result<Vec<bool>>>()
            })
            .collect::<Result<_>>()?;
        let layout = MazeLayout {
            id: id.to_string(),
            walls,
            cell_size,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn builtin(id: &str) -> Result<Self> {
        let text = match id {
            "U" => U_MAZE,
            "M" => M_MAZE,
            "L" => L_MAZE,
            other => {
                return Err(Error::Unknown {
                    kind: "layout",
                    name: other.to_string(),
                })
            }
        };
        Self::from_ascii(id, text, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let rows = self.rows();
        if rows == 0 || self.walls[0].is_empty() {
            return Err(Error::InvalidLayout("empty grid".into()));
        }
        let cols = self.cols();
        if self.walls.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidLayout("ragged rows".into()));
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::InvalidLayout("cell size must be positive".into()));
        }
        for r in 0..rows {
            for c in 0..cols {
                let border = r == 0 || c == 0 || r + 1 == rows || c + 1 == cols;
                if border && !self.walls[r][c] {
                    return Err(Error::InvalidLayout(format!("border cell ({r}, {c}) is free")));
                }
            }
        }
        if self.free_cells().is_empty() {
            return Err(Error::InvalidLayout("no free cells".into()));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.walls.len()
    }

    pub fn cols(&self) -> usize {
        self.walls.first().map_or(0, Vec::len)
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for (r, row) in self.walls.iter().enumerate() {
            for (c, &wall) in row.iter().enumerate() {
                if !wall {
                    out.push((r, c));
                }
            }
        }
        out
    }

    /// Cell containing a point; `None` outside the grid.
    pub fn cell_of(&self, p: [f64; 2]) -> Option<Cell> {
        if !(p[0] >= 0.0 && p[1] >= 0.0) {
            return None;
        }
        let c = (p[0] / self.cell_size).floor() as usize;
        let r = (p[1] / self.cell_size).floor() as usize;
        (r < self.rows() && c < self.cols()).then_some((r, c))
    }

    pub fn is_wall_at(&self, p: [f64; 2]) -> bool {
        self.cell_of(p).is_none_or(|(r, c)| self.walls[r][c])
    }

    pub fn center(&self, (r, c): Cell) -> [f64; 2] {
        [(c as f64 + 0.5) * self.cell_size, (r as f64 + 0.5) * self.cell_size]
    }

    /// Shortest 4-connected path of free cells, inclusive of both ends.
    pub fn bfs_path(&self, from: Cell, to: Cell) -> Option<Vec<Cell>> {
        let (rows, cols) = (self.rows(), self.cols());
        if self.walls[from.0][from.1] || self.walls[to.0][to.1] {
            return None;
        }
        let mut parent: Vec<Option<Cell>> = vec![None; rows * cols];
        let mut seen = vec![false; rows * cols];
        let mut queue = std::collections::VecDeque::new();
        seen[from.0 * cols + from.1] = true;
        queue.push_back(from);
        while let Some(cur) = queue.pop_front() {
            if cur == to {
                let mut path = vec![cur];
                let mut at = cur;
                while let Some(p) = parent[at.0 * cols + at.1] {
                    path.push(p);
                    at = p;
                }
                path.reverse();
                return Some(path);
            }
            let (r, c) = cur;
            let neighbours = [
                (r.wrapping_sub(1), c),
                (r + 1, c),
                (r, c.wrapping_sub(1)),
                (r, c + 1),
            ];
            for (nr, nc) in neighbours {
                if nr >= rows || nc >= cols || self.walls[nr][nc] || seen[nr * cols + nc] {
                    continue;
                }
                seen[nr * cols + nc] = true;
                parent[nr * cols + nc] = Some(cur);
                queue.push_back((nr, nc));
            }
        }
        None
    }

    /// 4-connected neighbours in a fixed order (up, down, left, right).
    pub fn neighbours(&self, (r, c): Cell) -> impl Iterator<Item = Cell> + '_ {
        [(r.wrapping_sub(1), c), (r + 1, c), (r, c.wrapping_sub(1)), (r, c + 1)]
            .into_iter()
            .filter(|&(nr, nc)| nr < self.rows() && nc < self.cols() && !self.walls[nr][nc])
    }

    /// Steps from every free cell to `to` (row-major, `None` if unreachable).
    pub fn distance_field(&self, to: Cell) -> Vec<Option<usize>> {
        let cols = self.cols();
        let mut dist = vec![None; self.rows() * cols];
        if self.walls[to.0][to.1] {
            return dist;
        }
        dist[to.0 * cols + to.1] = Some(0);
        let mut queue = std::collections::VecDeque::from([to]);
        while let Some(cur) = queue.pop_front() {
            let d = dist[cur.0 * cols + cur.1].expect("queued cells have a distance");
            for (nr, nc) in self.neighbours(cur) {
                if dist[nr * cols + nc].is_none() {
                    dist[nr * cols + nc] = Some(d + 1);
                    queue.push_back((nr, nc));
                }
            }
        }
        dist
    }

    /// Longest shortest-path distance between free cells, in metres.
    pub fn span(&self) -> f64 {
        let free = self.free_cells();
        let mut best = 0;
        for &a in &free {
            for &b in &free {
                if let Some(p) = self.bfs_path(a, b) {
                    best = best.max(p.len() - 1);
                }
            }
        }
        best as f64 * self.cell_size
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_sizes() {
        let u = MazeLayout::builtin("U").unwrap();
        assert_eq!((u.cols(), u.rows()), (5, 5));
        let m = MazeLayout::builtin("M").unwrap();
        assert_eq!((m.cols(), m.rows()), (8, 8));
        let l = MazeLayout::builtin("L").unwrap();
        assert_eq!((l.cols(), l.rows()), (12, 9));
    }

    #[test]
    fn builtins_are_connected() {
        for id in ["U", "M", "L"] {
            let layout = MazeLayout::builtin(id).unwrap();
            let free = layout.free_cells();
            for &b in &free {
                assert!(layout.bfs_path(free[0], b).is_some(), "{id}: {b:?} unreachable");
            }
        }
    }

    #[test]
    fn rejects_open_border_and_no_free_cells() {
        assert!(MazeLayout::from_ascii("x", "###\n#..\n###", 1.0).is_err());
        assert!(MazeLayout::from_ascii("x", "###\n###\n###", 1.0).is_err());
        assert!(MazeLayout::from_ascii("x", "###\n#.#\n###", 1.0).is_ok());
    }

    #[test]
    fn unknown_layout() {
        assert!(matches!(MazeLayout::builtin("bogus"), Err(Error::Unknown { .. })));
    }

    #[test]
    fn u_maze_path_goes_around_the_wall() {
        let u = MazeLayout::builtin("U").unwrap();
        let path = u.bfs_path((1, 1), (3, 1)).unwrap();
        assert_eq!(path.len(), 7);
        assert_eq!(u.span(), 6.0);
    }
}

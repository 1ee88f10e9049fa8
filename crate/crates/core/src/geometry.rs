//! Grid cells, cell masks and their run-length text encoding.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A grid cell. Row 0 is the top of the world; rows grow downwards.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: i32,
    pub col: i32,
}

impl Cell {
    pub const fn new(row: i32, col: i32) -> Self {
        Self { row, col }
    }

    pub fn offset(self, drow: i32, dcol: i32) -> Self {
        Self::new(self.row + drow, self.col + dcol)
    }

    /// The four edge-sharing neighbours: up, down, left, right.
    pub fn neighbors4(self) -> [Cell; 4] {
        [
            self.offset(-1, 0),
            self.offset(1, 0),
            self.offset(0, -1),
            self.offset(0, 1),
        ]
    }

    pub fn is_adjacent4(self, other: Cell) -> bool {
        (self.row - other.row).abs() + (self.col - other.col).abs() == 1
    }

    pub fn chebyshev(self, other: Cell) -> i32 {
        (self.row - other.row).abs().max((self.col - other.col).abs())
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// A set of cells kept in row-major order.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Mask {
    cells: BTreeSet<Cell>,
}

impl Mask {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_cells<I: IntoIterator<Item = Cell>>(cells: I) -> Self {
        Self {
            cells: cells.into_iter().collect(),
        }
    }

    pub fn insert(&mut self, cell: Cell) -> bool {
        self.cells.insert(cell)
    }

    pub fn contains(&self, cell: Cell) -> bool {
        self.cells.contains(&cell)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells.iter().copied()
    }

    pub fn cells(&self) -> &BTreeSet<Cell> {
        &self.cells
    }

    pub fn translate(&self, drow: i32, dcol: i32) -> Mask {
        Mask::from_cells(self.iter().map(|c| c.offset(drow, dcol)))
    }

    pub fn intersection(&self, other: &Mask) -> Mask {
        Mask::from_cells(self.cells.intersection(&other.cells).copied())
    }

    pub fn union(&self, other: &Mask) -> Mask {
        Mask::from_cells(self.cells.union(&other.cells).copied())
    }

    pub fn is_subset(&self, other: &Mask) -> bool {
        self.cells.is_subset(&other.cells)
    }

    pub fn overlaps(&self, other: &Mask) -> bool {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.iter().any(|c| large.contains(c))
    }

    /// Intersection over union. Two empty masks score 1.0.
    pub fn iou(&self, other: &Mask) -> f64 {
        let inter = self.cells.intersection(&other.cells).count();
        let union = self.len() + other.len() - inter;
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// `(min_row, min_col, max_row, max_col)`, or `None` when empty.
    pub fn bounds(&self) -> Option<(i32, i32, i32, i32)> {
        let first = self.cells.iter().next()?;
        let mut b = (first.row, first.col, first.row, first.col);
        for c in &self.cells {
            b.0 = b.0.min(c.row);
            b.1 = b.1.min(c.col);
            b.2 = b.2.max(c.row);
            b.3 = b.3.max(c.col);
        }
        Some(b)
    }

    /// Sums of rows and columns, for exact centroid comparisons.
    pub fn coordinate_sums(&self) -> (i64, i64) {
        self.iter().fold((0, 0), |(r, c), cell| {
            (r + i64::from(cell.row), c + i64::from(cell.col))
        })
    }

    pub fn is_connected4(&self) -> bool {
        let Some(start) = self.cells.iter().next().copied() else {
            return false;
        };
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(cell) = stack.pop() {
            for n in cell.neighbors4() {
                if self.contains(n) && seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        seen.len() == self.len()
    }

    /// Empty cells inside the bounding box that cannot reach the box border
    /// through empty cells, i.e. the holes enclosed by the mask.
    pub fn enclosed_holes(&self) -> Mask {
        let Some((r0, c0, r1, c1)) = self.bounds() else {
            return Mask::new();
        };
        // Pad the box by one so the outside is a single connected region.
        let (r0, c0, r1, c1) = (r0 - 1, c0 - 1, r1 + 1, c1 + 1);
        let inside = |c: Cell| c.row >= r0 && c.row <= r1 && c.col >= c0 && c.col <= c1;
        let start = Cell::new(r0, c0);
        let mut outside = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(cell) = stack.pop() {
            for n in cell.neighbors4() {
                if inside(n) && !self.contains(n) && outside.insert(n) {
                    stack.push(n);
                }
            }
        }
        let mut holes = Mask::new();
        for row in r0..=r1 {
            for col in c0..=c1 {
                let c = Cell::new(row, col);
                if !self.contains(c) && !outside.contains(&c) {
                    holes.insert(c);
                }
            }
        }
        holes
    }

    /// Run-length encoding: `row,col,len` runs of horizontally consecutive
    /// cells separated by `;`. The empty mask encodes as `-`.
    pub fn to_rle(&self) -> String {
        if self.is_empty() {
            return "-".to_string();
        }
        let mut runs: Vec<(i32, i32, i32)> = Vec::new();
        for c in self.iter() {
            match runs.last_mut() {
                Some((r, start, len)) if *r == c.row && *start + *len == c.col => *len += 1,
                _ => runs.push((c.row, c.col, 1)),
            }
        }
        runs.iter()
            .map(|(r, c, n)| format!("{r},{c},{n}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn from_rle(text: &str) -> Result<Mask, RleError> {
        let text = text.trim();
        let mut mask = Mask::new();
        if text == "-" || text.is_empty() {
            return Ok(mask);
        }
        for run in text.split(';') {
            let parts: Vec<&str> = run.split(',').collect();
            if parts.len() != 3 {
                return Err(RleError(run.to_string()));
            }
            let nums: Result<Vec<i32>, _> = parts.iter().map(|p| p.trim().parse::<i32>()).collect();
            let nums = nums.map_err(|_| RleError(run.to_string()))?;
            if nums[2] < 1 {
                return Err(RleError(run.to_string()));
            }
            for k in 0..nums[2] {
                mask.insert(Cell::new(nums[0], nums[1] + k));
            }
        }
        Ok(mask)
    }
}

impl FromIterator<Cell> for Mask {
    fn from_iter<T: IntoIterator<Item = Cell>>(iter: T) -> Self {
        Mask::from_cells(iter)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed run-length run `{0}`")]
pub struct RleError(pub String);

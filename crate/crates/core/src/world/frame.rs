use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{Pose, World};
use crate::geometry::{Cell, Mask};

/// A labelled snapshot of the world: which object occupies each cell, plus
/// every object's mask, pose and class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub tick: u64,
    pub rows: i32,
    pub cols: i32,
    pub masks: BTreeMap<String, Mask>,
    pub poses: BTreeMap<String, Pose>,
    pub classes: BTreeMap<String, String>,
    labels: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("frame text line {line}: {message}")]
pub struct FrameParseError {
    pub line: usize,
    pub message: String,
}

impl Frame {
    pub(super) fn from_world(world: &World) -> Self {
        let mut masks = BTreeMap::new();
        let mut poses = BTreeMap::new();
        let mut classes = BTreeMap::new();
        for b in world.bodies() {
            masks.insert(b.spec.id.clone(), b.mask());
            poses.insert(b.spec.id.clone(), b.pose);
            classes.insert(b.spec.id.clone(), b.spec.class.clone());
        }
        Self::assemble(world.tick(), world.rows(), world.cols(), masks, poses, classes)
    }

    fn assemble(
        tick: u64,
        rows: i32,
        cols: i32,
        masks: BTreeMap<String, Mask>,
        poses: BTreeMap<String, Pose>,
        classes: BTreeMap<String, String>,
    ) -> Self {
        let mut labels = vec![None; (rows * cols) as usize];
        for (i, mask) in masks.values().enumerate() {
            for c in mask.iter() {
                if c.row >= 0 && c.col >= 0 && c.row < rows && c.col < cols {
                    labels[(c.row * cols + c.col) as usize] = Some(i);
                }
            }
        }
        Self {
            tick,
            rows,
            cols,
            masks,
            poses,
            classes,
            labels,
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.masks.keys().map(String::as_str)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.masks.contains_key(id)
    }

    pub fn mask(&self, id: &str) -> Option<&Mask> {
        self.masks.get(id)
    }

    pub fn class_of(&self, id: &str) -> Option<&str> {
        self.classes.get(id).map(String::as_str)
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.row >= 0 && cell.col >= 0 && cell.row < self.rows && cell.col < self.cols
    }

    pub fn label_at(&self, cell: Cell) -> Option<&str> {
        if !self.in_bounds(cell) {
            return None;
        }
        let idx = self.labels[(cell.row * self.cols + cell.col) as usize]?;
        self.masks.keys().nth(idx).map(String::as_str)
    }

    /// One character per cell: `.` empty, `#` floor, letters in id order.
    pub fn to_ascii(&self) -> String {
        let glyphs: Vec<char> = self
            .masks
            .keys()
            .enumerate()
            .map(|(i, id)| {
                if id == super::FLOOR {
                    '#'
                } else {
                    char::from(b'a' + (i % 26) as u8)
                }
            })
            .collect();
        let mut out = String::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let g = self.labels[(r * self.cols + c) as usize].map_or('.', |i| glyphs[i]);
                out.push(g);
            }
            out.push('\n');
        }
        out
    }

    /// Text form: a `frame <tick> <rows> <cols>` header, then one
    /// `object <id> <class> <row> <col> <rle>` line per object.
    pub fn to_text(&self) -> String {
        let mut out = format!("frame {} {} {}\n", self.tick, self.rows, self.cols);
        for (id, mask) in &self.masks {
            let pose = self.poses[id];
            let _ = writeln!(
                out,
                "object {id} {} {} {} {}",
                self.classes[id],
                pose.row,
                pose.col,
                mask.to_rle()
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, FrameParseError> {
        let err = |line: usize, message: &str| FrameParseError {
            line,
            message: message.to_string(),
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or_else(|| err(1, "empty frame"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 || h[0] != "frame" {
            return Err(err(hl + 1, "expected `frame <tick> <rows> <cols>`"));
        }
        let num = |s: &str, line| s.parse::<i64>().map_err(|_| err(line, "bad number"));
        let tick = num(h[1], hl + 1)? as u64;
        let rows = num(h[2], hl + 1)? as i32;
        let cols = num(h[3], hl + 1)? as i32;
        let mut masks = BTreeMap::new();
        let mut poses = BTreeMap::new();
        let mut classes = BTreeMap::new();
        for (i, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 || f[0] != "object" {
                return Err(err(i + 1, "expected `object <id> <class> <row> <col> <rle>`"));
            }
            let mask = Mask::from_rle(f[5]).map_err(|e| err(i + 1, &e.to_string()))?;
            let pose = Pose::new(num(f[3], i + 1)? as i32, num(f[4], i + 1)? as i32);
            masks.insert(f[1].to_string(), mask);
            poses.insert(f[1].to_string(), pose);
            classes.insert(f[1].to_string(), f[2].to_string());
        }
        Ok(Self::assemble(tick, rows, cols, masks, poses, classes))
    }
}

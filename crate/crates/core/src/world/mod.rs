//! A deterministic 2D grid world: rigid objects made of cells, unit-step
//! gravity, scripted moves and a held flag for carried objects.

mod frame;
mod scenario;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{Cell, Mask};

pub use frame::Frame;
pub use frame::FrameParseError;
pub use scenario::{asset, load_scenario, scenario_text, ObjectEntry, Scenario, ScenarioFile, ASSETS};

pub const FLOOR: &str = "floor";

/// Translation of an object's local cells into the world.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[i32; 2]", into = "[i32; 2]")]
pub struct Pose {
    pub row: i32,
    pub col: i32,
}

impl Pose {
    pub const fn new(row: i32, col: i32) -> Self {
        Self { row, col }
    }

    pub fn offset(self, drow: i32, dcol: i32) -> Self {
        Self::new(self.row + drow, self.col + dcol)
    }
}

impl From<[i32; 2]> for Pose {
    fn from([row, col]: [i32; 2]) -> Self {
        Self { row, col }
    }
}

impl From<Pose> for [i32; 2] {
    fn from(p: Pose) -> Self {
        [p.row, p.col]
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.row, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    pub class: String,
    /// Local-frame cells; the pose translates them into the world.
    pub cells: Vec<Cell>,
    #[serde(default)]
    pub fixed: bool,
    /// Named local-frame regions, e.g. the ground-truth handle contact.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub annotations: BTreeMap<String, Vec<Cell>>,
}

impl ObjectSpec {
    pub fn local_mask(&self) -> Mask {
        Mask::from_cells(self.cells.iter().copied())
    }

    pub fn mask_at(&self, pose: Pose) -> Mask {
        self.local_mask().translate(pose.row, pose.col)
    }

    pub fn annotation_at(&self, name: &str, pose: Pose) -> Option<Mask> {
        self.annotations
            .get(name)
            .map(|cells| Mask::from_cells(cells.iter().copied()).translate(pose.row, pose.col))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Motion {
    Up,
    Down,
    Left,
    Right,
    /// Move straight to the entry's `to` pose, as if carried out of the plane.
    Place,
}

impl Motion {
    pub fn delta(self) -> Option<(i32, i32)> {
        match self {
            Motion::Up => Some((-1, 0)),
            Motion::Down => Some((1, 0)),
            Motion::Left => Some((0, -1)),
            Motion::Right => Some((0, 1)),
            Motion::Place => None,
        }
    }
}

/// One scripted command. Without a motion it only updates the held flag.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub tick: u64,
    pub object: String,
    #[serde(rename = "move", default, skip_serializing_if = "Option::is_none")]
    pub motion: Option<Motion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<Pose>,
    #[serde(default)]
    pub hold: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Body {
    pub spec: ObjectSpec,
    pub pose: Pose,
}

impl Body {
    pub fn mask(&self) -> Mask {
        self.spec.mask_at(self.pose)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorldError {
    #[error("scenario does not parse: {0}")]
    Parse(String),
    #[error("objects `{0}` and `{1}` overlap")]
    Overlap(String, String),
    #[error("no fixed `floor` object covering the bottom row")]
    MissingFloor,
    #[error("object `{0}` leaves the grid")]
    OutOfBounds(String),
    #[error("object `{0}` has no cells")]
    EmptyObject(String),
    #[error("object `{0}` is neither 4-connected nor a closed ring")]
    Disconnected(String),
    #[error("mug `{0}` has no handle ring enclosing a hole")]
    NoRing(String),
    #[error("object id `{0}` used twice")]
    DuplicateId(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("script entry for `{0}` uses `place` without a `to` pose")]
    PlaceWithoutTarget(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cause {
    Script,
    Gravity,
    Tip,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum StepEvent {
    Moved {
        object: String,
        from: Pose,
        to: Pose,
        cause: Cause,
    },
    Blocked {
        object: String,
        motion: Option<Motion>,
    },
}

/// An immutable world snapshot; [`World::step`] returns the next one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct World {
    rows: i32,
    cols: i32,
    bodies: BTreeMap<String, Body>,
    tick: u64,
    script: Vec<ScriptEntry>,
    held: BTreeSet<String>,
}

impl World {
    /// Builds and validates a world.
    pub fn new(
        rows: i32,
        cols: i32,
        objects: Vec<(ObjectSpec, Pose)>,
        script: Vec<ScriptEntry>,
    ) -> Result<Self, WorldError> {
        let mut bodies = BTreeMap::new();
        for (spec, pose) in objects {
            if bodies.contains_key(&spec.id) {
                return Err(WorldError::DuplicateId(spec.id));
            }
            bodies.insert(spec.id.clone(), Body { spec, pose });
        }
        let world = Self {
            rows,
            cols,
            bodies,
            tick: 0,
            script,
            held: BTreeSet::new(),
        };
        world.validate()?;
        Ok(world)
    }

    fn validate(&self) -> Result<(), WorldError> {
        for (id, body) in &self.bodies {
            let local = body.spec.local_mask();
            if local.is_empty() {
                return Err(WorldError::EmptyObject(id.clone()));
            }
            if !local.is_connected4() {
                return Err(WorldError::Disconnected(id.clone()));
            }
            if body.spec.class == "Mug" && local.enclosed_holes().is_empty() {
                return Err(WorldError::NoRing(id.clone()));
            }
            if !self.in_bounds(&body.mask()) {
                return Err(WorldError::OutOfBounds(id.clone()));
            }
        }
        let ids: Vec<&String> = self.bodies.keys().collect();
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                if self.bodies[*a].mask().overlaps(&self.bodies[*b].mask()) {
                    return Err(WorldError::Overlap(a.to_string(), b.to_string()));
                }
            }
        }
        let floor = self.bodies.get(FLOOR).ok_or(WorldError::MissingFloor)?;
        let bottom = self.rows - 1;
        let mask = floor.mask();
        if !floor.spec.fixed || (0..self.cols).any(|c| !mask.contains(Cell::new(bottom, c))) {
            return Err(WorldError::MissingFloor);
        }
        for entry in &self.script {
            if !self.bodies.contains_key(&entry.object) {
                return Err(WorldError::UnknownObject(entry.object.clone()));
            }
            if entry.motion == Some(Motion::Place) && entry.to.is_none() {
                return Err(WorldError::PlaceWithoutTarget(entry.object.clone()));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> i32 {
        self.rows
    }

    pub fn cols(&self) -> i32 {
        self.cols
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn script(&self) -> &[ScriptEntry] {
        &self.script
    }

    pub fn bodies(&self) -> impl Iterator<Item = &Body> {
        self.bodies.values()
    }

    pub fn body(&self, id: &str) -> Result<&Body, WorldError> {
        self.bodies
            .get(id)
            .ok_or_else(|| WorldError::UnknownObject(id.to_string()))
    }

    pub fn pose(&self, id: &str) -> Result<Pose, WorldError> {
        self.body(id).map(|b| b.pose)
    }

    pub fn is_held(&self, id: &str) -> bool {
        self.held.contains(id)
    }

    pub fn in_bounds(&self, mask: &Mask) -> bool {
        mask.iter()
            .all(|c| c.row >= 0 && c.col >= 0 && c.row < self.rows && c.col < self.cols)
    }

    /// Script entries not yet executed.
    pub fn pending_script(&self) -> impl Iterator<Item = &ScriptEntry> {
        let now = self.tick;
        self.script.iter().filter(move |e| e.tick >= now)
    }

    pub fn extend_script(&mut self, entries: impl IntoIterator<Item = ScriptEntry>) {
        self.script.extend(entries);
    }

    pub fn clear_script(&mut self) {
        self.script.clear();
    }

    /// Moves an object directly, bypassing the script. Fails on overlap or
    /// leaving the grid.
    pub fn set_pose(&mut self, id: &str, pose: Pose) -> Result<(), WorldError> {
        let body = self.body(id)?;
        let mask = body.spec.mask_at(pose);
        if !self.in_bounds(&mask) {
            return Err(WorldError::OutOfBounds(id.to_string()));
        }
        if let Some(other) = self.collides(id, &mask) {
            return Err(WorldError::Overlap(id.to_string(), other));
        }
        self.bodies.get_mut(id).expect("checked").pose = pose;
        Ok(())
    }

    pub fn set_held(&mut self, id: &str, held: bool) {
        if held {
            self.held.insert(id.to_string());
        } else {
            self.held.remove(id);
        }
    }

    /// Occupancy of every object except `skip`.
    fn occupancy(&self, skip: &str) -> HashMap<Cell, &str> {
        let mut occ = HashMap::new();
        for (id, body) in &self.bodies {
            if id != skip {
                for c in body.mask().iter() {
                    occ.insert(c, id.as_str());
                }
            }
        }
        occ
    }

    /// The first other object `mask` would overlap, if any.
    pub fn collides(&self, id: &str, mask: &Mask) -> Option<String> {
        let occ = self.occupancy(id);
        mask.iter().find_map(|c| occ.get(&c).map(|s| s.to_string()))
    }

    fn fits(&self, id: &str, pose: Pose) -> bool {
        let mask = self.bodies[id].spec.mask_at(pose);
        self.in_bounds(&mask) && self.collides(id, &mask).is_none()
    }

    /// Where a blocked object goes next: nowhere when it rests stably,
    /// otherwise one cell sideways toward its centre of mass.
    ///
    /// It rests when it hangs from a support above its centre of mass, or
    /// when its centre-of-mass column lies within the span of its supports.
    fn tip(&self, id: &str) -> Option<Pose> {
        let body = &self.bodies[id];
        let mask = body.mask();
        let occ = self.occupancy(id);
        let supports: Vec<Cell> = mask
            .iter()
            .filter(|c| {
                let below = c.offset(1, 0);
                below.row >= self.rows || occ.contains_key(&below)
            })
            .collect();
        if supports.is_empty() {
            return None;
        }
        let n = mask.len() as i64;
        let (row_sum, col_sum) = mask.coordinate_sums();
        if supports.iter().any(|c| i64::from(c.row) * n < row_sum) {
            return None;
        }
        let lo = supports.iter().map(|c| c.col).min().expect("non-empty");
        let hi = supports.iter().map(|c| c.col).max().expect("non-empty");
        let dcol = if col_sum < i64::from(lo) * n {
            -1
        } else if col_sum > i64::from(hi) * n {
            1
        } else {
            return None;
        };
        let next = body.pose.offset(0, dcol);
        self.fits(id, next).then_some(next)
    }

    pub fn step(&self) -> World {
        self.step_with_events().0
    }

    /// Scripted moves for this tick, then gravity bottom-most object first.
    pub fn step_with_events(&self) -> (World, Vec<StepEvent>) {
        let mut next = self.clone();
        let mut events = Vec::new();
        let entries: Vec<ScriptEntry> = self
            .script
            .iter()
            .filter(|e| e.tick == self.tick)
            .cloned()
            .collect();
        for entry in entries {
            let id = entry.object.as_str();
            if let Some(motion) = entry.motion {
                let from = next.bodies[id].pose;
                let to = match motion.delta() {
                    Some((dr, dc)) => Some(from.offset(dr, dc)),
                    None => entry.to,
                };
                match to {
                    Some(to) if !next.bodies[id].spec.fixed && next.fits(id, to) => {
                        next.bodies.get_mut(id).expect("validated").pose = to;
                        events.push(StepEvent::Moved {
                            object: id.to_string(),
                            from,
                            to,
                            cause: Cause::Script,
                        });
                    }
                    _ => {
                        log::debug!("tick {}: {motion:?} of {id} blocked", self.tick);
                        events.push(StepEvent::Blocked {
                            object: id.to_string(),
                            motion: Some(motion),
                        });
                    }
                }
            }
            next.set_held(id, entry.hold);
        }

        let mut order: Vec<(i32, String)> = next
            .bodies
            .iter()
            .filter(|(id, b)| !b.spec.fixed && !next.held.contains(*id))
            .map(|(id, b)| {
                let bottom = b.mask().bounds().map_or(0, |(_, _, r1, _)| r1);
                (-bottom, id.clone())
            })
            .collect();
        order.sort();
        for (_, id) in order {
            let from = next.bodies[&id].pose;
            let (to, cause) = if next.fits(&id, from.offset(1, 0)) {
                (from.offset(1, 0), Cause::Gravity)
            } else if let Some(p) = next.tip(&id) {
                (p, Cause::Tip)
            } else {
                continue;
            };
            next.bodies.get_mut(&id).expect("listed").pose = to;
            events.push(StepEvent::Moved {
                object: id,
                from,
                to,
                cause,
            });
        }
        next.tick += 1;
        (next, events)
    }

    pub fn render(&self) -> Frame {
        Frame::from_world(self)
    }

    /// Whether `id` keeps its pose over `k` simulated steps of a copy.
    pub fn is_settled(&self, id: &str, k: usize) -> Result<bool, WorldError> {
        let start = self.pose(id)?;
        let mut w = self.clone();
        for _ in 0..k {
            w = w.step();
            if w.bodies[id].pose != start {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn all_settled(&self) -> bool {
        let next = self.step();
        self.bodies
            .iter()
            .all(|(id, b)| next.bodies[id].pose == b.pose)
    }
}

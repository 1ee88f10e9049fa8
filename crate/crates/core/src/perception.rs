//! Taskable perception over rendered frames.
//!
//! Nothing is computed unless it was asked for. Each query names a subject
//! and optionally an object; a blank object means every other object in the
//! frame. Answers are qualitative triples plus, for touching pairs, a mask of
//! the cells around where the two objects meet.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::geometry::{Cell, Mask};
use crate::parts::DetectorRegistry;
use crate::store::{EntityId, Polarity, Provenance, Statement, Triple};
use crate::support::{PerceptionQuery, QueryKind};
use crate::world::Frame;

pub const DEFAULT_CONTACT_RADIUS: i32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PerceptionError {
    #[error("query mentions unknown object `{0}`")]
    UnknownObject(String),
    #[error("frames are not consecutive: tick {prev} then {curr}")]
    NotConsecutive { prev: u64, curr: u64 },
    #[error("percept report line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Name of the mask-ref entity standing for the contact mask of `host` against `partner`.
pub fn mask_entity(host: &str, partner: &str) -> EntityId {
    EntityId::new(format!("k_{host}_{partner}"))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PerceptReport {
    pub tick: u64,
    /// Sorted and deduplicated.
    pub triples: Vec<Triple>,
    /// Keyed by (queried subject, other object).
    pub contact_masks: BTreeMap<(String, String), Mask>,
    /// Keyed by (object, concept).
    pub detections: BTreeMap<(String, String), Mask>,
}

impl PerceptReport {
    pub fn empty(tick: u64) -> Self {
        Self {
            tick,
            ..Self::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty() && self.contact_masks.is_empty() && self.detections.is_empty()
    }

    /// The contact mask between `a` and `b`, whichever of them was the subject.
    pub fn contact_mask(&self, a: &str, b: &str) -> Option<&Mask> {
        self.contact_masks
            .get(&(a.to_string(), b.to_string()))
            .or_else(|| self.contact_masks.get(&(b.to_string(), a.to_string())))
    }

    pub fn mask_entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.contact_masks.keys().map(|(h, p)| mask_entity(h, p))
    }

    pub fn has(&self, polarity: Polarity, predicate: &str, subject: &str, object: &str) -> bool {
        self.triples.iter().any(|t| {
            t.polarity == polarity
                && t.predicate == predicate
                && t.subject.as_str() == subject
                && t.object.as_str() == object
        })
    }

    /// `report <tick>` followed by triple lines in store dump form, then
    /// `mask <host> <partner> <rle>` and `detect <object> <concept> <rle>` lines.
    pub fn to_text(&self) -> String {
        let mut out = format!("report {}\n", self.tick);
        for t in &self.triples {
            let _ = writeln!(out, "{t}");
        }
        for ((h, p), m) in &self.contact_masks {
            let _ = writeln!(out, "mask {h} {p} {}", m.to_rle());
        }
        for ((o, c), m) in &self.detections {
            let _ = writeln!(out, "detect {o} {c} {}", m.to_rle());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, PerceptionError> {
        let err = |line: usize, message: String| PerceptionError::Format { line, message };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty report".into()))?;
        let tick = header
            .strip_prefix("report ")
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(|| err(1, "expected `report <tick>`".into()))?;
        let mut report = PerceptReport::empty(tick);
        for (i, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            match f.as_slice() {
                ["mask" | "detect", a, b, rle] => {
                    let mask = Mask::from_rle(rle).map_err(|e| err(i + 1, e.to_string()))?;
                    let map = if f[0] == "mask" {
                        &mut report.contact_masks
                    } else {
                        &mut report.detections
                    };
                    map.insert((a.to_string(), b.to_string()), mask);
                }
                _ => {
                    let (body, prov) = line
                        .split_once('#')
                        .ok_or_else(|| err(i + 1, "triple line without provenance".into()))?;
                    let st: Statement = body.trim().parse().map_err(|m| err(i + 1, m))?;
                    let prov: Provenance = prov.trim().parse().map_err(|m| err(i + 1, m))?;
                    report.triples.push(st.with(prov));
                }
            }
        }
        report.triples.sort();
        Ok(report)
    }
}

/// Pairs of 4-adjacent cells `(x, y)` with `x` in `a` and `y` in `b`.
pub fn adjacent_pairs(a: &Mask, b: &Mask) -> Vec<(Cell, Cell)> {
    let mut out = Vec::new();
    for x in a.iter() {
        for y in x.neighbors4() {
            if b.contains(y) {
                out.push((x, y));
            }
        }
    }
    out
}

pub fn touching(a: &Mask, b: &Mask) -> bool {
    a.iter().any(|x| x.neighbors4().into_iter().any(|y| b.contains(y)))
}

/// True when a strict majority of the adjacent pairs between `a` and `b`
/// are vertical with the `a` cell directly beneath the `b` cell.
pub fn is_below(a: &Mask, b: &Mask) -> bool {
    let pairs = adjacent_pairs(a, b);
    let vertical = pairs.iter().filter(|(x, y)| x.row == y.row + 1 && x.col == y.col).count();
    2 * vertical > pairs.len()
}

fn dilate(cells: impl IntoIterator<Item = Cell>, radius: i32, frame: &Frame) -> Mask {
    let mut out = Mask::new();
    for c in cells {
        for dr in -radius..=radius {
            for dc in -radius..=radius {
                let n = c.offset(dr, dc);
                if frame.in_bounds(n) {
                    out.insert(n);
                }
            }
        }
    }
    out
}

/// Cells within Chebyshev distance `radius` of any cell taking part in an
/// adjacency between `a` and `b`, clipped to the frame. Empty when they do
/// not touch.
pub fn contact_mask(frame: &Frame, a: &str, b: &str, radius: i32) -> Result<Mask, PerceptionError> {
    let ma = frame
        .mask(a)
        .ok_or_else(|| PerceptionError::UnknownObject(a.to_string()))?;
    let mb = frame
        .mask(b)
        .ok_or_else(|| PerceptionError::UnknownObject(b.to_string()))?;
    let pairs = adjacent_pairs(ma, mb);
    Ok(dilate(pairs.into_iter().flat_map(|(x, y)| [x, y]), radius, frame))
}

fn min_sq_distance(a: &Mask, b: &Mask) -> i64 {
    let mut best = i64::MAX;
    for x in a.iter() {
        for y in b.iter() {
            let dr = i64::from(x.row - y.row);
            let dc = i64::from(x.col - y.col);
            best = best.min(dr * dr + dc * dc);
        }
    }
    best
}

struct Emitter {
    tick: u64,
    triples: BTreeSet<Triple>,
}

impl Emitter {
    fn push(&mut self, polarity: Polarity, p: &str, s: &str, o: &str) {
        self.triples
            .insert(Statement::new(polarity, p, s, o).with(Provenance::Perceived { tick: self.tick }));
    }
}

fn others<'a>(frame: &'a Frame, q: &'a PerceptionQuery) -> Vec<&'a str> {
    match &q.object {
        Some(o) => vec![o.as_str()],
        None => frame.ids().filter(|id| *id != q.subject.as_str()).collect(),
    }
}

/// Answers `queries` over two consecutive frames.
pub fn perceive(
    prev: &Frame,
    curr: &Frame,
    queries: &BTreeSet<PerceptionQuery>,
    registry: &DetectorRegistry,
    contact_radius: i32,
) -> Result<PerceptReport, PerceptionError> {
    if curr.tick != prev.tick + 1 {
        return Err(PerceptionError::NotConsecutive {
            prev: prev.tick,
            curr: curr.tick,
        });
    }
    for q in queries {
        for id in std::iter::once(&q.subject).chain(q.object.as_ref()) {
            if !prev.contains(id.as_str()) || !curr.contains(id.as_str()) {
                return Err(PerceptionError::UnknownObject(id.to_string()));
            }
        }
    }
    let mut out = Emitter {
        tick: curr.tick,
        triples: BTreeSet::new(),
    };
    let mut contact_masks = BTreeMap::new();
    for q in queries {
        let s = q.subject.as_str();
        for o in others(curr, q) {
            match q.query {
                QueryKind::RelativeMovement => relative_movement(prev, curr, s, o, &mut out),
                QueryKind::Contact => {
                    let (ms, mo) = (&curr.masks[s], &curr.masks[o]);
                    if !touching(ms, mo) {
                        out.push(Polarity::Neg, "contacts", s, o);
                        continue;
                    }
                    out.push(Polarity::Pos, "contacts", s, o);
                    if is_below(ms, mo) {
                        out.push(Polarity::Pos, "below", s, o);
                    } else if is_below(mo, ms) {
                        out.push(Polarity::Pos, "below", o, s);
                    }
                    let k = mask_entity(s, o);
                    out.push(Polarity::Pos, "maskHost", k.as_str(), s);
                    out.push(Polarity::Pos, "maskPartner", k.as_str(), o);
                    contact_masks.insert((s.to_string(), o.to_string()), contact_mask(curr, s, o, contact_radius)?);
                }
            }
        }
    }
    let mut detections = BTreeMap::new();
    let subjects: BTreeSet<&str> = queries.iter().map(|q| q.subject.as_str()).collect();
    for s in subjects {
        let Some(class) = curr.class_of(s) else { continue };
        for model in registry.for_class(class) {
            let mask = model.detect_mask(&curr.masks[s]);
            if !mask.is_empty() {
                detections.insert((s.to_string(), model.concept.clone()), mask);
            }
        }
    }
    Ok(PerceptReport {
        tick: curr.tick,
        triples: out.triples.into_iter().collect(),
        contact_masks,
        detections,
    })
}

fn relative_movement(prev: &Frame, curr: &Frame, s: &str, o: &str, out: &mut Emitter) {
    let delta = |id: &str| {
        let (a, b) = (prev.poses[id], curr.poses[id]);
        (b.row - a.row, b.col - a.col)
    };
    let (ds, dobj) = (delta(s), delta(o));
    let (dr, dc) = (ds.0 - dobj.0, ds.1 - dobj.1);
    if dr > 0 {
        out.push(Polarity::Pos, "movDir", s, "down");
    } else if dr < 0 {
        out.push(Polarity::Pos, "movDir", s, "up");
    }
    if dc > 0 {
        out.push(Polarity::Pos, "movDir", s, "right");
    } else if dc < 0 {
        out.push(Polarity::Pos, "movDir", s, "left");
    }
    if dr == 0 && dc == 0 {
        out.push(Polarity::Pos, "stillness", s, o);
        return;
    }
    let before = min_sq_distance(&prev.masks[s], &prev.masks[o]);
    let after = min_sq_distance(&curr.masks[s], &curr.masks[o]);
    if after < before {
        out.push(Polarity::Pos, "approaches", s, o);
    } else if after > before {
        out.push(Polarity::Pos, "departs", s, o);
    }
}

/// Holds the queries for the next perception call. Submitting replaces
/// whatever was submitted before.
#[derive(Clone, Debug)]
pub struct Perception {
    pending: BTreeSet<PerceptionQuery>,
    pub registry: DetectorRegistry,
    pub contact_radius: i32,
}

impl Default for Perception {
    fn default() -> Self {
        Self {
            pending: BTreeSet::new(),
            registry: DetectorRegistry::new(),
            contact_radius: DEFAULT_CONTACT_RADIUS,
        }
    }
}

impl Perception {
    pub fn new(registry: DetectorRegistry, contact_radius: i32) -> Self {
        Self {
            pending: BTreeSet::new(),
            registry,
            contact_radius,
        }
    }

    pub fn submit_queries(&mut self, queries: impl IntoIterator<Item = PerceptionQuery>) {
        self.pending = queries.into_iter().collect();
    }

    pub fn pending(&self) -> &BTreeSet<PerceptionQuery> {
        &self.pending
    }

    pub fn perceive(&self, prev: &Frame, curr: &Frame) -> Result<PerceptReport, PerceptionError> {
        perceive(prev, curr, &self.pending, &self.registry, self.contact_radius)
    }
}

//! Functional parts: concepts defined by the role a region plays in a
//! support situation, exemplars captured when that situation is believed,
//! and a patch detector trained from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::geometry::{Cell, Mask};
use crate::perception::PerceptReport;
use crate::store::{BeliefStore, EntityId, Vocabulary};
use crate::world::Frame;

pub const DEFAULT_PATCH_RADIUS: i32 = 2;
pub const DEFAULT_TAU: u32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum PartError {
    #[error("no exemplars to train on")]
    NoExemplars,
    #[error("exemplars mix concepts `{0}` and `{1}`")]
    MixedConcepts(String, String),
    #[error("exemplar hosts have different classes `{0}` and `{1}`")]
    MixedHosts(String, String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("concept `{concept}` refers to undeclared {what} `{name}`")]
    Undeclared {
        concept: String,
        what: &'static str,
        name: String,
    },
    #[error("patch radius must be between 1 and 3, got {0}")]
    BadRadius(i32),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A part concept: the region of a `host_class` object that fills
/// `host_role` of a `situation` whose `partner_role` is a `partner_class`
/// object, and that the partner is below.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConceptDef {
    pub name: String,
    pub host_class: String,
    pub partner_class: String,
    pub situation: String,
    pub host_role: String,
    pub partner_role: String,
    pub guard: String,
}

impl ConceptDef {
    /// The part of a mug that a hook holds it up by.
    pub fn mug_supp_by_hook() -> Self {
        Self {
            name: "MugSuppByHook".into(),
            host_class: "Mug".into(),
            partner_class: "Hook".into(),
            situation: "DSupp".into(),
            host_role: "suppee".into(),
            partner_role: "supper".into(),
            guard: "below".into(),
        }
    }

    /// Looks a concept up by name among the built-in ones.
    pub fn builtin(name: &str) -> Option<Self> {
        [Self::mug_supp_by_hook()].into_iter().find(|c| c.name == name)
    }

    pub fn validate(&self, vocab: &Vocabulary) -> Result<(), PartError> {
        let undeclared = |what, name: &str| PartError::Undeclared {
            concept: self.name.clone(),
            what,
            name: name.to_string(),
        };
        for class in [&self.host_class, &self.partner_class, &self.situation] {
            if !vocab.has_class(class) {
                return Err(undeclared("class", class));
            }
        }
        for pred in [&self.host_role, &self.partner_role, &self.guard] {
            if !vocab.has_predicate(pred) {
                return Err(undeclared("predicate", pred));
            }
        }
        Ok(())
    }
}

/// One observation of a part: the frame it was seen in and its cells there.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Exemplar {
    pub concept: String,
    pub object: String,
    pub frame: Frame,
    pub part: Mask,
}

impl Exemplar {
    pub fn tick(&self) -> u64 {
        self.frame.tick
    }

    pub fn to_text(&self) -> String {
        format!(
            "exemplar {} {}\npart {}\n{}",
            self.concept,
            self.object,
            self.part.to_rle(),
            self.frame.to_text()
        )
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut lines = text.splitn(3, '\n');
        let head: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
        let [tag, concept, object] = head.as_slice() else {
            return Err("expected `exemplar <concept> <object>`".into());
        };
        if *tag != "exemplar" {
            return Err(format!("expected `exemplar`, got `{tag}`"));
        }
        let part = lines
            .next()
            .and_then(|l| l.strip_prefix("part "))
            .ok_or("expected `part <rle>` on line 2")?;
        let part = Mask::from_rle(part.trim()).map_err(|e| e.to_string())?;
        let frame = Frame::from_text(lines.next().unwrap_or("")).map_err(|e| e.to_string())?;
        if !frame.contains(object) {
            return Err(format!("frame has no object `{object}`"));
        }
        Ok(Self {
            concept: concept.to_string(),
            object: object.to_string(),
            frame,
            part,
        })
    }
}

/// Looks for a binding of `concept` in a saturated belief state and, when
/// one exists, cuts the part out of the host using the contact mask.
pub fn capture_exemplar(
    store: &BeliefStore,
    report: &PerceptReport,
    frame: &Frame,
    concept: &ConceptDef,
) -> Option<Exemplar> {
    let situation = EntityId::new(concept.situation.as_str());
    for s in store.instances_of(&situation) {
        for (_, host) in store.pos_pairs(&concept.host_role, Some(s), None) {
            if !store.is_a(host, &concept.host_class) {
                continue;
            }
            for (_, partner) in store.pos_pairs(&concept.partner_role, Some(s), None) {
                if !store.is_a(partner, &concept.partner_class) {
                    continue;
                }
                let Some(contact) = report.contact_mask(host.as_str(), partner.as_str()) else {
                    continue;
                };
                let guarded = store
                    .pos_pairs("hasPrt", Some(host), None)
                    .any(|(_, x)| store.has_pos(&concept.guard, partner, x));
                if !guarded {
                    continue;
                }
                let Some(host_mask) = frame.mask(host.as_str()) else {
                    continue;
                };
                let part = contact.intersection(host_mask);
                if part.is_empty() {
                    continue;
                }
                debug_assert!(part.is_subset(host_mask));
                return Some(Exemplar {
                    concept: concept.name.clone(),
                    object: host.as_str().to_string(),
                    frame: frame.clone(),
                    part,
                });
            }
        }
    }
    None
}

/// A directory of exemplar files, one per capture, named in capture order.
#[derive(Clone, Debug)]
pub struct ExemplarStore {
    dir: PathBuf,
}

impl ExemplarStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, PartError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append(&self, exemplar: &Exemplar) -> Result<PathBuf, PartError> {
        let n = self.paths()?.len();
        let path = self
            .dir
            .join(format!("{}-{n:04}.exemplar", exemplar.concept));
        fs::write(&path, exemplar.to_text())?;
        Ok(path)
    }

    fn paths(&self) -> Result<Vec<PathBuf>, PartError> {
        let mut out: Vec<PathBuf> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "exemplar"))
            .collect();
        out.sort();
        Ok(out)
    }

    pub fn load_all(&self) -> Result<Vec<Exemplar>, PartError> {
        self.paths()?
            .into_iter()
            .map(|p| {
                let text = fs::read_to_string(&p)?;
                Exemplar::from_text(&text).map_err(|message| PartError::Format {
                    path: p.display().to_string(),
                    message,
                })
            })
            .collect()
    }

    pub fn load_concept(&self, concept: &str) -> Result<Vec<Exemplar>, PartError> {
        Ok(self
            .load_all()?
            .into_iter()
            .filter(|e| e.concept == concept)
            .collect())
    }
}

/// Occupancy of a square patch of side `2r + 1` around a cell, row-major,
/// packed into 64-bit words.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Descriptor(Vec<u64>);

impl Descriptor {
    pub fn extract(mask: &Mask, center: Cell, radius: i32) -> Self {
        let side = (2 * radius + 1) as usize;
        let mut words = vec![0u64; (side * side).div_ceil(64)];
        let mut bit = 0usize;
        for dr in -radius..=radius {
            for dc in -radius..=radius {
                if mask.contains(center.offset(dr, dc)) {
                    words[bit / 64] |= 1 << (bit % 64);
                }
                bit += 1;
            }
        }
        Self(words)
    }

    pub fn hamming(&self, other: &Self) -> u32 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    fn to_hex(&self) -> String {
        self.0.iter().map(|w| format!("{w:016x}")).collect::<Vec<_>>().join(":")
    }

    fn from_hex(text: &str) -> Result<Self, String> {
        text.split(':')
            .map(|w| u64::from_str_radix(w, 16).map_err(|e| format!("bad descriptor `{text}`: {e}")))
            .collect::<Result<_, _>>()
            .map(Self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetectorModel {
    pub concept: String,
    pub host_class: String,
    pub radius: i32,
    pub tau: u32,
    pub positives: BTreeSet<Descriptor>,
    pub negatives: BTreeSet<Descriptor>,
}

pub fn train_detector(exemplars: &[Exemplar], radius: i32, tau: u32) -> Result<DetectorModel, PartError> {
    if !(1..=3).contains(&radius) {
        return Err(PartError::BadRadius(radius));
    }
    let first = exemplars.first().ok_or(PartError::NoExemplars)?;
    let class_of = |e: &Exemplar| {
        e.frame
            .class_of(&e.object)
            .map(str::to_string)
            .ok_or_else(|| PartError::UnknownObject(e.object.clone()))
    };
    let host_class = class_of(first)?;
    let mut positives = BTreeSet::new();
    let mut negatives = BTreeSet::new();
    for e in exemplars {
        if e.concept != first.concept {
            return Err(PartError::MixedConcepts(first.concept.clone(), e.concept.clone()));
        }
        let class = class_of(e)?;
        if class != host_class {
            return Err(PartError::MixedHosts(host_class, class));
        }
        let host = e.frame.mask(&e.object).expect("checked by class_of");
        for cell in host.iter() {
            let d = Descriptor::extract(host, cell, radius);
            if e.part.contains(cell) {
                positives.insert(d);
            } else {
                negatives.insert(d);
            }
        }
    }
    negatives.retain(|d| !positives.contains(d));
    Ok(DetectorModel {
        concept: first.concept.clone(),
        host_class,
        radius,
        tau,
        positives,
        negatives,
    })
}

fn nearest(set: &BTreeSet<Descriptor>, d: &Descriptor) -> Option<u32> {
    set.iter().map(|x| x.hamming(d)).min()
}

impl DetectorModel {
    /// Labels a host cell as part when its nearest positive descriptor is
    /// within `tau` and strictly nearer than its nearest negative.
    pub fn detect(&self, frame: &Frame, object: &str) -> Result<Mask, PartError> {
        let host = frame
            .mask(object)
            .ok_or_else(|| PartError::UnknownObject(object.to_string()))?;
        Ok(self.detect_mask(host))
    }

    pub fn detect_mask(&self, host: &Mask) -> Mask {
        Mask::from_cells(host.iter().filter(|&cell| {
            let d = Descriptor::extract(host, cell, self.radius);
            match nearest(&self.positives, &d) {
                Some(p) if p <= self.tau => nearest(&self.negatives, &d).is_none_or(|n| p < n),
                _ => false,
            }
        }))
    }

    /// `detector <concept> <host-class> <radius> <tau>`, then one
    /// `pos <hex>` or `neg <hex>` line per descriptor in sorted order.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "detector {} {} {} {}\n",
            self.concept, self.host_class, self.radius, self.tau
        );
        for d in &self.positives {
            let _ = writeln!(out, "pos {}", d.to_hex());
        }
        for d in &self.negatives {
            let _ = writeln!(out, "neg {}", d.to_hex());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or("empty model file")?;
        let head: Vec<&str> = header.split_whitespace().collect();
        let ["detector", concept, host_class, radius, tau] = head.as_slice() else {
            return Err("line 1: expected `detector <concept> <host-class> <radius> <tau>`".into());
        };
        let mut model = DetectorModel {
            concept: concept.to_string(),
            host_class: host_class.to_string(),
            radius: radius.parse().map_err(|e| format!("line 1: radius: {e}"))?,
            tau: tau.parse().map_err(|e| format!("line 1: tau: {e}"))?,
            positives: BTreeSet::new(),
            negatives: BTreeSet::new(),
        };
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (tag, hex) = line
                .split_once(' ')
                .ok_or_else(|| format!("line {}: expected `pos|neg <hex>`", i + 1))?;
            let d = Descriptor::from_hex(hex.trim()).map_err(|e| format!("line {}: {e}", i + 1))?;
            match tag {
                "pos" => model.positives.insert(d),
                "neg" => model.negatives.insert(d),
                other => return Err(format!("line {}: unknown tag `{other}`", i + 1)),
            };
        }
        Ok(model)
    }
}

/// Trained detectors by concept name, consulted by perception.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DetectorRegistry {
    models: BTreeMap<String, DetectorModel>,
}

impl DetectorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, model: DetectorModel) {
        self.models.insert(model.concept.clone(), model);
    }

    pub fn get(&self, concept: &str) -> Option<&DetectorModel> {
        self.models.get(concept)
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Models whose host class matches `class`.
    pub fn for_class<'a>(&'a self, class: &'a str) -> impl Iterator<Item = &'a DetectorModel> + 'a {
        self.models.values().filter(move |m| m.host_class == class)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{asset, load_scenario};

    fn hanging_frame() -> Frame {
        load_scenario(asset("mug_on_hook.json").unwrap())
            .unwrap()
            .world
            .step()
            .render()
    }

    fn handle(frame: &Frame) -> Mask {
        let pose = frame.poses["mug1"];
        Mask::from_cells((4..=6).map(|c| Cell::new(pose.row, pose.col + c)))
    }

    fn exemplar(frame: &Frame) -> Exemplar {
        Exemplar {
            concept: "MugSuppByHook".into(),
            object: "mug1".into(),
            part: handle(frame),
            frame: frame.clone(),
        }
    }

    #[test]
    fn builtin_concept_uses_declared_vocabulary() {
        ConceptDef::mug_supp_by_hook()
            .validate(&Vocabulary::support_theory())
            .unwrap();
        let mut bad = ConceptDef::mug_supp_by_hook();
        bad.partner_class = "Shelf".into();
        assert!(bad.validate(&Vocabulary::support_theory()).is_err());
    }

    #[test]
    fn descriptor_counts_occupied_neighbours() {
        let mask = Mask::from_cells([Cell::new(0, 0), Cell::new(0, 1)]);
        let d = Descriptor::extract(&mask, Cell::new(0, 0), 1);
        let e = Descriptor::extract(&Mask::new(), Cell::new(0, 0), 1);
        assert_eq!(d.hamming(&e), 2);
        assert_eq!(Descriptor::extract(&mask, Cell::new(0, 0), 3).0.len(), 1);
    }

    #[test]
    fn training_counts_on_a_small_host() {
        // A 3x4 host whose top-left 2x2 block is the part.
        let host = Mask::from_cells((0..3).flat_map(|r| (0..4).map(move |c| Cell::new(r, c))));
        let frame = Frame::from_text(&format!("frame 0 5 5\nobject mug1 Mug 0 0 {}\n", host.to_rle())).unwrap();
        let part = Mask::from_cells([Cell::new(0, 0), Cell::new(0, 1), Cell::new(1, 0), Cell::new(1, 1)]);
        let e = Exemplar {
            concept: "C".into(),
            object: "mug1".into(),
            frame,
            part: part.clone(),
        };
        let model = train_detector(std::slice::from_ref(&e), 1, 0).unwrap();
        assert!(model.positives.len() <= 4);
        assert!(model.negatives.len() <= 8);
        assert_eq!(train_detector(&[e.clone(), e.clone()], 1, 0).unwrap(), model);
        // The interior cells (1,1) and (1,2) see identical patches, so the
        // positive label wins for both.
        let found = model.detect(&e.frame, "mug1").unwrap();
        assert!(part.is_subset(&found));
        assert!(found.contains(Cell::new(1, 2)));
    }

    #[test]
    fn memorizes_its_training_frame() {
        let frame = hanging_frame();
        let model = train_detector(&[exemplar(&frame)], DEFAULT_PATCH_RADIUS, DEFAULT_TAU).unwrap();
        assert!(model.positives.is_disjoint(&model.negatives));
        assert_eq!(model.detect(&frame, "mug1").unwrap(), handle(&frame));
        assert!(model.detect(&frame, "nope").is_err());
    }

    #[test]
    fn training_rejects_bad_input() {
        let frame = hanging_frame();
        assert!(matches!(train_detector(&[], 2, 2), Err(PartError::NoExemplars)));
        let a = exemplar(&frame);
        let mut b = a.clone();
        b.concept = "Other".into();
        assert!(matches!(train_detector(&[a.clone(), b], 2, 2), Err(PartError::MixedConcepts(..))));
        assert!(matches!(train_detector(&[a], 4, 2), Err(PartError::BadRadius(4))));
    }

    #[test]
    fn model_text_round_trips() {
        let frame = hanging_frame();
        let model = train_detector(&[exemplar(&frame)], 2, 2).unwrap();
        assert_eq!(DetectorModel::from_text(&model.to_text()).unwrap(), model);
        assert!(DetectorModel::from_text("detector x").is_err());
    }

    #[test]
    fn exemplar_store_keeps_capture_order() {
        let dir = tempfile::tempdir().unwrap();
        let store = ExemplarStore::open(dir.path().join("ex")).unwrap();
        let frame = hanging_frame();
        let e = exemplar(&frame);
        let p0 = store.append(&e).unwrap();
        let p1 = store.append(&e).unwrap();
        assert!(p0 < p1);
        let all = store.load_all().unwrap();
        assert_eq!(all, vec![e.clone(), e]);
        assert!(store.load_concept("Other").unwrap().is_empty());
    }
}

//! The agent's belief state: polarity-tagged triples over registered
//! entities, with idempotent reification and graph dependency queries.

mod deps;
mod dump;
mod vocab;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use dump::LoadError;
pub use vocab::{Vocabulary, DIRECTIONS, ISA};

/// Prefix that marks a reified (minted) entity id.
pub const REIFIED_PREFIX: &str = "_:";

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(String);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Named,
    Reified,
}

impl EntityId {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn origin(&self) -> Origin {
        if self.0.starts_with(REIFIED_PREFIX) {
            Origin::Reified
        } else {
            Origin::Named
        }
    }

    /// The kind encoded in a reified id, e.g. `_:force-1a2b...` gives `Force`.
    pub fn reified_kind(&self) -> Option<EntityKind> {
        let rest = self.0.strip_prefix(REIFIED_PREFIX)?;
        let (kind, _) = rest.rsplit_once('-')?;
        kind.parse().ok()
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EntityId {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntityKind {
    Object,
    Force,
    Situation,
    Direction,
    Concept,
    MaskRef,
}

impl EntityKind {
    pub const ALL: [EntityKind; 6] = [
        EntityKind::Object,
        EntityKind::Force,
        EntityKind::Situation,
        EntityKind::Direction,
        EntityKind::Concept,
        EntityKind::MaskRef,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Object => "object",
            EntityKind::Force => "force",
            EntityKind::Situation => "situation",
            EntityKind::Direction => "direction",
            EntityKind::Concept => "concept",
            EntityKind::MaskRef => "mask-ref",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown entity kind `{s}`"))
    }
}

/// Provenance key of a reified entity: the rule that minted it, the fresh
/// variable it was bound to, and the binding tuple of the rule's frontier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReifyKey {
    pub rule: String,
    pub var: String,
    pub values: Vec<EntityId>,
}

impl ReifyKey {
    pub fn new(rule: impl Into<String>, var: impl Into<String>, values: Vec<EntityId>) -> Self {
        Self {
            rule: rule.into(),
            var: var.into(),
            values,
        }
    }

    fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.rule.as_bytes());
        hasher.update([0x1f]);
        hasher.update(self.var.as_bytes());
        for v in &self.values {
            hasher.update([0x1f]);
            hasher.update(v.as_str().as_bytes());
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: EntityId,
    pub kind: EntityKind,
    pub class_tags: BTreeSet<String>,
    /// 0 for named entities; a reified entity sits one above its deepest key value.
    pub depth: u32,
    pub key: Option<ReifyKey>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Pos,
    Neg,
}

impl Polarity {
    pub fn flip(self) -> Self {
        match self {
            Polarity::Pos => Polarity::Neg,
            Polarity::Neg => Polarity::Pos,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Pos => "pos",
            Polarity::Neg => "neg",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Perceived { tick: u64 },
    Inferred { rule: String, tick: u64 },
    Asserted,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Perceived { tick } => write!(f, "perceived@{tick}"),
            Provenance::Inferred { rule, tick } => write!(f, "inferred:{rule}@{tick}"),
            Provenance::Asserted => f.write_str("asserted"),
        }
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("malformed provenance `{s}`");
        if s == "asserted" {
            return Ok(Provenance::Asserted);
        }
        if let Some(rest) = s.strip_prefix("perceived@") {
            return Ok(Provenance::Perceived {
                tick: rest.parse().map_err(|_| bad())?,
            });
        }
        if let Some(rest) = s.strip_prefix("inferred:") {
            let (rule, tick) = rest.rsplit_once('@').ok_or_else(bad)?;
            return Ok(Provenance::Inferred {
                rule: rule.to_string(),
                tick: tick.parse().map_err(|_| bad())?,
            });
        }
        Err(bad())
    }
}

/// A polarity-tagged `(predicate, subject, object)` statement without provenance.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Statement {
    pub polarity: Polarity,
    pub predicate: String,
    pub subject: EntityId,
    pub object: EntityId,
}

impl Statement {
    pub fn new(
        polarity: Polarity,
        predicate: impl Into<String>,
        subject: impl Into<EntityId>,
        object: impl Into<EntityId>,
    ) -> Self {
        Self {
            polarity,
            predicate: predicate.into(),
            subject: subject.into(),
            object: object.into(),
        }
    }

    pub fn pos(predicate: &str, subject: &str, object: &str) -> Self {
        Self::new(Polarity::Pos, predicate, subject, object)
    }

    pub fn neg(predicate: &str, subject: &str, object: &str) -> Self {
        Self::new(Polarity::Neg, predicate, subject, object)
    }

    pub fn with(self, provenance: Provenance) -> Triple {
        Triple {
            polarity: self.polarity,
            predicate: self.predicate,
            subject: self.subject,
            object: self.object,
            provenance,
        }
    }

    fn spo(&self) -> Spo {
        (self.predicate.clone(), self.subject.clone(), self.object.clone())
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.polarity, self.predicate, self.subject, self.object)
    }
}

impl FromStr for Statement {
    type Err = String;

    /// Parses `<polarity> <predicate> <subject> <object>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(format!("expected `<pos|neg> <predicate> <subject> <object>`, got `{s}`"));
        }
        let polarity = match parts[0] {
            "pos" | "+" => Polarity::Pos,
            "neg" | "-" => Polarity::Neg,
            other => return Err(format!("unknown polarity `{other}`")),
        };
        Ok(Statement::new(polarity, parts[1], parts[2], parts[3]))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub polarity: Polarity,
    pub predicate: String,
    pub subject: EntityId,
    pub object: EntityId,
    pub provenance: Provenance,
}

impl Triple {
    pub fn statement(&self) -> Statement {
        Statement {
            polarity: self.polarity,
            predicate: self.predicate.clone(),
            subject: self.subject.clone(),
            object: self.object.clone(),
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} # {}",
            self.polarity, self.predicate, self.subject, self.object, self.provenance
        )
    }
}

/// Why an inferred triple holds: the rule, its binding and the premises it matched.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Justification {
    pub rule: String,
    pub bindings: Bindings,
    pub premises: Vec<Statement>,
}

pub type Bindings = BTreeMap<String, EntityId>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AssertOutcome {
    Added,
    Duplicate,
    Conflict,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("unregistered entity `{0}`")]
    UnregisteredEntity(EntityId),
    #[error("entity `{id}` already registered as {existing}, not {requested}")]
    KindMismatch {
        id: EntityId,
        existing: EntityKind,
        requested: EntityKind,
    },
    #[error("named entity ids may not start with `{REIFIED_PREFIX}`: `{0}`")]
    ReservedName(EntityId),
    #[error("dependency query needs two distinct entities, got `{0}` twice")]
    SameEndpoints(EntityId),
    #[error("reification digest collision between {:?} and {:?}", .0.0, .0.1)]
    DigestCollision(Box<(ReifyKey, ReifyKey)>),
}

/// One field of a pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PatternTerm {
    Any,
    Var(String),
    Const(EntityId),
}

impl PatternTerm {
    pub fn var(name: &str) -> Self {
        PatternTerm::Var(name.to_string())
    }

    pub fn constant(name: &str) -> Self {
        PatternTerm::Const(EntityId::new(name))
    }
}

/// A triple pattern; `predicate: None` matches any predicate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pattern {
    pub polarity: Polarity,
    pub predicate: Option<String>,
    pub subject: PatternTerm,
    pub object: PatternTerm,
}

impl Pattern {
    pub fn new(polarity: Polarity, predicate: &str, subject: PatternTerm, object: PatternTerm) -> Self {
        Self {
            polarity,
            predicate: Some(predicate.to_string()),
            subject,
            object,
        }
    }

    /// Parses whitespace-separated fields; `?x` is a variable, `_` or `*` a wildcard.
    pub fn parse(text: &str) -> Result<Self, String> {
        let parts: Vec<&str> = text.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(format!("pattern needs 4 fields, got `{text}`"));
        }
        let polarity = match parts[0] {
            "pos" | "+" => Polarity::Pos,
            "neg" | "-" => Polarity::Neg,
            other => return Err(format!("unknown polarity `{other}`")),
        };
        let term = |s: &str| match s {
            "_" | "*" => PatternTerm::Any,
            v if v.starts_with('?') => PatternTerm::Var(v[1..].to_string()),
            c => PatternTerm::Const(EntityId::new(c)),
        };
        let predicate = match parts[1] {
            "_" | "*" => None,
            p => Some(p.to_string()),
        };
        Ok(Self {
            polarity,
            predicate,
            subject: term(parts[2]),
            object: term(parts[3]),
        })
    }
}

type Spo = (String, EntityId, EntityId);

#[derive(Clone, Debug)]
pub struct BeliefStore {
    vocab: Vocabulary,
    entities: BTreeMap<EntityId, EntityRecord>,
    pos: BTreeMap<Spo, Provenance>,
    neg: BTreeMap<Spo, Provenance>,
    /// `(predicate, object, subject)` index over positive triples.
    pos_by_object: BTreeSet<Spo>,
    justifications: BTreeMap<Statement, Justification>,
    reified: BTreeMap<ReifyKey, EntityId>,
    digests: BTreeMap<EntityId, ReifyKey>,
}

impl PartialEq for BeliefStore {
    /// Stores are equal when they hold the same entities and triples.
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities && self.pos == other.pos && self.neg == other.neg
    }
}

impl BeliefStore {
    /// An empty store; the vocabulary's constants are pre-registered.
    pub fn new(vocab: Vocabulary) -> Self {
        let mut store = Self {
            vocab,
            entities: BTreeMap::new(),
            pos: BTreeMap::new(),
            neg: BTreeMap::new(),
            pos_by_object: BTreeSet::new(),
            justifications: BTreeMap::new(),
            reified: BTreeMap::new(),
            digests: BTreeMap::new(),
        };
        store.register_constants();
        store
    }

    fn register_constants(&mut self) {
        let constants: Vec<(String, EntityKind)> = self.vocab.constants().collect();
        for (name, kind) in constants {
            let id = EntityId::new(name);
            self.entities.entry(id.clone()).or_insert(EntityRecord {
                id,
                kind,
                class_tags: BTreeSet::new(),
                depth: 0,
                key: None,
            });
        }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Declares a class after construction and registers its constant.
    pub fn declare_class(&mut self, class: &str) {
        self.vocab.declare_class(class);
        self.register_constants();
    }

    pub fn register(&mut self, name: &str, kind: EntityKind) -> Result<EntityId, StoreError> {
        let id = EntityId::new(name);
        if id.origin() == Origin::Reified {
            return Err(StoreError::ReservedName(id));
        }
        self.register_record(EntityRecord {
            id: id.clone(),
            kind,
            class_tags: BTreeSet::new(),
            depth: 0,
            key: None,
        })?;
        Ok(id)
    }

    /// Registers a record, merging class tags when the id is already known.
    pub fn register_record(&mut self, record: EntityRecord) -> Result<(), StoreError> {
        match self.entities.get_mut(&record.id) {
            Some(existing) if existing.kind != record.kind => Err(StoreError::KindMismatch {
                id: record.id,
                existing: existing.kind,
                requested: record.kind,
            }),
            Some(existing) => {
                existing.class_tags.extend(record.class_tags);
                // Entities loaded from a dump carry no key until re-minted.
                if let (None, Some(key)) = (&existing.key, record.key) {
                    existing.key = Some(key.clone());
                    existing.depth = record.depth;
                    self.reified.insert(key.clone(), record.id.clone());
                    self.digests.insert(record.id, key);
                }
                Ok(())
            }
            None => {
                if let Some(key) = &record.key {
                    self.reified.insert(key.clone(), record.id.clone());
                    self.digests.insert(record.id.clone(), key.clone());
                }
                self.entities.insert(record.id.clone(), record);
                Ok(())
            }
        }
    }

    pub fn entity(&self, id: &EntityId) -> Option<&EntityRecord> {
        self.entities.get(id)
    }

    pub fn contains_entity(&self, id: &EntityId) -> bool {
        self.entities.contains_key(id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityRecord> {
        self.entities.values()
    }

    /// Returns the entity minted for `key`, minting it on first use.
    pub fn reify(&mut self, kind: EntityKind, key: ReifyKey) -> Result<EntityId, StoreError> {
        if let Some(id) = self.reified.get(&key) {
            return Ok(id.clone());
        }
        for v in &key.values {
            if !self.entities.contains_key(v) {
                return Err(StoreError::UnregisteredEntity(v.clone()));
            }
        }
        let id = EntityId::new(format!("{REIFIED_PREFIX}{kind}-{}", key.digest()));
        if let Some(other) = self.digests.get(&id) {
            return Err(StoreError::DigestCollision(Box::new((other.clone(), key))));
        }
        let depth = 1 + key
            .values
            .iter()
            .map(|v| self.entities[v].depth)
            .max()
            .unwrap_or(0);
        self.register_record(EntityRecord {
            id: id.clone(),
            kind,
            class_tags: BTreeSet::new(),
            depth,
            key: Some(key),
        })?;
        Ok(id)
    }

    /// Depth an entity minted from `values` would have.
    pub fn depth_for(&self, values: &[EntityId]) -> u32 {
        1 + values
            .iter()
            .map(|v| self.entities.get(v).map_or(0, |r| r.depth))
            .max()
            .unwrap_or(0)
    }

    pub fn reified_id(&self, key: &ReifyKey) -> Option<&EntityId> {
        self.reified.get(key)
    }

    fn check(&self, predicate: &str, subject: &EntityId, object: &EntityId) -> Result<(), StoreError> {
        if !self.vocab.has_predicate(predicate) {
            return Err(StoreError::UnknownPredicate(predicate.to_string()));
        }
        for id in [subject, object] {
            if !self.entities.contains_key(id) {
                return Err(StoreError::UnregisteredEntity(id.clone()));
            }
        }
        Ok(())
    }

    pub fn assert_triple(&mut self, triple: Triple) -> Result<AssertOutcome, StoreError> {
        self.check(&triple.predicate, &triple.subject, &triple.object)?;
        let spo = (triple.predicate.clone(), triple.subject.clone(), triple.object.clone());
        let (same, opposite) = match triple.polarity {
            Polarity::Pos => (&self.pos, &self.neg),
            Polarity::Neg => (&self.neg, &self.pos),
        };
        if opposite.contains_key(&spo) {
            return Ok(AssertOutcome::Conflict);
        }
        if same.contains_key(&spo) {
            return Ok(AssertOutcome::Duplicate);
        }
        if triple.polarity == Polarity::Pos {
            if triple.predicate == ISA {
                if let Some(rec) = self.entities.get_mut(&triple.subject) {
                    rec.class_tags.insert(triple.object.as_str().to_string());
                }
            }
            self.pos_by_object
                .insert((spo.0.clone(), spo.2.clone(), spo.1.clone()));
            self.pos.insert(spo, triple.provenance);
        } else {
            self.neg.insert(spo, triple.provenance);
        }
        Ok(AssertOutcome::Added)
    }

    /// Asserts an inferred triple and records why it holds.
    pub fn assert_justified(
        &mut self,
        triple: Triple,
        justification: Justification,
    ) -> Result<AssertOutcome, StoreError> {
        let statement = triple.statement();
        let outcome = self.assert_triple(triple)?;
        if outcome == AssertOutcome::Added {
            self.justifications.insert(statement, justification);
        }
        Ok(outcome)
    }

    pub fn justification(&self, statement: &Statement) -> Option<&Justification> {
        self.justifications.get(statement)
    }

    pub fn contains(&self, statement: &Statement) -> bool {
        self.provenance(statement).is_some()
    }

    pub fn provenance(&self, statement: &Statement) -> Option<&Provenance> {
        let spo = statement.spo();
        match statement.polarity {
            Polarity::Pos => self.pos.get(&spo),
            Polarity::Neg => self.neg.get(&spo),
        }
    }

    pub fn has_pos(&self, predicate: &str, subject: &EntityId, object: &EntityId) -> bool {
        self.pos
            .contains_key(&(predicate.to_string(), subject.clone(), object.clone()))
    }

    pub fn is_a(&self, entity: &EntityId, class: &str) -> bool {
        self.entities
            .get(entity)
            .is_some_and(|r| r.class_tags.contains(class))
    }

    pub fn len(&self) -> usize {
        self.pos.len() + self.neg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pos_len(&self) -> usize {
        self.pos.len()
    }

    /// All triples in canonical `(predicate, subject, object, polarity)` order.
    pub fn triples(&self) -> Vec<Triple> {
        let mut out: Vec<Triple> = self
            .pos
            .iter()
            .map(|(spo, p)| make_triple(Polarity::Pos, spo, p))
            .chain(self.neg.iter().map(|(spo, p)| make_triple(Polarity::Neg, spo, p)))
            .collect();
        out.sort_by(|a, b| {
            (&a.predicate, &a.subject, &a.object, a.polarity)
                .cmp(&(&b.predicate, &b.subject, &b.object, b.polarity))
        });
        out
    }

    /// Positive `(subject, object)` pairs of `predicate`, narrowed by any bound side.
    pub fn pos_pairs<'a>(
        &'a self,
        predicate: &'a str,
        subject: Option<&'a EntityId>,
        object: Option<&'a EntityId>,
    ) -> Box<dyn Iterator<Item = (&'a EntityId, &'a EntityId)> + 'a> {
        let pred = predicate.to_string();
        match (subject, object) {
            (Some(s), Some(o)) => {
                let hit = self
                    .pos
                    .get_key_value(&(pred, s.clone(), o.clone()))
                    .map(|(k, _)| (&k.1, &k.2));
                Box::new(hit.into_iter())
            }
            (Some(s), None) => Box::new(
                self.pos
                    .range((pred.clone(), s.clone(), EntityId::new(""))..)
                    .take_while(move |((p, ss, _), _)| *p == predicate && ss == s)
                    .map(|((_, s, o), _)| (s, o)),
            ),
            (None, Some(o)) => Box::new(
                self.pos_by_object
                    .range((pred.clone(), o.clone(), EntityId::new(""))..)
                    .take_while(move |(p, oo, _)| *p == predicate && oo == o)
                    .map(|(_, o, s)| (s, o)),
            ),
            (None, None) => Box::new(
                self.pos
                    .range((pred, EntityId::new(""), EntityId::new(""))..)
                    .take_while(move |((p, _, _), _)| *p == predicate)
                    .map(|((_, s, o), _)| (s, o)),
            ),
        }
    }

    /// Subjects `s` with a positive `isa(s, class)`.
    pub fn instances_of<'a>(&'a self, class: &'a EntityId) -> impl Iterator<Item = &'a EntityId> + 'a {
        self.pos_pairs(ISA, None, Some(class)).map(|(s, _)| s)
    }

    /// All triples unifying with `pattern`, in canonical order.
    pub fn matching(&self, pattern: &Pattern) -> Vec<Triple> {
        let map = match pattern.polarity {
            Polarity::Pos => &self.pos,
            Polarity::Neg => &self.neg,
        };
        map.iter()
            .filter(|((p, s, o), _)| {
                pattern.predicate.as_ref().is_none_or(|pp| pp == p)
                    && unify(&pattern.subject, &pattern.object, s, o).is_some()
            })
            .map(|(spo, prov)| make_triple(pattern.polarity, spo, prov))
            .collect()
    }

    /// Distinct variable bindings of every triple unifying with `pattern`.
    pub fn query_pattern(&self, pattern: &Pattern) -> Vec<Bindings> {
        let map = match pattern.polarity {
            Polarity::Pos => &self.pos,
            Polarity::Neg => &self.neg,
        };
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (p, s, o) in map.keys() {
            if pattern.predicate.as_ref().is_some_and(|pp| pp != p) {
                continue;
            }
            if let Some(b) = unify(&pattern.subject, &pattern.object, s, o) {
                if seen.insert(b.clone()) {
                    out.push(b);
                }
            }
        }
        out
    }

    pub fn justification_count(&self) -> usize {
        self.justifications.len()
    }
}

fn make_triple(polarity: Polarity, spo: &Spo, provenance: &Provenance) -> Triple {
    Triple {
        polarity,
        predicate: spo.0.clone(),
        subject: spo.1.clone(),
        object: spo.2.clone(),
        provenance: provenance.clone(),
    }
}

fn unify(sp: &PatternTerm, op: &PatternTerm, s: &EntityId, o: &EntityId) -> Option<Bindings> {
    let mut b = Bindings::new();
    for (term, value) in [(sp, s), (op, o)] {
        match term {
            PatternTerm::Any => {}
            PatternTerm::Const(c) => {
                if c != value {
                    return None;
                }
            }
            PatternTerm::Var(v) => match b.get(v) {
                Some(prev) if prev != value => return None,
                Some(_) => {}
                None => {
                    b.insert(v.clone(), value.clone());
                }
            },
        }
    }
    Some(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn store_with(objects: &[&str]) -> BeliefStore {
        let mut store = BeliefStore::new(Vocabulary::support_theory());
        for o in objects {
            store.register(o, EntityKind::Object).unwrap();
        }
        store
    }

    #[test]
    fn assert_added_duplicate_conflict() {
        let mut store = store_with(&["mug1", "hook1"]);
        let t = Statement::pos("contacts", "mug1", "hook1").with(Provenance::Perceived { tick: 0 });
        assert_eq!(store.assert_triple(t.clone()).unwrap(), AssertOutcome::Added);
        assert_eq!(store.assert_triple(t).unwrap(), AssertOutcome::Duplicate);
        let n = Statement::neg("contacts", "mug1", "hook1").with(Provenance::Perceived { tick: 0 });
        let before = store.triples();
        assert_eq!(store.assert_triple(n).unwrap(), AssertOutcome::Conflict);
        assert_eq!(store.triples(), before);
    }

    #[test]
    fn assert_errors() {
        let mut store = store_with(&["mug1"]);
        let t = Statement::pos("levitates", "mug1", "mug1").with(Provenance::Asserted);
        assert_eq!(
            store.assert_triple(t),
            Err(StoreError::UnknownPredicate("levitates".into()))
        );
        let t = Statement::pos("contacts", "mug1", "ghost").with(Provenance::Asserted);
        assert_eq!(
            store.assert_triple(t),
            Err(StoreError::UnregisteredEntity("ghost".into()))
        );
    }

    #[test]
    fn query_pattern_examples() {
        let mut store = store_with(&["mug1", "hook1", "a", "b", "c"]);
        let pat = Pattern::parse("pos contacts mug1 ?x").unwrap();
        assert!(store.query_pattern(&pat).is_empty());
        store
            .assert_triple(Statement::pos("contacts", "mug1", "hook1").with(Provenance::Asserted))
            .unwrap();
        let got = store.query_pattern(&pat);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0]["x"], EntityId::new("hook1"));

        let mut store = store_with(&["a", "b", "c"]);
        for (s, o) in [("a", "b"), ("b", "c"), ("c", "a")] {
            store
                .assert_triple(Statement::pos("contacts", s, o).with(Provenance::Asserted))
                .unwrap();
        }
        let all = store.query_pattern(&Pattern::parse("pos contacts ?a ?b").unwrap());
        assert_eq!(all.len(), 3);
        assert_eq!(all, store.query_pattern(&Pattern::parse("pos contacts ?a ?b").unwrap()));
    }

    #[test]
    fn repeated_variable_must_agree() {
        let mut store = store_with(&["a", "b"]);
        for (s, o) in [("a", "a"), ("a", "b")] {
            store
                .assert_triple(Statement::pos("contacts", s, o).with(Provenance::Asserted))
                .unwrap();
        }
        let got = store.query_pattern(&Pattern::parse("pos contacts ?x ?x").unwrap());
        assert_eq!(got.len(), 1);
    }

    #[test]
    fn reify_is_idempotent_per_key() {
        let mut store = store_with(&["mug1", "hook1"]);
        let key = ReifyKey::new("diagnose_support", "s", vec!["mug1".into(), "hook1".into()]);
        let a = store.reify(EntityKind::Situation, key.clone()).unwrap();
        let b = store.reify(EntityKind::Situation, key).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.origin(), Origin::Reified);
        let other = ReifyKey::new("diagnose_support", "s", vec!["hook1".into(), "mug1".into()]);
        assert_ne!(a, store.reify(EntityKind::Situation, other).unwrap());

        let f = store
            .reify(EntityKind::Force, ReifyKey::new("gravity", "f", vec!["mug1".into()]))
            .unwrap();
        let rec = store.entity(&f).unwrap();
        assert_eq!(rec.kind, EntityKind::Force);
        assert_eq!(rec.depth, 1);
        assert_eq!(f.reified_kind(), Some(EntityKind::Force));
    }

    #[test]
    fn named_ids_cannot_use_reified_prefix() {
        let mut store = store_with(&[]);
        assert!(matches!(
            store.register("_:force-00", EntityKind::Force),
            Err(StoreError::ReservedName(_))
        ));
    }

    proptest! {
        #[test]
        fn reification_is_deterministic(keys in proptest::collection::vec((0usize..3, 0usize..4, 0usize..4), 1..40)) {
            let names = ["a", "b", "c", "d"];
            let mut store = store_with(&names);
            let mut fresh = store_with(&names);
            let mut seen: BTreeMap<ReifyKey, EntityId> = BTreeMap::new();
            for (rule, x, y) in keys {
                let key = ReifyKey::new(format!("r{rule}"), "v", vec![names[x].into(), names[y].into()]);
                let id = store.reify(EntityKind::Situation, key.clone()).unwrap();
                if let Some(prev) = seen.get(&key) {
                    prop_assert_eq!(prev, &id);
                }
                // Ids depend only on the key, not on minting history.
                prop_assert_eq!(&fresh.reify(EntityKind::Situation, key.clone()).unwrap(), &id);
                seen.insert(key, id);
            }
            let distinct: BTreeSet<&EntityId> = seen.values().collect();
            prop_assert_eq!(distinct.len(), seen.len());
        }

        #[test]
        fn polarity_never_clashes(ops in proptest::collection::vec((any::<bool>(), 0usize..3, 0usize..3), 0..60)) {
            let names = ["a", "b", "c"];
            let mut store = store_with(&names);
            for (pos, s, o) in ops {
                let pol = if pos { Polarity::Pos } else { Polarity::Neg };
                store.assert_triple(Statement::new(pol, "contacts", names[s], names[o]).with(Provenance::Asserted)).unwrap();
            }
            for t in store.triples() {
                let mut opposite = t.statement();
                opposite.polarity = opposite.polarity.flip();
                prop_assert!(!store.contains(&opposite));
            }
        }
    }
}

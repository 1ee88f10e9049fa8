//! The built-in theory of support, the queries it asks perception to answer,
//! and which support descriptions survive from one tick to the next.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rules::{parse_rules, NafScope, ParseError, Rule};
use crate::store::{
    BeliefStore, EntityId, EntityRecord, Polarity, Provenance, Statement, StoreError, Triple, ISA,
};

/// Source text of the built-in rule set.
pub const BUILTIN_RULES: &str = include_str!("../assets/support.rules");

pub fn builtin_ruleset() -> Vec<Rule> {
    parse_rules(BUILTIN_RULES).expect("built-in rules parse")
}

/// Loads a rule file, or the built-in set for `None` / `"default"`.
pub fn load_ruleset(source: Option<&str>) -> Result<Vec<Rule>, ParseError> {
    match source {
        None | Some("default") => Ok(builtin_ruleset()),
        Some(text) => parse_rules(text),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum QueryKind {
    RelativeMovement,
    Contact,
}

impl QueryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryKind::RelativeMovement => "relativeMovement",
            QueryKind::Contact => "contact",
        }
    }

    /// The perceived predicates a query of this kind answers for its subject.
    pub fn answers(self) -> &'static [&'static str] {
        match self {
            QueryKind::RelativeMovement => &["movDir", "stillness", "approaches", "departs"],
            QueryKind::Contact => &["contacts", "below", "maskHost", "maskPartner"],
        }
    }
}

impl FromStr for QueryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relativeMovement" => Ok(QueryKind::RelativeMovement),
            "contact" => Ok(QueryKind::Contact),
            other => Err(format!("unknown query `{other}`")),
        }
    }
}

/// A request to perception. A missing object means "against every object".
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PerceptionQuery {
    pub query: QueryKind,
    pub subject: EntityId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<EntityId>,
}

impl PerceptionQuery {
    pub fn relative_movement(subject: &str, object: &str) -> Self {
        Self {
            query: QueryKind::RelativeMovement,
            subject: subject.into(),
            object: Some(object.into()),
        }
    }

    pub fn contact(subject: &str, object: Option<&str>) -> Self {
        Self {
            query: QueryKind::Contact,
            subject: subject.into(),
            object: object.map(EntityId::from),
        }
    }
}

impl fmt::Display for PerceptionQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let object = self.object.as_ref().map_or("_", EntityId::as_str);
        write!(f, "{}({}, {})", self.query.as_str(), self.subject, object)
    }
}

impl FromStr for PerceptionQuery {
    type Err = String;

    /// `relativeMovement(mug1, floor)` or `contact(mug1, _)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, rest) = s
            .split_once('(')
            .ok_or_else(|| format!("expected `name(subject, object)`, got `{s}`"))?;
        let args = rest
            .strip_suffix(')')
            .ok_or_else(|| format!("missing `)` in `{s}`"))?;
        let (subject, object) = args
            .split_once(',')
            .ok_or_else(|| format!("expected two arguments in `{s}`"))?;
        let subject = subject.trim();
        if subject.is_empty() || subject == "_" {
            return Err(format!("query `{s}` needs a subject"));
        }
        let object = match object.trim() {
            "" | "_" => None,
            o => Some(EntityId::new(o)),
        };
        Ok(Self {
            query: name.trim().parse()?,
            subject: EntityId::new(subject),
            object,
        })
    }
}

/// Suppees of every believed support description, paired with their supporters.
pub fn support_descriptions(store: &BeliefStore) -> Vec<(EntityId, EntityId, EntityId)> {
    let class = EntityId::new("DSupp");
    let mut out = Vec::new();
    for s in store.instances_of(&class) {
        for (_, e) in store.pos_pairs("suppee", Some(s), None) {
            for (_, r) in store.pos_pairs("supper", Some(s), None) {
                out.push((s.clone(), e.clone(), r.clone()));
            }
        }
    }
    out
}

/// Expectations of each believed support description, plus the standing
/// queries, deduplicated.
pub fn emit_queries(store: &BeliefStore, standing: &[PerceptionQuery]) -> BTreeSet<PerceptionQuery> {
    let mut out: BTreeSet<PerceptionQuery> = standing.iter().cloned().collect();
    for (_, e, _) in support_descriptions(store) {
        out.insert(PerceptionQuery {
            query: QueryKind::RelativeMovement,
            subject: e.clone(),
            object: Some(EntityId::new("floor")),
        });
        out.insert(PerceptionQuery {
            query: QueryKind::Contact,
            subject: e,
            object: None,
        });
    }
    out
}

/// The negation scope implied by a set of answered queries.
pub fn naf_scope<'a>(queries: impl IntoIterator<Item = &'a PerceptionQuery>) -> NafScope {
    let mut scope = NafScope::new();
    for q in queries {
        for p in q.query.answers() {
            scope.answer(p, &q.subject);
        }
    }
    scope
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropReason {
    /// The suppee was seen falling or out of contact with its supporter.
    Violated,
    /// Perception said nothing either way.
    Unobserved,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedSchema {
    pub situation: EntityId,
    pub suppee: EntityId,
    pub supper: EntityId,
    pub reason: DropReason,
}

/// A support description carried into the next tick's belief state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CarriedSchema {
    pub record: EntityRecord,
    pub suppee: EntityId,
    pub supper: EntityId,
}

impl CarriedSchema {
    pub fn triples(&self) -> Vec<Triple> {
        let s = &self.record.id;
        [
            Statement::new(Polarity::Pos, ISA, s.clone(), "DSupp"),
            Statement::new(Polarity::Pos, "suppee", s.clone(), self.suppee.clone()),
            Statement::new(Polarity::Pos, "supper", s.clone(), self.supper.clone()),
        ]
        .into_iter()
        .map(|st| st.with(Provenance::Asserted))
        .collect()
    }

    /// Registers the situation and asserts its role links. Participants
    /// that are not yet known are registered as objects.
    pub fn inject(&self, store: &mut BeliefStore) -> Result<(), StoreError> {
        for id in [&self.suppee, &self.supper] {
            if !store.contains_entity(id) {
                store.register(id.as_str(), crate::store::EntityKind::Object)?;
            }
        }
        store.register_record(self.record.clone())?;
        for t in self.triples() {
            store.assert_triple(t)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Persistence {
    pub carried: Vec<CarriedSchema>,
    pub dropped: Vec<DroppedSchema>,
}

fn percept(percepts: &[Triple], polarity: Polarity, p: &str, s: &EntityId, o: &EntityId) -> bool {
    percepts
        .iter()
        .any(|t| t.polarity == polarity && t.predicate == p && &t.subject == s && &t.object == o)
}

/// Decides which support descriptions from `prev` hold on into this tick.
///
/// One carries over when this tick's percepts confirm it: no downward
/// movement of the suppee and a contact percept between suppee and supper.
/// Contact and movement situations are never carried; they are re-derived.
pub fn persist_schemas(prev: &BeliefStore, percepts: &[Triple]) -> Persistence {
    let mut out = Persistence::default();
    let down = EntityId::new("down");
    for (s, e, r) in support_descriptions(prev) {
        let falling = percept(percepts, Polarity::Pos, "movDir", &e, &down);
        let touching = percept(percepts, Polarity::Pos, "contacts", &e, &r)
            || percept(percepts, Polarity::Pos, "contacts", &r, &e);
        let separated = percept(percepts, Polarity::Neg, "contacts", &e, &r)
            || percept(percepts, Polarity::Neg, "contacts", &r, &e);
        let reason = if falling || separated {
            Some(DropReason::Violated)
        } else if !touching {
            Some(DropReason::Unobserved)
        } else {
            None
        };
        match reason {
            None => {
                let record = prev.entity(&s).cloned().expect("situation is registered");
                out.carried.push(CarriedSchema {
                    record,
                    suppee: e,
                    supper: r,
                });
            }
            Some(reason) => {
                log::debug!("dropping support of {e} by {r}: {reason:?}");
                out.dropped.push(DroppedSchema {
                    situation: s,
                    suppee: e,
                    supper: r,
                    reason,
                });
            }
        }
    }
    out
}

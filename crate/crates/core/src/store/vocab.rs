use std::collections::{BTreeMap, BTreeSet};

use super::EntityKind;

/// Predicate used for class membership; `Obj(x)` is stored as `isa(x, Obj)`.
pub const ISA: &str = "isa";

pub const DIRECTIONS: [&str; 4] = ["up", "down", "left", "right"];

/// Declared predicates, classes and constant entities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    /// predicate name -> answered by perception
    predicates: BTreeMap<String, bool>,
    classes: BTreeSet<String>,
    constants: BTreeMap<String, EntityKind>,
}

const PERCEIVED: &[&str] = &[
    "contacts",
    "approaches",
    "departs",
    "stillness",
    "movDir",
    "below",
    "maskHost",
    "maskPartner",
];

const DERIVED: &[&str] = &[
    ISA,
    "exrt",
    "aff",
    "dir",
    "hasPrtcp",
    "suppee",
    "supper",
    "mover",
    "hasPrt",
    "partMask",
    "hasRole",
    "supportGoal",
    "unsupportGoal",
];

const CLASSES: &[&str] = &[
    "Obj",
    "Fixed",
    "Phys",
    "Floor",
    "Mug",
    "Hook",
    "Block",
    "Frc",
    "Grv",
    "CtcFrc",
    "Reaction",
    "Exerter",
    "Part",
    "Con",
    "Supp",
    "DSupp",
    "Movement",
    "Transportation",
    "MugSuppByHook",
];

impl Vocabulary {
    /// Only `isa`; no classes or constants.
    pub fn empty() -> Self {
        let mut v = Self {
            predicates: BTreeMap::new(),
            classes: BTreeSet::new(),
            constants: BTreeMap::new(),
        };
        v.declare_predicate(ISA, false);
        v
    }

    /// The vocabulary of the built-in support theory and the perception layer.
    pub fn support_theory() -> Self {
        let mut v = Self::empty();
        for p in PERCEIVED {
            v.declare_predicate(p, true);
        }
        for p in DERIVED {
            v.declare_predicate(p, false);
        }
        for c in CLASSES {
            v.declare_class(c);
        }
        for d in DIRECTIONS {
            v.declare_constant(d, EntityKind::Direction);
        }
        v.declare_constant("floor", EntityKind::Object);
        v.declare_constant("none", EntityKind::Concept);
        v
    }

    pub fn declare_predicate(&mut self, name: &str, perceived: bool) {
        self.predicates.insert(name.to_string(), perceived);
    }

    pub fn declare_class(&mut self, name: &str) {
        self.classes.insert(name.to_string());
        self.constants.insert(name.to_string(), EntityKind::Concept);
    }

    pub fn declare_constant(&mut self, name: &str, kind: EntityKind) {
        self.constants.insert(name.to_string(), kind);
    }

    pub fn has_predicate(&self, name: &str) -> bool {
        self.predicates.contains_key(name)
    }

    /// True for predicates that only perception asserts directly.
    pub fn is_perceived(&self, name: &str) -> bool {
        self.predicates.get(name).copied().unwrap_or(false)
    }

    pub fn has_class(&self, name: &str) -> bool {
        self.classes.contains(name)
    }

    pub fn constant_kind(&self, name: &str) -> Option<EntityKind> {
        self.constants.get(name).copied()
    }

    pub fn predicates(&self) -> impl Iterator<Item = &str> {
        self.predicates.keys().map(String::as_str)
    }

    pub fn constants(&self) -> impl Iterator<Item = (String, EntityKind)> + '_ {
        self.constants.iter().map(|(k, v)| (k.clone(), *v))
    }
}

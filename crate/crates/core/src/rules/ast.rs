use std::collections::BTreeSet;
use std::fmt;

use crate::store::EntityKind;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(String),
    Const(String),
}

impl Term {
    pub fn var_name(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Const(c) => f.write_str(c),
        }
    }
}

/// `p(s, o)` or the class test `C(x)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn binary(predicate: &str, s: Term, o: Term) -> Self {
        Self {
            predicate: predicate.to_string(),
            args: vec![s, o],
        }
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(Term::var_name)
    }

    /// `(predicate, subject, object)` with class tests mapped onto `isa`.
    pub fn as_triple(&self) -> (&str, &Term, Term) {
        match self.args.as_slice() {
            [x] => (crate::store::ISA, x, Term::Const(self.predicate.clone())),
            [s, o] => (self.predicate.as_str(), s, o.clone()),
            _ => unreachable!("atoms are unary or binary"),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Builtin {
    /// Opposite directions; binds either side when the other is bound.
    Opp(Term, Term),
    NotEqual(Term, Term),
}

impl Builtin {
    pub fn terms(&self) -> [&Term; 2] {
        match self {
            Builtin::Opp(a, b) | Builtin::NotEqual(a, b) => [a, b],
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Builtin::Opp(a, b) => write!(f, "opp({a}, {b})"),
            Builtin::NotEqual(a, b) => write!(f, "{a} != {b}"),
        }
    }
}

/// `new ?f: force [Grv]`
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreshEntity {
    pub var: String,
    pub kind: EntityKind,
    pub tags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeadAtom {
    pub negated: bool,
    pub atom: Atom,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub id: String,
    pub body_pos: Vec<Atom>,
    pub body_neg: Vec<Atom>,
    pub body_builtins: Vec<Builtin>,
    pub head_new: Vec<FreshEntity>,
    pub head_atoms: Vec<HeadAtom>,
}

impl Rule {
    pub fn is_reifying(&self) -> bool {
        !self.head_new.is_empty()
    }

    /// Variables bound by the body: positive atoms plus `opp` outputs.
    pub fn body_vars(&self) -> BTreeSet<&str> {
        let mut bound: BTreeSet<&str> = self.body_pos.iter().flat_map(Atom::vars).collect();
        for b in &self.body_builtins {
            if let Builtin::Opp(x, y) = b {
                bound.extend(x.var_name());
                bound.extend(y.var_name());
            }
        }
        bound
    }

    /// Body variables that reach the head, in order of first head use. Fresh
    /// entities are keyed on these.
    pub fn frontier(&self) -> Vec<String> {
        let body = self.body_vars();
        let mut out: Vec<String> = Vec::new();
        for h in &self.head_atoms {
            for v in h.atom.vars() {
                if body.contains(v) && !out.iter().any(|o| o == v) {
                    out.push(v.to_string());
                }
            }
        }
        out
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rule {}: ", self.id)?;
        let mut body: Vec<String> = self.body_pos.iter().map(ToString::to_string).collect();
        body.extend(self.body_neg.iter().map(|a| format!("not {a}")));
        body.extend(self.body_builtins.iter().map(ToString::to_string));
        f.write_str(&body.join(", "))?;
        f.write_str(" => ")?;
        let mut head: Vec<String> = self
            .head_new
            .iter()
            .map(|n| format!("new ?{}: {} [{}]", n.var, n.kind, n.tags.join(", ")))
            .collect();
        head.extend(self.head_atoms.iter().map(|h| {
            if h.negated {
                format!("-{}", h.atom)
            } else {
                h.atom.to_string()
            }
        }));
        f.write_str(&head.join(", "))
    }
}

/// Renders rules one per line, as accepted by the parser.
pub fn print_rules(rules: &[Rule]) -> String {
    rules.iter().map(|r| format!("{r}\n")).collect()
}

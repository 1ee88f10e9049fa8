//! Semi-naive forward chaining with scoped negation and keyed reification.

use std::collections::{BTreeMap, BTreeSet};

use super::ast::{Atom, Builtin, Rule, Term};
use crate::store::{
    AssertOutcome, BeliefStore, Bindings, EntityId, Justification, Polarity, Provenance,
    ReifyKey, Statement, StoreError, Triple, ISA,
};

/// Which perception-grounded facts were actually asked for this tick.
///
/// A negated atom over a perceived predicate only succeeds when its
/// `(predicate, subject)` pair is covered here. Predicates that perception
/// never asserts are closed-world.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NafScope {
    whole: BTreeSet<String>,
    pairs: BTreeSet<(String, EntityId)>,
}

impl NafScope {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every subject of `predicate` is answered.
    pub fn answer_all(&mut self, predicate: &str) {
        self.whole.insert(predicate.to_string());
    }

    pub fn answer(&mut self, predicate: &str, subject: &EntityId) {
        self.pairs.insert((predicate.to_string(), subject.clone()));
    }

    pub fn covers(&self, predicate: &str, subject: &EntityId) -> bool {
        self.whole.contains(predicate)
            || self.pairs.contains(&(predicate.to_string(), subject.clone()))
    }

    pub fn without_predicate(&self, predicate: &str) -> Self {
        Self {
            whole: self.whole.iter().filter(|p| *p != predicate).cloned().collect(),
            pairs: self
                .pairs
                .iter()
                .filter(|(p, _)| p != predicate)
                .cloned()
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.whole.is_empty() && self.pairs.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EngineConfig {
    pub max_iterations: usize,
    /// Largest depth a minted entity may have.
    pub reification_depth: u32,
    /// Stamped into the provenance of derived triples.
    pub tick: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            max_iterations: 64,
            reification_depth: 2,
            tick: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Firing {
    pub rule: String,
    pub bindings: Bindings,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FixpointReport {
    pub iterations: usize,
    pub derived: usize,
    pub minted: usize,
    pub firings: Vec<Firing>,
    pub reached_fixpoint: bool,
    pub conflicts: Vec<Triple>,
    /// Firings skipped because their minted entity would exceed the depth cap.
    pub depth_capped: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("no fixpoint after {0} iterations; a reification chain is probably unbounded")]
    IterationCap(usize),
    #[error("rule `{rule}` uses unknown predicate `{predicate}`")]
    UnknownPredicate { rule: String, predicate: String },
    #[error("rule `{rule}` uses unknown class `{class}`")]
    UnknownClass { rule: String, class: String },
    #[error("rule `{rule}` mentions unregistered constant `{constant}`")]
    UnregisteredConstant { rule: String, constant: String },
    #[error("rule `{rule}` negates `{predicate}`, which rule `{deriver}` derives")]
    NegatedDerivedPredicate {
        rule: String,
        predicate: String,
        deriver: String,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// The name a negated atom is keyed on: the class for unary atoms.
fn naf_key(atom: &Atom) -> &str {
    &atom.predicate
}

fn validate(store: &BeliefStore, rules: &[Rule]) -> Result<(), EngineError> {
    let vocab = store.vocabulary();
    let mut derivers: BTreeMap<&str, &str> = BTreeMap::new();
    for rule in rules {
        for h in rule.head_atoms.iter().filter(|h| !h.negated) {
            derivers.entry(naf_key(&h.atom)).or_insert(&rule.id);
        }
        for f in &rule.head_new {
            for t in &f.tags {
                derivers.entry(t).or_insert(&rule.id);
            }
        }
    }
    for rule in rules {
        let atoms = rule
            .body_pos
            .iter()
            .chain(&rule.body_neg)
            .chain(rule.head_atoms.iter().map(|h| &h.atom));
        for atom in atoms {
            if atom.args.len() == 1 {
                if !vocab.has_class(&atom.predicate) {
                    return Err(EngineError::UnknownClass {
                        rule: rule.id.clone(),
                        class: atom.predicate.clone(),
                    });
                }
            } else if !vocab.has_predicate(&atom.predicate) {
                return Err(EngineError::UnknownPredicate {
                    rule: rule.id.clone(),
                    predicate: atom.predicate.clone(),
                });
            }
        }
        for tag in rule.head_new.iter().flat_map(|f| &f.tags) {
            if !vocab.has_class(tag) {
                return Err(EngineError::UnknownClass {
                    rule: rule.id.clone(),
                    class: tag.clone(),
                });
            }
        }
        let terms = rule
            .body_pos
            .iter()
            .chain(&rule.body_neg)
            .chain(rule.head_atoms.iter().map(|h| &h.atom))
            .flat_map(|a| a.args.iter())
            .chain(rule.body_builtins.iter().flat_map(|b| b.terms()));
        for t in terms {
            if let Term::Const(c) = t {
                if !store.contains_entity(&EntityId::new(c.as_str())) {
                    return Err(EngineError::UnregisteredConstant {
                        rule: rule.id.clone(),
                        constant: c.clone(),
                    });
                }
            }
        }
        for atom in &rule.body_neg {
            if let Some(deriver) = derivers.get(naf_key(atom)) {
                return Err(EngineError::NegatedDerivedPredicate {
                    rule: rule.id.clone(),
                    predicate: atom.predicate.clone(),
                    deriver: deriver.to_string(),
                });
            }
        }
    }
    Ok(())
}

pub fn opposite(direction: &str) -> Option<&'static str> {
    match direction {
        "up" => Some("down"),
        "down" => Some("up"),
        "left" => Some("right"),
        "right" => Some("left"),
        _ => None,
    }
}

type Pair = (EntityId, EntityId);
type Delta = BTreeMap<String, Vec<Pair>>;

fn resolve(term: &Term, env: &Bindings) -> Option<EntityId> {
    match term {
        Term::Const(c) => Some(EntityId::new(c.as_str())),
        Term::Var(v) => env.get(v).cloned(),
    }
}

/// `(predicate, subject term, object term)` with class atoms mapped onto `isa`.
fn triple_terms(atom: &Atom) -> (&str, Term, Term) {
    let (p, s, o) = atom.as_triple();
    (p, s.clone(), o)
}

fn bind(term: &Term, value: &EntityId, env: &mut Bindings) -> bool {
    match term {
        Term::Const(c) => c == value.as_str(),
        Term::Var(v) => match env.get(v) {
            Some(existing) => existing == value,
            None => {
                env.insert(v.clone(), value.clone());
                true
            }
        },
    }
}

fn extend(atom: &Atom, pairs: &[Pair], env: &Bindings) -> Vec<Bindings> {
    let (_, s, o) = triple_terms(atom);
    pairs
        .iter()
        .filter_map(|(ps, po)| {
            let mut e = env.clone();
            (bind(&s, ps, &mut e) && bind(&o, po, &mut e)).then_some(e)
        })
        .collect()
}

fn extend_from_store(store: &BeliefStore, atom: &Atom, env: &Bindings) -> Vec<Bindings> {
    let (p, s, o) = triple_terms(atom);
    let sv = resolve(&s, env);
    let ov = resolve(&o, env);
    let pairs: Vec<Pair> = store
        .pos_pairs(p, sv.as_ref(), ov.as_ref())
        .map(|(a, b)| (a.clone(), b.clone()))
        .collect();
    extend(atom, &pairs, env)
}

fn builtins_hold(store: &BeliefStore, rule: &Rule, mut env: Bindings) -> Option<Bindings> {
    for b in &rule.body_builtins {
        match b {
            Builtin::Opp(x, y) => match (resolve(x, &env), resolve(y, &env)) {
                (Some(a), Some(b)) => {
                    if opposite(a.as_str()) != Some(b.as_str()) {
                        return None;
                    }
                }
                (Some(a), None) => {
                    let o = EntityId::new(opposite(a.as_str())?);
                    if !store.contains_entity(&o) || !bind(y, &o, &mut env) {
                        return None;
                    }
                }
                (None, Some(b)) => {
                    let o = EntityId::new(opposite(b.as_str())?);
                    if !store.contains_entity(&o) || !bind(x, &o, &mut env) {
                        return None;
                    }
                }
                (None, None) => return None,
            },
            Builtin::NotEqual(x, y) => {
                if resolve(x, &env)? == resolve(y, &env)? {
                    return None;
                }
            }
        }
    }
    Some(env)
}

fn negation_holds(store: &BeliefStore, scope: &NafScope, atom: &Atom, env: &Bindings) -> bool {
    let (p, s, o) = triple_terms(atom);
    let (Some(sv), Some(ov)) = (resolve(&s, env), resolve(&o, env)) else {
        return false;
    };
    if store.vocabulary().is_perceived(p) && !scope.covers(p, &sv) {
        return false;
    }
    !store.has_pos(p, &sv, &ov)
}

/// All complete bindings of `rule`. With a delta, at least one positive atom
/// must match a triple from it.
fn matches(
    store: &BeliefStore,
    scope: &NafScope,
    rule: &Rule,
    delta: Option<&Delta>,
) -> BTreeSet<Bindings> {
    let mut out = BTreeSet::new();
    let seeds: Vec<Option<usize>> = match delta {
        None => vec![None],
        Some(d) => (0..rule.body_pos.len())
            .filter(|&i| d.contains_key(triple_terms(&rule.body_pos[i]).0))
            .map(Some)
            .collect(),
    };
    for seed in seeds {
        let mut partial = vec![Bindings::new()];
        if let (Some(i), Some(d)) = (seed, delta) {
            let atom = &rule.body_pos[i];
            partial = extend(atom, &d[triple_terms(atom).0], &Bindings::new());
        }
        for (j, atom) in rule.body_pos.iter().enumerate() {
            if Some(j) == seed {
                continue;
            }
            partial = partial
                .iter()
                .flat_map(|env| extend_from_store(store, atom, env))
                .collect();
            if partial.is_empty() {
                break;
            }
        }
        for env in partial {
            let Some(env) = builtins_hold(store, rule, env) else {
                continue;
            };
            if rule
                .body_neg
                .iter()
                .all(|a| negation_holds(store, scope, a, &env))
            {
                out.insert(env);
            }
        }
    }
    out
}

fn ground(atom: &Atom, env: &Bindings, polarity: Polarity) -> Statement {
    let (p, s, o) = triple_terms(atom);
    let s = resolve(&s, env).expect("range-restricted rule");
    let o = resolve(&o, env).expect("range-restricted rule");
    Statement::new(polarity, p, s, o)
}

struct Applied {
    added: Vec<Statement>,
    minted: usize,
    conflicts: Vec<Triple>,
    capped: bool,
}

fn apply(
    store: &mut BeliefStore,
    rule: &Rule,
    frontier: &[String],
    env: &Bindings,
    config: &EngineConfig,
) -> Result<Applied, EngineError> {
    let mut result = Applied {
        added: Vec::new(),
        minted: 0,
        conflicts: Vec::new(),
        capped: false,
    };
    let mut full = env.clone();
    if rule.is_reifying() {
        let values: Vec<EntityId> = frontier.iter().map(|v| env[v].clone()).collect();
        if store.depth_for(&values) > config.reification_depth {
            result.capped = true;
            return Ok(result);
        }
        for fresh in &rule.head_new {
            let key = ReifyKey::new(rule.id.as_str(), fresh.var.as_str(), values.clone());
            let existed = store.reified_id(&key).is_some();
            let id = store.reify(fresh.kind, key)?;
            if !existed {
                result.minted += 1;
            }
            full.insert(fresh.var.clone(), id);
        }
    }
    let premises: Vec<Statement> = rule
        .body_pos
        .iter()
        .map(|a| ground(a, env, Polarity::Pos))
        .collect();
    let justification = Justification {
        rule: rule.id.clone(),
        bindings: full.clone(),
        premises,
    };
    let provenance = Provenance::Inferred {
        rule: rule.id.clone(),
        tick: config.tick,
    };

    let mut heads: Vec<Statement> = Vec::new();
    for fresh in &rule.head_new {
        for tag in &fresh.tags {
            heads.push(Statement::new(
                Polarity::Pos,
                ISA,
                full[&fresh.var].clone(),
                tag.as_str(),
            ));
        }
    }
    for h in &rule.head_atoms {
        let polarity = if h.negated { Polarity::Neg } else { Polarity::Pos };
        heads.push(ground(&h.atom, &full, polarity));
    }
    for st in heads {
        let triple = st.clone().with(provenance.clone());
        match store.assert_justified(triple.clone(), justification.clone())? {
            AssertOutcome::Added => result.added.push(st),
            AssertOutcome::Duplicate => {}
            AssertOutcome::Conflict => result.conflicts.push(triple),
        }
    }
    Ok(result)
}

/// Saturates `store` under `rules`.
pub fn run_to_fixpoint(
    store: &mut BeliefStore,
    rules: &[Rule],
    scope: &NafScope,
    config: &EngineConfig,
) -> Result<FixpointReport, EngineError> {
    validate(store, rules)?;
    let frontiers: Vec<Vec<String>> = rules.iter().map(Rule::frontier).collect();
    let mut report = FixpointReport::default();
    let mut fired: BTreeSet<(usize, Bindings)> = BTreeSet::new();
    let mut delta: Option<Delta> = None;

    loop {
        if report.iterations >= config.max_iterations {
            return Err(EngineError::IterationCap(config.max_iterations));
        }
        report.iterations += 1;

        let mut pending: Vec<(usize, Bindings)> = Vec::new();
        for (i, rule) in rules.iter().enumerate() {
            for env in matches(store, scope, rule, delta.as_ref()) {
                if !fired.contains(&(i, env.clone())) {
                    pending.push((i, env));
                }
            }
        }

        let mut next: Delta = BTreeMap::new();
        for (i, env) in pending {
            let applied = apply(store, &rules[i], &frontiers[i], &env, config)?;
            if applied.capped {
                report.depth_capped += 1;
                fired.insert((i, env));
                continue;
            }
            report.minted += applied.minted;
            report.conflicts.extend(applied.conflicts);
            for st in applied.added {
                report.derived += 1;
                if st.polarity == Polarity::Pos {
                    next.entry(st.predicate)
                        .or_default()
                        .push((st.subject, st.object));
                }
            }
            report.firings.push(Firing {
                rule: rules[i].id.clone(),
                bindings: env.clone(),
            });
            fired.insert((i, env));
        }
        log::trace!(
            "iteration {}: {} new positive triples",
            report.iterations,
            next.values().map(Vec::len).sum::<usize>()
        );
        if next.is_empty() {
            report.reached_fixpoint = true;
            return Ok(report);
        }
        delta = Some(next);
    }
}

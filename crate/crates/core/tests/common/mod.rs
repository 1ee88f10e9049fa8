//! Shared test oracles: a brute-force naive evaluator, random rule sets and
//! a cell-by-cell placement check.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use hanger_core::rules::{parse_rules, Atom, Builtin, NafScope, Rule, Term};
use hanger_core::store::{
    BeliefStore, Bindings, EntityId, EntityKind, Polarity, Provenance, ReifyKey, Statement,
    Vocabulary, ISA,
};
use hanger_core::world::{Pose, World};
use proptest::prelude::*;

const ENTITIES: [&str; 4] = ["e0", "e1", "e2", "e3"];
const VARS: [&str; 3] = ["x", "y", "z"];

pub fn vocab() -> Vocabulary {
    let mut v = Vocabulary::empty();
    v.declare_predicate("p", true);
    v.declare_predicate("q", false);
    v.declare_predicate("r", false);
    v.declare_class("A");
    v.declare_class("B");
    v
}

pub fn base_store(facts: &[(usize, usize, usize)]) -> BeliefStore {
    let mut store = BeliefStore::new(vocab());
    for e in ENTITIES {
        store.register(e, EntityKind::Object).unwrap();
    }
    for &(p, s, o) in facts {
        let st = match p {
            0 => Statement::pos("p", ENTITIES[s], ENTITIES[o]),
            1 => Statement::pos("q", ENTITIES[s], ENTITIES[o]),
            _ => Statement::pos(ISA, ENTITIES[s], "A"),
        };
        store.assert_triple(st.with(Provenance::Asserted)).unwrap();
    }
    store
}

// ---- naive oracle ----

fn value(term: &Term, env: &Bindings) -> EntityId {
    match term {
        Term::Const(c) => EntityId::new(c.as_str()),
        Term::Var(v) => env[v].clone(),
    }
}

fn spo(atom: &Atom, env: &Bindings) -> (String, EntityId, EntityId) {
    if atom.args.len() == 1 {
        (ISA.into(), value(&atom.args[0], env), EntityId::new(atom.predicate.as_str()))
    } else {
        (atom.predicate.clone(), value(&atom.args[0], env), value(&atom.args[1], env))
    }
}

fn assignments(vars: &[String], domain: &[EntityId]) -> Vec<Bindings> {
    let mut out = vec![Bindings::new()];
    for v in vars {
        out = out
            .into_iter()
            .flat_map(|env| {
                domain.iter().map(move |d| {
                    let mut e = env.clone();
                    e.insert(v.clone(), d.clone());
                    e
                })
            })
            .collect();
    }
    out
}

fn body_holds(store: &BeliefStore, scope: &NafScope, rule: &Rule, env: &Bindings) -> bool {
    let pos = rule.body_pos.iter().all(|a| {
        let (p, s, o) = spo(a, env);
        store.has_pos(&p, &s, &o)
    });
    let builtins = rule.body_builtins.iter().all(|b| match b {
        Builtin::NotEqual(x, y) => value(x, env) != value(y, env),
        Builtin::Opp(..) => unreachable!("not generated"),
    });
    let neg = rule.body_neg.iter().all(|a| {
        let (p, s, o) = spo(a, env);
        let scoped = !store.vocabulary().is_perceived(&p) || scope.covers(&p, &s);
        scoped && !store.has_pos(&p, &s, &o)
    });
    pos && builtins && neg
}

pub fn naive(store: &mut BeliefStore, rules: &[Rule], scope: &NafScope, cap: u32) {
    loop {
        let before = store.len() + store.entities().count();
        let domain: Vec<EntityId> = store.entities().map(|r| r.id.clone()).collect();
        for rule in rules {
            let vars: Vec<String> = rule.body_vars().into_iter().map(String::from).collect();
            let frontier = rule.frontier();
            for env in assignments(&vars, &domain) {
                if !body_holds(store, scope, rule, &env) {
                    continue;
                }
                let mut full = env.clone();
                let values: Vec<EntityId> = frontier.iter().map(|v| env[v].clone()).collect();
                if !rule.head_new.is_empty() {
                    let depth = 1 + values
                        .iter()
                        .map(|v| store.entity(v).unwrap().depth)
                        .max()
                        .unwrap_or(0);
                    if depth > cap {
                        continue;
                    }
                }
                for f in &rule.head_new {
                    let id = store
                        .reify(f.kind, ReifyKey::new(rule.id.as_str(), f.var.as_str(), values.clone()))
                        .unwrap();
                    for t in &f.tags {
                        store
                            .assert_triple(
                                Statement::new(Polarity::Pos, ISA, id.clone(), t.as_str())
                                    .with(Provenance::Asserted),
                            )
                            .unwrap();
                    }
                    full.insert(f.var.clone(), id);
                }
                for h in &rule.head_atoms {
                    let (p, s, o) = spo(&h.atom, &full);
                    store
                        .assert_triple(Statement::new(Polarity::Pos, p, s, o).with(Provenance::Asserted))
                        .unwrap();
                }
            }
        }
        if store.len() + store.entities().count() == before {
            return;
        }
    }
}

pub fn contents(store: &BeliefStore) -> (BTreeSet<String>, BTreeSet<EntityId>) {
    (
        store.triples().iter().map(|t| t.statement().to_string()).collect(),
        store.entities().map(|r| r.id.clone()).collect(),
    )
}

// ---- generators ----

fn atom_strategy(binary_preds: &'static [&'static str]) -> impl Strategy<Value = String> {
    prop_oneof![
        (prop::sample::select(binary_preds), 0..3usize, 0..3usize)
            .prop_map(|(p, a, b)| format!("{p}(?{}, ?{})", VARS[a], VARS[b])),
        (prop::sample::select(&["A", "B"][..]), 0..3usize)
            .prop_map(|(c, a)| format!("{c}(?{})", VARS[a])),
    ]
}

/// Rules are generated as text and kept only if they parse, so every
/// generated rule satisfies range restriction and safe negation.
fn rule_text(id: usize) -> impl Strategy<Value = String> {
    (
        prop::collection::vec(atom_strategy(&["p", "q", "r"]), 1..3),
        prop::option::of((0..3usize, 0..3usize)),
        prop::option::of((0..3usize, 0..3usize)),
        any::<bool>(),
        prop::collection::vec((prop::sample::select(&["q", "r"][..]), 0..4usize, 0..4usize), 1..3),
        prop::option::of(prop::sample::select(&["A", "B"][..])),
    )
        .prop_map(move |(body, neg, ne, fresh, heads, tag)| {
            let mut parts = body;
            if let Some((a, b)) = neg {
                parts.push(format!("not p(?{}, ?{})", VARS[a], VARS[b]));
            }
            if let Some((a, b)) = ne {
                parts.push(format!("?{} != ?{}", VARS[a], VARS[b]));
            }
            let mut head = Vec::new();
            if fresh {
                let tags = tag.map(String::from).unwrap_or_default();
                head.push(format!("new ?n: situation [{tags}]"));
            }
            let name = |i: usize| if i == 3 { "n" } else { VARS[i] };
            for (p, a, b) in heads {
                head.push(format!("{p}(?{}, ?{})", name(a), name(b)));
            }
            format!("rule r{id}: {} => {}", parts.join(", "), head.join(", "))
        })
}

pub fn ruleset() -> impl Strategy<Value = Vec<Rule>> {
    prop::collection::vec(any::<u8>(), 1..=6)
        .prop_flat_map(|ids| {
            ids.iter()
                .enumerate()
                .map(|(i, _)| rule_text(i))
                .collect::<Vec<_>>()
        })
        .prop_map(|texts| {
            texts
                .into_iter()
                .filter_map(|t| parse_rules(&t).ok())
                .flatten()
                .collect()
        })
}

pub fn facts() -> impl Strategy<Value = Vec<(usize, usize, usize)>> {
    prop::collection::vec((0..3usize, 0..4usize, 0..4usize), 0..=20)
}

pub fn scope_strategy() -> impl Strategy<Value = NafScope> {
    prop::collection::vec(any::<bool>(), 4).prop_map(|answered| {
        let mut scope = NafScope::new();
        for (i, a) in answered.iter().enumerate() {
            if *a {
                scope.answer("p", &EntityId::new(ENTITIES[i]));
            }
        }
        scope
    })
}

// ---- placement ----

/// Every translation of the mover, tested cell by cell.
pub fn placement_oracle(w: &World, mover: &str, focus_local: &HashSet<(i32, i32)>, target: &str) -> Vec<Pose> {
    let local: Vec<(i32, i32)> = w.body(mover).unwrap().spec.cells.iter().map(|c| (c.row, c.col)).collect();
    let others: HashSet<(i32, i32)> = w
        .bodies()
        .filter(|b| b.spec.id != mover)
        .flat_map(|b| b.mask().iter().map(|c| (c.row, c.col)).collect::<Vec<_>>())
        .collect();
    let tgt: HashSet<(i32, i32)> = w.body(target).unwrap().mask().iter().map(|c| (c.row, c.col)).collect();
    let mut out = Vec::new();
    for row in -w.rows()..w.rows() {
        for col in -w.cols()..w.cols() {
            let cells: Vec<(i32, i32)> = local.iter().map(|(r, c)| (r + row, c + col)).collect();
            let inside = cells.iter().all(|&(r, c)| r >= 0 && c >= 0 && r < w.rows() && c < w.cols());
            if !inside || cells.iter().any(|c| others.contains(c)) {
                continue;
            }
            let set: HashSet<(i32, i32)> = cells.iter().copied().collect();
            let (mut pairs, mut vertical) = (0, 0);
            for &(r, c) in &tgt {
                for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                    if set.contains(&(r + dr, c + dc)) {
                        pairs += 1;
                        if dr == -1 {
                            vertical += 1;
                        }
                    }
                }
            }
            let focus: Vec<(i32, i32)> = focus_local.iter().map(|(r, c)| (r + row, c + col)).collect();
            let rests = focus.iter().any(|&(r, c)| tgt.contains(&(r + 1, c)));
            if rests && 2 * vertical > pairs {
                out.push(Pose::new(row, col));
            }
        }
    }
    out.sort();
    out
}

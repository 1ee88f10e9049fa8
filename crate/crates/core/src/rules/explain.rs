use crate::store::{BeliefStore, Bindings, Provenance, Statement};

/// How a triple came to be believed. Leaves are perceived or asserted facts
/// (or inferred facts whose justification was not kept, e.g. after a reload).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Derivation {
    pub statement: Statement,
    pub provenance: Provenance,
    pub rule: Option<String>,
    pub bindings: Bindings,
    pub premises: Vec<Derivation>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExplainError {
    #[error("`{0}` is not in the store")]
    NotPresent(Statement),
    #[error("`{0}` is not inferred")]
    NotInferred(Statement),
}

impl Derivation {
    pub fn leaves(&self) -> Vec<&Derivation> {
        if self.premises.is_empty() {
            return vec![self];
        }
        self.premises.iter().flat_map(Derivation::leaves).collect()
    }

    pub fn depth(&self) -> usize {
        1 + self.premises.iter().map(Derivation::depth).max().unwrap_or(0)
    }

    /// Indented tree, one node per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(0, &mut out);
        out
    }

    fn render_into(&self, indent: usize, out: &mut String) {
        out.push_str(&"  ".repeat(indent));
        out.push_str(&self.statement.to_string());
        match &self.rule {
            Some(rule) => {
                let bindings: Vec<String> =
                    self.bindings.iter().map(|(k, v)| format!("?{k}={v}")).collect();
                out.push_str(&format!("  <= {rule} {{{}}}", bindings.join(", ")));
            }
            None => out.push_str(&format!("  [{}]", self.provenance)),
        }
        out.push('\n');
        for p in &self.premises {
            p.render_into(indent + 1, out);
        }
    }
}

pub fn explain(store: &BeliefStore, statement: &Statement) -> Result<Derivation, ExplainError> {
    let provenance = store
        .provenance(statement)
        .ok_or_else(|| ExplainError::NotPresent(statement.clone()))?;
    if !matches!(provenance, Provenance::Inferred { .. }) {
        return Err(ExplainError::NotInferred(statement.clone()));
    }
    Ok(build(store, statement))
}

fn build(store: &BeliefStore, statement: &Statement) -> Derivation {
    let provenance = store
        .provenance(statement)
        .cloned()
        .unwrap_or(Provenance::Asserted);
    match store.justification(statement) {
        Some(j) => Derivation {
            statement: statement.clone(),
            provenance,
            rule: Some(j.rule.clone()),
            bindings: j.bindings.clone(),
            premises: j.premises.iter().map(|p| build(store, p)).collect(),
        },
        None => Derivation {
            statement: statement.clone(),
            provenance,
            rule: None,
            bindings: Bindings::new(),
            premises: Vec::new(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{parse_rules, run_to_fixpoint, EngineConfig, NafScope};
    use crate::store::{EntityKind, Vocabulary, ISA};

    #[test]
    fn gravity_tree_and_perceived_leaf() {
        let mut store = BeliefStore::new(Vocabulary::support_theory());
        store.register("mug1", EntityKind::Object).unwrap();
        store
            .assert_triple(Statement::pos(ISA, "mug1", "Obj").with(Provenance::Perceived { tick: 0 }))
            .unwrap();
        let rules =
            parse_rules("rule gravity: Obj(?o) => new ?f: force [Grv], exrt(floor, ?f), aff(?f, ?o)")
                .unwrap();
        run_to_fixpoint(&mut store, &rules, &NafScope::new(), &EngineConfig::default()).unwrap();
        let (f, _) = store
            .pos_pairs("aff", None, Some(&"mug1".into()))
            .next()
            .map(|(a, b)| (a.clone(), b.clone()))
            .unwrap();
        let st = Statement::new(crate::store::Polarity::Pos, "aff", f, "mug1");
        let tree = explain(&store, &st).unwrap();
        assert_eq!(tree.rule.as_deref(), Some("gravity"));
        assert_eq!(tree.depth(), 2);
        assert_eq!(tree.premises[0].statement, Statement::pos(ISA, "mug1", "Obj"));
        assert!(tree.render().contains("<= gravity"));

        let perceived = Statement::pos(ISA, "mug1", "Obj");
        assert_eq!(explain(&store, &perceived), Err(ExplainError::NotInferred(perceived)));
        let missing = Statement::pos(ISA, "mug1", "Hook");
        assert_eq!(explain(&store, &missing), Err(ExplainError::NotPresent(missing)));
    }
}

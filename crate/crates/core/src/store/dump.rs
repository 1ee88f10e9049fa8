//! Line-oriented dump format:
//! `<polarity> <predicate> <subject> <object> # <provenance>`, sorted.

use super::{
    AssertOutcome, BeliefStore, EntityId, EntityKind, Origin, Provenance, Statement, StoreError,
    Vocabulary,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LoadError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Store { line: usize, source: StoreError },
    #[error("line {line}: contradicts an earlier line")]
    Conflict { line: usize },
}

impl BeliefStore {
    pub fn dump(&self) -> String {
        let mut lines: Vec<String> = self.triples().iter().map(ToString::to_string).collect();
        lines.sort();
        let mut out = lines.join("\n");
        if !out.is_empty() {
            out.push('\n');
        }
        out
    }

    /// Rebuilds a store from a dump. Entities are registered on first mention:
    /// reified ids recover their kind from the id prefix, vocabulary constants
    /// keep their declared kind, everything else is an object.
    pub fn load(text: &str, vocab: Vocabulary) -> Result<BeliefStore, LoadError> {
        let mut store = BeliefStore::new(vocab);
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let (body, prov) = match raw.split_once('#') {
                Some((b, p)) => (b.trim(), Some(p.trim())),
                None => (raw.trim(), None),
            };
            if body.is_empty() {
                continue;
            }
            let statement: Statement = body
                .parse()
                .map_err(|message| LoadError::Syntax { line, message })?;
            let provenance = match prov {
                Some(p) if !p.is_empty() => p
                    .parse::<Provenance>()
                    .map_err(|message| LoadError::Syntax { line, message })?,
                _ => Provenance::Asserted,
            };
            for id in [&statement.subject, &statement.object] {
                store
                    .ensure_entity(id)
                    .map_err(|source| LoadError::Store { line, source })?;
            }
            match store
                .assert_triple(statement.with(provenance))
                .map_err(|source| LoadError::Store { line, source })?
            {
                AssertOutcome::Conflict => return Err(LoadError::Conflict { line }),
                AssertOutcome::Added | AssertOutcome::Duplicate => {}
            }
        }
        Ok(store)
    }

    fn ensure_entity(&mut self, id: &EntityId) -> Result<(), StoreError> {
        if self.contains_entity(id) {
            return Ok(());
        }
        match id.origin() {
            Origin::Reified => {
                let kind = id.reified_kind().unwrap_or(EntityKind::Object);
                self.register_record(super::EntityRecord {
                    id: id.clone(),
                    kind,
                    class_tags: Default::default(),
                    depth: 1,
                    key: None,
                })
            }
            Origin::Named => {
                let kind = self
                    .vocabulary()
                    .constant_kind(id.as_str())
                    .unwrap_or(EntityKind::Object);
                self.register(id.as_str(), kind).map(|_| ())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::ReifyKey;

    #[test]
    fn dump_is_sorted_and_reloads() {
        let mut store = BeliefStore::new(Vocabulary::support_theory());
        store.register("mug1", EntityKind::Object).unwrap();
        store.register("hook1", EntityKind::Object).unwrap();
        let f = store
            .reify(EntityKind::Force, ReifyKey::new("gravity", "f", vec!["mug1".into()]))
            .unwrap();
        for s in [
            Statement::pos("contacts", "mug1", "hook1").with(Provenance::Perceived { tick: 3 }),
            Statement::neg("contacts", "mug1", "floor").with(Provenance::Perceived { tick: 3 }),
            Statement::new(crate::store::Polarity::Pos, "aff", f.clone(), "mug1").with(
                Provenance::Inferred {
                    rule: "gravity".into(),
                    tick: 3,
                },
            ),
            Statement::pos("isa", "mug1", "Mug").with(Provenance::Asserted),
        ] {
            store.assert_triple(s).unwrap();
        }
        let text = store.dump();
        let lines: Vec<&str> = text.lines().collect();
        let mut sorted = lines.clone();
        sorted.sort();
        assert_eq!(lines, sorted);
        assert!(text.contains("pos contacts mug1 hook1 # perceived@3"));

        let reloaded = BeliefStore::load(&text, Vocabulary::support_theory()).unwrap();
        assert_eq!(reloaded.dump(), text);
        assert_eq!(reloaded.entity(&f).unwrap().kind, EntityKind::Force);
        assert!(reloaded.is_a(&"mug1".into(), "Mug"));
    }

    #[test]
    fn load_reports_line_numbers() {
        let err = BeliefStore::load("pos contacts a b\nbogus line", Vocabulary::support_theory())
            .unwrap_err();
        assert!(matches!(err, LoadError::Syntax { line: 2, .. }));
        let err = BeliefStore::load(
            "pos contacts a b\nneg contacts a b",
            Vocabulary::support_theory(),
        )
        .unwrap_err();
        assert_eq!(err, LoadError::Conflict { line: 2 });
    }
}

//! Dependency queries: which entities every path between two others must use.
//!
//! The belief graph is undirected: entities are nodes, each positive triple is
//! an edge between its subject and object. A node is necessary for `a` and `b`
//! to stay connected exactly when it separates them, i.e. it is an
//! articulation point lying on the DFS tree path from `a` to `b` whose child
//! subtree on that path cannot reach above it.

use std::collections::{BTreeMap, BTreeSet};

use super::{BeliefStore, EntityId, StoreError};

impl BeliefStore {
    /// Undirected adjacency lists over all registered entities.
    pub fn adjacency(&self) -> BTreeMap<EntityId, BTreeSet<EntityId>> {
        let mut adj: BTreeMap<EntityId, BTreeSet<EntityId>> = self
            .entities()
            .map(|r| (r.id.clone(), BTreeSet::new()))
            .collect();
        for (_, s, o) in self.pos.keys() {
            if s == o {
                continue;
            }
            adj.entry(s.clone()).or_default().insert(o.clone());
            adj.entry(o.clone()).or_default().insert(s.clone());
        }
        adj
    }

    /// Every entity other than `a` and `b` that lies on all paths between them.
    /// Empty when they are disconnected or joined by redundant routes.
    pub fn dependency_query(&self, a: &EntityId, b: &EntityId) -> Result<BTreeSet<EntityId>, StoreError> {
        for id in [a, b] {
            if !self.contains_entity(id) {
                return Err(StoreError::UnregisteredEntity(id.clone()));
            }
        }
        if a == b {
            return Err(StoreError::SameEndpoints(a.clone()));
        }
        let adj = self.adjacency();
        Ok(separators(&adj, a, b))
    }
}

fn separators(adj: &BTreeMap<EntityId, BTreeSet<EntityId>>, a: &EntityId, b: &EntityId) -> BTreeSet<EntityId> {
    let ids: Vec<&EntityId> = adj.keys().collect();
    let index: BTreeMap<&EntityId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let neighbors: Vec<Vec<usize>> = ids
        .iter()
        .map(|id| adj[*id].iter().map(|n| index[n]).collect())
        .collect();

    let n = ids.len();
    let (root, target) = (index[a], index[b]);
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![usize::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut timer = 0;

    // Iterative DFS; each frame is (node, next neighbour position).
    disc[root] = timer;
    low[root] = timer;
    timer += 1;
    let mut stack = vec![(root, 0usize)];
    while let Some(&mut (v, ref mut pos)) = stack.last_mut() {
        if *pos < neighbors[v].len() {
            let w = neighbors[v][*pos];
            *pos += 1;
            if disc[w] == usize::MAX {
                parent[w] = v;
                disc[w] = timer;
                low[w] = timer;
                timer += 1;
                stack.push((w, 0));
            } else if w != parent[v] {
                low[v] = low[v].min(disc[w]);
            }
        } else {
            stack.pop();
            if let Some(&(p, _)) = stack.last() {
                low[p] = low[p].min(low[v]);
            }
        }
    }

    let mut out = BTreeSet::new();
    if disc[target] == usize::MAX {
        return out;
    }
    let mut child = target;
    let mut v = parent[target];
    while v != root {
        if low[child] >= disc[v] {
            out.insert(ids[v].clone());
        }
        child = v;
        v = parent[v];
    }
    out
}

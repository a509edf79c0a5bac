use std::collections::HashMap;

use super::{Direction, EntityId, KnowledgeGraph, RelationId};

/// `(source, relation, direction)`; the relation is the one stored in the triple.
pub type FilterKey = (EntityId, RelationId, Direction);

/// Known answers for every `(source, relation, direction)` across all splits.
///
/// For each triple `(h, r, t)` in any split, `t` is indexed under
/// `(h, r, fwd)` and `h` under `(t, r, bwd)`.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    answers: HashMap<FilterKey, Vec<EntityId>>,
}

impl FilterIndex {
    pub fn build(graph: &KnowledgeGraph) -> Self {
        let mut answers: HashMap<FilterKey, Vec<EntityId>> = HashMap::new();
        for t in graph.all_triples() {
            answers
                .entry((t.head, t.relation, Direction::Forward))
                .or_default()
                .push(t.tail);
            answers
                .entry((t.tail, t.relation, Direction::Backward))
                .or_default()
                .push(t.head);
        }
        for list in answers.values_mut() {
            list.sort_unstable();
            list.dedup();
        }
        Self { answers }
    }

    /// Sorted known answers; empty for keys never seen.
    pub fn get(&self, source: EntityId, relation: RelationId, direction: Direction) -> &[EntityId] {
        self.answers
            .get(&(source, relation, direction))
            .map_or(&[], Vec::as_slice)
    }

    pub fn contains(
        &self,
        source: EntityId,
        relation: RelationId,
        direction: Direction,
        answer: EntityId,
    ) -> bool {
        self.get(source, relation, direction)
            .binary_search(&answer)
            .is_ok()
    }

    /// Every entity known to complete `(source, posed, ?)`.
    ///
    /// `posed` is the relation as the query states it (`r` for forward
    /// queries, `r'` for backward ones). An answer is known if
    /// `(source, posed, x)` or `(x, inverse(posed), source)` is a triple, so
    /// both directions contribute regardless of how the query was built.
    pub fn known_answers(
        &self,
        source: EntityId,
        posed: RelationId,
        posed_inverse: RelationId,
    ) -> Vec<EntityId> {
        let mut out: Vec<EntityId> = self
            .get(source, posed, Direction::Forward)
            .iter()
            .chain(self.get(source, posed_inverse, Direction::Backward))
            .copied()
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn num_keys(&self) -> usize {
        self.answers.len()
    }
}

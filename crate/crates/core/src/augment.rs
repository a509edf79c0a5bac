//! Inverse-relation registry and graph symmetrization.
//!
//! Each triple `(h, r, t)` yields two first-class queries: `(h, r, ?) → t`
//! and `(t, r', ?) → h`, where `r'` is the curated inverse of `r` rather
//! than a `"reverse "`-prefixed copy of it.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kg::{Direction, EntityId, KnowledgeGraph, RelationId, Split};

const WN18RR_REGISTRY: &str = include_str!("../data/wn18rr.relations.json");
const FB15K237_REGISTRY: &str = include_str!("../data/fb15k237.relations.json");

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("failed to read registry {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("registry is not a valid relation array: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("relation {0:?} is registered twice")]
    Duplicate(String),
    #[error("relation {0:?} has an empty name")]
    EmptyName(String),
    #[error("relation {raw_key:?} names inverse {inverse:?}, which is not registered")]
    DanglingInverse { raw_key: String, inverse: String },
    #[error("inverse mapping is not an involution: {raw_key:?} -> {inverse:?} -> {back:?}")]
    NotInvolution {
        raw_key: String,
        inverse: String,
        back: String,
    },
    #[error("relation {raw_key:?} gives inverse name {stated:?} but {inverse:?} is named {actual:?}")]
    InverseNameMismatch {
        raw_key: String,
        inverse: String,
        stated: String,
        actual: String,
    },
    #[error("relation {0:?} is not registered")]
    Unregistered(String),
}

/// One line of `relations.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub raw_key: String,
    pub name: String,
    pub inverse_raw_key: String,
    pub inverse_name: String,
    /// Where the wording comes from, e.g. `"curated"` or `"authored"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<String>,
}

impl RegistryEntry {
    pub fn new(raw_key: &str, name: &str, inverse_raw_key: &str, inverse_name: &str) -> Self {
        Self {
            raw_key: raw_key.to_string(),
            name: name.to_string(),
            inverse_raw_key: inverse_raw_key.to_string(),
            inverse_name: inverse_name.to_string(),
            origin: None,
        }
    }

    pub fn is_self_inverse(&self) -> bool {
        self.raw_key == self.inverse_raw_key
    }
}

/// Validated mapping from raw relation keys to verbalized names and inverses.
#[derive(Debug, Clone)]
pub struct InverseRegistry {
    entries: Vec<RegistryEntry>,
    index: HashMap<String, usize>,
}

impl InverseRegistry {
    pub fn from_entries(entries: Vec<RegistryEntry>) -> Result<Self, RegistryError> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.name.trim().is_empty() {
                return Err(RegistryError::EmptyName(e.raw_key.clone()));
            }
            if index.insert(e.raw_key.clone(), i).is_some() {
                return Err(RegistryError::Duplicate(e.raw_key.clone()));
            }
        }
        for e in &entries {
            let Some(&j) = index.get(&e.inverse_raw_key) else {
                return Err(RegistryError::DanglingInverse {
                    raw_key: e.raw_key.clone(),
                    inverse: e.inverse_raw_key.clone(),
                });
            };
            let inv = &entries[j];
            if inv.inverse_raw_key != e.raw_key {
                return Err(RegistryError::NotInvolution {
                    raw_key: e.raw_key.clone(),
                    inverse: inv.raw_key.clone(),
                    back: inv.inverse_raw_key.clone(),
                });
            }
            if inv.name != e.inverse_name {
                return Err(RegistryError::InverseNameMismatch {
                    raw_key: e.raw_key.clone(),
                    inverse: inv.raw_key.clone(),
                    stated: e.inverse_name.clone(),
                    actual: inv.name.clone(),
                });
            }
        }
        Ok(Self { entries, index })
    }

    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        Self::from_entries(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// The curated WN18RR table: all 11 relations and their inverses.
    pub fn wn18rr() -> Self {
        Self::from_json(WN18RR_REGISTRY).expect("bundled WN18RR registry is valid")
    }

    /// FB15k-237 sentence forms; entries without `"origin": "curated"` are
    /// authored completions in the same style.
    pub fn fb15k237() -> Self {
        Self::from_json(FB15K237_REGISTRY).expect("bundled FB15k-237 registry is valid")
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, raw_key: &str) -> Result<&RegistryEntry, RegistryError> {
        self.index
            .get(raw_key)
            .map(|&i| &self.entries[i])
            .ok_or_else(|| RegistryError::Unregistered(raw_key.to_string()))
    }

    /// First entry whose verbalized name matches.
    pub fn find_by_name(&self, name: &str) -> Option<&RegistryEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Raw key of the inverse relation.
    pub fn invert(&self, raw_key: &str) -> Result<&str, RegistryError> {
        Ok(&self.get(raw_key)?.inverse_raw_key)
    }

    /// `(name, inverse_name)` sentence forms for a raw relation key.
    pub fn verbalize(&self, raw_key: &str) -> Result<(&str, &str), RegistryError> {
        let e = self.get(raw_key)?;
        Ok((&e.name, &e.inverse_name))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("registry serializes")
    }
}

/// A directed completion task produced by symmetrization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Query {
    pub source: EntityId,
    /// The relation as posed: `r` for forward queries, `r'` for backward ones.
    pub relation: RelationId,
    pub direction: Direction,
    pub answer: EntityId,
}

/// Maps a graph relation id to the id of its registered inverse.
pub fn invert_relation(
    registry: &InverseRegistry,
    graph: &KnowledgeGraph,
    relation: RelationId,
) -> Result<RelationId, RegistryError> {
    let raw = &graph.relation(relation).raw_key;
    let inverse = registry.invert(raw)?;
    graph
        .relation_id(inverse)
        .ok_or_else(|| RegistryError::Unregistered(inverse.to_string()))
}

pub fn verbalize_relation<'r>(
    registry: &'r InverseRegistry,
    raw_key: &str,
) -> Result<(&'r str, &'r str), RegistryError> {
    registry.verbalize(raw_key)
}

/// Two queries per triple of `split`, in triple order, forward first.
pub fn symmetrize(
    graph: &KnowledgeGraph,
    registry: &InverseRegistry,
    split: Split,
) -> Result<Vec<Query>, RegistryError> {
    let triples = graph.split(split);
    let mut inverse_cache: HashMap<RelationId, RelationId> = HashMap::new();
    let mut queries = Vec::with_capacity(2 * triples.len());
    for t in triples {
        let inverse = match inverse_cache.get(&t.relation) {
            Some(&r) => r,
            None => {
                let r = invert_relation(registry, graph, t.relation)?;
                inverse_cache.insert(t.relation, r);
                r
            }
        };
        queries.push(Query {
            source: t.head,
            relation: t.relation,
            direction: Direction::Forward,
            answer: t.tail,
        });
        queries.push(Query {
            source: t.tail,
            relation: inverse,
            direction: Direction::Backward,
            answer: t.head,
        });
    }
    Ok(queries)
}

//! Knowledge-graph datasets: interned entities and relations, train/valid/test
//! triple splits, the filtered-ranking index and the synthetic fixture generator.

mod filter;
mod load;
mod synth;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::InverseRegistry;

pub use filter::{FilterIndex, FilterKey};
pub use load::{load_dataset, load_dataset_with_registry, DatasetLayout};
pub use synth::{generate_synthetic_kg, synthesize, SynthDataset};

#[derive(Debug, thiserror::Error)]
pub enum KgError {
    #[error("missing dataset file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("failed to read {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{location}: malformed line: {reason}")]
    Malformed { location: String, reason: String },
    #[error("{location}: triple references undeclared entity {key:?}")]
    UndeclaredEntity { location: String, key: String },
    #[error("{location}: triple references undeclared relation {key:?}")]
    UndeclaredRelation { location: String, key: String },
    #[error("{location}: duplicate entity key {key:?}")]
    DuplicateEntity { location: String, key: String },
    #[error("{location}: entity {key:?} has an empty name")]
    EmptyName { location: String, key: String },
    #[error("triple ({head}, {relation}, {tail}) appears in both the {first} and {second} splits")]
    OverlappingSplits {
        head: String,
        relation: String,
        tail: String,
        first: Split,
        second: Split,
    },
    #[error("invalid synthetic dataset arguments: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Registry(#[from] crate::augment::RegistryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Which side of a triple a query asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    /// `(h, r, ?)`
    #[serde(rename = "fwd")]
    Forward,
    /// `(?, r, t)`, posed as `(t, r', ?)`
    #[serde(rename = "bwd")]
    Backward,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "fwd",
            Direction::Backward => "bwd",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fwd" | "forward" => Ok(Direction::Forward),
            "bwd" | "backward" => Ok(Direction::Backward),
            other => Err(format!("unknown direction {other:?} (expected fwd or bwd)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "dev" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train, valid or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub id: EntityId,
    pub raw_key: String,
    pub name: String,
    pub description: String,
}

impl Entity {
    /// Text fed to the encoders: `name: description`.
    pub fn text(&self) -> String {
        format!("{}: {}", self.name, self.description)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub id: RelationId,
    pub raw_key: String,
    pub name: String,
    pub inverse_id: RelationId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// An immutable, interned knowledge graph with its three triple splits.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    dataset_id: String,
    entities: Vec<Entity>,
    relations: Vec<Relation>,
    entity_index: HashMap<String, EntityId>,
    relation_index: HashMap<String, RelationId>,
    splits: [Vec<Triple>; 3],
}

impl KnowledgeGraph {
    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn entity(&self, id: EntityId) -> &Entity {
        &self.entities[id.index()]
    }

    pub fn relation(&self, id: RelationId) -> &Relation {
        &self.relations[id.index()]
    }

    pub fn entity_id(&self, raw_key: &str) -> Option<EntityId> {
        self.entity_index.get(raw_key).copied()
    }

    pub fn relation_id(&self, raw_key: &str) -> Option<RelationId> {
        self.relation_index.get(raw_key).copied()
    }

    pub fn inverse_of(&self, id: RelationId) -> RelationId {
        self.relation(id).inverse_id
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        &self.splits[split.slot()]
    }

    /// All triples of all splits, train first.
    pub fn all_triples(&self) -> impl Iterator<Item = &Triple> {
        self.splits.iter().flatten()
    }

    /// Relations that occur in at least one triple, in id order.
    pub fn relations_in_use(&self) -> Vec<RelationId> {
        let used: HashSet<RelationId> = self.all_triples().map(|t| t.relation).collect();
        let mut ids: Vec<RelationId> = used.into_iter().collect();
        ids.sort_unstable();
        ids
    }
}

/// Incremental construction of a [`KnowledgeGraph`].
///
/// Relations are interned from the registry in file order; entities in the
/// order they are added.
#[derive(Debug)]
pub struct GraphBuilder {
    dataset_id: String,
    entities: Vec<Entity>,
    relations: Vec<Relation>,
    entity_index: HashMap<String, EntityId>,
    relation_index: HashMap<String, RelationId>,
    splits: [Vec<Triple>; 3],
}

impl GraphBuilder {
    pub fn new(dataset_id: impl Into<String>, registry: &InverseRegistry) -> Self {
        let mut relation_index = HashMap::new();
        for (i, entry) in registry.entries().iter().enumerate() {
            relation_index.insert(entry.raw_key.clone(), RelationId(i as u32));
        }
        let relations = registry
            .entries()
            .iter()
            .enumerate()
            .map(|(i, entry)| Relation {
                id: RelationId(i as u32),
                raw_key: entry.raw_key.clone(),
                name: entry.name.clone(),
                // validated registries always resolve their inverse
                inverse_id: relation_index[&entry.inverse_raw_key],
            })
            .collect();
        Self {
            dataset_id: dataset_id.into(),
            entities: Vec::new(),
            relations,
            entity_index: HashMap::new(),
            relation_index,
            splits: Default::default(),
        }
    }

    pub fn add_entity(&mut self, raw_key: &str, name: &str, description: &str) -> Result<EntityId, KgError> {
        self.add_entity_at(raw_key, name, description, "<builder>")
    }

    fn add_entity_at(
        &mut self,
        raw_key: &str,
        name: &str,
        description: &str,
        location: &str,
    ) -> Result<EntityId, KgError> {
        if self.entity_index.contains_key(raw_key) {
            return Err(KgError::DuplicateEntity {
                location: location.to_string(),
                key: raw_key.to_string(),
            });
        }
        if name.trim().is_empty() {
            return Err(KgError::EmptyName {
                location: location.to_string(),
                key: raw_key.to_string(),
            });
        }
        let id = EntityId(self.entities.len() as u32);
        self.entities.push(Entity {
            id,
            raw_key: raw_key.to_string(),
            name: name.to_string(),
            description: description.to_string(),
        });
        self.entity_index.insert(raw_key.to_string(), id);
        Ok(id)
    }

    pub fn add_triple(
        &mut self,
        split: Split,
        head: &str,
        relation: &str,
        tail: &str,
    ) -> Result<(), KgError> {
        self.add_triple_at(split, head, relation, tail, "<builder>")
    }

    fn add_triple_at(
        &mut self,
        split: Split,
        head: &str,
        relation: &str,
        tail: &str,
        location: &str,
    ) -> Result<(), KgError> {
        let entity = |key: &str| {
            self.entity_index
                .get(key)
                .copied()
                .ok_or_else(|| KgError::UndeclaredEntity {
                    location: location.to_string(),
                    key: key.to_string(),
                })
        };
        let head = entity(head)?;
        let tail = entity(tail)?;
        let relation =
            self.relation_index
                .get(relation)
                .copied()
                .ok_or_else(|| KgError::UndeclaredRelation {
                    location: location.to_string(),
                    key: relation.to_string(),
                })?;
        self.splits[split.slot()].push(Triple { head, relation, tail });
        Ok(())
    }

    /// Deduplicates each split (keeping first occurrences) and checks that the
    /// splits are pairwise disjoint.
    pub fn build(mut self) -> Result<KnowledgeGraph, KgError> {
        let mut owner: HashMap<Triple, Split> = HashMap::new();
        for split in Split::ALL {
            let triples = std::mem::take(&mut self.splits[split.slot()]);
            let before = triples.len();
            let mut seen = HashSet::with_capacity(before);
            let kept: Vec<Triple> = triples.into_iter().filter(|t| seen.insert(*t)).collect();
            if kept.len() < before {
                log::warn!(
                    "{}: dropped {} duplicate triple(s) from the {split} split",
                    self.dataset_id,
                    before - kept.len()
                );
            }
            for t in &kept {
                if let Some(&first) = owner.get(t) {
                    return Err(KgError::OverlappingSplits {
                        head: self.entities[t.head.index()].raw_key.clone(),
                        relation: self.relations[t.relation.index()].raw_key.clone(),
                        tail: self.entities[t.tail.index()].raw_key.clone(),
                        first,
                        second: split,
                    });
                }
                owner.insert(*t, split);
            }
            self.splits[split.slot()] = kept;
        }
        Ok(KnowledgeGraph {
            dataset_id: self.dataset_id,
            entities: self.entities,
            relations: self.relations,
            entity_index: self.entity_index,
            relation_index: self.relation_index,
            splits: self.splits,
        })
    }
}

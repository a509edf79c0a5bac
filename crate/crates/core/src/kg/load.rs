use std::fs;
use std::path::{Path, PathBuf};

use super::{GraphBuilder, KgError, KnowledgeGraph, Split};
use crate::augment::InverseRegistry;

/// File names making up a dataset directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetLayout {
    pub train: String,
    pub valid: String,
    pub test: String,
    pub entities: String,
    pub relations: String,
}

impl Default for DatasetLayout {
    fn default() -> Self {
        Self {
            train: "train.txt".into(),
            valid: "valid.txt".into(),
            test: "test.txt".into(),
            entities: "entities.tsv".into(),
            relations: "relations.json".into(),
        }
    }
}

impl DatasetLayout {
    pub fn split_file(&self, split: Split) -> &str {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }
}

/// Loads a dataset directory, reading the relation registry from the
/// directory's own relation file.
pub fn load_dataset(dir: &Path, layout: &DatasetLayout) -> Result<KnowledgeGraph, KgError> {
    let registry_path = dir.join(&layout.relations);
    if !registry_path.is_file() {
        return Err(KgError::MissingFile(registry_path));
    }
    let registry = InverseRegistry::from_path(&registry_path)?;
    load_dataset_with_registry(dir, layout, &registry)
}

/// Loads a dataset directory against an externally supplied registry.
pub fn load_dataset_with_registry(
    dir: &Path,
    layout: &DatasetLayout,
    registry: &InverseRegistry,
) -> Result<KnowledgeGraph, KgError> {
    let dataset_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    let mut builder = GraphBuilder::new(dataset_id, registry);

    let entities_path = dir.join(&layout.entities);
    let text = read(&entities_path)?;
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let location = format!("{}:{}", layout.entities, lineno + 1);
        let mut fields = line.splitn(3, '\t');
        let key = fields.next().unwrap_or_default();
        let name = fields.next().ok_or_else(|| KgError::Malformed {
            location: location.clone(),
            reason: "expected entity_key<TAB>name<TAB>description".into(),
        })?;
        let description = fields.next().unwrap_or("");
        builder.add_entity_at(key, name, description, &location)?;
    }

    for split in Split::ALL {
        let file = layout.split_file(split);
        let text = read(&dir.join(file))?;
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let location = format!("{}:{}", file, lineno + 1);
            let fields: Vec<&str> = line.split('\t').collect();
            let [head, relation, tail] = fields[..] else {
                return Err(KgError::Malformed {
                    location,
                    reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            };
            builder.add_triple_at(split, head, relation, tail, &location)?;
        }
    }
    builder.build()
}

fn read(path: &Path) -> Result<String, KgError> {
    if !path.is_file() {
        return Err(KgError::MissingFile(PathBuf::from(path)));
    }
    fs::read_to_string(path).map_err(|source| KgError::Io {
        path: path.to_path_buf(),
        source,
    })
}

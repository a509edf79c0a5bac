use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DescribeError;
use crate::augment::Query;
use crate::kg::{Direction, KnowledgeGraph};

/// Dataset-stable identity of a query, independent of the answer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QueryKey {
    pub source: String,
    pub relation: String,
    pub direction: Direction,
}

impl QueryKey {
    pub fn of(graph: &KnowledgeGraph, query: &Query) -> Self {
        Self {
            source: graph.entity(query.source).raw_key.clone(),
            relation: graph.relation(query.relation).raw_key.clone(),
            direction: query.direction,
        }
    }
}

impl std::fmt::Display for QueryKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.source, self.relation, self.direction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Service,
    Stub,
    Cache,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictiveDescription {
    pub key: QueryKey,
    pub text: String,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: QueryKey,
    text: String,
    provenance: Provenance,
}

/// Append-only JSONL store of generated descriptions. Later lines win.
#[derive(Debug)]
pub struct DescriptionCache {
    path: PathBuf,
    entries: HashMap<QueryKey, (String, Provenance)>,
    writer: Option<BufWriter<File>>,
}

impl DescriptionCache {
    pub fn file_name(dataset_id: &str) -> String {
        format!("descriptions.{dataset_id}.jsonl")
    }

    /// Opens (or prepares to create) a cache file. Nothing is written until
    /// the first insert.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, DescribeError> {
        let path = path.into();
        let mut entries = HashMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|source| DescribeError::Io {
                path: path.clone(),
                source,
            })?;
            let complete = text.ends_with('\n');
            let lines: Vec<&str> = text.lines().collect();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheLine>(line) {
                    Ok(rec) => {
                        entries.insert(rec.key, (rec.text, rec.provenance));
                    }
                    // a crash mid-append leaves at most one torn final line
                    Err(_) if i + 1 == lines.len() && !complete => {
                        log::warn!("{}: ignoring truncated final line", path.display());
                    }
                    Err(e) => {
                        return Err(DescribeError::CacheFormat {
                            path: path.clone(),
                            line: i + 1,
                            message: e.to_string(),
                        })
                    }
                }
            }
        }
        Ok(Self {
            path,
            entries,
            writer: None,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &QueryKey) -> Option<&str> {
        self.entries.get(key).map(|(t, _)| t.as_str())
    }

    /// Provenance recorded when the entry was generated.
    pub fn origin(&self, key: &QueryKey) -> Option<Provenance> {
        self.entries.get(key).map(|(_, p)| *p)
    }

    pub fn insert(
        &mut self,
        key: QueryKey,
        text: String,
        provenance: Provenance,
    ) -> Result<(), DescribeError> {
        let line = serde_json::to_string(&CacheLine {
            key: key.clone(),
            text: text.clone(),
            provenance,
        })
        .expect("cache line serializes");
        let io_err = |source| DescribeError::Io {
            path: self.path.clone(),
            source,
        };
        if self.writer.is_none() {
            if let Some(parent) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(io_err)?;
            }
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)
                .map_err(io_err)?;
            self.writer = Some(BufWriter::new(file));
        }
        let writer = self.writer.as_mut().expect("writer opened above");
        writeln!(writer, "{line}")
            .and_then(|_| writer.flush())
            .map_err(|source| DescribeError::Io {
                path: self.path.clone(),
                source,
            })?;
        self.entries.insert(key, (text, provenance));
        Ok(())
    }

    /// Consistent read-only view of the current contents.
    pub fn snapshot(&self) -> Descriptions {
        Descriptions(
            self.entries
                .iter()
                .map(|(k, (t, _))| (k.clone(), t.clone()))
                .collect(),
        )
    }
}

/// Predictive descriptions keyed by query, as consumed by the encoders.
#[derive(Debug, Clone, Default)]
pub struct Descriptions(HashMap<QueryKey, String>);

impl Descriptions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: QueryKey, text: String) {
        self.0.insert(key, text);
    }

    pub fn get(&self, key: &QueryKey) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn for_query(&self, graph: &KnowledgeGraph, query: &Query) -> Option<&str> {
        self.get(&QueryKey::of(graph, query))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.0.values().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(s: &str) -> QueryKey {
        QueryKey {
            source: s.into(),
            relation: "r".into(),
            direction: Direction::Forward,
        }
    }

    #[test]
    fn reopen_sees_inserted_entries_and_last_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        {
            let mut c = DescriptionCache::open(&path).unwrap();
            c.insert(key("a"), "one".into(), Provenance::Stub).unwrap();
            c.insert(key("a"), "two".into(), Provenance::Service).unwrap();
            c.insert(key("b"), "three".into(), Provenance::Stub).unwrap();
        }
        let c = DescriptionCache::open(&path).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.get(&key("a")), Some("two"));
        assert_eq!(c.origin(&key("a")), Some(Provenance::Service));
    }

    #[test]
    fn line_format_matches_the_file_contract() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut c = DescriptionCache::open(&path).unwrap();
        c.insert(key("a"), "x".into(), Provenance::Stub).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "{\"key\":{\"source\":\"a\",\"relation\":\"r\",\"direction\":\"fwd\"},\"text\":\"x\",\"provenance\":\"stub\"}\n"
        );
    }

    #[test]
    fn torn_final_line_is_tolerated_but_corruption_is_not() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let good = "{\"key\":{\"source\":\"a\",\"relation\":\"r\",\"direction\":\"fwd\"},\"text\":\"x\",\"provenance\":\"stub\"}\n";
        std::fs::write(&path, format!("{good}{{\"key\":{{\"sou")).unwrap();
        assert_eq!(DescriptionCache::open(&path).unwrap().len(), 1);
        std::fs::write(&path, format!("garbage\n{good}")).unwrap();
        assert!(matches!(
            DescriptionCache::open(&path),
            Err(DescribeError::CacheFormat { line: 1, .. })
        ));
    }
}

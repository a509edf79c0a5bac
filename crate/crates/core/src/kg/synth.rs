//! Deterministic synthetic datasets with text that carries predictive signal.
//!
//! Every entity gets two latent attributes, a *clan* and a *kind*, both
//! written into its description. Clans come in fixed partner pairs
//! (0↔1, 2↔3, ...) and each relation links one kind to another:
//! `(h, r, t)` holds iff `clan(t)` is the partner of `clan(h)`,
//! `kind(h) = src(r)` and `kind(t) = dst(r)`. A model that reads the
//! descriptions can therefore recover every triple, while a head never
//! shares its own clan word with any of its answers.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::KgError;
use crate::augment::RegistryEntry;

const CLANS: &[&str] = &[
    "amber", "cobalt", "crimson", "jade", "ivory", "onyx", "saffron", "teal", "umber", "violet", "russet",
    "slate",
];

const KINDS: &[[&str; 3]] = &[
    ["river", "brook", "stream"],
    ["stone", "rock", "pebble"],
    ["tree", "oak", "pine"],
    ["bird", "hawk", "wren"],
    ["star", "comet", "planet"],
    ["shell", "coral", "pearl"],
];

const FILLERS: &[&str] = &[
    "old", "quiet", "bright", "small", "distant", "gentle", "hidden", "proud", "silent", "swift", "ancient",
    "humble", "restless", "curious", "steady", "wild",
];

const RELATION_NAMES: &[(&str, &str)] = &[
    ("trades with", "receives trade from"),
    ("guards", "is guarded by"),
    ("visits", "is visited by"),
    ("follows", "is followed by"),
    ("admires", "is admired by"),
    ("shelters", "is sheltered by"),
    ("teaches", "learns from"),
    ("feeds", "is fed by"),
];

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "kr", "st", "th", "tr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];

/// A generated dataset held in memory, rendered in the on-disk file formats.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthDataset {
    pub train: String,
    pub valid: String,
    pub test: String,
    pub entities: String,
    pub relations: String,
    pub num_triples: usize,
}

impl SynthDataset {
    pub fn write_to(&self, dir: &Path) -> Result<(), KgError> {
        fs::create_dir_all(dir).map_err(|source| KgError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        for (name, body) in [
            ("train.txt", &self.train),
            ("valid.txt", &self.valid),
            ("test.txt", &self.test),
            ("entities.tsv", &self.entities),
            ("relations.json", &self.relations),
        ] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|source| KgError::Io { path, source })?;
        }
        Ok(())
    }
}

struct SynthEntity {
    key: String,
    name: String,
    clan: usize,
    kind: usize,
    description: String,
}

/// Builds the dataset in memory. Identical arguments give identical bytes.
pub fn synthesize(seed: u64, n_entities: usize, n_relations: usize) -> Result<SynthDataset, KgError> {
    if n_entities < 4 {
        return Err(KgError::InvalidArgument(format!(
            "need at least 4 entities, got {n_entities}"
        )));
    }
    if n_relations < 1 {
        return Err(KgError::InvalidArgument("need at least 1 relation".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_clans = 2 * (n_entities / 16).max(1);
    let n_kinds = ((n_relations as f64).sqrt().ceil() as usize).max(2);

    let mut slots: Vec<usize> = (0..n_entities).collect();
    slots.shuffle(&mut rng);
    let mut used_names = HashSet::new();
    let mut entities = Vec::with_capacity(n_entities);
    for (i, &slot) in slots.iter().enumerate() {
        let clan = slot % n_clans;
        let kind = (slot / n_clans) % n_kinds;
        let name = loop {
            let candidate = make_name(&mut rng);
            if used_names.insert(candidate.clone()) {
                break candidate;
            }
        };
        let description = format!(
            "a {} {} of the {} clan, known to be {} and {}",
            pick(FILLERS, &mut rng),
            kind_word(kind, rng.random_range(0..3)),
            clan_word(clan),
            pick(FILLERS, &mut rng),
            pick(FILLERS, &mut rng),
        );
        entities.push(SynthEntity {
            key: format!("e{i:04}"),
            name,
            clan,
            kind,
            description,
        });
    }

    let relation_kinds: Vec<(usize, usize)> = (0..n_relations).map(|r| (r / n_kinds, r % n_kinds)).collect();
    let mut triples = Vec::new();
    for h in &entities {
        for t in &entities {
            if t.clan != partner(h.clan) {
                continue;
            }
            for (r, &(src, dst)) in relation_kinds.iter().enumerate() {
                if h.kind == src && t.kind == dst {
                    triples.push((h.key.clone(), format!("_rel{r}"), t.key.clone()));
                }
            }
        }
    }
    triples.shuffle(&mut rng);
    let n_valid = (triples.len() as f64 * 0.1).round() as usize;
    let n_test = n_valid;
    let n_train = triples.len() - n_valid - n_test;

    let render = |rows: &[(String, String, String)]| {
        let mut out = String::new();
        for (h, r, t) in rows {
            let _ = writeln!(out, "{h}\t{r}\t{t}");
        }
        out
    };
    let mut entity_file = String::new();
    for e in &entities {
        let _ = writeln!(entity_file, "{}\t{}\t{}", e.key, e.name, e.description);
    }
    let mut registry = Vec::with_capacity(2 * n_relations);
    for r in 0..n_relations {
        let (name, inverse_name) = relation_names(r);
        let raw = format!("_rel{r}");
        let inv = format!("_rel{r}_inv");
        registry.push(RegistryEntry::new(&raw, &name, &inv, &inverse_name));
        registry.push(RegistryEntry::new(&inv, &inverse_name, &raw, &name));
    }
    let mut relations = serde_json::to_string_pretty(&registry).expect("registry serializes");
    relations.push('\n');

    Ok(SynthDataset {
        train: render(&triples[..n_train]),
        valid: render(&triples[n_train..n_train + n_valid]),
        test: render(&triples[n_train + n_valid..]),
        entities: entity_file,
        relations,
        num_triples: triples.len(),
    })
}

/// Writes a synthetic dataset directory in the standard file layout.
pub fn generate_synthetic_kg(
    seed: u64,
    n_entities: usize,
    n_relations: usize,
    out_dir: &Path,
) -> Result<SynthDataset, KgError> {
    let dataset = synthesize(seed, n_entities, n_relations)?;
    dataset.write_to(out_dir)?;
    Ok(dataset)
}

fn partner(clan: usize) -> usize {
    clan ^ 1
}

fn pick<'a>(words: &[&'a str], rng: &mut ChaCha8Rng) -> &'a str {
    words[rng.random_range(0..words.len())]
}

fn clan_word(clan: usize) -> String {
    CLANS
        .get(clan)
        .map_or_else(|| format!("clan{clan}"), |w| w.to_string())
}

fn kind_word(kind: usize, synonym: usize) -> String {
    KINDS.get(kind).map_or_else(
        || format!("kind{kind}{}", ["a", "b", "c"][synonym]),
        |w| w[synonym].to_string(),
    )
}

fn relation_names(r: usize) -> (String, String) {
    RELATION_NAMES.get(r).map_or_else(
        || (format!("relates{r}"), format!("is related{r} by")),
        |(a, b)| (a.to_string(), b.to_string()),
    )
}

fn make_name(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.random_range(2..=3);
    let mut name = String::new();
    for _ in 0..syllables {
        name.push_str(pick(ONSETS, rng));
        name.push_str(pick(VOWELS, rng));
    }
    if rng.random_bool(0.5) {
        name.push_str(pick(&["n", "r", "s", "x", "k"], rng));
    }
    name
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_arguments() {
        assert!(matches!(synthesize(1, 2, 1), Err(KgError::InvalidArgument(_))));
        assert!(matches!(synthesize(1, 10, 0), Err(KgError::InvalidArgument(_))));
        assert!(synthesize(1, 4, 1).is_ok());
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = synthesize(42, 50, 4).unwrap();
        assert_eq!(a, synthesize(42, 50, 4).unwrap());
        assert_ne!(a.train, synthesize(43, 50, 4).unwrap().train);
    }

    #[test]
    fn split_sizes_follow_80_10_10() {
        let d = synthesize(42, 50, 4).unwrap();
        let count = |s: &str| s.lines().count();
        let total = count(&d.train) + count(&d.valid) + count(&d.test);
        assert_eq!(total, d.num_triples);
        assert_eq!(count(&d.valid), (total as f64 * 0.1).round() as usize);
        assert_eq!(count(&d.valid), count(&d.test));
    }
}

#![allow(dead_code)]

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use kermit_core::describe::{
    describe_queries, stub_describe, DescriptionCache, DescriptionSource, PromptTemplate,
};
use kermit_core::encoder::{entity_sequence_from_ids, query_sequence_from_ids};
use kermit_core::kg::{generate_synthetic_kg, load_dataset, DatasetLayout, GraphBuilder};
use kermit_core::train::{batch_loss, compute_gradients, TrainBatch};
use kermit_core::{
    build_vocabulary, cosine_similarity, evaluate_split, symmetrize, Descriptions, Direction, EncoderConfig,
    EncoderModel, EntityId, Featurizer, InverseRegistry, KnowledgeGraph, LossConfig, Metrics, Query,
    QueryKey, RegistryEntry, SequenceMode, Split, Triple,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

const WORDS: &[&str] = &[
    "red", "stone", "river", "small", "old", "bird", "light", "tree", "cold", "north", "glass", "song",
];
const NAMES: &[&str] = &["alpha", "beta", "gamma", "delta", "omega", "sigma"];

/// Registry with `n` base relations, each either self-inverse or paired
/// with a distinct inverse.
pub fn random_registry(rng: &mut ChaCha8Rng, n: usize) -> InverseRegistry {
    let mut entries = Vec::new();
    for i in 0..n {
        let raw = format!("r{i}");
        if rng.random_bool(0.3) {
            entries.push(RegistryEntry::new(
                &raw,
                &format!("rel {i}"),
                &raw,
                &format!("rel {i}"),
            ));
        } else {
            let inv = format!("r{i}_inv");
            let (name, inv_name) = (format!("rel {i}"), format!("inverse rel {i}"));
            entries.push(RegistryEntry::new(&raw, &name, &inv, &inv_name));
            entries.push(RegistryEntry::new(&inv, &inv_name, &raw, &name));
        }
    }
    InverseRegistry::from_entries(entries).expect("generated registry is valid")
}

fn random_text(rng: &mut ChaCha8Rng, max_words: usize) -> String {
    let n = rng.random_range(0..=max_words);
    (0..n)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Small random graph with 2..=`max_entities` entities and a non-empty test
/// split. Names and descriptions come from tiny word lists, so identical
/// entity texts (and therefore tied scores) do occur.
pub fn random_graph(seed: u64, max_entities: usize) -> (KnowledgeGraph, InverseRegistry) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_base = rng.random_range(1..=3);
    let registry = random_registry(&mut rng, n_base);
    let n = rng.random_range(2..=max_entities);
    let mut b = GraphBuilder::new(format!("random{seed}"), &registry);
    for i in 0..n {
        let name = NAMES[rng.random_range(0..NAMES.len())];
        let desc = random_text(&mut rng, 3);
        b.add_entity(&format!("e{i}"), name, &desc).unwrap();
    }
    let relations: Vec<String> = registry.entries().iter().map(|e| e.raw_key.clone()).collect();
    let n_triples = rng.random_range(1..=3 * n);
    let mut seen = HashSet::new();
    for k in 0..n_triples {
        let h = rng.random_range(0..n);
        let t = rng.random_range(0..n);
        let r = &relations[rng.random_range(0..relations.len())];
        if !seen.insert((h, r.clone(), t)) {
            continue;
        }
        let split = if k == 0 {
            Split::Test
        } else {
            Split::ALL[rng.random_range(0..3)]
        };
        b.add_triple(split, &format!("e{h}"), r, &format!("e{t}"))
            .unwrap();
    }
    (b.build().unwrap(), registry)
}

/// Synthetic dataset with stub descriptions for every query of every split.
pub struct Toy {
    pub dir: tempfile::TempDir,
    pub graph: KnowledgeGraph,
    pub registry: InverseRegistry,
    pub descriptions: Descriptions,
    pub train: Vec<Query>,
}

pub fn toy(seed: u64, n_entities: usize, n_relations: usize) -> Toy {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy");
    generate_synthetic_kg(seed, n_entities, n_relations, &data).unwrap();
    let graph = load_dataset(&data, &DatasetLayout::default()).unwrap();
    let registry = InverseRegistry::from_path(&data.join("relations.json")).unwrap();
    let mut all = Vec::new();
    for split in Split::ALL {
        all.extend(symmetrize(&graph, &registry, split).unwrap());
    }
    let mut cache = DescriptionCache::open(dir.path().join("descriptions.toy.jsonl")).unwrap();
    describe_queries(
        &DescriptionSource::Stub,
        &mut cache,
        &PromptTemplate::default(),
        &graph,
        &all,
    )
    .unwrap();
    let train = symmetrize(&graph, &registry, Split::Train).unwrap();
    Toy {
        dir,
        graph,
        registry,
        descriptions: cache.snapshot(),
        train,
    }
}

/// One randomly shaped batch for finite-difference checking.
pub struct GradCase {
    pub query: EncoderModel,
    pub entity: EncoderModel,
    pub batch: TrainBatch,
    pub loss: LossConfig,
}

/// `d` in 3..=8 and `B` in 2..=4, both towers independently initialized so
/// the two gradient sets differ.
pub fn grad_case(seed: u64, config: impl FnOnce(&mut EncoderConfig), loss: LossConfig) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(3..=8);
    let b = rng.random_range(2..=4);
    let mut cfg = EncoderConfig::shallow(12, dim, 10);
    config(&mut cfg);
    let words = |rng: &mut ChaCha8Rng, max: usize| -> Vec<u32> {
        let n = rng.random_range(1..=max);
        (0..n)
            .map(|_| rng.random_range(4..cfg.vocab_size as u32 - 1))
            .collect()
    };
    let mut queries = Vec::new();
    let mut answers = Vec::new();
    for _ in 0..b {
        let (h, r, p) = (words(&mut rng, 3), words(&mut rng, 2), words(&mut rng, 3));
        queries.push(query_sequence_from_ids(&h, &r, Some(&p), SequenceMode::Full, cfg.max_len).unwrap());
        let t = words(&mut rng, 5);
        answers.push(entity_sequence_from_ids(&t, cfg.max_len).unwrap());
    }
    GradCase {
        query: EncoderModel::new(cfg, seed.wrapping_mul(2)),
        entity: EncoderModel::new(cfg, seed.wrapping_mul(2) + 1),
        batch: TrainBatch::new(queries, answers).unwrap(),
        loss,
    }
}

/// Worst disagreement between reverse-mode gradients and central differences
/// over every trainable entry of both towers.
pub struct GradReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub entries: usize,
}

/// `|a − n| / max(|a|, |n|, floor)`; the floor keeps entries that are zero
/// up to rounding from dominating.
pub const REL_ERR_FLOOR: f64 = 1e-6;
pub const FD_STEP: f64 = 1e-4;

pub fn check_gradients(case: &GradCase) -> GradReport {
    check_gradients_with_step(case, FD_STEP)
}

pub fn check_gradients_with_step(case: &GradCase, step: f64) -> GradReport {
    let (_, grads) = compute_gradients(&case.query, &case.entity, &case.batch, &case.loss).unwrap();
    let positions = case.query.config().positions;
    let mut report = GradReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        entries: 0,
    };
    for tower in 0..2 {
        let analytic: Vec<Vec<f64>> = if tower == 0 {
            grads
                .query
                .tensors(positions)
                .into_iter()
                .map(<[f64]>::to_vec)
                .collect()
        } else {
            grads
                .entity
                .tensors(positions)
                .into_iter()
                .map(<[f64]>::to_vec)
                .collect()
        };
        for (k, a_tensor) in analytic.iter().enumerate() {
            for (idx, &a) in a_tensor.iter().enumerate() {
                let eval = |delta: f64| {
                    let mut q = case.query.clone();
                    let mut e = case.entity.clone();
                    let model = if tower == 0 { &mut q } else { &mut e };
                    model.tensors_mut()[k][idx] += delta;
                    batch_loss(&q, &e, &case.batch, &case.loss).unwrap()
                };
                let n = (eval(step) - eval(-step)) / (2.0 * step);
                let abs = (a - n).abs();
                let rel = abs / a.abs().max(n.abs()).max(REL_ERR_FLOOR);
                report.max_abs_err = report.max_abs_err.max(abs);
                report.max_rel_err = report.max_rel_err.max(rel);
                report.entries += 1;
            }
        }
    }
    report
}

/// Outcome of one random-graph comparison between the evaluator and the
/// brute-force oracle.
pub struct OracleCase {
    pub library: Vec<usize>,
    pub oracle: Vec<usize>,
    pub library_metrics: Metrics,
    pub oracle_metrics: Metrics,
    pub had_ties: bool,
    pub had_filtering: bool,
}

/// Re-scores every test query against every entity by direct cosine, with
/// the filter built by scanning the triple lists.
pub fn oracle_case(seed: u64, max_entities: usize) -> OracleCase {
    let (graph, registry) = random_graph(seed, max_entities);
    let mode = if seed.is_multiple_of(2) {
        SequenceMode::Baseline
    } else {
        SequenceMode::Full
    };
    let mut descriptions = Descriptions::new();
    for split in Split::ALL {
        for q in symmetrize(&graph, &registry, split).unwrap() {
            descriptions.insert(QueryKey::of(&graph, &q), stub_describe(&q, &graph));
        }
    }
    let vocab = build_vocabulary(&graph, Some(&descriptions), 1);
    let features = Featurizer::new(&graph, &vocab, mode, 24, Some(&descriptions));
    let cfg = EncoderConfig::shallow(vocab.len(), 4, 24);
    let q_model = EncoderModel::new(cfg, seed);
    let e_model = EncoderModel::new(cfg, seed ^ 0xabcd);
    let eval = evaluate_split(&q_model, &e_model, &features, &registry, Split::Test).unwrap();

    let entity_vecs: Vec<Vec<f64>> = (0..graph.num_entities())
        .map(|i| {
            e_model
                .encode(&features.entity_sequence(EntityId(i as u32)).unwrap())
                .unwrap()
                .pooled
        })
        .collect();
    let triples: Vec<Triple> = graph.all_triples().copied().collect();
    let mut oracle = Vec::new();
    let (mut had_ties, mut had_filtering) = (false, false);
    for t in graph.split(Split::Test) {
        let forward = Query {
            source: t.head,
            relation: t.relation,
            direction: Direction::Forward,
            answer: t.tail,
        };
        let backward = Query {
            source: t.tail,
            relation: graph.inverse_of(t.relation),
            direction: Direction::Backward,
            answer: t.head,
        };
        for q in [forward, backward] {
            let inv = graph.inverse_of(q.relation);
            let known = |x: EntityId| {
                triples.iter().any(|u| {
                    (u.head == q.source && u.relation == q.relation && u.tail == x)
                        || (u.head == x && u.relation == inv && u.tail == q.source)
                })
            };
            let qv = q_model
                .encode(&features.query_sequence(&q).unwrap())
                .unwrap()
                .pooled;
            let scores: Vec<f64> = entity_vecs
                .iter()
                .map(|e| cosine_similarity(&qv, e).unwrap())
                .collect();
            let target = scores[q.answer.index()];
            let mut rank = 1;
            for (i, &s) in scores.iter().enumerate() {
                let e = EntityId(i as u32);
                if e == q.answer {
                    continue;
                }
                if known(e) {
                    had_filtering = true;
                    continue;
                }
                if s == target {
                    had_ties = true;
                }
                if s >= target {
                    rank += 1;
                }
            }
            oracle.push(rank);
        }
    }
    let n = oracle.len() as f64;
    let mut m = [0.0; 4];
    for &r in &oracle {
        m[0] += 1.0 / r as f64;
        m[1] += (r <= 1) as u8 as f64;
        m[2] += (r <= 3) as u8 as f64;
        m[3] += (r <= 10) as u8 as f64;
    }
    OracleCase {
        library: eval.ranks.iter().map(|r| r.rank).collect(),
        oracle_metrics: Metrics {
            mrr: m[0] / n,
            hit1: m[1] / n,
            hit3: m[2] / n,
            hit10: m[3] / n,
            n_queries: oracle.len(),
        },
        oracle,
        library_metrics: eval.metrics,
        had_ties,
        had_filtering,
    }
}

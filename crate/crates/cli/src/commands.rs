use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use kermit_core::describe::{
    describe_queries, stub_describe, DescriptionSource, HttpClient, PromptTemplate, RateLimiter, RetryPolicy,
    ServiceSettings,
};
use kermit_core::eval::{embed_all_entities, predict_topk};
use kermit_core::kg::{generate_synthetic_kg, load_dataset_with_registry, DatasetLayout};
use kermit_core::{
    build_vocabulary, evaluate_split, fit, symmetrize, Checkpoint, DescriptionCache, Descriptions, Direction,
    EncoderConfig, Featurizer, FilterIndex, InverseRegistry, KnowledgeGraph, MetricsReport, Query, QueryKey,
    Split, Vocabulary,
};

use crate::args::{
    Command, Common, DescribeArgs, EvalArgs, ModelFiles, PredictArgs, PrepareArgs, SynthArgs, TrainArgs,
};
use crate::config::RunConfig;
use crate::meta::{read_config_echo, RunMeta};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Prepare(a) => prepare(a),
        Command::Describe(a) => describe(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Synth(a) => synth(a),
    }
}

const TRAIN_META: &str = "train.meta.json";

/// Defaults, then the config file, then flags. With `inherit`, a run that
/// names no dataset starts from the config of the training run in `out`.
fn resolve(common: &Common, extra: Vec<(String, String)>, inherit: bool) -> Result<RunConfig> {
    let mut flags = common.overrides()?;
    flags.extend(extra);
    let layered = |base: Vec<(String, String)>| -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        cfg.apply_pairs(&base)?;
        if let Some(path) = &common.config {
            cfg.apply_file(path)?;
        }
        cfg.apply_pairs(&flags)?;
        Ok(cfg)
    };
    let cfg = layered(Vec::new())?;
    let earlier = cfg.out.join(TRAIN_META);
    if inherit && cfg.data.is_none() && earlier.is_file() {
        log::info!("using the dataset settings of {}", earlier.display());
        return layered(read_config_echo(&earlier)?);
    }
    Ok(cfg)
}

struct Dataset {
    graph: KnowledgeGraph,
    registry: InverseRegistry,
}

fn load(cfg: &RunConfig, meta: &mut RunMeta) -> Result<Dataset> {
    let dir = cfg
        .data
        .as_ref()
        .context("no dataset directory: pass --data or set data = DIR in the config file")?;
    let layout = DatasetLayout::default();
    let registry = match cfg.registry.as_deref() {
        Some("wn18rr") => InverseRegistry::wn18rr(),
        Some("fb15k237") => InverseRegistry::fb15k237(),
        other => {
            let path = other.map_or_else(|| dir.join(&layout.relations), PathBuf::from);
            meta.input(&path)?;
            InverseRegistry::from_path(&path)?
        }
    };
    let graph = load_dataset_with_registry(dir, &layout, &registry)
        .with_context(|| format!("loading dataset {}", dir.display()))?;
    for file in [&layout.train, &layout.valid, &layout.test, &layout.entities] {
        meta.input(&dir.join(file))?;
    }
    Ok(Dataset { graph, registry })
}

fn cache_path(cfg: &RunConfig, graph: &KnowledgeGraph) -> PathBuf {
    cfg.cache
        .clone()
        .unwrap_or_else(|| cfg.out.join(DescriptionCache::file_name(graph.dataset_id())))
}

/// Cached descriptions, or `None` for a layout that does not use them.
fn descriptions(
    cfg: &RunConfig,
    graph: &KnowledgeGraph,
    needed: bool,
    meta: &mut RunMeta,
) -> Result<Option<Descriptions>> {
    if !needed {
        return Ok(None);
    }
    let path = cache_path(cfg, graph);
    if !path.is_file() {
        bail!(
            "no description cache at {}: run `kermit describe` first or train with --mode baseline",
            path.display()
        );
    }
    meta.input(&path)?;
    Ok(Some(DescriptionCache::open(&path)?.snapshot()))
}

fn all_queries(d: &Dataset) -> Result<Vec<Query>> {
    let mut out = Vec::new();
    for split in Split::ALL {
        out.extend(symmetrize(&d.graph, &d.registry, split)?);
    }
    Ok(out)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn prepare(args: PrepareArgs) -> Result<()> {
    let cfg = resolve(&args.common, Vec::new(), false)?;
    let mut meta = RunMeta::start("prepare");
    let d = load(&cfg, &mut meta)?;
    create_dir(&cfg.out)?;
    let mut counts = serde_json::Map::new();
    for split in Split::ALL {
        let queries = symmetrize(&d.graph, &d.registry, split)?;
        let mut text = String::new();
        for q in &queries {
            let key = QueryKey::of(&d.graph, q);
            let answer = &d.graph.entity(q.answer).raw_key;
            let _ = writeln!(
                text,
                "{}\t{}\t{}\t{answer}",
                key.source, key.relation, key.direction
            );
        }
        write(&cfg.out.join(format!("queries.{split}.tsv")), &text)?;
        println!(
            "{split}: {} triples, {} queries",
            d.graph.split(split).len(),
            queries.len()
        );
        counts.insert(split.to_string(), queries.len().into());
    }
    println!(
        "{} entities, {} relations in use",
        d.graph.num_entities(),
        d.graph.relations_in_use().len()
    );
    meta.set("queries", counts);
    meta.set("entities", d.graph.num_entities());
    meta.write(&cfg.out.join("prepare.meta.json"), &cfg)?;
    Ok(())
}

fn describe(args: DescribeArgs) -> Result<()> {
    let mut extra = args.cache.overrides();
    extra.extend(args.service.overrides());
    let cfg = resolve(&args.common, extra, false)?;
    let mut meta = RunMeta::start("describe");
    let d = load(&cfg, &mut meta)?;
    let template = match &cfg.service.template {
        Some(path) => {
            meta.input(path)?;
            let text =
                std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            PromptTemplate::new(text)?
        }
        None => PromptTemplate::default(),
    };
    let queries = all_queries(&d)?;
    let path = cache_path(&cfg, &d.graph);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    create_dir(&cfg.out)?;
    let mut cache = DescriptionCache::open(&path)?;

    let report = if args.service.stub {
        meta.set("source", "stub");
        describe_queries(
            &DescriptionSource::Stub,
            &mut cache,
            &template,
            &d.graph,
            &queries,
        )?
    } else {
        let s = &cfg.service;
        let settings = ServiceSettings::from_env(Duration::from_secs_f64(s.timeout_secs), s.schema)
            .map_err(anyhow::Error::msg)
            .context("the generation service is configured through the environment (or pass --stub)")?;
        meta.set("source", "service");
        meta.set("service_model", settings.model.clone());
        let client = HttpClient::new(settings);
        let limiter = RateLimiter::new(s.rate, s.burst);
        let source = DescriptionSource::Service {
            client: &client,
            retry: RetryPolicy {
                max_retries: s.retries,
                initial_backoff: Duration::from_millis(s.backoff_ms),
                multiplier: 2.0,
            },
            limiter: &limiter,
            max_in_flight: s.max_in_flight,
        };
        describe_queries(&source, &mut cache, &template, &d.graph, &queries)?
    };
    println!(
        "{} unique queries: {} cached, {} new",
        report.unique, report.cached, report.generated
    );
    meta.set("cache", path.display().to_string());
    meta.set("unique", report.unique);
    meta.set("cached", report.cached);
    meta.set("generated", report.generated);
    meta.write(&cfg.out.join("describe.meta.json"), &cfg)?;
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let mut extra = args.cache.overrides();
    extra.extend(args.model.overrides());
    extra.extend(args.fit.overrides());
    let cfg = resolve(&args.common, extra, false)?;
    let mut meta = RunMeta::start("train");
    let d = load(&cfg, &mut meta)?;
    let descriptions = descriptions(&cfg, &d.graph, cfg.mode.needs_descriptions(), &mut meta)?;
    let queries = symmetrize(&d.graph, &d.registry, Split::Train)?;
    create_dir(&cfg.out)?;

    let vocab = build_vocabulary(&d.graph, descriptions.as_ref(), cfg.min_freq);
    vocab.save(&cfg.out.join("vocab.tsv"))?;
    let features = Featurizer::new(&d.graph, &vocab, cfg.mode, cfg.max_len, descriptions.as_ref());
    let encoder = EncoderConfig {
        vocab_size: vocab.len(),
        dim: cfg.dim,
        max_len: cfg.max_len,
        pooling: cfg.pooling,
        positions: cfg.positions,
        layers: cfg.layers,
    };
    let checkpoint_dir = cfg.out.join("checkpoints");
    if cfg.train.checkpoint_every > 0 {
        create_dir(&checkpoint_dir)?;
    }
    let out = fit(
        &features,
        &queries,
        &cfg.train,
        &cfg.loss,
        &encoder,
        (cfg.train.checkpoint_every > 0).then_some(checkpoint_dir.as_path()),
    )?;
    let checkpoint = Checkpoint::new(cfg.mode, out.query, out.entity)?;
    let model_path = cfg.out.join("model.bin");
    checkpoint.save(&model_path)?;
    let id = checkpoint.id();
    println!(
        "trained {} steps on {} queries; final epoch loss {:.6}; model {} ({id})",
        out.steps,
        queries.len(),
        out.epoch_losses.last().copied().unwrap_or(f64::NAN),
        model_path.display()
    );
    meta.set("train_queries", queries.len());
    meta.set("vocab_size", vocab.len());
    meta.set("steps", out.steps);
    meta.set("epoch_losses", out.epoch_losses);
    meta.set("checkpoint_id", id);
    meta.set(
        "checkpoints",
        out.checkpoints
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>(),
    );
    meta.write(&cfg.out.join(TRAIN_META), &cfg)?;
    Ok(())
}

fn load_model(cfg: &RunConfig, files: &ModelFiles, meta: &mut RunMeta) -> Result<(Checkpoint, Vocabulary)> {
    let ck_path = files
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.out.join("model.bin"));
    let vocab_path = files.vocab.clone().unwrap_or_else(|| cfg.out.join("vocab.tsv"));
    let checkpoint = Checkpoint::load(&ck_path).with_context(|| format!("loading {}", ck_path.display()))?;
    let vocab = Vocabulary::load(&vocab_path).with_context(|| format!("loading {}", vocab_path.display()))?;
    meta.input(&ck_path)?;
    meta.input(&vocab_path)?;
    if vocab.len() != checkpoint.config().vocab_size {
        bail!(
            "{} has {} tokens but the model expects {}",
            vocab_path.display(),
            vocab.len(),
            checkpoint.config().vocab_size
        );
    }
    if checkpoint.mode != cfg.mode {
        log::warn!(
            "configured mode {} ignored; the model was trained in {} mode",
            cfg.mode.as_str(),
            checkpoint.mode.as_str()
        );
    }
    Ok((checkpoint, vocab))
}

fn eval(args: EvalArgs) -> Result<()> {
    let cfg = resolve(&args.common, args.cache.overrides(), true)?;
    let mut meta = RunMeta::start("eval");
    let d = load(&cfg, &mut meta)?;
    let (ck, vocab) = load_model(&cfg, &args.files, &mut meta)?;
    let descriptions = descriptions(&cfg, &d.graph, ck.mode.needs_descriptions(), &mut meta)?;
    let features = Featurizer::new(
        &d.graph,
        &vocab,
        ck.mode,
        ck.config().max_len,
        descriptions.as_ref(),
    );
    let evaluation = evaluate_split(&ck.query, &ck.entity, &features, &d.registry, args.split)?;
    let report = MetricsReport::new(args.split, ck.mode, &evaluation.metrics, ck.id());
    let json = serde_json::to_string_pretty(&report)? + "\n";
    create_dir(&cfg.out)?;
    write(&cfg.out.join(format!("metrics.{}.json", args.split)), &json)?;
    write(
        &cfg.out.join(format!("ranks.{}.tsv", args.split)),
        &evaluation.ranks_tsv(&d.graph),
    )?;
    print!("{json}");
    meta.set("split", args.split.to_string());
    meta.set("metrics", serde_json::to_value(&report)?);
    meta.write(&cfg.out.join(format!("eval.{}.meta.json", args.split)), &cfg)?;
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let cfg = resolve(&args.common, args.cache.overrides(), true)?;
    let mut meta = RunMeta::start("predict");
    let d = load(&cfg, &mut meta)?;
    let (ck, vocab) = load_model(&cfg, &args.files, &mut meta)?;
    let g = &d.graph;
    let source = g
        .entity_id(&args.source)
        .with_context(|| format!("unknown entity {:?}", args.source))?;
    let stored = g
        .relation_id(&args.relation)
        .with_context(|| format!("unknown relation {:?}", args.relation))?;
    let posed = match args.direction {
        Direction::Forward => stored,
        Direction::Backward => g.inverse_of(stored),
    };
    // the answer field is not read when building the query sequence
    let query = Query {
        source,
        relation: posed,
        direction: args.direction,
        answer: source,
    };

    let mut descs = None;
    if ck.mode.needs_descriptions() {
        let path = cache_path(&cfg, g);
        let mut known = if path.is_file() {
            meta.input(&path)?;
            DescriptionCache::open(&path)?.snapshot()
        } else {
            Descriptions::new()
        };
        let key = QueryKey::of(g, &query);
        if known.get(&key).is_none() {
            if !args.stub {
                bail!(
                    "no description for query {key} in {}: run `kermit describe` or pass --stub",
                    path.display()
                );
            }
            known.insert(key, stub_describe(&query, g));
        }
        descs = Some(known);
    }
    let features = Featurizer::new(g, &vocab, ck.mode, ck.config().max_len, descs.as_ref());
    let candidates = embed_all_entities(&ck.entity, &features)?;
    let filter = if args.no_filter {
        Vec::new()
    } else {
        FilterIndex::build(g).known_answers(source, posed, g.inverse_of(posed))
    };
    let top = predict_topk(
        &ck.query,
        &candidates,
        &features.query_sequence(&query)?,
        args.k,
        &filter,
    )?;
    let mut listed = Vec::new();
    for (i, (id, score)) in top.iter().enumerate() {
        let e = g.entity(*id);
        println!("{}\t{}\t{}\t{score:.6}", i + 1, e.raw_key, e.name);
        listed.push(serde_json::json!({"entity": e.raw_key, "score": score}));
    }
    create_dir(&cfg.out)?;
    meta.set("query", QueryKey::of(g, &query).to_string());
    meta.set("filtered", filter.len());
    meta.set("top", listed);
    meta.write(&cfg.out.join("predict.meta.json"), &cfg)?;
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let cfg = resolve(&args.common, Vec::new(), false)?;
    let dir = args
        .common
        .out
        .clone()
        .or_else(|| cfg.data.clone())
        .context("synth needs a target directory: pass --out or set data = DIR")?;
    let mut meta = RunMeta::start("synth");
    generate_synthetic_kg(cfg.train.seed, args.entities, args.relations, &dir)?;
    println!(
        "wrote {} entities and {} relations to {}",
        args.entities,
        args.relations,
        dir.display()
    );
    meta.set("entities", args.entities);
    meta.set("relations", args.relations);
    meta.write(&dir.join("synth.meta.json"), &cfg)?;
    Ok(())
}

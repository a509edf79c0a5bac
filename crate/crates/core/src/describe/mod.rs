//! Predictive descriptions: prompt rendering, generation (service or stub) and
//! the durable description cache.

mod cache;
mod client;
mod template;

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use crate::augment::Query;
use crate::kg::KnowledgeGraph;

pub use cache::{DescriptionCache, Descriptions, PredictiveDescription, Provenance, QueryKey};
pub use client::{
    ClientError, GenerationClient, HttpClient, RateLimiter, RetryPolicy, ServiceSettings, WireSchema,
    ENV_KEY, ENV_MODEL, ENV_URL,
};
pub use template::{PromptTemplate, TemplateError, DEFAULT_TEMPLATE};

/// Number of source-description tokens copied into stub text.
pub const STUB_DESCRIPTION_TOKENS: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum DescribeError {
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: bad cache entry: {message}", .path.display())]
    CacheFormat {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("generation failed for {key} after {attempts} attempt(s): {source}")]
    Generation {
        key: QueryKey,
        attempts: u32,
        #[source]
        source: ClientError,
    },
}

/// Deterministic offline stand-in for a generated description.
pub fn stub_describe(query: &Query, graph: &KnowledgeGraph) -> String {
    let source = graph.entity(query.source);
    let relation = graph.relation(query.relation);
    let mut text = format!(
        "Entity such that the relationship between \"{}\" and the entity is \"{}\".",
        source.name, relation.name
    );
    let head: Vec<&str> = source
        .description
        .split_whitespace()
        .take(STUB_DESCRIPTION_TOKENS)
        .collect();
    if !head.is_empty() {
        text.push(' ');
        text.push_str(&head.join(" "));
    }
    text
}

/// The prompt for a query: source entity and the relation as posed, so
/// backward queries get the answer-side entity and the inverse name.
pub fn render_prompt(tpl: &PromptTemplate, query: &Query, graph: &KnowledgeGraph) -> String {
    tpl.render(graph.entity(query.source), &graph.relation(query.relation).name)
}

/// Sends `prompt` until it succeeds or the retry budget is spent. Returns
/// the text or the last error together with the attempt count.
pub fn send_with_retry(
    client: &dyn GenerationClient,
    prompt: &str,
    retry: &RetryPolicy,
    limiter: Option<&RateLimiter>,
) -> Result<String, (u32, ClientError)> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        if let Some(l) = limiter {
            l.acquire();
        }
        match client.send(prompt) {
            Ok(text) => return Ok(text),
            Err(e) if attempt > retry.max_retries => return Err((attempt, e)),
            Err(e) => {
                log::debug!("attempt {attempt} failed: {e}");
                std::thread::sleep(retry.backoff(attempt));
            }
        }
    }
}

/// Cache lookup, falling back to one (retried) service call whose result is
/// stored before returning.
pub fn generate_description(
    client: &dyn GenerationClient,
    cache: &mut DescriptionCache,
    tpl: &PromptTemplate,
    query: &Query,
    graph: &KnowledgeGraph,
    retry: &RetryPolicy,
) -> Result<PredictiveDescription, DescribeError> {
    let key = QueryKey::of(graph, query);
    if let Some(text) = cache.get(&key) {
        return Ok(PredictiveDescription {
            text: text.to_string(),
            key,
            provenance: Provenance::Cache,
        });
    }
    let prompt = render_prompt(tpl, query, graph);
    let text = send_with_retry(client, &prompt, retry, None).map_err(|(attempts, source)| {
        DescribeError::Generation {
            key: key.clone(),
            attempts,
            source,
        }
    })?;
    cache.insert(key.clone(), text.clone(), Provenance::Service)?;
    Ok(PredictiveDescription {
        key,
        text,
        provenance: Provenance::Service,
    })
}

pub enum DescriptionSource<'a> {
    Service {
        client: &'a dyn GenerationClient,
        retry: RetryPolicy,
        limiter: &'a RateLimiter,
        max_in_flight: usize,
    },
    Stub,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DescribeReport {
    /// Distinct query keys in the input.
    pub unique: usize,
    /// Keys already present in the cache.
    pub cached: usize,
    /// Keys generated and appended during this run.
    pub generated: usize,
}

/// Fills the cache for every distinct key in `queries`.
///
/// Stub generation is sequential in query order, so the cache file is a pure
/// function of the input. Service requests run on up to `max_in_flight`
/// workers; results are appended by this thread as they arrive. On the first
/// failure no new requests are started, finished ones are still stored, and
/// the error is returned.
pub fn describe_queries(
    source: &DescriptionSource<'_>,
    cache: &mut DescriptionCache,
    tpl: &PromptTemplate,
    graph: &KnowledgeGraph,
    queries: &[Query],
) -> Result<DescribeReport, DescribeError> {
    let mut seen = HashSet::new();
    let mut pending = Vec::new();
    let mut report = DescribeReport::default();
    for q in queries {
        let key = QueryKey::of(graph, q);
        if !seen.insert(key.clone()) {
            continue;
        }
        report.unique += 1;
        if cache.get(&key).is_some() {
            report.cached += 1;
        } else {
            pending.push((key, *q));
        }
    }

    match source {
        DescriptionSource::Stub => {
            for (key, q) in pending {
                cache.insert(key, stub_describe(&q, graph), Provenance::Stub)?;
                report.generated += 1;
            }
            Ok(report)
        }
        DescriptionSource::Service {
            client,
            retry,
            limiter,
            max_in_flight,
        } => {
            let next = AtomicUsize::new(0);
            let stop = AtomicBool::new(false);
            let workers = (*max_in_flight).clamp(1, pending.len().max(1));
            let (tx, rx) = mpsc::channel();
            let mut first_error = None;
            std::thread::scope(|scope| {
                for _ in 0..workers {
                    let tx = tx.clone();
                    let (next, stop, pending) = (&next, &stop, &pending);
                    scope.spawn(move || loop {
                        if stop.load(Ordering::SeqCst) {
                            break;
                        }
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        let Some((key, q)) = pending.get(i) else { break };
                        let prompt = render_prompt(tpl, q, graph);
                        let result = send_with_retry(*client, &prompt, retry, Some(limiter));
                        if result.is_err() {
                            stop.store(true, Ordering::SeqCst);
                        }
                        if tx.send((key.clone(), result)).is_err() {
                            break;
                        }
                    });
                }
                drop(tx);
                for (key, result) in rx {
                    match result {
                        Ok(text) => {
                            if first_error.is_some() {
                                // keep successes even after a failure
                                let _ = cache.insert(key, text, Provenance::Service);
                                continue;
                            }
                            match cache.insert(key, text, Provenance::Service) {
                                Ok(()) => report.generated += 1,
                                Err(e) => {
                                    stop.store(true, Ordering::SeqCst);
                                    first_error = Some(e);
                                }
                            }
                        }
                        Err((attempts, source)) => {
                            if first_error.is_none() {
                                first_error = Some(DescribeError::Generation {
                                    key,
                                    attempts,
                                    source,
                                });
                            }
                        }
                    }
                }
            });
            match first_error {
                Some(e) => Err(e),
                None => Ok(report),
            }
        }
    }
}

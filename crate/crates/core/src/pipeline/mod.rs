//! End-to-end orchestration.
//!
//! `segment → summarize_all → extract_events → per event (rank_for_event →
//! build_bag → reorder_bag → summarize_bag) → aggregate`. Stages run one after
//! another; work inside a stage fans out over the gateway's concurrency limit
//! and is reassembled by index, so output never depends on completion order.

mod config;
mod trace;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

pub use config::{
    BackendConfig, BackendKind, CacheConfig, CorpusConfig, GenerationConfig, PackagingConfig,
    PipelineConfig, ReorderConfig, RunConfig,
};
pub use trace::{BagTrace, PipelineTrace, RunMode, StageTimings};

use crate::backend::Gateway;
use crate::corpus::{self, CorpusError, DocumentRecord};
use crate::error::{Error, Result, Task};
use crate::exec::{parallel_map, Staged};
use crate::generation::{self, FinalSummary};
use crate::packaging::{self, SegmentBag};
use crate::reordering;
use crate::text;
use trace::millis;

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: FinalSummary,
    pub trace: PipelineTrace,
}

/// A failed document: the error plus everything the trace held when it hit.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub trace: Box<PipelineTrace>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "document {}: {}", self.trace.document_id, self.error)
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

#[derive(Debug)]
pub struct BatchItem {
    pub id: String,
    pub result: std::result::Result<RunOutput, RunFailure>,
}

pub struct Pipeline {
    config: PipelineConfig,
    gateway: Arc<Gateway>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, gateway: Arc<Gateway>) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, gateway })
    }

    /// Builds backend, cache and gateway from the configuration.
    pub fn from_config(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let gateway = Arc::new(config.build_gateway()?);
        Self::new(config, gateway)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn mode(&self) -> RunMode {
        match (self.config.packaging.enabled, self.config.reorder.enabled) {
            (false, _) => RunMode::Baseline,
            (true, false) => RunMode::Packaging,
            (true, true) => RunMode::PackagingReordering,
        }
    }

    pub fn run(&self, document: &DocumentRecord) -> std::result::Result<RunOutput, RunFailure> {
        let started = Instant::now();
        let mut trace = PipelineTrace::new(&document.id, self.mode());
        let outcome = self.run_stages(document, &mut trace);
        trace.timings.total_ms = millis(started.elapsed());
        match outcome {
            Ok(summary) => {
                trace.final_summary = Some(summary.text.clone());
                Ok(RunOutput { summary, trace })
            }
            Err((stage, error)) => {
                trace.failed_stage = Some(stage.to_string());
                Err(RunFailure {
                    error,
                    trace: Box::new(trace),
                })
            }
        }
    }

    fn run_stages(
        &self,
        document: &DocumentRecord,
        trace: &mut PipelineTrace,
    ) -> std::result::Result<FinalSummary, (&'static str, Error)> {
        let gw = &*self.gateway;
        let cfg = &self.config;

        let clock = Instant::now();
        let article = corpus::normalize(&document.article);
        let paragraphs = corpus::segment(&article, cfg.corpus.min_words)
            .map_err(|e| ("segment", Error::from(e)))?;
        trace.paragraph_count = paragraphs.len();
        trace.timings.segment_ms = millis(clock.elapsed());

        if !cfg.packaging.enabled {
            let clock = Instant::now();
            let texts: Vec<&str> = paragraphs.iter().map(|p| p.text.as_str()).collect();
            let (text, record) = generation::summarize_passages(&texts, gw, Task::WholeDocument)
                .map_err(|e| ("generate", e))?;
            trace.record_calls(vec![record], 0);
            trace.timings.generate_ms = millis(clock.elapsed());
            return Ok(self.finish(FinalSummary {
                text,
                event_order: Vec::new(),
                trace_ref: document.id.clone(),
            }));
        }

        let clock = Instant::now();
        let summaries = absorb(trace, packaging::summarize_all(&paragraphs, gw), "summarize")?;
        trace.local_summaries = summaries.clone();
        trace.timings.summarize_ms = millis(clock.elapsed());

        let clock = Instant::now();
        let events = absorb(
            trace,
            packaging::extract_events(&summaries, gw, cfg.packaging.n_events, cfg.packaging.chunk_size),
            "extract",
        )?;
        trace.events = events.clone();
        trace.timings.extract_ms = millis(clock.elapsed());

        let clock = Instant::now();
        let rankings = parallel_map(&events, gw.concurrency(), |_, event| {
            packaging::rank_for_event(event, &summaries, gw, cfg.packaging.chunk_size, cfg.packaging.k)
        });
        let mut bags: Vec<SegmentBag> = Vec::with_capacity(events.len());
        for (event, ranking) in events.iter().zip(rankings) {
            let ranking = absorb(trace, ranking, "rank")?;
            bags.push(packaging::build_bag(event, &ranking, cfg.packaging.k));
        }
        trace.timings.rank_ms = millis(clock.elapsed());

        let clock = Instant::now();
        let mut bag_traces: Vec<BagTrace> = bags
            .iter()
            .map(|b| BagTrace {
                event_index: b.event.event_index,
                ranked: b.members.clone(),
                reordered: b.members.clone(),
                ordering: None,
            })
            .collect();
        if cfg.reorder.enabled {
            let reordered = parallel_map(&bags, gw.concurrency(), |_, bag| {
                reordering::reorder_bag(bag, &summaries, cfg.reorder.strategy, gw)
            });
            for ((bag, bag_trace), staged) in bags.iter_mut().zip(&mut bag_traces).zip(reordered) {
                let (reordered_bag, ordering) = absorb(trace, Ok(staged), "reorder")?;
                bag_trace.reordered = reordered_bag.members.clone();
                bag_trace.ordering = Some(ordering);
                *bag = reordered_bag;
            }
        }
        trace.shared_paragraphs = shared_members(&bags);
        trace.bags = bag_traces;
        trace.timings.reorder_ms = millis(clock.elapsed());

        let clock = Instant::now();
        let generated = parallel_map(&bags, gw.concurrency(), |_, bag| {
            generation::summarize_bag(bag, &paragraphs, gw)
        });
        let mut event_summaries = Vec::with_capacity(bags.len());
        for staged in generated {
            event_summaries.push(absorb(trace, staged, "generate")?);
        }
        trace.event_summaries = event_summaries.clone();
        trace.timings.generate_ms = millis(clock.elapsed());

        let clock = Instant::now();
        let summary = absorb(
            trace,
            generation::aggregate(&event_summaries, gw, cfg.generation.aggregate_order, &document.id),
            "aggregate",
        )?;
        trace.timings.aggregate_ms = millis(clock.elapsed());
        Ok(self.finish(summary))
    }

    fn finish(&self, mut summary: FinalSummary) -> FinalSummary {
        let max_words = self.config.generation.max_summary_words;
        if max_words > 0 {
            summary.text = text::truncate_words(&summary.text, max_words);
        }
        summary
    }

    /// Runs every document; failures are reported per document and never
    /// stop the batch. Output order follows input order.
    pub fn run_batch(&self, documents: &[DocumentRecord]) -> Result<Vec<BatchItem>> {
        if documents.is_empty() {
            return Err(Error::Corpus(CorpusError::DatasetEmpty {
                path: PathBuf::new(),
                skipped: 0,
            }));
        }
        Ok(parallel_map(documents, self.gateway.concurrency(), |_, doc| BatchItem {
            id: doc.id.clone(),
            result: self.run(doc),
        }))
    }
}

fn absorb<T>(
    trace: &mut PipelineTrace,
    staged: Result<Staged<T>>,
    stage: &'static str,
) -> std::result::Result<T, (&'static str, Error)> {
    let staged = staged.map_err(|e| (stage, e))?;
    trace.record_calls(staged.calls, staged.fallbacks);
    Ok(staged.value)
}

fn shared_members(bags: &[SegmentBag]) -> Vec<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for bag in bags {
        for &m in &bag.members {
            *counts.entry(m).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .filter(|&(_, c)| c > 1)
        .map(|(m, _)| m)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::prompting::TemplateId;

    fn doc() -> DocumentRecord {
        DocumentRecord::new(
            "d1",
            "The final was played at Wembley on a warm evening. Fans filled the stands.\n\n\
             Dortmund reached the final after beating Paris. Their coach praised the squad.\n\n\
             Real Madrid won the final by two goals. Carvajal scored first.\n\n\
             The title was the fifteenth for Real Madrid. It extended their record.",
        )
    }

    fn pipeline(config: PipelineConfig) -> Pipeline {
        let gw = config.gateway_for(Arc::new(ScriptedBackend::new()), config.build_cache().unwrap()).unwrap();
        Pipeline::new(config, Arc::new(gw)).unwrap()
    }

    #[test]
    fn baseline_is_one_call() {
        let mut config = PipelineConfig::default();
        config.packaging.enabled = false;
        let out = pipeline(config).run(&doc()).unwrap();
        assert_eq!(out.trace.backend_calls, 1);
        assert_eq!(out.trace.mode, RunMode::Baseline);
        assert_eq!(out.trace.calls[0].template_id, TemplateId::BagSummary);
        assert!(out.summary.text.starts_with("The final was played at Wembley on a warm evening. Dortmund"));
        assert!(out.summary.event_order.is_empty());
    }

    #[test]
    fn full_run_populates_trace() {
        let mut config = PipelineConfig::default();
        config.packaging.k = 2;
        config.packaging.n_events = 2;
        let out = pipeline(config).run(&doc()).unwrap();
        let t = &out.trace;
        assert_eq!(t.paragraph_count, 4);
        assert_eq!(t.local_summaries.len(), 4);
        assert_eq!(t.events.len(), 2);
        assert_eq!(t.bags.len(), 2);
        assert!(t.bags.iter().all(|b| b.reordered.len() == 2));
        // 4 local + 1 extract + 2 rank + 2 bag + 1 aggregate; both bags
        // reorder to [0, 1], so the second bag summary is a cache hit
        assert_eq!(t.calls.len(), 10);
        assert_eq!(t.bags[0].reordered, t.bags[1].reordered);
        assert_eq!(t.backend_calls, 9);
        assert_eq!(t.backend_calls, t.calls.iter().filter(|c| !c.from_cache).count());
        assert!(t.timings.stage_sum() <= t.timings.total_ms);
        assert_eq!(t.final_summary.as_deref(), Some(out.summary.text.as_str()));
    }

    #[test]
    fn summary_truncation_knob() {
        let mut config = PipelineConfig::default();
        config.packaging.enabled = false;
        config.generation.max_summary_words = 4;
        let out = pipeline(config).run(&doc()).unwrap();
        assert_eq!(out.summary.text, "The final was played");
    }

    #[test]
    fn empty_document_fails_with_trace() {
        let failure = pipeline(PipelineConfig::default())
            .run(&DocumentRecord::new("x", "..."))
            .unwrap_err();
        assert_eq!(failure.trace.failed_stage.as_deref(), Some("segment"));
        assert!(matches!(failure.error, Error::Corpus(CorpusError::EmptyDocument)));
    }

    #[test]
    fn empty_batch_is_an_error() {
        assert!(pipeline(PipelineConfig::default()).run_batch(&[]).is_err());
    }

    #[test]
    fn shared_members_are_reported() {
        let bag = |m: &[usize]| SegmentBag {
            event: packaging::Event {
                event_index: 0,
                description: String::new(),
            },
            members: m.to_vec(),
            phase: packaging::BagPhase::Ranked,
        };
        assert_eq!(shared_members(&[bag(&[1, 2]), bag(&[2, 3]), bag(&[3, 4])]), [2, 3]);
    }
}

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::CallRecord;
use crate::generation::EventSummary;
use crate::packaging::{Event, LocalSummary};
use crate::prompting::TemplateId;
use crate::reordering::Ordering;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// One summarization request over the whole document.
    Baseline,
    /// Segment bags in ranking order.
    Packaging,
    /// Segment bags reordered before summarization.
    PackagingReordering,
}

/// Wall-clock milliseconds per stage. Stages run one after another, so their
/// sum never exceeds `total_ms`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub segment_ms: f64,
    pub summarize_ms: f64,
    pub extract_ms: f64,
    pub rank_ms: f64,
    pub reorder_ms: f64,
    pub generate_ms: f64,
    pub aggregate_ms: f64,
    pub total_ms: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.segment_ms
            + self.summarize_ms
            + self.extract_ms
            + self.rank_ms
            + self.reorder_ms
            + self.generate_ms
            + self.aggregate_ms
    }
}

/// Whole microseconds as milliseconds.
pub(crate) fn millis(d: Duration) -> f64 {
    d.as_micros() as f64 / 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagTrace {
    pub event_index: usize,
    pub ranked: Vec<usize>,
    pub reordered: Vec<usize>,
    pub ordering: Option<Ordering>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub document_id: String,
    pub mode: RunMode,
    pub paragraph_count: usize,
    pub local_summaries: Vec<LocalSummary>,
    pub events: Vec<Event>,
    pub bags: Vec<BagTrace>,
    /// Paragraphs that appear in more than one bag.
    pub shared_paragraphs: Vec<usize>,
    pub event_summaries: Vec<EventSummary>,
    pub final_summary: Option<String>,
    /// Every request in pipeline order.
    pub calls: Vec<CallRecord>,
    pub backend_calls: usize,
    pub cache_hits: usize,
    pub prompt_tokens: u64,
    pub output_tokens: u64,
    pub parse_fallbacks: usize,
    pub timings: StageTimings,
    pub failed_stage: Option<String>,
}

/// The parts of a trace that must not depend on timing or cache state.
#[derive(Serialize)]
struct DigestView<'a> {
    document_id: &'a str,
    mode: RunMode,
    paragraph_count: usize,
    local_summaries: &'a [LocalSummary],
    events: &'a [Event],
    bags: &'a [BagTrace],
    event_summaries: &'a [EventSummary],
    final_summary: &'a Option<String>,
    call_graph: Vec<(TemplateId, &'a str)>,
    parse_fallbacks: usize,
    failed_stage: &'a Option<String>,
}

impl PipelineTrace {
    pub fn new(document_id: impl Into<String>, mode: RunMode) -> Self {
        Self {
            document_id: document_id.into(),
            mode,
            paragraph_count: 0,
            local_summaries: Vec::new(),
            events: Vec::new(),
            bags: Vec::new(),
            shared_paragraphs: Vec::new(),
            event_summaries: Vec::new(),
            final_summary: None,
            calls: Vec::new(),
            backend_calls: 0,
            cache_hits: 0,
            prompt_tokens: 0,
            output_tokens: 0,
            parse_fallbacks: 0,
            timings: StageTimings::default(),
            failed_stage: None,
        }
    }

    pub(crate) fn record_calls(&mut self, calls: Vec<CallRecord>, fallbacks: usize) {
        for call in &calls {
            if call.from_cache {
                self.cache_hits += 1;
            } else {
                self.backend_calls += 1;
            }
            self.prompt_tokens += call.prompt_tokens;
            self.output_tokens += call.output_tokens;
        }
        self.calls.extend(calls);
        self.parse_fallbacks += fallbacks;
    }

    /// Template and prompt digest of every request, in pipeline order.
    pub fn call_graph(&self) -> Vec<(TemplateId, String)> {
        self.calls
            .iter()
            .map(|c| (c.template_id, c.prompt_digest.clone()))
            .collect()
    }

    pub fn calls_for(&self, template_id: TemplateId) -> usize {
        self.calls.iter().filter(|c| c.template_id == template_id).count()
    }

    /// Hex SHA-256 over the deterministic content of the trace: everything
    /// except timings, token counts and cache hit/miss flags.
    pub fn digest(&self) -> String {
        let view = DigestView {
            document_id: &self.document_id,
            mode: self.mode,
            paragraph_count: self.paragraph_count,
            local_summaries: &self.local_summaries,
            events: &self.events,
            bags: &self.bags,
            event_summaries: &self.event_summaries,
            final_summary: &self.final_summary,
            call_graph: self
                .calls
                .iter()
                .map(|c| (c.template_id, c.prompt_digest.as_str()))
                .collect(),
            parse_fallbacks: self.parse_fallbacks,
            failed_stage: &self.failed_stage,
        };
        let bytes = serde_json::to_vec(&view).expect("trace view serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

//! Long-document summarization through context packaging and reordering.
//!
//! A document is split into paragraphs, each paragraph gets a one-sentence
//! local summary, salient events are extracted from those summaries, and for
//! every event the most relevant paragraphs are gathered into a segment bag.
//! Bags are put into narrative order, summarized from their full text, and
//! the per-event summaries are stitched into the final summary.
//!
//! All model access goes through a [`backend::Gateway`], which adds a
//! persistent response cache, a bound on in-flight calls and exact call
//! accounting. [`backend::ScriptedBackend`] is a deterministic rule-based
//! stand-in for a real model.
//!
//! ```
//! use std::sync::Arc;
//! use hera_core::{DocumentRecord, Pipeline, PipelineConfig};
//!
//! let config = PipelineConfig::default();
//! let pipeline = Pipeline::from_config(config).unwrap();
//! let doc = DocumentRecord::new(
//!     "doc-1",
//!     "Real Madrid won the final at Wembley. It was their fifteenth title.\n\n\
//!      Dortmund had reached the final by beating Paris twice.",
//! );
//! let out = pipeline.run(&doc).unwrap();
//! assert!(!out.summary.text.is_empty());
//! assert_eq!(out.trace.backend_calls, out.trace.calls.iter().filter(|c| !c.from_cache).count());
//! ```

pub mod backend;
pub mod corpus;
pub mod error;
pub mod exec;
pub mod generation;
pub mod metrics;
pub mod packaging;
pub mod pipeline;
pub mod prompting;
pub mod reordering;
pub mod text;

pub use corpus::{load_dataset, normalize, segment, Dataset, DocumentRecord, Paragraph};
pub use error::{Error, Result, Task};
pub use generation::{EventSummary, FinalSummary};
pub use pipeline::{BatchItem, Pipeline, PipelineConfig, PipelineTrace, RunFailure, RunMode, RunOutput};

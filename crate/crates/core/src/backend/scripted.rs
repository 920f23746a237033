//! Deterministic rule-based backend.
//!
//! Every answer is a pure function of the rendered prompt, which makes it the
//! oracle for golden end-to-end and call-accounting tests:
//!
//! | template          | answer                                                     |
//! |-------------------|------------------------------------------------------------|
//! | `LocalSummary`    | first sentence of the paragraph                            |
//! | `RankParagraphs`  | numbered list, by descending word overlap with the event,  |
//! |                   | ties by ascending candidate number                         |
//! | `ExtractEvents`   | the listed sentences, one per line                         |
//! | `OrderSentences`  | `1, 2, ..., m` (input order)                               |
//! | `BagSummary`      | first sentences of the passages, joined by a space         |
//! | `Aggregate`       | summaries joined with `" Furthermore, "`                   |

use std::collections::HashSet;

use super::{Backend, BackendError, CompletionResult, PromptRequest};
use crate::prompting::{self, parse_layout, TemplateId};
use crate::text;

pub const AGGREGATE_JOINER: &str = " Furthermore, ";

#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    name: String,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self {
            name: "scripted".to_string(),
        }
    }

    /// Same rules under a different backend name (and therefore cache keys).
    pub fn named(name: impl Into<String>) -> Self {
        Self { name: name.into() }
    }

    pub fn answer(template_id: TemplateId, prompt: &str) -> String {
        let layout = parse_layout(prompt);
        let items = &layout.items;
        match template_id {
            TemplateId::LocalSummary => items.first().map(|p| first_sentence(p)).unwrap_or_default(),
            TemplateId::RankParagraphs => {
                let event: HashSet<String> = text::folded_words(layout.event.as_deref().unwrap_or(""))
                    .into_iter()
                    .collect();
                let mut scored: Vec<(usize, usize)> = items
                    .iter()
                    .enumerate()
                    .map(|(i, item)| {
                        let words: HashSet<String> = text::folded_words(item).into_iter().collect();
                        (words.intersection(&event).count(), i + 1)
                    })
                    .collect();
                scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
                scored
                    .iter()
                    .enumerate()
                    .map(|(pos, (_, candidate))| format!("{}. {candidate}", pos + 1))
                    .collect::<Vec<_>>()
                    .join("\n")
            }
            TemplateId::ExtractEvents => items
                .iter()
                .map(|s| text::squash_whitespace(s))
                .collect::<Vec<_>>()
                .join("\n"),
            TemplateId::OrderSentences => (1..=items.len())
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(", "),
            TemplateId::BagSummary => items
                .iter()
                .map(|p| first_sentence(p))
                .filter(|s| !s.is_empty())
                .collect::<Vec<_>>()
                .join(" "),
            TemplateId::Aggregate => items
                .iter()
                .map(|s| text::squash_whitespace(s))
                .collect::<Vec<_>>()
                .join(AGGREGATE_JOINER),
        }
    }
}

fn first_sentence(paragraph: &str) -> String {
    prompting::parse_sentence(paragraph).unwrap_or_default()
}

impl Backend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &PromptRequest) -> Result<CompletionResult, BackendError> {
        let text = Self::answer(request.template_id, &request.rendered_prompt);
        Ok(CompletionResult {
            prompt_tokens: text::word_count(&request.rendered_prompt) as u64,
            output_tokens: text::word_count(&text) as u64,
            text,
            backend_name: self.name.clone(),
            from_cache: false,
            latency_ms: 0,
        })
    }
}

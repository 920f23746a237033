//! Prompt templates and response parsing.
//!
//! Every prompt has the same block layout, blocks separated by a blank line:
//!
//! ```text
//! <instruction>
//!
//! <response hint>        (templates that expect a structured answer)
//!
//! Event: <event>         (RankParagraphs only)
//!
//! 1. <item>
//!
//! 2. <item>
//! ```
//!
//! Blank lines inside an item are collapsed to a single line break so the
//! layout stays unambiguous for both models and the scripted backend.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text;

pub const EVENT_LABEL: &str = "Event: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    LocalSummary,
    RankParagraphs,
    ExtractEvents,
    Aggregate,
    OrderSentences,
    BagSummary,
}

impl TemplateId {
    pub const ALL: [TemplateId; 6] = [
        TemplateId::LocalSummary,
        TemplateId::RankParagraphs,
        TemplateId::ExtractEvents,
        TemplateId::Aggregate,
        TemplateId::OrderSentences,
        TemplateId::BagSummary,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::LocalSummary => "local_summary",
            TemplateId::RankParagraphs => "rank_paragraphs",
            TemplateId::ExtractEvents => "extract_events",
            TemplateId::Aggregate => "aggregate",
            TemplateId::OrderSentences => "order_sentences",
            TemplateId::BagSummary => "bag_summary",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == name)
    }

    /// Instruction text used when no override is configured. The first four
    /// texts are fixed wording and must not be edited, typos included.
    pub fn default_instruction(self) -> &'static str {
        match self {
            TemplateId::LocalSummary => "Summarize the following paragraph in one sentences.",
            TemplateId::RankParagraphs => {
                "Rank the following sentences based on their relevance to the event."
            }
            TemplateId::ExtractEvents => {
                "Extract the most important events from the following summary sentences."
            }
            TemplateId::Aggregate => {
                "Generate connectives to concatenate all summaries to form a fluent text. DO NOT change the original semantics."
            }
            // Not published; plumbing prompts.
            TemplateId::OrderSentences => {
                "Arrange the following sentences in the most coherent narrative order."
            }
            TemplateId::BagSummary => "Summarize the following passages into one paragraph.",
        }
    }

    /// Answer-format line placed after the instruction, if any.
    pub fn response_hint(self) -> Option<&'static str> {
        match self {
            TemplateId::RankParagraphs => Some(
                "Answer with the sentence numbers only, most relevant first, separated by commas.",
            ),
            TemplateId::ExtractEvents => Some("Answer with one event per line."),
            TemplateId::OrderSentences => Some(
                "Answer with the sentence numbers only, in narrative order, separated by commas.",
            ),
            _ => None,
        }
    }

    pub fn needs_event(self) -> bool {
        self == TemplateId::RankParagraphs
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template {0} requires an event")]
    MissingEvent(TemplateId),
    #[error("template {0} does not take an event")]
    UnexpectedEvent(TemplateId),
    #[error("template {0} rendered with an empty payload")]
    EmptyPayload(TemplateId),
    #[error("no events could be parsed from the response")]
    NoEventsParsed,
    #[error("response is empty")]
    EmptyResponse,
    #[error("invalid prompt override file: {0}")]
    InvalidOverrides(String),
}

/// Instruction texts per template, with optional overrides.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptSet {
    overrides: BTreeMap<TemplateId, String>,
}

impl PromptSet {
    /// Loads an override file: a JSON object mapping template names
    /// (`local_summary`, `rank_paragraphs`, ...) to instruction texts.
    pub fn from_override_file(path: &Path) -> Result<Self, PromptError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| PromptError::InvalidOverrides(format!("{}: {e}", path.display())))?;
        let map: BTreeMap<String, String> = serde_json::from_str(&raw)
            .map_err(|e| PromptError::InvalidOverrides(e.to_string()))?;
        let mut set = PromptSet::default();
        for (name, instruction) in map {
            let id = TemplateId::from_name(&name)
                .ok_or_else(|| PromptError::InvalidOverrides(format!("unknown template {name}")))?;
            set = set.with_override(id, instruction);
        }
        Ok(set)
    }

    pub fn with_override(mut self, id: TemplateId, instruction: impl Into<String>) -> Self {
        self.overrides.insert(id, instruction.into());
        self
    }

    pub fn instruction(&self, id: TemplateId) -> &str {
        self.overrides
            .get(&id)
            .map(String::as_str)
            .unwrap_or_else(|| id.default_instruction())
    }

    pub fn render<S: AsRef<str>>(
        &self,
        id: TemplateId,
        payload: &[S],
        event: Option<&str>,
    ) -> Result<String, PromptError> {
        if payload.is_empty() {
            return Err(PromptError::EmptyPayload(id));
        }
        let mut blocks: Vec<String> = vec![self.instruction(id).to_string()];
        if let Some(hint) = id.response_hint() {
            blocks.push(hint.to_string());
        }
        match (id.needs_event(), event) {
            (true, Some(e)) => blocks.push(format!("{EVENT_LABEL}{}", text::squash_whitespace(e))),
            (true, None) => return Err(PromptError::MissingEvent(id)),
            (false, Some(_)) => return Err(PromptError::UnexpectedEvent(id)),
            (false, None) => {}
        }
        for (i, item) in payload.iter().enumerate() {
            blocks.push(format!("{}. {}", i + 1, collapse_blank_lines(item.as_ref())));
        }
        Ok(blocks.join("\n\n"))
    }
}

/// Renders with the built-in instruction texts.
pub fn render<S: AsRef<str>>(
    id: TemplateId,
    payload: &[S],
    event: Option<&str>,
) -> Result<String, PromptError> {
    PromptSet::default().render(id, payload, event)
}

fn collapse_blank_lines(item: &str) -> String {
    static BLANK: OnceLock<Regex> = OnceLock::new();
    let re = BLANK.get_or_init(|| Regex::new(r"\n(?:[ \t\r]*\n)+").unwrap());
    re.replace_all(item.trim_matches(|c| c == '\n' || c == '\r'), "\n")
        .into_owned()
}

/// The parts of a rendered prompt, recovered from its block layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptLayout {
    pub event: Option<String>,
    pub items: Vec<String>,
}

/// Splits a prompt produced by [`PromptSet::render`] back into its event and
/// numbered items. Unrecognised blocks before the first item are ignored.
pub fn parse_layout(prompt: &str) -> PromptLayout {
    let mut event = None;
    let mut items = Vec::new();
    for block in prompt.split("\n\n").skip(1) {
        let marker = format!("{}. ", items.len() + 1);
        if let Some(item) = block.strip_prefix(&marker) {
            items.push(item.to_string());
        } else if items.is_empty() {
            if let Some(e) = block.strip_prefix(EVENT_LABEL) {
                event = Some(e.to_string());
            }
        }
    }
    PromptLayout { event, items }
}

/// Result of interpreting a ranking response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingParse {
    /// 1-based candidate numbers; always a permutation of `1..=n`.
    pub order: Vec<usize>,
    /// No usable candidate number was found; `order` is the identity.
    pub fallback: bool,
}

/// Extracts candidate numbers from a numbered-list or comma-separated answer.
///
/// List markers such as `1)` or `2.` at the start of a line are not candidate
/// numbers. Out-of-range and repeated numbers are dropped, and any candidates
/// the answer never mentions are appended in ascending order.
pub fn parse_ranking(response: &str, candidate_count: usize) -> RankingParse {
    static MARKER: OnceLock<Regex> = OnceLock::new();
    static NUMBER: OnceLock<Regex> = OnceLock::new();
    let marker = MARKER.get_or_init(|| Regex::new(r"^\s*(?:\d+[.)]|[-*•])\s+").unwrap());
    let number = NUMBER.get_or_init(|| Regex::new(r"\d+").unwrap());

    let n = candidate_count;
    let mut seen = vec![false; n + 1];
    let mut order = Vec::with_capacity(n);
    for line in response.lines() {
        let body = match marker.find(line) {
            Some(m) if m.end() < line.len() => &line[m.end()..],
            _ => line,
        };
        for m in number.find_iter(body) {
            let Ok(value) = m.as_str().parse::<usize>() else {
                continue;
            };
            if (1..=n).contains(&value) && !seen[value] {
                seen[value] = true;
                order.push(value);
            }
        }
    }
    let fallback = order.is_empty();
    order.extend((1..=n).filter(|&c| !seen[c]));
    RankingParse { order, fallback }
}

/// Splits an event list into distinct event descriptions, at most `max_events`.
pub fn parse_events(response: &str, max_events: usize) -> Result<Vec<String>, PromptError> {
    static BULLET: OnceLock<Regex> = OnceLock::new();
    let bullet = BULLET.get_or_init(|| {
        Regex::new(r"^\s*(?:[-*•]+|\(?\d+[.):]|(?i:event)\s*\d*\s*:)\s*").unwrap()
    });
    let mut seen = HashSet::new();
    let mut events = Vec::new();
    for line in response.lines() {
        let stripped = bullet.replace(line, "");
        let event = text::squash_whitespace(&stripped);
        if event.is_empty() || !seen.insert(event.to_lowercase()) {
            continue;
        }
        events.push(event);
        if events.len() == max_events.max(1) {
            break;
        }
    }
    if events.is_empty() {
        return Err(PromptError::NoEventsParsed);
    }
    Ok(events)
}

/// Tokens ending in a period that do not end a sentence.
pub const ABBREVIATIONS: &[&str] = &[
    "al.", "approx.", "cf.", "co.", "dr.", "e.g.", "eq.", "eqs.", "etc.", "fig.", "figs.",
    "i.e.", "inc.", "jr.", "ltd.", "mr.", "mrs.", "ms.", "no.", "nos.", "pp.", "prof.", "ref.",
    "refs.", "sec.", "sr.", "st.", "tab.", "vol.", "vs.",
];

fn is_abbreviation(word: &str) -> bool {
    let lower = word.to_lowercase();
    let token = lower.trim_start_matches(|c: char| "([{\"'".contains(c));
    ABBREVIATIONS.contains(&token)
}

/// Returns the first sentence of `response`, whitespace-squashed.
///
/// A sentence ends at `.`, `!` or `?` (plus any closing quotes or brackets)
/// followed by whitespace or the end of text, unless the token ending in `.`
/// is a known abbreviation. Without a terminator the whole trimmed response is
/// returned.
pub fn parse_sentence(response: &str) -> Result<String, PromptError> {
    let squashed = text::squash_whitespace(response);
    if squashed.is_empty() {
        return Err(PromptError::EmptyResponse);
    }
    Ok(first_sentence(&squashed).to_string())
}

fn first_sentence(text: &str) -> &str {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut end = i + 1;
            while end < chars.len() && matches!(chars[end].1, '"' | '\'' | ')' | ']' | '”' | '’') {
                end += 1;
            }
            let at_boundary = end == chars.len() || chars[end].1.is_whitespace();
            if at_boundary {
                let word_start = text[..pos].rfind(' ').map_or(0, |s| s + 1);
                let word = &text[word_start..pos + 1];
                if c != '.' || !is_abbreviation(word) {
                    let byte_end = chars.get(end).map_or(text.len(), |&(p, _)| p);
                    return &text[..byte_end];
                }
            }
            i = end;
        } else {
            i += 1;
        }
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn local_summary_prompt_starts_with_instruction() {
        let p = render(TemplateId::LocalSummary, &["Cats purr."], None).unwrap();
        assert!(p.starts_with("Summarize the following paragraph in one sentences."));
        assert!(p.ends_with("\n\n1. Cats purr."));
    }

    #[test]
    fn rank_prompt_carries_event_and_items() {
        let p = render(TemplateId::RankParagraphs, &["a", "b", "c"], Some("final match")).unwrap();
        assert!(p.starts_with("Rank the following sentences based on their relevance to the event."));
        assert!(p.contains("\n\nEvent: final match\n\n1. a\n\n2. b\n\n3. c"));
        assert_eq!(
            render(TemplateId::RankParagraphs, &["a"], None),
            Err(PromptError::MissingEvent(TemplateId::RankParagraphs))
        );
        assert!(render(TemplateId::LocalSummary, &["a"], Some("e")).is_err());
        assert!(render::<&str>(TemplateId::LocalSummary, &[], None).is_err());
    }

    #[test]
    fn published_instructions_are_verbatim() {
        let p = render(TemplateId::ExtractEvents, &["x"], None).unwrap();
        assert!(p.starts_with("Extract the most important events from the following summary sentences."));
        let p = render(TemplateId::Aggregate, &["x"], None).unwrap();
        assert!(p.starts_with(
            "Generate connectives to concatenate all summaries to form a fluent text. DO NOT change the original semantics."
        ));
    }

    #[test]
    fn render_is_deterministic_and_order_sensitive() {
        let a = render(TemplateId::BagSummary, &["x", "y"], None).unwrap();
        assert_eq!(a, render(TemplateId::BagSummary, &["x", "y"], None).unwrap());
        assert_ne!(a, render(TemplateId::BagSummary, &["y", "x"], None).unwrap());
    }

    #[test]
    fn layout_round_trips_items() {
        let items = ["first line\nsecond line", "2. tricky", "Event: not an event"];
        let p = render(TemplateId::RankParagraphs, &items, Some("the event")).unwrap();
        let layout = parse_layout(&p);
        assert_eq!(layout.event.as_deref(), Some("the event"));
        assert_eq!(layout.items, items);

        let p = render(TemplateId::BagSummary, &["a\n\n\nb"], None).unwrap();
        assert_eq!(parse_layout(&p).items, ["a\nb"]);
    }

    #[test]
    fn overrides_replace_instruction() {
        let set = PromptSet::default().with_override(TemplateId::LocalSummary, "Be brief.");
        let p = set.render(TemplateId::LocalSummary, &["x"], None).unwrap();
        assert_eq!(p, "Be brief.\n\n1. x");
    }

    #[test]
    fn ranking_clean_input() {
        let r = parse_ranking("2, 1, 3", 3);
        assert_eq!(r.order, [2, 1, 3]);
        assert!(!r.fallback);
    }

    #[test]
    fn ranking_dedupes_and_completes() {
        let r = parse_ranking("Ranking:\n1) 3\n2) 3\n3) 1", 3);
        assert_eq!(r.order, [3, 1, 2]);
        assert!(!r.fallback);
    }

    #[test]
    fn ranking_bare_numbers_per_line() {
        assert_eq!(parse_ranking("3\n1\n2", 3).order, [3, 1, 2]);
        assert_eq!(parse_ranking("1. [2]\n2. [4]", 4).order, [2, 4, 1, 3]);
        assert_eq!(parse_ranking("9, 0, 2", 3).order, [2, 1, 3]);
    }

    #[test]
    fn ranking_fallback_is_identity() {
        let r = parse_ranking("no list here", 4);
        assert_eq!(r.order, [1, 2, 3, 4]);
        assert!(r.fallback);
    }

    #[test]
    fn events_are_split_and_stripped() {
        assert_eq!(
            parse_events("1. match result\n2. venue history", 3).unwrap(),
            ["match result", "venue history"]
        );
        assert_eq!(parse_events("- only one event", 1).unwrap(), ["only one event"]);
        assert_eq!(parse_events("a\nb\nc", 2).unwrap(), ["a", "b"]);
        assert_eq!(parse_events("* Cup won\n* cup WON\n(2) final", 3).unwrap(), ["Cup won", "final"]);
        assert_eq!(parse_events("", 3), Err(PromptError::NoEventsParsed));
        assert_eq!(parse_events("\n - \n", 3), Err(PromptError::NoEventsParsed));
    }

    #[test]
    fn first_sentence_rules() {
        assert_eq!(parse_sentence("Dortmund lost. They fought hard.").unwrap(), "Dortmund lost.");
        assert_eq!(parse_sentence("no terminator here").unwrap(), "no terminator here");
        assert_eq!(
            parse_sentence("See Fig. 2 for details. More text.").unwrap(),
            "See Fig. 2 for details."
        );
        assert_eq!(parse_sentence("Smith et al. showed it. Next.").unwrap(), "Smith et al. showed it.");
        assert_eq!(parse_sentence("It is 3.5 m tall! Wow.").unwrap(), "It is 3.5 m tall!");
        assert_eq!(parse_sentence("He said \"stop.\" Then").unwrap(), "He said \"stop.\"");
        assert_eq!(parse_sentence("  A.\n B. C.").unwrap(), "A.");
        assert_eq!(parse_sentence("A\nmultiline   one. Two.").unwrap(), "A multiline one.");
        assert_eq!(parse_sentence(" \n\t"), Err(PromptError::EmptyResponse));
    }

    proptest! {
        #[test]
        fn ranking_is_always_a_permutation(response in "\\PC{0,80}", n in 1usize..12) {
            let mut order = parse_ranking(&response, n).order;
            order.sort_unstable();
            prop_assert_eq!(order, (1..=n).collect::<Vec<_>>());
        }
    }
}

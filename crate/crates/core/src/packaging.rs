//! Context packaging: local summaries, event extraction, per-event ranking
//! and segment-bag construction.
//!
//! Each paragraph gets a one-sentence local summary that serves as its key.
//! Events are extracted from those keys, every event ranks all keys, and the
//! top `k` paragraphs of that ranking form the event's segment bag. Candidate
//! lists longer than `chunk_size` are ranked as a tournament: each chunk is
//! ranked on its own, the top `k` of every chunk go to a final round, and the
//! rest follow in (chunk rank, document order).

use serde::{Deserialize, Serialize};

use crate::backend::Gateway;
use crate::corpus::Paragraph;
use crate::error::{Error, Result, Task};
use crate::exec::{parallel_map, Staged};
use crate::prompting::{self, PromptError, TemplateId};

pub const DEFAULT_BAG_SIZE: usize = 5;
pub const DEFAULT_EVENT_COUNT: usize = 3;
pub const DEFAULT_CHUNK_SIZE: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalSummary {
    pub paragraph_index: usize,
    pub sentence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub event_index: usize,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BagPhase {
    Ranked,
    Reordered,
}

/// Paragraphs retrieved for one event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentBag {
    pub event: Event,
    pub members: Vec<usize>,
    pub phase: BagPhase,
}

/// One local summary per paragraph, in paragraph order.
pub fn summarize_all(paragraphs: &[Paragraph], gateway: &Gateway) -> Result<Staged<Vec<LocalSummary>>> {
    let results = parallel_map(paragraphs, gateway.concurrency(), |_, paragraph| {
        let task = Task::LocalSummary {
            paragraph_index: paragraph.index,
        };
        let prompt = gateway
            .prompts()
            .render(TemplateId::LocalSummary, &[&paragraph.text], None)
            .map_err(Error::prompt(task))?;
        let (completion, record) = gateway
            .call(TemplateId::LocalSummary, prompt)
            .map_err(Error::backend(task))?;
        let sentence = prompting::parse_sentence(&completion.text).map_err(Error::prompt(task))?;
        Ok::<_, Error>((
            LocalSummary {
                paragraph_index: paragraph.index,
                sentence,
            },
            record,
        ))
    });

    let mut staged = Staged::new(Vec::with_capacity(paragraphs.len()));
    for result in results {
        let (summary, record) = result?;
        staged.value.push(summary);
        staged.calls.push(record);
    }
    Ok(staged)
}

/// One extraction request; an unparseable answer is retried once with a
/// fresh (uncached) call.
fn extract_once(sentences: &[&str], gateway: &Gateway, n_events: usize) -> Result<Staged<Vec<String>>> {
    let task = Task::ExtractEvents;
    let prompt = gateway
        .prompts()
        .render(TemplateId::ExtractEvents, sentences, None)
        .map_err(Error::prompt(task))?;
    let mut staged = Staged::new(Vec::new());
    let (completion, record) = gateway
        .call(TemplateId::ExtractEvents, prompt.clone())
        .map_err(Error::backend(task))?;
    staged.calls.push(record);
    match prompting::parse_events(&completion.text, n_events) {
        Ok(events) => staged.value = events,
        Err(PromptError::NoEventsParsed) => {
            staged.fallbacks += 1;
            let (completion, record) = gateway
                .call_fresh(TemplateId::ExtractEvents, prompt)
                .map_err(Error::backend(task))?;
            staged.calls.push(record);
            staged.value =
                prompting::parse_events(&completion.text, n_events).map_err(Error::prompt(task))?;
        }
        Err(e) => return Err(Error::prompt(task)(e)),
    }
    Ok(staged)
}

/// Extracts up to `n_events` distinct events from the local summaries.
///
/// More than `chunk_size` summaries are split into chunks; the events found
/// in every chunk are merged by one more extraction over them.
pub fn extract_events(
    summaries: &[LocalSummary],
    gateway: &Gateway,
    n_events: usize,
    chunk_size: usize,
) -> Result<Staged<Vec<Event>>> {
    let n_events = n_events.max(1);
    let chunk_size = chunk_size.max(2);
    let sentences: Vec<&str> = summaries.iter().map(|s| s.sentence.as_str()).collect();

    let staged = if sentences.len() <= chunk_size {
        extract_once(&sentences, gateway, n_events)?
    } else {
        let chunks: Vec<&[&str]> = sentences.chunks(chunk_size).collect();
        let per_chunk = parallel_map(&chunks, gateway.concurrency(), |_, chunk| {
            extract_once(chunk, gateway, n_events)
        });
        let mut merged = Staged::new(Vec::new());
        let mut winners: Vec<String> = Vec::new();
        for result in per_chunk {
            winners.extend(merged.absorb(result?));
        }
        let winner_refs: Vec<&str> = winners.iter().map(String::as_str).collect();
        let events = merged.absorb(extract_once(&winner_refs, gateway, n_events)?);
        merged.value = events;
        merged
    };

    Ok(staged.map(|descriptions| {
        descriptions
            .into_iter()
            .enumerate()
            .map(|(event_index, description)| Event {
                event_index,
                description,
            })
            .collect()
    }))
}

/// Ranks every paragraph by relevance to `event`; the result is a
/// permutation of the summaries' paragraph indices.
pub fn rank_for_event(
    event: &Event,
    summaries: &[LocalSummary],
    gateway: &Gateway,
    chunk_size: usize,
    k: usize,
) -> Result<Staged<Vec<usize>>> {
    let positions: Vec<usize> = (0..summaries.len()).collect();
    let ranked = rank_positions(event, summaries, &positions, gateway, chunk_size.max(2), k.max(1))?;
    Ok(ranked.map(|order| order.into_iter().map(|p| summaries[p].paragraph_index).collect()))
}

/// Ranks `candidates` (positions into `summaries`, in document order).
fn rank_positions(
    event: &Event,
    summaries: &[LocalSummary],
    candidates: &[usize],
    gateway: &Gateway,
    chunk_size: usize,
    k: usize,
) -> Result<Staged<Vec<usize>>> {
    if candidates.len() <= 1 {
        return Ok(Staged::new(candidates.to_vec()));
    }
    // With k >= chunk_size every chunk would forward all of its candidates,
    // so chunking cannot shrink the final round.
    if candidates.len() <= chunk_size || k >= chunk_size {
        return rank_single(event, summaries, candidates, gateway);
    }

    let chunks: Vec<&[usize]> = candidates.chunks(chunk_size).collect();
    let chunk_rankings = parallel_map(&chunks, gateway.concurrency(), |_, chunk| {
        rank_positions(event, summaries, chunk, gateway, chunk_size, k)
    });

    let mut staged = Staged::new(Vec::with_capacity(candidates.len()));
    let mut winners = Vec::new();
    let mut losers: Vec<(usize, usize)> = Vec::new();
    for ranking in chunk_rankings {
        let ranking = staged.absorb(ranking?);
        for (rank, &position) in ranking.iter().enumerate() {
            if rank < k {
                winners.push(position);
            } else {
                losers.push((rank, position));
            }
        }
    }
    winners.sort_unstable();
    losers.sort_unstable();

    let finals = staged.absorb(rank_positions(event, summaries, &winners, gateway, chunk_size, k)?);
    staged.value = finals;
    staged.value.extend(losers.into_iter().map(|(_, position)| position));
    Ok(staged)
}

fn rank_single(
    event: &Event,
    summaries: &[LocalSummary],
    candidates: &[usize],
    gateway: &Gateway,
) -> Result<Staged<Vec<usize>>> {
    let task = Task::Rank {
        event_index: event.event_index,
    };
    let items: Vec<&str> = candidates.iter().map(|&p| summaries[p].sentence.as_str()).collect();
    let prompt = gateway
        .prompts()
        .render(TemplateId::RankParagraphs, &items, Some(&event.description))
        .map_err(Error::prompt(task))?;
    let (completion, record) = gateway
        .call(TemplateId::RankParagraphs, prompt)
        .map_err(Error::backend(task))?;
    let parsed = prompting::parse_ranking(&completion.text, candidates.len());
    Ok(Staged {
        value: parsed.order.iter().map(|&n| candidates[n - 1]).collect(),
        calls: vec![record],
        fallbacks: usize::from(parsed.fallback),
    })
}

/// Takes the first `k` entries of a ranking as the event's bag.
pub fn build_bag(event: &Event, ranking: &[usize], k: usize) -> SegmentBag {
    SegmentBag {
        event: event.clone(),
        members: ranking.iter().copied().take(k.max(1)).collect(),
        phase: BagPhase::Ranked,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{
        Backend, BackendError, CompletionResult, PromptRequest, ResponseCache, ScriptedBackend,
    };
    use std::sync::Arc;

    fn scripted() -> Gateway {
        Gateway::in_memory(Arc::new(ScriptedBackend::new()))
    }

    fn summaries(sentences: &[&str]) -> Vec<LocalSummary> {
        sentences
            .iter()
            .enumerate()
            .map(|(i, s)| LocalSummary {
                paragraph_index: i,
                sentence: s.to_string(),
            })
            .collect()
    }

    fn paragraphs(texts: &[&str]) -> Vec<Paragraph> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Paragraph {
                index: i,
                text: t.to_string(),
                span: (0, 0),
            })
            .collect()
    }

    fn event(description: &str) -> Event {
        Event {
            event_index: 0,
            description: description.into(),
        }
    }

    #[test]
    fn local_summaries_are_first_sentences() {
        let gw = scripted();
        let paras = paragraphs(&["One a. One b.", "Two a! Two b.", "Three"]);
        let staged = summarize_all(&paras, &gw).unwrap();
        let sentences: Vec<_> = staged.value.iter().map(|s| s.sentence.as_str()).collect();
        assert_eq!(sentences, ["One a.", "Two a!", "Three"]);
        assert_eq!(staged.backend_calls(), 3);

        let single = summarize_all(&paragraphs(&["Only. Once."]), &gw).unwrap();
        assert_eq!(single.calls.len(), 1);
    }

    #[test]
    fn warm_cache_needs_no_calls() {
        let cache = Arc::new(ResponseCache::in_memory());
        let texts: Vec<String> = (0..40).map(|i| format!("Paragraph {i} text. More.")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let paras = paragraphs(&refs);
        let cold = Gateway::new(Arc::new(ScriptedBackend::new()), cache.clone()).with_concurrency(4);
        assert_eq!(summarize_all(&paras, &cold).unwrap().backend_calls(), 40);
        let warm = Gateway::new(Arc::new(ScriptedBackend::new()), cache);
        let staged = summarize_all(&paras, &warm).unwrap();
        assert_eq!(staged.backend_calls(), 0);
        assert_eq!(warm.backend_calls(), 0);
    }

    #[test]
    fn events_are_leading_summaries() {
        let gw = scripted();
        let sums = summaries(&["s0.", "s1.", "s2.", "s3.", "s4."]);
        let events = extract_events(&sums, &gw, 2, 20).unwrap();
        let desc: Vec<_> = events.value.iter().map(|e| e.description.as_str()).collect();
        assert_eq!(desc, ["s0.", "s1."]);
        assert_eq!(events.value[1].event_index, 1);
        assert_eq!(extract_events(&sums, &gw, 1, 20).unwrap().value.len(), 1);
    }

    #[test]
    fn chunked_extraction_call_count() {
        let gw = scripted();
        let texts: Vec<String> = (0..60).map(|i| format!("sentence {i}.")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let staged = extract_events(&summaries(&refs), &gw, 3, 20).unwrap();
        assert_eq!(staged.calls.len(), 4);
        assert!(staged.calls.iter().all(|c| c.template_id == TemplateId::ExtractEvents));
        let desc: Vec<_> = staged.value.iter().map(|e| e.description.as_str()).collect();
        assert_eq!(desc, ["sentence 0.", "sentence 1.", "sentence 2."]);
    }

    struct Silent;

    impl Backend for Silent {
        fn name(&self) -> &str {
            "silent"
        }

        fn complete(&self, _: &PromptRequest) -> Result<CompletionResult, BackendError> {
            Ok(CompletionResult {
                text: "   ".into(),
                backend_name: "silent".into(),
                from_cache: false,
                latency_ms: 0,
                prompt_tokens: 0,
                output_tokens: 0,
            })
        }
    }

    #[test]
    fn unparseable_events_fail_after_one_retry() {
        let gw = Gateway::in_memory(Arc::new(Silent));
        let err = extract_events(&summaries(&["a."]), &gw, 2, 20).unwrap_err();
        assert!(matches!(
            err,
            Error::Prompt {
                task: Task::ExtractEvents,
                source: PromptError::NoEventsParsed
            }
        ));
        assert_eq!(gw.backend_calls(), 2);
    }

    #[test]
    fn ranking_by_overlap() {
        let gw = scripted();
        let sums = summaries(&["cats purr", "dogs bark", "cats nap"]);
        let staged = rank_for_event(&event("cats"), &sums, &gw, 20, 5).unwrap();
        assert_eq!(staged.value, [0, 2, 1]);
        assert_eq!(staged.calls.len(), 1);
    }

    #[test]
    fn single_candidate_needs_no_call() {
        let gw = scripted();
        let staged = rank_for_event(&event("x"), &summaries(&["only"]), &gw, 20, 5).unwrap();
        assert_eq!(staged.value, [0]);
        assert!(staged.calls.len() <= 1);
    }

    #[test]
    fn tournament_call_count_and_permutation() {
        let gw = scripted();
        let texts: Vec<String> = (0..45).map(|i| format!("item {} word{}", i, i % 7)).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let staged = rank_for_event(&event("word3 item"), &summaries(&refs), &gw, 20, 5).unwrap();
        assert_eq!(staged.calls.len(), 4);
        let mut sorted = staged.value.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..45).collect::<Vec<_>>());
        // word3 appears at 3, 10, 17, 24, 31, 38
        assert_eq!(&staged.value[..5], [3, 10, 17, 24, 31]);
    }

    #[test]
    fn ranking_uses_paragraph_indices() {
        let gw = scripted();
        let sums = vec![
            LocalSummary { paragraph_index: 4, sentence: "red".into() },
            LocalSummary { paragraph_index: 9, sentence: "blue".into() },
        ];
        assert_eq!(rank_for_event(&event("blue"), &sums, &gw, 20, 5).unwrap().value, [9, 4]);
    }

    #[test]
    fn bags_take_ranking_prefix() {
        let e = event("e");
        let bag = build_bag(&e, &[4, 0, 2, 1, 3], 3);
        assert_eq!(bag.members, [4, 0, 2]);
        assert_eq!(bag.phase, BagPhase::Ranked);
        assert_eq!(build_bag(&e, &[1, 0], 5).members, [1, 0]);
        assert_eq!(build_bag(&e, &[1, 0], 0).members, [1]);
    }
}

//! Context reordering.
//!
//! A bag's paragraphs are put into narrative order by ordering their local
//! summaries and permuting the paragraphs the same way. Strategies:
//!
//! - `document_order`: ascending paragraph index.
//! - `chain_order`: greedy coherence chain over word-set Jaccard similarity.
//! - `llm_order`: the backend orders the numbered sentences.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::Gateway;
use crate::error::{Error, Result, Task};
use crate::exec::Staged;
use crate::packaging::{BagPhase, LocalSummary, SegmentBag};
use crate::prompting::{self, TemplateId};
use crate::text;

/// Words ignored by the chain similarity.
pub const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "been", "but", "by", "for", "from", "had", "has",
    "have", "he", "her", "his", "in", "into", "is", "it", "its", "of", "on", "or", "she", "that",
    "the", "their", "them", "they", "this", "to", "was", "were", "which", "while", "who", "will",
    "with",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReorderStrategy {
    DocumentOrder,
    #[default]
    ChainOrder,
    LlmOrder,
}

impl ReorderStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            ReorderStrategy::DocumentOrder => "document_order",
            ReorderStrategy::ChainOrder => "chain_order",
            ReorderStrategy::LlmOrder => "llm_order",
        }
    }
}

impl fmt::Display for ReorderStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReorderStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "document_order" | "document" => Ok(ReorderStrategy::DocumentOrder),
            "chain_order" | "chain" => Ok(ReorderStrategy::ChainOrder),
            "llm_order" | "llm" => Ok(ReorderStrategy::LlmOrder),
            other => Err(format!(
                "unknown reorder strategy {other:?} (expected document_order, chain_order or llm_order)"
            )),
        }
    }
}

/// `permutation[out] = in`: output position `out` takes input item `in`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ordering {
    pub permutation: Vec<usize>,
    pub strategy_name: String,
    pub fallback_used: bool,
}

/// A sentence to order, keyed by the paragraph it represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Keyed<'a> {
    pub paragraph_index: usize,
    pub sentence: &'a str,
}

fn document_permutation(items: &[Keyed<'_>]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..items.len()).collect();
    perm.sort_by_key(|&i| (items[i].paragraph_index, i));
    perm
}

pub fn document_order(items: &[Keyed<'_>]) -> Ordering {
    Ordering {
        permutation: document_permutation(items),
        strategy_name: ReorderStrategy::DocumentOrder.as_str().into(),
        fallback_used: false,
    }
}

fn content_words(sentence: &str) -> HashSet<String> {
    text::folded_words(sentence)
        .into_iter()
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .collect()
}

/// |A ∩ B| / |A ∪ B|, zero when both sets are empty.
pub fn jaccard(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Greedy coherence chain: start at the lowest paragraph index, then keep
/// appending the unvisited sentence most similar to the current tail, ties
/// going to the lower paragraph index.
pub fn chain_order(items: &[Keyed<'_>]) -> Ordering {
    let words: Vec<HashSet<String>> = items.iter().map(|k| content_words(k.sentence)).collect();
    let by_index = document_permutation(items);
    let mut visited = vec![false; items.len()];
    let mut permutation = Vec::with_capacity(items.len());

    if let Some(&start) = by_index.first() {
        visited[start] = true;
        permutation.push(start);
    }
    while permutation.len() < items.len() {
        let tail = *permutation.last().unwrap();
        let mut best: Option<(usize, f64)> = None;
        // by_index order makes the first maximum the lowest paragraph index
        for &candidate in by_index.iter().filter(|&&c| !visited[c]) {
            let score = jaccard(&words[tail], &words[candidate]);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((candidate, score));
            }
        }
        let (next, _) = best.expect("an unvisited item remains");
        visited[next] = true;
        permutation.push(next);
    }

    Ordering {
        permutation,
        strategy_name: ReorderStrategy::ChainOrder.as_str().into(),
        fallback_used: false,
    }
}

/// Asks the backend for a narrative order; an unparseable answer falls back
/// to document order.
pub fn llm_order(items: &[Keyed<'_>], gateway: &Gateway, event_index: usize) -> Result<Staged<Ordering>> {
    if items.len() <= 1 {
        return Ok(Staged::new(Ordering {
            permutation: (0..items.len()).collect(),
            strategy_name: ReorderStrategy::LlmOrder.as_str().into(),
            fallback_used: false,
        }));
    }
    let task = Task::Order { event_index };
    let sentences: Vec<&str> = items.iter().map(|k| k.sentence).collect();
    let prompt = gateway
        .prompts()
        .render(TemplateId::OrderSentences, &sentences, None)
        .map_err(Error::prompt(task))?;
    let (completion, record) = gateway
        .call(TemplateId::OrderSentences, prompt)
        .map_err(Error::backend(task))?;
    let parsed = prompting::parse_ranking(&completion.text, items.len());
    let permutation = if parsed.fallback {
        document_permutation(items)
    } else {
        parsed.order.iter().map(|n| n - 1).collect()
    };
    Ok(Staged {
        value: Ordering {
            permutation,
            strategy_name: ReorderStrategy::LlmOrder.as_str().into(),
            fallback_used: parsed.fallback,
        },
        calls: vec![record],
        fallbacks: usize::from(parsed.fallback),
    })
}

fn is_bijection(permutation: &[usize]) -> bool {
    let mut seen = vec![false; permutation.len()];
    permutation
        .iter()
        .all(|&p| p < seen.len() && !std::mem::replace(&mut seen[p], true))
}

/// Permutes a ranked bag's members by ordering their local summaries.
///
/// Strategy failures (including backend errors of `llm_order`) fall back to
/// document order with `fallback_used` set.
pub fn reorder_bag(
    bag: &SegmentBag,
    summaries: &[LocalSummary],
    strategy: ReorderStrategy,
    gateway: &Gateway,
) -> Staged<(SegmentBag, Ordering)> {
    let sentence_of: HashMap<usize, &str> = summaries
        .iter()
        .map(|s| (s.paragraph_index, s.sentence.as_str()))
        .collect();
    let items: Vec<Keyed<'_>> = bag
        .members
        .iter()
        .map(|&m| Keyed {
            paragraph_index: m,
            sentence: sentence_of.get(&m).copied().unwrap_or(""),
        })
        .collect();

    let mut staged = match strategy {
        ReorderStrategy::DocumentOrder => Staged::new(document_order(&items)),
        ReorderStrategy::ChainOrder => Staged::new(chain_order(&items)),
        ReorderStrategy::LlmOrder => match llm_order(&items, gateway, bag.event.event_index) {
            Ok(staged) => staged,
            Err(e) => {
                tracing::warn!(error = %e, "ordering failed, using document order");
                fallback_ordering(&items, strategy)
            }
        },
    };
    if !is_bijection(&staged.value.permutation) || staged.value.permutation.len() != items.len() {
        let calls = std::mem::take(&mut staged.calls);
        staged = fallback_ordering(&items, strategy);
        staged.calls = calls;
    }

    staged.map(|ordering| {
        let members = ordering.permutation.iter().map(|&i| bag.members[i]).collect();
        (
            SegmentBag {
                event: bag.event.clone(),
                members,
                phase: BagPhase::Reordered,
            },
            ordering,
        )
    })
}

fn fallback_ordering(items: &[Keyed<'_>], strategy: ReorderStrategy) -> Staged<Ordering> {
    Staged {
        value: Ordering {
            permutation: document_permutation(items),
            strategy_name: strategy.as_str().into(),
            fallback_used: true,
        },
        calls: Vec::new(),
        fallbacks: 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Backend, BackendError, CompletionResult, PromptRequest, ScriptedBackend};
    use crate::packaging::Event;
    use itertools::Itertools;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn keyed<'a>(sentences: &[&'a str]) -> Vec<Keyed<'a>> {
        sentences
            .iter()
            .enumerate()
            .map(|(i, s)| Keyed {
                paragraph_index: i,
                sentence: s,
            })
            .collect()
    }

    fn bag(members: &[usize]) -> SegmentBag {
        SegmentBag {
            event: Event {
                event_index: 0,
                description: "e".into(),
            },
            members: members.to_vec(),
            phase: BagPhase::Ranked,
        }
    }

    fn summaries(n: usize) -> Vec<LocalSummary> {
        (0..n)
            .map(|i| LocalSummary {
                paragraph_index: i,
                sentence: format!("sentence {} about topic{}", i, i % 3),
            })
            .collect()
    }

    struct Canned(&'static str);

    impl Backend for Canned {
        fn name(&self) -> &str {
            "canned"
        }

        fn complete(&self, _: &PromptRequest) -> Result<CompletionResult, BackendError> {
            Ok(CompletionResult {
                text: self.0.into(),
                backend_name: "canned".into(),
                from_cache: false,
                latency_ms: 0,
                prompt_tokens: 0,
                output_tokens: 0,
            })
        }
    }

    struct Down;

    impl Backend for Down {
        fn name(&self) -> &str {
            "down"
        }

        fn complete(&self, _: &PromptRequest) -> Result<CompletionResult, BackendError> {
            Err(BackendError::Unreachable {
                attempts: 1,
                message: "refused".into(),
            })
        }
    }

    #[test]
    fn chain_follows_overlap() {
        // "a" is a stopword: similarities are 0→1 = 0, 0→2 = 0, 1→2 = 1/2.
        let ordering = chain_order(&keyed(&["a b", "a c", "c d"]));
        assert_eq!(ordering.permutation, [0, 1, 2]);

        let ordering = chain_order(&keyed(&["cup final", "weather report", "cup final won"]));
        assert_eq!(ordering.permutation, [0, 2, 1]);
    }

    #[test]
    fn chain_starts_at_lowest_paragraph_index() {
        let items = [
            Keyed { paragraph_index: 7, sentence: "x y" },
            Keyed { paragraph_index: 2, sentence: "y z" },
            Keyed { paragraph_index: 5, sentence: "x y" },
        ];
        // start at paragraph 2 (input 1); 2→7 and 2→5 tie at 1/3, lower index 5 wins
        assert_eq!(chain_order(&items).permutation, [1, 2, 0]);
    }

    #[test]
    fn chain_ties_and_pairs() {
        assert_eq!(chain_order(&keyed(&["same", "same", "same", "same"])).permutation, [0, 1, 2, 3]);
        let pair = [
            Keyed { paragraph_index: 9, sentence: "p" },
            Keyed { paragraph_index: 3, sentence: "q" },
        ];
        assert_eq!(chain_order(&pair).permutation, [1, 0]);
    }

    #[test]
    fn jaccard_values() {
        let a: HashSet<String> = ["x", "y"].map(String::from).into();
        let b: HashSet<String> = ["y", "z"].map(String::from).into();
        assert!((jaccard(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(jaccard(&HashSet::new(), &HashSet::new()), 0.0);
    }

    #[test]
    fn singleton_bag_is_unchanged() {
        let gw = Gateway::in_memory(Arc::new(ScriptedBackend::new()));
        for strategy in [ReorderStrategy::DocumentOrder, ReorderStrategy::ChainOrder, ReorderStrategy::LlmOrder] {
            let staged = reorder_bag(&bag(&[3]), &summaries(5), strategy, &gw);
            assert_eq!(staged.value.0.members, [3]);
            assert_eq!(staged.value.1.permutation, [0]);
            assert!(staged.calls.is_empty());
        }
    }

    #[test]
    fn document_order_sorts_members() {
        let gw = Gateway::in_memory(Arc::new(ScriptedBackend::new()));
        let staged = reorder_bag(&bag(&[7, 2, 5]), &summaries(8), ReorderStrategy::DocumentOrder, &gw);
        assert_eq!(staged.value.0.members, [2, 5, 7]);
        assert_eq!(staged.value.0.phase, BagPhase::Reordered);
    }

    #[test]
    fn scripted_llm_order_preserves_input() {
        let gw = Gateway::in_memory(Arc::new(ScriptedBackend::new()));
        let staged = reorder_bag(&bag(&[4, 0, 2]), &summaries(5), ReorderStrategy::LlmOrder, &gw);
        assert_eq!(staged.value.0.members, [4, 0, 2]);
        assert_eq!(staged.calls.len(), 1);
        let four = llm_order(&keyed(&["a", "b", "c", "d"]), &gw, 0).unwrap();
        assert_eq!(four.value.permutation, [0, 1, 2, 3]);
    }

    #[test]
    fn llm_order_garbage_falls_back() {
        let gw = Gateway::in_memory(Arc::new(Canned("I cannot do that")));
        let items = [
            Keyed { paragraph_index: 6, sentence: "a" },
            Keyed { paragraph_index: 1, sentence: "b" },
        ];
        let staged = llm_order(&items, &gw, 0).unwrap();
        assert_eq!(staged.value.permutation, [1, 0]);
        assert!(staged.value.fallback_used);
        assert_eq!(staged.fallbacks, 1);
    }

    #[test]
    fn llm_order_maps_to_zero_based() {
        let gw = Gateway::in_memory(Arc::new(Canned("3,1,2")));
        let staged = llm_order(&keyed(&["a", "b", "c"]), &gw, 0).unwrap();
        assert_eq!(staged.value.permutation, [2, 0, 1]);
        assert!(!staged.value.fallback_used);
    }

    #[test]
    fn backend_failure_falls_back_in_reorder_bag() {
        let gw = Gateway::in_memory(Arc::new(Down));
        assert!(llm_order(&keyed(&["a", "b"]), &gw, 0).is_err());
        let staged = reorder_bag(&bag(&[5, 1]), &summaries(6), ReorderStrategy::LlmOrder, &gw);
        assert_eq!(staged.value.0.members, [1, 5]);
        assert!(staged.value.1.fallback_used);
    }

    #[test]
    fn strategy_names_parse() {
        for s in [ReorderStrategy::DocumentOrder, ReorderStrategy::ChainOrder, ReorderStrategy::LlmOrder] {
            assert_eq!(s.as_str().parse::<ReorderStrategy>().unwrap(), s);
        }
        assert_eq!("chain".parse::<ReorderStrategy>().unwrap(), ReorderStrategy::ChainOrder);
        assert!("naon".parse::<ReorderStrategy>().is_err());
    }

    #[test]
    fn chain_order_is_a_bijection_exhaustively() {
        let vocab = ["cup", "final", "won", "the", "rain"];
        for m in 1..=6 {
            let all: HashSet<Vec<usize>> = (0..m).permutations(m).collect();
            // every assignment of two-word sentences drawn from a small vocabulary
            for seed in 0..40usize {
                let sentences: Vec<String> = (0..m)
                    .map(|i| format!("{} {}", vocab[(seed + i) % 5], vocab[(seed * 3 + i * i) % 5]))
                    .collect();
                let refs: Vec<&str> = sentences.iter().map(String::as_str).collect();
                let items = keyed(&refs);
                let first = chain_order(&items);
                assert!(all.contains(&first.permutation), "m={m} seed={seed}");
                assert_eq!(first, chain_order(&items));
            }
        }
    }

    proptest! {
        #[test]
        fn reorder_preserves_members(
            raw in proptest::collection::btree_set(0usize..30, 1..8),
            shuffle_seed in any::<u64>(),
            strategy in prop_oneof![
                Just(ReorderStrategy::DocumentOrder),
                Just(ReorderStrategy::ChainOrder),
                Just(ReorderStrategy::LlmOrder),
            ],
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut members: Vec<usize> = raw.into_iter().collect();
            members.shuffle(&mut rand::rngs::StdRng::seed_from_u64(shuffle_seed));
            let gw = Gateway::in_memory(Arc::new(ScriptedBackend::new()));
            let staged = reorder_bag(&bag(&members), &summaries(30), strategy, &gw);
            let mut before = members.clone();
            let mut after = staged.value.0.members.clone();
            before.sort_unstable();
            after.sort_unstable();
            prop_assert_eq!(before, after);
            prop_assert!(is_bijection(&staged.value.1.permutation));
        }
    }
}

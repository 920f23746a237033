//! Bag summaries and their aggregation into the document summary.

use serde::{Deserialize, Serialize};

use crate::backend::Gateway;
use crate::corpus::Paragraph;
use crate::error::{Error, Result, Task};
use crate::exec::Staged;
use crate::packaging::{Event, SegmentBag};
use crate::prompting::{PromptError, TemplateId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSummary {
    pub event: Event,
    pub text: String,
    pub source_members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalSummary {
    pub text: String,
    pub event_order: Vec<usize>,
    pub trace_ref: String,
}

/// How event summaries are sequenced before aggregation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateOrder {
    /// Ascending smallest source paragraph index, then event index.
    #[default]
    SourcePosition,
    /// Event salience order as extracted.
    EventIndex,
}

/// Summarizes a bag from its full paragraph texts, in member order.
pub fn summarize_bag(bag: &SegmentBag, paragraphs: &[Paragraph], gateway: &Gateway) -> Result<Staged<EventSummary>> {
    let task = Task::BagSummary {
        event_index: bag.event.event_index,
    };
    let texts: Vec<&str> = bag
        .members
        .iter()
        .map(|&m| paragraphs[m].text.as_str())
        .collect();
    let (text, record) = summarize_passages(&texts, gateway, task)?;
    Ok(Staged {
        value: EventSummary {
            event: bag.event.clone(),
            text,
            source_members: bag.members.clone(),
        },
        calls: vec![record],
        fallbacks: 0,
    })
}

/// One BagSummary request over `texts`; shared with whole-document mode.
pub(crate) fn summarize_passages(
    texts: &[&str],
    gateway: &Gateway,
    task: Task,
) -> Result<(String, crate::backend::CallRecord)> {
    let prompt = gateway
        .prompts()
        .render(TemplateId::BagSummary, texts, None)
        .map_err(Error::prompt(task))?;
    let (completion, record) = gateway
        .call(TemplateId::BagSummary, prompt)
        .map_err(Error::backend(task))?;
    let text = completion.text.trim().to_string();
    if text.is_empty() {
        return Err(Error::prompt(task)(PromptError::EmptyResponse));
    }
    Ok((text, record))
}

/// Positions into `summaries` in aggregation order.
pub fn aggregation_order(summaries: &[EventSummary], rule: AggregateOrder) -> Vec<usize> {
    let mut order: Vec<usize> = (0..summaries.len()).collect();
    match rule {
        AggregateOrder::SourcePosition => order.sort_by_key(|&i| {
            let s = &summaries[i];
            (s.source_members.iter().min().copied().unwrap_or(usize::MAX), s.event.event_index)
        }),
        AggregateOrder::EventIndex => order.sort_by_key(|&i| summaries[i].event.event_index),
    }
    order
}

/// Joins event summaries into the final text with one Aggregate request.
pub fn aggregate(
    summaries: &[EventSummary],
    gateway: &Gateway,
    rule: AggregateOrder,
    trace_ref: &str,
) -> Result<Staged<FinalSummary>> {
    let order = aggregation_order(summaries, rule);
    let event_order: Vec<usize> = order.iter().map(|&i| summaries[i].event.event_index).collect();
    let task = Task::Aggregate;
    let texts: Vec<&str> = order.iter().map(|&i| summaries[i].text.as_str()).collect();
    let prompt = gateway
        .prompts()
        .render(TemplateId::Aggregate, &texts, None)
        .map_err(Error::prompt(task))?;
    let (completion, record) = gateway
        .call(TemplateId::Aggregate, prompt)
        .map_err(Error::backend(task))?;
    let text = completion.text.trim().to_string();
    if text.is_empty() {
        return Err(Error::prompt(task)(PromptError::EmptyResponse));
    }
    Ok(Staged {
        value: FinalSummary {
            text,
            event_order,
            trace_ref: trace_ref.to_string(),
        },
        calls: vec![record],
        fallbacks: 0,
    })
}

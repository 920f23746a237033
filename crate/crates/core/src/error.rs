use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::backend::BackendError;
use crate::corpus::CorpusError;
use crate::prompting::PromptError;

/// The unit of work an error is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Task {
    LocalSummary { paragraph_index: usize },
    ExtractEvents,
    Rank { event_index: usize },
    Order { event_index: usize },
    BagSummary { event_index: usize },
    Aggregate,
    WholeDocument,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::LocalSummary { paragraph_index } => {
                write!(f, "local summary of paragraph {paragraph_index}")
            }
            Task::ExtractEvents => f.write_str("event extraction"),
            Task::Rank { event_index } => write!(f, "ranking for event {event_index}"),
            Task::Order { event_index } => write!(f, "ordering of bag {event_index}"),
            Task::BagSummary { event_index } => write!(f, "summary of bag {event_index}"),
            Task::Aggregate => f.write_str("aggregation"),
            Task::WholeDocument => f.write_str("whole-document summary"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{task}: {source}")]
    Backend {
        task: Task,
        #[source]
        source: BackendError,
    },
    #[error("{task}: {source}")]
    Prompt {
        task: Task,
        #[source]
        source: PromptError,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn backend(task: Task) -> impl FnOnce(BackendError) -> Error {
        move |source| Error::Backend { task, source }
    }

    pub(crate) fn prompt(task: Task) -> impl FnOnce(PromptError) -> Error {
        move |source| Error::Prompt { task, source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

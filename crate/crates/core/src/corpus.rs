//! Document model, paragraph segmentation and dataset ingestion.
//!
//! A paragraph boundary is a blank line in the normalized article. Fragments
//! that are too short to summarize (stray headings, figure markers) are folded
//! into a neighbour so that every [`Paragraph`] carries real content.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::text;

/// Separator placed between paragraphs in normalized text.
pub const PARAGRAPH_BREAK: &str = "\n\n";

pub const DEFAULT_MIN_WORDS: usize = 5;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("document contains no word tokens")]
    EmptyDocument,
    #[error("dataset not found: {0}")]
    DatasetNotFound(PathBuf),
    #[error("dataset {path} has no valid records ({skipped} skipped)")]
    DatasetEmpty { path: PathBuf, skipped: usize },
    #[error("failed to read dataset {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One source article plus its optional reference summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub article: String,
    pub reference: Option<String>,
}

impl DocumentRecord {
    pub fn new(id: impl Into<String>, article: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            article: article.into(),
            reference: None,
        }
    }

    pub fn with_reference(mut self, reference: impl Into<String>) -> Self {
        self.reference = Some(reference.into());
        self
    }
}

/// A contiguous block of the normalized article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub index: usize,
    pub text: String,
    /// Byte offsets `(start, end)` into the normalized article.
    pub span: (usize, usize),
}

/// Unifies line endings, strips trailing whitespace from every line, collapses
/// runs of blank lines to a single blank line and trims blank lines at both
/// ends. Idempotent.
pub fn normalize(raw: &str) -> String {
    let unified = raw.replace("\r\n", "\n").replace('\r', "\n");
    let mut out = String::with_capacity(unified.len());
    let mut pending_newlines = 0usize;
    for line in unified.split('\n') {
        let line = line.trim_end();
        if line.is_empty() {
            pending_newlines += 1;
            continue;
        }
        if !out.is_empty() {
            // A line break plus at most one blank line between content lines.
            out.push_str(if pending_newlines == 0 { "\n" } else { PARAGRAPH_BREAK });
        }
        pending_newlines = 0;
        out.push_str(line);
    }
    out
}

/// Splits a normalized article into paragraphs on blank lines.
///
/// Fragments with fewer than `min_words` word tokens are merged into the
/// following fragment, or into the preceding paragraph when they are last.
/// Joining the resulting texts with [`PARAGRAPH_BREAK`] reproduces `article`.
pub fn segment(article: &str, min_words: usize) -> Result<Vec<Paragraph>, CorpusError> {
    let min_words = min_words.max(1);
    if text::word_count(article) == 0 {
        return Err(CorpusError::EmptyDocument);
    }

    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut pending: Option<(usize, usize)> = None;
    let mut offset = 0usize;
    for fragment in article.split(PARAGRAPH_BREAK) {
        let span = (offset, offset + fragment.len());
        offset = span.1 + PARAGRAPH_BREAK.len();
        let span = match pending.take() {
            Some((start, _)) => (start, span.1),
            None => span,
        };
        if text::word_count(&article[span.0..span.1]) < min_words {
            pending = Some(span);
        } else {
            spans.push(span);
        }
    }
    if let Some((start, end)) = pending {
        match spans.last_mut() {
            Some(last) => last.1 = end,
            None => spans.push((start, end)),
        }
    }

    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(index, span)| Paragraph {
            index,
            text: article[span.0..span.1].to_string(),
            span,
        })
        .collect())
}

/// Raw JSON-lines record layout.
#[derive(Debug, Deserialize)]
struct RawRecord {
    #[serde(default)]
    id: Option<Value>,
    article: Value,
    #[serde(default)]
    r#abstract: Option<Value>,
}

fn text_field(value: &Value, joiner: &str) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Array(items) => {
            let parts: Option<Vec<&str>> = items.iter().map(Value::as_str).collect();
            parts.map(|p| p.join(joiner))
        }
        _ => None,
    }
}

fn id_field(value: &Value) -> Option<String> {
    match value {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Streaming reader over a JSON-lines dataset.
///
/// Malformed lines, empty articles and duplicate ids are skipped and counted.
pub struct DatasetStream {
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
    remaining: Option<usize>,
    seen: HashSet<String>,
    skipped: usize,
}

impl DatasetStream {
    pub fn open(path: &Path, limit: Option<usize>) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CorpusError::DatasetNotFound(path.to_path_buf()),
            _ => CorpusError::Io {
                path: path.to_path_buf(),
                source: e,
            },
        })?;
        Ok(Self {
            lines: BufReader::new(file).lines(),
            line_no: 0,
            remaining: limit,
            seen: HashSet::new(),
            skipped: 0,
        })
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    fn parse_line(&mut self, line: &str) -> Option<DocumentRecord> {
        let raw: RawRecord = serde_json::from_str(line).ok()?;
        let article = text_field(&raw.article, PARAGRAPH_BREAK)?;
        if text::word_count(&normalize(&article)) == 0 {
            return None;
        }
        let id = match &raw.id {
            Some(v) => id_field(v)?,
            None => self.line_no.to_string(),
        };
        if !self.seen.insert(id.clone()) {
            return None;
        }
        let reference = raw.r#abstract.as_ref().and_then(|v| text_field(v, " "));
        Some(DocumentRecord {
            id,
            article,
            reference,
        })
    }
}

impl Iterator for DatasetStream {
    type Item = DocumentRecord;

    fn next(&mut self) -> Option<DocumentRecord> {
        if self.remaining == Some(0) {
            return None;
        }
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => {
                    tracing::warn!(line = self.line_no + 1, error = %e, "unreadable dataset line");
                    self.line_no += 1;
                    self.skipped += 1;
                    continue;
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            match self.parse_line(&line) {
                Some(record) => {
                    if let Some(n) = self.remaining.as_mut() {
                        *n -= 1;
                    }
                    return Some(record);
                }
                None => {
                    tracing::warn!(line = self.line_no, "skipping malformed dataset record");
                    self.skipped += 1;
                }
            }
        }
    }
}

/// A fully loaded dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<DocumentRecord>,
    pub skipped: usize,
}

/// Loads up to `limit` valid records from a JSON-lines file.
pub fn load_dataset(path: &Path, limit: Option<usize>) -> Result<Dataset, CorpusError> {
    let mut stream = DatasetStream::open(path, limit)?;
    let records: Vec<DocumentRecord> = stream.by_ref().collect();
    let skipped = stream.skipped();
    if records.is_empty() {
        return Err(CorpusError::DatasetEmpty {
            path: path.to_path_buf(),
            skipped,
        });
    }
    Ok(Dataset { records, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    #[test]
    fn normalize_unifies_line_endings() {
        assert_eq!(normalize("a\r\n\r\nb"), "a\n\nb");
        assert_eq!(normalize("a\rb"), "a\nb");
    }

    #[test]
    fn normalize_collapses_blank_runs() {
        assert_eq!(normalize("a\n\n\n\nb"), "a\n\nb");
        assert_eq!(normalize("a  \n \t\n\nb\t"), "a\n\nb");
        assert_eq!(normalize("\n\n  x\n\n"), "  x");
    }

    #[test]
    fn segment_two_blocks() {
        let paras = segment("p1 has five words here\n\np2 also has five words", 5).unwrap();
        assert_eq!(paras.len(), 2);
        assert_eq!(paras.iter().map(|p| p.index).collect::<Vec<_>>(), [0, 1]);
        assert_eq!(paras[1].span, (24, 46));
    }

    #[test]
    fn short_fragment_merges_forward() {
        let article = "tiny\n\nlong paragraph with many words following here";
        let paras = segment(article, 3).unwrap();
        assert_eq!(paras.len(), 1);
        assert_eq!(paras[0].text, article);
    }

    #[test]
    fn short_last_fragment_merges_backward() {
        let article = "one two three four five\n\nsix seven eight nine ten\n\nEnd";
        let paras = segment(article, 3).unwrap();
        assert_eq!(paras.len(), 2);
        assert_eq!(paras[1].text, "six seven eight nine ten\n\nEnd");
    }

    #[test]
    fn short_document_is_one_paragraph() {
        let paras = segment("just two", 5).unwrap();
        assert_eq!(paras.len(), 1);
    }

    #[test]
    fn wordless_document_is_rejected() {
        assert!(matches!(segment("--- ...", 5), Err(CorpusError::EmptyDocument)));
    }

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn load_respects_limit() {
        let f = write_lines(&[
            r#"{"id":"a","article":"first article","abstract":"x"}"#,
            r#"{"id":"b","article":"second article"}"#,
            r#"{"id":"c","article":"third article"}"#,
        ]);
        let ds = load_dataset(f.path(), Some(2)).unwrap();
        assert_eq!(ds.records.len(), 2);
        assert_eq!(ds.records[0].reference.as_deref(), Some("x"));
        assert_eq!(ds.records[1].reference, None);
    }

    #[test]
    fn load_skips_malformed() {
        let f = write_lines(&[
            r#"{"article":"first article"}"#,
            r#"{"article": 12"#,
            r#"{"article":"third article"}"#,
        ]);
        let ds = load_dataset(f.path(), None).unwrap();
        assert_eq!(ds.records.len(), 2);
        assert_eq!(ds.skipped, 1);
        // ids default to line numbers
        assert_eq!(ds.records[0].id, "1");
        assert_eq!(ds.records[1].id, "3");
    }

    #[test]
    fn duplicate_ids_are_skipped() {
        let f = write_lines(&[
            r#"{"id":"a","article":"first article"}"#,
            r#"{"id":"a","article":"again"}"#,
        ]);
        let ds = load_dataset(f.path(), None).unwrap();
        assert_eq!(ds.records.len(), 1);
        assert_eq!(ds.skipped, 1);
    }

    #[test]
    fn array_articles_are_joined() {
        let f = write_lines(&[r#"{"article":["para one","para two"],"abstract":["s1.","s2."]}"#]);
        let ds = load_dataset(f.path(), None).unwrap();
        assert_eq!(ds.records[0].article, "para one\n\npara two");
        assert_eq!(ds.records[0].reference.as_deref(), Some("s1. s2."));
    }

    #[test]
    fn load_errors() {
        assert!(matches!(
            load_dataset(Path::new("/nonexistent/data.jsonl"), None),
            Err(CorpusError::DatasetNotFound(_))
        ));
        let f = write_lines(&["not json", r#"{"article":"   "}"#]);
        match load_dataset(f.path(), None) {
            Err(CorpusError::DatasetEmpty { skipped, .. }) => assert_eq!(skipped, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(raw in "[a-c \t\r\n.]{0,60}") {
            let once = normalize(&raw);
            prop_assert_eq!(normalize(&once), once.clone());
        }

        #[test]
        fn segmentation_reconstructs(raw in "[a-z \t\r\n,]{0,200}", min_words in 1usize..6) {
            let article = normalize(&raw);
            match segment(&article, min_words) {
                Ok(paras) => {
                    let joined = paras.iter().map(|p| p.text.as_str()).collect::<Vec<_>>().join(PARAGRAPH_BREAK);
                    prop_assert_eq!(joined, article.clone());
                    for (i, p) in paras.iter().enumerate() {
                        prop_assert_eq!(p.index, i);
                        prop_assert_eq!(&article[p.span.0..p.span.1], p.text.as_str());
                        prop_assert!(text::word_count(&p.text) >= 1);
                    }
                    for w in paras.windows(2) {
                        prop_assert!(w[0].span.1 < w[1].span.0);
                    }
                }
                Err(CorpusError::EmptyDocument) => prop_assert_eq!(text::word_count(&article), 0),
                Err(e) => prop_assert!(false, "unexpected error {}", e),
            }
        }
    }
}

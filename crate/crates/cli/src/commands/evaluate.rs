//! ROUGE evaluation of a summaries file against dataset references.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use hera_core::metrics::{score_all, TokenizerOptions};
use hera_core::DocumentRecord;
use serde::{Deserialize, Serialize};

use super::mean;
use crate::error::CliError;
use crate::table;

pub const ROUGE_COLUMNS: [&str; 3] = ["rouge1", "rouge2", "rouge_l"];

/// A prediction as read back from a summaries file. Only `id` and `summary`
/// are required; trace fields are carried into the report when present.
#[derive(Debug, Clone, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub summary: Option<String>,
    #[serde(default)]
    pub trace: Option<PredictionTrace>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct PredictionTrace {
    pub wall_ms: Option<f64>,
    pub backend_calls: Option<usize>,
}

/// Scores ×100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub id: String,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub external: BTreeMap<String, f64>,
    pub wall_ms: Option<f64>,
    pub backend_calls: Option<usize>,
}

impl ReportRow {
    /// Every numeric column of the row by name.
    pub fn columns(&self) -> Vec<(String, f64)> {
        let mut cols = vec![
            ("rouge1".to_string(), self.rouge1),
            ("rouge2".to_string(), self.rouge2),
            ("rouge_l".to_string(), self.rouge_l),
        ];
        cols.extend(self.external.iter().map(|(k, v)| (k.clone(), *v)));
        if let Some(ms) = self.wall_ms {
            cols.push(("wall_ms".into(), ms));
        }
        if let Some(calls) = self.backend_calls {
            cols.push(("backend_calls".into(), calls as f64));
        }
        cols
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    /// Mean of each column over the rows that have it.
    pub means: BTreeMap<String, f64>,
    pub config: serde_json::Value,
}

impl Report {
    pub fn new(rows: Vec<ReportRow>, config: serde_json::Value) -> Self {
        let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for row in &rows {
            for (name, value) in row.columns() {
                columns.entry(name).or_default().push(value);
            }
        }
        let means = columns
            .into_iter()
            .filter_map(|(name, values)| mean(values).map(|m| (name, m)))
            .collect();
        Self { rows, means, config }
    }

    pub fn external_columns(&self) -> Vec<String> {
        let names: BTreeSet<&String> = self.rows.iter().flat_map(|r| r.external.keys()).collect();
        names.into_iter().cloned().collect()
    }

    pub fn render(&self) -> String {
        let external = self.external_columns();
        let mut headers = vec!["id", "R-1", "R-2", "R-L"];
        headers.extend(external.iter().map(String::as_str));
        headers.extend(["wall ms", "calls"]);
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), table::score);
        let mut rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut cells = vec![r.id.clone(), table::score(r.rouge1), table::score(r.rouge2), table::score(r.rouge_l)];
                cells.extend(external.iter().map(|name| cell(r.external.get(name).copied())));
                cells.push(cell(r.wall_ms));
                cells.push(r.backend_calls.map_or_else(|| "-".into(), |c| c.to_string()));
                cells
            })
            .collect();
        let mut means = vec!["mean".to_string()];
        means.extend(
            ROUGE_COLUMNS
                .iter()
                .map(|c| c.to_string())
                .chain(external.iter().cloned())
                .chain(["wall_ms".to_string(), "backend_calls".to_string()])
                .map(|c| cell(self.means.get(&c).copied())),
        );
        rows.push(means);
        table::render(&headers, &rows)
    }
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line)
                .map_err(|e| CliError::Input(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub type ExternalScores = HashMap<String, BTreeMap<String, f64>>;

/// Reads per-document scores computed elsewhere (BERTScore, FactCC, ...).
///
/// Accepts either JSON lines of `{"id": ..., "<metric>": number, ...}` or a
/// single JSON object mapping id to `{"<metric>": number}`. Non-numeric
/// fields are ignored.
pub fn read_external_scores(path: &Path) -> Result<ExternalScores, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let numeric = |obj: &serde_json::Map<String, serde_json::Value>| -> BTreeMap<String, f64> {
        obj.iter()
            .filter(|(k, _)| k.as_str() != "id")
            .filter_map(|(k, v)| v.as_f64().map(|f| (k.clone(), f)))
            .collect()
    };
    if let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(&text) {
        if !map.contains_key("id") {
            return Ok(map
                .iter()
                .filter_map(|(id, v)| v.as_object().map(|o| (id.clone(), numeric(o))))
                .collect());
        }
    }
    let mut scores = ExternalScores::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |why: &str| CliError::Input(format!("{}:{}: {why}", path.display(), i + 1));
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(&e.to_string()))?;
        let obj = value.as_object().ok_or_else(|| bad("expected an object"))?;
        let id = match obj.get("id") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => return Err(bad("missing id")),
        };
        scores.insert(id, numeric(obj));
    }
    Ok(scores)
}

/// Scores every prediction against the reference with the same id.
///
/// Every reference needs a prediction and every prediction a reference;
/// otherwise the unmatched ids are reported. Failed predictions (no summary)
/// score zero.
pub fn cmd_evaluate(
    predictions: &[Prediction],
    references: &[DocumentRecord],
    external: Option<&ExternalScores>,
    options: TokenizerOptions,
) -> Result<Report, CliError> {
    let by_id: HashMap<&str, &Prediction> = predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let reference_ids: BTreeSet<&str> = references.iter().map(|r| r.id.as_str()).collect();
    let missing: Vec<String> = references
        .iter()
        .filter(|r| !by_id.contains_key(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    let unknown: Vec<String> = predictions
        .iter()
        .filter(|p| !reference_ids.contains(p.id.as_str()))
        .map(|p| p.id.clone())
        .collect();
    if !missing.is_empty() || !unknown.is_empty() {
        return Err(CliError::IdMismatch { missing, unknown });
    }
    let no_reference: Vec<&str> = references
        .iter()
        .filter(|r| r.reference.is_none())
        .map(|r| r.id.as_str())
        .collect();
    if !no_reference.is_empty() {
        return Err(CliError::Input(format!("documents without a reference: {no_reference:?}")));
    }

    let rows = references
        .iter()
        .map(|doc| {
            let prediction = by_id[doc.id.as_str()];
            let reference = doc.reference.as_deref().unwrap_or_default();
            let scores = score_all(prediction.summary.as_deref().unwrap_or_default(), reference, options);
            let trace = prediction.trace.clone().unwrap_or_default();
            ReportRow {
                id: doc.id.clone(),
                rouge1: scores.rouge1.f1 * 100.0,
                rouge2: scores.rouge2.f1 * 100.0,
                rouge_l: scores.rouge_l.f1 * 100.0,
                external: external
                    .and_then(|e| e.get(&doc.id))
                    .cloned()
                    .unwrap_or_default(),
                wall_ms: trace.wall_ms,
                backend_calls: trace.backend_calls,
            }
        })
        .collect();
    let config = serde_json::json!({ "stem": options.stem, "scale": 100 });
    Ok(Report::new(rows, config))
}

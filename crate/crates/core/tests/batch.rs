//! Batch runs: failure isolation, ordering, cache replay and dataset input.

use std::io::Write;
use std::sync::Arc;

use hera_core::backend::{Backend, BackendError, CompletionResult, PromptRequest, ResponseCache, ScriptedBackend};
use hera_core::{load_dataset, DocumentRecord, Error, Pipeline, PipelineConfig, Task};

const POISON: &str = "zzpoison";

/// The scripted backend, except that any prompt mentioning [`POISON`] fails.
struct Poisoned(ScriptedBackend);

impl Backend for Poisoned {
    fn name(&self) -> &str {
        "poisoned"
    }

    fn complete(&self, request: &PromptRequest) -> Result<CompletionResult, BackendError> {
        if request.rendered_prompt.contains(POISON) {
            return Err(BackendError::Rejected {
                status: 500,
                message: "poisoned prompt".into(),
            });
        }
        self.0.complete(request)
    }
}

fn doc(id: &str, topic: &str) -> DocumentRecord {
    DocumentRecord::new(
        id,
        format!(
            "The {topic} opened on Monday with a short speech. Crowds gathered early.\n\n\
             Officials said the {topic} had cost more than planned. Critics agreed.\n\n\
             By Friday the {topic} had drawn record numbers of visitors. Organisers celebrated."
        ),
    )
}

fn pipeline(backend: Arc<dyn Backend>, cache: Arc<ResponseCache>, concurrency: usize) -> Pipeline {
    let mut config = PipelineConfig::default();
    config.packaging.k = 2;
    config.packaging.n_events = 2;
    config.run.concurrency = concurrency;
    let gateway = config.gateway_for(backend, cache).unwrap();
    Pipeline::new(config, Arc::new(gateway)).unwrap()
}

#[test]
fn failures_are_isolated_and_order_is_kept() {
    let docs = [doc("a", "museum"), doc("b", POISON), doc("c", "bridge")];
    let p = pipeline(
        Arc::new(Poisoned(ScriptedBackend::new())),
        Arc::new(ResponseCache::in_memory()),
        4,
    );
    let items = p.run_batch(&docs).unwrap();
    let ids: Vec<&str> = items.iter().map(|i| i.id.as_str()).collect();
    assert_eq!(ids, ["a", "b", "c"]);
    assert!(items[0].result.is_ok());
    assert!(items[2].result.is_ok());

    let failure = items[1].result.as_ref().unwrap_err();
    assert!(matches!(
        failure.error,
        Error::Backend {
            task: Task::LocalSummary { paragraph_index: 0 },
            source: BackendError::Rejected { status: 500, .. }
        }
    ));
    assert_eq!(failure.trace.failed_stage.as_deref(), Some("summarize"));
    assert_eq!(failure.trace.document_id, "b");
    assert_eq!(failure.trace.paragraph_count, 3);
}

#[test]
fn warm_batch_replays_without_backend_calls() {
    let docs = [doc("a", "museum"), doc("b", "festival"), doc("c", "bridge")];
    let dir = tempfile::tempdir().unwrap();
    let cache = Arc::new(ResponseCache::on_disk(dir.path()).unwrap());
    let cold = pipeline(Arc::new(ScriptedBackend::new()), cache, 8);
    let first = cold.run_batch(&docs).unwrap();
    assert!(cold.gateway().backend_calls() > 0);

    // a new cache handle over the same directory, as in a second process
    let reopened = Arc::new(ResponseCache::on_disk(dir.path()).unwrap());
    let warm = pipeline(Arc::new(ScriptedBackend::new()), reopened, 1);
    let second = warm.run_batch(&docs).unwrap();
    assert_eq!(warm.gateway().backend_calls(), 0);
    for (a, b) in first.iter().zip(&second) {
        let (a, b) = (a.result.as_ref().unwrap(), b.result.as_ref().unwrap());
        assert_eq!(a.summary, b.summary);
        assert_eq!(a.trace.digest(), b.trace.digest());
        assert_eq!(b.trace.backend_calls, 0);
        assert_eq!(b.trace.cache_hits, a.trace.calls.len());
    }
}

#[test]
fn budget_exhaustion_fails_documents_not_the_batch() {
    let mut config = PipelineConfig::default();
    config.backend.max_calls = 5;
    let p = Pipeline::from_config(config).unwrap();
    let items = p.run_batch(&[doc("a", "museum"), doc("b", "bridge")]).unwrap();
    assert_eq!(items.len(), 2);
    assert!(items.iter().any(|i| matches!(
        &i.result,
        Err(f) if matches!(f.error, Error::Backend { source: BackendError::BudgetExceeded { limit: 5 }, .. })
    )));
    assert!(p.gateway().backend_calls() <= 5);
}

#[test]
fn dataset_limit_and_batch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.jsonl");
    let mut file = std::fs::File::create(&path).unwrap();
    for (id, topic) in [("x1", "museum"), ("x2", "festival"), ("x3", "bridge")] {
        let record = serde_json::json!({ "id": id, "article": doc(id, topic).article, "abstract": ["A", "b."] });
        writeln!(file, "{record}").unwrap();
    }
    drop(file);

    let all = load_dataset(&path, None).unwrap();
    assert_eq!(all.records.len(), 3);
    assert_eq!(all.records[0].reference.as_deref(), Some("A b."));

    let one = load_dataset(&path, Some(1)).unwrap();
    let items = Pipeline::from_config(PipelineConfig::default())
        .unwrap()
        .run_batch(&one.records)
        .unwrap();
    assert_eq!(items.len(), 1);
    assert_eq!(items[0].id, "x1");
}

#[test]
fn concurrency_does_not_change_batch_output() {
    let docs: Vec<DocumentRecord> = ["museum", "festival", "bridge", "harbor", "election"]
        .iter()
        .enumerate()
        .map(|(i, t)| doc(&format!("d{i}"), t))
        .collect();
    let digests = |concurrency| -> Vec<String> {
        pipeline(Arc::new(ScriptedBackend::new()), Arc::new(ResponseCache::in_memory()), concurrency)
            .run_batch(&docs)
            .unwrap()
            .iter()
            .map(|i| i.result.as_ref().unwrap().trace.digest())
            .collect()
    };
    assert_eq!(digests(1), digests(8));
}

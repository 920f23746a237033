//! Shared fixtures for the CLI integration tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use hera_core::DocumentRecord;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

pub const CORPUS_SEED: u64 = 7;

const VOCAB: &[&str] = &[
    "river", "bridge", "council", "vote", "harbor", "storm", "farmers", "market", "prices", "school",
    "teachers", "strike", "railway", "station", "engineers", "repair", "museum", "exhibit", "painting",
    "festival", "music", "crowd", "police", "report", "mayor", "budget", "hospital", "doctors",
    "patients", "winter", "snow", "roads", "closed", "drivers", "fuel", "shortage", "factory", "workers",
    "wages", "union", "election", "candidates", "debate", "library", "books", "students", "exam",
    "results", "forest", "fire", "crews", "village", "water", "supply", "court", "ruling", "appeal",
    "team", "match", "victory", "coach", "stadium", "tickets", "ferry", "island", "tourists", "summer",
];

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn golden_text() -> String {
    std::fs::read_to_string(fixtures_dir().join("golden_document.txt")).expect("golden document")
}

pub fn golden_document() -> DocumentRecord {
    DocumentRecord::new("golden_document", golden_text())
}

fn sentence(rng: &mut StdRng) -> String {
    let n = rng.gen_range(6..=11);
    let mut words: Vec<&str> = (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect();
    words.insert(rng.gen_range(1..words.len()), "the");
    let mut s = words.join(" ");
    s[..1].make_ascii_uppercase();
    s.push('.');
    s
}

/// A deterministic corpus of `n` documents with 8 to 12 paragraphs each and
/// a reference built from a few leading sentences.
pub fn corpus(n: usize) -> Vec<DocumentRecord> {
    let mut rng = StdRng::seed_from_u64(CORPUS_SEED);
    (0..n)
        .map(|d| {
            let paragraphs: Vec<Vec<String>> = (0..8 + d % 5)
                .map(|_| (0..rng.gen_range(2..=3)).map(|_| sentence(&mut rng)).collect())
                .collect();
            let article = paragraphs.iter().map(|p| p.join(" ")).collect::<Vec<_>>().join("\n\n");
            let reference = [0, 2, 4].iter().map(|&i| paragraphs[i][0].as_str()).collect::<Vec<_>>().join(" ");
            DocumentRecord::new(format!("doc-{d:02}"), article).with_reference(reference)
        })
        .collect()
}

/// Writes `docs` as a JSON-lines dataset with `abstract` references.
pub fn write_dataset(path: &Path, docs: &[DocumentRecord]) {
    let lines: Vec<String> = docs
        .iter()
        .map(|d| {
            serde_json::json!({ "id": d.id, "article": d.article, "abstract": d.reference }).to_string()
        })
        .collect();
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

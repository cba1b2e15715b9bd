#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use pairalign::domains::{generate_synth2d, write_embedding_records, EmbeddingRecord, QuestionManifest, Synth2dConfig};
use pairalign::prefcore::{Candidate, CandidatePool};
use pairalign_service::{EventStore, ManualClock, MemoryStore, QuestionEntry, ServiceConfig, SessionManager};

pub fn manifest(id: &str, budget: Option<usize>, checkpoints: Option<Vec<usize>>) -> QuestionManifest {
    QuestionManifest {
        question_id: id.into(),
        prompt: format!("prompt for {id}"),
        baseline_id: "baseline".into(),
        pool_path: "unused.jsonl".into(),
        persona: Some("likes spicy food".into()),
        checkpoints,
        budget,
    }
}

/// Synthetic questions `synth2d-q0..`, a single-candidate question `solo`,
/// and a food-style question with budget 10 and checkpoints {5, 10}.
pub fn questions() -> Vec<QuestionEntry> {
    let cfg = Synth2dConfig { num_questions: 2, num_users: 1, master_seed: 5, ..Default::default() };
    let mut out: Vec<QuestionEntry> = generate_synth2d::<f64>(&cfg)
        .unwrap()
        .into_iter()
        .map(|q| QuestionEntry::new(manifest(q.pool.question_id(), None, None), q.pool))
        .collect();
    let solo = CandidatePool::new(
        "solo",
        vec![Candidate::new("solo-y0", vec![0.1, 0.0], "only answer").unwrap()],
        Some(pairalign::prefcore::Baseline::Separate(Candidate::new("solo-b", vec![0.0, 0.0], "baseline").unwrap())),
    )
    .unwrap();
    out.push(QuestionEntry::new(manifest("solo", None, None), solo));
    let food = generate_synth2d::<f64>(&Synth2dConfig { num_questions: 1, master_seed: 77, ..Default::default() })
        .unwrap()
        .remove(0)
        .pool;
    let mut m = manifest("food-1", Some(10), Some(vec![5, 10]));
    m.persona = None;
    out.push(QuestionEntry::new(m, food));
    out
}

pub fn manager_with(store: Arc<dyn EventStore>, seed: u64) -> SessionManager {
    let config = ServiceConfig { master_seed: seed, ..Default::default() };
    SessionManager::new(config, questions(), store, Arc::new(ManualClock::new(1_700_000_000_000, 1000))).unwrap()
}

pub fn manager() -> SessionManager {
    manager_with(Arc::new(MemoryStore::new()), 0)
}

/// Writes a two-question manifest with JSONL pools into `dir`.
pub fn write_manifest_dir(dir: &Path) {
    let records: Vec<EmbeddingRecord> = (0..6)
        .map(|i| EmbeddingRecord {
            id: if i == 0 { "baseline".into() } else { format!("r{i}") },
            payload: format!("response {i}"),
            embedding: vec![(i as f64).cos(), (i as f64).sin(), 0.1 * i as f64],
        })
        .collect();
    write_embedding_records(dir.join("pool.jsonl"), &records).unwrap();
    std::fs::write(
        dir.join("questions.json"),
        r#"[{"question_id": "q1", "prompt": "first?", "baseline_id": "baseline", "pool_path": "pool.jsonl", "budget": 4},
            {"question_id": "q2", "prompt": "second?", "baseline_id": "baseline", "pool_path": "pool.jsonl", "persona": "a hiker"}]"#,
    )
    .unwrap();
}

pub const POLICY_NAMES: [&str; 6] = ["useralign", "useralign_loss", "iid_best", "random", "oracle", "policy"];

use super::*;
use crate::domains::{write_embedding_records, EmbeddingRecord};
use crate::prefcore::{logistic, Candidate, ModelParams};

fn small_plan(policies: &[PolicyKind]) -> ExperimentPlan {
    ExperimentPlan {
        source: DomainSource::Synth2d(Synth2dSource { num_questions: 2, num_users: 2, ..Default::default() }),
        policies: policies.to_vec(),
        epsilons: vec![0.0, 1.0],
        iid_steps: vec![2, 5],
        num_seeds: 2,
        ..ExperimentPlan::synth2d(11)
    }
}

fn record(policy: PolicyKind, seed: usize, win: f64, cost: usize) -> RunRecord {
    RunRecord {
        domain: "d".into(),
        question_id: "q".into(),
        persona_id: "p".into(),
        user_kind: UserKind::Btl,
        seed,
        policy,
        mode: StopMode::FixedBudget,
        epsilon: None,
        budget: 0,
        interaction_cost: cost,
        win_rate: Some(win),
        optimality_gap: Some(0.0),
        final_candidate_id: Some("q-y0".into()),
        stopped_by: Some(StopReason::Budget),
        final_stopping_value: None,
        status: "ok".into(),
        run_id: format!("q/p/btl/s{seed}/{policy}"),
    }
}

#[test]
fn random_only_costs_nothing() {
    let out = run_plan(&small_plan(&[PolicyKind::Random])).unwrap();
    assert_eq!(out.records.len(), 2 * 2 * 2 * 2);
    assert!(out.records.iter().all(|r| r.interaction_cost == 0 && r.is_ok()));
}

#[test]
fn cell_expansion() {
    let plan = small_plan(&PolicyKind::ALL);
    let cells = plan.policy_cells();
    // two ε per adaptive policy, two iid step counts, oracle, random
    assert_eq!(cells.len(), 2 + 2 + 2 + 1 + 1);
    let out = run_plan(&plan).unwrap();
    assert_eq!(out.records.len(), cells.len() * 2 * 2 * 2 * 2);
    for r in &out.records {
        assert!(r.is_ok(), "{}: {}", r.run_id, r.status);
        assert!(r.interaction_cost <= plan.step_cap);
        match r.policy {
            PolicyKind::Oracle | PolicyKind::Random => assert_eq!(r.interaction_cost, 0),
            PolicyKind::IidBest => assert_eq!(r.interaction_cost, r.budget),
            _ => {
                if r.stopped_by == Some(StopReason::Epsilon) {
                    assert!(r.final_stopping_value.unwrap() <= r.epsilon.unwrap() + 1e-9);
                }
            }
        }
        if r.policy == PolicyKind::Oracle {
            assert_eq!(r.optimality_gap, Some(0.0));
        }
    }
    let mut sorted = out.records.clone();
    sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    assert_eq!(sorted, out.records);
}

#[test]
fn identical_seeds_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = small_plan(&[PolicyKind::UserAlign, PolicyKind::IidBest, PolicyKind::Random]);
    plan.diagnostics = true;
    plan.area_samples = 200;
    let mut bytes = Vec::new();
    for run in ["a", "b"] {
        plan.output = Some(dir.path().join(run));
        run_plan(&plan).unwrap();
        let read = |f: &str| fs::read(dir.path().join(run).join(f)).unwrap();
        bytes.push((read(RUNS_FILE), read(SUMMARY_FILE), read(DIAGNOSTICS_FILE)));
    }
    assert_eq!(bytes[0], bytes[1]);
    plan.master_seed += 1;
    plan.output = Some(dir.path().join("c"));
    run_plan(&plan).unwrap();
    assert_ne!(fs::read(dir.path().join("c").join(RUNS_FILE)).unwrap(), bytes[0].0);

    let back = read_records(dir.path().join("a").join(RUNS_FILE)).unwrap();
    assert_eq!(
        back,
        run_plan(&ExperimentPlan { output: None, master_seed: plan.master_seed - 1, ..plan }).unwrap().records
    );
}

#[test]
fn consistent_useralign_matches_oracle() {
    let mut plan = small_plan(&[PolicyKind::UserAlign, PolicyKind::Oracle]);
    plan.epsilons = vec![0.0];
    plan.user_kinds = vec![UserKind::Consistent];
    plan.num_seeds = 1;
    let out = run_plan(&plan).unwrap();
    let summary = aggregate(&out.records).unwrap();
    let mean = |p: PolicyKind| summary.iter().find(|s| s.policy == p).unwrap().mean_win_rate;
    assert_eq!(mean(PolicyKind::UserAlign), mean(PolicyKind::Oracle));
    for r in &out.records {
        assert_eq!(r.optimality_gap, Some(0.0), "{}", r.run_id);
    }
}

#[test]
fn aggregate_statistics() {
    let one = aggregate(&[record(PolicyKind::Random, 0, 0.3, 0)]).unwrap();
    assert_eq!((one[0].mean_win_rate, one[0].se_win_rate), (0.3, 0.0));

    let flat: Vec<_> = (0..5).map(|s| record(PolicyKind::Random, s, 0.7, 0)).collect();
    assert_eq!(aggregate(&flat).unwrap()[0].se_win_rate, 0.0);

    let four: Vec<_> =
        [0.2, 0.4, 0.6, 0.8].iter().enumerate().map(|(s, &w)| record(PolicyKind::IidBest, s, w, 2 * s)).collect();
    let row = &aggregate(&four).unwrap()[0];
    assert!((row.mean_win_rate - 0.5).abs() < 1e-15);
    // sample variance 0.2 / 3, SE = sqrt(var / 4)
    assert!((row.se_win_rate - (0.2f64 / 12.0).sqrt()).abs() < 1e-15);
    assert_eq!(row.mean_cost, 3.0);
    assert!((row.se_cost - (20.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
    assert_eq!(row.runs, 4);

    assert!(aggregate(&[]).is_err());
    let mut failed = record(PolicyKind::Oracle, 0, 0.0, 0);
    failed.status = "error: boom".into();
    let rows = aggregate(&[failed, record(PolicyKind::Random, 0, 0.5, 0)]).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].policy, PolicyKind::Random);
}

fn two_point_domain() -> DomainInstance {
    let cands = vec![
        Candidate::new("q-y0", vec![0.5, 0.0], "a").unwrap(),
        Candidate::new("q-y1", vec![-0.5, 0.0], "b").unwrap(),
        Candidate::new("q-y2", vec![0.1, 0.3], "c").unwrap(),
    ];
    let pool = CandidatePool::new("q", cands, None).unwrap();
    let persona = Persona { id: "p".into(), theta_star: ModelParams::new(vec![3.0, 0.0], 3.0).unwrap() };
    DomainInstance {
        name: "d".into(),
        questions: vec![QuestionInstance { pool: Arc::new(pool), personas: vec![persona] }],
    }
}

#[test]
fn head_to_head_cases() {
    let domain = two_point_domain();
    let with = |r: RunRecord, id: &str, kind: UserKind| RunRecord {
        final_candidate_id: Some(id.into()),
        user_kind: kind,
        ..r
    };
    let a: Vec<_> = (0..3).map(|s| with(record(PolicyKind::UserAlign, s, 0.0, 0), "q-y0", UserKind::Btl)).collect();
    let same = head_to_head(&a, &a, &domain).unwrap();
    assert_eq!((same.win_fraction, same.pairs), (0.5, 3));

    let best: Vec<_> =
        (0..3).map(|s| with(record(PolicyKind::Oracle, s, 0.0, 0), "q-y0", UserKind::Consistent)).collect();
    let worst: Vec<_> =
        (0..3).map(|s| with(record(PolicyKind::Random, s, 0.0, 0), "q-y1", UserKind::Consistent)).collect();
    assert_eq!(head_to_head(&best, &worst, &domain).unwrap().win_fraction, 1.0);
    assert_eq!(head_to_head(&worst, &best, &domain).unwrap().win_fraction, 0.0);

    let ids = ["q-y0", "q-y1", "q-y2"];
    let feats = [0.5, -0.5, 0.1];
    let mut rng = crate::seeding::derive_rng(3, "h2h");
    let (mut ra, mut rb, mut direct) = (Vec::new(), Vec::new(), 0.0);
    for s in 0..40 {
        use rand::Rng;
        let (i, j) = (rng.gen_range(0..3), rng.gen_range(0..3));
        ra.push(with(record(PolicyKind::UserAlign, s, 0.0, 0), ids[i], UserKind::Btl));
        rb.push(with(record(PolicyKind::IidBest, s, 0.0, 0), ids[j], UserKind::Btl));
        direct += logistic(3.0 * (feats[i] - feats[j]));
    }
    let got = head_to_head(&ra, &rb, &domain).unwrap().win_fraction;
    assert!((got - direct / 40.0).abs() < 1e-12);

    let err = head_to_head(&ra[..39], &rb, &domain).unwrap_err().to_string();
    assert!(err.contains("unpaired") && err.contains("s39"), "{err}");
}

#[test]
fn failing_cell_is_recorded() {
    // no baseline, so the win-rate cannot be evaluated
    let domain = two_point_domain();
    let plan = ExperimentPlan {
        policies: vec![PolicyKind::Random],
        user_kinds: vec![UserKind::Btl],
        num_seeds: 1,
        ..ExperimentPlan::synth2d(0)
    };
    let out = run_domain(&plan, &domain).unwrap();
    assert_eq!(out.records.len(), 1);
    assert!(out.records[0].status.starts_with("error:"));
    assert!(aggregate(&out.records).unwrap().is_empty());
}

#[test]
fn plan_validation() {
    let ok = small_plan(&[PolicyKind::UserAlign]);
    ok.validate().unwrap();
    let cases = [
        ExperimentPlan { policies: vec![], ..ok.clone() },
        ExperimentPlan { num_seeds: 0, ..ok.clone() },
        ExperimentPlan { step_cap: 0, ..ok.clone() },
        ExperimentPlan { epsilons: vec![3.5], ..ok.clone() },
        ExperimentPlan { epsilons: vec![-0.1], ..ok.clone() },
        ExperimentPlan { epsilons: vec![], ..ok.clone() },
        ExperimentPlan { iid_steps: vec![200], policies: vec![PolicyKind::IidBest], ..ok.clone() },
        ExperimentPlan { user_kinds: vec![UserKind::External], ..ok.clone() },
        ExperimentPlan { delta: 1.0, ..ok.clone() },
    ];
    for c in cases {
        assert!(run_plan(&c).is_err(), "{c:?}");
    }
}

#[test]
fn plan_from_json_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let records: Vec<EmbeddingRecord> = (0..4)
        .map(|i| EmbeddingRecord {
            id: format!("r{i}"),
            payload: format!("text {i}"),
            embedding: vec![i as f64, (i * i) as f64 * 0.1, 1.0],
        })
        .collect();
    write_embedding_records(dir.path().join("pool.jsonl"), &records).unwrap();
    fs::write(
        dir.path().join("questions.json"),
        r#"[{"question_id": "food-1", "prompt": "lunch?", "baseline_id": "r0", "pool_path": "pool.jsonl"}]"#,
    )
    .unwrap();
    fs::write(
        dir.path().join("plan.json"),
        r#"{"source": {"kind": "manifest", "path": "questions.json", "personas_per_question": 2},
            "policies": ["useralign_loss", "oracle"], "epsilons": [0.5], "fixed_budgets": [3],
            "user_kinds": ["btl"], "num_seeds": 1}"#,
    )
    .unwrap();
    let plan = ExperimentPlan::load(dir.path().join("plan.json")).unwrap();
    assert_eq!(plan.step_cap, DEFAULT_STEP_CAP);
    assert_eq!(plan.domain_name(), "questions");
    let out = run_plan(&plan).unwrap();
    // two personas × (ε cell, fixed-budget cell, oracle)
    assert_eq!(out.records.len(), 6);
    for r in &out.records {
        assert!(r.is_ok(), "{}", r.status);
        if r.mode == StopMode::FixedBudget && r.policy.is_adaptive() {
            assert_eq!(r.interaction_cost, 3);
        }
    }

    fs::write(
        dir.path().join("bad.json"),
        r#"{"source": {"kind": "manifest", "path": "missing.json"}, "policies": ["random"], "user_kinds": ["btl"]}"#,
    )
    .unwrap();
    let err = run_plan(&ExperimentPlan::load(dir.path().join("bad.json")).unwrap()).unwrap_err();
    assert!(err.to_string().contains("missing.json"), "{err}");
}

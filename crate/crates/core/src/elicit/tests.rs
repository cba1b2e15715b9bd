use super::*;
use crate::prefcore::{Baseline, Candidate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pool_of(points: &[[f64; 2]]) -> Arc<CandidatePool<f64>> {
    let cands = points
        .iter()
        .enumerate()
        .map(|(i, p)| Candidate::new(format!("c{i}"), p.to_vec(), format!("payload {i}")).unwrap())
        .collect();
    let base = Candidate::new("base", vec![0.0, 0.0], "baseline").unwrap();
    Arc::new(CandidatePool::new("q", cands, Some(Baseline::Separate(base))).unwrap())
}

fn random_pool(rng: &mut ChaCha8Rng, k: usize) -> Arc<CandidatePool<f64>> {
    let pts: Vec<[f64; 2]> = (0..k)
        .map(|_| {
            let r = 0.5 * rng.gen::<f64>().sqrt();
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    pool_of(&pts)
}

fn theta(x: f64, y: f64) -> ModelParams<f64> {
    ModelParams::new(vec![x, y], 3.0).unwrap()
}

fn two_point() -> Arc<CandidatePool<f64>> {
    pool_of(&[[0.5, 0.0], [-0.5, 0.0]])
}

#[test]
fn single_candidate_stops_immediately() {
    let pool = pool_of(&[[0.1, 0.2]]);
    let mut s = ElicitationSession::new(pool, PolicyConfig::new(PolicyKind::UserAlign, 3.0)).unwrap();
    assert_eq!(s.next_pair().unwrap(), NextAction::Stopped { index: 0 });
    assert_eq!(s.status(), SessionStatus::Stopped);
    assert_eq!(s.stopping_value(), Some(0.0));
}

#[test]
fn cold_start_picks_farthest_challenger() {
    let pts = [[0.1, 0.1], [0.3, -0.2], [-0.35, 0.2], [0.0, 0.4]];
    let pool = pool_of(&pts);
    for kind in [PolicyKind::UserAlign, PolicyKind::UserAlignLoss] {
        let mut s = ElicitationSession::new(pool.clone(), PolicyConfig::new(kind, 3.0)).unwrap();
        let far = (1..4)
            .max_by(|&a, &b| {
                let d = |i: usize| crate::vector::distance(&pts[i], &pts[0]);
                d(a).partial_cmp(&d(b)).unwrap()
            })
            .unwrap();
        assert_eq!(s.next_pair().unwrap(), NextAction::Pair { first: 0, second: far });
        let expected = 3.0 * crate::vector::distance(&pts[far], &pts[0]);
        assert!((s.stopping_value().unwrap() - expected).abs() < 1e-12);
    }
}

#[test]
fn one_consistent_answer_settles_two_point_pool() {
    let mut s = ElicitationSession::new(two_point(), PolicyConfig::new(PolicyKind::UserAlign, 3.0)).unwrap();
    let mut user = UserModel::consistent(theta(3.0, 0.0));
    assert_eq!(s.next_pair().unwrap(), NextAction::Pair { first: 0, second: 1 });
    let Feedback::Answer(r) = user.prefer(s.pool(), 0, 1).unwrap() else { panic!() };
    assert_eq!(r, 1);
    s.record_feedback(r).unwrap();
    assert_eq!(s.next_pair().unwrap(), NextAction::Stopped { index: 0 });
    assert!(s.stopping_value().unwrap().abs() <= 1e-9);
    assert_eq!(s.finalize(None).unwrap(), 0);
}

#[test]
fn next_pair_is_idempotent_until_feedback() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut s =
        ElicitationSession::new(random_pool(&mut rng, 6), PolicyConfig::new(PolicyKind::UserAlign, 3.0)).unwrap();
    let a = s.next_pair().unwrap();
    assert_eq!(s.next_pair().unwrap(), a);
    assert_eq!(s.transcript().len(), 1);
    assert_eq!(s.status(), SessionStatus::AwaitingFeedback);
}

#[test]
fn feedback_protocol() {
    let mut s = ElicitationSession::new(two_point(), PolicyConfig::new(PolicyKind::UserAlign, 3.0)).unwrap();
    assert!(matches!(s.record_feedback(1), Err(Error::Protocol(_))));
    s.next_pair().unwrap();
    assert!(s.record_feedback(2).is_err());
    assert_eq!(s.step(), 0);
    s.record_feedback(1).unwrap();
    let t = &s.data().tuples()[0];
    assert_eq!(t.z(), &[1.0, 0.0]);
    assert!(t.first_preferred());
    assert!(matches!(s.record_feedback(1), Err(Error::Protocol(_))));
}

#[test]
fn feedback_order_is_preserved() {
    let pool = pool_of(&[[0.4, 0.0], [-0.4, 0.1], [0.0, -0.4]]);
    let mut s =
        ElicitationSession::new(pool, PolicyConfig::new(PolicyKind::IidBest, 3.0).with_budget(5).with_seed(3)).unwrap();
    let mut pairs = Vec::new();
    for r in [1, 0] {
        let NextAction::Pair { first, second } = s.next_pair().unwrap() else { panic!() };
        pairs.push((first, second, r));
        s.record_feedback(r).unwrap();
    }
    assert_eq!(s.data().len(), 2);
    for (t, &(a, b, r)) in s.data().tuples().iter().zip(&pairs) {
        assert_eq!((t.first(), t.second(), t.r()), (a, b, r));
    }
}

#[test]
fn random_finalize_is_seeded() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pool = random_pool(&mut rng, 20);
    let pick = |seed| {
        let mut s =
            ElicitationSession::new(pool.clone(), PolicyConfig::new(PolicyKind::Random, 3.0).with_seed(seed)).unwrap();
        s.finalize(None).unwrap()
    };
    assert_eq!(pick(7), pick(7));
    let picks: std::collections::BTreeSet<usize> = (0..40).map(pick).collect();
    assert!(picks.len() > 5);
}

#[test]
fn oracle_needs_user() {
    let mut s = ElicitationSession::new(two_point(), PolicyConfig::new(PolicyKind::Oracle, 3.0)).unwrap();
    assert!(matches!(s.finalize(None), Err(Error::Unsupported(_))));
    let ext: UserModel<f64> = UserModel::external("s", None);
    assert!(matches!(s.finalize(Some(&ext)), Err(Error::Unsupported(_))));
    let user = UserModel::consistent(theta(3.0, 0.0));
    assert_eq!(s.finalize(Some(&user)).unwrap(), 0);
    assert!(ElicitationSession::new(two_point(), PolicyConfig::new(PolicyKind::Oracle, 3.0))
        .unwrap()
        .next_pair()
        .is_err());
}

#[test]
fn iid_best_follows_labelled_direction() {
    let pool = pool_of(&[[0.1, 0.3], [0.45, -0.1], [-0.2, -0.2], [0.3, 0.3]]);
    let mut s =
        ElicitationSession::new(pool.clone(), PolicyConfig::new(PolicyKind::IidBest, 3.0).with_budget(40).with_seed(5))
            .unwrap();
    let mut user = UserModel::consistent(theta(3.0, 0.0));
    let out = run_session(&mut s, &mut user).unwrap();
    assert_eq!(out.interaction_cost, 40);
    assert_eq!(out.stopped_by, StopReason::Budget);
    assert_eq!(out.final_index, 1);
}

#[test]
fn fixed_budget_issues_exactly_budget_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pool = random_pool(&mut rng, 8);
    for kind in [PolicyKind::UserAlign, PolicyKind::UserAlignLoss] {
        let cfg = PolicyConfig::new(kind, 3.0).fixed_budget(10).with_seed(4);
        let mut s = ElicitationSession::new(pool.clone(), cfg).unwrap();
        let mut user = UserModel::consistent(theta(0.0, 3.0));
        let out = run_session(&mut s, &mut user).unwrap();
        assert_eq!(out.interaction_cost, 10);
        assert_eq!(s.status(), SessionStatus::Exhausted);
        let issued = s.transcript().iter().filter(|e| matches!(e, TranscriptEvent::PairIssued { .. })).count();
        assert_eq!(issued, 10);
        for e in s.transcript() {
            if let TranscriptEvent::PairIssued { first, second, .. } = e {
                assert_ne!(first, second);
            }
        }
    }
}

#[test]
fn consistent_user_is_identified_without_repeats() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for run in 0..10 {
        let pool = random_pool(&mut rng, 10);
        let a = rng.gen_range(0.0..std::f64::consts::TAU);
        let user_theta = theta(3.0 * a.cos(), 3.0 * a.sin());
        let mut user = UserModel::consistent(user_theta.clone());
        let mut s = ElicitationSession::new(pool.clone(), PolicyConfig::new(PolicyKind::UserAlign, 3.0).with_seed(run))
            .unwrap();
        let out = run_session(&mut s, &mut user).unwrap();
        let best = argmax_first(pool.utilities(user_theta.theta()).unwrap()).unwrap();
        assert_eq!(out.final_index, best, "run {run}");
        // a pair answered in favour of the incumbent removes the θ̃ that
        // proposed it; one answered against it can only recur while the MLE
        // still ranks the incumbent first
        let mut answered = std::collections::HashMap::new();
        for e in s.transcript() {
            match e {
                TranscriptEvent::PairIssued { first, second, stopping_value, .. } => {
                    assert!(stopping_value.unwrap() >= 0.0);
                    if let Some(&r) = answered.get(&(*first, *second)) {
                        assert_eq!(r, 0, "pair repeated after a favourable answer in run {run}");
                    }
                }
                TranscriptEvent::Feedback { first, second, r, .. } => {
                    answered.insert((*first, *second), *r);
                }
                _ => {}
            }
        }
    }
}

#[test]
fn transcripts_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pool = random_pool(&mut rng, 8);
    let run = || {
        let mut s = ElicitationSession::new(
            pool.clone(),
            PolicyConfig::new(PolicyKind::UserAlignLoss, 3.0).with_epsilon(1.0).with_budget(30),
        )
        .unwrap();
        let mut user = UserModel::btl(theta(2.0, -2.0), 99);
        run_session(&mut s, &mut user).unwrap();
        serde_json::to_string(s.transcript()).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn config_validation() {
    assert!(PolicyConfig::new(PolicyKind::UserAlign, 3.0).with_epsilon(3.5).validate().is_err());
    assert!(PolicyConfig::new(PolicyKind::UserAlign, 3.0).with_epsilon(-0.1).validate().is_err());
    assert!(PolicyConfig::new(PolicyKind::UserAlign, 3.0).with_delta(1.0).validate().is_err());
    let mut cfg = PolicyConfig::new(PolicyKind::UserAlign, 3.0f64);
    cfg.mode = StopMode::FixedBudget;
    assert!(cfg.validate().is_err());
    assert_eq!("useralign_loss".parse::<PolicyKind>().unwrap(), PolicyKind::UserAlignLoss);
    assert!("gpt".parse::<PolicyKind>().is_err());
    assert_eq!(serde_json::to_string(&PolicyKind::IidBest).unwrap(), "\"iid_best\"");
}

#[test]
fn selection_value_is_nonnegative_and_first_is_mle_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let pool = random_pool(&mut rng, 7);
    let mut data = PreferenceDataset::new(2);
    let mut user = UserModel::btl(theta(1.0, 2.0), 1);
    for _ in 0..15 {
        let a = rng.gen_range(0..7);
        let b = (a + rng.gen_range(1..7)) % 7;
        let Feedback::Answer(r) = user.prefer(&pool, a, b).unwrap() else { panic!() };
        data.push(PreferenceTuple::new(&pool, a, b, r).unwrap()).unwrap();
    }
    for hs in [false, true] {
        let sel = select_pair(&pool, &data, 3.0, 0.05, hs, None).unwrap();
        assert!(sel.stopping_value >= 0.0);
        let u = pool.utilities(sel.theta_hat.theta()).unwrap();
        assert_eq!(sel.first, argmax_first(u).unwrap());
        // exhaustive check of the challenger choice
        let spec = solve_confidence(&data, 3.0, 0.05, hs, None).unwrap().spec;
        let best = (0..7)
            .map(|j| max_linear(&spec, &pool.difference(j, sel.first)).unwrap().objective_value)
            .fold(0.0f64, f64::max);
        assert!((best - sel.stopping_value).abs() < 1e-5, "{best} vs {}", sel.stopping_value);
    }
}

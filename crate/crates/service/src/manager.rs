//! Live sessions: creation, the comparison loop, stage-3 evaluation and
//! recovery from the event log.
//!
//! Every mutation is computed on a scratch copy, appended to the store and
//! only then made visible, so a failed write leaves the session untouched.
//! Replaying a log drives the same policy code and checks each recorded
//! outcome against the recomputed one.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use pairalign::convex::solve_mle;
use pairalign::domains::{load_manifest, QuestionManifest};
use pairalign::elicit::{
    ElicitationSession, NextAction, PolicyConfig, PolicyKind, SessionStatus, StopMode, TranscriptEvent,
};
use pairalign::prefcore::CandidatePool;
use pairalign::seeding::{derive_rng, derive_seed};
use pairalign::vector::argmax_first;
use parking_lot::{Mutex, RwLock};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::error::{Result, ServiceError};
use crate::events::{Choice, EvalSlot, LogEntry, Matchup, SessionEvent};
use crate::store::EventStore;

/// Number of stage-3 matchups: two checkpoints and a random pick.
pub const NUM_MATCHUPS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub master_seed: u64,
    pub norm_bound: f64,
    pub delta: f64,
    /// Budget used when neither the request nor the manifest sets one.
    pub default_budget: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { master_seed: 0, norm_bound: 3.0, delta: 0.05, default_budget: 10 }
    }
}

#[derive(Debug, Clone)]
pub struct QuestionEntry {
    pub manifest: QuestionManifest,
    pub pool: Arc<CandidatePool<f64>>,
}

impl QuestionEntry {
    pub fn new(manifest: QuestionManifest, pool: CandidatePool<f64>) -> Self {
        Self { manifest, pool: Arc::new(pool) }
    }

    pub fn load(manifest: QuestionManifest) -> Result<Self> {
        let pool = manifest.load_pool::<f64>().map_err(|e| e.context(format!("question {}", manifest.question_id)))?;
        Ok(Self::new(manifest, pool))
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub question_id: String,
    /// Defaults to `useralign`.
    #[serde(default)]
    pub policy: Option<PolicyKind>,
    /// Defaults to a fixed budget.
    #[serde(default)]
    pub mode: Option<StopMode>,
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Show the manifest's persona text, when it has one.
    #[serde(default = "default_true")]
    pub with_persona: bool,
}

impl CreateRequest {
    pub fn new(question_id: impl Into<String>) -> Self {
        Self {
            question_id: question_id.into(),
            policy: None,
            mode: None,
            budget: None,
            epsilon: None,
            with_persona: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Comparing,
    Evaluating,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisplayOption {
    /// What to send back when this option is picked.
    pub choice: Choice,
    pub payload: String,
}

/// Options in display order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairView {
    pub step: usize,
    pub options: Vec<DisplayOption>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalView {
    /// Comparisons made.
    pub step: usize,
    pub candidate_id: String,
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum NextView {
    Pair(PairView),
    Stopped(FinalView),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub stage: Stage,
    pub question_id: String,
    pub prompt: String,
    pub persona: Option<String>,
    pub step: usize,
    pub budget: Option<usize>,
    pub pair: Option<PairView>,
    pub result: Option<FinalView>,
    pub created_at: u64,
    pub updated_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub step: usize,
    pub choice: Choice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackAck {
    pub accepted_step: usize,
    pub stopped: bool,
    pub next: NextView,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchupView {
    pub matchup_id: String,
    pub options: Vec<DisplayOption>,
    pub verdict: Option<Choice>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationView {
    pub session_id: String,
    pub matchups: Vec<MatchupView>,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictRequest {
    pub matchup_id: String,
    pub winner: Choice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictAck {
    pub matchup_id: String,
    pub remaining: usize,
    pub stage: Stage,
}

/// Full internal state, for inspection and replay checks. Not blinded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub question_id: String,
    pub policy: PolicyConfig<f64>,
    pub status: SessionStatus,
    pub step: usize,
    /// `(first, second, r)` per answered comparison.
    pub dataset: Vec<(usize, usize, u8)>,
    /// `(first, second, swapped)`.
    pub pending: Option<(usize, usize, bool)>,
    pub final_index: Option<usize>,
    pub transcript: Vec<TranscriptEvent<f64>>,
    pub matchups: Option<Vec<Matchup>>,
    pub verdicts: BTreeMap<String, (Choice, bool)>,
    pub log_len: usize,
    pub created_at: u64,
    pub updated_at: u64,
}

/// Stage-3 results of one slot across sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSummary {
    pub slot: String,
    pub wins: usize,
    pub total: usize,
    pub win_rate: f64,
}

#[derive(Debug, Clone)]
struct LiveSession {
    id: String,
    question_id: String,
    prompt: String,
    persona: Option<String>,
    checkpoints: Vec<usize>,
    elicit: ElicitationSession<f64>,
    swapped: Option<bool>,
    stop_logged: bool,
    matchups: Option<Vec<Matchup>>,
    verdicts: BTreeMap<String, (Choice, bool)>,
    created_at: u64,
    updated_at: u64,
    next_seq: usize,
}

fn display_swapped(seed: u64, step: usize) -> bool {
    derive_seed(seed, &format!("display/{step}")) & 1 == 1
}

fn corrupt(msg: impl Into<String>) -> ServiceError {
    ServiceError::Corrupt(msg.into())
}

impl LiveSession {
    fn from_created(entry: &LogEntry, questions: &BTreeMap<String, QuestionEntry>) -> Result<Self> {
        let SessionEvent::Created { session_id, question_id, prompt, persona, policy, checkpoints } = &entry.event
        else {
            return Err(corrupt("log does not start with a creation event"));
        };
        let q = questions
            .get(question_id)
            .ok_or_else(|| corrupt(format!("session {session_id} refers to unknown question {question_id}")))?;
        let elicit = ElicitationSession::new(Arc::clone(&q.pool), policy.clone())?;
        Ok(Self {
            id: session_id.clone(),
            question_id: question_id.clone(),
            prompt: prompt.clone(),
            persona: persona.clone(),
            checkpoints: checkpoints.clone(),
            elicit,
            swapped: None,
            stop_logged: false,
            matchups: None,
            verdicts: BTreeMap::new(),
            created_at: entry.at,
            updated_at: entry.at,
            next_seq: 1,
        })
    }

    fn seed(&self) -> u64 {
        self.elicit.config().seed
    }

    fn pool(&self) -> &CandidatePool<f64> {
        self.elicit.pool()
    }

    fn stage(&self) -> Stage {
        if !self.elicit.status().is_terminal() {
            Stage::Comparing
        } else if self.verdicts.len() == NUM_MATCHUPS {
            Stage::Done
        } else {
            Stage::Evaluating
        }
    }

    /// Applies one logged event, checking recorded outcomes.
    fn apply(&mut self, entry: &LogEntry) -> Result<()> {
        if entry.seq != self.next_seq {
            return Err(corrupt(format!("session {}: expected entry {}, found {}", self.id, self.next_seq, entry.seq)));
        }
        match &entry.event {
            SessionEvent::Created { .. } => return Err(corrupt("duplicate creation event")),
            SessionEvent::PairIssued { step, first, second, swapped } => {
                let action = self.elicit.next_pair()?;
                if action != (NextAction::Pair { first: *first, second: *second }) || *step != self.elicit.step() {
                    return Err(corrupt(format!("session {}: replayed step {step} gave {action:?}", self.id)));
                }
                self.swapped = Some(*swapped);
            }
            SessionEvent::Feedback { step, r, .. } => {
                if *step != self.elicit.step() || self.elicit.current_pair().is_none() {
                    return Err(corrupt(format!("session {}: feedback for step {step} out of order", self.id)));
                }
                self.elicit.record_feedback(*r)?;
                self.swapped = None;
            }
            SessionEvent::Stopped { final_index, .. } => {
                let action = self.elicit.next_pair()?;
                if action != (NextAction::Stopped { index: *final_index }) {
                    return Err(corrupt(format!("session {}: replayed stop gave {action:?}", self.id)));
                }
                self.stop_logged = true;
            }
            SessionEvent::EvalIssued { matchups } => self.matchups = Some(matchups.clone()),
            SessionEvent::Verdict { matchup_id, winner, candidate_won } => {
                self.verdicts.insert(matchup_id.clone(), (*winner, *candidate_won));
            }
        }
        self.next_seq += 1;
        self.updated_at = entry.at;
        Ok(())
    }

    fn pair_view(&self, first: usize, second: usize, swapped: bool) -> PairView {
        let option =
            |choice, idx: usize| DisplayOption { choice, payload: self.pool().candidates()[idx].payload.clone() };
        let mut options = vec![option(Choice::First, first), option(Choice::Second, second)];
        if swapped {
            options.reverse();
        }
        PairView { step: self.elicit.step(), options }
    }

    fn final_view(&self) -> Option<FinalView> {
        let idx = self.elicit.final_index()?;
        let c = &self.pool().candidates()[idx];
        Some(FinalView { step: self.elicit.step(), candidate_id: c.id.clone(), payload: c.payload.clone() })
    }

    fn current_pair_view(&self) -> Option<PairView> {
        let (first, second) = self.elicit.current_pair()?;
        Some(self.pair_view(first, second, self.swapped.unwrap_or(false)))
    }

    fn view(&self) -> SessionView {
        SessionView {
            session_id: self.id.clone(),
            stage: self.stage(),
            question_id: self.question_id.clone(),
            prompt: self.prompt.clone(),
            persona: self.persona.clone(),
            step: self.elicit.step(),
            budget: self.elicit.config().budget,
            pair: self.current_pair_view(),
            result: self.final_view(),
            created_at: self.created_at,
            updated_at: self.updated_at,
        }
    }

    fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            session_id: self.id.clone(),
            question_id: self.question_id.clone(),
            policy: self.elicit.config().clone(),
            status: self.elicit.status(),
            step: self.elicit.step(),
            dataset: self.elicit.data().tuples().iter().map(|t| (t.first(), t.second(), t.r())).collect(),
            pending: self.elicit.current_pair().map(|(a, b)| (a, b, self.swapped.unwrap_or(false))),
            final_index: self.elicit.final_index(),
            transcript: self.elicit.transcript().to_vec(),
            matchups: self.matchups.clone(),
            verdicts: self.verdicts.clone(),
            log_len: self.next_seq,
            created_at: self.created_at,
            updated_at: self.updated_at,
        }
    }

    /// The policy's pick after `t` comparisons.
    fn selection_at(&self, t: usize, norm_bound: f64) -> Result<usize> {
        let done = self.elicit.step();
        if t >= done {
            return Ok(self.elicit.final_index().expect("stage 3 follows a finished session"));
        }
        if self.elicit.config().kind == PolicyKind::Random {
            return Ok(derive_rng(self.seed(), &format!("checkpoint/{t}")).gen_range(0..self.pool().len()));
        }
        let fit = solve_mle(&self.elicit.data().prefix(t), norm_bound, None)?;
        Ok(argmax_first(self.pool().utilities(fit.params.theta())?).expect("pool is never empty"))
    }

    fn build_matchups(&self, norm_bound: f64) -> Result<Vec<Matchup>> {
        if self.pool().baseline_candidate().is_none() {
            return Err(ServiceError::BadRequest(format!("question {} has no baseline", self.question_id)));
        }
        let seed = self.seed();
        let mut slots = Vec::with_capacity(NUM_MATCHUPS);
        for (i, &t) in self.checkpoints.iter().enumerate() {
            slots.push((EvalSlot::Checkpoint { ordinal: i + 1, step: t }, self.selection_at(t, norm_bound)?));
        }
        let random = derive_rng(seed, "evaluation/random").gen_range(0..self.pool().len());
        slots.push((EvalSlot::Random, random));
        let mut sides = derive_rng(seed, "evaluation/sides");
        let mut matchups: Vec<Matchup> = slots
            .into_iter()
            .enumerate()
            .map(|(i, (slot, candidate_index))| Matchup {
                matchup_id: format!("m{:012x}", derive_seed(seed, &format!("matchup/{i}")) >> 16),
                slot,
                candidate_index,
                baseline_first: sides.gen(),
            })
            .collect();
        matchups.shuffle(&mut derive_rng(seed, "evaluation/order"));
        Ok(matchups)
    }

    fn evaluation_view(&self) -> EvaluationView {
        let pool = self.pool();
        let base = pool.baseline_candidate().map(|c| c.payload.clone()).unwrap_or_default();
        let matchups: Vec<MatchupView> = self
            .matchups
            .iter()
            .flatten()
            .map(|m| {
                let cand = pool.candidates()[m.candidate_index].payload.clone();
                let (a, b) = if m.baseline_first { (base.clone(), cand) } else { (cand, base.clone()) };
                MatchupView {
                    matchup_id: m.matchup_id.clone(),
                    options: vec![
                        DisplayOption { choice: Choice::First, payload: a },
                        DisplayOption { choice: Choice::Second, payload: b },
                    ],
                    verdict: self.verdicts.get(&m.matchup_id).map(|v| v.0),
                }
            })
            .collect();
        EvaluationView { session_id: self.id.clone(), complete: self.verdicts.len() == NUM_MATCHUPS, matchups }
    }
}

/// Owns all sessions of a running service.
pub struct SessionManager {
    config: ServiceConfig,
    questions: BTreeMap<String, QuestionEntry>,
    store: Arc<dyn EventStore>,
    clock: Arc<dyn Clock>,
    sessions: RwLock<HashMap<String, Arc<Mutex<LiveSession>>>>,
    counter: Mutex<u64>,
}

impl SessionManager {
    /// Builds the manager and restores every session found in `store`.
    pub fn new(
        config: ServiceConfig,
        questions: Vec<QuestionEntry>,
        store: Arc<dyn EventStore>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for q in questions {
            if let Some(cp) = &q.manifest.checkpoints {
                if cp.len() != 2 {
                    return Err(ServiceError::BadRequest(format!(
                        "question {} lists {} checkpoints; exactly two are needed",
                        q.manifest.question_id,
                        cp.len()
                    )));
                }
            }
            let id = q.manifest.question_id.clone();
            if map.insert(id.clone(), q).is_some() {
                return Err(ServiceError::BadRequest(format!("question {id} is listed twice")));
            }
        }
        let mgr = Self {
            config,
            questions: map,
            store,
            clock,
            sessions: RwLock::new(HashMap::new()),
            counter: Mutex::new(0),
        };
        for id in mgr.store.session_ids()? {
            let session = mgr.rebuild(&mgr.store.load(&id)?)?;
            mgr.sessions.write().insert(id, Arc::new(Mutex::new(session)));
        }
        Ok(mgr)
    }

    pub fn from_manifest(
        path: impl AsRef<Path>,
        config: ServiceConfig,
        store: Arc<dyn EventStore>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self> {
        let questions = load_manifest(path)?.into_iter().map(QuestionEntry::load).collect::<Result<Vec<_>>>()?;
        Self::new(config, questions, store, clock)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn questions(&self) -> impl Iterator<Item = &QuestionEntry> {
        self.questions.values()
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().keys().cloned().collect();
        ids.sort();
        ids
    }

    fn rebuild(&self, entries: &[LogEntry]) -> Result<LiveSession> {
        let first = entries.first().ok_or_else(|| corrupt("empty log"))?;
        if first.seq != 0 {
            return Err(corrupt("log does not start at entry 0"));
        }
        let mut s = LiveSession::from_created(first, &self.questions)?;
        for e in &entries[1..] {
            s.apply(e)?;
        }
        Ok(s)
    }

    /// State reconstructed from a log, without registering the session.
    pub fn replay(&self, entries: &[LogEntry]) -> Result<SessionSnapshot> {
        Ok(self.rebuild(entries)?.snapshot())
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<LiveSession>>> {
        self.sessions.read().get(id).cloned().ok_or_else(|| ServiceError::NotFound(format!("unknown session {id}")))
    }

    fn append(&self, s: &mut LiveSession, event: SessionEvent) -> Result<()> {
        let entry = LogEntry { seq: s.next_seq, at: self.clock.now_ms(), event };
        self.store.append(&s.id, &entry)?;
        s.next_seq += 1;
        s.updated_at = entry.at;
        Ok(())
    }

    fn fresh_id(&self) -> String {
        let mut n = self.counter.lock();
        let sessions = self.sessions.read();
        loop {
            let id = format!("s{:016x}", derive_seed(self.config.master_seed, &format!("session/{n}")));
            *n += 1;
            if !sessions.contains_key(&id) {
                return id;
            }
        }
    }

    pub fn create(&self, req: &CreateRequest) -> Result<SessionView> {
        let q = self
            .questions
            .get(&req.question_id)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown question {}", req.question_id)))?;
        let kind = req.policy.unwrap_or(PolicyKind::UserAlign);
        if kind == PolicyKind::Oracle {
            return Err(ServiceError::BadRequest(
                "the oracle policy needs a known user and cannot serve sessions".into(),
            ));
        }
        let budget = req.budget.or(q.manifest.budget).unwrap_or(self.config.default_budget);
        if budget == 0 {
            return Err(ServiceError::BadRequest("budget must be >= 1".into()));
        }
        let checkpoints = q.manifest.checkpoints.clone().unwrap_or_else(|| vec![budget.div_ceil(2), budget]);
        if let Some(&t) = checkpoints.iter().find(|&&t| t == 0 || t > budget) {
            return Err(ServiceError::BadRequest(format!("checkpoint {t} lies outside [1, {budget}]")));
        }
        let id = self.fresh_id();
        let seed = derive_seed(self.config.master_seed, &format!("policy/{id}"));
        let base = PolicyConfig::new(kind, self.config.norm_bound).with_delta(self.config.delta).with_seed(seed);
        let policy = match req.mode.unwrap_or(StopMode::FixedBudget) {
            StopMode::FixedBudget => base.fixed_budget(budget),
            StopMode::StopOnEpsilon => base.with_epsilon(req.epsilon.unwrap_or(0.0)).with_budget(budget),
        };
        policy.validate()?;
        let persona = if req.with_persona { q.manifest.persona.clone() } else { None };
        let entry = LogEntry {
            seq: 0,
            at: self.clock.now_ms(),
            event: SessionEvent::Created {
                session_id: id.clone(),
                question_id: q.manifest.question_id.clone(),
                prompt: q.manifest.prompt.clone(),
                persona,
                policy,
                checkpoints,
            },
        };
        let session = LiveSession::from_created(&entry, &self.questions)?;
        self.store.append(&id, &entry)?;
        let view = session.view();
        self.sessions.write().insert(id, Arc::new(Mutex::new(session)));
        Ok(view)
    }

    pub fn view(&self, id: &str) -> Result<SessionView> {
        Ok(self.session(id)?.lock().view())
    }

    pub fn snapshot(&self, id: &str) -> Result<SessionSnapshot> {
        Ok(self.session(id)?.lock().snapshot())
    }

    /// Outstanding pair, a newly selected one, or the final answer.
    pub fn next(&self, id: &str) -> Result<NextView> {
        let session = self.session(id)?;
        let mut s = session.lock();
        self.advance(&mut s)
    }

    fn advance(&self, s: &mut LiveSession) -> Result<NextView> {
        if let Some(view) = s.current_pair_view() {
            return Ok(NextView::Pair(view));
        }
        if s.elicit.status().is_terminal() && s.stop_logged {
            return Ok(NextView::Stopped(s.final_view().expect("terminal")));
        }
        let mut trial = s.elicit.clone();
        match trial.next_pair()? {
            NextAction::Pair { first, second } => {
                let step = trial.step();
                let swapped = display_swapped(s.seed(), step);
                self.append(s, SessionEvent::PairIssued { step, first, second, swapped })?;
                s.elicit = trial;
                s.swapped = Some(swapped);
                Ok(NextView::Pair(s.pair_view(first, second, swapped)))
            }
            NextAction::Stopped { index } => {
                let exhausted = trial.status() == SessionStatus::Exhausted;
                self.append(s, SessionEvent::Stopped { step: trial.step(), final_index: index, exhausted })?;
                s.elicit = trial;
                s.stop_logged = true;
                Ok(NextView::Stopped(s.final_view().expect("terminal")))
            }
        }
    }

    /// Records the judge's choice for `step`, then selects what comes next.
    ///
    /// A step other than the outstanding one (stale, repeated, or after the
    /// session finished) is a conflict and changes nothing.
    pub fn feedback(&self, id: &str, req: &FeedbackRequest) -> Result<FeedbackAck> {
        let session = self.session(id)?;
        let mut s = session.lock();
        if s.elicit.current_pair().is_none() {
            return Err(ServiceError::Conflict(format!("no comparison is outstanding for step {}", req.step)));
        }
        if req.step != s.elicit.step() {
            return Err(ServiceError::Conflict(format!(
                "feedback for step {} but step {} is outstanding",
                req.step,
                s.elicit.step()
            )));
        }
        let r = u8::from(req.choice == Choice::First);
        let mut trial = s.elicit.clone();
        trial.record_feedback(r)?;
        self.append(&mut s, SessionEvent::Feedback { step: req.step, choice: req.choice, r })?;
        s.elicit = trial;
        s.swapped = None;
        let next = self.advance(&mut s)?;
        Ok(FeedbackAck { accepted_step: req.step, stopped: matches!(next, NextView::Stopped(_)), next })
    }

    /// Stage-3 matchups, materialized on first request after stage 2.
    pub fn evaluation(&self, id: &str) -> Result<EvaluationView> {
        let session = self.session(id)?;
        let mut s = session.lock();
        if !(s.elicit.status().is_terminal() && s.stop_logged) {
            return Err(ServiceError::Conflict("comparisons are not finished".into()));
        }
        if s.matchups.is_none() {
            let matchups = s.build_matchups(self.config.norm_bound)?;
            self.append(&mut s, SessionEvent::EvalIssued { matchups: matchups.clone() })?;
            s.matchups = Some(matchups);
        }
        Ok(s.evaluation_view())
    }

    pub fn verdict(&self, id: &str, req: &VerdictRequest) -> Result<VerdictAck> {
        let session = self.session(id)?;
        let mut s = session.lock();
        let Some(matchups) = &s.matchups else {
            return Err(ServiceError::Conflict("the evaluation has not been issued".into()));
        };
        let baseline_first = matchups
            .iter()
            .find(|m| m.matchup_id == req.matchup_id)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown matchup {}", req.matchup_id)))?
            .baseline_first;
        if s.verdicts.contains_key(&req.matchup_id) {
            return Err(ServiceError::Conflict(format!("matchup {} already has a verdict", req.matchup_id)));
        }
        let candidate_won = (req.winner == Choice::First) != baseline_first;
        self.append(
            &mut s,
            SessionEvent::Verdict { matchup_id: req.matchup_id.clone(), winner: req.winner, candidate_won },
        )?;
        s.verdicts.insert(req.matchup_id.clone(), (req.winner, candidate_won));
        Ok(VerdictAck {
            matchup_id: req.matchup_id.clone(),
            remaining: NUM_MATCHUPS - s.verdicts.len(),
            stage: s.stage(),
        })
    }

    /// Candidate win-rate against the baseline per stage-3 slot, over all
    /// recorded verdicts.
    pub fn verdict_summary(&self) -> Vec<SlotSummary> {
        let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for session in self.sessions.read().values() {
            let s = session.lock();
            for m in s.matchups.iter().flatten() {
                if let Some(&(_, won)) = s.verdicts.get(&m.matchup_id) {
                    let t = tally.entry(m.slot.label()).or_default();
                    t.0 += usize::from(won);
                    t.1 += 1;
                }
            }
        }
        tally
            .into_iter()
            .map(|(slot, (wins, total))| SlotSummary { slot, wins, total, win_rate: wins as f64 / total as f64 })
            .collect()
    }
}

//! Session event log entries. A session's state is a pure function of its
//! log, so replaying the entries in order rebuilds it.

use pairalign::elicit::PolicyConfig;
use serde::{Deserialize, Serialize};

/// Displayed position picked by the judge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    First,
    Second,
}

/// What a stage-3 matchup measures. Never shown to judges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "slot", rename_all = "snake_case")]
pub enum EvalSlot {
    /// Selection after `step` comparisons; `ordinal` is 1 or 2.
    Checkpoint {
        ordinal: usize,
        step: usize,
    },
    Random,
}

impl EvalSlot {
    /// Aggregation label, independent of the domain's checkpoint steps.
    pub fn label(&self) -> String {
        match self {
            EvalSlot::Checkpoint { ordinal, .. } => format!("checkpoint_{ordinal}"),
            EvalSlot::Random => "random".into(),
        }
    }
}

/// One candidate-versus-baseline comparison of stage 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matchup {
    pub matchup_id: String,
    #[serde(flatten)]
    pub slot: EvalSlot,
    pub candidate_index: usize,
    pub baseline_first: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        session_id: String,
        question_id: String,
        prompt: String,
        persona: Option<String>,
        policy: PolicyConfig<f64>,
        checkpoints: Vec<usize>,
    },
    /// `swapped` means `second` is displayed first.
    PairIssued {
        step: usize,
        first: usize,
        second: usize,
        swapped: bool,
    },
    Feedback {
        step: usize,
        choice: Choice,
        r: u8,
    },
    Stopped {
        step: usize,
        final_index: usize,
        exhausted: bool,
    },
    EvalIssued {
        matchups: Vec<Matchup>,
    },
    Verdict {
        matchup_id: String,
        winner: Choice,
        candidate_won: bool,
    },
}

impl SessionEvent {
    pub fn name(&self) -> &'static str {
        match self {
            SessionEvent::Created { .. } => "created",
            SessionEvent::PairIssued { .. } => "pair_issued",
            SessionEvent::Feedback { .. } => "feedback",
            SessionEvent::Stopped { .. } => "stopped",
            SessionEvent::EvalIssued { .. } => "eval_issued",
            SessionEvent::Verdict { .. } => "verdict",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: usize,
    /// Milliseconds since the Unix epoch, from the service clock.
    pub at: u64,
    #[serde(flatten)]
    pub event: SessionEvent,
}

/// Human-readable rendering of a log, one line per entry.
pub fn render_log(entries: &[LogEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let body = match &e.event {
            SessionEvent::Created { session_id, question_id, persona, policy, checkpoints, .. } => format!(
                "session {session_id} on {question_id}; policy {} ({:?}, eps {}, budget {:?}, seed {}); persona {}; checkpoints {checkpoints:?}",
                policy.kind,
                policy.mode,
                policy.epsilon,
                policy.budget,
                policy.seed,
                if persona.is_some() { "shown" } else { "hidden" },
            ),
            SessionEvent::PairIssued { step, first, second, swapped } => {
                format!("step {step}: pair ({first}, {second}){}", if *swapped { ", displayed swapped" } else { "" })
            }
            SessionEvent::Feedback { step, choice, r } => format!("step {step}: judge chose {choice:?}, r = {r}"),
            SessionEvent::Stopped { step, final_index, exhausted } => format!(
                "stopped after {step} comparisons with candidate {final_index} ({})",
                if *exhausted { "budget" } else { "epsilon" }
            ),
            SessionEvent::EvalIssued { matchups } => {
                let parts: Vec<String> = matchups
                    .iter()
                    .map(|m| format!("{} = {} candidate {}", m.matchup_id, m.slot.label(), m.candidate_index))
                    .collect();
                format!("evaluation issued: {}", parts.join("; "))
            }
            SessionEvent::Verdict { matchup_id, winner, candidate_won } => format!(
                "verdict on {matchup_id}: {winner:?} ({})",
                if *candidate_won { "candidate won" } else { "baseline won" }
            ),
        };
        out.push_str(&format!("[{:>4}] t={} {:<11} {body}\n", e.seq, e.at, e.event.name()));
    }
    out
}

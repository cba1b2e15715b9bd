//! Session service for live pairwise elicitation: an append-only event log
//! per session, a manager that drives the policies, and an HTTP API.

pub mod clock;
pub mod error;
pub mod events;
pub mod http;
pub mod manager;
pub mod store;

pub use clock::{Clock, ManualClock, SystemClock};
pub use error::{Result, ServiceError};
pub use events::{Choice, EvalSlot, LogEntry, Matchup, SessionEvent};
pub use http::router;
pub use manager::{
    CreateRequest, DisplayOption, EvaluationView, FeedbackAck, FeedbackRequest, FinalView, MatchupView, NextView,
    PairView, QuestionEntry, ServiceConfig, SessionManager, SessionSnapshot, SessionView, SlotSummary, Stage,
    VerdictAck, VerdictRequest, NUM_MATCHUPS,
};
pub use store::{read_log, EventStore, FileStore, MemoryStore};

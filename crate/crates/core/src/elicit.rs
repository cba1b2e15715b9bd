//! Elicitation policies and the session state machine.
//!
//! `UserAlign` and `UserAlignLoss` select, at each step, the incumbent
//! `y⁽¹⁾ = argmax ⟨θ̂, φ(y)⟩` and the challenger `y⁽²⁾` whose advantage over
//! the incumbent is largest somewhere in the confidence set; that advantage
//! `B(t)` is the stopping certificate. `IidBest`, `Random` and `Oracle` are
//! the reference policies.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex::{linear_upper_bound, max_linear, solve_confidence, solve_mle};
use crate::error::{Error, Result};
use crate::prefcore::{CandidatePool, ModelParams, PreferenceDataset, PreferenceTuple};
use crate::scalar::Scalar;
use crate::simusers::{Feedback, UserModel};
use crate::vector::argmax_first;

/// Slack on `B(t) ≤ ε`, absorbing solver round-off at `ε = 0`.
pub const STOP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "useralign")]
    UserAlign,
    #[serde(rename = "useralign_loss")]
    UserAlignLoss,
    #[serde(rename = "iid_best")]
    IidBest,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "oracle")]
    Oracle,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] =
        [PolicyKind::UserAlign, PolicyKind::UserAlignLoss, PolicyKind::IidBest, PolicyKind::Random, PolicyKind::Oracle];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::UserAlign => "useralign",
            PolicyKind::UserAlignLoss => "useralign_loss",
            PolicyKind::IidBest => "iid_best",
            PolicyKind::Random => "random",
            PolicyKind::Oracle => "oracle",
        }
    }

    /// Policies driven by the confidence set.
    pub fn is_adaptive(self) -> bool {
        matches!(self, PolicyKind::UserAlign | PolicyKind::UserAlignLoss)
    }

    pub fn uses_halfspaces(self) -> bool {
        self == PolicyKind::UserAlign
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown policy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMode {
    StopOnEpsilon,
    FixedBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PolicyConfig<T: Scalar> {
    pub kind: PolicyKind,
    pub epsilon: T,
    pub delta: T,
    pub norm_bound: T,
    /// Maximum number of comparisons; required in fixed-budget mode.
    pub budget: Option<usize>,
    pub mode: StopMode,
    pub seed: u64,
}

impl<T: Scalar> PolicyConfig<T> {
    /// `ε = 0`, `δ = 0.05`, no budget, stop on `ε`, seed 0.
    pub fn new(kind: PolicyKind, norm_bound: T) -> Self {
        Self {
            kind,
            epsilon: T::zero(),
            delta: T::lit(0.05),
            norm_bound,
            budget: None,
            mode: StopMode::StopOnEpsilon,
            seed: 0,
        }
    }

    pub fn with_epsilon(mut self, epsilon: T) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_delta(mut self, delta: T) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn fixed_budget(mut self, budget: usize) -> Self {
        self.budget = Some(budget);
        self.mode = StopMode::FixedBudget;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.norm_bound > T::zero()) || !self.norm_bound.is_finite() {
            return Err(Error::InvalidArgument(format!("norm bound must be positive, got {}", self.norm_bound)));
        }
        if !(self.epsilon >= T::zero() && self.epsilon <= self.norm_bound) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in [0, {}], got {}",
                self.norm_bound, self.epsilon
            )));
        }
        if !(self.delta > T::zero() && self.delta < T::one()) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.mode == StopMode::FixedBudget && self.budget.is_none() {
            return Err(Error::InvalidArgument("fixed-budget mode requires a budget".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    /// No comparison outstanding; `next_pair` will select one.
    Ready,
    AwaitingFeedback,
    Stopped,
    Exhausted,
}

impl SessionStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, SessionStatus::Stopped | SessionStatus::Exhausted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "action")]
pub enum NextAction {
    Stopped { index: usize },
    Pair { first: usize, second: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event", bound = "T: Scalar")]
pub enum TranscriptEvent<T: Scalar> {
    PairIssued {
        step: usize,
        first: usize,
        second: usize,
        stopping_value: Option<T>,
        /// Challenger drawn uniformly because no informative one remained.
        fallback: bool,
    },
    Feedback {
        step: usize,
        first: usize,
        second: usize,
        r: u8,
    },
    Stopped {
        step: usize,
        final_index: usize,
        stopping_value: T,
    },
    Exhausted {
        step: usize,
        final_index: usize,
    },
}

/// One round of pair selection over the confidence set.
#[derive(Debug, Clone)]
pub struct Selection<T: Scalar> {
    pub first: usize,
    /// Equals `first` when no candidate can beat the incumbent.
    pub second: usize,
    /// `B(t) = ⟨θ̃, φ(y⁽²⁾) − φ(y⁽¹⁾)⟩`, never negative.
    pub stopping_value: T,
    pub theta_hat: ModelParams<T>,
    pub theta_tilde: ModelParams<T>,
    /// The halfspace-refined set was empty and fell back to `{θ̂}`.
    pub collapsed: bool,
    /// Number of `max_linear` programs actually solved.
    pub solver_calls: usize,
}

/// Runs the confidence-set construction on `data` and selects
/// `(y⁽¹⁾, y⁽²⁾, B(t))`.
///
/// Challengers are visited in decreasing order of a closed-form upper bound
/// and skipped once that bound cannot beat the best value found; ties go to
/// the lowest index.
pub fn select_pair<T: Scalar>(
    pool: &CandidatePool<T>,
    data: &PreferenceDataset<T>,
    norm_bound: T,
    delta: T,
    use_halfspaces: bool,
    warm_start: Option<&ModelParams<T>>,
) -> Result<Selection<T>> {
    let solved = solve_confidence(data, norm_bound, delta, use_halfspaces, warm_start)?;
    let spec = &solved.spec;
    let theta_hat = solved.mle.params.clone();
    let utilities = pool.utilities(theta_hat.theta())?;
    let first = argmax_first(utilities).expect("pool is never empty");

    let mut bounds = Vec::with_capacity(pool.len());
    for j in (0..pool.len()).filter(|&j| j != first) {
        let c = pool.difference(j, first);
        bounds.push((linear_upper_bound(spec, &c)?, j, c));
    }
    bounds.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));

    let mut best_val = T::zero();
    let mut best_idx = first;
    let mut best_theta = theta_hat.clone();
    let mut calls = 0;
    for (bound, j, c) in bounds {
        if bound < best_val {
            break;
        }
        if bound == best_val && (best_idx == first || j > best_idx) {
            continue;
        }
        let rep = max_linear(spec, &c)?;
        calls += 1;
        let v = rep.objective_value;
        if v > best_val || (v == best_val && best_idx != first && j < best_idx) {
            best_val = v;
            best_idx = j;
            best_theta = rep.argmax_theta;
        }
    }
    Ok(Selection {
        first,
        second: best_idx,
        stopping_value: best_val,
        theta_hat,
        theta_tilde: best_theta,
        collapsed: spec.is_collapsed(),
        solver_calls: calls,
    })
}

/// One elicitation session: a policy driving comparisons over one pool.
#[derive(Debug, Clone)]
pub struct ElicitationSession<T: Scalar> {
    pool: Arc<CandidatePool<T>>,
    data: PreferenceDataset<T>,
    config: PolicyConfig<T>,
    status: SessionStatus,
    current_pair: Option<(usize, usize)>,
    stopping_value: Option<T>,
    final_index: Option<usize>,
    transcript: Vec<TranscriptEvent<T>>,
    rng: ChaCha8Rng,
    warm: Option<ModelParams<T>>,
    /// Incumbent `y⁽¹⁾` and the dataset length it was computed at.
    incumbent: Option<(usize, usize)>,
}

impl<T: Scalar> ElicitationSession<T> {
    pub fn new(pool: Arc<CandidatePool<T>>, config: PolicyConfig<T>) -> Result<Self> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let data = PreferenceDataset::new(pool.dimension());
        Ok(Self {
            pool,
            data,
            config,
            status: SessionStatus::Ready,
            current_pair: None,
            stopping_value: None,
            final_index: None,
            transcript: Vec::new(),
            rng,
            warm: None,
            incumbent: None,
        })
    }

    pub fn pool(&self) -> &CandidatePool<T> {
        &self.pool
    }

    pub fn shared_pool(&self) -> &Arc<CandidatePool<T>> {
        &self.pool
    }

    pub fn data(&self) -> &PreferenceDataset<T> {
        &self.data
    }

    pub fn config(&self) -> &PolicyConfig<T> {
        &self.config
    }

    /// Number of answered comparisons.
    pub fn step(&self) -> usize {
        self.data.len()
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn current_pair(&self) -> Option<(usize, usize)> {
        self.current_pair
    }

    /// Latest `B(t)`.
    pub fn stopping_value(&self) -> Option<T> {
        self.stopping_value
    }

    pub fn final_index(&self) -> Option<usize> {
        self.final_index
    }

    pub fn transcript(&self) -> &[TranscriptEvent<T>] {
        &self.transcript
    }

    /// Latest MLE, if one has been computed.
    pub fn theta_hat(&self) -> Option<&ModelParams<T>> {
        self.warm.as_ref()
    }

    fn finish(&mut self, status: SessionStatus, index: usize) -> NextAction {
        let step = self.step();
        self.status = status;
        self.final_index = Some(index);
        self.transcript.push(match status {
            SessionStatus::Stopped => TranscriptEvent::Stopped {
                step,
                final_index: index,
                stopping_value: self.stopping_value.unwrap_or_else(T::zero),
            },
            _ => TranscriptEvent::Exhausted { step, final_index: index },
        });
        NextAction::Stopped { index }
    }

    fn issue(&mut self, first: usize, second: usize, fallback: bool) -> NextAction {
        self.current_pair = Some((first, second));
        self.status = SessionStatus::AwaitingFeedback;
        self.transcript.push(TranscriptEvent::PairIssued {
            step: self.step(),
            first,
            second,
            stopping_value: self.stopping_value.filter(|_| self.config.kind.is_adaptive()),
            fallback,
        });
        NextAction::Pair { first, second }
    }

    fn uniform_other(&mut self, exclude: usize) -> usize {
        let k = self.pool.len();
        let j = self.rng.gen_range(0..k - 1);
        if j >= exclude {
            j + 1
        } else {
            j
        }
    }

    fn mle_argmax(&mut self) -> Result<usize> {
        let fit = solve_mle(&self.data, self.config.norm_bound, self.warm.as_ref())?;
        let idx = argmax_first(self.pool.utilities(fit.params.theta())?).expect("pool is never empty");
        self.warm = Some(fit.params);
        Ok(idx)
    }

    /// Answer when the budget runs out.
    fn terminal_index(&mut self) -> Result<usize> {
        match self.config.kind {
            PolicyKind::UserAlign | PolicyKind::UserAlignLoss => match self.incumbent {
                Some((idx, at)) if at == self.data.len() => Ok(idx),
                _ => self.mle_argmax(),
            },
            PolicyKind::IidBest => self.mle_argmax(),
            PolicyKind::Random => Ok(self.rng.gen_range(0..self.pool.len())),
            PolicyKind::Oracle => Err(Error::Unsupported("oracle selections need the user model".into())),
        }
    }

    /// Selects the next comparison, or stops.
    ///
    /// Idempotent while a pair is outstanding; on a finished session returns
    /// the final answer again.
    pub fn next_pair(&mut self) -> Result<NextAction> {
        if self.status.is_terminal() {
            let index = self.final_index.expect("terminal sessions have an answer");
            return Ok(NextAction::Stopped { index });
        }
        if let Some((first, second)) = self.current_pair {
            return Ok(NextAction::Pair { first, second });
        }
        if self.config.kind == PolicyKind::Oracle {
            return Err(Error::Unsupported("the oracle policy does not ask questions; use finalize".into()));
        }
        if self.pool.len() == 1 {
            self.stopping_value = Some(T::zero());
            return Ok(self.finish(SessionStatus::Stopped, 0));
        }
        let budget = match self.config.kind {
            PolicyKind::IidBest | PolicyKind::Random => Some(self.config.budget.unwrap_or(0)),
            _ => self.config.budget,
        };
        if budget.is_some_and(|b| self.step() >= b) {
            let index = self.terminal_index()?;
            return Ok(self.finish(SessionStatus::Exhausted, index));
        }

        match self.config.kind {
            PolicyKind::IidBest | PolicyKind::Random => {
                let first = self.rng.gen_range(0..self.pool.len());
                let second = self.uniform_other(first);
                Ok(self.issue(first, second, false))
            }
            PolicyKind::UserAlign | PolicyKind::UserAlignLoss => {
                let sel = select_pair(
                    &self.pool,
                    &self.data,
                    self.config.norm_bound,
                    self.config.delta,
                    self.config.kind.uses_halfspaces(),
                    self.warm.as_ref(),
                )?;
                self.warm = Some(sel.theta_hat);
                self.incumbent = Some((sel.first, self.data.len()));
                self.stopping_value = Some(sel.stopping_value);
                let settled = sel.stopping_value <= self.config.epsilon + T::tol(STOP_TOL);
                match self.config.mode {
                    StopMode::StopOnEpsilon if settled => Ok(self.finish(SessionStatus::Stopped, sel.first)),
                    StopMode::FixedBudget if settled || sel.second == sel.first => {
                        let second = self.uniform_other(sel.first);
                        Ok(self.issue(sel.first, second, true))
                    }
                    _ => Ok(self.issue(sel.first, sel.second, false)),
                }
            }
            PolicyKind::Oracle => unreachable!("handled above"),
        }
    }

    /// Records the answer `r` (1 = first preferred) to the outstanding pair.
    pub fn record_feedback(&mut self, r: u8) -> Result<()> {
        let Some((first, second)) = self.current_pair else {
            return Err(Error::Protocol("no comparison is outstanding".into()));
        };
        let tuple = PreferenceTuple::new(&self.pool, first, second, r)?;
        let step = self.step();
        self.data.push(tuple)?;
        self.transcript.push(TranscriptEvent::Feedback { step, first, second, r });
        self.current_pair = None;
        self.status = SessionStatus::Ready;
        Ok(())
    }

    /// The policy's answer.
    ///
    /// Adaptive policies must have stopped or exhausted their budget.
    /// `Random` and `Oracle` may be finalized without interaction; `Oracle`
    /// needs a user with known preferences.
    pub fn finalize(&mut self, user: Option<&UserModel<T>>) -> Result<usize> {
        if let Some(index) = self.final_index {
            return Ok(index);
        }
        if self.current_pair.is_some() {
            return Err(Error::Protocol("a comparison is still outstanding".into()));
        }
        let index = match self.config.kind {
            PolicyKind::Oracle => {
                let user = user.ok_or_else(|| Error::Unsupported("the oracle policy needs a user model".into()))?;
                argmax_first(user.true_utility(&self.pool)?).expect("pool is never empty")
            }
            PolicyKind::Random => self.rng.gen_range(0..self.pool.len()),
            PolicyKind::IidBest => self.mle_argmax()?,
            PolicyKind::UserAlign | PolicyKind::UserAlignLoss => {
                return Err(Error::Protocol("the session has not stopped yet".into()));
            }
        };
        self.final_index = Some(index);
        Ok(index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Epsilon,
    Budget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome<T: Scalar> {
    pub final_index: usize,
    pub interaction_cost: usize,
    pub stopped_by: StopReason,
    pub stopping_value: Option<T>,
}

/// Drives `session` against a simulated user until it finishes.
///
/// `Oracle` (and `Random` or `IidBest` without a budget) answer without
/// asking anything. A pending external answer is a protocol error here.
pub fn run_session<T: Scalar>(session: &mut ElicitationSession<T>, user: &mut UserModel<T>) -> Result<RunOutcome<T>> {
    if session.config.kind == PolicyKind::Oracle {
        let final_index = session.finalize(Some(user))?;
        return Ok(RunOutcome {
            final_index,
            interaction_cost: 0,
            stopped_by: StopReason::Budget,
            stopping_value: None,
        });
    }
    loop {
        match session.next_pair()? {
            NextAction::Stopped { index } => {
                let stopped_by =
                    if session.status == SessionStatus::Stopped { StopReason::Epsilon } else { StopReason::Budget };
                return Ok(RunOutcome {
                    final_index: index,
                    interaction_cost: session.step(),
                    stopped_by,
                    stopping_value: session.stopping_value,
                });
            }
            NextAction::Pair { first, second } => match user.prefer(&session.pool, first, second)? {
                Feedback::Answer(r) => session.record_feedback(r)?,
                Feedback::Pending => {
                    return Err(Error::Protocol(format!("no answer for step {}", session.step())));
                }
            },
        }
    }
}

#[cfg(test)]
mod tests;

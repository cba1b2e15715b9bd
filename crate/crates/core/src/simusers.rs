//! Preference oracles: Bradley–Terry users, noise-free consistent users and
//! an external adapter for human or scripted judges.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::prefcore::{logistic, CandidatePool, ModelParams};
use crate::scalar::Scalar;
use crate::vector::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserKind {
    Btl,
    Consistent,
    External,
}

impl fmt::Display for UserKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UserKind::Btl => "btl",
            UserKind::Consistent => "consistent",
            UserKind::External => "external",
        })
    }
}

/// Outcome of a preference query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feedback {
    /// `r = 1` when the first response is preferred.
    Answer(u8),
    /// An external judge has not answered yet.
    Pending,
}

/// A comparison handed to an external judge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRequest {
    pub session_id: String,
    pub step: usize,
    pub first_payload: String,
    pub second_payload: String,
}

/// Source of answers for external users. Returning `None` leaves the
/// comparison pending.
pub trait Responder: Send + Sync {
    fn respond(&self, request: &ComparisonRequest) -> Option<u8>;
}

impl<F> Responder for F
where
    F: Fn(&ComparisonRequest) -> Option<u8> + Send + Sync,
{
    fn respond(&self, request: &ComparisonRequest) -> Option<u8> {
        self(request)
    }
}

/// Answers keyed by `(session_id, step)`, filled by producers (a UI, a
/// scripted judge) and drained by the session owner.
#[derive(Debug, Default)]
pub struct AnswerQueue {
    answers: Mutex<HashMap<(String, usize), u8>>,
    arrived: Condvar,
}

impl AnswerQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn submit(&self, session_id: &str, step: usize, r: u8) -> Result<()> {
        if r > 1 {
            return Err(Error::InvalidArgument(format!("label must be 0 or 1, got {r}")));
        }
        let mut guard = self.answers.lock().expect("answer queue poisoned");
        guard.insert((session_id.to_string(), step), r);
        self.arrived.notify_all();
        Ok(())
    }

    pub fn take(&self, session_id: &str, step: usize) -> Option<u8> {
        let mut guard = self.answers.lock().expect("answer queue poisoned");
        guard.remove(&(session_id.to_string(), step))
    }

    /// Blocks until the answer arrives or `timeout` elapses.
    pub fn wait(&self, session_id: &str, step: usize, timeout: Duration) -> Option<u8> {
        let key = (session_id.to_string(), step);
        let guard = self.answers.lock().expect("answer queue poisoned");
        let (mut guard, _) =
            self.arrived.wait_timeout_while(guard, timeout, |m| !m.contains_key(&key)).expect("answer queue poisoned");
        guard.remove(&key)
    }

    pub fn len(&self) -> usize {
        self.answers.lock().expect("answer queue poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Responder for AnswerQueue {
    fn respond(&self, request: &ComparisonRequest) -> Option<u8> {
        self.take(&request.session_id, request.step)
    }
}

/// A preference oracle.
///
/// BTL users own a seeded random stream; consistent users are
/// deterministic; external users forward each comparison to a [`Responder`].
#[derive(Clone)]
pub struct UserModel<T: Scalar> {
    kind: UserKind,
    theta_star: Option<ModelParams<T>>,
    seed: u64,
    rng: ChaCha8Rng,
    session_id: String,
    step: usize,
    responder: Option<Arc<dyn Responder>>,
}

impl<T: Scalar> fmt::Debug for UserModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserModel")
            .field("kind", &self.kind)
            .field("theta_star", &self.theta_star)
            .field("seed", &self.seed)
            .field("step", &self.step)
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> UserModel<T> {
    pub fn btl(theta_star: ModelParams<T>, seed: u64) -> Self {
        Self::simulated(UserKind::Btl, theta_star, seed)
    }

    pub fn consistent(theta_star: ModelParams<T>) -> Self {
        Self::simulated(UserKind::Consistent, theta_star, 0)
    }

    /// Simulated user of the given kind; `External` is rejected.
    pub fn with_kind(kind: UserKind, theta_star: ModelParams<T>, seed: u64) -> Result<Self> {
        match kind {
            UserKind::External => Err(Error::InvalidArgument("external users need a responder".into())),
            _ => Ok(Self::simulated(kind, theta_star, seed)),
        }
    }

    fn simulated(kind: UserKind, theta_star: ModelParams<T>, seed: u64) -> Self {
        Self {
            kind,
            theta_star: Some(theta_star),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            session_id: String::new(),
            step: 0,
            responder: None,
        }
    }

    /// External judge for one session. With no responder every query stays
    /// pending.
    pub fn external(session_id: impl Into<String>, responder: Option<Arc<dyn Responder>>) -> Self {
        Self {
            kind: UserKind::External,
            theta_star: None,
            seed: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
            session_id: session_id.into(),
            step: 0,
            responder,
        }
    }

    pub fn kind(&self) -> UserKind {
        self.kind
    }

    pub fn theta_star(&self) -> Option<&ModelParams<T>> {
        self.theta_star.as_ref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn require_theta(&self, what: &str) -> Result<&ModelParams<T>> {
        self.theta_star
            .as_ref()
            .ok_or_else(|| Error::Unsupported(format!("{what} needs a user with known preferences")))
    }

    fn margin(&self, pool: &CandidatePool<T>, theta: &ModelParams<T>, first: &[T], second: &[T]) -> Result<T> {
        check_dim(pool.dimension(), theta.dim())?;
        let z: Vec<T> = first.iter().zip(second).map(|(&a, &b)| a - b).collect();
        Ok(dot(theta.theta(), &z))
    }

    /// Answers "is `first` preferred over `second`?".
    pub fn prefer(&mut self, pool: &CandidatePool<T>, first: usize, second: usize) -> Result<Feedback> {
        if first == second {
            return Err(Error::InvalidArgument(format!("cannot compare candidate {first} with itself")));
        }
        let a = pool.candidate(first)?;
        let b = pool.candidate(second)?;
        match self.kind {
            UserKind::External => {
                let request = ComparisonRequest {
                    session_id: self.session_id.clone(),
                    step: self.step,
                    first_payload: a.payload.clone(),
                    second_payload: b.payload.clone(),
                };
                let answer = self.responder.as_ref().and_then(|r| r.respond(&request));
                match answer {
                    Some(r @ (0 | 1)) => {
                        self.step += 1;
                        Ok(Feedback::Answer(r))
                    }
                    Some(r) => Err(Error::InvalidArgument(format!("responder returned label {r}"))),
                    None => Ok(Feedback::Pending),
                }
            }
            UserKind::Consistent => {
                let theta = self.require_theta("consistent preference")?;
                let m = self.margin(pool, theta, a.features.as_slice(), b.features.as_slice())?;
                Ok(Feedback::Answer(u8::from(m >= T::zero())))
            }
            UserKind::Btl => {
                let theta = self.require_theta("btl preference")?;
                let p = logistic(self.margin(pool, theta, a.features.as_slice(), b.features.as_slice())?).as_f64();
                let u: f64 = self.rng.gen();
                Ok(Feedback::Answer(u8::from(u < p)))
            }
        }
    }

    /// `p_u[first ≻ second]`: the logistic probability for BTL users, the
    /// indicator (ties count as a win) for consistent users.
    pub fn preference_probability(&self, pool: &CandidatePool<T>, first: &[T], second: &[T]) -> Result<T> {
        let theta = self.require_theta("preference probability")?;
        let m = self.margin(pool, theta, first, second)?;
        Ok(match self.kind {
            UserKind::Btl => logistic(m),
            _ => {
                if m >= T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        })
    }

    /// Win-rate of `chosen` against the pool's baseline.
    pub fn win_rate(&self, pool: &CandidatePool<T>, chosen: usize) -> Result<T> {
        let base = pool
            .baseline_candidate()
            .ok_or_else(|| Error::InvalidArgument(format!("pool {} has no baseline", pool.question_id())))?;
        let c = pool.candidate(chosen)?;
        self.preference_probability(pool, c.features.as_slice(), base.features.as_slice())
    }

    /// `⟨θ★, φ(y)⟩` for every candidate.
    pub fn true_utility(&self, pool: &CandidatePool<T>) -> Result<Vec<T>> {
        let theta = self.require_theta("true utility")?;
        pool.utilities(theta.theta())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prefcore::{Baseline, Candidate};

    fn pool() -> CandidatePool<f64> {
        let cands = vec![
            Candidate::new("a", vec![0.5, 0.0], "A").unwrap(),
            Candidate::new("b", vec![-0.5, 0.0], "B").unwrap(),
            Candidate::new("c", vec![0.0, 0.5], "C").unwrap(),
        ];
        CandidatePool::new("q", cands, Some(Baseline::Member(1))).unwrap()
    }

    fn theta(x: f64, y: f64) -> ModelParams<f64> {
        ModelParams::new(vec![x, y], 3.0).unwrap()
    }

    #[test]
    fn consistent_answers() {
        let p = pool();
        let mut u = UserModel::consistent(theta(3.0, 0.0));
        assert_eq!(u.prefer(&p, 0, 1).unwrap(), Feedback::Answer(1));
        assert_eq!(u.prefer(&p, 1, 0).unwrap(), Feedback::Answer(0));
        // margin 0 between b and c under θ = (0,0): tie goes to first
        let mut flat = UserModel::consistent(theta(0.0, 0.0));
        assert_eq!(flat.prefer(&p, 1, 2).unwrap(), Feedback::Answer(1));
        assert_eq!(flat.prefer(&p, 2, 1).unwrap(), Feedback::Answer(1));
        assert!(u.prefer(&p, 0, 0).is_err());
        assert!(u.prefer(&p, 0, 7).is_err());
    }

    #[test]
    fn btl_frequency_matches_logistic() {
        let cands =
            vec![Candidate::new("a", vec![0.5, 0.0], "").unwrap(), Candidate::new("b", vec![-0.5, 0.0], "").unwrap()];
        let p = CandidatePool::new("q", cands, None).unwrap();
        let mut u = UserModel::btl(theta(3.0, 0.0), 17);
        let wins = (0..5000).filter(|_| u.prefer(&p, 0, 1).unwrap() == Feedback::Answer(1)).count();
        assert!((wins as f64 / 5000.0 - 0.9525741268224334).abs() < 0.02);
        let mut zero = UserModel::btl(theta(0.0, 0.0), 3);
        let wins = (0..1000).filter(|_| zero.prefer(&p, 0, 1).unwrap() == Feedback::Answer(1)).count();
        assert!((wins as f64 / 1000.0 - 0.5).abs() < 0.05);
    }

    #[test]
    fn btl_streams_are_reproducible() {
        let p = pool();
        let draw = |seed| {
            let mut u = UserModel::btl(theta(1.0, 0.5), seed);
            (0..200).map(|_| u.prefer(&p, 0, 2).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn win_rates_and_utilities() {
        let p = pool();
        let btl = UserModel::btl(theta(3.0, 0.0), 0);
        assert_eq!(btl.win_rate(&p, 1).unwrap(), 0.5);
        assert!((btl.win_rate(&p, 0).unwrap() - 0.9525741268224334).abs() < 1e-15);
        let cons = UserModel::consistent(theta(3.0, 0.0));
        assert_eq!(cons.win_rate(&p, 1).unwrap(), 1.0);
        assert_eq!(cons.win_rate(&p, 0).unwrap(), 1.0);
        let back = UserModel::consistent(theta(-3.0, 0.0));
        assert_eq!(back.win_rate(&p, 0).unwrap(), 0.0);
        assert_eq!(btl.true_utility(&p).unwrap(), vec![1.5, -1.5, 0.0]);
        assert_eq!(UserModel::btl(theta(0.0, 0.0), 0).true_utility(&p).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn external_user_queue() {
        let p = pool();
        let queue = Arc::new(AnswerQueue::new());
        let mut u: UserModel<f64> = UserModel::external("s1", Some(queue.clone()));
        assert_eq!(u.prefer(&p, 0, 1).unwrap(), Feedback::Pending);
        queue.submit("s1", 0, 0).unwrap();
        assert_eq!(u.prefer(&p, 0, 1).unwrap(), Feedback::Answer(0));
        assert_eq!(u.prefer(&p, 0, 1).unwrap(), Feedback::Pending);
        queue.submit("s1", 1, 1).unwrap();
        assert_eq!(u.prefer(&p, 2, 1).unwrap(), Feedback::Answer(1));
        assert!(queue.submit("s1", 2, 3).is_err());
        assert!(u.win_rate(&p, 0).is_err());
        assert!(u.true_utility(&p).is_err());

        let mut silent: UserModel<f64> = UserModel::external("s2", None);
        assert_eq!(silent.prefer(&p, 0, 1).unwrap(), Feedback::Pending);
    }

    #[test]
    fn closure_responder_sees_payloads() {
        let p = pool();
        let judge = |req: &ComparisonRequest| Some(u8::from(req.first_payload < req.second_payload));
        let mut u: UserModel<f64> = UserModel::external("s", Some(Arc::new(judge)));
        assert_eq!(u.prefer(&p, 0, 1).unwrap(), Feedback::Answer(1));
        assert_eq!(u.prefer(&p, 2, 1).unwrap(), Feedback::Answer(0));
    }

    #[test]
    fn queue_wait_unblocks_on_submit() {
        let queue = Arc::new(AnswerQueue::new());
        let producer = {
            let q = queue.clone();
            std::thread::spawn(move || q.submit("s", 4, 1).unwrap())
        };
        assert_eq!(queue.wait("s", 4, Duration::from_secs(10)), Some(1));
        producer.join().unwrap();
        assert_eq!(queue.wait("s", 5, Duration::from_millis(10)), None);
        assert!(queue.is_empty());
    }
}

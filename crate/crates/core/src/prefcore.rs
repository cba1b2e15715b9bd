//! Domain types and the scalar primitives of the Bradley–Terry–Luce
//! likelihood: logistic link, per-comparison log-loss, its gradient and the
//! noise-free halfspace predicate.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;
use crate::vector::{distance, dot, norm, sub};

/// Exponent magnitude beyond which the logistic link saturates.
pub const LOGISTIC_CLAMP: f64 = 36.0;

/// Boundary slack for halfspace membership.
pub const HALFSPACE_TOL: f64 = 1e-9;

/// Slack allowed on the pairwise feature-difference bound.
pub const DIFFERENCE_BOUND_TOL: f64 = 1e-9;

/// Embedding of one candidate response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>", bound = "T: Scalar")]
pub struct FeatureVector<T: Scalar>(Vec<T>);

impl<T: Scalar> FeatureVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("feature vector must have dimension >= 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite feature at coordinate {i}")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T: Scalar> TryFrom<Vec<T>> for FeatureVector<T> {
    type Error = Error;

    fn try_from(values: Vec<T>) -> Result<Self> {
        Self::new(values)
    }
}

impl<T: Scalar> From<FeatureVector<T>> for Vec<T> {
    fn from(v: FeatureVector<T>) -> Self {
        v.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Candidate<T: Scalar> {
    pub id: String,
    pub features: FeatureVector<T>,
    /// Opaque display payload (text or an image URI).
    pub payload: String,
}

impl<T: Scalar> Candidate<T> {
    pub fn new(id: impl Into<String>, features: Vec<T>, payload: impl Into<String>) -> Result<Self> {
        Ok(Self { id: id.into(), features: FeatureVector::new(features)?, payload: payload.into() })
    }
}

/// Where the reference response every method is scored against lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", bound = "T: Scalar")]
pub enum Baseline<T: Scalar> {
    /// One of the pool's own candidates.
    Member(usize),
    /// An extra response outside the selectable pool.
    Separate(Candidate<T>),
}

/// Candidate responses for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CandidatePool<T: Scalar> {
    question_id: String,
    candidates: Vec<Candidate<T>>,
    baseline: Option<Baseline<T>>,
    dimension: usize,
    /// Factor the raw embeddings were multiplied by when the pool was built.
    scale: T,
}

impl<T: Scalar> CandidatePool<T> {
    /// Builds a pool whose features already satisfy the pairwise bound
    /// `‖φ(y) − φ(y′)‖₂ ≤ 1`.
    pub fn new(
        question_id: impl Into<String>,
        candidates: Vec<Candidate<T>>,
        baseline: Option<Baseline<T>>,
    ) -> Result<Self> {
        Self::with_scale(question_id, candidates, baseline, T::one())
    }

    pub(crate) fn with_scale(
        question_id: impl Into<String>,
        candidates: Vec<Candidate<T>>,
        baseline: Option<Baseline<T>>,
        scale: T,
    ) -> Result<Self> {
        let Some(first) = candidates.first() else {
            return Err(Error::InvalidArgument("candidate pool must not be empty".into()));
        };
        let dimension = first.features.dim();
        for c in &candidates {
            check_dim(dimension, c.features.dim())?;
        }
        match &baseline {
            Some(Baseline::Member(i)) if *i >= candidates.len() => {
                return Err(Error::InvalidArgument(format!("baseline index {i} out of range")));
            }
            Some(Baseline::Separate(c)) => check_dim(dimension, c.features.dim())?,
            _ => {}
        }
        let pool = Self { question_id: question_id.into(), candidates, baseline, dimension, scale };
        let widest = pool.max_pairwise_distance();
        if widest > T::one() + T::lit(DIFFERENCE_BOUND_TOL) {
            return Err(Error::InvalidArgument(format!("feature differences must have norm <= 1, found {widest}")));
        }
        Ok(pool)
    }

    /// Rescales all embeddings jointly by `1 / max pairwise distance` so the
    /// farthest pair sits exactly at distance one.
    pub fn normalized(
        question_id: impl Into<String>,
        mut candidates: Vec<Candidate<T>>,
        mut baseline: Option<Baseline<T>>,
    ) -> Result<Self> {
        let mut all: Vec<&[T]> = candidates.iter().map(|c| c.features.as_slice()).collect();
        if let Some(Baseline::Separate(b)) = &baseline {
            all.push(b.features.as_slice());
        }
        let widest = max_distance(&all);
        let scale = if widest > T::zero() { T::one() / widest } else { T::one() };
        let rescale = |c: &mut Candidate<T>| {
            c.features.0.iter_mut().for_each(|v| *v = *v * scale);
        };
        candidates.iter_mut().for_each(rescale);
        if let Some(Baseline::Separate(b)) = &mut baseline {
            rescale(b);
        }
        Self::with_scale(question_id, candidates, baseline, scale)
    }

    pub fn question_id(&self) -> &str {
        &self.question_id
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn candidates(&self) -> &[Candidate<T>] {
        &self.candidates
    }

    pub fn candidate(&self, index: usize) -> Result<&Candidate<T>> {
        self.candidates
            .get(index)
            .ok_or_else(|| Error::InvalidArgument(format!("candidate index {index} out of range")))
    }

    pub fn features(&self, index: usize) -> &[T] {
        self.candidates[index].features.as_slice()
    }

    pub fn baseline(&self) -> Option<&Baseline<T>> {
        self.baseline.as_ref()
    }

    pub fn baseline_candidate(&self) -> Option<&Candidate<T>> {
        match self.baseline.as_ref()? {
            Baseline::Member(i) => self.candidates.get(*i),
            Baseline::Separate(c) => Some(c),
        }
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.candidates.iter().position(|c| c.id == id)
    }

    /// `φ(first) − φ(second)`.
    pub fn difference(&self, first: usize, second: usize) -> Vec<T> {
        sub(self.features(first), self.features(second))
    }

    pub fn max_pairwise_distance(&self) -> T {
        let mut all: Vec<&[T]> = self.candidates.iter().map(|c| c.features.as_slice()).collect();
        if let Some(Baseline::Separate(b)) = &self.baseline {
            all.push(b.features.as_slice());
        }
        max_distance(&all)
    }

    /// Utility `⟨θ, φ(y)⟩` of every candidate.
    pub fn utilities(&self, theta: &[T]) -> Result<Vec<T>> {
        check_dim(self.dimension, theta.len())?;
        Ok(self.candidates.iter().map(|c| dot(theta, c.features.as_slice())).collect())
    }
}

fn max_distance<T: Scalar>(points: &[&[T]]) -> T {
    let mut widest = T::zero();
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            widest = widest.max(distance(a, b));
        }
    }
    widest
}

/// One observed comparison `(y⁽¹⁾, y⁽²⁾, r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PreferenceTuple<T: Scalar> {
    first: usize,
    second: usize,
    first_preferred: bool,
    /// Cached `φ(y⁽¹⁾) − φ(y⁽²⁾)`.
    z: Vec<T>,
}

impl<T: Scalar> PreferenceTuple<T> {
    pub fn new(pool: &CandidatePool<T>, first: usize, second: usize, r: u8) -> Result<Self> {
        pool.candidate(first)?;
        pool.candidate(second)?;
        Self::from_parts(first, second, r, pool.difference(first, second))
    }

    /// Builds a tuple from a precomputed difference vector.
    pub fn from_parts(first: usize, second: usize, r: u8, z: Vec<T>) -> Result<Self> {
        if first == second {
            return Err(Error::InvalidArgument(format!("cannot compare candidate {first} with itself")));
        }
        let first_preferred = label_from_u8(r)?;
        if z.is_empty() || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("difference vector must be finite and non-empty".into()));
        }
        Ok(Self { first, second, first_preferred, z })
    }

    pub fn first(&self) -> usize {
        self.first
    }

    pub fn second(&self) -> usize {
        self.second
    }

    /// Binary label, 1 when the first response was preferred.
    pub fn r(&self) -> u8 {
        u8::from(self.first_preferred)
    }

    pub fn first_preferred(&self) -> bool {
        self.first_preferred
    }

    pub fn z(&self) -> &[T] {
        &self.z
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    /// Normal `a` of the consistent halfspace `⟨θ, a⟩ ≥ 0`.
    pub fn halfspace_normal(&self) -> Vec<T> {
        if self.first_preferred {
            self.z.clone()
        } else {
            self.z.iter().map(|&v| -v).collect()
        }
    }
}

pub(crate) fn label_from_u8(r: u8) -> Result<bool> {
    match r {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(Error::InvalidArgument(format!("label must be 0 or 1, got {other}"))),
    }
}

/// Ordered, append-only comparison history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PreferenceDataset<T: Scalar> {
    dimension: usize,
    tuples: Vec<PreferenceTuple<T>>,
}

impl<T: Scalar> PreferenceDataset<T> {
    pub fn new(dimension: usize) -> Self {
        Self { dimension, tuples: Vec::new() }
    }

    pub fn push(&mut self, tuple: PreferenceTuple<T>) -> Result<()> {
        check_dim(self.dimension, tuple.dim())?;
        self.tuples.push(tuple);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn tuples(&self) -> &[PreferenceTuple<T>] {
        &self.tuples
    }

    /// The first `len` tuples, i.e. the dataset as it was at step `len`.
    pub fn prefix(&self, len: usize) -> Self {
        Self { dimension: self.dimension, tuples: self.tuples[..len.min(self.tuples.len())].to_vec() }
    }
}

/// A preference parameter `θ` together with the norm bound `S` it lives under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ModelParams<T: Scalar> {
    theta: Vec<T>,
    norm_bound: T,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(theta: Vec<T>, norm_bound: T) -> Result<Self> {
        if !(norm_bound > T::zero()) || !norm_bound.is_finite() {
            return Err(Error::InvalidArgument(format!("norm bound must be positive, got {norm_bound}")));
        }
        if theta.is_empty() || theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("theta must be finite and non-empty".into()));
        }
        let n = norm(&theta);
        if n > norm_bound + T::lit(1e-9) {
            return Err(Error::InvalidArgument(format!("‖theta‖ = {n} exceeds norm bound {norm_bound}")));
        }
        Ok(Self { theta, norm_bound })
    }

    pub fn zeros(dimension: usize, norm_bound: T) -> Result<Self> {
        Self::new(vec![T::zero(); dimension], norm_bound)
    }

    /// Solver outputs are clipped back onto the ball before wrapping.
    pub(crate) fn clipped(mut theta: Vec<T>, norm_bound: T) -> Self {
        crate::vector::project_ball(&mut theta, norm_bound);
        Self { theta, norm_bound }
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    pub fn norm_bound(&self) -> T {
        self.norm_bound
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn into_theta(self) -> Vec<T> {
        self.theta
    }
}

/// `μ(u) = 1 / (1 + e^{−u})`, saturating for `|u| > 36`.
pub fn logistic<T: Scalar>(u: T) -> T {
    let clamp = T::lit(LOGISTIC_CLAMP);
    let u = u.max(-clamp).min(clamp);
    if u >= T::zero() {
        T::one() / (T::one() + (-u).exp())
    } else {
        let e = u.exp();
        e / (T::one() + e)
    }
}

/// Derivative `μ̇(u) = μ(u)(1 − μ(u))`.
pub fn logistic_derivative<T: Scalar>(u: T) -> T {
    let m = logistic(u);
    m * (T::one() - m)
}

/// `log(1 + e^x)` without overflow.
pub(crate) fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Log-loss of a single comparison at margin `u = ⟨θ, z⟩`.
pub(crate) fn margin_loss<T: Scalar>(u: T, first_preferred: bool) -> T {
    // −log μ(u) = softplus(−u), −log(1 − μ(u)) = softplus(u)
    if first_preferred {
        softplus(-u)
    } else {
        softplus(u)
    }
}

/// `ℓ(θ; (y⁽¹⁾, y⁽²⁾, r)) = −r log μ(⟨θ,z⟩) − (1 − r) log(1 − μ(⟨θ,z⟩))`.
pub fn tuple_loss<T: Scalar>(theta: &[T], tuple: &PreferenceTuple<T>) -> Result<T> {
    check_dim(tuple.dim(), theta.len())?;
    Ok(margin_loss(dot(theta, tuple.z()), tuple.first_preferred()))
}

/// Negative log-likelihood `L_t(θ)` of the whole dataset.
pub fn total_loss<T: Scalar>(theta: &[T], data: &PreferenceDataset<T>) -> Result<T> {
    check_dim(data.dimension(), theta.len())?;
    Ok(data.tuples().iter().fold(T::zero(), |acc, t| acc + margin_loss(dot(theta, t.z()), t.first_preferred())))
}

/// Analytic gradient `Σ (μ(⟨θ,z⟩) − r) z` of [`total_loss`].
pub fn loss_gradient<T: Scalar>(theta: &[T], data: &PreferenceDataset<T>) -> Result<Vec<T>> {
    check_dim(data.dimension(), theta.len())?;
    let mut grad = vec![T::zero(); theta.len()];
    for t in data.tuples() {
        let r = if t.first_preferred() { T::one() } else { T::zero() };
        let w = logistic(dot(theta, t.z())) - r;
        crate::vector::axpy(w, t.z(), &mut grad);
    }
    Ok(grad)
}

/// Whether `θ` lies in the halfspace consistent with the tuple's label
/// (boundary included up to [`HALFSPACE_TOL`]).
pub fn halfspace_satisfied<T: Scalar>(theta: &[T], tuple: &PreferenceTuple<T>) -> Result<bool> {
    check_dim(tuple.dim(), theta.len())?;
    let u = dot(theta, tuple.z());
    let tol = T::lit(HALFSPACE_TOL);
    Ok(if tuple.first_preferred() { u >= -tol } else { u <= tol })
}

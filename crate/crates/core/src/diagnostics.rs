//! Confidence-set instrumentation: Monte Carlo area in 2D, the viable
//! candidate pool, per-step traces, and the stopping-time bound calculator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex::{in_confidence_set, is_empty, max_linear, solve_confidence, ConfidenceSpec};
use crate::elicit::TranscriptEvent;
use crate::error::{check_dim, Error, Result};
use crate::prefcore::{logistic_derivative, CandidatePool, ModelParams, PreferenceDataset};
use crate::scalar::Scalar;
use crate::vector::{argmax_first, dot};

/// A candidate stays viable while no rival beats it everywhere by more
/// than this margin.
pub const DOMINATION_TOL: f64 = 1e-6;

/// Fraction of the disk `‖θ‖ ≤ S` inside the set, from `samples` uniform
/// draws of a stream seeded by `seed`.
///
/// The step-0 set (no data) is the whole disk, so this fraction is already
/// normalized by the step-0 area. Equal seeds give paired estimates across
/// sets. Standard error is at most `1 / (2 √samples)`.
pub fn estimate_area_2d<T: Scalar>(spec: &ConfidenceSpec<'_, T>, samples: usize, seed: u64) -> Result<T> {
    if spec.dimension() != 2 {
        return Err(Error::Unsupported(format!("area estimation needs d = 2, got {}", spec.dimension())));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("at least one sample is required".into()));
    }
    let s = spec.norm_bound().as_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inside = 0usize;
    for _ in 0..samples {
        let r = s * rng.gen::<f64>().sqrt();
        let a = rng.gen::<f64>() * std::f64::consts::TAU;
        let theta = [T::lit(r * a.cos()), T::lit(r * a.sin())];
        if in_confidence_set(&theta, spec)? {
            inside += 1;
        }
    }
    Ok(T::lit(inside as f64 / samples as f64).min(T::one()))
}

/// Candidates not dominated over the set.
///
/// `y′` dominates `y` when `⟨θ, φ(y) − φ(y′)⟩ ≤ 1e-6` for every `θ` in the
/// set while `⟨θ, φ(y′) − φ(y)⟩ > 1e-6` for some `θ`. Each "for some"
/// check is one [`max_linear`] program; points known to lie in the set
/// (`θ̂` when feasible, earlier maximizers) settle most of them without a
/// solve. An empty refined set yields the single argmax under `θ̂`.
pub fn viable_pool<T: Scalar>(spec: &ConfidenceSpec<'_, T>, pool: &CandidatePool<T>) -> Result<Vec<usize>> {
    check_dim(spec.dimension(), pool.dimension())?;
    let tol = T::tol(DOMINATION_TOL);
    let theta_hat = spec.theta_hat().theta();
    if !spec.is_collapsed() && is_empty(spec) {
        return Ok(vec![argmax_first(pool.utilities(theta_hat)?).expect("pool is never empty")]);
    }
    let mut witnesses: Vec<Vec<T>> = Vec::new();
    if in_confidence_set(theta_hat, spec)? {
        witnesses.push(theta_hat.to_vec());
    }
    let k = pool.len();
    // exceeds[y][o]: some θ in the set has ⟨θ, φ(y) − φ(o)⟩ > tol
    let mut exceeds: Vec<Vec<Option<bool>>> = vec![vec![None; k]; k];
    let mut check = |y: usize, o: usize, witnesses: &mut Vec<Vec<T>>| -> Result<bool> {
        if let Some(v) = exceeds[y][o] {
            return Ok(v);
        }
        let c = pool.difference(y, o);
        let v = if witnesses.iter().any(|w| dot(w, &c) > tol) {
            true
        } else {
            let rep = max_linear(spec, &c)?;
            witnesses.push(rep.argmax_theta.into_theta());
            rep.upper_bound > tol
        };
        exceeds[y][o] = Some(v);
        Ok(v)
    };
    let mut viable = Vec::new();
    for y in 0..k {
        let mut dominated = false;
        for o in (0..k).filter(|&o| o != y) {
            if !check(y, o, &mut witnesses)? && check(o, y, &mut witnesses)? {
                dominated = true;
                break;
            }
        }
        if !dominated {
            viable.push(y);
        }
    }
    Ok(viable)
}

/// Ingredients and value of the explicit stopping-time bound
/// `24 Ω K² log((8S/d) Ω K²)` with
/// `Ω = S² κ★ / max(ε, Δ)² · (d + log 1/δ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TheoryBound<T: Scalar> {
    /// `max 1/μ̇(⟨θ★, φ(y) − φ(y′)⟩)` over the pool's pairs.
    pub kappa_star: T,
    /// Smallest utility gap between the best candidate and any other.
    pub delta_gap: T,
    /// `min_{y ≠ y′} ⟨θ★, φ(y) − φ(y′)⟩` read literally (never positive).
    pub delta_gap_literal: T,
    pub omega: T,
    pub tau_bound: T,
    pub num_candidates: usize,
}

pub fn theory_bound<T: Scalar>(
    pool: &CandidatePool<T>,
    theta_star: &ModelParams<T>,
    epsilon: T,
    delta: T,
    norm_bound: T,
) -> Result<TheoryBound<T>> {
    let k = pool.len();
    if k < 2 {
        return Err(Error::InvalidArgument("the gap needs at least two candidates".into()));
    }
    if !(delta > T::zero() && delta < T::one()) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(epsilon >= T::zero()) || !(norm_bound > T::zero()) {
        return Err(Error::InvalidArgument("epsilon must be >= 0 and the norm bound > 0".into()));
    }
    let u = pool.utilities(theta_star.theta())?;
    let d = T::lit(pool.dimension() as f64);
    let mut kappa = T::zero();
    let mut literal = T::infinity();
    for i in 0..k {
        for j in (0..k).filter(|&j| j != i) {
            let m = u[i] - u[j];
            kappa = kappa.max(T::one() / logistic_derivative(m));
            literal = literal.min(m);
        }
    }
    let best = argmax_first(u.iter().copied()).expect("k >= 2");
    let gap = (0..k).filter(|&j| j != best).map(|j| u[best] - u[j]).fold(T::infinity(), T::min);
    let denom = epsilon.max(gap);
    let (omega, tau) = if denom > T::zero() {
        let omega = norm_bound * norm_bound * kappa / (denom * denom) * (d + (T::one() / delta).ln());
        let k2 = T::lit((k * k) as f64);
        let tau = T::lit(24.0) * omega * k2 * (T::lit(8.0) * norm_bound / d * omega * k2).ln();
        (omega, tau)
    } else {
        (T::infinity(), T::infinity())
    };
    Ok(TheoryBound {
        kappa_star: kappa,
        delta_gap: gap,
        delta_gap_literal: literal,
        omega,
        tau_bound: tau,
        num_candidates: k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct StepDiagnostics<T: Scalar> {
    pub step: usize,
    /// Only for `d = 2`.
    pub normalized_area: Option<T>,
    pub viable_pool_size: usize,
    pub stopping_value: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DiagnosticsReport<T: Scalar> {
    pub steps: Vec<StepDiagnostics<T>>,
    pub bound: Option<TheoryBound<T>>,
}

#[derive(Debug, Clone)]
pub struct TraceOptions<T: Scalar> {
    pub norm_bound: T,
    pub delta: T,
    pub use_halfspaces: bool,
    /// Monte Carlo draws per step; 0 skips the area.
    pub area_samples: usize,
    pub area_seed: u64,
}

/// Area, viable-pool size and `B(t)` after each prefix `D_0 … D_n` of
/// `data`. `B(t)` is read from `transcript` when given.
pub fn trace<T: Scalar>(
    pool: &CandidatePool<T>,
    data: &PreferenceDataset<T>,
    transcript: Option<&[TranscriptEvent<T>]>,
    opts: &TraceOptions<T>,
) -> Result<Vec<StepDiagnostics<T>>> {
    let mut b_values = std::collections::HashMap::new();
    for e in transcript.unwrap_or_default() {
        match e {
            TranscriptEvent::PairIssued { step, stopping_value: Some(v), .. } => {
                b_values.insert(*step, *v);
            }
            TranscriptEvent::Stopped { step, stopping_value, .. } => {
                b_values.insert(*step, *stopping_value);
            }
            _ => {}
        }
    }
    let mut out = Vec::with_capacity(data.len() + 1);
    let mut warm: Option<ModelParams<T>> = None;
    for t in 0..=data.len() {
        let prefix = data.prefix(t);
        let solved = solve_confidence(&prefix, opts.norm_bound, opts.delta, opts.use_halfspaces, warm.as_ref())?;
        let area = if pool.dimension() == 2 && opts.area_samples > 0 {
            Some(estimate_area_2d(&solved.spec, opts.area_samples, opts.area_seed)?)
        } else {
            None
        };
        let viable = viable_pool(&solved.spec, pool)?.len();
        out.push(StepDiagnostics {
            step: t,
            normalized_area: area,
            viable_pool_size: viable,
            stopping_value: b_values.get(&t).copied(),
        });
        warm = Some(solved.mle.params);
    }
    Ok(out)
}

//! Constrained convex solving for the confidence-set machinery: the
//! norm-constrained MLE, the loss-based confidence set (optionally refined
//! by the consistent halfspaces), membership, linear maximization over the
//! set, and emptiness detection.
//!
//! Everything is first order. Projections onto `ball ∩ halfspaces` are exact
//! (see [`cone`]); the loss constraint in [`max_linear`] is handled through
//! its scalar Lagrange multiplier.

mod cone;
mod dykstra;
mod loss_model;
mod pgd;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::prefcore::{halfspace_satisfied, total_loss, ModelParams, PreferenceDataset};
use crate::scalar::Scalar;
use crate::vector::{distance, dot, norm};

use cone::HalfspaceCone;
pub use dykstra::{dykstra_project, ConvexSet, DykstraResult};
use loss_model::LossModel;
use pgd::{minimize, PgdOptions};

/// Projected-gradient-mapping threshold for the MLE.
pub const MLE_MAPPING_TOL: f64 = 1e-8;
pub const MLE_MAX_ITER: usize = 10_000;
/// Slack used by [`in_confidence_set`] on the ball and loss constraints.
pub const MEMBERSHIP_TOL: f64 = 1e-7;
/// Minimum loss excess over the level set at which the refined set is empty.
pub const EMPTINESS_TOL: f64 = 1e-6;
/// Guaranteed relative objective gap of [`max_linear`].
pub const OBJECTIVE_GAP: f64 = 1e-5;
pub const LAMBDA_MAX: f64 = 1e6;
pub const MAX_DUAL_STEPS: usize = 60;

// internal targets, tighter than the published guarantees
const INNER_GAP: f64 = 1e-6;
const INNER_MAX_ITER: usize = 5_000;
const ANCHOR_MAPPING_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
}

/// `β_t = 10 d log(S t / (4 d) + e) + 2 ((e − 2) + S) log(1/δ)`.
pub fn beta_radius<T: Scalar>(d: usize, norm_bound: T, t: usize, delta: T) -> Result<T> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    if !(norm_bound > T::zero()) || !norm_bound.is_finite() {
        return Err(Error::InvalidArgument(format!("norm bound must be positive, got {norm_bound}")));
    }
    if !(delta > T::zero() && delta < T::one()) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    let e = T::E();
    let dd = T::lit(d as f64);
    let tt = T::lit(t as f64);
    let first = T::lit(10.0) * dd * (norm_bound * tt / (T::lit(4.0) * dd) + e).ln();
    let second = T::lit(2.0) * ((e - T::lit(2.0)) + norm_bound) * (T::one() / delta).ln();
    Ok(first + second)
}

#[derive(Debug, Clone)]
pub struct MleFit<T: Scalar> {
    pub params: ModelParams<T>,
    pub loss: T,
    pub iterations: usize,
    /// Norm of the unit-step projected-gradient mapping at the returned point.
    pub mapping_norm: T,
    pub status: SolveStatus,
}

/// Norm-constrained, unregularized maximum-likelihood estimate
/// `argmin_{‖θ‖ ≤ S} L_t(θ)`.
///
/// The empty dataset returns the zero vector. On non-convergence the best
/// iterate is returned with `status = MaxIter`.
pub fn solve_mle<T: Scalar>(
    data: &PreferenceDataset<T>,
    norm_bound: T,
    warm_start: Option<&ModelParams<T>>,
) -> Result<MleFit<T>> {
    let d = data.dimension();
    if d == 0 {
        return Err(Error::InvalidArgument("dataset dimension must be >= 1".into()));
    }
    let zero = ModelParams::zeros(d, norm_bound)?;
    if data.is_empty() {
        return Ok(MleFit {
            params: zero,
            loss: T::zero(),
            iterations: 0,
            mapping_norm: T::zero(),
            status: SolveStatus::Converged,
        });
    }
    let start = match warm_start {
        Some(w) => {
            check_dim(d, w.dim())?;
            w.theta().to_vec()
        }
        None => zero.into_theta(),
    };
    let model = LossModel::new(data);
    Ok(mle_from_model(&model, norm_bound, &start))
}

fn mle_from_model<T: Scalar>(model: &LossModel<T>, norm_bound: T, start: &[T]) -> MleFit<T> {
    let lip = model.lipschitz();
    let opts = PgdOptions {
        max_iter: MLE_MAX_ITER,
        mapping_tol: T::tol(MLE_MAPPING_TOL),
        initial_step: if lip > T::zero() { T::one() / lip } else { T::one() },
    };
    let run = minimize(
        |x: &[T]| model.value_grad(x),
        |x: &[T]| {
            let mut p = x.to_vec();
            crate::vector::project_ball(&mut p, norm_bound);
            p
        },
        start,
        &opts,
        |_: &[T], _: &[T]| false,
    );
    let status = if run.converged { SolveStatus::Converged } else { SolveStatus::MaxIter };
    if !run.converged {
        log::debug!("MLE stopped after {} iterations, mapping norm {}", run.iterations, run.mapping_norm);
    }
    MleFit {
        params: ModelParams::clipped(run.x, norm_bound),
        loss: run.value,
        iterations: run.iterations,
        mapping_norm: run.mapping_norm,
        status,
    }
}

/// The confidence set `Θ_t = {‖θ‖ ≤ S, L_t(θ) ≤ L_t(θ̂) + β_t}`, optionally
/// intersected with the consistent halfspaces, represented implicitly.
#[derive(Debug, Clone)]
pub struct ConfidenceSpec<'a, T: Scalar> {
    data: &'a PreferenceDataset<T>,
    theta_hat: ModelParams<T>,
    beta: T,
    norm_bound: T,
    use_halfspaces: bool,
    delta: T,
    step: usize,
    collapsed: bool,
    loss: LossModel<T>,
    loss_hat: T,
    cone: HalfspaceCone<T>,
    /// Minimizer of the loss over `ball ∩ halfspaces`; an interior point of
    /// the set whenever the set has one.
    anchor: Vec<T>,
    anchor_loss: T,
}

impl<'a, T: Scalar> ConfidenceSpec<'a, T> {
    /// Builds the set at step `t = |data|` around the (approximate) MLE.
    pub fn new(
        data: &'a PreferenceDataset<T>,
        theta_hat: ModelParams<T>,
        delta: T,
        use_halfspaces: bool,
    ) -> Result<Self> {
        check_dim(data.dimension(), theta_hat.dim())?;
        let norm_bound = theta_hat.norm_bound();
        let step = data.len();
        let beta = beta_radius(data.dimension(), norm_bound, step, delta)?;
        let loss = LossModel::new(data);
        let loss_hat = loss.value(theta_hat.theta());
        let cone = if use_halfspaces { HalfspaceCone::new(loss.halfspace_normals()) } else { HalfspaceCone::default() };
        let (anchor, anchor_loss) = find_anchor(&loss, &cone, norm_bound, theta_hat.theta(), loss_hat);
        Ok(Self {
            data,
            theta_hat,
            beta,
            norm_bound,
            use_halfspaces,
            delta,
            step,
            collapsed: false,
            loss,
            loss_hat,
            cone,
            anchor,
            anchor_loss,
        })
    }

    /// Same set with `β` evaluated at step `t` instead of `|data|`.
    pub fn at_step(mut self, step: usize) -> Result<Self> {
        self.beta = beta_radius(self.data.dimension(), self.norm_bound, step, self.delta)?;
        self.step = step;
        Ok(self)
    }

    /// Replaces the set by the singleton `{θ̂}`.
    pub fn collapse(&mut self) {
        self.collapsed = true;
    }

    pub fn data(&self) -> &'a PreferenceDataset<T> {
        self.data
    }

    pub fn theta_hat(&self) -> &ModelParams<T> {
        &self.theta_hat
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn norm_bound(&self) -> T {
        self.norm_bound
    }

    pub fn use_halfspaces(&self) -> bool {
        self.use_halfspaces
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn dimension(&self) -> usize {
        self.data.dimension()
    }

    pub fn is_collapsed(&self) -> bool {
        self.collapsed
    }

    pub fn loss_hat(&self) -> T {
        self.loss_hat
    }

    /// `L_t(θ̂) + β_t`.
    pub fn level(&self) -> T {
        self.loss_hat + self.beta
    }

    fn slack(&self, theta: &[T]) -> T {
        self.loss.value(theta) - self.level()
    }
}

fn find_anchor<T: Scalar>(
    loss: &LossModel<T>,
    cone: &HalfspaceCone<T>,
    norm_bound: T,
    theta_hat: &[T],
    loss_hat: T,
) -> (Vec<T>, T) {
    if cone.is_whole_space() || cone.violation(theta_hat) <= T::zero() {
        return (theta_hat.to_vec(), loss_hat);
    }
    let lip = loss.lipschitz();
    let opts = PgdOptions {
        max_iter: MLE_MAX_ITER,
        mapping_tol: T::tol(ANCHOR_MAPPING_TOL),
        initial_step: if lip > T::zero() { T::one() / lip } else { T::one() },
    };
    let run = minimize(
        |x: &[T]| loss.value_grad(x),
        |x: &[T]| cone.project_with_ball(x, norm_bound),
        theta_hat,
        &opts,
        |_: &[T], _: &[T]| false,
    );
    (run.x, run.value)
}

/// Membership test with slack [`MEMBERSHIP_TOL`] on the ball and loss
/// constraints and the halfspace predicate's own boundary tolerance.
pub fn in_confidence_set<T: Scalar>(theta: &[T], spec: &ConfidenceSpec<'_, T>) -> Result<bool> {
    check_dim(spec.dimension(), theta.len())?;
    let tol = T::tol(MEMBERSHIP_TOL);
    if spec.collapsed {
        return Ok(distance(theta, spec.theta_hat.theta()) <= tol);
    }
    if norm(theta) > spec.norm_bound + tol {
        return Ok(false);
    }
    if total_loss(theta, spec.data)? > spec.level() + tol * T::one().max(spec.level().abs()) {
        return Ok(false);
    }
    if spec.use_halfspaces {
        for t in spec.data.tuples() {
            if !halfspace_satisfied(theta, t)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Whether `ball ∩ loss set ∩ halfspaces` has no point: the minimum of the
/// loss over `ball ∩ halfspaces` exceeds the level by more than
/// [`EMPTINESS_TOL`]. Loss-only sets always contain `θ̂`.
pub fn is_empty<T: Scalar>(spec: &ConfidenceSpec<'_, T>) -> bool {
    if spec.collapsed || !spec.use_halfspaces {
        return false;
    }
    spec.anchor_loss - spec.level() > T::tol(EMPTINESS_TOL)
}

/// Cheap upper bound on [`max_linear`]: the maximum over
/// `ball ∩ halfspaces` ignoring the loss constraint (exact for a collapsed
/// set).
pub fn linear_upper_bound<T: Scalar>(spec: &ConfidenceSpec<'_, T>, direction: &[T]) -> Result<T> {
    check_dim(spec.dimension(), direction.len())?;
    if spec.collapsed {
        return Ok(dot(spec.theta_hat.theta(), direction));
    }
    Ok(spec.cone.linear_max(direction, spec.norm_bound).1)
}

#[derive(Debug, Clone)]
pub struct SolveReport<T: Scalar> {
    pub argmax_theta: ModelParams<T>,
    /// `⟨θ, c⟩` at the returned (feasible) point.
    pub objective_value: T,
    /// Certified upper bound on the maximum over the set.
    pub upper_bound: T,
    pub iterations: usize,
    /// Loss-constraint violation at the returned point.
    pub constraint_residual: T,
    pub status: SolveStatus,
}

/// `argmax_{θ ∈ Θ} ⟨θ, c⟩`.
///
/// Without an active loss constraint the answer is closed form over
/// `ball ∩ halfspaces`. Otherwise the loss constraint is dualized with a
/// scalar multiplier `λ`: each `λ` gives a concave maximization over
/// `ball ∩ halfspaces` solved by projected gradient, whose Frank–Wolfe gap
/// certifies an upper bound; feasible points (pushed onto the loss boundary
/// along the segment towards the interior anchor) give lower bounds. `λ` is
/// bracketed and refined until the two bounds meet.
pub fn max_linear<T: Scalar>(spec: &ConfidenceSpec<'_, T>, direction: &[T]) -> Result<SolveReport<T>> {
    check_dim(spec.dimension(), direction.len())?;
    if direction.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("direction must be finite".into()));
    }
    let c = direction;
    let s = spec.norm_bound;
    let theta_hat = spec.theta_hat.theta();
    let report = |theta: Vec<T>, upper: T, iterations: usize, status: SolveStatus| {
        let residual = spec.slack(&theta).max(T::zero());
        let objective = dot(&theta, c);
        SolveReport {
            argmax_theta: ModelParams::clipped(theta, s),
            objective_value: objective,
            upper_bound: upper.max(objective),
            iterations,
            constraint_residual: residual,
            status,
        }
    };

    if spec.collapsed {
        let v = dot(theta_hat, c);
        return Ok(report(theta_hat.to_vec(), v, 0, SolveStatus::Converged));
    }
    let cn = norm(c);
    if cn <= T::zero() {
        return Ok(report(theta_hat.to_vec(), T::zero(), 0, SolveStatus::Converged));
    }
    if is_empty(spec) {
        let v = dot(theta_hat, c);
        return Ok(report(theta_hat.to_vec(), v, 0, SolveStatus::Infeasible));
    }

    let gap_tol = T::tol(INNER_GAP) * T::one().max(cn * s);
    let (theta0, v0) = spec.cone.linear_max(c, s);
    let g0 = spec.slack(&theta0);
    if g0 <= T::zero() {
        return Ok(report(theta0, v0, 0, SolveStatus::Converged));
    }

    let anchor = spec.anchor.clone();
    let g_anchor = spec.anchor_loss - spec.level();
    let mut upper = v0;
    let mut best_val = dot(&anchor, c);
    let mut best = anchor.clone();
    if g_anchor > -T::tol(1e-12) {
        // the set is numerically the single point `anchor`
        return Ok(report(best, best_val, 0, SolveStatus::Converged));
    }
    let consider = |theta: Vec<T>, best: &mut Vec<T>, best_val: &mut T| {
        let v = dot(&theta, c);
        if v > *best_val {
            *best_val = v;
            *best = theta;
        }
    };
    consider(boundary_point(spec, &theta0, g0, &anchor, g_anchor), &mut best, &mut best_val);
    if upper - best_val <= gap_tol {
        return Ok(report(best, upper, 0, SolveStatus::Converged));
    }

    let (_, grad0) = spec.loss.value_grad(&theta0);
    let lambda_max = T::lit(LAMBDA_MAX);
    let mut lambda = (cn / norm(&grad0).max(T::tol(1e-12))).max(T::tol(1e-12)).min(lambda_max);
    // bracket: lo has the loss constraint violated, hi satisfied
    let mut lo = (T::zero(), g0);
    let mut hi: Option<(T, T)> = None;
    // Illinois weights against one-sided stagnation of regula falsi
    let mut last_side = 0i8;
    let mut lo_weight = T::one();
    let mut hi_weight = T::one();
    let mut warm = theta0;
    let mut iterations = 0;
    let mut status = SolveStatus::MaxIter;

    for _ in 0..MAX_DUAL_STEPS {
        let inner = inner_max(spec, c, lambda, &warm, gap_tol * T::lit(0.1));
        iterations += inner.iterations;
        let g = spec.slack(&inner.x);
        upper = upper.min(dot(&inner.x, c) - lambda * g + inner.fw_gap);
        if g <= T::zero() {
            hi = Some((lambda, g));
            if last_side == 1 {
                lo_weight = lo_weight * T::lit(0.5);
            } else {
                lo_weight = T::one();
            }
            hi_weight = T::one();
            last_side = 1;
            consider(inner.x.clone(), &mut best, &mut best_val);
        } else {
            lo = (lambda, g);
            if last_side == -1 {
                hi_weight = hi_weight * T::lit(0.5);
            } else {
                hi_weight = T::one();
            }
            lo_weight = T::one();
            last_side = -1;
            consider(boundary_point(spec, &inner.x, g, &anchor, g_anchor), &mut best, &mut best_val);
        }
        if upper - best_val <= gap_tol {
            status = SolveStatus::Converged;
            break;
        }
        warm = inner.x;
        lambda = match hi {
            None => {
                if lambda >= lambda_max {
                    break;
                }
                (lambda * T::lit(10.0)).min(lambda_max)
            }
            Some((lh, gh)) => {
                let (ll, gl) = lo;
                let (gl, gh) = (gl * lo_weight, gh * hi_weight);
                let width = lh - ll;
                let mut next = if gl - gh > T::zero() { ll + width * gl / (gl - gh) } else { ll + width * T::lit(0.5) };
                let margin = width * T::lit(0.01);
                if !(next > ll + margin && next < lh - margin) {
                    next = if ll > T::zero() && lh > T::lit(4.0) * ll {
                        (ll * lh).sqrt()
                    } else {
                        ll + width * T::lit(0.5)
                    };
                }
                if !(next > ll && next < lh) {
                    break;
                }
                next
            }
        };
    }
    Ok(report(best, upper, iterations, status))
}

struct InnerSolution<T> {
    x: Vec<T>,
    fw_gap: T,
    iterations: usize,
}

/// `argmax_{θ ∈ ball ∩ halfspaces} ⟨c, θ⟩ − λ L(θ)`, stopped on a
/// Frank–Wolfe gap below `gap_tol`.
fn inner_max<T: Scalar>(spec: &ConfidenceSpec<'_, T>, c: &[T], lambda: T, warm: &[T], gap_tol: T) -> InnerSolution<T> {
    let s = spec.norm_bound;
    let cone = &spec.cone;
    let objective = |x: &[T]| {
        let (v, mut g) = spec.loss.value_grad(x);
        for (gi, &ci) in g.iter_mut().zip(c) {
            *gi = lambda * *gi - ci;
        }
        (lambda * v - dot(c, x), g)
    };
    let fw_gap = |x: &[T], g: &[T]| {
        let neg: Vec<T> = g.iter().map(|&v| -v).collect();
        let (_, best) = cone.linear_max(&neg, s);
        (dot(g, x) + best).max(T::zero())
    };
    let lip = lambda * spec.loss.lipschitz();
    let opts = PgdOptions {
        max_iter: INNER_MAX_ITER,
        mapping_tol: T::tol(1e-15) * T::one().max(norm(c) * s),
        initial_step: if lip > T::zero() { T::one() / lip } else { T::lit(1e6) },
    };
    let run = minimize(
        objective,
        |x: &[T]| cone.project_with_ball(x, s),
        warm,
        &opts,
        |x: &[T], g: &[T]| fw_gap(x, g) <= gap_tol,
    );
    let gap = fw_gap(&run.x, &run.grad);
    InnerSolution { x: run.x, fw_gap: gap, iterations: run.iterations }
}

/// The point on the segment from `outside` (loss constraint violated) to
/// `inside` (strictly satisfied) where the constraint becomes tight, taken
/// on the feasible side.
fn boundary_point<T: Scalar>(spec: &ConfidenceSpec<'_, T>, outside: &[T], g_out: T, inside: &[T], g_in: T) -> Vec<T> {
    let at = |t: T| -> Vec<T> { outside.iter().zip(inside).map(|(&o, &i)| o + t * (i - o)).collect() };
    let mut lo = T::zero();
    let mut hi = T::one();
    // by convexity the chord root is already feasible
    let guess = g_out / (g_out - g_in);
    if guess > T::zero() && guess < T::one() && spec.slack(&at(guess)) <= T::zero() {
        hi = guess;
    }
    for _ in 0..48 {
        let mid = lo + (hi - lo) * T::lit(0.5);
        if !(mid > lo && mid < hi) {
            break;
        }
        if spec.slack(&at(mid)) <= T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    at(hi)
}

/// Output of the confidence-set construction at one step.
#[derive(Debug, Clone)]
pub struct Solved<'a, T: Scalar> {
    pub mle: MleFit<T>,
    pub spec: ConfidenceSpec<'a, T>,
}

/// MLE plus confidence set; with halfspaces, an empty refined set falls
/// back to `{θ̂}`.
pub fn solve_confidence<'a, T: Scalar>(
    data: &'a PreferenceDataset<T>,
    norm_bound: T,
    delta: T,
    use_halfspaces: bool,
    warm_start: Option<&ModelParams<T>>,
) -> Result<Solved<'a, T>> {
    let mle = solve_mle(data, norm_bound, warm_start)?;
    let mut spec = ConfidenceSpec::new(data, mle.params.clone(), delta, use_halfspaces)?;
    if is_empty(&spec) {
        spec.collapse();
    }
    Ok(Solved { mle, spec })
}

//! Projected gradient descent with Barzilai–Borwein trial steps and Armijo
//! backtracking along the projection arc.

use crate::scalar::Scalar;
use crate::vector::{distance, dot, sub};

const ARMIJO_SLOPE: f64 = 1e-4;
const BACKTRACK_SHRINK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 80;
const STEP_MIN: f64 = 1e-14;
const STEP_MAX: f64 = 1e14;

#[derive(Debug, Clone)]
pub(crate) struct PgdOptions<T> {
    pub max_iter: usize,
    /// Threshold on the unit-step gradient mapping `‖x − P(x − ∇f(x))‖`.
    pub mapping_tol: T,
    pub initial_step: T,
}

#[derive(Debug, Clone)]
pub(crate) struct PgdResult<T> {
    pub x: Vec<T>,
    pub value: T,
    pub grad: Vec<T>,
    pub iterations: usize,
    pub mapping_norm: T,
    pub converged: bool,
}

/// Minimizes a smooth convex `f` over the set behind `project`.
///
/// `early_stop(x, grad)` may certify optimality by other means (a duality
/// gap) and end the run before the mapping threshold is met.
pub(crate) fn minimize<T, F, P, S>(
    mut f: F,
    mut project: P,
    x0: &[T],
    opts: &PgdOptions<T>,
    mut early_stop: S,
) -> PgdResult<T>
where
    T: Scalar,
    F: FnMut(&[T]) -> (T, Vec<T>),
    P: FnMut(&[T]) -> Vec<T>,
    S: FnMut(&[T], &[T]) -> bool,
{
    let sigma = T::lit(ARMIJO_SLOPE);
    let shrink = T::lit(BACKTRACK_SHRINK);
    let (step_min, step_max) = (T::lit(STEP_MIN), T::lit(STEP_MAX));

    let mut x = project(x0);
    let (mut fx, mut g) = f(&x);
    let mut step = opts.initial_step.max(step_min).min(step_max);
    let mut mapping_norm = T::infinity();

    for it in 0..opts.max_iter {
        let unit: Vec<T> = x.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        mapping_norm = distance(&x, &project(&unit));
        if mapping_norm <= opts.mapping_tol || early_stop(&x, &g) {
            return PgdResult { x, value: fx, grad: g, iterations: it, mapping_norm, converged: true };
        }

        let mut accepted = None;
        let mut trial_step = step;
        for _ in 0..MAX_BACKTRACKS {
            let shifted: Vec<T> = x.iter().zip(&g).map(|(&a, &b)| a - trial_step * b).collect();
            let xt = project(&shifted);
            let d = sub(&xt, &x);
            if d.iter().all(|v| v.is_zero()) {
                break;
            }
            let (ft, gt) = f(&xt);
            let decrease = dot(&g, &d);
            if ft <= fx + sigma * decrease || (decrease.abs() <= T::epsilon() * fx.abs() && ft <= fx) {
                accepted = Some((xt, ft, gt, d));
                break;
            }
            trial_step = trial_step * shrink;
        }
        let Some((xt, ft, gt, s)) = accepted else {
            // no further decrease representable at this precision
            return PgdResult { x, value: fx, grad: g, iterations: it, mapping_norm, converged: false };
        };
        let y = sub(&gt, &g);
        let sy = dot(&s, &y);
        step = if sy > T::zero() { dot(&s, &s) / sy } else { step_max };
        step = step.max(step_min).min(step_max);
        x = xt;
        fx = ft;
        g = gt;
    }
    let unit: Vec<T> = x.iter().zip(&g).map(|(&a, &b)| a - b).collect();
    mapping_norm = mapping_norm.min(distance(&x, &project(&unit)));
    let converged = mapping_norm <= opts.mapping_tol;
    PgdResult { x, value: fx, grad: g, iterations: opts.max_iter, mapping_norm, converged }
}

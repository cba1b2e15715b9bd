//! Dykstra's alternating projections onto an intersection of closed convex
//! sets with closed-form individual projections.

use crate::scalar::Scalar;
use crate::vector::{distance, dot, project_ball};

#[derive(Debug, Clone)]
pub enum ConvexSet<T: Scalar> {
    /// Centred ball of the given radius.
    Ball(T),
    /// `{θ : ⟨a, θ⟩ ≥ 0}`.
    Halfspace(Vec<T>),
}

impl<T: Scalar> ConvexSet<T> {
    pub fn project_in_place(&self, x: &mut [T]) {
        match self {
            ConvexSet::Ball(r) => project_ball(x, *r),
            ConvexSet::Halfspace(a) => {
                let v = dot(a, x);
                if v < T::zero() {
                    let aa = dot(a, a);
                    if aa > T::zero() {
                        let s = v / aa;
                        for (xi, &ai) in x.iter_mut().zip(a) {
                            *xi = *xi - s * ai;
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct DykstraResult<T: Scalar> {
    pub point: Vec<T>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Projects `x` onto the intersection of `sets`. Stops once a full sweep
/// moves the iterate by at most `tol`.
pub fn dykstra_project<T: Scalar>(sets: &[ConvexSet<T>], x: &[T], tol: T, max_sweeps: usize) -> DykstraResult<T> {
    let mut y = x.to_vec();
    if sets.is_empty() {
        return DykstraResult { point: y, sweeps: 0, converged: true };
    }
    let mut increments = vec![vec![T::zero(); x.len()]; sets.len()];
    for sweep in 1..=max_sweeps {
        let start = y.clone();
        for (set, inc) in sets.iter().zip(increments.iter_mut()) {
            let mut u: Vec<T> = y.iter().zip(inc.iter()).map(|(&a, &b)| a + b).collect();
            let before = u.clone();
            set.project_in_place(&mut u);
            for ((p, &b), &a) in inc.iter_mut().zip(&before).zip(&u) {
                *p = b - a;
            }
            y = u;
        }
        if distance(&start, &y) <= tol {
            return DykstraResult { point: y, sweeps: sweep, converged: true };
        }
    }
    DykstraResult { point: y, sweeps: max_sweeps, converged: false }
}

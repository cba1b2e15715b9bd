//! Exact Euclidean projection onto `{θ : ⟨a_j, θ⟩ ≥ 0 ∀j} ∩ {‖θ‖ ≤ S}`.
//!
//! The halfspaces all pass through the origin, so their intersection `K` is
//! a polyhedral cone and the ball is centred at its apex. For such a pair
//! `P_{K∩B}(x) = P_B(P_K(x))`. `P_K` itself comes from the Moreau
//! decomposition `x = P_K(x) + P_{K°}(x)` with the polar cone
//! `K° = cone{−a_j}`, whose projection is a non-negative least-squares
//! problem solved exactly by the Lawson–Hanson active-set method.

use crate::scalar::Scalar;
use crate::vector::{axpy, dot, norm, project_ball};

use super::dykstra::{dykstra_project, ConvexSet};

#[derive(Debug, Clone, Default)]
pub(crate) struct HalfspaceCone<T: Scalar> {
    normals: Vec<Vec<T>>,
}

impl<T: Scalar> HalfspaceCone<T> {
    /// `normals` are expected to be unit length.
    pub(crate) fn new(normals: Vec<Vec<T>>) -> Self {
        Self { normals }
    }

    pub(crate) fn is_whole_space(&self) -> bool {
        self.normals.is_empty()
    }

    /// Largest violation `max_j max(0, −⟨a_j, x⟩)`.
    pub(crate) fn violation(&self, x: &[T]) -> T {
        self.normals.iter().fold(T::zero(), |acc, a| acc.max(-dot(a, x)))
    }

    pub(crate) fn project(&self, x: &[T]) -> Vec<T> {
        if self.normals.is_empty() || self.violation(x) <= T::zero() {
            return x.to_vec();
        }
        let scale = T::one().max(norm(x));
        match nnls_cone_projection(&self.normals, x) {
            Some(p) if self.violation(&p) <= T::tol(1e-12) * scale => p,
            _ => {
                log::debug!("active-set cone projection failed; falling back to Dykstra");
                let sets: Vec<ConvexSet<T>> = self.normals.iter().map(|a| ConvexSet::Halfspace(a.clone())).collect();
                dykstra_project(&sets, x, T::tol(1e-14) * scale, 200_000).point
            }
        }
    }

    /// Projection onto cone ∩ ball of radius `radius`.
    pub(crate) fn project_with_ball(&self, x: &[T], radius: T) -> Vec<T> {
        let mut p = self.project(x);
        project_ball(&mut p, radius);
        p
    }

    /// `argmax_{θ ∈ K ∩ B(S)} ⟨θ, c⟩` in closed form: `S · P_K(c) / ‖P_K(c)‖`
    /// with value `S ‖P_K(c)‖`, or the apex with value 0 when `c ∈ K°`.
    pub(crate) fn linear_max(&self, c: &[T], radius: T) -> (Vec<T>, T) {
        let p = self.project(c);
        let n = norm(&p);
        let cn = norm(c);
        if n <= T::tol(1e-14) * cn || n <= T::zero() {
            return (vec![T::zero(); c.len()], T::zero());
        }
        let theta: Vec<T> = p.iter().map(|&v| v * radius / n).collect();
        (theta, radius * n)
    }
}

/// Lawson–Hanson for `min_{μ ≥ 0} ‖x + Σ μ_j a_j‖²`; returns `x + Σ μ_j a_j`.
fn nnls_cone_projection<T: Scalar>(normals: &[Vec<T>], x: &[T]) -> Option<Vec<T>> {
    let m = normals.len();
    let tol = T::tol(1e-13) * T::one().max(norm(x));
    let mut mu = vec![T::zero(); m];
    let mut passive: Vec<usize> = Vec::new();
    let mut banned = vec![false; m];
    let mut resid = x.to_vec();

    for _ in 0..(3 * m + 10) {
        // w_j = ⟨e_j, f − Eμ⟩ with e_j = −a_j
        let mut best: Option<(usize, T)> = None;
        for j in 0..m {
            if passive.contains(&j) || banned[j] {
                continue;
            }
            let w = -dot(&normals[j], &resid);
            if w > tol && best.is_none_or(|(_, b)| w > b) {
                best = Some((j, w));
            }
        }
        let Some((j, _)) = best else { break };
        passive.push(j);

        loop {
            let cols: Vec<&[T]> = passive.iter().map(|&i| normals[i].as_slice()).collect();
            let Some(s) = least_squares_neg(&cols, x) else {
                // newest column is (numerically) dependent on the others
                passive.pop();
                banned[j] = true;
                break;
            };
            if s.iter().all(|&v| v > T::zero()) {
                for (k, &i) in passive.iter().enumerate() {
                    mu[i] = s[k];
                }
                break;
            }
            let mut alpha = T::one();
            for (k, &i) in passive.iter().enumerate() {
                if s[k] <= T::zero() {
                    let denom = mu[i] - s[k];
                    if denom > T::zero() {
                        alpha = alpha.min(mu[i] / denom);
                    } else {
                        alpha = T::zero();
                    }
                }
            }
            for (k, &i) in passive.iter().enumerate() {
                mu[i] = mu[i] + alpha * (s[k] - mu[i]);
            }
            let tiny = T::epsilon() * T::lit(16.0);
            passive.retain(|&i| {
                if mu[i] <= tiny {
                    mu[i] = T::zero();
                    false
                } else {
                    true
                }
            });
            if passive.is_empty() {
                break;
            }
        }

        resid = x.to_vec();
        for (i, a) in normals.iter().enumerate() {
            if mu[i] > T::zero() {
                axpy(mu[i], a, &mut resid);
            }
        }
    }
    if resid.iter().all(|v| v.is_finite()) {
        Some(resid)
    } else {
        None
    }
}

/// Least squares `min_s ‖−A s − x‖` over the given columns `a_k`, i.e. the
/// unconstrained NNLS subproblem with `E = −A`. Modified Gram–Schmidt QR;
/// `None` if the columns are numerically dependent.
fn least_squares_neg<T: Scalar>(cols: &[&[T]], x: &[T]) -> Option<Vec<T>> {
    let p = cols.len();
    let d = x.len();
    if p > d {
        return None;
    }
    let mut q: Vec<Vec<T>> = cols.iter().map(|c| c.iter().map(|&v| -v).collect()).collect();
    let mut r = vec![vec![T::zero(); p]; p];
    for k in 0..p {
        let original = norm(&q[k]);
        for i in 0..k {
            let proj = dot(&q[i], &q[k]);
            r[i][k] = proj;
            let qi = q[i].clone();
            axpy(-proj, &qi, &mut q[k]);
        }
        let n = norm(&q[k]);
        if !(n > T::tol(1e-10) * original) {
            return None;
        }
        r[k][k] = n;
        q[k].iter_mut().for_each(|v| *v = *v / n);
    }
    // R s = Qᵀ x
    let mut s: Vec<T> = q.iter().map(|qk| dot(qk, x)).collect();
    for k in (0..p).rev() {
        let mut acc = s[k];
        for j in k + 1..p {
            acc = acc - r[k][j] * s[j];
        }
        s[k] = acc / r[k][k];
    }
    Some(s)
}

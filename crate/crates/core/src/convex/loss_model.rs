use std::collections::BTreeMap;

use crate::prefcore::{logistic, margin_loss, PreferenceDataset};
use crate::scalar::Scalar;
use crate::vector::{axpy, dot, norm};

/// Comparisons of the same candidate pair collapsed into one term:
/// `wins · ℓ(u, 1) + losses · ℓ(u, 0)` at `u = ⟨θ, z⟩`.
#[derive(Debug, Clone)]
struct PairTerm<T: Scalar> {
    z: Vec<T>,
    wins: T,
    losses: T,
}

/// The log-loss of a dataset with repeated pairs aggregated, so solver cost
/// depends on the number of distinct pairs rather than on `t`.
#[derive(Debug, Clone)]
pub(crate) struct LossModel<T: Scalar> {
    dim: usize,
    terms: Vec<PairTerm<T>>,
}

impl<T: Scalar> LossModel<T> {
    pub(crate) fn new(data: &PreferenceDataset<T>) -> Self {
        let mut buckets: BTreeMap<(usize, usize), Vec<PairTerm<T>>> = BTreeMap::new();
        for t in data.tuples() {
            let flipped = t.first() > t.second();
            let key = if flipped { (t.second(), t.first()) } else { (t.first(), t.second()) };
            let z: Vec<T> = if flipped { t.z().iter().map(|&v| -v).collect() } else { t.z().to_vec() };
            // r = 1 in the canonical orientation
            let win = t.first_preferred() != flipped;
            let bucket = buckets.entry(key).or_default();
            let term = match bucket.iter_mut().position(|p| p.z == z) {
                Some(i) => &mut bucket[i],
                None => {
                    bucket.push(PairTerm { z, wins: T::zero(), losses: T::zero() });
                    bucket.last_mut().expect("just pushed")
                }
            };
            if win {
                term.wins = term.wins + T::one();
            } else {
                term.losses = term.losses + T::one();
            }
        }
        Self { dim: data.dimension(), terms: buckets.into_values().flatten().collect() }
    }

    pub(crate) fn value(&self, theta: &[T]) -> T {
        self.terms.iter().fold(T::zero(), |acc, p| {
            let u = dot(theta, &p.z);
            acc + term_value(p, u)
        })
    }

    pub(crate) fn value_grad(&self, theta: &[T]) -> (T, Vec<T>) {
        let mut grad = vec![T::zero(); self.dim];
        let mut value = T::zero();
        for p in &self.terms {
            let u = dot(theta, &p.z);
            value = value + term_value(p, u);
            let w = (p.wins + p.losses) * logistic(u) - p.wins;
            axpy(w, &p.z, &mut grad);
        }
        (value, grad)
    }

    /// Upper bound on the Lipschitz constant of the gradient.
    pub(crate) fn lipschitz(&self) -> T {
        self.terms.iter().fold(T::zero(), |acc, p| {
            let n = norm(&p.z);
            acc + T::lit(0.25) * (p.wins + p.losses) * n * n
        })
    }

    /// Unit normals `a` of the consistent halfspaces `⟨θ, a⟩ ≥ 0`, one per
    /// distinct constraint. Zero differences impose nothing and are skipped.
    pub(crate) fn halfspace_normals(&self) -> Vec<Vec<T>> {
        let mut normals = Vec::new();
        for p in &self.terms {
            let n = norm(&p.z);
            if n <= T::zero() {
                continue;
            }
            let unit: Vec<T> = p.z.iter().map(|&v| v / n).collect();
            if p.wins > T::zero() {
                normals.push(unit.clone());
            }
            if p.losses > T::zero() {
                normals.push(unit.iter().map(|&v| -v).collect());
            }
        }
        normals
    }
}

fn term_value<T: Scalar>(p: &PairTerm<T>, u: T) -> T {
    let mut v = T::zero();
    if p.wins > T::zero() {
        v = v + p.wins * margin_loss(u, true);
    }
    if p.losses > T::zero() {
        v = v + p.losses * margin_loss(u, false);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prefcore::{loss_gradient, total_loss, PreferenceTuple};

    #[test]
    fn aggregation_matches_direct_sum() {
        let mut data = PreferenceDataset::new(2);
        let pts = [[0.1, 0.2], [-0.3, 0.05], [0.2, -0.25]];
        let diff = |a: usize, b: usize| vec![pts[a][0] - pts[b][0], pts[a][1] - pts[b][1]];
        for &(a, b, r) in &[(0, 1, 1), (1, 0, 1), (0, 1, 0), (2, 1, 1), (1, 2, 1), (0, 2, 0)] {
            data.push(PreferenceTuple::from_parts(a, b, r, diff(a, b)).unwrap()).unwrap();
        }
        let model = LossModel::new(&data);
        assert_eq!(model.terms.len(), 3);
        for theta in [[0.0f64, 0.0], [2.0, -1.0], [-2.5, 1.4]] {
            let (v, g) = model.value_grad(&theta);
            assert!((v - total_loss(&theta, &data).unwrap()).abs() < 1e-12);
            let direct = loss_gradient(&theta, &data).unwrap();
            assert!((g[0] - direct[0]).abs() < 1e-12 && (g[1] - direct[1]).abs() < 1e-12);
        }
        // pair (0,1) was labelled both ways: two opposite normals
        assert_eq!(model.halfspace_normals().len(), 5);
    }
}

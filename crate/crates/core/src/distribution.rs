//! Exact discrete probability primitives: categorical distributions over a
//! question's answer options, entropy in nats, and equal-weight mixtures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Probability;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("distribution has no outcomes")]
    Empty,
    #[error("probability {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, not 1")]
    NotNormalized { sum: f64 },
    #[error("weights sum to zero or contain a negative or non-finite value")]
    DegenerateWeights,
    #[error("cannot mix an empty list of distributions")]
    EmptyMixture,
    #[error("distribution lengths differ: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Probabilities aligned with a question's answer options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>")]
#[serde(bound(serialize = "T: Probability + Serialize", deserialize = "T: Probability + Deserialize<'de>"))]
pub struct CategoricalDistribution<T: Probability> {
    probs: Vec<T>,
}

impl<T: Probability> CategoricalDistribution<T> {
    /// Validates that every entry is in `[0, 1]` and the total is 1 within
    /// [`Probability::sum_tolerance`].
    pub fn new(probs: Vec<T>) -> Result<Self, DistributionError> {
        if probs.is_empty() {
            return Err(DistributionError::Empty);
        }
        for (index, &p) in probs.iter().enumerate() {
            if !(p >= T::zero() && p <= T::one()) {
                return Err(DistributionError::OutOfRange {
                    index,
                    value: p.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        let sum: T = probs.iter().copied().sum();
        if (sum - T::one()).abs() > T::sum_tolerance(probs.len()) {
            return Err(DistributionError::NotNormalized {
                sum: sum.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self { probs })
    }

    /// Renormalizes nonnegative weights. Backends route every raw score
    /// through here before handing a distribution out.
    pub fn from_weights(weights: Vec<T>) -> Result<Self, DistributionError> {
        if weights.is_empty() {
            return Err(DistributionError::Empty);
        }
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(DistributionError::DegenerateWeights);
        }
        let total: T = weights.iter().copied().sum();
        if total <= T::zero() {
            return Err(DistributionError::DegenerateWeights);
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(len: usize) -> Result<Self, DistributionError> {
        if len == 0 {
            return Err(DistributionError::Empty);
        }
        let p = T::one() / T::from_usize(len).unwrap();
        Ok(Self { probs: vec![p; len] })
    }

    /// All mass on `index`.
    pub fn point_mass(len: usize, index: usize) -> Result<Self, DistributionError> {
        if index >= len {
            return Err(DistributionError::Empty);
        }
        let mut probs = vec![T::zero(); len];
        probs[index] = T::one();
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<T> {
        self.probs.get(index).copied()
    }

    pub fn into_vec(self) -> Vec<T> {
        self.probs
    }
}

impl<T: Probability> TryFrom<Vec<T>> for CategoricalDistribution<T> {
    type Error = DistributionError;

    fn try_from(value: Vec<T>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl<T: Probability> From<CategoricalDistribution<T>> for Vec<T> {
    fn from(value: CategoricalDistribution<T>) -> Self {
        value.probs
    }
}

/// `-Σ p ln p` with `0 ln 0 = 0`.
pub fn entropy<T: Probability>(dist: &CategoricalDistribution<T>) -> T {
    entropy_of(dist.probs())
}

/// Entropy of a raw probability slice. Callers are responsible for the
/// slice being a distribution.
pub fn entropy_of<T: Probability>(probs: &[T]) -> T {
    let h = probs
        .iter()
        .filter(|&&p| p > T::zero())
        .fold(T::zero(), |acc, &p| acc - p * p.ln());
    // Rounding can leave a tiny negative value for near point masses.
    h.max(T::zero())
}

/// Elementwise arithmetic mean of equally weighted distributions.
pub fn mix<T: Probability>(
    dists: &[CategoricalDistribution<T>],
) -> Result<CategoricalDistribution<T>, DistributionError> {
    let first = dists.first().ok_or(DistributionError::EmptyMixture)?;
    let len = first.len();
    let mut acc = vec![T::zero(); len];
    for d in dists {
        if d.len() != len {
            return Err(DistributionError::LengthMismatch {
                expected: len,
                got: d.len(),
            });
        }
        for (a, &p) in acc.iter_mut().zip(d.probs()) {
            *a = *a + p;
        }
    }
    let n = T::from_usize(dists.len()).unwrap();
    for a in acc.iter_mut() {
        *a = (*a / n).min(T::one());
    }
    CategoricalDistribution::new(acc)
}

/// Weighted mixture; `weights` must be nonnegative and sum to one.
pub fn mix_weighted<T: Probability>(
    dists: &[CategoricalDistribution<T>],
    weights: &[T],
) -> Result<CategoricalDistribution<T>, DistributionError> {
    let first = dists.first().ok_or(DistributionError::EmptyMixture)?;
    if weights.len() != dists.len() {
        return Err(DistributionError::LengthMismatch {
            expected: dists.len(),
            got: weights.len(),
        });
    }
    let len = first.len();
    let mut acc = vec![T::zero(); len];
    for (d, &w) in dists.iter().zip(weights) {
        if d.len() != len {
            return Err(DistributionError::LengthMismatch {
                expected: len,
                got: d.len(),
            });
        }
        for (a, &p) in acc.iter_mut().zip(d.probs()) {
            *a = *a + w * p;
        }
    }
    CategoricalDistribution::from_weights(acc)
}

/// Mutual information between the hypothesis and the answer when each
/// hypothesis has the given answer distribution and equal weight:
/// `H[mean row] - mean H[row]`.
pub fn information_gain<T: Probability>(
    rows: &[CategoricalDistribution<T>],
) -> Result<T, DistributionError> {
    let marginal = entropy(&mix(rows)?);
    Ok((marginal - mean_conditional_entropy(rows)).max(T::zero()))
}

/// `mean H[row]` over equally weighted rows.
pub fn mean_conditional_entropy<T: Probability>(rows: &[CategoricalDistribution<T>]) -> T {
    if rows.is_empty() {
        return T::zero();
    }
    let total: T = rows.iter().map(entropy).sum();
    total / T::from_usize(rows.len()).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    type D = CategoricalDistribution<f64>;

    fn d(p: &[f64]) -> D {
        D::new(p.to_vec()).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&d(&[0.5, 0.5])) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(entropy(&d(&[1.0, 0.0])), 0.0);
        // -0.9 ln 0.9 - 0.1 ln 0.1, summed by hand to 7 places
        assert!((entropy(&d(&[0.9, 0.1])) - 0.325_083).abs() < 1e-6);
    }

    #[test]
    fn entropy_works_in_f32() {
        let u = CategoricalDistribution::<f32>::uniform(4).unwrap();
        assert!((entropy(&u) - 4f32.ln()).abs() < 1e-6);
    }

    #[test]
    fn rejects_invalid() {
        assert_eq!(D::new(vec![]), Err(DistributionError::Empty));
        assert!(matches!(D::new(vec![0.7, 0.7]), Err(DistributionError::NotNormalized { .. })));
        assert!(matches!(D::new(vec![1.2, -0.2]), Err(DistributionError::OutOfRange { .. })));
        assert!(matches!(D::new(vec![f64::NAN, 1.0]), Err(DistributionError::OutOfRange { .. })));
        assert!(D::new(vec![0.5, 0.5 + 5e-10]).is_ok());
        assert!(D::new(vec![0.5, 0.5 + 5e-9]).is_err());
    }

    #[test]
    fn from_weights_renormalizes() {
        let r = D::from_weights(vec![0.081, 0.009]).unwrap();
        assert!((r.probs()[0] - 0.9).abs() < 1e-12);
        assert!((r.probs()[1] - 0.1).abs() < 1e-12);
        assert_eq!(D::from_weights(vec![0.0, 0.0]), Err(DistributionError::DegenerateWeights));
    }

    #[test]
    fn mix_examples() {
        assert_eq!(mix(&[d(&[1.0, 0.0]), d(&[0.0, 1.0])]).unwrap(), d(&[0.5, 0.5]));
        assert_eq!(mix(&[d(&[0.5, 0.5])]).unwrap(), d(&[0.5, 0.5]));
        let m = mix(&[d(&[0.9, 0.1]), d(&[0.1, 0.9]), d(&[0.5, 0.5])]).unwrap();
        assert!((m.probs()[0] - 0.5).abs() < 1e-15);
        assert_eq!(mix::<f64>(&[]), Err(DistributionError::EmptyMixture));
        assert!(matches!(
            mix(&[d(&[1.0, 0.0]), d(&[0.2, 0.3, 0.5])]),
            Err(DistributionError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn information_gain_examples() {
        let sep = information_gain(&[d(&[1.0, 0.0]), d(&[0.0, 1.0])]).unwrap();
        assert!((sep - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(information_gain(&[d(&[0.5, 0.5]), d(&[0.5, 0.5])]).unwrap(), 0.0);
    }

    #[test]
    fn serde_validates() {
        let ok: D = serde_json::from_str("[0.25, 0.75]").unwrap();
        assert_eq!(ok.probs(), &[0.25, 0.75]);
        assert!(serde_json::from_str::<D>("[0.25, 0.25]").is_err());
    }
}

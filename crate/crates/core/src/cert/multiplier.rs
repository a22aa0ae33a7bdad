use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::CertError;
use crate::scalar::Scalar;

/// Nonnegative diagonal multiplier over the stacked hidden neurons
/// (layer by layer, then by index within the layer).
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalMultiplier<S: Scalar> {
    lambda: DVector<S>,
}

impl<S: Scalar> DiagonalMultiplier<S> {
    pub fn new(lambda: DVector<S>) -> Result<Self, CertError> {
        if let Some(i) = lambda.iter().position(|v| !(v.is_finite() && *v >= S::zero())) {
            return Err(CertError::Multiplier(format!("entry {i} is {} (must be finite and >= 0)", lambda[i])));
        }
        Ok(Self { lambda })
    }

    pub fn identity(n: usize) -> Self {
        Self { lambda: DVector::from_element(n, S::one()) }
    }

    pub fn lambda(&self) -> &DVector<S> {
        &self.lambda
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn to_matrix(&self) -> DMatrix<S> {
        DMatrix::from_diagonal(&self.lambda)
    }

    /// Raises every entry to at least `floor_rel * max entry` (or `floor_rel` if all are zero).
    pub fn floored(&self, floor_rel: S) -> Self {
        let top = self.lambda.iter().fold(S::zero(), |a, &b| a.max(b));
        let floor = if top > S::zero() { floor_rel * top } else { floor_rel };
        Self { lambda: self.lambda.map(|v| v.max(floor)) }
    }
}

/// Multiplier with pairwise coupling terms `lambda_ij (e_i - e_j)(e_i - e_j)'`.
///
/// Only used to reproduce the counterexamples; it does not yield valid certificates.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledMultiplier<S: Scalar> {
    pub lambda_diag: DVector<S>,
    pub lambda_pairs: BTreeMap<(usize, usize), S>,
}

impl<S: Scalar> CoupledMultiplier<S> {
    pub fn new(lambda_diag: DVector<S>, lambda_pairs: BTreeMap<(usize, usize), S>) -> Result<Self, CertError> {
        let n = lambda_diag.len();
        if lambda_diag.iter().any(|v| !(*v >= S::zero())) {
            return Err(CertError::Multiplier("diagonal coefficients must be >= 0".into()));
        }
        for (&(i, j), &v) in &lambda_pairs {
            if !(i < j && j < n) {
                return Err(CertError::Multiplier(format!("pair ({i}, {j}) needs i < j < {n}")));
            }
            if !(v >= S::zero()) {
                return Err(CertError::Multiplier(format!("pair ({i}, {j}) has negative weight")));
            }
        }
        Ok(Self { lambda_diag, lambda_pairs })
    }

    /// `(e_i - e_j)(e_i - e_j)'` in dimension `n`.
    pub fn single_pair(n: usize, i: usize, j: usize) -> Result<Self, CertError> {
        let mut pairs = BTreeMap::new();
        pairs.insert((i.min(j), i.max(j)), S::one());
        Self::new(DVector::zeros(n), pairs)
    }

    pub fn to_matrix(&self) -> DMatrix<S> {
        let mut t = DMatrix::from_diagonal(&self.lambda_diag);
        for (&(i, j), &v) in &self.lambda_pairs {
            t[(i, i)] += v;
            t[(j, j)] += v;
            t[(i, j)] -= v;
            t[(j, i)] -= v;
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_entries_are_rejected() {
        assert!(DiagonalMultiplier::new(DVector::from_vec(vec![1.0, -1e-3])).is_err());
        assert!(DiagonalMultiplier::new(DVector::from_vec(vec![1.0, f64::NAN])).is_err());
    }

    #[test]
    fn coupled_pair_matrix() {
        let t = CoupledMultiplier::<f64>::single_pair(2, 0, 1).unwrap().to_matrix();
        assert_eq!(t, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn floor_lifts_zero_entries() {
        let t = DiagonalMultiplier::new(DVector::from_vec(vec![0.0, 2.0])).unwrap().floored(1e-3);
        assert_eq!(t.lambda().as_slice(), &[2e-3, 2.0]);
    }
}

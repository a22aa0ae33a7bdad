use nalgebra::{DMatrix, SymmetricEigen};

use super::SdpError;
use crate::scalar::Scalar;

/// Target cone for [`project_psd`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    /// Positive semidefinite.
    Psd,
    /// Negative semidefinite.
    Nsd,
}

fn symmetrize<S: Scalar>(s: &DMatrix<S>) -> DMatrix<S> {
    (s + s.transpose()) * S::lit(0.5)
}

pub(crate) fn eigen<S: Scalar>(s: &DMatrix<S>) -> Result<SymmetricEigen<S, nalgebra::Dyn>, SdpError> {
    if !s.is_square() {
        return Err(SdpError::Numerical(format!("eigendecomposition of {}x{} matrix", s.nrows(), s.ncols())));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(SdpError::Numerical("non-finite entry in symmetric matrix".into()));
    }
    SymmetricEigen::try_new(symmetrize(s), S::machine_eps(), 10_000)
        .ok_or_else(|| SdpError::Numerical("symmetric eigendecomposition did not converge".into()))
}

/// Largest eigenvalue of the symmetric part of `s` (`+inf` for non-finite input).
pub fn max_eigenvalue<S: Scalar>(s: &DMatrix<S>) -> S {
    if s.nrows() == 0 {
        return S::min_value().expect("bounded float");
    }
    if s.iter().any(|v| !v.is_finite()) {
        return S::max_value().expect("bounded float");
    }
    symmetrize(s).symmetric_eigenvalues().max()
}

/// Frobenius-nearest member of the chosen cone, by clipping eigenvalues.
pub fn project_psd<S: Scalar>(s: &DMatrix<S>, cone: Cone) -> Result<DMatrix<S>, SdpError> {
    let eig = eigen(s)?;
    let clipped = eig.eigenvalues.map(|v| match cone {
        Cone::Psd => v.max(S::zero()),
        Cone::Nsd => v.min(S::zero()),
    });
    let mut scaled = eig.eigenvectors.clone();
    for (mut col, &lam) in scaled.column_iter_mut().zip(clipped.iter()) {
        col *= lam;
    }
    Ok(symmetrize(&(scaled * eig.eigenvectors.transpose())))
}

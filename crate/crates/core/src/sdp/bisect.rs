use super::SdpError;
use crate::scalar::Scalar;

/// Smallest feasible value of a monotone predicate, to within `tol`.
///
/// `feasible` must be monotone: once true it stays true for larger arguments.
/// Returns `lo` when `lo` is already feasible; otherwise the returned value is
/// feasible and lies within `tol` of the threshold. Besides the two endpoint
/// checks the predicate is called at most `ceil(log2((hi - lo) / tol))` times.
pub fn bisect_feasibility<S: Scalar>(
    mut feasible: impl FnMut(S) -> bool,
    lo: S,
    hi: S,
    tol: S,
) -> Result<S, SdpError> {
    if !(lo <= hi) || !(tol > S::zero()) {
        return Err(SdpError::Bracketing { lo: lo.to_f64_lossy(), hi: hi.to_f64_lossy() });
    }
    if feasible(lo) {
        return Ok(lo);
    }
    if !feasible(hi) {
        return Err(SdpError::Bracketing { lo: lo.to_f64_lossy(), hi: hi.to_f64_lossy() });
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > tol {
        let mid = lo + (hi - lo) * S::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

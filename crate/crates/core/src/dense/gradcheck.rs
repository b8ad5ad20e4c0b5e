use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Central-difference gradient check.
///
/// Returns the maximum over coordinates of
/// `|analytic − fd| / max(|analytic|, |fd|, 1e-8)`.
pub fn fd_gradient_check<T, F>(mut f: F, x: &[T], analytic_grad: &[T], h: T) -> Result<T>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    if analytic_grad.len() != x.len() {
        return Err(Error::dims("fd_gradient_check", x.len(), analytic_grad.len()));
    }
    if h <= T::zero() {
        return Err(Error::InvalidArgument("finite-difference step must be > 0".into()));
    }
    let floor = T::lit(1e-8);
    let two = T::lit(2.0);
    let mut probe = x.to_vec();
    let mut worst = T::zero();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective at coordinate {i} ± h"
            )));
        }
        let fd = (fp - fm) / (two * h);
        let a = analytic_grad[i];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(floor);
        worst = worst.max(rel);
    }
    Ok(worst)
}

use serde::{Deserialize, Serialize};

use super::{CandidateFit, Target};
use crate::error::check_len;
use crate::linalg::mean;
use crate::{Error, Result, Scalar};

/// Least-squares line `intercept + slope·x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit<T> {
    pub intercept: T,
    pub slope: T,
    /// Set when `x` is constant; the slope is then fixed at zero.
    pub degenerate: bool,
}

pub fn fit_linear<T: Scalar>(x: &[T], u: &[T]) -> Result<LinearFit<T>> {
    check_len(x.len(), u.len())?;
    if x.len() < 2 {
        return Err(Error::InvalidArgument("a linear fit needs at least two observations".into()));
    }
    let xm = mean(x);
    let um = mean(u);
    let (mut sxx, mut sxu) = (T::zero(), T::zero());
    for (&xi, &ui) in x.iter().zip(u) {
        let dx = xi - xm;
        sxx = sxx + dx * dx;
        sxu = sxu + dx * (ui - um);
    }
    if sxx == T::zero() {
        return Ok(LinearFit { intercept: um, slope: T::zero(), degenerate: true });
    }
    let slope = sxu / sxx;
    Ok(LinearFit { intercept: um - slope * xm, slope, degenerate: false })
}

/// Univariate linear base-learner with intercept.
///
/// Coefficients are laid out as `[intercept, slope]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearLearner<T> {
    pub column: usize,
    x_mean: T,
    sxx: T,
}

impl<T: Scalar> LinearLearner<T> {
    pub fn new(column: usize, x: &[T]) -> Self {
        let x_mean = mean(x);
        let sxx = x.iter().map(|&v| (v - x_mean) * (v - x_mean)).sum();
        Self { column, x_mean, sxx }
    }

    pub fn is_degenerate(&self) -> bool {
        self.sxx == T::zero()
    }

    pub(crate) fn fit(&self, x: &[T], target: &Target<'_, T>) -> CandidateFit<T> {
        if self.is_degenerate() {
            return CandidateFit { coefs: vec![target.mean, T::zero()], rss: target.centered_ss };
        }
        let sxu = x.iter().zip(target.values).fold(T::zero(), |acc, (&xi, &ui)| acc + (xi - self.x_mean) * ui);
        let slope = sxu / self.sxx;
        let rss = (target.centered_ss - slope * sxu).max(T::zero());
        CandidateFit { coefs: vec![target.mean - slope * self.x_mean, slope], rss }
    }

    pub(crate) fn add_prediction(&self, x: &[T], coefs: &[T], scale: T, out: &mut [T]) {
        let (a, b) = (coefs[0] * scale, coefs[1] * scale);
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = *o + a + b * xi;
        }
    }
}

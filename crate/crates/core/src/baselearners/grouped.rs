use serde::{Deserialize, Serialize};

use super::{CandidateFit, Target};
use crate::{Error, Result, Scalar};

/// Factor learner: intercept plus dummy columns, updated jointly.
///
/// The least-squares fit is the per-level mean of the target, so the
/// coefficients are stored as one effect per level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupedLearner {
    pub column: usize,
    pub levels: usize,
}

impl GroupedLearner {
    /// `x` holds level codes `0..levels`.
    pub fn new<T: Scalar>(column: usize, levels: usize, x: &[T]) -> Result<Self> {
        if levels < 2 {
            return Err(Error::InvalidArgument(format!("factor needs at least two levels, got {levels}")));
        }
        for (i, &v) in x.iter().enumerate() {
            if level_of(v, levels).is_none() {
                return Err(Error::Data(format!("row {i}: {v} is not a level code below {levels}")));
            }
        }
        Ok(Self { column, levels })
    }

    pub(crate) fn fit<T: Scalar>(&self, x: &[T], target: &Target<'_, T>) -> CandidateFit<T> {
        let mut sums = vec![T::zero(); self.levels];
        let mut counts = vec![0usize; self.levels];
        for (&xi, &ui) in x.iter().zip(target.values) {
            let g = level_of(xi, self.levels).unwrap_or(0);
            sums[g] = sums[g] + ui;
            counts[g] += 1;
        }
        let mut explained = T::zero();
        let coefs = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| {
                if c == 0 {
                    return T::zero();
                }
                let m = s / T::from_usize_lossy(c);
                explained = explained + T::from_usize_lossy(c) * (m - target.mean) * (m - target.mean);
                m
            })
            .collect();
        CandidateFit { coefs, rss: (target.centered_ss - explained).max(T::zero()) }
    }

    pub(crate) fn add_prediction<T: Scalar>(&self, x: &[T], coefs: &[T], scale: T, out: &mut [T]) {
        for (o, &xi) in out.iter_mut().zip(x) {
            if let Some(g) = level_of(xi, self.levels) {
                *o = *o + scale * coefs[g];
            }
        }
    }
}

fn level_of<T: Scalar>(v: T, levels: usize) -> Option<usize> {
    let f = v.as_f64();
    (f >= 0.0 && f.fract() == 0.0 && (f as usize) < levels).then_some(f as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_level_means() {
        let x = [0.0_f64, 1.0, 2.0, 1.0, 0.0, 2.0];
        let u = [1.0, 4.0, -1.0, 6.0, 3.0, -3.0];
        let learner = GroupedLearner::new(0, 3, &x).unwrap();
        let fit = learner.fit(&x, &Target::new(&u));
        assert_eq!(fit.coefs, vec![2.0, 5.0, -2.0]);
        let mut pred = vec![0.0; 6];
        learner.add_prediction(&x, &fit.coefs, 1.0, &mut pred);
        let direct = super::super::rss(&pred, &u).unwrap();
        assert!((fit.rss - direct).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_codes() {
        assert!(GroupedLearner::new(0, 2, &[0.0, 1.0, 2.0]).is_err());
        assert!(GroupedLearner::new(0, 3, &[0.5]).is_err());
        assert!(GroupedLearner::new(0, 1, &[0.0_f64]).is_err());
    }
}

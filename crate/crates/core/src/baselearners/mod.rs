//! Base-learners fitted to negative-gradient vectors.

mod grouped;
mod linear;
mod pspline;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::check_len;
use crate::linalg::mean;
use crate::{Error, Result, Scalar};

pub use grouped::GroupedLearner;
pub use linear::{fit_linear, LinearFit, LinearLearner};
pub use pspline::{
    basis_row, build_pspline, calibrate_lambda, difference_matrix, equidistant_knots, fit_pspline, penalty_matrix,
    BandedBasis, PSplineLearner, PSplineOptions,
};

/// Residual sum of squares `Σ (u − prediction)²`.
pub fn rss<T: Scalar>(prediction: &[T], u: &[T]) -> Result<T> {
    check_len(u.len(), prediction.len())?;
    Ok(prediction.iter().zip(u).fold(T::zero(), |acc, (&p, &v)| acc + (v - p) * (v - p)))
}

/// A gradient vector with the summaries shared by every candidate fit.
#[derive(Clone, Copy, Debug)]
pub struct Target<'a, T> {
    pub values: &'a [T],
    pub mean: T,
    pub centered_ss: T,
}

impl<'a, T: Scalar> Target<'a, T> {
    pub fn new(values: &'a [T]) -> Self {
        let m = mean(values);
        let centered_ss = values.iter().map(|&v| (v - m) * (v - m)).sum();
        Self { values, mean: m, centered_ss }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateFit<T> {
    pub coefs: Vec<T>,
    pub rss: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum LearnerKind {
    Linear,
    #[serde(rename = "pspline")]
    PSpline(PSplineOptions),
    Grouped {
        levels: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub column: usize,
    pub kind: LearnerKind,
}

/// Candidate learners for one distribution parameter, ordered by column.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BaseLearnerSet {
    learners: Vec<LearnerSpec>,
}

impl BaseLearnerSet {
    pub fn new(mut learners: Vec<LearnerSpec>) -> Result<Self> {
        learners.sort_by_key(|l| l.column);
        if let Some(w) = learners.windows(2).find(|w| w[0].column == w[1].column) {
            return Err(Error::InvalidArgument(format!("column {} has two learners", w[0].column)));
        }
        Ok(Self { learners })
    }

    pub fn uniform(p: usize, kind: LearnerKind) -> Self {
        Self { learners: (0..p).map(|column| LearnerSpec { column, kind }).collect() }
    }

    pub fn linear(p: usize) -> Self {
        Self::uniform(p, LearnerKind::Linear)
    }

    pub fn pspline(p: usize, options: PSplineOptions) -> Self {
        Self::uniform(p, LearnerKind::PSpline(options))
    }

    pub fn iter(&self) -> impl Iterator<Item = &LearnerSpec> {
        self.learners.iter()
    }

    pub fn len(&self) -> usize {
        self.learners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.learners.is_empty()
    }

    pub fn columns(&self) -> BTreeSet<usize> {
        self.learners.iter().map(|l| l.column).collect()
    }

    pub fn restrict(&self, keep: &BTreeSet<usize>) -> Self {
        Self { learners: self.learners.iter().filter(|l| keep.contains(&l.column)).copied().collect() }
    }

    pub fn push(&mut self, spec: LearnerSpec) -> Result<()> {
        let mut all = std::mem::take(&mut self.learners);
        all.push(spec);
        *self = Self::new(all)?;
        Ok(())
    }
}

/// A base-learner prepared on training data.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Learner<T> {
    Linear(LinearLearner<T>),
    #[serde(rename = "pspline")]
    PSpline(PSplineLearner<T>),
    Grouped(GroupedLearner),
}

impl<T: Scalar> Learner<T> {
    pub fn prepare(spec: &LearnerSpec, x: &[T]) -> Result<Self> {
        Ok(match spec.kind {
            LearnerKind::Linear => Learner::Linear(LinearLearner::new(spec.column, x)),
            LearnerKind::PSpline(o) => {
                let mut l = build_pspline(x, o.n_knots, o.degree, o.diff_order)?.with_column(spec.column);
                l.calibrate_lambda(T::of(o.df))?;
                Learner::PSpline(l)
            }
            LearnerKind::Grouped { levels } => Learner::Grouped(GroupedLearner::new(spec.column, levels, x)?),
        })
    }

    pub fn column(&self) -> usize {
        match self {
            Learner::Linear(l) => l.column,
            Learner::PSpline(l) => l.column,
            Learner::Grouped(l) => l.column,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Learner::Linear(_) => "linear",
            Learner::PSpline(_) => "pspline",
            Learner::Grouped(_) => "grouped",
        }
    }

    pub fn n_coefs(&self) -> usize {
        match self {
            Learner::Linear(_) => 2,
            Learner::PSpline(l) => l.n_basis(),
            Learner::Grouped(l) => l.levels,
        }
    }

    /// Re-evaluates cached training quantities after deserialization.
    pub fn bind(&mut self, x: &[T]) -> Result<()> {
        if let Learner::PSpline(l) = self {
            l.bind(x)?;
        }
        Ok(())
    }

    pub fn fit(&self, x: &[T], target: &Target<'_, T>) -> Result<CandidateFit<T>> {
        match self {
            Learner::Linear(l) => Ok(l.fit(x, target)),
            Learner::PSpline(l) => l.fit(target),
            Learner::Grouped(l) => Ok(l.fit(x, target)),
        }
    }

    /// `out += scale · f(x)` on the data the learner was prepared on.
    pub fn add_fitted(&self, x: &[T], coefs: &[T], scale: T, out: &mut [T]) {
        match self {
            Learner::PSpline(l) if l.is_bound() => l.add_fitted(coefs, scale, out),
            _ => self.add_prediction(x, coefs, scale, out),
        }
    }

    /// `out += scale · f(x)` on arbitrary covariate values.
    pub fn add_prediction(&self, x: &[T], coefs: &[T], scale: T, out: &mut [T]) {
        match self {
            Learner::Linear(l) => l.add_prediction(x, coefs, scale, out),
            Learner::PSpline(l) => l.add_prediction(x, coefs, scale, out),
            Learner::Grouped(l) => l.add_prediction(x, coefs, scale, out),
        }
    }

    /// Scalar path summary: the slope for linear learners, the coefficient norm otherwise.
    pub fn summary(&self, coefs: &[T]) -> T {
        match self {
            Learner::Linear(_) => coefs[1],
            _ => coefs.iter().map(|&c| c * c).sum::<T>().sqrt(),
        }
    }
}

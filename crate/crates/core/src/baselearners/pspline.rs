//! Penalized B-spline base-learner.
//!
//! The basis lives on an equidistant knot grid over the observed covariate
//! range, extended by `degree` knots on each side. Each row of the basis has at
//! most `degree + 1` nonzero entries, stored contiguously.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{CandidateFit, Target};
use crate::error::check_len;
use crate::linalg::Cholesky;
use crate::{Error, Result, Scalar};

const LOG_LAMBDA_RANGE: (f64, f64) = (-20.0, 20.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PSplineOptions {
    /// Number of interior knots.
    pub n_knots: usize,
    pub degree: usize,
    pub diff_order: usize,
    /// Target trace of the smoother matrix.
    pub df: f64,
}

impl Default for PSplineOptions {
    fn default() -> Self {
        Self { n_knots: 20, degree: 3, diff_order: 2, df: 4.0 }
    }
}

/// Knot vector with `n_interior` equidistant interior knots on `[lower, upper]`.
pub fn equidistant_knots<T: Scalar>(lower: T, upper: T, n_interior: usize, degree: usize) -> Vec<T> {
    let h = (upper - lower) / T::from_usize_lossy(n_interior + 1);
    let total = n_interior + 2 * degree + 2;
    (0..total).map(|t| lower + (T::from_usize_lossy(t) - T::from_usize_lossy(degree)) * h).collect()
}

/// Nonzero B-spline basis values at `x` (Cox–de Boor triangle).
///
/// Returns the index of the first nonzero basis function and the `degree + 1`
/// values starting there. `x` is clamped to the valid range of the knot vector.
pub fn basis_row<T: Scalar>(x: T, knots: &[T], degree: usize) -> (usize, Vec<T>) {
    let q = knots.len() - degree - 1;
    let x = x.max(knots[degree]).min(knots[q]);
    let span = knots[..=q].partition_point(|&k| k <= x).saturating_sub(1).clamp(degree, q - 1);
    let mut values = vec![T::zero(); degree + 1];
    let mut left = vec![T::zero(); degree + 1];
    let mut right = vec![T::zero(); degree + 1];
    values[0] = T::one();
    for j in 1..=degree {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = T::zero();
        for r in 0..j {
            let temp = values[r] / (right[r + 1] + left[j - r]);
            values[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        values[j] = saved;
    }
    (span - degree, values)
}

/// `order`-th difference operator, `(q - order) × q`.
pub fn difference_matrix<T: Scalar>(q: usize, order: usize) -> Array2<T> {
    let mut d = Array2::<T>::eye(q);
    for _ in 0..order {
        let rows = d.nrows();
        let next = Array2::from_shape_fn((rows - 1, q), |(i, j)| d[[i + 1, j]] - d[[i, j]]);
        d = next;
    }
    d
}

pub fn penalty_matrix<T: Scalar>(q: usize, order: usize) -> Array2<T> {
    let d = difference_matrix::<T>(q, order);
    d.t().dot(&d)
}

/// Basis matrix stored as one band of `degree + 1` values per row.
#[derive(Clone, Debug)]
pub struct BandedBasis<T> {
    width: usize,
    q: usize,
    starts: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> BandedBasis<T> {
    pub fn new(x: &[T], knots: &[T], degree: usize) -> Self {
        let q = knots.len() - degree - 1;
        let width = degree + 1;
        let mut starts = Vec::with_capacity(x.len());
        let mut values = Vec::with_capacity(x.len() * width);
        for &xi in x {
            let (s, v) = basis_row(xi, knots, degree);
            starts.push(s);
            values.extend(v);
        }
        Self { width, q, starts, values }
    }

    pub fn n_rows(&self) -> usize {
        self.starts.len()
    }

    pub fn n_basis(&self) -> usize {
        self.q
    }

    pub fn row(&self, i: usize) -> (usize, &[T]) {
        (self.starts[i], &self.values[i * self.width..(i + 1) * self.width])
    }

    pub fn to_dense(&self) -> Array2<T> {
        let mut b = Array2::zeros((self.n_rows(), self.q));
        for i in 0..self.n_rows() {
            let (s, v) = self.row(i);
            for (k, &val) in v.iter().enumerate() {
                b[[i, s + k]] = val;
            }
        }
        b
    }

    /// `Bᵀ u`
    pub fn transpose_mul(&self, u: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.q];
        for (i, &ui) in u.iter().enumerate() {
            let (s, v) = self.row(i);
            for (k, &val) in v.iter().enumerate() {
                out[s + k] = out[s + k] + val * ui;
            }
        }
        out
    }

    /// `out += scale · B γ`
    pub fn mul_add(&self, coefs: &[T], scale: T, out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            let (s, v) = self.row(i);
            let f = v.iter().zip(&coefs[s..]).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            *o = *o + scale * f;
        }
    }

    /// `Bᵀ B`
    pub fn gram(&self) -> Array2<T> {
        let mut g = Array2::zeros((self.q, self.q));
        for i in 0..self.n_rows() {
            let (s, v) = self.row(i);
            for (a, &va) in v.iter().enumerate() {
                for (b, &vb) in v.iter().enumerate() {
                    g[[s + a, s + b]] = g[[s + a, s + b]] + va * vb;
                }
            }
        }
        g
    }
}

#[derive(Clone, Debug)]
struct Cache<T> {
    basis: BandedBasis<T>,
    gram: Array2<T>,
    penalty: Array2<T>,
    factor: Option<Cholesky<T>>,
}

/// P-spline base-learner. The smoothing parameter is fixed once calibrated.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct PSplineLearner<T> {
    pub column: usize,
    knots: Vec<T>,
    degree: usize,
    diff_order: usize,
    lambda: T,
    lower: T,
    upper: T,
    #[serde(skip)]
    cache: Option<Cache<T>>,
}

/// Builds an unpenalized (`λ = 0`) P-spline learner on `x`.
pub fn build_pspline<T: Scalar>(
    x: &[T],
    n_knots: usize,
    degree: usize,
    diff_order: usize,
) -> Result<PSplineLearner<T>> {
    if n_knots < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 interior knots, got {n_knots}")));
    }
    if degree < 1 {
        return Err(Error::InvalidArgument("spline degree must be at least 1".into()));
    }
    let q = n_knots + degree + 1;
    if diff_order < 1 || diff_order >= q {
        return Err(Error::InvalidArgument(format!("difference order {diff_order} must lie in 1..{q}")));
    }
    if x.is_empty() {
        return Err(Error::Degenerate("empty covariate".into()));
    }
    let lower = x.iter().copied().fold(T::infinity(), T::min);
    let upper = x.iter().copied().fold(T::neg_infinity(), T::max);
    if !(upper > lower) || !lower.is_finite() || !upper.is_finite() {
        return Err(Error::Degenerate("P-spline covariate is constant or non-finite".into()));
    }
    let mut learner = PSplineLearner {
        column: 0,
        knots: equidistant_knots(lower, upper, n_knots, degree),
        degree,
        diff_order,
        lambda: T::zero(),
        lower,
        upper,
        cache: None,
    };
    learner.bind(x)?;
    Ok(learner)
}

/// Sets λ so that the smoother trace equals `df_target`; see [`PSplineLearner::calibrate_lambda`].
pub fn calibrate_lambda<T: Scalar>(learner: &mut PSplineLearner<T>, df_target: T) -> Result<T> {
    learner.calibrate_lambda(df_target)
}

/// Solves `(BᵀB + λDᵀD) γ = Bᵀu`.
pub fn fit_pspline<T: Scalar>(learner: &PSplineLearner<T>, u: &[T]) -> Result<Vec<T>> {
    learner.fit_coefficients(u)
}

impl<T: Scalar> PSplineLearner<T> {
    pub fn with_column(mut self, column: usize) -> Self {
        self.column = column;
        self
    }

    pub fn n_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn diff_order(&self) -> usize {
        self.diff_order
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn range(&self) -> (T, T) {
        (self.lower, self.upper)
    }

    pub fn basis(&self) -> Option<&BandedBasis<T>> {
        self.cache.as_ref().map(|c| &c.basis)
    }

    pub fn is_bound(&self) -> bool {
        self.cache.is_some()
    }

    /// Evaluates the basis on `x` and caches the normal-equation pieces,
    /// keeping knots and λ. Needed after deserialization before fitting.
    pub fn bind(&mut self, x: &[T]) -> Result<()> {
        let basis = BandedBasis::new(x, &self.knots, self.degree);
        let gram = basis.gram();
        let penalty = penalty_matrix(self.n_basis(), self.diff_order);
        let factor = Cholesky::new(&(&gram + &(&penalty * self.lambda))).ok();
        self.cache = Some(Cache { basis, gram, penalty, factor });
        Ok(())
    }

    fn cache(&self) -> Result<&Cache<T>> {
        self.cache.as_ref().ok_or_else(|| Error::InvalidArgument("P-spline learner is not bound to data".into()))
    }

    pub fn set_lambda(&mut self, lambda: T) -> Result<()> {
        if !(lambda >= T::zero()) {
            return Err(Error::InvalidArgument(format!("smoothing parameter must be nonnegative, got {lambda}")));
        }
        self.lambda = lambda;
        let cache = self
            .cache
            .as_mut()
            .ok_or_else(|| Error::InvalidArgument("P-spline learner is not bound to data".into()))?;
        cache.factor = Cholesky::new(&(&cache.gram + &(&cache.penalty * lambda))).ok();
        Ok(())
    }

    /// Trace of the hat matrix `B (BᵀB + λDᵀD)⁻¹ Bᵀ`.
    pub fn degrees_of_freedom(&self, lambda: T) -> Result<T> {
        let cache = self.cache()?;
        let chol = Cholesky::new(&(&cache.gram + &(&cache.penalty * lambda)))?;
        let q = self.n_basis();
        let mut trace = T::zero();
        for j in 0..q {
            let col: Vec<T> = cache.gram.column(j).to_vec();
            trace = trace + chol.solve(&col)[j];
        }
        Ok(trace)
    }

    /// Bisection on log λ over `[-20, 20]` until the trace is within 1e-4 of the target.
    pub fn calibrate_lambda(&mut self, df_target: T) -> Result<T> {
        let q = self.n_basis();
        if !(df_target > T::one() && df_target < T::from_usize_lossy(q)) {
            return Err(Error::InvalidArgument(format!("df target {df_target} must lie in (1, {q})")));
        }
        let (mut lo, mut hi) = (T::of(LOG_LAMBDA_RANGE.0), T::of(LOG_LAMBDA_RANGE.1));
        let df_lo = self.degrees_of_freedom(lo.exp())?;
        let df_hi = self.degrees_of_freedom(hi.exp())?;
        if df_target > df_lo || df_target < df_hi {
            return Err(Error::InvalidArgument(format!(
                "df target {df_target} unreachable; achievable range is [{df_hi}, {df_lo}]"
            )));
        }
        let tol = T::of(1e-4);
        let mut mid = T::of(0.5) * (lo + hi);
        for _ in 0..200 {
            mid = T::of(0.5) * (lo + hi);
            let df = self.degrees_of_freedom(mid.exp())?;
            if (df - df_target).abs() <= tol {
                break;
            }
            // trace decreases in λ
            if df > df_target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let lambda = mid.exp();
        self.set_lambda(lambda)?;
        Ok(lambda)
    }

    pub fn fit_coefficients(&self, u: &[T]) -> Result<Vec<T>> {
        let cache = self.cache()?;
        check_len(cache.basis.n_rows(), u.len())?;
        let factor = cache
            .factor
            .as_ref()
            .ok_or_else(|| Error::NotPositiveDefinite("penalized normal equations are singular".into()))?;
        Ok(factor.solve(&cache.basis.transpose_mul(u)))
    }

    pub(crate) fn fit(&self, target: &Target<'_, T>) -> Result<CandidateFit<T>> {
        let coefs = self.fit_coefficients(target.values)?;
        let basis = &self.cache()?.basis;
        let mut fitted = vec![T::zero(); target.values.len()];
        basis.mul_add(&coefs, T::one(), &mut fitted);
        let rss = fitted.iter().zip(target.values).fold(T::zero(), |acc, (&f, &u)| acc + (u - f) * (u - f));
        Ok(CandidateFit { coefs, rss })
    }

    /// Adds `scale · Bγ` on the bound data.
    pub(crate) fn add_fitted(&self, coefs: &[T], scale: T, out: &mut [T]) {
        let basis = &self.cache.as_ref().expect("bound P-spline").basis;
        basis.mul_add(coefs, scale, out);
    }

    /// Evaluates the spline on arbitrary `x`, clamped to the training range.
    pub fn add_prediction(&self, x: &[T], coefs: &[T], scale: T, out: &mut [T]) {
        for (o, &xi) in out.iter_mut().zip(x) {
            let (s, v) = basis_row(xi, &self.knots, self.degree);
            let f = v.iter().zip(&coefs[s..]).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            *o = *o + scale * f;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn linear_spline_is_hat_at_knot() {
        // degree 1, knots at 0, 0.5, 1 (two segments) plus one extension each side
        let knots = [-0.5, 0.0, 0.5, 1.0, 1.5];
        let (start, v) = basis_row(0.5_f64, &knots, 1);
        let mut row = vec![0.0; 3];
        for (k, val) in v.iter().enumerate() {
            row[start + k] = *val;
        }
        assert_eq!(row, vec![0.0, 1.0, 0.0]);
        let (start, v) = basis_row(0.25_f64, &knots, 1);
        assert_eq!(start, 0);
        assert!((v[0] - 0.5).abs() < 1e-15 && (v[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn partition_of_unity() {
        let x: Vec<f64> = (0..97).map(|i| -3.0 + 0.071 * i as f64).collect();
        let learner = build_pspline(&x, 20, 3, 2).unwrap();
        assert_eq!(learner.n_basis(), 24);
        let b = learner.basis().unwrap();
        for i in 0..b.n_rows() {
            let s: f64 = b.row(i).1.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn second_difference_matrix() {
        let d = difference_matrix::<f64>(4, 2);
        assert_eq!(d.dim(), (2, 4));
        assert_eq!(d.row(0).to_vec(), vec![1.0, -2.0, 1.0, 0.0]);
        assert_eq!(d.row(1).to_vec(), vec![0.0, 1.0, -2.0, 1.0]);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(matches!(build_pspline(&[1.0_f64; 10], 20, 3, 2), Err(Error::Degenerate(_))));
        assert!(build_pspline(&grid(10), 3, 3, 2).is_err());
        assert!(build_pspline(&grid(10), 4, 0, 2).is_err());
        assert!(build_pspline(&grid(10), 4, 1, 6).is_err());
    }

    #[test]
    fn unpenalized_df_is_rank() {
        let x = grid(200);
        let learner = build_pspline(&x, 8, 3, 2).unwrap();
        let df = learner.degrees_of_freedom(0.0).unwrap();
        assert!((df - learner.n_basis() as f64).abs() < 1e-8);
    }

    #[test]
    fn heavy_penalty_leaves_null_space() {
        let x = grid(300);
        let learner = build_pspline(&x, 10, 3, 2).unwrap();
        let df = learner.degrees_of_freedom(1e8).unwrap();
        assert!((df - 2.0).abs() < 0.01, "{df}");
    }

    #[test]
    fn df_decreases_in_lambda() {
        let x = grid(150);
        let learner = build_pspline(&x, 12, 3, 2).unwrap();
        let mut prev = f64::INFINITY;
        for e in -8..=8 {
            let df = learner.degrees_of_freedom(10f64.powi(e)).unwrap();
            assert!(df < prev);
            prev = df;
        }
    }

    #[test]
    fn calibration_errors() {
        let x = grid(100);
        let mut learner = build_pspline(&x, 6, 3, 2).unwrap();
        assert!(learner.calibrate_lambda(1.0).is_err());
        assert!(learner.calibrate_lambda(10.0).is_err());
        // the penalty null space keeps df above 2
        assert!(learner.calibrate_lambda(1.5).is_err());
    }

    #[test]
    fn fit_examples() {
        let x = grid(60);
        let mut learner = build_pspline(&x, 10, 3, 2).unwrap();
        learner.set_lambda(1.0).unwrap();
        assert!(fit_pspline(&learner, &vec![0.0; 60]).unwrap().iter().all(|&g| g == 0.0));

        let u: Vec<f64> = x.iter().map(|v| (7.0 * v).sin() + 0.3 * v).collect();
        let gamma = fit_pspline(&learner, &u).unwrap();
        let b = learner.basis().unwrap().to_dense();
        let p = penalty_matrix::<f64>(learner.n_basis(), 2);
        let a = b.t().dot(&b) + &p * 1.0;
        let g = ndarray::Array1::from(gamma);
        let rhs = b.t().dot(&ndarray::Array1::from(u));
        let resid = (a.dot(&g) - &rhs).mapv(f64::abs).fold(0.0_f64, |m, &v| m.max(v));
        let scale = rhs.mapv(|v| v * v).sum().sqrt();
        assert!(resid <= 1e-10 * scale);
    }

    #[test]
    fn interpolates_when_square() {
        // degree 1 with every point on a knot: B is the identity
        let xs: Vec<f64> = vec![0.0, 1.2, 2.4, 3.6, 4.8, 6.0];
        let learner = build_pspline(&xs, 4, 1, 1).unwrap();
        assert_eq!(learner.n_basis(), 6);
        let u = [1.0, -2.0, 0.5, 3.0, 2.0, -1.0];
        let gamma = fit_pspline(&learner, &u).unwrap();
        let mut fitted = vec![0.0; 6];
        learner.add_fitted(&gamma, 1.0, &mut fitted);
        for (f, t) in fitted.iter().zip(&u) {
            assert!((f - t).abs() < 1e-10);
        }
    }

    #[test]
    fn affine_target_is_fitted_exactly() {
        let x: Vec<f64> = (0..80).map(|i| (i as f64 * 0.37).sin() * 2.0).collect();
        let mut learner = build_pspline(&x, 15, 3, 2).unwrap();
        let u: Vec<f64> = x.iter().map(|v| 1.5 - 0.7 * v).collect();
        for lambda in [0.1, 10.0, 1e4] {
            learner.set_lambda(lambda).unwrap();
            let fit = learner.fit(&Target::new(&u)).unwrap();
            let ss: f64 = u.iter().map(|v| v * v).sum();
            assert!(fit.rss <= 1e-8 * ss, "lambda {lambda}: rss {}", fit.rss);
        }
    }

    #[test]
    fn prediction_matches_fitted_on_training_points() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sqrt()).collect();
        let mut learner = build_pspline(&x, 8, 3, 2).unwrap();
        learner.calibrate_lambda(4.0).unwrap();
        let u: Vec<f64> = x.iter().map(|v| v.cos()).collect();
        let gamma = fit_pspline(&learner, &u).unwrap();
        let mut a = vec![0.0; 50];
        let mut b = vec![0.0; 50];
        learner.add_fitted(&gamma, 0.1, &mut a);
        learner.add_prediction(&x, &gamma, 0.1, &mut b);
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-14);
        }
    }
}

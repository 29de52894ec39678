//! Loss functions, negative gradients, links and offsets.
//!
//! Every family is the negative log-likelihood of its response distribution.
//! `L2` keeps the ½ factor so its negative gradient is exactly the residual;
//! the location-scale families keep all normalizing constants. Empirical risk
//! is a sum over observations.

use serde::{Deserialize, Serialize};

use crate::error::check_len;
use crate::special::{digamma, ln_gamma, trigamma};
use crate::{Error, Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Squared error, identity link.
    L2,
    /// Bernoulli with `y ∈ {0, 1}` and logit link.
    Logistic,
    /// Gaussian with location μ (identity) and scale σ (log).
    GaussianLss,
    /// Beta with mean μ (logit) and precision φ (log), `y ∈ (0, 1)`.
    BetaLss,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Logit,
    Log,
}

impl Link {
    /// Maps a predictor value to the parameter scale.
    pub fn inverse<T: Scalar>(self, eta: T) -> T {
        match self {
            Link::Identity => eta,
            Link::Logit => sigmoid(eta),
            Link::Log => eta.exp(),
        }
    }

    pub fn apply<T: Scalar>(self, theta: T) -> T {
        match self {
            Link::Identity => theta,
            Link::Logit => (theta / (T::one() - theta)).ln(),
            Link::Log => theta.ln(),
        }
    }

    pub fn is_identity(self) -> bool {
        self == Link::Identity
    }
}

/// Additive predictors, one length-n vector per distribution parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorState<T> {
    pub eta: Vec<Vec<T>>,
}

impl<T: Scalar> PredictorState<T> {
    pub fn constant(offsets: &[T], n: usize) -> Self {
        Self { eta: offsets.iter().map(|&o| vec![o; n]).collect() }
    }

    pub fn n_params(&self) -> usize {
        self.eta.len()
    }

    pub fn n(&self) -> usize {
        self.eta.first().map_or(0, Vec::len)
    }

    pub(crate) fn slices(&self) -> Vec<&[T]> {
        self.eta.iter().map(Vec::as_slice).collect()
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        (T::one() + (-x).exp()).recip()
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// log(1 + exp(x)) without overflow.
#[inline]
fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Family {
    pub const ALL: [Family; 4] = [Family::L2, Family::Logistic, Family::GaussianLss, Family::BetaLss];

    pub fn name(self) -> &'static str {
        match self {
            Family::L2 => "l2",
            Family::Logistic => "logistic",
            Family::GaussianLss => "gaussian-lss",
            Family::BetaLss => "beta-lss",
        }
    }

    pub fn n_params(self) -> usize {
        self.links().len()
    }

    pub fn links(self) -> &'static [Link] {
        match self {
            Family::L2 => &[Link::Identity],
            Family::Logistic => &[Link::Logit],
            Family::GaussianLss => &[Link::Identity, Link::Log],
            Family::BetaLss => &[Link::Logit, Link::Log],
        }
    }

    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            Family::L2 => &["mu"],
            Family::Logistic => &["p"],
            Family::GaussianLss => &["mu", "sigma"],
            Family::BetaLss => &["mu", "phi"],
        }
    }

    pub fn is_binary(self) -> bool {
        self == Family::Logistic
    }

    pub fn check_response_value<T: Scalar>(self, index: usize, y: T) -> Result<()> {
        let ok = match self {
            Family::L2 | Family::GaussianLss => y.is_finite(),
            Family::Logistic => y == T::zero() || y == T::one(),
            Family::BetaLss => y > T::zero() && y < T::one(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain { family: self.name(), index, value: y.as_f64() })
        }
    }

    pub fn check_response<T: Scalar>(self, y: &[T]) -> Result<()> {
        y.iter().enumerate().try_for_each(|(i, &v)| self.check_response_value(i, v))
    }

    /// Negative log-likelihood contribution of one observation.
    ///
    /// `eta` holds one predictor value per distribution parameter.
    pub fn pointwise_loss<T: Scalar>(self, y: T, eta: &[T]) -> Result<T> {
        self.check_response_value(0, y)?;
        check_len(self.n_params(), eta.len())?;
        Ok(self.loss_at(y, eta[0], eta.get(1).copied().unwrap_or_else(T::zero)))
    }

    #[inline]
    pub(crate) fn loss_at<T: Scalar>(self, y: T, e1: T, e2: T) -> T {
        match self {
            Family::L2 => {
                let r = y - e1;
                T::of(0.5) * r * r
            }
            Family::Logistic => softplus(e1) - y * e1,
            Family::GaussianLss => {
                let r = y - e1;
                T::of(0.5 * (2.0 * std::f64::consts::PI).ln()) + e2 + r * r / (T::of(2.0) * (T::of(2.0) * e2).exp())
            }
            Family::BetaLss => {
                let mu = sigmoid(e1);
                let one_minus_mu = sigmoid(-e1);
                let phi = e2.exp();
                let a = mu * phi;
                let b = one_minus_mu * phi;
                ln_gamma(a) + ln_gamma(b)
                    - ln_gamma(phi)
                    - (a - T::one()) * y.ln()
                    - (b - T::one()) * (T::one() - y).ln()
            }
        }
    }

    /// −∂loss/∂η_k at one observation; `k` is 0-based.
    #[inline]
    pub(crate) fn ngrad_at<T: Scalar>(self, y: T, e1: T, e2: T, k: usize) -> T {
        match (self, k) {
            (Family::L2, _) => y - e1,
            (Family::Logistic, _) => y - sigmoid(e1),
            (Family::GaussianLss, 0) => (y - e1) / (T::of(2.0) * e2).exp(),
            (Family::GaussianLss, _) => {
                let r = y - e1;
                r * r / (T::of(2.0) * e2).exp() - T::one()
            }
            (Family::BetaLss, k) => {
                let mu = sigmoid(e1);
                let one_minus_mu = sigmoid(-e1);
                let phi = e2.exp();
                let a = mu * phi;
                let b = one_minus_mu * phi;
                let ly = y.ln();
                let l1y = (T::one() - y).ln();
                if k == 0 {
                    phi * mu * one_minus_mu * (ly - l1y - digamma(a) + digamma(b))
                } else {
                    phi * (digamma(phi) - mu * digamma(a) - one_minus_mu * digamma(b) + mu * ly + one_minus_mu * l1y)
                }
            }
        }
    }

    fn check_state<T: Scalar>(self, y: &[T], state: &PredictorState<T>) -> Result<()> {
        check_len(self.n_params(), state.n_params())?;
        for eta in &state.eta {
            check_len(y.len(), eta.len())?;
        }
        Ok(())
    }

    /// Componentwise negative gradient with respect to predictor `k` (0-based).
    pub fn negative_gradient<T: Scalar>(self, y: &[T], state: &PredictorState<T>, k: usize) -> Result<Vec<T>> {
        if k >= self.n_params() {
            return Err(Error::InvalidArgument(format!(
                "parameter index {k} out of range for {} ({} parameters)",
                self.name(),
                self.n_params()
            )));
        }
        self.check_state(y, state)?;
        self.check_response(y)?;
        let mut out = vec![T::zero(); y.len()];
        self.negative_gradient_into(y, &state.slices(), k, &mut out);
        Ok(out)
    }

    pub(crate) fn negative_gradient_into<T: Scalar>(self, y: &[T], eta: &[&[T]], k: usize, out: &mut [T]) {
        let e1 = eta[0];
        match eta.get(1) {
            Some(e2) => {
                for i in 0..y.len() {
                    out[i] = self.ngrad_at(y[i], e1[i], e2[i], k);
                }
            }
            None => {
                for i in 0..y.len() {
                    out[i] = self.ngrad_at(y[i], e1[i], T::zero(), k);
                }
            }
        }
    }

    /// Weighted sum of pointwise losses.
    pub fn empirical_risk<T: Scalar>(self, y: &[T], state: &PredictorState<T>, weights: Option<&[T]>) -> Result<T> {
        self.check_state(y, state)?;
        self.check_response(y)?;
        if let Some(w) = weights {
            check_len(y.len(), w.len())?;
            if w.iter().any(|&v| v < T::zero() || !v.is_finite()) {
                return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
            }
            if w.iter().all(|&v| v == T::zero()) {
                return Err(Error::InvalidArgument("weights are all zero".into()));
            }
        }
        Ok(self.risk_unchecked(y, &state.slices(), weights))
    }

    pub(crate) fn risk_unchecked<T: Scalar>(self, y: &[T], eta: &[&[T]], weights: Option<&[T]>) -> T {
        let e1 = eta[0];
        let e2 = eta.get(1).copied();
        let mut total = T::zero();
        for i in 0..y.len() {
            let l = self.loss_at(y[i], e1[i], e2.map_or_else(T::zero, |v| v[i]));
            total = total + weights.map_or(l, |w| w[i] * l);
        }
        total
    }

    /// Constant predictor values minimizing the empirical risk.
    pub fn offset<T: Scalar>(self, y: &[T]) -> Result<Vec<T>> {
        if y.is_empty() {
            return Err(Error::Degenerate("empty response".into()));
        }
        self.check_response(y)?;
        let n = T::from_usize_lossy(y.len());
        let mean = y.iter().copied().sum::<T>() / n;
        let distinct = y.iter().any(|&v| v != y[0]);
        match self {
            Family::L2 => Ok(vec![mean]),
            Family::Logistic => {
                if !distinct {
                    return Err(Error::Degenerate("logistic response needs both classes".into()));
                }
                Ok(vec![(mean / (T::one() - mean)).ln()])
            }
            Family::GaussianLss => {
                if !distinct {
                    return Err(Error::Degenerate("gaussian-lss response is constant".into()));
                }
                let var = y.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
                Ok(vec![mean, T::of(0.5) * var.ln()])
            }
            Family::BetaLss => {
                if !distinct {
                    return Err(Error::Degenerate("beta-lss response needs at least two distinct values".into()));
                }
                Ok(beta_offset(y, mean))
            }
        }
    }

    /// Parameter-scale values for predictor vectors.
    pub fn response_scale<T: Scalar>(self, eta: &[Vec<T>]) -> Vec<Vec<T>> {
        self.links().iter().zip(eta).map(|(link, e)| e.iter().map(|&v| link.inverse(v)).collect()).collect()
    }
}

/// Beta maximum likelihood for a constant model: method-of-moments start,
/// then damped Newton on the shape pair (a, b).
fn beta_offset<T: Scalar>(y: &[T], mean: T) -> Vec<T> {
    let n = T::from_usize_lossy(y.len());
    let var = y.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let phi0 = (mean * (T::one() - mean) / var - T::one()).max(T::of(1e-3));
    let s1 = y.iter().map(|v| v.ln()).sum::<T>() / n;
    let s2 = y.iter().map(|&v| (T::one() - v).ln()).sum::<T>() / n;
    let objective =
        |a: T, b: T| ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b) - (a - T::one()) * s1 - (b - T::one()) * s2;

    let (mut a, mut b) = (mean * phi0, (T::one() - mean) * phi0);
    let mut f = objective(a, b);
    for _ in 0..200 {
        let dab = digamma(a + b);
        let g1 = digamma(a) - dab - s1;
        let g2 = digamma(b) - dab - s2;
        let tab = trigamma(a + b);
        let h11 = trigamma(a) - tab;
        let h22 = trigamma(b) - tab;
        let h12 = -tab;
        let det = h11 * h22 - h12 * h12;
        if !(det > T::zero()) {
            break;
        }
        let da = (h22 * g1 - h12 * g2) / det;
        let db = (h11 * g2 - h12 * g1) / det;
        let mut step = T::one();
        let mut moved = false;
        for _ in 0..60 {
            let (na, nb) = (a - step * da, b - step * db);
            if na > T::zero() && nb > T::zero() {
                let nf = objective(na, nb);
                if nf <= f {
                    a = na;
                    b = nb;
                    f = nf;
                    moved = true;
                    break;
                }
            }
            step = step * T::of(0.5);
        }
        let size = (da.abs() / a + db.abs() / b) * step;
        if !moved || size < T::of(1e-13) {
            break;
        }
    }
    vec![(a / b).ln(), (a + b).ln()]
}

//! Synthetic data for the four simulation scenarios, evaluation metrics and
//! the replication-study runner.

pub mod metrics;
pub mod study;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::baselearners::{BaseLearnerSet, PSplineOptions};
use crate::engine::BoostConfig;
use crate::families::sigmoid;
use crate::linalg::Cholesky;
use crate::rng::{substream, Stream};
use crate::{Dataset, Error, Family, Result};

pub use metrics::{auc, brier, evaluate, msep, negative_log_likelihood, EvaluationResult};
pub use study::{run_study, ResultRow, StudyConfig, StudyMethod, StudyOutcome};

const COEF_A: [f64; 6] = [-2.0, -1.5, -1.0, 1.0, 1.5, 2.0];
const COEF_B_LINEAR: [f64; 6] = [1.5, 1.0, -0.25, -0.25, -1.0, -1.5];
const COEF_C: [f64; 6] = [-5.0, -2.5, -1.0, 1.0, 2.5, 5.0];
const COEF_D_MU: [f64; 3] = [-2.0, 1.25, 1.0];
const COEF_D_SIGMA: [f64; 3] = [0.5, -0.5, 0.5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Linear Gaussian regression.
    A,
    /// Additive regression with a sine and a quadratic term.
    B,
    /// Logistic regression.
    C,
    /// Gaussian location and scale regression.
    D,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::A, Scenario::B, Scenario::C, Scenario::D];

    pub fn family(self) -> Family {
        match self {
            Scenario::A | Scenario::B => Family::L2,
            Scenario::C => Family::Logistic,
            Scenario::D => Family::GaussianLss,
        }
    }

    /// Candidate base-learners: P-splines for B, linear otherwise.
    pub fn learners(self, p: usize) -> Vec<BaseLearnerSet> {
        let set = match self {
            Scenario::B => BaseLearnerSet::pspline(p, PSplineOptions::default()),
            _ => BaseLearnerSet::linear(p),
        };
        vec![set; self.family().n_params()]
    }

    pub fn boost_config(self, p: usize) -> BoostConfig {
        BoostConfig::new(self.family(), self.learners(p))
    }

    /// Informative `(parameter, column)` pairs.
    pub fn informative(self) -> BTreeSet<(usize, usize)> {
        match self {
            Scenario::D => (0..3).map(|j| (0, j)).chain((3..6).map(|j| (1, j))).collect(),
            _ => (0..6).map(|j| (0, j)).collect(),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Scenario::A),
            "B" => Ok(Scenario::B),
            "C" => Ok(Scenario::C),
            "D" => Ok(Scenario::D),
            _ => Err(Error::InvalidArgument(format!("unknown scenario '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CovarianceKind {
    Toeplitz,
    Block { size: usize },
}

impl CovarianceKind {
    pub const DEFAULT_BLOCK: CovarianceKind = CovarianceKind::Block { size: 10 };
}

impl fmt::Display for CovarianceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovarianceKind::Toeplitz => f.write_str("toeplitz"),
            CovarianceKind::Block { size } => write!(f, "block({size})"),
        }
    }
}

impl FromStr for CovarianceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "toeplitz" {
            return Ok(CovarianceKind::Toeplitz);
        }
        if s == "block" {
            return Ok(CovarianceKind::DEFAULT_BLOCK);
        }
        s.strip_prefix("block(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|v| v.trim().parse().ok())
            .filter(|&size: &usize| size > 0)
            .map(|size| CovarianceKind::Block { size })
            .ok_or_else(|| Error::InvalidArgument(format!("unknown covariance kind '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub covariance: CovarianceKind,
    /// Scenario A only: sets the noise variance to `β'Σβ / snr`.
    pub snr: Option<f64>,
    pub n_test: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, n: usize, p: usize, rho: f64) -> Self {
        Self { scenario, n, p, rho, covariance: CovarianceKind::Toeplitz, snr: None, n_test: 1000, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_snr(mut self, snr: f64) -> Self {
        self.snr = Some(snr);
        self
    }

    pub fn with_covariance(mut self, kind: CovarianceKind) -> Self {
        self.covariance = kind;
        self
    }

    pub fn with_n_test(mut self, n_test: usize) -> Self {
        self.n_test = n_test;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 6 {
            return Err(Error::InvalidArgument(format!("scenarios need p >= 6, got {}", self.p)));
        }
        if self.n < 2 || self.n_test < 2 {
            return Err(Error::InvalidArgument("training and test sets need at least two rows".into()));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidArgument(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if let CovarianceKind::Block { size: 0 } = self.covariance {
            return Err(Error::InvalidArgument("block size must be positive".into()));
        }
        match self.snr {
            Some(s) if self.scenario != Scenario::A => {
                Err(Error::InvalidArgument(format!("an SNR of {s} was given but only scenario A uses one")))
            }
            Some(s) if !(s > 0.0 && s.is_finite()) => {
                Err(Error::InvalidArgument(format!("SNR must be positive, got {s}")))
            }
            _ => Ok(()),
        }
    }
}

/// Ground truth behind a generated data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub scenario: Scenario,
    pub informative: BTreeSet<(usize, usize)>,
    /// Per parameter, the coefficients of the informative columns in column order.
    /// Scenario B lists the linear factors of its terms.
    pub coefficients: Vec<Vec<f64>>,
    /// Noise standard deviation for scenarios A and B.
    pub noise_sd: Option<f64>,
}

pub struct Generated {
    pub train: Dataset<f64>,
    pub test: Dataset<f64>,
    pub truth: Truth,
}

pub fn covariance(kind: CovarianceKind, p: usize, rho: f64) -> Array2<f64> {
    Array2::from_shape_fn((p, p), |(i, j)| {
        if i == j {
            return 1.0;
        }
        match kind {
            CovarianceKind::Toeplitz => rho.powi(i.abs_diff(j) as i32),
            CovarianceKind::Block { size } if i / size == j / size => rho,
            CovarianceKind::Block { .. } => 0.0,
        }
    })
}

/// `n` rows from `N(0, Σ)`, returned column-wise.
pub fn sample_mvn(n: usize, sigma: &Array2<f64>, seed: u64) -> Result<Vec<Vec<f64>>> {
    let chol = Cholesky::new(sigma)?;
    Ok(sample_mvn_with(n, &chol, &mut substream(seed, Stream::TrainingData, 0)))
}

fn sample_mvn_with<R: Rng>(n: usize, chol: &Cholesky<f64>, rng: &mut R) -> Vec<Vec<f64>> {
    let p = chol.dim();
    let l = chol.lower();
    let mut columns = vec![vec![0.0; n]; p];
    let mut z = vec![0.0; p];
    for i in 0..n {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        for (a, col) in columns.iter_mut().enumerate() {
            col[i] = (0..=a).map(|b| l[[a, b]] * z[b]).sum();
        }
    }
    columns
}

fn linear_predictor(columns: &[Vec<f64>], coefs: &[f64], offset: usize, i: usize) -> f64 {
    coefs.iter().enumerate().map(|(j, &b)| b * columns[offset + j][i]).sum()
}

fn draw_response<R: Rng>(spec: &ScenarioSpec, noise_sd: f64, x: &[Vec<f64>], rng: &mut R) -> Result<Vec<f64>> {
    let n = x[0].len();
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let e: f64 = StandardNormal.sample(rng);
        y.push(match spec.scenario {
            Scenario::A => linear_predictor(x, &COEF_A, 0, i) + noise_sd * e,
            Scenario::B => {
                let v = |j: usize| x[j][i];
                1.5 * v(0).sin() + v(1) - 0.25 * v(2) * v(2) - 0.25 * v(3) - v(4) - 1.5 * v(5) + noise_sd * e
            }
            Scenario::C => {
                let prob = sigmoid(linear_predictor(x, &COEF_C, 0, i));
                let draw =
                    Bernoulli::new(prob).map_err(|err| Error::Numerical { iteration: 0, reason: err.to_string() })?;
                f64::from(u8::from(draw.sample(rng)))
            }
            Scenario::D => {
                let mu = linear_predictor(x, &COEF_D_MU, 0, i);
                let sigma = linear_predictor(x, &COEF_D_SIGMA, 3, i).exp();
                mu + sigma * e
            }
        });
    }
    Ok(y)
}

/// Training and test sets for a scenario; the test set uses an independent stream.
pub fn generate(spec: &ScenarioSpec) -> Result<Generated> {
    spec.validate()?;
    let sigma = covariance(spec.covariance, spec.p, spec.rho);
    let chol = Cholesky::new(&sigma)?;
    let noise_sd = match (spec.scenario, spec.snr) {
        (Scenario::A, Some(snr)) => {
            let beta: Vec<f64> = COEF_A.iter().copied().chain(std::iter::repeat(0.0)).take(spec.p).collect();
            let signal: f64 = (0..spec.p)
                .flat_map(|i| (0..spec.p).map(move |j| (i, j)))
                .map(|(i, j)| beta[i] * sigma[[i, j]] * beta[j])
                .sum();
            (signal / snr).sqrt()
        }
        _ => 1.0,
    };
    let names: Vec<String> = (1..=spec.p).map(|j| format!("X{j}")).collect();
    let make = |stream: Stream, n: usize| -> Result<Dataset<f64>> {
        let mut rng = substream(spec.seed, stream, 0);
        let x = sample_mvn_with(n, &chol, &mut rng);
        let y = draw_response(spec, noise_sd, &x, &mut rng)?;
        Dataset::new(x, y, names.clone())
    };
    let train = make(Stream::TrainingData, spec.n)?;
    let test = make(Stream::TestData, spec.n_test)?;
    let coefficients = match spec.scenario {
        Scenario::A => vec![COEF_A.to_vec()],
        Scenario::B => vec![COEF_B_LINEAR.to_vec()],
        Scenario::C => vec![COEF_C.to_vec()],
        Scenario::D => vec![COEF_D_MU.to_vec(), COEF_D_SIGMA.to_vec()],
    };
    let truth = Truth {
        scenario: spec.scenario,
        informative: spec.scenario.informative(),
        coefficients,
        noise_sd: matches!(spec.scenario, Scenario::A | Scenario::B).then_some(noise_sd),
    };
    Ok(Generated { train, test, truth })
}

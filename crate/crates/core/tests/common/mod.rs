//! Reference implementations written independently of the library, used as
//! oracles by the integration tests.

#![allow(dead_code)]

use deselboost::{BaseLearnerSet, BoostConfig, Dataset, Family, LearnerKind, LearnerSpec, PSplineOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// ln Γ(x) for x > 0 by upward shift and the Stirling series.
pub fn ln_gamma(x: f64) -> f64 {
    let mut x = x;
    let mut shift = 0.0;
    while x < 15.0 {
        shift += x.ln();
        x += 1.0;
    }
    let z = 1.0 / (x * x);
    let series = (1.0 / 12.0 - z * (1.0 / 360.0 - z * (1.0 / 1260.0 - z / 1680.0))) / x;
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + series - shift
}

/// Negative log-likelihood of one observation.
pub fn loss(family: Family, y: f64, eta: &[f64]) -> f64 {
    match family {
        Family::L2 => 0.5 * (y - eta[0]).powi(2),
        Family::Logistic => {
            let p = 1.0 / (1.0 + (-eta[0]).exp());
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        }
        Family::GaussianLss => {
            let sigma = eta[1].exp();
            0.5 * (2.0 * std::f64::consts::PI).ln() + sigma.ln() + (y - eta[0]).powi(2) / (2.0 * sigma * sigma)
        }
        Family::BetaLss => {
            let mu = 1.0 / (1.0 + (-eta[0]).exp());
            let phi = eta[1].exp();
            let (a, b) = (mu * phi, (1.0 - mu) * phi);
            -(ln_gamma(phi) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * y.ln() + (b - 1.0) * (1.0 - y).ln())
        }
    }
}

pub fn risk(family: Family, y: &[f64], eta: &[Vec<f64>]) -> f64 {
    let mut e = vec![0.0; eta.len()];
    y.iter()
        .enumerate()
        .map(|(i, &v)| {
            for (k, x) in e.iter_mut().enumerate() {
                *x = eta[k][i];
            }
            loss(family, v, &e)
        })
        .sum()
}

/// Five-point central difference.
pub fn derivative(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = 1e-3 * x.abs().max(1.0);
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Closed-form simple regression `(intercept, slope)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let sxx: f64 = x.iter().map(|a| (a - xm).powi(2)).sum();
    let slope = sxy / sxx;
    (ym - slope * xm, slope)
}

/// B-spline basis functions of the given degree at `x` by the Cox-de Boor recursion.
pub fn bspline_basis(x: f64, knots: &[f64], degree: usize) -> Vec<f64> {
    let m = knots.len() - 1;
    // degree 0, half-open intervals; the last non-empty interval is closed
    let last = (0..m).rev().find(|&i| knots[i] < knots[i + 1]).unwrap();
    let mut b: Vec<f64> = (0..m)
        .map(|i| {
            let inside = knots[i] <= x && x < knots[i + 1];
            f64::from(u8::from(inside || (i == last && x == knots[i + 1])))
        })
        .collect();
    for d in 1..=degree {
        let next: Vec<f64> = (0..m - d)
            .map(|i| {
                let left =
                    if knots[i + d] > knots[i] { (x - knots[i]) / (knots[i + d] - knots[i]) * b[i] } else { 0.0 };
                let right = if knots[i + d + 1] > knots[i + 1] {
                    (knots[i + d + 1] - x) / (knots[i + d + 1] - knots[i + 1]) * b[i + 1]
                } else {
                    0.0
                };
                left + right
            })
            .collect();
        b = next;
    }
    b
}

/// Random data whose response is valid for `family`, with signal on the first two columns.
pub fn random_dataset(family: Family, n: usize, p: usize, rng: &mut impl Rng) -> Dataset<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let columns: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| normal.sample(rng)).collect()).collect();
    let y = (0..n)
        .map(|i| {
            let s = 0.8 * columns[0][i] - 0.5 * columns[1 % p][i];
            match family {
                Family::L2 => s + normal.sample(rng),
                Family::Logistic => f64::from(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-s).exp()))),
                Family::GaussianLss => s + (0.4 * columns[2 % p][i]).exp() * normal.sample(rng),
                Family::BetaLss => {
                    let mu = 1.0 / (1.0 + (-0.5 * s).exp());
                    let phi = (2.0 + 0.3 * columns[2 % p][i]).exp();
                    Beta::new(mu * phi, (1.0 - mu) * phi).unwrap().sample(rng).clamp(1e-6, 1.0 - 1e-6)
                }
            }
        })
        .collect();
    Dataset::from_columns(columns, y).unwrap()
}

/// Linear learners on every column, with P-splines on odd columns when `smooth` is set.
pub fn random_config(family: Family, p: usize, smooth: bool, m_stop: usize) -> BoostConfig {
    let specs: Vec<LearnerSpec> = (0..p)
        .map(|column| LearnerSpec {
            column,
            kind: if smooth && column % 2 == 1 {
                LearnerKind::PSpline(PSplineOptions { n_knots: 8, ..Default::default() })
            } else {
                LearnerKind::Linear
            },
        })
        .collect();
    let set = BaseLearnerSet::new(specs).unwrap();
    BoostConfig::new(family, vec![set; family.n_params()]).with_m_stop(m_stop)
}

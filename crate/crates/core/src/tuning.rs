//! Choosing the stopping iteration: cross-validated risk curves, the
//! CV-optimal, one-standard-error and RobustC rules, and probing.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselearners::{BaseLearnerSet, LearnerSpec};
use crate::engine::{BoostConfig, Booster};
use crate::rng::{substream, Stream};
use crate::{Dataset, Error, Family, Result, Scalar};

const MAX_REPARTITIONS: u32 = 10;

/// Out-of-fold risk per held-out observation for every iteration `0..=m_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct CvCurve<T> {
    pub folds: usize,
    /// `folds × (m_max + 1)`
    pub fold_risks: Vec<Vec<T>>,
    pub mean: Vec<T>,
    /// Standard deviation across folds divided by √folds.
    pub se: Vec<T>,
    /// Fold index of every observation.
    pub assignment: Vec<usize>,
}

impl<T: Scalar> CvCurve<T> {
    pub fn from_fold_risks(fold_risks: Vec<Vec<T>>) -> Result<Self> {
        let k = fold_risks.len();
        if k < 2 {
            return Err(Error::InvalidArgument("a CV curve needs at least two folds".into()));
        }
        let len = fold_risks[0].len();
        if len == 0 || fold_risks.iter().any(|f| f.len() != len) {
            return Err(Error::InvalidArgument("fold risk curves must share a nonzero length".into()));
        }
        let kf = T::from_usize_lossy(k);
        let mut mean = Vec::with_capacity(len);
        let mut se = Vec::with_capacity(len);
        let mut column = vec![T::zero(); k];
        for m in 0..len {
            for (c, f) in column.iter_mut().zip(&fold_risks) {
                *c = f[m];
            }
            // fixed summation order makes the summaries independent of fold order
            column.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            let mu = column.iter().copied().sum::<T>() / kf;
            let var = column.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / (kf - T::one());
            mean.push(mu);
            se.push((var / kf).sqrt());
        }
        Ok(Self { folds: k, fold_risks, mean, se, assignment: Vec::new() })
    }

    /// A curve given only by its summaries.
    pub fn from_mean_se(mean: Vec<T>, se: Vec<T>) -> Result<Self> {
        if mean.is_empty() || mean.len() != se.len() {
            return Err(Error::InvalidArgument("mean and se must share a nonzero length".into()));
        }
        Ok(Self { folds: 0, fold_risks: Vec::new(), mean, se, assignment: Vec::new() })
    }

    pub fn m_max(&self) -> usize {
        self.mean.len() - 1
    }

    /// Columns: iteration, mean_risk, se, fold_1..fold_k.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iteration".to_string(), "mean_risk".into(), "se".into()];
        header.extend((1..=self.fold_risks.len()).map(|f| format!("fold_{f}")));
        w.write_record(&header)?;
        for m in 0..self.mean.len() {
            let mut rec = vec![m.to_string(), self.mean[m].to_string(), self.se[m].to_string()];
            rec.extend(self.fold_risks.iter().map(|f| f[m].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Seeded k-fold cross-validation of the risk path.
pub fn cv_curve<T: Scalar>(
    data: &Dataset<T>,
    config: &BoostConfig,
    folds: usize,
    m_max: usize,
    seed: u64,
) -> Result<CvCurve<T>> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    if data.n() < 2 * folds {
        return Err(Error::InvalidArgument(format!("{} observations are too few for {folds} folds", data.n())));
    }
    config.validate(data)?;
    let assignment = partition(data, config.family, folds, seed)?;
    let fold_config = config.clone().with_m_stop(m_max);
    let fold_risks = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train_rows: Vec<usize> = (0..data.n()).filter(|&i| assignment[i] != f).collect();
            let test_rows: Vec<usize> = (0..data.n()).filter(|&i| assignment[i] == f).collect();
            let train = data.subset(&train_rows);
            let test = data.subset(&test_rows);
            let out = Booster::new(&train, &fold_config).with_validation(&test).run()?;
            let n_test = T::from_usize_lossy(test.n());
            Ok(out.validation_risk.expect("validation risk requested").into_iter().map(|r| r / n_test).collect())
        })
        .collect::<Result<Vec<Vec<T>>>>()?;
    let mut curve = CvCurve::from_fold_risks(fold_risks)?;
    curve.assignment = assignment;
    Ok(curve)
}

fn partition<T: Scalar>(data: &Dataset<T>, family: Family, folds: usize, seed: u64) -> Result<Vec<usize>> {
    let n = data.n();
    for attempt in 0..MAX_REPARTITIONS {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut substream(seed, Stream::FoldSplit, attempt));
        let mut assignment = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            assignment[i] = pos % folds;
        }
        if !family.is_binary() || classes_preserved(data.response(), &assignment, folds) {
            return Ok(assignment);
        }
    }
    Err(Error::Degenerate(format!(
        "no fold partition in {MAX_REPARTITIONS} attempts keeps both response classes in every fold"
    )))
}

fn classes_preserved<T: Scalar>(y: &[T], assignment: &[usize], folds: usize) -> bool {
    // [held-out zeros, held-out ones] per fold
    let mut counts = vec![[0usize; 2]; folds];
    for (&v, &f) in y.iter().zip(assignment) {
        counts[f][usize::from(v == T::one())] += 1;
    }
    let total = [y.len() - count_ones(y), count_ones(y)];
    counts.iter().all(|c| c[0] > 0 && c[1] > 0 && total[0] > c[0] && total[1] > c[1])
}

fn count_ones<T: Scalar>(y: &[T]) -> usize {
    y.iter().filter(|&&v| v == T::one()).count()
}

/// Iteration with the smallest mean CV risk; earliest on ties.
pub fn mstop_opt<T: Scalar>(curve: &CvCurve<T>) -> usize {
    let mut best = 0;
    for (m, &v) in curve.mean.iter().enumerate() {
        if v < curve.mean[best] {
            best = m;
        }
    }
    best
}

/// Smallest iteration whose mean risk is within one standard error of the minimum.
pub fn mstop_ose<T: Scalar>(curve: &CvCurve<T>) -> usize {
    let opt = mstop_opt(curve);
    let threshold = curve.mean[opt] + curve.se[opt];
    first_below(&curve.mean, threshold).unwrap_or(opt)
}

/// Smallest iteration whose mean risk is at most `c` times the minimum.
pub fn mstop_robustc<T: Scalar>(curve: &CvCurve<T>, c: f64) -> Result<usize> {
    if !(c >= 1.0) {
        return Err(Error::InvalidArgument(format!("RobustC factor must be at least 1, got {c}")));
    }
    let opt = mstop_opt(curve);
    let min = curve.mean[opt];
    if !(min > T::zero()) {
        return Err(Error::InvalidArgument(format!("RobustC needs a positive minimal CV risk, got {min}")));
    }
    Ok(first_below(&curve.mean, T::of(c) * min).unwrap_or(opt))
}

fn first_below<T: Scalar>(mean: &[T], threshold: T) -> Option<usize> {
    mean.iter().position(|&v| v <= threshold)
}

/// RobustC factor: 1.1 for binary responses, 1.05 otherwise.
pub fn default_robustc_c(family: Family) -> f64 {
    if family.is_binary() {
        1.1
    } else {
        1.05
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probing {
    /// Iterations before the first probe was selected.
    pub m_stop: usize,
    /// True when no probe was selected within the iteration cap.
    pub capped: bool,
}

/// Stops at the first selection of a permuted copy of a covariate.
pub fn mstop_probing<T: Scalar>(data: &Dataset<T>, config: &BoostConfig, seed: u64) -> Result<Probing> {
    mstop_probing_with_cap(data, config, seed, 10 * data.n())
}

pub fn mstop_probing_with_cap<T: Scalar>(
    data: &Dataset<T>,
    config: &BoostConfig,
    seed: u64,
    cap: usize,
) -> Result<Probing> {
    let p = data.p();
    if p == 0 {
        return Err(Error::InvalidArgument("probing needs at least one covariate".into()));
    }
    config.validate(data)?;
    let mut rng = substream(seed, Stream::ProbeShuffle, 0);
    let probes: Vec<Vec<T>> = data
        .columns()
        .iter()
        .map(|c| {
            let mut v = c.clone();
            v.shuffle(&mut rng);
            v
        })
        .collect();
    let names = data.names().iter().map(|n| format!("probe_{n}")).collect();
    let augmented = data.augmented(probes, names)?;
    let learners = config
        .learners
        .iter()
        .map(|set| {
            let mut specs: Vec<LearnerSpec> = set.iter().copied().collect();
            specs.extend(set.iter().map(|s| LearnerSpec { column: s.column + p, kind: s.kind }));
            BaseLearnerSet::new(specs)
        })
        .collect::<Result<Vec<_>>>()?;
    let probe_config = BoostConfig { learners, m_stop: cap, ..config.clone() };
    let out = Booster::new(&augmented, &probe_config).run_until(|r| r.component >= p)?;
    Ok(if out.stopped_early {
        Probing { m_stop: out.fit.m_stop() - 1, capped: false }
    } else {
        Probing { m_stop: cap, capped: true }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum StoppingRule {
    Opt,
    #[serde(rename = "ose")]
    OneSe,
    #[serde(rename = "robustc")]
    RobustC {
        c: f64,
    },
    Probing,
}

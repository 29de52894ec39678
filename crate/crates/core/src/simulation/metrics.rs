use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::check_len;
use crate::{Dataset, Error, Family, Prediction, Result};

pub fn msep(y: &[f64], fitted: &[f64]) -> Result<f64> {
    check_len(y.len(), fitted.len())?;
    if y.is_empty() {
        return Err(Error::InvalidArgument("MSEP of an empty sample".into()));
    }
    Ok(y.iter().zip(fitted).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

/// Mean squared difference between 0/1 labels and predicted probabilities.
pub fn brier(y: &[f64], prob: &[f64]) -> Result<f64> {
    msep(y, prob)
}

/// Area under the ROC curve as the Mann-Whitney statistic; ties count one half.
pub fn auc(y: &[f64], scores: &[f64]) -> Result<f64> {
    check_len(y.len(), scores.len())?;
    let mut pairs: Vec<(f64, bool)> = scores.iter().zip(y).map(|(&s, &v)| (s, v == 1.0)).collect();
    let n_pos = pairs.iter().filter(|p| p.1).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate("AUC needs both classes in the sample".into()));
    }
    if pairs.iter().any(|p| p.0.is_nan()) {
        return Err(Error::Degenerate("AUC of NaN scores".into()));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // midranks over runs of tied scores
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        while j + 1 < pairs.len() && pairs[j + 1].0 == pairs[i].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * pairs[i..=j].iter().filter(|p| p.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Summed negative log-likelihood of `y` at the given predictors.
pub fn negative_log_likelihood(family: Family, y: &[f64], link: &[Vec<f64>]) -> Result<f64> {
    if link.len() != family.n_params() {
        return Err(Error::InvalidArgument(format!(
            "{} needs {} predictors, got {}",
            family.name(),
            family.n_params(),
            link.len()
        )));
    }
    for l in link {
        check_len(y.len(), l.len())?;
    }
    let mut eta = vec![0.0; link.len()];
    let mut total = 0.0;
    for (i, &v) in y.iter().enumerate() {
        for (e, l) in eta.iter_mut().zip(link) {
            *e = l[i];
        }
        total += family.pointwise_loss(v, &eta)?;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    /// `(name, value)`: msep for L2, brier and auc for logistic, nll otherwise.
    pub metrics: Vec<(String, f64)>,
    pub tp: usize,
    pub fp: usize,
    /// `(tp, fp)` per distribution parameter.
    pub per_parameter: Vec<(usize, usize)>,
    pub selected: Vec<(usize, usize)>,
}

impl EvaluationResult {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }
}

pub fn evaluate(
    family: Family,
    prediction: &Prediction<f64>,
    test: &Dataset<f64>,
    informative: &BTreeSet<(usize, usize)>,
    selected: &BTreeSet<(usize, usize)>,
) -> Result<EvaluationResult> {
    let y = test.response();
    let metrics = match family {
        Family::L2 => vec![("msep".to_string(), msep(y, &prediction.response[0])?)],
        Family::Logistic => vec![
            ("brier".to_string(), brier(y, &prediction.response[0])?),
            ("auc".to_string(), auc(y, &prediction.response[0])?),
        ],
        Family::GaussianLss | Family::BetaLss => {
            vec![("nll".to_string(), negative_log_likelihood(family, y, &prediction.link)?)]
        }
    };
    let per_parameter: Vec<(usize, usize)> = (0..family.n_params())
        .map(|k| {
            let sel = selected.iter().filter(|&&(kk, _)| kk == k);
            let tp = sel.clone().filter(|c| informative.contains(c)).count();
            (tp, sel.count() - tp)
        })
        .collect();
    Ok(EvaluationResult {
        metrics,
        tp: per_parameter.iter().map(|c| c.0).sum(),
        fp: per_parameter.iter().map(|c| c.1).sum(),
        per_parameter,
        selected: selected.iter().copied().collect(),
    })
}

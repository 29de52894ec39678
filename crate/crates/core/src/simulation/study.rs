use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, generate, ScenarioSpec};
use crate::deselection::{deselect, restrict_config, DeselectionMethod, DEFAULT_TAU};
use crate::engine::fit;
use crate::tuning::{cv_curve, default_robustc_c, mstop_opt, mstop_ose, mstop_probing, mstop_robustc};
use crate::{BoostFit, Error, Result};

/// Share of failed replications above which a study is aborted.
const MAX_FAILURE_SHARE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StudyMethod {
    /// Boosting stopped at the CV optimum.
    Classical,
    Deselect {
        tau: f64,
        method: DeselectionMethod,
    },
    #[serde(rename = "ose")]
    OneSe,
    /// `c = None` picks the family default.
    RobustC {
        c: Option<f64>,
    },
    Probing,
}

impl StudyMethod {
    pub fn label(&self) -> String {
        match self {
            StudyMethod::Classical => "classical".into(),
            StudyMethod::Deselect { method: DeselectionMethod::Attributable, .. } => "deselect".into(),
            StudyMethod::Deselect { method: DeselectionMethod::Cumulative, .. } => "deselect-cumulative".into(),
            StudyMethod::OneSe => "ose".into(),
            StudyMethod::RobustC { c: None } => "robustc".into(),
            StudyMethod::RobustC { c: Some(c) } => format!("robustc({c})"),
            StudyMethod::Probing => "probing".into(),
        }
    }

    fn tau(&self) -> Option<f64> {
        match self {
            StudyMethod::Deselect { tau, .. } => Some(*tau),
            _ => None,
        }
    }
}

impl fmt::Display for StudyMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StudyMethod::Deselect { tau, .. } => write!(f, "{}({tau})", self.label()),
            _ => f.write_str(&self.label()),
        }
    }
}

/// Accepts `classical`, `ose`, `probing`, `robustc`, `robustc(1.05)`,
/// `deselect`, `deselect(0.01)`, `deselect-cumulative` and `deselect-cumulative(0.01)`.
impl FromStr for StudyMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once('(') {
            Some((n, rest)) => {
                let inner = rest
                    .strip_suffix(')')
                    .ok_or_else(|| Error::InvalidArgument(format!("unbalanced parentheses in method '{s}'")))?;
                let v: f64 = inner
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad argument in method '{s}'")))?;
                (n, Some(v))
            }
            None => (s, None),
        };
        let no_arg = |m: StudyMethod| match arg {
            None => Ok(m),
            Some(_) => Err(Error::InvalidArgument(format!("method '{name}' takes no argument"))),
        };
        match name {
            "classical" => no_arg(StudyMethod::Classical),
            "ose" => no_arg(StudyMethod::OneSe),
            "probing" => no_arg(StudyMethod::Probing),
            "robustc" => Ok(StudyMethod::RobustC { c: arg }),
            "deselect" | "deselect-attributable" => {
                Ok(StudyMethod::Deselect { tau: arg.unwrap_or(DEFAULT_TAU), method: DeselectionMethod::Attributable })
            }
            "deselect-cumulative" => {
                Ok(StudyMethod::Deselect { tau: arg.unwrap_or(DEFAULT_TAU), method: DeselectionMethod::Cumulative })
            }
            _ => Err(Error::InvalidArgument(format!("unknown study method '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Grid of settings; each is replicated `replications` times.
    pub specs: Vec<ScenarioSpec>,
    pub methods: Vec<StudyMethod>,
    pub replications: usize,
    /// Replication `r` generates its data with seed `seed + r`.
    pub seed: u64,
    pub folds: usize,
    pub m_max: usize,
    pub nu: f64,
}

impl StudyConfig {
    pub fn new(specs: Vec<ScenarioSpec>, methods: Vec<StudyMethod>, replications: usize) -> Self {
        Self { specs, methods, replications, seed: 0, folds: 10, m_max: 1000, nu: 0.1 }
    }
}

/// One row of the results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub replication: usize,
    pub scenario: String,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub snr: Option<f64>,
    pub method: String,
    pub tau: Option<f64>,
    pub mstop_used: usize,
    pub tp: usize,
    pub fp: usize,
    pub tp_mu: Option<usize>,
    pub fp_mu: Option<usize>,
    pub tp_sigma: Option<usize>,
    pub fp_sigma: Option<usize>,
    pub metric_name: String,
    pub metric_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyFailure {
    pub grid_index: usize,
    pub replication: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyOutcome {
    /// Ordered by grid point, replication, method, metric.
    pub rows: Vec<ResultRow>,
    pub failures: Vec<StudyFailure>,
}

pub fn run_study(config: &StudyConfig) -> Result<StudyOutcome> {
    if config.replications == 0 {
        return Err(Error::InvalidArgument("a study needs at least one replication".into()));
    }
    if config.specs.is_empty() || config.methods.is_empty() {
        return Err(Error::InvalidArgument("a study needs at least one setting and one method".into()));
    }
    for spec in &config.specs {
        spec.validate()?;
    }
    let units: Vec<(usize, usize)> =
        (0..config.specs.len()).flat_map(|g| (0..config.replications).map(move |r| (g, r))).collect();
    let results: Vec<Result<Vec<ResultRow>>> =
        units.par_iter().map(|&(g, r)| run_replication(config, &config.specs[g], r)).collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (&(grid_index, replication), res) in units.iter().zip(results) {
        match res {
            Ok(mut r) => rows.append(&mut r),
            Err(e) => failures.push(StudyFailure { grid_index, replication, message: e.to_string() }),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_SHARE * units.len() as f64 {
        return Err(Error::Degenerate(format!(
            "{} of {} replications failed, first failure: {}",
            failures.len(),
            units.len(),
            failures[0].message
        )));
    }
    Ok(StudyOutcome { rows, failures })
}

fn run_replication(config: &StudyConfig, base: &ScenarioSpec, replication: usize) -> Result<Vec<ResultRow>> {
    let seed = config.seed.wrapping_add(replication as u64);
    let spec = ScenarioSpec { seed, ..base.clone() };
    let data = generate(&spec)?;
    let boost_config = spec.scenario.boost_config(spec.p).with_nu(config.nu).with_seed(seed);
    let curve = cv_curve(&data.train, &boost_config, config.folds, config.m_max, seed)?;
    let m_opt = mstop_opt(&curve);
    let classical = fit(&data.train, &boost_config.clone().with_m_stop(m_opt))?;
    let family = spec.scenario.family();

    let mut rows = Vec::new();
    for method in &config.methods {
        let model: BoostFit<f64> = match *method {
            StudyMethod::Classical => classical.clone(),
            StudyMethod::OneSe => classical.truncated(mstop_ose(&curve))?,
            StudyMethod::RobustC { c } => {
                classical.truncated(mstop_robustc(&curve, c.unwrap_or_else(|| default_robustc_c(family)))?)?
            }
            StudyMethod::Probing => {
                let probe = mstop_probing(&data.train, &boost_config, seed)?;
                fit(&data.train, &boost_config.clone().with_m_stop(probe.m_stop))?
            }
            StudyMethod::Deselect { tau, method } => {
                let report = deselect(&classical, tau, method)?;
                let kept = report.kept();
                let m = if kept.is_empty() { 0 } else { m_opt };
                fit(&data.train, &restrict_config(&boost_config, &kept).with_m_stop(m))?
            }
        };
        let prediction = model.predict_dataset(&data.test, None)?;
        let eval = evaluate(family, &prediction, &data.test, &data.truth.informative, &model.selected())?;
        let lss = family.n_params() == 2;
        for (name, value) in &eval.metrics {
            rows.push(ResultRow {
                replication,
                scenario: spec.scenario.to_string(),
                n: spec.n,
                p: spec.p,
                rho: spec.rho,
                snr: spec.snr,
                method: method.label(),
                tau: method.tau(),
                mstop_used: model.m_stop(),
                tp: eval.tp,
                fp: eval.fp,
                tp_mu: lss.then(|| eval.per_parameter[0].0),
                fp_mu: lss.then(|| eval.per_parameter[0].1),
                tp_sigma: lss.then(|| eval.per_parameter[1].0),
                fp_sigma: lss.then(|| eval.per_parameter[1].1),
                metric_name: name.clone(),
                metric_value: *value,
            });
        }
    }
    Ok(rows)
}

/// Grouping of result rows: one setting and method.
#[derive(Clone, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SettingKey {
    pub scenario: String,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub snr: Option<f64>,
    pub method: String,
    pub tau: Option<f64>,
}

impl SettingKey {
    fn of(r: &ResultRow) -> Self {
        Self {
            scenario: r.scenario.clone(),
            n: r.n,
            p: r.p,
            rho: r.rho,
            snr: r.snr,
            method: r.method.clone(),
            tau: r.tau,
        }
    }

    fn sort_key(&self) -> String {
        format!(
            "{}|{:>12}|{:>12}|{:020.10}|{:?}|{}|{:?}",
            self.scenario, self.n, self.p, self.rho, self.snr, self.method, self.tau
        )
    }
}

/// One measure of one replication, ready for boxplots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub replication: usize,
    pub scenario: String,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub snr: Option<f64>,
    pub method: String,
    pub tau: Option<f64>,
    pub measure: String,
    pub value: f64,
}

/// Mean and sample standard deviation of one measure across replications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub snr: Option<f64>,
    pub method: String,
    pub tau: Option<f64>,
    pub measure: String,
    pub count: usize,
    pub mean: f64,
    pub sd: Option<f64>,
}

/// Splits rows into one record per measure. Selection counts and the
/// stopping iteration are emitted once per replication even when a method
/// reports several metrics.
pub fn long_format(rows: &[ResultRow]) -> Vec<LongRow> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for r in rows {
        let key = SettingKey::of(r);
        let push = |out: &mut Vec<LongRow>, measure: &str, value: f64| {
            out.push(LongRow {
                replication: r.replication,
                scenario: key.scenario.clone(),
                n: key.n,
                p: key.p,
                rho: key.rho,
                snr: key.snr,
                method: key.method.clone(),
                tau: key.tau,
                measure: measure.to_string(),
                value,
            })
        };
        if seen.insert((key.sort_key(), r.replication)) {
            push(&mut out, "tp", r.tp as f64);
            push(&mut out, "fp", r.fp as f64);
            let optional = [("tp_mu", r.tp_mu), ("fp_mu", r.fp_mu), ("tp_sigma", r.tp_sigma), ("fp_sigma", r.fp_sigma)];
            for (name, v) in optional {
                if let Some(v) = v {
                    push(&mut out, name, v as f64);
                }
            }
            push(&mut out, "mstop_used", r.mstop_used as f64);
        }
        push(&mut out, &r.metric_name, r.metric_value);
    }
    out
}

/// Mean and standard deviation per setting, method and measure.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String), (SettingKey, Vec<f64>)> = BTreeMap::new();
    let mut measure_order: BTreeMap<String, usize> = BTreeMap::new();
    for l in long_format(rows) {
        let next = measure_order.len();
        measure_order.entry(l.measure.clone()).or_insert(next);
        let key =
            SettingKey { scenario: l.scenario, n: l.n, p: l.p, rho: l.rho, snr: l.snr, method: l.method, tau: l.tau };
        let sort = format!("{}|{:06}", key.sort_key(), measure_order[&l.measure]);
        groups.entry((sort, l.measure)).or_insert_with(|| (key, Vec::new())).1.push(l.value);
    }
    groups
        .into_iter()
        .map(|((_, measure), (key, values))| {
            let count = values.len();
            let mean = values.iter().sum::<f64>() / count as f64;
            let sd = (count > 1)
                .then(|| (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64).sqrt());
            SummaryRow {
                scenario: key.scenario,
                n: key.n,
                p: key.p,
                rho: key.rho,
                snr: key.snr,
                method: key.method,
                tau: key.tau,
                measure,
                count,
                mean,
                sd,
            }
        })
        .collect()
}

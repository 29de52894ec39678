//! Deselection of base-learners by their attributable risk reduction.
//!
//! Every iteration's risk drop `r[m-1] - r[m]` is credited to the
//! `(parameter, component)` pair updated in that iteration. Pairs whose total
//! credit falls below `τ` times the overall reduction are removed and the model
//! is boosted again on the survivors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{fit, BoostConfig, BoostFit};
use crate::tuning::{cv_curve, mstop_opt, CvCurve};
use crate::{Dataset, Error, Result, Scalar};

pub const DEFAULT_TAU: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeselectionMethod {
    /// Drop each component whose own reduction is below the threshold.
    #[default]
    Attributable,
    /// Drop the longest low-importance tail whose summed reduction stays below the threshold.
    Cumulative,
}

impl fmt::Display for DeselectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeselectionMethod::Attributable => "attributable",
            DeselectionMethod::Cumulative => "cumulative",
        })
    }
}

impl FromStr for DeselectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attributable" => Ok(Self::Attributable),
            "cumulative" => Ok(Self::Cumulative),
            other => Err(Error::InvalidArgument(format!("unknown deselection method '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentReduction<T> {
    pub parameter: usize,
    pub parameter_name: String,
    pub component: usize,
    pub name: String,
    pub reduction: T,
    pub share: T,
    pub kept: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeselectionReport<T> {
    pub method: DeselectionMethod,
    pub tau: f64,
    /// `r[0] - r[m_stop]`
    pub total_reduction: T,
    pub threshold: T,
    /// Set when the total reduction is not positive; every selected component is then dropped.
    pub nonpositive_total: bool,
    /// Every selected component, ordered by (parameter, component).
    pub components: Vec<ComponentReduction<T>>,
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Default)]
struct Accumulator<T> {
    sum: T,
    carry: T,
}

impl<T: Scalar> Accumulator<T> {
    fn add(&mut self, v: T) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry = self.carry + ((self.sum - t) + v);
        } else {
            self.carry = self.carry + ((v - t) + self.sum);
        }
        self.sum = t;
    }

    fn value(&self) -> T {
        self.sum + self.carry
    }
}

/// Risk reduction credited to each selected `(parameter, column)` pair.
pub fn attributable_risk_reduction<T: Scalar>(fit: &BoostFit<T>) -> BTreeMap<(usize, usize), T> {
    let mut acc: BTreeMap<(usize, usize), Accumulator<T>> = BTreeMap::new();
    let mut previous = fit.initial_risk;
    for r in &fit.trace {
        acc.entry((r.parameter, r.component))
            .or_insert(Accumulator { sum: T::zero(), carry: T::zero() })
            .add(previous - r.risk);
        previous = r.risk;
    }
    acc.into_iter().map(|(k, a)| (k, a.value())).collect()
}

pub fn deselect<T: Scalar>(fit: &BoostFit<T>, tau: f64, method: DeselectionMethod) -> Result<DeselectionReport<T>> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("tau must lie in (0, 1), got {tau}")));
    }
    let reductions = attributable_risk_reduction(fit);
    let total = fit.initial_risk - fit.final_risk();
    let threshold = T::of(tau) * total;
    let nonpositive_total = !(total > T::zero());

    let dropped: BTreeSet<(usize, usize)> = if nonpositive_total {
        reductions.keys().copied().collect()
    } else {
        match method {
            DeselectionMethod::Attributable => {
                reductions.iter().filter(|(_, &r)| r < threshold).map(|(&k, _)| k).collect()
            }
            DeselectionMethod::Cumulative => {
                let mut order: Vec<((usize, usize), T)> = reductions.iter().map(|(&k, &r)| (k, r)).collect();
                // ascending reduction; BTreeMap order already breaks ties by (parameter, component)
                order.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
                let mut running = T::zero();
                order
                    .into_iter()
                    .take_while(|&(_, r)| {
                        running = running + r;
                        running < threshold
                    })
                    .map(|(k, _)| k)
                    .collect()
            }
        }
    };

    let param_names = fit.family().parameter_names();
    let components = reductions
        .iter()
        .map(|(&(k, j), &r)| ComponentReduction {
            parameter: k,
            parameter_name: param_names[k].to_string(),
            component: j,
            name: fit.column_names.get(j).cloned().unwrap_or_else(|| format!("X{}", j + 1)),
            reduction: r,
            share: if nonpositive_total { T::zero() } else { r / total },
            kept: !dropped.contains(&(k, j)),
        })
        .collect();
    Ok(DeselectionReport { method, tau, total_reduction: total, threshold, nonpositive_total, components })
}

impl<T: Scalar> DeselectionReport<T> {
    pub fn kept(&self) -> BTreeSet<(usize, usize)> {
        self.components.iter().filter(|c| c.kept).map(|c| (c.parameter, c.component)).collect()
    }

    pub fn dropped(&self) -> BTreeSet<(usize, usize)> {
        self.components.iter().filter(|c| !c.kept).map(|c| (c.parameter, c.component)).collect()
    }

    /// Columns: parameter, component, R, share, kept.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["parameter", "component", "R", "share", "kept"])?;
        for c in &self.components {
            w.write_record([
                c.parameter_name.clone(),
                c.name.clone(),
                c.reduction.to_string(),
                c.share.to_string(),
                c.kept.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Limits each parameter's candidates to the kept columns of that parameter.
pub fn restrict_config(config: &BoostConfig, kept: &BTreeSet<(usize, usize)>) -> BoostConfig {
    let learners = config
        .learners
        .iter()
        .enumerate()
        .map(|(k, set)| {
            let cols: BTreeSet<usize> = kept.iter().filter(|&&(kk, _)| kk == k).map(|&(_, j)| j).collect();
            set.restrict(&cols)
        })
        .collect();
    BoostConfig { learners, ..config.clone() }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSettings {
    pub folds: usize,
    pub m_max: usize,
    pub seed: u64,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self { folds: 10, m_max: 1000, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitialStopping {
    Fixed(usize),
    CrossValidated(CvSettings),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeselectionOptions {
    pub tau: f64,
    pub method: DeselectionMethod,
    /// Re-tune the final model's stopping iteration by CV instead of reusing the initial one.
    pub retune: bool,
    pub stopping: InitialStopping,
}

impl Default for DeselectionOptions {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            method: DeselectionMethod::Attributable,
            retune: false,
            stopping: InitialStopping::CrossValidated(CvSettings::default()),
        }
    }
}

pub struct DeselectionOutcome<T> {
    pub initial: BoostFit<T>,
    pub report: DeselectionReport<T>,
    pub final_fit: BoostFit<T>,
    pub initial_curve: Option<CvCurve<T>>,
    pub final_curve: Option<CvCurve<T>>,
    /// Set when no component survived and the final model is the offset alone.
    pub empty_model: bool,
}

/// Initial fit, deselection, and refit on the surviving components.
pub fn deselect_boost<T: Scalar>(
    data: &Dataset<T>,
    config: &BoostConfig,
    options: &DeselectionOptions,
) -> Result<DeselectionOutcome<T>> {
    let (m_stop, initial_curve) = match options.stopping {
        InitialStopping::Fixed(m) => (m, None),
        InitialStopping::CrossValidated(cv) => {
            let curve = cv_curve(data, config, cv.folds, cv.m_max, cv.seed)?;
            (mstop_opt(&curve), Some(curve))
        }
    };
    let initial = fit(data, &config.clone().with_m_stop(m_stop))?;
    let report = deselect(&initial, options.tau, options.method)?;
    let kept = report.kept();
    let restricted = restrict_config(config, &kept);
    let empty_model = kept.is_empty();

    let (final_m, final_curve) = if empty_model {
        (0, None)
    } else if options.retune {
        let cv = match options.stopping {
            InitialStopping::CrossValidated(cv) => cv,
            InitialStopping::Fixed(m) => CvSettings { m_max: m.max(1), ..CvSettings::default() },
        };
        let curve = cv_curve(data, &restricted, cv.folds, cv.m_max, cv.seed)?;
        (mstop_opt(&curve), Some(curve))
    } else {
        (m_stop, None)
    };
    let final_fit = fit(data, &restricted.with_m_stop(final_m))?;
    Ok(DeselectionOutcome { initial, report, final_fit, initial_curve, final_curve, empty_model })
}

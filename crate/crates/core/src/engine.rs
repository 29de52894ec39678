//! Component-wise gradient boosting.
//!
//! Single-parameter families update the one additive predictor with the
//! base-learner that best fits the negative gradient. Multi-parameter families
//! use the non-cyclical scheme: the best learner is found per parameter, each
//! candidate step is applied tentatively, and only the step with the lowest
//! resulting empirical risk is committed.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselearners::{BaseLearnerSet, CandidateFit, Learner, Target};
use crate::families::{Link, PredictorState};
use crate::{Dataset, Error, Family, Result, Scalar};

pub const SCHEMA_VERSION: u32 = 1;

/// Predictors beyond this magnitude overflow `exp` in the non-identity links.
const ETA_LIMIT: f64 = 700.0;

/// Candidate fitting runs on the rayon pool above this many `n × learners` cells.
const PARALLEL_CELLS: usize = 40_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub family: Family,
    pub m_stop: usize,
    /// Step size ν.
    pub nu: f64,
    /// One candidate set per distribution parameter.
    pub learners: Vec<BaseLearnerSet>,
    pub seed: u64,
}

impl BoostConfig {
    pub fn new(family: Family, learners: Vec<BaseLearnerSet>) -> Self {
        Self { family, m_stop: 100, nu: 0.1, learners, seed: 0 }
    }

    /// The same candidate set for every parameter of `family`.
    pub fn uniform(family: Family, set: BaseLearnerSet) -> Self {
        Self::new(family, vec![set; family.n_params()])
    }

    pub fn linear(family: Family, p: usize) -> Self {
        Self::uniform(family, BaseLearnerSet::linear(p))
    }

    pub fn with_m_stop(mut self, m_stop: usize) -> Self {
        self.m_stop = m_stop;
        self
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate<T: Scalar>(&self, data: &Dataset<T>) -> Result<()> {
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::InvalidArgument(format!("step size {} must lie in (0, 1]", self.nu)));
        }
        if self.learners.len() != self.family.n_params() {
            return Err(Error::InvalidArgument(format!(
                "{} needs {} learner sets, got {}",
                self.family.name(),
                self.family.n_params(),
                self.learners.len()
            )));
        }
        for set in &self.learners {
            if let Some(spec) = set.iter().find(|s| s.column >= data.p()) {
                return Err(Error::InvalidArgument(format!(
                    "learner on column {} but the data has {} columns",
                    spec.column,
                    data.p()
                )));
            }
        }
        if self.m_stop > 0 && self.learners.iter().all(BaseLearnerSet::is_empty) {
            return Err(Error::InvalidArgument("no candidate base-learners".into()));
        }
        self.family.check_response(data.response())
    }
}

/// One committed update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord<T> {
    /// 1-based iteration number.
    pub iteration: usize,
    /// 0-based distribution parameter.
    pub parameter: usize,
    /// Design column of the selected learner.
    pub component: usize,
    /// Index into the parameter's learner list.
    pub learner: usize,
    /// Empirical risk after the update.
    pub risk: T,
    /// ν-scaled coefficient increment.
    pub update: Vec<T>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoostFit<T> {
    pub schema_version: u32,
    pub config: BoostConfig,
    pub column_names: Vec<String>,
    pub offsets: Vec<T>,
    pub learners: Vec<Vec<Learner<T>>>,
    pub initial_risk: T,
    pub trace: Vec<SelectionRecord<T>>,
}

/// Predictions on the link and on the parameter scale, one vector per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<T> {
    pub link: Vec<Vec<T>>,
    pub response: Vec<Vec<T>>,
}

/// Per-iteration learner summaries: slopes for linear learners, coefficient
/// norms otherwise. Row `m` holds the state after `m` iterations.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientPaths<T> {
    pub components: Vec<(usize, usize)>,
    pub rows: Vec<Vec<T>>,
}

pub struct BoostOutcome<T> {
    pub fit: BoostFit<T>,
    /// Training predictors after the last committed update.
    pub state: PredictorState<T>,
    /// Summed validation risk after each iteration, starting at iteration 0.
    pub validation_risk: Option<Vec<T>>,
    pub stopped_early: bool,
}

/// Driver for one boosting run.
pub struct Booster<'a, T> {
    data: &'a Dataset<T>,
    config: &'a BoostConfig,
    validation: Option<&'a Dataset<T>>,
}

impl<'a, T: Scalar> Booster<'a, T> {
    pub fn new(data: &'a Dataset<T>, config: &'a BoostConfig) -> Self {
        Self { data, config, validation: None }
    }

    pub fn with_validation(mut self, validation: &'a Dataset<T>) -> Self {
        self.validation = Some(validation);
        self
    }

    pub fn run(self) -> Result<BoostOutcome<T>> {
        self.run_until(|_| false)
    }

    /// Runs up to `m_stop` iterations, stopping right after the first record
    /// for which `stop` returns true.
    pub fn run_until(self, mut stop: impl FnMut(&SelectionRecord<T>) -> bool) -> Result<BoostOutcome<T>> {
        let mut run = Run::start(self.data, self.config)?;
        let mut tracker = match self.validation {
            Some(v) => Some(ValidationTracker::start(v, &run)?),
            None => None,
        };
        let mut stopped_early = false;
        for m in 1..=self.config.m_stop {
            let record = run.step(m)?;
            if let Some(t) = tracker.as_mut() {
                t.apply(&run.learners, &record);
            }
            let halt = stop(&record);
            run.trace.push(record);
            if halt {
                stopped_early = true;
                break;
            }
        }
        let validation_risk = tracker.map(|t| t.risks);
        let Run { family, learners, state, initial_risk, trace, offsets, .. } = run;
        let mut config = self.config.clone();
        config.m_stop = trace.len();
        let fit = BoostFit {
            schema_version: SCHEMA_VERSION,
            config,
            column_names: self.data.names().to_vec(),
            offsets,
            learners,
            initial_risk,
            trace,
        };
        debug_assert_eq!(fit.config.family, family);
        Ok(BoostOutcome { fit, state, validation_risk, stopped_early })
    }
}

/// Component-wise boosting for single-parameter families.
pub fn boost<T: Scalar>(data: &Dataset<T>, config: &BoostConfig) -> Result<BoostFit<T>> {
    if config.family.n_params() != 1 {
        return Err(Error::InvalidArgument(format!("{} has several parameters; use boost_lss", config.family.name())));
    }
    Ok(Booster::new(data, config).run()?.fit)
}

/// Non-cyclical boosting for multi-parameter families.
pub fn boost_lss<T: Scalar>(data: &Dataset<T>, config: &BoostConfig) -> Result<BoostFit<T>> {
    if config.family.n_params() < 2 {
        return Err(Error::InvalidArgument(format!("{} has a single parameter; use boost", config.family.name())));
    }
    Ok(Booster::new(data, config).run()?.fit)
}

/// Dispatches to [`boost`] or [`boost_lss`] by the family's parameter count.
pub fn fit<T: Scalar>(data: &Dataset<T>, config: &BoostConfig) -> Result<BoostFit<T>> {
    Ok(Booster::new(data, config).run()?.fit)
}

struct Run<'a, T> {
    data: &'a Dataset<T>,
    family: Family,
    nu: T,
    offsets: Vec<T>,
    learners: Vec<Vec<Learner<T>>>,
    state: PredictorState<T>,
    risk: T,
    initial_risk: T,
    trace: Vec<SelectionRecord<T>>,
    gradient: Vec<T>,
}

struct Candidate<T> {
    parameter: usize,
    learner: usize,
    update: Vec<T>,
    eta: Vec<T>,
    risk: T,
}

impl<'a, T: Scalar> Run<'a, T> {
    fn start(data: &'a Dataset<T>, config: &BoostConfig) -> Result<Self> {
        config.validate(data)?;
        let family = config.family;
        let offsets = family.offset(data.response())?;
        let learners = config
            .learners
            .iter()
            .map(|set| set.iter().map(|spec| Learner::prepare(spec, data.column(spec.column))).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        let state = PredictorState::constant(&offsets, data.n());
        let risk = family.risk_unchecked(data.response(), &state.slices(), None);
        if !risk.is_finite() {
            return Err(Error::Numerical { iteration: 0, reason: format!("offset risk is {risk}") });
        }
        Ok(Self {
            data,
            family,
            nu: T::of(config.nu),
            offsets,
            learners,
            state,
            risk,
            initial_risk: risk,
            trace: Vec::with_capacity(config.m_stop),
            gradient: vec![T::zero(); data.n()],
        })
    }

    fn best_learner(&mut self, k: usize) -> Result<Option<(usize, CandidateFit<T>)>> {
        let learners = &self.learners[k];
        if learners.is_empty() {
            return Ok(None);
        }
        self.family.negative_gradient_into(self.data.response(), &self.state.slices(), k, &mut self.gradient);
        best_fit(learners, self.data, &self.gradient).map(Some)
    }

    fn tentative(&self, k: usize, learner: usize, fit: CandidateFit<T>) -> Option<Candidate<T>> {
        let update: Vec<T> = fit.coefs.iter().map(|&c| c * self.nu).collect();
        let l = &self.learners[k][learner];
        let mut eta = self.state.eta[k].clone();
        l.add_fitted(self.data.column(l.column()), &update, T::one(), &mut eta);
        if !within_guard(self.family.links()[k], &eta) {
            return None;
        }
        let mut slices = self.state.slices();
        slices[k] = &eta;
        let risk = self.family.risk_unchecked(self.data.response(), &slices, None);
        risk.is_finite().then_some(Candidate { parameter: k, learner, update, eta, risk })
    }

    fn step(&mut self, m: usize) -> Result<SelectionRecord<T>> {
        let mut best: Option<Candidate<T>> = None;
        for k in 0..self.family.n_params() {
            let Some((idx, fit)) = self.best_learner(k)? else { continue };
            match self.tentative(k, idx, fit) {
                Some(c) if best.as_ref().is_none_or(|b| c.risk < b.risk) => best = Some(c),
                Some(_) => {}
                None if self.family.n_params() == 1 => {
                    return Err(Error::Numerical {
                        iteration: m,
                        reason: "update drives the predictor out of the representable range".into(),
                    })
                }
                None => {}
            }
        }
        let c = best.ok_or_else(|| Error::Numerical {
            iteration: m,
            reason: "no candidate update yields a finite risk".into(),
        })?;
        self.state.eta[c.parameter] = c.eta;
        self.risk = c.risk;
        Ok(SelectionRecord {
            iteration: m,
            parameter: c.parameter,
            component: self.learners[c.parameter][c.learner].column(),
            learner: c.learner,
            risk: c.risk,
            update: c.update,
        })
    }
}

/// Predictors under a non-identity link must stay within `±ETA_LIMIT`.
fn within_guard<T: Scalar>(link: Link, eta: &[T]) -> bool {
    link.is_identity() || eta.iter().all(|v| v.abs() <= T::of(ETA_LIMIT))
}

/// Fits every learner to `u`; the lowest RSS wins, ties to the lowest column.
pub(crate) fn best_fit<T: Scalar>(
    learners: &[Learner<T>],
    data: &Dataset<T>,
    u: &[T],
) -> Result<(usize, CandidateFit<T>)> {
    let target = Target::new(u);
    let fit_one = |l: &Learner<T>| l.fit(data.column(l.column()), &target);
    let fits: Vec<CandidateFit<T>> = if learners.len() * u.len() >= PARALLEL_CELLS {
        learners.par_iter().map(fit_one).collect::<Result<_>>()?
    } else {
        learners.iter().map(fit_one).collect::<Result<_>>()?
    };
    let mut best = 0;
    for (i, f) in fits.iter().enumerate().skip(1) {
        if f.rss < fits[best].rss {
            best = i;
        }
    }
    let fit = fits.into_iter().nth(best).expect("nonempty learner set");
    Ok((best, fit))
}

struct ValidationTracker<'a, T> {
    data: &'a Dataset<T>,
    family: Family,
    state: PredictorState<T>,
    risks: Vec<T>,
}

impl<'a, T: Scalar> ValidationTracker<'a, T> {
    fn start(data: &'a Dataset<T>, run: &Run<'_, T>) -> Result<Self> {
        if data.p() != run.data.p() {
            return Err(Error::LengthMismatch { expected: run.data.p(), actual: data.p() });
        }
        run.family.check_response(data.response())?;
        let state = PredictorState::constant(&run.offsets, data.n());
        let risk = run.family.risk_unchecked(data.response(), &state.slices(), None);
        Ok(Self { data, family: run.family, state, risks: vec![risk] })
    }

    fn apply(&mut self, learners: &[Vec<Learner<T>>], record: &SelectionRecord<T>) {
        let l = &learners[record.parameter][record.learner];
        l.add_prediction(self.data.column(l.column()), &record.update, T::one(), &mut self.state.eta[record.parameter]);
        let risk = self.family.risk_unchecked(self.data.response(), &self.state.slices(), None);
        self.risks.push(risk);
    }
}

impl<T: Scalar> BoostFit<T> {
    pub fn family(&self) -> Family {
        self.config.family
    }

    pub fn m_stop(&self) -> usize {
        self.trace.len()
    }

    /// `r[0], …, r[m_stop]`
    pub fn risk_path(&self) -> Vec<T> {
        std::iter::once(self.initial_risk).chain(self.trace.iter().map(|r| r.risk)).collect()
    }

    pub fn final_risk(&self) -> T {
        self.trace.last().map_or(self.initial_risk, |r| r.risk)
    }

    fn check_iteration(&self, at: usize) -> Result<()> {
        if at > self.m_stop() {
            return Err(Error::InvalidArgument(format!("iteration {at} exceeds m_stop {}", self.m_stop())));
        }
        Ok(())
    }

    /// Accumulated coefficients per parameter and learner after `at` iterations.
    pub fn coefficients_at(&self, at: usize) -> Result<Vec<Vec<Vec<T>>>> {
        self.check_iteration(at)?;
        let mut acc: Vec<Vec<Vec<T>>> =
            self.learners.iter().map(|ls| ls.iter().map(|l| vec![T::zero(); l.n_coefs()]).collect()).collect();
        for r in &self.trace[..at] {
            for (c, &u) in acc[r.parameter][r.learner].iter_mut().zip(&r.update) {
                *c = *c + u;
            }
        }
        Ok(acc)
    }

    /// `(parameter, column)` pairs selected at least once in the first `at` iterations.
    pub fn selected_at(&self, at: usize) -> BTreeSet<(usize, usize)> {
        self.trace[..at.min(self.m_stop())].iter().map(|r| (r.parameter, r.component)).collect()
    }

    pub fn selected(&self) -> BTreeSet<(usize, usize)> {
        self.selected_at(self.m_stop())
    }

    pub fn selected_columns(&self, parameter: usize) -> BTreeSet<usize> {
        self.selected().into_iter().filter(|&(k, _)| k == parameter).map(|(_, j)| j).collect()
    }

    /// Global intercept per parameter: offset plus the linear learners' intercepts.
    pub fn intercepts(&self, at: usize) -> Result<Vec<T>> {
        let acc = self.coefficients_at(at)?;
        Ok(self
            .learners
            .iter()
            .zip(&acc)
            .zip(&self.offsets)
            .map(|((ls, cs), &o)| {
                ls.iter().zip(cs).filter(|(l, _)| matches!(l, Learner::Linear(_))).fold(o, |s, (_, c)| s + c[0])
            })
            .collect())
    }

    /// The first `m` iterations as a fit of their own.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        self.check_iteration(m)?;
        let mut out = self.clone();
        out.trace.truncate(m);
        out.config.m_stop = m;
        Ok(out)
    }

    pub fn predict(&self, columns: &[Vec<T>], at_iteration: Option<usize>) -> Result<Prediction<T>> {
        if columns.len() != self.column_names.len() {
            return Err(Error::InvalidArgument(format!(
                "model was fitted on {} columns, got {}",
                self.column_names.len(),
                columns.len()
            )));
        }
        let n = columns.first().map_or(0, Vec::len);
        if let Some(c) = columns.iter().find(|c| c.len() != n) {
            return Err(Error::LengthMismatch { expected: n, actual: c.len() });
        }
        let at = at_iteration.unwrap_or(self.m_stop());
        let acc = self.coefficients_at(at)?;
        let mut link: Vec<Vec<T>> = self.offsets.iter().map(|&o| vec![o; n]).collect();
        for (k, (ls, cs)) in self.learners.iter().zip(&acc).enumerate() {
            for (l, c) in ls.iter().zip(cs) {
                if c.iter().any(|&v| v != T::zero()) {
                    l.add_prediction(&columns[l.column()], c, T::one(), &mut link[k]);
                }
            }
        }
        let response = self.family().response_scale(&link);
        Ok(Prediction { link, response })
    }

    pub fn predict_dataset(&self, data: &Dataset<T>, at_iteration: Option<usize>) -> Result<Prediction<T>> {
        self.predict(data.columns(), at_iteration)
    }

    pub fn coefficient_paths(&self) -> CoefficientPaths<T> {
        let components: Vec<(usize, usize)> =
            self.learners.iter().enumerate().flat_map(|(k, ls)| ls.iter().map(move |l| (k, l.column()))).collect();
        let mut offsets = Vec::with_capacity(self.learners.len());
        let mut total = 0;
        for ls in &self.learners {
            offsets.push(total);
            total += ls.len();
        }
        let mut acc: Vec<Vec<Vec<T>>> =
            self.learners.iter().map(|ls| ls.iter().map(|l| vec![T::zero(); l.n_coefs()]).collect()).collect();
        let mut row = vec![T::zero(); total];
        let mut rows = Vec::with_capacity(self.m_stop() + 1);
        rows.push(row.clone());
        for r in &self.trace {
            let c = &mut acc[r.parameter][r.learner];
            for (a, &u) in c.iter_mut().zip(&r.update) {
                *a = *a + u;
            }
            row[offsets[r.parameter] + r.learner] = self.learners[r.parameter][r.learner].summary(c);
            rows.push(row.clone());
        }
        CoefficientPaths { components, rows }
    }

    /// Rebuilds cached basis evaluations on the training data after deserialization.
    pub fn bind(&mut self, data: &Dataset<T>) -> Result<()> {
        for ls in &mut self.learners {
            for l in ls {
                let col = l.column();
                if col >= data.p() {
                    return Err(Error::InvalidArgument(format!("learner column {col} missing from data")));
                }
                l.bind(data.column(col))?;
            }
        }
        Ok(())
    }

    /// Re-runs the recorded trace on the training data: every selection is
    /// re-derived from scratch and every recorded update is re-applied.
    pub fn replay(&self, data: &Dataset<T>) -> Result<Replay<T>> {
        let mut model = self.clone();
        model.bind(data)?;
        let family = self.family();
        let mut state = PredictorState::constant(&self.offsets, data.n());
        let y = data.response();
        let risk0 = family.risk_unchecked(y, &state.slices(), None);
        let rel = |a: T, b: T| (a - b).abs() / T::one().max(b.abs());
        let mut max_risk_deviation = rel(risk0, self.initial_risk);
        let mut selection_mismatches = Vec::new();
        let nu = T::of(self.config.nu);
        let mut gradient = vec![T::zero(); data.n()];
        for r in &self.trace {
            // re-derive the selection
            let mut best: Option<(T, usize, usize)> = None;
            for k in 0..family.n_params() {
                let ls = &model.learners[k];
                if ls.is_empty() {
                    continue;
                }
                family.negative_gradient_into(y, &state.slices(), k, &mut gradient);
                let (idx, fit) = best_fit(ls, data, &gradient)?;
                let update: Vec<T> = fit.coefs.iter().map(|&c| c * nu).collect();
                let mut eta = state.eta[k].clone();
                ls[idx].add_fitted(data.column(ls[idx].column()), &update, T::one(), &mut eta);
                let mut slices = state.slices();
                slices[k] = &eta;
                let risk = family.risk_unchecked(y, &slices, None);
                if risk.is_finite() && within_guard(family.links()[k], &eta) && best.is_none_or(|b| risk < b.0) {
                    best = Some((risk, k, idx));
                }
            }
            if best.map(|b| (b.1, b.2)) != Some((r.parameter, r.learner)) {
                selection_mismatches.push(r.iteration);
            }
            let l = &model.learners[r.parameter][r.learner];
            l.add_fitted(data.column(l.column()), &r.update, T::one(), &mut state.eta[r.parameter]);
            let risk = family.risk_unchecked(y, &state.slices(), None);
            max_risk_deviation = max_risk_deviation.max(rel(risk, r.risk));
        }
        Ok(Replay { max_risk_deviation, selection_mismatches, state })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let fit: Self = serde_json::from_str(s)?;
        if fit.schema_version != SCHEMA_VERSION {
            return Err(Error::Data(format!("unsupported model schema version {}", fit.schema_version)));
        }
        Ok(fit)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Clone, Debug)]
pub struct Replay<T> {
    /// Largest relative gap between recorded and replayed risks.
    pub max_risk_deviation: T,
    /// Iterations whose re-derived selection differs from the record.
    pub selection_mismatches: Vec<usize>,
    pub state: PredictorState<T>,
}

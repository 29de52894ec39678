use std::fs::File;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use deselboost::deselection::{deselect_boost, CvSettings, DeselectionOptions, InitialStopping, DEFAULT_TAU};
use deselboost::io::{read_dataset_file, read_records, write_coefficient_paths, write_records, write_risk_path};
use deselboost::simulation::study::{long_format, summarize};
use deselboost::simulation::{run_study, CovarianceKind, ResultRow, Scenario, ScenarioSpec, StudyConfig, StudyMethod};
use deselboost::tuning::{cv_curve, default_robustc_c, mstop_opt, mstop_ose, mstop_probing, mstop_robustc};
use deselboost::{fit, BoostConfig, BoostFit64, DeselectionMethod, Family, LearnerKind, PSplineOptions};

use crate::config;
use crate::output::Artifacts;
use crate::Failure;

const RESOLVED_CONFIG: &str = "resolved_config.txt";

#[derive(Parser)]
#[command(name = "deselboost", version, about = "Component-wise boosting with deselection of base-learners")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Fit a boosting model, stopped at --mstop or by cross-validation.
    Fit(FitArgs),
    /// Choose the stopping iteration.
    Tune(TuneArgs),
    /// Fit, deselect weak base-learners and refit.
    Deselect(DeselectArgs),
    /// Run a simulation study.
    Simulate(SimulateArgs),
    /// Aggregate a results table.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    L2,
    Logistic,
    GaussianLss,
    BetaLss,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::L2 => Family::L2,
            FamilyArg::Logistic => Family::Logistic,
            FamilyArg::GaussianLss => Family::GaussianLss,
            FamilyArg::BetaLss => Family::BetaLss,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerArg {
    Linear,
    Pspline,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleArg {
    Opt,
    Ose,
    Robustc,
    Probing,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Attributable,
    Cumulative,
}

/// Options shared by every subcommand.
#[derive(Args, Debug, Serialize)]
pub struct RunArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for cross-validation and simulation; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// key=value file with default option values.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub response: String,
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    /// Base-learner for numeric covariates.
    #[arg(long, value_enum, default_value_t = LearnerArg::Linear)]
    pub learner: LearnerArg,
    /// Columns to treat as categorical (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
    #[arg(long, default_value_t = 0.1)]
    pub nu: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct CvArgs {
    /// Number of cross-validation folds.
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Largest iteration evaluated by cross-validation.
    #[arg(long, default_value_t = 1000)]
    pub mmax: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Fixed number of iterations; cross-validation is used when absent.
    #[arg(long)]
    pub mstop: Option<usize>,
    /// Folds for choosing the stopping iteration.
    #[arg(long, default_value_t = 10)]
    pub cv: usize,
    #[arg(long, default_value_t = 1000)]
    pub mmax: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct TuneArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = RuleArg::Opt)]
    pub rule: RuleArg,
    /// RobustC factor; defaults to 1.05 for continuous and 1.1 for binary responses.
    #[arg(long)]
    pub c: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub cv: CvArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct DeselectArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Attributable)]
    pub method: MethodArg,
    /// Re-tune the final model by cross-validation.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub retune: bool,
    /// Fixed initial stopping iteration; cross-validation is used when absent.
    #[arg(long)]
    pub mstop: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub cv: CvArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    /// Scenarios A, B, C or D (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub scenario: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub p: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub rho: Vec<f64>,
    /// toeplitz, block or block(size).
    #[arg(long, default_value = "toeplitz")]
    pub covariance: String,
    /// Signal-to-noise ratios, Scenario A only.
    #[arg(long, value_delimiter = ',')]
    pub snr: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub n_test: usize,
    #[arg(long, default_value_t = 100)]
    pub replications: usize,
    /// classical, deselect, deselect(tau), deselect-cumulative, ose, robustc, robustc(c), probing.
    #[arg(long, value_delimiter = ',', default_value = "classical,deselect")]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 0.1)]
    pub nu: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub cv: CvArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct ReportArgs {
    /// Results table written by `simulate`.
    #[arg(long)]
    pub results: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
}

impl Command {
    pub fn execute(self) -> Result<(), Failure> {
        let run = match &self {
            Command::Fit(a) => &a.run,
            Command::Tune(a) => &a.run,
            Command::Deselect(a) => &a.run,
            Command::Simulate(a) => &a.run,
            Command::Report(a) => &a.run,
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(run.threads)
            .build()
            .map_err(|e| Failure::Usage(format!("cannot start {} threads: {e}", run.threads)))?;
        let out = run.out.clone();
        let mut artifacts = Artifacts::default();
        let resolved = match &self {
            Command::Fit(a) => config::render(a),
            Command::Tune(a) => config::render(a),
            Command::Deselect(a) => config::render(a),
            Command::Simulate(a) => config::render(a),
            Command::Report(a) => config::render(a),
        };
        artifacts.add(RESOLVED_CONFIG, resolved.into_bytes());
        pool.install(|| match &self {
            Command::Fit(a) => cmd_fit(a, &mut artifacts),
            Command::Tune(a) => cmd_tune(a, &mut artifacts),
            Command::Deselect(a) => cmd_deselect(a, &mut artifacts),
            Command::Simulate(a) => cmd_simulate(a, &mut artifacts),
            Command::Report(a) => cmd_report(a, &mut artifacts),
        })?;
        artifacts.commit(&out)
    }
}

fn load(args: &DataArgs, seed: u64) -> Result<(deselboost::Dataset64, BoostConfig), Failure> {
    let csv = read_dataset_file(&args.data, &args.response, &args.categorical)?;
    let kind = match args.learner {
        LearnerArg::Linear => LearnerKind::Linear,
        LearnerArg::Pspline => LearnerKind::PSpline(PSplineOptions::default()),
    };
    let family = Family::from(args.family);
    let set = csv.learner_set(kind);
    let config = BoostConfig::new(family, vec![set; family.n_params()]).with_nu(args.nu).with_seed(seed);
    Ok((csv.dataset, config))
}

fn add_fit(artifacts: &mut Artifacts, name: &str, fit: &BoostFit64) -> Result<(), Failure> {
    artifacts.add(name, fit.to_json()?.into_bytes());
    Ok(())
}

fn cmd_fit(args: &FitArgs, artifacts: &mut Artifacts) -> Result<(), Failure> {
    let seed = args.run.seed;
    let (data, config) = load(&args.data, seed)?;
    let m_stop = match args.mstop {
        Some(m) => m,
        None => {
            let curve = cv_curve(&data, &config, args.cv, args.mmax, seed)?;
            artifacts.add_with("cv_curve.csv", |w| curve.write_csv(w))?;
            mstop_opt(&curve)
        }
    };
    let model = fit(&data, &config.with_m_stop(m_stop))?;
    add_fit(artifacts, "model.json", &model)?;
    artifacts.add_with("risk_path.csv", |w| write_risk_path(&model, w))?;
    artifacts.add_with("coef_paths.csv", |w| write_coefficient_paths(&model, w))
}

fn cmd_tune(args: &TuneArgs, artifacts: &mut Artifacts) -> Result<(), Failure> {
    let seed = args.run.seed;
    let (data, config) = load(&args.data, seed)?;
    if args.c.is_some() && !matches!(args.rule, RuleArg::Robustc) {
        return Err(Failure::Usage("--c applies to --rule robustc only".into()));
    }
    let choice = match args.rule {
        RuleArg::Probing => {
            let p = mstop_probing(&data, &config, seed)?;
            json!({ "rule": "probing", "mstop": p.m_stop, "capped": p.capped })
        }
        rule => {
            let curve = cv_curve(&data, &config, args.cv.folds, args.cv.mmax, seed)?;
            artifacts.add_with("cv_curve.csv", |w| curve.write_csv(w))?;
            let common = |name: &str, m: usize| json!({ "rule": name, "mstop": m, "folds": args.cv.folds, "mmax": args.cv.mmax });
            match rule {
                RuleArg::Opt => common("opt", mstop_opt(&curve)),
                RuleArg::Ose => common("ose", mstop_ose(&curve)),
                _ => {
                    let c = args.c.unwrap_or_else(|| default_robustc_c(config.family));
                    let mut v = common("robustc", mstop_robustc(&curve, c)?);
                    v["c"] = json!(c);
                    v
                }
            }
        }
    };
    let text = serde_json::to_string_pretty(&choice).expect("json value serializes");
    artifacts.add("mstop.json", text.into_bytes());
    Ok(())
}

fn cmd_deselect(args: &DeselectArgs, artifacts: &mut Artifacts) -> Result<(), Failure> {
    let seed = args.run.seed;
    let (data, config) = load(&args.data, seed)?;
    let options = DeselectionOptions {
        tau: args.tau,
        method: match args.method {
            MethodArg::Attributable => DeselectionMethod::Attributable,
            MethodArg::Cumulative => DeselectionMethod::Cumulative,
        },
        retune: args.retune,
        stopping: match args.mstop {
            Some(m) => InitialStopping::Fixed(m),
            None => InitialStopping::CrossValidated(CvSettings { folds: args.cv.folds, m_max: args.cv.mmax, seed }),
        },
    };
    let outcome = deselect_boost(&data, &config, &options)?;
    if outcome.empty_model {
        eprintln!("note: no base-learner passed the threshold; the final model is the offset alone");
    }
    add_fit(artifacts, "initial_model.json", &outcome.initial)?;
    artifacts.add_with("deselection_report.csv", |w| outcome.report.write_csv(w))?;
    artifacts.add("deselection_report.json", outcome.report.to_json()?.into_bytes());
    add_fit(artifacts, "final_model.json", &outcome.final_fit)?;
    if let Some(c) = &outcome.initial_curve {
        artifacts.add_with("initial_cv_curve.csv", |w| c.write_csv(w))?;
    }
    if let Some(c) = &outcome.final_curve {
        artifacts.add_with("final_cv_curve.csv", |w| c.write_csv(w))?;
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs, artifacts: &mut Artifacts) -> Result<(), Failure> {
    let covariance: CovarianceKind = args.covariance.parse()?;
    let scenarios = args.scenario.iter().map(|s| s.parse()).collect::<Result<Vec<Scenario>, _>>()?;
    let methods = args.methods.iter().map(|m| m.parse()).collect::<Result<Vec<StudyMethod>, _>>()?;
    let snrs: Vec<Option<f64>> =
        if args.snr.is_empty() { vec![None] } else { args.snr.iter().copied().map(Some).collect() };
    let mut specs = Vec::new();
    for &scenario in &scenarios {
        for &n in &args.n {
            for &p in &args.p {
                for &rho in &args.rho {
                    // the noise level only exists in Scenario A
                    let grid: &[Option<f64>] = if scenario == Scenario::A { &snrs } else { &[None] };
                    for &snr in grid {
                        let mut spec = ScenarioSpec::new(scenario, n, p, rho)
                            .with_covariance(covariance)
                            .with_n_test(args.n_test)
                            .with_seed(args.run.seed);
                        if let Some(s) = snr {
                            spec = spec.with_snr(s);
                        }
                        specs.push(spec);
                    }
                }
            }
        }
    }
    let mut study = StudyConfig::new(specs, methods, args.replications);
    study.seed = args.run.seed;
    study.folds = args.cv.folds;
    study.m_max = args.cv.mmax;
    study.nu = args.nu;
    let outcome = run_study(&study)?;
    artifacts.add_with("results.csv", |w| write_records(&outcome.rows, w))?;
    if !outcome.failures.is_empty() {
        eprintln!("warning: {} replication(s) failed; see failures.csv", outcome.failures.len());
        artifacts.add_with("failures.csv", |w| write_records(&outcome.failures, w))?;
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs, artifacts: &mut Artifacts) -> Result<(), Failure> {
    let file =
        File::open(&args.results).map_err(|e| Failure::Data(format!("cannot open {}: {e}", args.results.display())))?;
    let rows: Vec<ResultRow> = read_records(file)?;
    if rows.is_empty() {
        return Err(Failure::Data(format!("{} has no rows", args.results.display())));
    }
    artifacts.add_with("summary.csv", |w| write_records(&summarize(&rows), w))?;
    artifacts.add_with("long.csv", |w| write_records(&long_format(&rows), w))
}

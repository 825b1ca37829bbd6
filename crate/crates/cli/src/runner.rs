//! Experiment execution: build or ingest scores, generate the
//! artificial-prevalence suites, run every requested method on every case,
//! and persist per-case records plus the summarized report. Fully
//! deterministic given the master seed (timing values aside).

use std::collections::HashSet;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use pq_core::baselines::{acc, bayesian_cc, cc, emq, hdy, pacc, pcc, EmqConfig};
use pq_core::bootstrap::bootstrap_interval;
use pq_core::classifier::{
    fit_platt, predict_proba, train_logistic, CalibrationMap, LogisticModel,
};
use pq_core::data::{LabeledPool, UnlabeledPool};
use pq_core::interval::Method;
use pq_core::metrics::{summarize, CaseResult, EvalReport};
use pq_core::pq::{pq_quantify, PQConfig};
use pq_core::protocol::{
    app_suite, gen_gaussian_labeled, ingest_scores, GaussianDesign, IngestSchema, IngestedPool,
    SuiteSource, TestCase,
};
use pq_core::seed::derive_seed;

use crate::config::{DatasetConfig, ExperimentConfig};
use crate::report::{load_results, results_file_name, write_results, write_summary, SummaryPaths};
use crate::CliError;

/// Seed streams hanging off the master seed.
mod stream {
    pub const TRAIN: u64 = 1;
    pub const VALIDATION: u64 = 2;
    pub const SUMMARY: u64 = 3;
    pub const SUITE_BASE: u64 = 100;
}

const SLOW_CASE_SECONDS: f64 = 60.0;

/// One quantifier series: a method plus the bin count it runs with, and the
/// label it reports under.
#[derive(Debug, Clone)]
struct Series {
    method: Method,
    n_bins: usize,
    label: String,
}

pub struct RunOutcome {
    pub results_path: PathBuf,
    pub summary: SummaryPaths,
    pub report: EvalReport,
    pub cases_run: usize,
    pub cases_skipped: usize,
    pub cases_aborted: usize,
}

enum DataSource {
    Gaussian {
        design: GaussianDesign,
        model: LogisticModel,
    },
    Pool(LabeledPool),
}

impl DataSource {
    fn as_suite_source(&self) -> SuiteSource<'_> {
        match self {
            DataSource::Gaussian { design, model } => SuiteSource::Gaussian {
                design: *design,
                model,
            },
            DataSource::Pool(pool) => SuiteSource::Pool(pool),
        }
    }
}

struct Prepared {
    validation: LabeledPool,
    source: DataSource,
    /// Calibration for EMQ, fit once on the original validation pool.
    emq: Option<(CalibrationMap, LabeledPool)>,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    config.validate()?;
    let methods = config.parsed_methods()?;
    let series = build_series(&methods, &config.n_bins);
    let prepared = prepare_data(config, &methods)?;

    std::fs::create_dir_all(&config.out_dir)
        .map_err(|e| CliError::Config(format!("cannot create output dir: {e}")))?;
    let results_path = config.out_dir.join(results_file_name(config.format));

    // append-only persistence: already-recorded (case_id, method) pairs are
    // skipped so interrupted experiments resume
    let mut existing: Vec<CaseResult> = Vec::new();
    let mut done: HashSet<(String, String)> = HashSet::new();
    if results_path.exists() {
        existing = load_results(&results_path)?;
        for r in &existing {
            done.insert((r.case_id.clone(), r.method.clone()));
        }
    }

    // one suite per test size, shared by every series
    let mut suites: Vec<(usize, Vec<TestCase>)> = Vec::new();
    for (size_index, &size) in config.test_sizes.iter().enumerate() {
        let suite_seed = derive_seed(config.seed, stream::SUITE_BASE + size_index as u64);
        let cases = app_suite(
            &prepared.source.as_suite_source(),
            size,
            config.replicates,
            suite_seed,
        )
        .map_err(|e| CliError::Data(e.to_string()))?;
        suites.push((size, cases));
    }

    struct Task<'a> {
        case: &'a TestCase,
        test_size: usize,
        series: &'a Series,
        series_index: u64,
    }

    let mut tasks = Vec::new();
    let mut skipped = 0usize;
    for (size, cases) in &suites {
        for case in cases {
            for (series_index, s) in series.iter().enumerate() {
                if done.contains(&(case.case_id.clone(), s.label.clone())) {
                    skipped += 1;
                    continue;
                }
                tasks.push(Task {
                    case,
                    test_size: *size,
                    series: s,
                    series_index: series_index as u64,
                });
            }
        }
    }

    let run_task = |task: &Task| -> Result<CaseResult, (String, String)> {
        let task_seed = derive_seed(task.case.seed, 1 + task.series_index);
        let start = Instant::now();
        let estimate = run_method(config, &prepared, task.series, task.case, task_seed)
            .map_err(|e| (task.case.case_id.clone(), e.to_string()))?;
        let wall_time_s = start.elapsed().as_secs_f64();
        if wall_time_s > SLOW_CASE_SECONDS {
            eprintln!(
                "warning: case {} ({}) took {wall_time_s:.1} s",
                task.case.case_id, task.series.label
            );
        }
        Ok(CaseResult {
            case_id: task.case.case_id.clone(),
            method: task.series.label.clone(),
            test_size: task.test_size,
            true_prevalence: task.case.true_prevalence,
            estimate,
            wall_time_s,
            seed: task_seed,
        })
    };

    let outcomes: Vec<Result<CaseResult, (String, String)>> = if config.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| CliError::Execution(e.to_string()))?;
        pool.install(|| tasks.par_iter().map(run_task).collect())
    } else {
        tasks.iter().map(run_task).collect()
    };

    let mut new_results = Vec::with_capacity(outcomes.len());
    let mut aborted = 0usize;
    for outcome in outcomes {
        match outcome {
            Ok(mut result) => {
                // posterior draws are not persisted
                result.estimate.draws = None;
                new_results.push(result);
            }
            Err((case_id, message)) => {
                aborted += 1;
                eprintln!("warning: case {case_id} aborted: {message}");
            }
        }
    }

    write_results(&results_path, &existing, &new_results, config.format)?;

    let mut all_results = existing;
    all_results.extend(new_results.iter().cloned());
    let report = summarize(
        &all_results,
        1000,
        derive_seed(config.seed, stream::SUMMARY),
    )
    .map_err(|e| CliError::Execution(e.to_string()))?;
    warn_missing_groups(&series, &config.test_sizes, &report);
    let summary = write_summary(&report, &config.out_dir, config.format, false)?;

    let total = tasks.len() + skipped;
    let outcome = RunOutcome {
        results_path,
        summary,
        report,
        cases_run: new_results.len(),
        cases_skipped: skipped,
        cases_aborted: aborted,
    };
    if aborted * 20 > total.max(1) {
        return Err(CliError::Execution(format!(
            "{aborted} of {total} cases aborted (over the 5% threshold)"
        )));
    }
    Ok(outcome)
}

fn warn_missing_groups(series: &[Series], sizes: &[usize], report: &EvalReport) {
    for s in series {
        for &size in sizes {
            let present = report
                .groups
                .iter()
                .any(|g| g.method == s.label && g.test_size == size);
            if !present {
                eprintln!(
                    "warning: no results for {} at test size {size}; omitted",
                    s.label
                );
            }
        }
    }
}

/// Bin-sensitive methods get one series per configured bin count (labelled
/// with the count when sweeping); the rest always run once.
fn build_series(methods: &[Method], n_bins: &[usize]) -> Vec<Series> {
    let sweeping = n_bins.len() > 1;
    let mut series = Vec::new();
    for &method in methods {
        let bin_sensitive = matches!(method, Method::Pq | Method::Hdy);
        if bin_sensitive && sweeping {
            for &bins in n_bins {
                series.push(Series {
                    method,
                    n_bins: bins,
                    label: format!("{}_{bins}", method.as_str()),
                });
            }
        } else {
            series.push(Series {
                method,
                n_bins: n_bins[0],
                label: method.as_str().to_string(),
            });
        }
    }
    series
}

fn prepare_data(config: &ExperimentConfig, methods: &[Method]) -> Result<Prepared, CliError> {
    let (validation, source) = match &config.dataset {
        DatasetConfig::Gaussian {
            mean_pos,
            train_size,
            train_prevalence,
            validation_size,
            validation_prevalence,
        } => {
            let design = GaussianDesign::new(*mean_pos);
            let train = gen_gaussian_labeled(
                &design,
                *train_size,
                *train_prevalence,
                derive_seed(config.seed, stream::TRAIN),
            )
            .map_err(|e| CliError::Data(e.to_string()))?;
            let features: Vec<Vec<f64>> = train.iter().map(|(x, _)| vec![*x]).collect();
            let labels: Vec<bool> = train.iter().map(|(_, y)| *y).collect();
            let model = train_logistic(&features, &labels, &config.classifier.to_config())
                .map_err(|e| CliError::Data(e.to_string()))?;

            let val = gen_gaussian_labeled(
                &design,
                *validation_size,
                *validation_prevalence,
                derive_seed(config.seed, stream::VALIDATION),
            )
            .map_err(|e| CliError::Data(e.to_string()))?;
            let mut scores = Vec::with_capacity(val.len());
            let mut val_labels = Vec::with_capacity(val.len());
            for (x, y) in &val {
                scores
                    .push(predict_proba(&model, &[*x]).map_err(|e| CliError::Data(e.to_string()))?);
                val_labels.push(*y);
            }
            let validation = LabeledPool::from_scores_labels(&scores, &val_labels)
                .map_err(|e| CliError::Data(e.to_string()))?;
            (validation, DataSource::Gaussian { design, model })
        }
        DatasetConfig::Scores {
            validation_path,
            pool_path,
            header,
        } => {
            let schema = IngestSchema {
                has_labels: true,
                header: *header,
            };
            let validation = match ingest_scores(validation_path, schema) {
                Ok(IngestedPool::Labeled(p)) => p,
                Ok(_) => unreachable!("schema requested labels"),
                Err(e) => {
                    return Err(CliError::Data(format!(
                        "{}: {e}",
                        validation_path.display()
                    )))
                }
            };
            let pool = match ingest_scores(pool_path, schema) {
                Ok(IngestedPool::Labeled(p)) => p,
                Ok(_) => unreachable!("schema requested labels"),
                Err(e) => return Err(CliError::Data(format!("{}: {e}", pool_path.display()))),
            };
            (validation, DataSource::Pool(pool))
        }
    };

    validation
        .require_two_class()
        .map_err(|e| CliError::Data(format!("validation pool: {e}")))?;

    // EMQ calibration is learned exactly once, on the original validation
    // pool; bootstrap resamples reuse the map.
    let emq = if methods.contains(&Method::Emq) {
        let scores: Vec<f64> = validation.scores().collect();
        let labels: Vec<bool> = validation
            .samples()
            .iter()
            .map(|s| s.label() == Some(true))
            .collect();
        let map =
            fit_platt(&scores, &labels).map_err(|e| CliError::Data(format!("calibration: {e}")))?;
        let calibrated = validation
            .map_scores(|s| map.apply(s))
            .map_err(|e| CliError::Data(e.to_string()))?;
        Some((map, calibrated))
    } else {
        None
    };

    Ok(Prepared {
        validation,
        source,
        emq,
    })
}

fn run_method(
    config: &ExperimentConfig,
    prepared: &Prepared,
    series: &Series,
    case: &TestCase,
    task_seed: u64,
) -> pq_core::Result<pq_core::EstimateWithInterval> {
    let validation = &prepared.validation;
    let test = &case.test;
    let mass = config.mass;
    match series.method {
        Method::Pq => {
            let pq_config = PQConfig {
                n_bins: series.n_bins,
                sampler: config.sampler.to_config(task_seed),
                mass,
            };
            pq_quantify(validation, test, &pq_config)
        }
        Method::BayesianCc => bayesian_cc(
            validation,
            test.scores(),
            &config.sampler.to_config(task_seed),
            mass,
        ),
        Method::Cc => bootstrap_interval(
            |_, scores| Ok(cc(scores, 0.5)),
            validation,
            test,
            &config.bootstrap.to_config(mass, task_seed),
            Method::Cc,
        ),
        Method::Acc => bootstrap_interval(
            |val, scores| acc(val, scores, 0.5),
            validation,
            test,
            &config.bootstrap.to_config(mass, task_seed),
            Method::Acc,
        ),
        Method::Pcc => bootstrap_interval(
            |_, scores| pcc(scores),
            validation,
            test,
            &config.bootstrap.to_config(mass, task_seed),
            Method::Pcc,
        ),
        Method::Pacc => bootstrap_interval(
            pacc,
            validation,
            test,
            &config.bootstrap.to_config(mass, task_seed),
            Method::Pacc,
        ),
        Method::Hdy => {
            let bins = series.n_bins;
            bootstrap_interval(
                move |val, scores| hdy(val, scores, bins),
                validation,
                test,
                &config.bootstrap.to_config(mass, task_seed),
                Method::Hdy,
            )
        }
        Method::Emq => {
            let (map, calibrated_validation) =
                prepared.emq.as_ref().expect("emq calibration prepared");
            let calibrated_test =
                UnlabeledPool::new(test.scores().iter().map(|&s| map.apply(s)).collect())?;
            bootstrap_interval(
                |val, scores| emq(val, scores, &EmqConfig::default()),
                calibrated_validation,
                &calibrated_test,
                &config.bootstrap.to_config(mass, task_seed),
                Method::Emq,
            )
        }
    }
}

/// `simulate` subcommand: generate Gaussian pools, train the classifier, and
/// write labeled score files for later runs.
pub struct SimulateArgs {
    pub mean_pos: f64,
    pub train_size: usize,
    pub train_prevalence: f64,
    pub validation_size: usize,
    pub validation_prevalence: f64,
    pub pool_size: usize,
    pub pool_prevalence: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

pub struct SimulateOutcome {
    pub validation_path: PathBuf,
    pub pool_path: PathBuf,
    pub pool_auc: f64,
}

pub fn simulate(args: &SimulateArgs) -> Result<SimulateOutcome, CliError> {
    let design = GaussianDesign::new(args.mean_pos);
    let train = gen_gaussian_labeled(
        &design,
        args.train_size,
        args.train_prevalence,
        derive_seed(args.seed, stream::TRAIN),
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    let features: Vec<Vec<f64>> = train.iter().map(|(x, _)| vec![*x]).collect();
    let labels: Vec<bool> = train.iter().map(|(_, y)| *y).collect();
    let model = train_logistic(
        &features,
        &labels,
        &pq_core::classifier::TrainConfig::default(),
    )
    .map_err(|e| CliError::Data(e.to_string()))?;

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Config(format!("cannot create output dir: {e}")))?;

    let score_file = |name: &str, n: usize, prevalence: f64, stream: u64| {
        let draws = gen_gaussian_labeled(&design, n, prevalence, derive_seed(args.seed, stream))
            .map_err(|e| CliError::Data(e.to_string()))?;
        let path = args.out_dir.join(name);
        let mut file = std::fs::File::create(&path)
            .map_err(|e| CliError::Data(format!("cannot write {name}: {e}")))?;
        let mut scored = Vec::with_capacity(n);
        for (x, y) in &draws {
            let s = predict_proba(&model, &[*x]).map_err(|e| CliError::Data(e.to_string()))?;
            writeln!(file, "{s},{}", *y as u8).map_err(|e| CliError::Data(e.to_string()))?;
            scored.push((s, *y));
        }
        Ok::<_, CliError>((path, scored))
    };

    let (validation_path, _) = score_file(
        "validation.csv",
        args.validation_size,
        args.validation_prevalence,
        stream::VALIDATION,
    )?;
    let (pool_path, pool_scored) = score_file("pool.csv", args.pool_size, args.pool_prevalence, 4)?;

    let scores: Vec<f64> = pool_scored.iter().map(|(s, _)| *s).collect();
    let labels: Vec<bool> = pool_scored.iter().map(|(_, y)| *y).collect();
    let pool_auc =
        pq_core::classifier::auc(&scores, &labels).map_err(|e| CliError::Data(e.to_string()))?;

    Ok(SimulateOutcome {
        validation_path,
        pool_path,
        pool_auc,
    })
}

/// `quantify` subcommand: one-shot estimate from a labeled validation score
/// file and an unlabeled test score file.
pub struct QuantifyArgs {
    pub validation_path: PathBuf,
    pub test_path: PathBuf,
    pub method: Method,
    pub n_bins: usize,
    pub mass: f64,
    pub seed: u64,
    pub header: bool,
    pub sampler: crate::config::SamplerSettings,
    pub bootstrap: crate::config::BootstrapSettings,
}

pub fn quantify(args: &QuantifyArgs) -> Result<pq_core::EstimateWithInterval, CliError> {
    let validation = match ingest_scores(
        &args.validation_path,
        IngestSchema {
            has_labels: true,
            header: args.header,
        },
    ) {
        Ok(IngestedPool::Labeled(p)) => p,
        Ok(_) => unreachable!("schema requested labels"),
        Err(e) => {
            return Err(CliError::Data(format!(
                "{}: {e}",
                args.validation_path.display()
            )))
        }
    };
    let test = match ingest_scores(
        &args.test_path,
        IngestSchema {
            has_labels: false,
            header: args.header,
        },
    ) {
        Ok(IngestedPool::Unlabeled(p)) => p,
        Ok(_) => unreachable!("schema requested no labels"),
        Err(e) => return Err(CliError::Data(format!("{}: {e}", args.test_path.display()))),
    };

    let result = match args.method {
        Method::Pq => pq_quantify(
            &validation,
            &test,
            &PQConfig {
                n_bins: args.n_bins,
                sampler: args.sampler.to_config(args.seed),
                mass: args.mass,
            },
        ),
        Method::BayesianCc => bayesian_cc(
            &validation,
            test.scores(),
            &args.sampler.to_config(args.seed),
            args.mass,
        ),
        Method::Cc => bootstrap_interval(
            |_, scores| Ok(cc(scores, 0.5)),
            &validation,
            &test,
            &args.bootstrap.to_config(args.mass, args.seed),
            Method::Cc,
        ),
        Method::Acc => bootstrap_interval(
            |val, scores| acc(val, scores, 0.5),
            &validation,
            &test,
            &args.bootstrap.to_config(args.mass, args.seed),
            Method::Acc,
        ),
        Method::Pcc => bootstrap_interval(
            |_, scores| pcc(scores),
            &validation,
            &test,
            &args.bootstrap.to_config(args.mass, args.seed),
            Method::Pcc,
        ),
        Method::Pacc => bootstrap_interval(
            pacc,
            &validation,
            &test,
            &args.bootstrap.to_config(args.mass, args.seed),
            Method::Pacc,
        ),
        Method::Hdy => {
            let bins = args.n_bins;
            bootstrap_interval(
                move |val, scores| hdy(val, scores, bins),
                &validation,
                &test,
                &args.bootstrap.to_config(args.mass, args.seed),
                Method::Hdy,
            )
        }
        Method::Emq => {
            let scores: Vec<f64> = validation.scores().collect();
            let labels: Vec<bool> = validation
                .samples()
                .iter()
                .map(|s| s.label() == Some(true))
                .collect();
            let map = fit_platt(&scores, &labels)
                .map_err(|e| CliError::Data(format!("calibration: {e}")))?;
            let calibrated_validation = validation
                .map_scores(|s| map.apply(s))
                .map_err(|e| CliError::Data(e.to_string()))?;
            let calibrated_test =
                UnlabeledPool::new(test.scores().iter().map(|&s| map.apply(s)).collect())
                    .map_err(|e| CliError::Data(e.to_string()))?;
            bootstrap_interval(
                |val, scores| emq(val, scores, &EmqConfig::default()),
                &calibrated_validation,
                &calibrated_test,
                &args.bootstrap.to_config(args.mass, args.seed),
                Method::Emq,
            )
        }
    };
    result.map_err(|e| CliError::Execution(e.to_string()))
}

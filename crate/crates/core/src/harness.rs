//! Experiment orchestration: data → oracle → training → evaluation → search, with every
//! artifact persisted under one output directory.
//!
//! Each stage is a public function so the CLI can run them one at a time; failures are
//! wrapped in [`Error::Stage`] naming the stage.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{EdgePolicy, ExperimentConfig, NamedEdgePolicy, SearchMode};
use crate::data::{generate_dataset, Dataset};
use crate::error::{Error, Result, StageContext};
use crate::metrics::{
    consistency_std, convergence_ratio, ConsistencyTrace, RankingReport, RankingRow, ReportSummary,
    TraceKind,
};
use crate::optim::{build_assignment, ClusterAssignment, ClusterMode};
use crate::search::{evolutionary_select, exhaustive_select, SearchResult, SupernetScorer};
use crate::space::{complexity, OpMask, SearchSpaceSpec};
use crate::supernet::SupernetWeights;
use crate::trainers::{
    build_gated_ground_truth, fsnas_partition, log_csv, stream_rng, streams, train_supernets,
    Algorithm, GroundTruthTable, SchedulerKind, TrainOutput,
};

pub const MANIFEST: &str = "manifest.json";
pub const GROUND_TRUTH: &str = "ground_truth.csv";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const CONSISTENCY: &str = "consistency.csv";
pub const RANKING_REPORT: &str = "ranking_report.json";
pub const RANKING_ROWS: &str = "ranking_rows.csv";
pub const SEARCH_RESULT: &str = "search_result.json";
pub const COMPARE: &str = "compare.json";
pub const ABLATION: &str = "ablation.csv";

pub fn checkpoint_name(k: usize) -> String {
    format!("supernet_{k}.ckpt")
}

/// Generated data and the search space, shared by every later stage.
#[derive(Debug, Clone)]
pub struct Lab {
    pub config: ExperimentConfig,
    pub spec: SearchSpaceSpec,
    pub train: Dataset<f64>,
    pub val: Dataset<f64>,
}

impl Lab {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate().stage("config")?;
        let spec = config.space_spec().stage("config")?;
        let (train, val) = generate_dataset(&config.dataset_params()).stage("data")?;
        Ok(Self {
            config: config.clone(),
            spec,
            train,
            val,
        })
    }

    /// Same data and space, different training/search settings.
    pub fn with_config(&self, config: ExperimentConfig) -> Self {
        Self {
            config,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub table: GroundTruthTable,
    pub cache_hit: bool,
    pub cache_path: PathBuf,
    pub self_consistency: Option<f64>,
    pub gate_passed: bool,
}

/// Loads the stand-alone table for this oracle key, or trains and caches it.
pub fn load_or_build_oracle(lab: &Lab, jobs: usize) -> Result<OracleOutcome> {
    let cfg = &lab.config;
    let key = cfg.oracle_key().stage("oracle")?;
    let cache_dir = &cfg.harness.cache_dir;
    let cache_path = cache_dir.join(format!("gt_{key}.json"));
    let (table, cache_hit) = match std::fs::read_to_string(&cache_path) {
        Ok(text) => {
            let table: GroundTruthTable = serde_json::from_str(&text)
                .map_err(|e| {
                    Error::input(format!(
                        "corrupt oracle cache {}: {e}",
                        cache_path.display()
                    ))
                })
                .stage("oracle")?;
            (table, true)
        }
        Err(_) => {
            let table =
                build_gated_ground_truth(&lab.spec, &cfg.oracle, &lab.train, &lab.val, jobs)
                    .stage("oracle")?;
            std::fs::create_dir_all(cache_dir)
                .map_err(|e| Error::io(cache_dir, e))
                .stage("oracle")?;
            let tmp = cache_dir.join(format!("gt_{key}.json.{}", std::process::id()));
            write_file(
                &tmp,
                &serde_json::to_string(&table).expect("table serializes"),
            )
            .stage("oracle")?;
            std::fs::rename(&tmp, &cache_path)
                .map_err(|e| Error::io(&cache_path, e))
                .stage("oracle")?;
            (table, false)
        }
    };
    if Some(table.len()) != lab.spec.num_subnets() {
        return Err(Error::input("oracle table does not cover the search space")).stage("oracle");
    }
    let self_consistency = table.seed_consistency();
    let gate_passed = self_consistency.is_none_or(|t| t >= cfg.oracle.gate_tau);
    Ok(OracleOutcome {
        table,
        cache_hit,
        cache_path,
        self_consistency,
        gate_passed,
    })
}

/// Momentum clusters for the configured run; a single cluster when MS is off.
pub fn cluster_assignment(
    config: &ExperimentConfig,
    spec: &SearchSpaceSpec,
) -> Result<ClusterAssignment> {
    if !config.train.use_ms {
        return Ok(ClusterAssignment::single(spec));
    }
    let mut rng = stream_rng(config.seed, streams::CLUSTER);
    let c = &config.clusters;
    match (c.mode, &c.edges) {
        (ClusterMode::Random, _) => {
            build_assignment(spec, ClusterMode::Random, c.num_random_clusters, &mut rng)
        }
        (ClusterMode::OperationBased, EdgePolicy::Named(NamedEdgePolicy::Random)) => {
            build_assignment(spec, ClusterMode::OperationBased, c.num_edges, &mut rng)
        }
        (ClusterMode::OperationBased, EdgePolicy::Named(NamedEdgePolicy::First)) => {
            ClusterAssignment::operation_based(spec, (0..c.num_edges).collect())
        }
        (ClusterMode::OperationBased, EdgePolicy::Explicit(edges)) => {
            ClusterAssignment::operation_based(spec, edges.clone())
        }
    }
}

pub fn train_stage(lab: &Lab) -> Result<Vec<TrainOutput<f64>>> {
    let assignment = cluster_assignment(&lab.config, &lab.spec).stage("train")?;
    train_supernets(
        &lab.spec,
        &lab.config.train_config(),
        &lab.train,
        &assignment,
    )
    .stage("train")
}

/// Masks of the supernets a run produces, in checkpoint order.
pub fn supernet_masks(lab: &Lab) -> Result<Vec<OpMask>> {
    match lab.config.train.algorithm {
        Algorithm::Fsnas => fsnas_partition(&lab.spec, &lab.config.train_config()),
        _ => Ok(vec![OpMask::full(&lab.spec)]),
    }
}

/// Writes checkpoints, the step log and the consistency windows.
pub fn persist_training(lab: &Lab, outputs: &[TrainOutput<f64>], out: &Path) -> Result<()> {
    create_dir(out)?;
    if lab.config.harness.save_checkpoints {
        for (k, o) in outputs.iter().enumerate() {
            o.weights.save(&out.join(checkpoint_name(k)))?;
        }
    }
    let log: Vec<_> = outputs.iter().flat_map(|o| o.log.iter().cloned()).collect();
    write_file(&out.join(TRAIN_LOG), &log_csv(&log))?;
    write_file(&out.join(CONSISTENCY), &consistency_csv(lab, outputs)?)
}

pub fn persist_ground_truth(table: &GroundTruthTable, out: &Path) -> Result<()> {
    create_dir(out)?;
    write_file(&out.join(GROUND_TRUTH), &table.to_csv())
}

pub fn persist_report(report: &RankingReport, out: &Path) -> Result<()> {
    create_dir(out)?;
    write_file(&out.join(RANKING_REPORT), &report.summary_json())?;
    write_file(&out.join(RANKING_ROWS), &report.rows_csv())
}

pub fn persist_search(result: &SearchResult, out: &Path) -> Result<()> {
    create_dir(out)?;
    write_file(
        &out.join(SEARCH_RESULT),
        &serde_json::to_string_pretty(result).expect("result serializes"),
    )
}

/// Reloads the supernets written by [`persist_training`].
pub fn load_supernets(lab: &Lab, dir: &Path) -> Result<Vec<TrainOutput<f64>>> {
    supernet_masks(lab)?
        .into_iter()
        .enumerate()
        .map(|(k, mask)| {
            Ok(TrainOutput {
                weights: SupernetWeights::load(&lab.spec, &dir.join(checkpoint_name(k)))?,
                mask,
                log: Vec::new(),
                trace: ConsistencyTrace::new(2),
            })
        })
        .collect()
}

fn trace_with_window(lab: &Lab, trace: &ConsistencyTrace) -> ConsistencyTrace {
    let mut t = trace.clone();
    if let Some(w) = lab.config.metrics.window {
        t.window = w;
    }
    t
}

/// `(window, grad_std, mom_std)` rows; windows are numbered across sub-supernets.
pub fn consistency_windows(lab: &Lab, outputs: &[TrainOutput<f64>]) -> Result<Vec<(f64, f64)>> {
    let mut rows = Vec::new();
    for o in outputs {
        if o.trace.is_empty() {
            continue;
        }
        let trace = trace_with_window(lab, &o.trace);
        let g = consistency_std(&trace, TraceKind::Gradients)?;
        let m = consistency_std(&trace, TraceKind::Momentums)?;
        rows.extend(g.into_iter().zip(m));
    }
    Ok(rows)
}

fn consistency_csv(lab: &Lab, outputs: &[TrainOutput<f64>]) -> Result<String> {
    let mut out = String::from("window,grad_std,mom_std\n");
    for (i, (g, m)) in consistency_windows(lab, outputs)?.into_iter().enumerate() {
        let _ = writeln!(out, "{i},{g},{m}");
    }
    Ok(out)
}

/// Mean gradient and momentum std over all windows.
pub fn mean_consistency(lab: &Lab, outputs: &[TrainOutput<f64>]) -> Result<(f64, f64)> {
    let rows = consistency_windows(lab, outputs)?;
    if rows.is_empty() {
        return Err(Error::UndefinedMetric(
            "no consistency windows were logged".into(),
        ));
    }
    let n = rows.len() as f64;
    Ok((
        rows.iter().map(|r| r.0).sum::<f64>() / n,
        rows.iter().map(|r| r.1).sum::<f64>() / n,
    ))
}

/// Scores every oracle subnet with its supernet and builds the ranking report.
pub fn evaluate(
    lab: &Lab,
    outputs: &[TrainOutput<f64>],
    table: &GroundTruthTable,
) -> Result<RankingReport> {
    let scorer = SupernetScorer::new(outputs, &lab.val);
    let rows = table
        .subnets
        .iter()
        .zip(&table.accuracy)
        .map(|(s, &gt)| {
            let pred = crate::search::SubnetScorer::score(&scorer, s)?;
            Ok(RankingRow {
                subnet: s.clone(),
                gt,
                pred,
                complexity: complexity(&lab.spec, s).value(),
                cr: convergence_ratio(pred, gt).unwrap_or(f64::NAN),
            })
        })
        .collect::<Result<Vec<_>>>()
        .stage("evaluate")?;
    RankingReport::build(rows, lab.config.metrics.top_fraction).stage("evaluate")
}

pub fn search(
    lab: &Lab,
    outputs: &[TrainOutput<f64>],
    table: Option<&GroundTruthTable>,
) -> Result<SearchResult> {
    let scorer = SupernetScorer::new(outputs, &lab.val);
    let s = &lab.config.search;
    let mut result = match s.mode {
        SearchMode::Exhaustive => exhaustive_select(&scorer, &lab.spec, s.constraint),
        SearchMode::Evolutionary => evolutionary_select(
            &scorer,
            &lab.spec,
            s.constraint,
            &s.evolution(),
            &mut stream_rng(lab.config.seed, streams::SEARCH),
        ),
    }
    .stage("search")?;
    result.ground_truth = table.and_then(|t| t.get(&result.subnet));
    Ok(result)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleManifest {
    pub cache_key_path: PathBuf,
    pub cache_hit: bool,
    pub epochs_used: usize,
    pub self_consistency: Option<f64>,
    pub gate_tau: f64,
    pub gate_passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub git_describe: String,
    pub oracle: Option<OracleManifest>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub report: Option<RankingReport>,
    pub search: SearchResult,
    pub oracle: Option<OracleOutcome>,
    pub outputs: Vec<TrainOutput<f64>>,
}

/// The full pipeline for one config; artifacts land in `out`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path, jobs: usize) -> Result<RunSummary> {
    let lab = Lab::prepare(config)?;
    let oracle = if config.harness.use_oracle {
        Some(load_or_build_oracle(&lab, jobs)?)
    } else {
        None
    };
    run_with_oracle(&lab, oracle, out)
}

/// Everything after the oracle stage, for callers that reuse one table across runs.
pub fn run_with_oracle(lab: &Lab, oracle: Option<OracleOutcome>, out: &Path) -> Result<RunSummary> {
    let start = Instant::now();
    create_dir(out).stage("persist")?;
    if let Some(o) = &oracle {
        persist_ground_truth(&o.table, out).stage("persist")?;
    }
    let outputs = train_stage(lab)?;
    persist_training(lab, &outputs, out).stage("persist")?;
    let report = match &oracle {
        Some(o) => {
            let r = evaluate(lab, &outputs, &o.table)?;
            persist_report(&r, out).stage("persist")?;
            Some(r)
        }
        None => None,
    };
    let result = search(lab, &outputs, oracle.as_ref().map(|o| &o.table))?;
    persist_search(&result, out).stage("persist")?;
    let manifest = Manifest {
        config: lab.config.clone(),
        seed: lab.config.seed,
        git_describe: git_describe(),
        oracle: oracle.as_ref().map(|o| OracleManifest {
            cache_key_path: o.cache_path.clone(),
            cache_hit: o.cache_hit,
            epochs_used: o.table.oracle.epochs,
            self_consistency: o.self_consistency,
            gate_tau: lab.config.oracle.gate_tau,
            gate_passed: o.gate_passed,
        }),
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    write_file(
        &out.join(MANIFEST),
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .stage("persist")?;
    Ok(RunSummary {
        report,
        search: result,
        oracle,
        outputs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: ReportSummary,
    pub candidate: ReportSummary,
    pub delta_tau: f64,
    pub delta_cb: Option<f64>,
    pub delta_c3: Option<f64>,
    pub delta_top_cb: Option<f64>,
    pub delta_top_c3: Option<f64>,
}

fn delta(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(b? - a?)
}

/// Candidate minus baseline for each headline metric.
pub fn compare_reports(baseline: &ReportSummary, candidate: &ReportSummary) -> Comparison {
    Comparison {
        baseline: baseline.clone(),
        candidate: candidate.clone(),
        delta_tau: candidate.kendall_tau - baseline.kendall_tau,
        delta_cb: delta(baseline.cb, candidate.cb),
        delta_c3: delta(baseline.c3, candidate.c3),
        delta_top_cb: delta(baseline.top_cb, candidate.top_cb),
        delta_top_c3: delta(baseline.top_c3, candidate.top_c3),
    }
}

pub fn read_report(dir: &Path) -> Result<ReportSummary> {
    let path = dir.join(RANKING_REPORT);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

/// Compares two finished run directories and writes `compare.json` into `out`.
pub fn compare_dirs(baseline: &Path, candidate: &Path, out: &Path) -> Result<Comparison> {
    let a = read_report(baseline).stage("compare")?;
    let b = read_report(candidate).stage("compare")?;
    let cmp = compare_reports(&a, &b);
    create_dir(out).stage("persist")?;
    write_file(
        &out.join(COMPARE),
        &serde_json::to_string_pretty(&cmp).expect("serializes"),
    )
    .stage("persist")?;
    Ok(cmp)
}

/// The configured run with CaLR and MS switched on or off.
pub fn with_dynamics(config: &ExperimentConfig, calr: bool, ms: bool) -> ExperimentConfig {
    let mut c = config.clone();
    c.train.scheduler = if calr {
        SchedulerKind::Calr
    } else {
        SchedulerKind::CosineStatic
    };
    c.train.use_ms = ms;
    c
}

/// Runs static (`out/static`) and dynamic (`out/dynamic`) variants of the config against
/// one oracle table and writes `out/compare.json`.
pub fn compare(config: &ExperimentConfig, out: &Path, jobs: usize) -> Result<Comparison> {
    let lab = Lab::prepare(config)?;
    let oracle = load_or_build_oracle(&lab, jobs)?;
    let base = out.join("static");
    let cand = out.join("dynamic");
    run_with_oracle(
        &lab.with_config(with_dynamics(config, false, false)),
        Some(oracle.clone()),
        &base,
    )?;
    run_with_oracle(
        &lab.with_config(with_dynamics(config, true, true)),
        Some(oracle),
        &cand,
    )?;
    compare_dirs(&base, &cand, out)
}

pub const ABLATION_CELLS: [(&str, bool, bool); 4] = [
    ("static", false, false),
    ("calr", true, false),
    ("ms", false, true),
    ("calr_ms", true, true),
];

#[derive(Debug, Clone)]
pub struct AblationCell {
    pub name: &'static str,
    pub calr: bool,
    pub ms: bool,
    pub report: RankingReport,
}

/// The {CaLR} × {MS} grid: one subdirectory per cell plus `ablation.csv`.
pub fn ablate(config: &ExperimentConfig, out: &Path, jobs: usize) -> Result<Vec<AblationCell>> {
    let lab = Lab::prepare(config)?;
    let oracle = load_or_build_oracle(&lab, jobs)?;
    let mut cells = Vec::new();
    let mut csv = String::from("cell,calr,ms,kendall_tau,cb,c3,top_cb,top_c3\n");
    for (name, calr, ms) in ABLATION_CELLS {
        let cell_lab = lab.with_config(with_dynamics(config, calr, ms));
        let run = run_with_oracle(&cell_lab, Some(oracle.clone()), &out.join(name))?;
        let report = run.report.expect("oracle present");
        let _ = writeln!(
            csv,
            "{name},{calr},{ms},{},{},{},{},{}",
            report.kendall_tau,
            fmt_opt(report.cb),
            fmt_opt(report.c3),
            fmt_opt(report.top_cb),
            fmt_opt(report.top_c3)
        );
        cells.push(AblationCell {
            name,
            calr,
            ms,
            report,
        });
    }
    write_file(&out.join(ABLATION), &csv).stage("persist")?;
    Ok(cells)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DatasetKind;

    fn small(dir: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.space.edges = Some(vec![(0, 1), (1, 2)]);
        c.data.kind = DatasetKind::Gaussians;
        c.data.n_train = 60;
        c.data.n_val = 30;
        c.data.noise = 0.5;
        c.train.epochs = 2;
        c.train.log_stride = 1;
        c.oracle.epochs = 1;
        c.oracle.seeds = vec![0, 1];
        c.oracle.max_doublings = 0;
        c.harness.cache_dir = dir.join("cache");
        c
    }

    #[test]
    fn run_writes_every_artifact_and_hits_the_cache_second_time() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let first = run_experiment(&cfg, &dir.path().join("a"), 1).unwrap();
        assert!(!first.oracle.unwrap().cache_hit);
        for f in [
            MANIFEST,
            GROUND_TRUTH,
            TRAIN_LOG,
            CONSISTENCY,
            RANKING_REPORT,
            RANKING_ROWS,
            SEARCH_RESULT,
        ] {
            assert!(dir.path().join("a").join(f).exists(), "{f}");
        }
        assert!(dir.path().join("a").join(checkpoint_name(0)).exists());
        let second = run_experiment(&cfg, &dir.path().join("b"), 1).unwrap();
        assert!(second.oracle.unwrap().cache_hit);
        let manifest: Manifest = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("b").join(MANIFEST)).unwrap(),
        )
        .unwrap();
        assert!(manifest.oracle.unwrap().cache_hit);
    }

    #[test]
    fn reloaded_checkpoints_score_identically() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let run = run_experiment(&cfg, dir.path(), 1).unwrap();
        let lab = Lab::prepare(&cfg).unwrap();
        let loaded = load_supernets(&lab, dir.path()).unwrap();
        let table = &run.oracle.unwrap().table;
        let a = evaluate(&lab, &run.outputs, table).unwrap();
        let b = evaluate(&lab, &loaded, table).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failures_name_their_stage() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.search.constraint = Some(1);
        let err = run_experiment(&cfg, dir.path(), 1).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Stage {
                    stage: "search",
                    ..
                }
            ),
            "{err}"
        );
        let mut cfg = small(dir.path());
        cfg.train.algorithm = Algorithm::FairNas;
        cfg.train.use_ms = true;
        cfg.clusters.mode = ClusterMode::Random;
        let err = run_experiment(&cfg, dir.path(), 1).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "train", .. }), "{err}");
    }

    #[test]
    fn comparison_is_candidate_minus_baseline() {
        let a = ReportSummary {
            num_subnets: 10,
            kendall_tau: 0.5,
            cb: Some(0.7),
            c3: Some(-0.2),
            top_fraction: 0.3,
            top_num_subnets: 3,
            top_kendall_tau: None,
            top_cb: None,
            top_c3: Some(0.1),
        };
        let b = ReportSummary {
            kendall_tau: 0.75,
            cb: Some(0.5),
            c3: Some(-0.1),
            top_c3: Some(0.1),
            ..a.clone()
        };
        let c = compare_reports(&a, &b);
        assert_eq!(c.delta_tau, 0.25);
        assert!((c.delta_cb.unwrap() + 0.2).abs() < 1e-15);
        assert!((c.delta_c3.unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(c.delta_top_cb, None);
        assert_eq!(c.delta_top_c3, Some(0.0));
    }

    #[test]
    fn cluster_policies() {
        let mut cfg = ExperimentConfig::default();
        let spec = cfg.space_spec().unwrap();
        assert_eq!(cluster_assignment(&cfg, &spec).unwrap().num_clusters(), 1);
        cfg.train.use_ms = true;
        cfg.clusters.edges = EdgePolicy::Named(NamedEdgePolicy::First);
        assert_eq!(
            cluster_assignment(&cfg, &spec).unwrap().chosen_edges(),
            &[0]
        );
        cfg.clusters.edges = EdgePolicy::Explicit(vec![1, 2]);
        assert_eq!(cluster_assignment(&cfg, &spec).unwrap().num_clusters(), 25);
        cfg.clusters.mode = ClusterMode::Random;
        assert_eq!(cluster_assignment(&cfg, &spec).unwrap().num_clusters(), 5);
    }
}

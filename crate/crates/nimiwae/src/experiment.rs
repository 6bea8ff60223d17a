//! End-to-end experiment runner: simulate (or load) data, apply masks,
//! train each method, impute the test split, and report average-L1
//! accuracy in long-format and aggregated CSVs.
//!
//! Each (replicate, mechanism, percentage) cell owns one dataset draw;
//! all methods impute the same masked data. Cells run in a worker pool
//! and results are merged in deterministic order, so reruns with the
//! same plan produce byte-identical CSVs.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::BoundKind;
use crate::dataio::{MaskedDataset, Split};
use crate::evaluate::average_l1;
use crate::impute::{impute, mean_impute, RowSel, WeightMode};
use crate::simulate::{simulate_mask, Mechanism, SimSpec};
use crate::train::{grid_search, train, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nimiwae,
    Imiwae,
    Mean,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Nimiwae => "nimiwae",
            Method::Imiwae => "imiwae",
            Method::Mean => "mean",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nimiwae" => Ok(Method::Nimiwae),
            "imiwae" => Ok(Method::Imiwae),
            "mean" => Ok(Method::Mean),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum DataSource {
    Simulate { n: usize, p: usize, d: usize },
    Csv { path: PathBuf, missing_tokens: Vec<String> },
}

#[derive(Debug, Clone)]
pub struct GridLists {
    pub h: Vec<usize>,
    pub lr: Vec<f64>,
    pub dz: Vec<usize>,
    pub nhl: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub data: DataSource,
    pub methods: Vec<Method>,
    /// One dataset replicate per seed.
    pub seeds: Vec<u64>,
    pub mechanisms: Vec<Mechanism>,
    /// Percent of all entries masked (e.g. 25.0).
    pub pcts: Vec<f64>,
    pub base_train: TrainConfig,
    pub grid: Option<GridLists>,
    /// Sample counts for the final imputation pass.
    pub eval_k: usize,
    pub eval_m: usize,
}

/// One (replicate, mechanism, pct, method) result row.
#[derive(Debug, Clone, Serialize)]
pub struct CellOutcome {
    pub replicate: usize,
    pub mechanism: String,
    pub pct_missing: f64,
    pub method: String,
    pub avg_l1: Option<f64>,
    pub n_miss: usize,
    pub seed: u64,
    pub status: String,
    /// Test-split accessor count observed after training, before
    /// imputation; held-out discipline requires 0.
    pub test_reads_before_impute: u64,
    pub train_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub method: String,
    pub mechanism: String,
    pub pct_missing: f64,
    pub mean_avg_l1: Option<f64>,
    pub sd_avg_l1: Option<f64>,
    pub n_replicates: usize,
}

#[derive(Debug)]
pub struct ExperimentBundle {
    pub cells: Vec<CellOutcome>,
    pub aggregate: Vec<AggregateRow>,
    pub wall_seconds: f64,
    pub any_failed: bool,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn cell_seed(replicate_seed: u64, mech_idx: usize, pct_idx: usize) -> u64 {
    splitmix64(replicate_seed ^ splitmix64(mech_idx as u64 ^ ((pct_idx as u64) << 32)))
}

/// Run every cell of the plan. Failures are recorded per cell; the
/// bundle is always produced.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentBundle> {
    let started = std::time::Instant::now();
    // CSV data loads once; its values are shared by every cell
    let csv_base = match &plan.data {
        DataSource::Csv { path, missing_tokens } => {
            let toks: Vec<&str> = missing_tokens.iter().map(|s| s.as_str()).collect();
            let ds = MaskedDataset::load_csv(path, &toks)?;
            if ds.mask_matrix().iter().any(|&m| m == 0.0) {
                return Err(Error::Invalid(
                    "experiment sweeps need complete data: the CSV already has missing cells, \
                     so imputation accuracy against truth cannot be scored"
                        .into(),
                ));
            }
            Some(ds)
        }
        DataSource::Simulate { .. } => None,
    };

    // cartesian cell list in deterministic order
    let mut data_cells = Vec::new();
    for (ri, &seed) in plan.seeds.iter().enumerate() {
        for (mi, &mech) in plan.mechanisms.iter().enumerate() {
            for (pi, &pct) in plan.pcts.iter().enumerate() {
                data_cells.push((ri, seed, mi, mech, pi, pct));
            }
        }
    }

    let outcomes: Vec<Vec<CellOutcome>> = data_cells
        .par_iter()
        .map(|&(ri, seed, mi, mech, pi, pct)| {
            run_data_cell(plan, csv_base.as_ref(), ri, seed, mi, mech, pi, pct)
        })
        .collect();

    let cells: Vec<CellOutcome> = outcomes.into_iter().flatten().collect();
    let any_failed = cells.iter().any(|c| c.status != "ok");
    let aggregate = aggregate_cells(plan, &cells);
    Ok(ExperimentBundle {
        cells,
        aggregate,
        wall_seconds: started.elapsed().as_secs_f64(),
        any_failed,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_data_cell(
    plan: &ExperimentPlan,
    csv_base: Option<&MaskedDataset>,
    ri: usize,
    seed: u64,
    mi: usize,
    mech: Mechanism,
    pi: usize,
    pct: f64,
) -> Vec<CellOutcome> {
    let dseed = cell_seed(seed, mi, pi);
    let prepared = prepare_dataset(plan, csv_base, dseed, mech, pct);
    plan.methods
        .iter()
        .enumerate()
        .map(|(methi, &method)| {
            let mut out = CellOutcome {
                replicate: ri,
                mechanism: mech.to_string(),
                pct_missing: pct,
                method: method.label().to_string(),
                avg_l1: None,
                n_miss: 0,
                seed,
                status: "ok".into(),
                test_reads_before_impute: 0,
                train_seconds: 0.0,
            };
            match &prepared {
                Ok((ds, truth)) => {
                    let train_seed = splitmix64(dseed ^ ((methi as u64) << 17));
                    match run_method(plan, ds, truth, method, train_seed) {
                        Ok((l1, n_miss, reads, secs)) => {
                            out.avg_l1 = Some(l1);
                            out.n_miss = n_miss;
                            out.test_reads_before_impute = reads;
                            out.train_seconds = secs;
                        }
                        Err(e) => out.status = format!("failed: {e}"),
                    }
                }
                Err(e) => out.status = format!("failed: {e}"),
            }
            out
        })
        .collect()
}

/// Build the standardized, split dataset for one cell, plus the truth
/// matrix used for scoring.
fn prepare_dataset(
    plan: &ExperimentPlan,
    csv_base: Option<&MaskedDataset>,
    dseed: u64,
    mech: Mechanism,
    pct: f64,
) -> Result<(MaskedDataset, Array2<f64>)> {
    let (truth, names, mask, p): (Array2<f64>, Vec<String>, Array2<f64>, usize) = match &plan.data
    {
        DataSource::Simulate { n, p, d } => {
            let mut spec = SimSpec::new(*n, *p, *d, dseed, mech);
            spec.target_missing = pct / 100.0;
            let sim = crate::simulate::simulate(&spec)?;
            let names = (0..*p).map(|j| format!("x{j}")).collect();
            (sim.x.clone(), names, sim.r, *p)
        }
        DataSource::Csv { .. } => {
            let base = csv_base.expect("csv data preloaded");
            let (n, p) = (base.n(), base.p());
            let truth = Array2::from_shape_fn((n, p), |(i, j)| base.raw_value(i, j));
            let mut spec = SimSpec::new(n, p, 2, dseed, mech);
            spec.target_missing = pct / 100.0;
            // mask half the columns, mirroring the simulated protocol
            spec.missing_features = Some((p / 2..p).collect());
            let (mask, _) = simulate_mask(&truth, &spec)?;
            (truth, base.names().to_vec(), mask, p)
        }
    };
    let _ = p;
    let mut ds = MaskedDataset::from_parts(truth.clone(), mask, names)?;
    ds.assign_splits(splitmix64(dseed ^ 0x73706c69))?;
    ds.standardize()?;
    Ok((ds, truth))
}

fn run_method(
    plan: &ExperimentPlan,
    ds: &MaskedDataset,
    truth: &Array2<f64>,
    method: Method,
    train_seed: u64,
) -> Result<(f64, usize, u64, f64)> {
    // fresh clone per method: counters start at zero, so the held-out
    // discipline check below is per-method
    let ds = ds.clone();
    let mut train_seconds = 0.0;

    let imputation = match method {
        Method::Mean => {
            let reads = ds.read_count(Split::Test);
            debug_assert_eq!(reads, 0);
            mean_impute(&ds, RowSel::Split(Split::Test))?
        }
        Method::Nimiwae | Method::Imiwae => {
            let mut cfg = plan.base_train.clone();
            cfg.bound = match method {
                Method::Nimiwae => BoundKind::Nimiwae,
                _ => BoundKind::Imiwae,
            };
            cfg.seed = train_seed;
            let report = match &plan.grid {
                Some(g) => {
                    let grid = crate::train::expand_grid(&cfg, &g.h, &g.lr, &g.dz, &g.nhl);
                    let out = grid_search(&ds, &grid)?;
                    train_seconds = out
                        .results
                        .iter()
                        .filter_map(|r| r.as_ref().ok().map(|t| t.wall_seconds))
                        .sum();
                    match out.results.into_iter().nth(out.best_index) {
                        Some(Ok(best)) => best,
                        _ => return Err(Error::Invalid("grid selection failed".into())),
                    }
                }
                None => {
                    let report = train(&ds, &cfg)?;
                    train_seconds = report.wall_seconds;
                    report
                }
            };
            let reads_before_impute = ds.read_count(Split::Test);
            if reads_before_impute != 0 {
                return Err(Error::Invalid(format!(
                    "held-out discipline violated: {reads_before_impute} test reads during training"
                )));
            }
            impute(
                &report.params,
                &ds,
                RowSel::Split(Split::Test),
                &report.mask_spec,
                cfg.bound,
                plan.eval_k,
                if cfg.bound == BoundKind::Nimiwae { plan.eval_m } else { 1 },
                splitmix64(train_seed ^ 0x696d70),
                WeightMode::Full,
                cfg.pre_impute,
            )?
        }
    };

    // score on the test split against the original-scale truth
    let test_idx = ds.split_indices(Split::Test)?;
    let mut truth_rows = Array2::zeros((test_idx.len(), ds.p()));
    let mut mask_rows = Array2::zeros((test_idx.len(), ds.p()));
    for (r, &i) in test_idx.iter().enumerate() {
        for j in 0..ds.p() {
            truth_rows[(r, j)] = truth[(i, j)];
            mask_rows[(r, j)] = ds.mask_value(i, j);
        }
    }
    let report = average_l1(&imputation.imputed, &truth_rows, &mask_rows)?;
    Ok((report.avg_l1, report.n_miss, 0, train_seconds))
}

fn aggregate_cells(plan: &ExperimentPlan, cells: &[CellOutcome]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for method in &plan.methods {
        for mech in &plan.mechanisms {
            for &pct in &plan.pcts {
                let vals: Vec<f64> = cells
                    .iter()
                    .filter(|c| {
                        c.method == method.label()
                            && c.mechanism == mech.to_string()
                            && c.pct_missing == pct
                            && c.status == "ok"
                    })
                    .filter_map(|c| c.avg_l1)
                    .collect();
                let (mean, sd) = if vals.is_empty() {
                    (None, None)
                } else {
                    let (m, s) = crate::math::mean_std(&vals);
                    (Some(m), Some(s))
                };
                rows.push(AggregateRow {
                    method: method.label().to_string(),
                    mechanism: mech.to_string(),
                    pct_missing: pct,
                    mean_avg_l1: mean,
                    sd_avg_l1: sd,
                    n_replicates: vals.len(),
                });
            }
        }
    }
    rows
}

/// Write results.csv, aggregate.csv, and manifest.json into `dir`.
/// The CSVs are deterministic for a fixed plan; volatile timing lives in
/// the manifest only.
pub fn write_outputs(bundle: &ExperimentBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let mut w = csv::Writer::from_path(dir.join("results.csv"))?;
    w.write_record([
        "replicate",
        "mechanism",
        "pct_missing",
        "method",
        "avg_l1",
        "n_miss",
        "seed",
        "status",
    ])?;
    for c in &bundle.cells {
        w.write_record([
            c.replicate.to_string(),
            c.mechanism.clone(),
            format!("{}", c.pct_missing),
            c.method.clone(),
            c.avg_l1.map(|v| format!("{v}")).unwrap_or_default(),
            c.n_miss.to_string(),
            c.seed.to_string(),
            c.status.clone(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("aggregate.csv"))?;
    w.write_record([
        "method",
        "mechanism",
        "pct_missing",
        "mean_avg_l1",
        "sd_avg_l1",
        "n_replicates",
    ])?;
    for a in &bundle.aggregate {
        w.write_record([
            a.method.clone(),
            a.mechanism.clone(),
            format!("{}", a.pct_missing),
            a.mean_avg_l1.map(|v| format!("{v}")).unwrap_or_default(),
            a.sd_avg_l1.map(|v| format!("{v}")).unwrap_or_default(),
            a.n_replicates.to_string(),
        ])?;
    }
    w.flush()?;

    #[derive(Serialize)]
    struct Manifest<'a> {
        tool: &'static str,
        version: &'static str,
        wall_seconds: f64,
        any_failed: bool,
        cells: &'a [CellOutcome],
    }
    let manifest = Manifest {
        tool: "nimiwae",
        version: env!("CARGO_PKG_VERSION"),
        wall_seconds: bundle.wall_seconds,
        any_failed: bundle.any_failed,
        cells: &bundle.cells,
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

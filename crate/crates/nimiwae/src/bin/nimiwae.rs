//! Command-line driver: simulate data, train models, impute missing
//! entries, evaluate accuracy, and run full experiment sweeps.
//!
//! Exit codes: 0 success, 1 runtime/partial failures, 2 invalid
//! configuration or arguments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use nimiwae::bounds::BoundKind;
use nimiwae::config::{parse_bound, parse_pre_impute, FileConfig};
use nimiwae::dataio::{MaskedDataset, Split, DEFAULT_MISSING_TOKENS};
use nimiwae::error::Error;
use nimiwae::evaluate::{average_l1, logistic_fit_named};
use nimiwae::experiment::{
    run_experiment, write_outputs, DataSource, ExperimentPlan, GridLists, Method,
};
use nimiwae::impute::{impute, mean_impute, RowSel, WeightMode};
use nimiwae::networks::Checkpoint;
use nimiwae::simulate::{simulate, Mechanism};
use nimiwae::train::{expand_grid, grid_search, train, TrainConfig};

#[derive(Parser)]
#[command(name = "nimiwae", version, about = "Importance-weighted autoencoder imputation for non-ignorably missing tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic data and a logistic missingness mask.
    Simulate(SimulateArgs),
    /// Train one model and write a checkpoint plus bound traces.
    Train(TrainArgs),
    /// Hyperparameter grid search with validation selection.
    Grid(TrainArgs),
    /// Impute missing entries with a trained checkpoint.
    Impute(ImputeArgs),
    /// Score imputations (average L1) or fit a downstream logistic model.
    Evaluate(EvaluateArgs),
    /// Full sweep: simulate/load, train, impute, and aggregate results.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML configuration file ([data.simulate] and [mask] sections).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "sim_out")]
    out: PathBuf,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// MCAR, MAR, or MNAR.
    #[arg(long)]
    mechanism: Option<String>,
    /// Percent of all entries masked, e.g. 25.
    #[arg(long)]
    pct: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Train on this CSV instead of the configured source.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "train_out")]
    out: PathBuf,
    #[arg(long)]
    bound: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    bs: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    nhl: Option<usize>,
    #[arg(long)]
    dz: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    pre_impute: Option<String>,
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Args)]
struct ImputeArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "impute_out")]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 20)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Which rows to impute: all, train, valid, or test.
    #[arg(long, default_value = "all")]
    split: String,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Bound kind the checkpoint was trained with.
    #[arg(long, default_value = "nimiwae")]
    bound: String,
    /// Drop the mask-decoder factor from the imputation weights.
    #[arg(long)]
    no_mask_term: bool,
    #[arg(long, default_value = "zero")]
    pre_impute: String,
    /// Replace missing entries with training-column means instead of a
    /// trained model.
    #[arg(long)]
    mean: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    imputed: PathBuf,
    /// Complete truth CSV for average-L1 scoring.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Mask CSV (1 observed, 0 missing) for average-L1 scoring.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Binary response CSV: fit a logistic regression of it on the
    /// imputed features (intercept added automatically).
    #[arg(long)]
    logistic: Option<PathBuf>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Train(a) => cmd_train(a, false),
        Command::Grid(a) => cmd_train(a, true),
        Command::Impute(a) => cmd_impute(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Toml(_) | Error::Invalid(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<FileConfig, Error> {
    match path {
        Some(p) => FileConfig::load(p),
        None => Ok(FileConfig::default()),
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<ExitCode, Error> {
    let cfg = load_config(&a.config)?;
    let mut spec = cfg.sim_spec()?;
    if let Some(n) = a.n {
        spec.n = n;
    }
    if let Some(p) = a.p {
        spec.p = p;
    }
    if let Some(d) = a.d {
        spec.d = d;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(m) = &a.mechanism {
        spec.mechanism = m.parse()?;
    }
    if let Some(pct) = a.pct {
        spec.target_missing = pct / 100.0;
    }
    spec.validate()?;

    let sim = simulate(&spec)?;
    std::fs::create_dir_all(&a.out)?;
    let names: Vec<String> = (0..spec.p).map(|j| format!("x{j}")).collect();

    let masked = MaskedDataset::from_parts(sim.x.clone(), sim.r.clone(), names.clone())?;
    masked.write_csv(&a.out.join("data.csv"))?;
    let truth =
        MaskedDataset::from_parts(sim.x.clone(), Array2::ones(sim.x.dim()), names.clone())?;
    truth.write_csv(&a.out.join("truth.csv"))?;
    write_mask_csv(&a.out.join("mask.csv"), &sim.r, &names)?;

    #[derive(serde::Serialize)]
    struct SpecSidecar<'a> {
        spec: &'a nimiwae::simulate::SimSpec,
        realized: &'a nimiwae::simulate::MissingnessSpec,
    }
    let realized = sim.miss_spec.as_ref().expect("mask simulated");
    std::fs::write(
        a.out.join("spec.json"),
        serde_json::to_string_pretty(&SpecSidecar { spec: &spec, realized })?,
    )?;
    println!(
        "wrote {} rows x {} cols, mechanism {}, realized missing fraction {:.4}",
        spec.n, spec.p, spec.mechanism, realized.realized_missing_fraction
    );
    Ok(ExitCode::SUCCESS)
}

fn write_mask_csv(path: &Path, mask: &Array2<f64>, names: &[String]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(names)?;
    for i in 0..mask.dim().0 {
        let row: Vec<String> = (0..mask.dim().1)
            .map(|j| format!("{}", mask[(i, j)] as u8))
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Load (or simulate) the dataset named by config/flags, split, and
/// standardize it.
fn prepare_data(
    cfg: &FileConfig,
    data_flag: &Option<PathBuf>,
    split_seed: Option<u64>,
) -> Result<MaskedDataset, Error> {
    let tokens = cfg.missing_tokens();
    let toks: Vec<&str> = tokens.iter().map(|s| s.as_str()).collect();
    let source = cfg
        .data
        .as_ref()
        .and_then(|d| d.source.clone())
        .unwrap_or_else(|| if data_flag.is_some() { "csv".into() } else { "simulate".into() });

    let mut ds = match (data_flag, source.as_str()) {
        (Some(path), _) => MaskedDataset::load_csv(path, &toks)?,
        (None, "csv") => {
            let path = cfg
                .data
                .as_ref()
                .and_then(|d| d.path.clone())
                .ok_or_else(|| Error::Config("data.path required for csv source".into()))?;
            MaskedDataset::load_csv(&path, &toks)?
        }
        (None, "simulate") => {
            let spec = cfg.sim_spec()?;
            let sim = simulate(&spec)?;
            let names = (0..spec.p).map(|j| format!("x{j}")).collect();
            MaskedDataset::from_parts(sim.x, sim.r, names)?
        }
        (None, other) => return Err(Error::Config(format!("unknown data source {other:?}"))),
    };
    ds.assign_splits(split_seed.unwrap_or_else(|| cfg.split_seed()))?;
    ds.standardize()?;
    Ok(ds)
}

fn override_train_config(cfg: &mut TrainConfig, a: &TrainArgs) -> Result<(), Error> {
    if let Some(b) = &a.bound {
        cfg.bound = parse_bound(b)?;
    }
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(m) = a.m {
        cfg.m = m;
    }
    if let Some(lr) = a.lr {
        cfg.lr = lr;
    }
    if let Some(bs) = a.bs {
        cfg.bs = bs;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(h) = a.h {
        cfg.net.h = h;
    }
    if let Some(nhl) = a.nhl {
        cfg.net.nhl = nhl;
    }
    if let Some(dz) = a.dz {
        cfg.net.dz = dz;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(p) = &a.pre_impute {
        cfg.pre_impute = parse_pre_impute(p)?;
    }
    cfg.validate()
}

fn write_trace_csv(path: &Path, train_trace: &[f64], valid_trace: &[f64]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_bound", "valid_bound"])?;
    for (e, (tr, va)) in train_trace.iter().zip(valid_trace).enumerate() {
        w.write_record([e.to_string(), format!("{tr}"), format!("{va}")])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_train(a: TrainArgs, grid_mode: bool) -> Result<ExitCode, Error> {
    let cfg = load_config(&a.config)?;
    let mut tc = cfg.train_config()?;
    override_train_config(&mut tc, &a)?;
    let ds = prepare_data(&cfg, &a.data, a.split_seed)?;
    std::fs::create_dir_all(&a.out)?;
    ds.write_split_csv(&a.out.join("split.csv"))?;

    if grid_mode {
        let lists = cfg.grid_lists().ok_or_else(|| {
            Error::Config("grid subcommand needs a [training.grid] section".into())
        })?;
        let grid = expand_grid(
            &tc,
            lists.h.as_deref().unwrap_or(&[tc.net.h]),
            lists.lr.as_deref().unwrap_or(&[tc.lr]),
            lists.dz.as_deref().unwrap_or(&[tc.net.dz]),
            lists.nhl.as_deref().unwrap_or(&[tc.net.nhl]),
        );
        let out = grid_search(&ds, &grid)?;

        let mut w = csv::Writer::from_path(a.out.join("grid_results.csv"))?;
        w.write_record(["index", "h", "nhl", "dz", "lr", "score", "status", "selected"])?;
        for (i, (cfg_i, res)) in grid.iter().zip(&out.results).enumerate() {
            w.write_record([
                i.to_string(),
                cfg_i.net.h.to_string(),
                cfg_i.net.nhl.to_string(),
                cfg_i.net.dz.to_string(),
                format!("{}", cfg_i.lr),
                out.scores[i].map(|s| format!("{s}")).unwrap_or_default(),
                match res {
                    Ok(_) => "ok".to_string(),
                    Err(e) => format!("failed: {e}"),
                },
                (i == out.best_index).to_string(),
            ])?;
        }
        w.flush()?;

        let best = out.results[out.best_index]
            .as_ref()
            .expect("selected config trained");
        let ck =
            Checkpoint::from_params(&best.params, ds.p(), &out.best_config.net, &best.mask_spec)?;
        ck.save(&a.out.join("checkpoint.json"))?;
        write_trace_csv(&a.out.join("trace.csv"), &best.train_trace, &best.valid_trace)?;
        println!(
            "grid: {} configs, best index {} (h={}, nhl={}, dz={}, lr={})",
            grid.len(),
            out.best_index,
            out.best_config.net.h,
            out.best_config.net.nhl,
            out.best_config.net.dz,
            out.best_config.lr
        );
    } else {
        let report = train(&ds, &tc)?;
        let ck = Checkpoint::from_params(&report.params, ds.p(), &tc.net, &report.mask_spec)?;
        ck.save(&a.out.join("checkpoint.json"))?;
        write_trace_csv(&a.out.join("trace.csv"), &report.train_trace, &report.valid_trace)?;
        println!(
            "trained {} for {} epochs: final train bound {:.4}, valid bound {:.4} ({:.1}s, {} aborted rows)",
            tc.bound,
            tc.epochs,
            report.train_trace.last().unwrap(),
            report.valid_trace.last().unwrap(),
            report.wall_seconds,
            report.aborted_rows
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_impute(a: ImputeArgs) -> Result<ExitCode, Error> {
    let cfg = FileConfig::default();
    let ds = prepare_data(&cfg, &Some(a.data.clone()), Some(a.split_seed))?;
    let rows = match a.split.as_str() {
        "all" => RowSel::All,
        "train" => RowSel::Split(Split::Train),
        "valid" => RowSel::Split(Split::Valid),
        "test" => RowSel::Split(Split::Test),
        other => return Err(Error::Config(format!("unknown split {other:?}"))),
    };

    let result = if a.mean {
        mean_impute(&ds, rows)?
    } else {
        let ck_path = a.checkpoint.as_ref().ok_or_else(|| {
            Error::Config("impute needs --checkpoint (or --mean for mean imputation)".into())
        })?;
        let (params, p, _, mask_spec) = Checkpoint::load(ck_path)?.into_params()?;
        if p != ds.p() {
            return Err(Error::Dim(format!(
                "checkpoint expects {p} features, data has {}",
                ds.p()
            )));
        }
        let kind = parse_bound(&a.bound)?;
        let weight_mode = if a.no_mask_term {
            WeightMode::NoMaskTerm
        } else {
            WeightMode::Full
        };
        impute(
            &params,
            &ds,
            rows,
            &mask_spec,
            kind,
            a.k,
            if kind == BoundKind::Nimiwae { a.m } else { 1 },
            a.seed,
            weight_mode,
            parse_pre_impute(&a.pre_impute)?,
        )?
    };

    std::fs::create_dir_all(&a.out)?;
    // full-layout output: imputed values at the selected rows' missing
    // cells, everything else as in the input
    let row_idx: Vec<usize> = match rows {
        RowSel::All => (0..ds.n()).collect(),
        RowSel::Split(s) => ds.split_indices(s)?,
    };
    let mut w = csv::Writer::from_path(a.out.join("imputed.csv"))?;
    w.write_record(ds.names())?;
    let mut next = vec![String::new(); ds.p()];
    let lookup: std::collections::HashMap<usize, usize> =
        row_idx.iter().enumerate().map(|(r, &i)| (i, r)).collect();
    for i in 0..ds.n() {
        for (j, cell) in next.iter_mut().enumerate() {
            *cell = if ds.mask_value(i, j) == 1.0 {
                format!("{}", ds.raw_value(i, j))
            } else if let Some(&r) = lookup.get(&i) {
                format!("{}", result.imputed[(r, j)])
            } else {
                String::new()
            };
        }
        w.write_record(&next)?;
    }
    w.flush()?;

    #[derive(serde::Serialize)]
    struct Sidecar {
        seed: u64,
        k: usize,
        m: usize,
        split: String,
        split_seed: u64,
        fallback_rows: usize,
        mean_ess: Option<f64>,
    }
    let mean_ess = if result.ess.is_empty() {
        None
    } else {
        Some(result.ess.iter().sum::<f64>() / result.ess.len() as f64)
    };
    std::fs::write(
        a.out.join("imputed.meta.json"),
        serde_json::to_string_pretty(&Sidecar {
            seed: a.seed,
            k: result.k,
            m: result.m,
            split: a.split.clone(),
            split_seed: a.split_seed,
            fallback_rows: result.fallback_rows.len(),
            mean_ess,
        })?,
    )?;
    println!(
        "imputed {} rows ({} fallbacks) -> {}",
        row_idx.len(),
        result.fallback_rows.len(),
        a.out.join("imputed.csv").display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<ExitCode, Error> {
    let imputed = MaskedDataset::load_csv(&a.imputed, DEFAULT_MISSING_TOKENS)?;

    if let Some(resp_path) = &a.logistic {
        let resp = MaskedDataset::load_csv(resp_path, DEFAULT_MISSING_TOKENS)?;
        if resp.p() != 1 || resp.n() != imputed.n() {
            return Err(Error::Dim(format!(
                "response must be a single column of {} rows, got {}x{}",
                imputed.n(),
                resp.n(),
                resp.p()
            )));
        }
        let n = imputed.n();
        let p = imputed.p();
        let mut x = Array2::ones((n, p + 1));
        for i in 0..n {
            for j in 0..p {
                x[(i, j + 1)] = imputed.raw_value(i, j);
            }
        }
        let y: Vec<f64> = (0..n).map(|i| resp.raw_value(i, 0)).collect();
        let mut names = vec!["intercept".to_string()];
        names.extend(imputed.names().iter().cloned());
        let report = logistic_fit_named(&x, &y, Some(&names))?;

        let mut out: Vec<u8> = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["term", "coef", "se", "z", "p_value", "ci_lo", "ci_hi"])
                .map_err(Error::Csv)?;
            for t in &report.terms {
                w.write_record([
                    t.name.clone(),
                    format!("{}", t.coef),
                    format!("{}", t.se),
                    format!("{}", t.z),
                    format!("{}", t.p_value),
                    format!("{}", t.ci_lo),
                    format!("{}", t.ci_hi),
                ])
                .map_err(Error::Csv)?;
            }
            w.flush()?;
        }
        emit(&a.out, &out)?;
        return Ok(ExitCode::SUCCESS);
    }

    let (truth_path, mask_path) = match (&a.truth, &a.mask) {
        (Some(t), Some(m)) => (t, m),
        _ => {
            return Err(Error::Config(
                "evaluate needs either --logistic RESPONSE or both --truth and --mask".into(),
            ))
        }
    };
    let truth = MaskedDataset::load_csv(truth_path, DEFAULT_MISSING_TOKENS)?;
    let mask = MaskedDataset::load_csv(mask_path, DEFAULT_MISSING_TOKENS)?;
    let dims = (imputed.n(), imputed.p());
    if (truth.n(), truth.p()) != dims || (mask.n(), mask.p()) != dims {
        return Err(Error::Dim("imputed/truth/mask shapes differ".into()));
    }
    let to_matrix =
        |d: &MaskedDataset| Array2::from_shape_fn((d.n(), d.p()), |(i, j)| d.raw_value(i, j));
    let report = average_l1(&to_matrix(&imputed), &to_matrix(&truth), &to_matrix(&mask))?;

    let mut out: Vec<u8> = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["column", "avg_l1", "n_miss"]).map_err(Error::Csv)?;
        w.write_record([
            "ALL".to_string(),
            format!("{}", report.avg_l1),
            report.n_miss.to_string(),
        ])
        .map_err(Error::Csv)?;
        for c in &report.per_column {
            w.write_record([
                imputed.names()[c.column].clone(),
                format!("{}", c.avg_l1),
                c.n_miss.to_string(),
            ])
            .map_err(Error::Csv)?;
        }
        w.flush()?;
    }
    emit(&a.out, &out)?;
    Ok(ExitCode::SUCCESS)
}

fn emit(path: &Option<PathBuf>, bytes: &[u8]) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
        }
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<ExitCode, Error> {
    let cfg = FileConfig::load(&a.config)?;
    let plan = plan_from_config(&cfg)?;
    let out_dir = a
        .out
        .or_else(|| cfg.output.as_ref().and_then(|o| o.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("report_out"));
    let bundle = run_experiment(&plan)?;
    write_outputs(&bundle, &out_dir)?;
    let ok = bundle.cells.iter().filter(|c| c.status == "ok").count();
    println!(
        "{}/{} cells ok in {:.1}s -> {}",
        ok,
        bundle.cells.len(),
        bundle.wall_seconds,
        out_dir.display()
    );
    if bundle.any_failed {
        Ok(ExitCode::from(1))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn plan_from_config(cfg: &FileConfig) -> Result<ExperimentPlan, Error> {
    let exp = cfg
        .experiment
        .as_ref()
        .ok_or_else(|| Error::Config("report needs an [experiment] section".into()))?;
    let data = match cfg.data.as_ref().and_then(|d| d.source.as_deref()) {
        None | Some("simulate") => {
            let spec = cfg.sim_spec()?;
            DataSource::Simulate { n: spec.n, p: spec.p, d: spec.d }
        }
        Some("csv") => DataSource::Csv {
            path: cfg
                .data
                .as_ref()
                .and_then(|d| d.path.clone())
                .ok_or_else(|| Error::Config("data.path required for csv source".into()))?,
            missing_tokens: cfg.missing_tokens(),
        },
        Some(other) => return Err(Error::Config(format!("unknown data source {other:?}"))),
    };
    let methods: Vec<Method> = exp
        .methods
        .clone()
        .unwrap_or_else(|| vec!["nimiwae".into(), "imiwae".into(), "mean".into()])
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_, _>>()?;
    let mechanisms: Vec<Mechanism> = exp
        .mechanisms
        .clone()
        .unwrap_or_else(|| vec!["MCAR".into(), "MAR".into(), "MNAR".into()])
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_, _>>()?;
    let grid = cfg.grid_lists().map(|g| {
        let base = cfg.train_config().expect("validated");
        GridLists {
            h: g.h.clone().unwrap_or_else(|| vec![base.net.h]),
            lr: g.lr.clone().unwrap_or_else(|| vec![base.lr]),
            dz: g.dz.clone().unwrap_or_else(|| vec![base.net.dz]),
            nhl: g.nhl.clone().unwrap_or_else(|| vec![base.net.nhl]),
        }
    });
    Ok(ExperimentPlan {
        data,
        methods,
        seeds: exp.seeds.clone().unwrap_or_else(|| vec![1, 2, 3, 4, 5]),
        mechanisms,
        pcts: exp.pct_missing.clone().unwrap_or_else(|| vec![25.0]),
        base_train: cfg.train_config()?,
        grid,
        eval_k: exp.eval_k.unwrap_or(20),
        eval_m: exp.eval_m.unwrap_or(20),
    })
}

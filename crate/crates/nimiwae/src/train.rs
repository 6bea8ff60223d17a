//! Minibatched training of the bound objectives and hyperparameter grid
//! search with validation-based selection.
//!
//! One pass over a minibatch: pre-impute, encode the latents, draw K
//! z-samples, decode, encode the missing entries, draw M completions per
//! z-sample, score the mask, evaluate the bound, and take one Adam
//! ascent step. Every stochastic choice (init, shuffling, noise,
//! validation noise) runs off its own seeded stream, so a (seed, config)
//! pair reproduces the run exactly.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::{adam_step, AdamState};
use crate::bounds::{self, Batch, BoundConfig, BoundKind, PreImpute};
use crate::dataio::{MaskedDataset, Split};
use crate::impute::{impute_matrix, WeightMode};
use crate::networks::{init_params, MaskMode, MaskModelSpec, ModelParams, NetworkConfig};
use crate::{Error, Result};

/// Mask-model options resolved against the dataset at train time (the
/// modeled columns are whichever columns are missing in the training
/// split).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct MaskSpecOptions {
    /// Covariate feature indices; None means all features.
    pub covariates: Option<Vec<usize>>,
    pub include_z: bool,
    pub mode: MaskMode,
}

impl MaskSpecOptions {
    pub fn resolve(&self, p: usize, train_missing_cols: Vec<usize>) -> Result<MaskModelSpec> {
        let spec = MaskModelSpec {
            covariates: self.covariates.clone().unwrap_or_else(|| (0..p).collect()),
            include_z: self.include_z,
            modeled_cols: train_missing_cols,
            mode: self.mode,
        };
        spec.validate(p)?;
        Ok(spec)
    }
}

/// What grid search ranks configurations by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ValidationCriterion {
    /// Final-epoch validation lower bound (higher is better).
    #[default]
    Bound,
    /// Average L1 of imputing artificially masked validation cells
    /// (lower is better).
    MaskedL1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub bound: BoundKind,
    pub k: usize,
    pub m: usize,
    pub lr: f64,
    pub bs: usize,
    pub epochs: usize,
    pub net: NetworkConfig,
    pub mask: MaskSpecOptions,
    pub pre_impute: PreImpute,
    pub seed: u64,
    pub validation: ValidationCriterion,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            bound: BoundKind::Nimiwae,
            k: 5,
            m: 5,
            lr: 0.005,
            bs: 128,
            epochs: 500,
            net: NetworkConfig { h: 64, nhl: 1, dz: 2, activation: Default::default() },
            mask: MaskSpecOptions::default(),
            pre_impute: PreImpute::Zero,
            seed: 0,
            validation: ValidationCriterion::Bound,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.bs < 1 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.lr >= 0.0) {
            return Err(Error::Config("learning rate must be >= 0".into()));
        }
        self.net.validate()?;
        self.bound_config().map(|_| ())
    }

    pub fn bound_config(&self) -> Result<BoundConfig> {
        let (k, m) = match self.bound {
            BoundKind::Elbo => (1, 1),
            BoundKind::Iwae | BoundKind::Imiwae => (self.k, 1),
            BoundKind::Nimiwae => (self.k, self.m),
        };
        BoundConfig::new(self.bound, k, m)
    }

    /// Tie-break key for grid selection: smaller h, nhl, dz, lr win.
    fn tiebreak_key(&self) -> (usize, usize, usize, f64) {
        (self.net.h, self.net.nhl, self.net.dz, self.lr)
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub params: ModelParams,
    pub mask_spec: MaskModelSpec,
    /// Per-epoch mean training bound (over kept rows).
    pub train_trace: Vec<f64>,
    /// Per-epoch validation bound with a fixed validation noise stream.
    pub valid_trace: Vec<f64>,
    pub wall_seconds: f64,
    /// Rows dropped from batch means because of non-finite log-weights.
    pub aborted_rows: u64,
    /// Optimizer steps skipped because of non-finite gradients.
    pub skipped_steps: u64,
}

// stream tags keep the shuffle / training noise / validation noise
// streams decoupled from each other and from the init stream
const SHUFFLE_TAG: u64 = 0x7368_7566;
const NOISE_TAG: u64 = 0x6e6f_6973;
const VALID_TAG: u64 = 0x7661_6c69;

pub(crate) fn epoch_permutation(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

fn take_rows(src: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), src.dim().1));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&src.row(i));
    }
    out
}

fn param_diagnostic(params: &ModelParams) -> String {
    let names = params.mat_names();
    let mut bad = Vec::new();
    for (name, m) in names.iter().zip(params.mats()) {
        let nonfinite = m.iter().filter(|x| !x.is_finite()).count();
        if nonfinite > 0 {
            bad.push(format!("{name}: {nonfinite}/{} non-finite", m.len()));
        }
    }
    bad.join("; ")
}

/// Train one model on the training split, tracking the validation bound
/// per epoch. Deterministic in (data, config).
pub fn train(data: &MaskedDataset, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if !data.is_standardized() {
        return Err(Error::Invalid("dataset must be standardized before training".into()));
    }
    let (x_tr, r_tr) = data.split_rows(Split::Train)?;
    if x_tr.dim().0 == 0 {
        return Err(Error::EmptySplit("train"));
    }
    let (x_va, r_va) = data.split_rows(Split::Valid)?;
    if x_va.dim().0 == 0 {
        return Err(Error::EmptySplit("valid"));
    }

    let started = std::time::Instant::now();
    let p = data.p();
    let mask_spec = config.mask.resolve(p, data.train_missing_cols()?)?;
    mask_spec.check_modeled_subset(&data.train_missing_cols()?)?;
    let bound_cfg = config.bound_config()?;
    let col_means = data.train_observed_col_means()?;

    let mut params = init_params(&config.net, p, &mask_spec, config.seed)?;
    let mut opt = AdamState::for_params(
        &params.mats().iter().map(|m| (*m).clone()).collect::<Vec<_>>(),
        config.lr,
    );
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_TAG);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed ^ NOISE_TAG);
    let mut valid_rng = ChaCha8Rng::seed_from_u64(config.seed ^ VALID_TAG);

    let n_train = x_tr.dim().0;
    let dz = config.net.dz;
    let mut train_trace = Vec::with_capacity(config.epochs);
    let mut valid_trace = Vec::with_capacity(config.epochs);
    let mut aborted_rows = 0u64;
    let mut skipped_steps = 0u64;

    for epoch in 0..config.epochs {
        let order = epoch_permutation(n_train, &mut shuffle_rng);
        let mut weighted_bound = 0.0;
        let mut kept_total = 0usize;
        for (batch_idx, chunk) in order.chunks(config.bs).enumerate() {
            let batch = Batch::new(
                &take_rows(&x_tr, chunk),
                &take_rows(&r_tr, chunk),
                config.pre_impute,
                &col_means,
            )?;
            let noise = bounds::draw_noise(&mut noise_rng, chunk.len(), dz, p, &bound_cfg);
            let graph = bounds::build_graph(
                &params,
                Some(&mask_spec),
                &batch,
                &noise,
                &bound_cfg,
            )?;
            aborted_rows += graph.estimate.aborted_rows.len() as u64;
            let kept = chunk.len() - graph.estimate.aborted_rows.len();
            weighted_bound += graph.estimate.value * kept as f64;
            kept_total += kept;

            let grads = graph.tape.backward(graph.objective)?;
            let mut mats: Vec<Array2<f64>> =
                params.mats().iter().map(|m| (*m).clone()).collect();
            match adam_step(&mut mats, &grads, &mut opt) {
                Ok(()) => {
                    for (dst, src) in params.mats_mut().into_iter().zip(mats) {
                        *dst = src;
                    }
                }
                Err(Error::NonFiniteGradient { .. }) => {
                    skipped_steps += 1;
                }
                Err(e) => return Err(e),
            }
            if !params.all_finite() {
                return Err(Error::NanParams {
                    epoch,
                    batch: batch_idx,
                    diagnostic: param_diagnostic(&params),
                });
            }
        }
        train_trace.push(weighted_bound / kept_total.max(1) as f64);

        // validation bound with fresh noise from the fixed validation stream
        let mut vb = 0.0;
        let mut v_kept = 0usize;
        for chunk in (0..x_va.dim().0).collect::<Vec<_>>().chunks(config.bs) {
            let batch = Batch::new(
                &take_rows(&x_va, chunk),
                &take_rows(&r_va, chunk),
                config.pre_impute,
                &col_means,
            )?;
            let noise = bounds::draw_noise(&mut valid_rng, chunk.len(), dz, p, &bound_cfg);
            let graph = bounds::build_graph(
                &params,
                Some(&mask_spec),
                &batch,
                &noise,
                &bound_cfg,
            )?;
            let kept = chunk.len() - graph.estimate.aborted_rows.len();
            vb += graph.estimate.value * kept as f64;
            v_kept += kept;
        }
        valid_trace.push(vb / v_kept.max(1) as f64);
    }

    Ok(TrainReport {
        params,
        mask_spec,
        train_trace,
        valid_trace,
        wall_seconds: started.elapsed().as_secs_f64(),
        aborted_rows,
        skipped_steps,
    })
}

/// Grid search outcome: every per-config result plus the selected index.
#[derive(Debug)]
pub struct GridOutcome {
    pub best_index: usize,
    pub best_config: TrainConfig,
    pub results: Vec<std::result::Result<TrainReport, String>>,
    /// Selection score per successful config (higher is better).
    pub scores: Vec<Option<f64>>,
}

/// Train every configuration (in parallel) and pick the one with the
/// best validation score. Ties break toward smaller h, then nhl, then
/// dz, then lr; exact duplicates keep the earliest.
pub fn grid_search(data: &MaskedDataset, grid: &[TrainConfig]) -> Result<GridOutcome> {
    if grid.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let results: Vec<std::result::Result<TrainReport, String>> = grid
        .par_iter()
        .map(|cfg| train(data, cfg).map_err(|e| e.to_string()))
        .collect();

    let mut scores: Vec<Option<f64>> = Vec::with_capacity(grid.len());
    for (cfg, res) in grid.iter().zip(&results) {
        match res {
            Ok(report) => scores.push(Some(selection_score(data, cfg, report)?)),
            Err(_) => scores.push(None),
        }
    }

    let mut best: Option<(usize, f64)> = None;
    for (i, score) in scores.iter().enumerate() {
        let Some(s) = score else { continue };
        match best {
            None => best = Some((i, *s)),
            Some((bi, bs)) => {
                let better = *s > bs
                    || (*s == bs && grid[i].tiebreak_key() < grid[bi].tiebreak_key());
                if better {
                    best = Some((i, *s));
                }
            }
        }
    }
    match best {
        Some((i, _)) => Ok(GridOutcome {
            best_index: i,
            best_config: grid[i].clone(),
            results,
            scores,
        }),
        None => Err(Error::GridAllDiverged(grid.len())),
    }
}

/// Higher-is-better selection score for a trained configuration.
fn selection_score(
    data: &MaskedDataset,
    cfg: &TrainConfig,
    report: &TrainReport,
) -> Result<f64> {
    match cfg.validation {
        ValidationCriterion::Bound => {
            Ok(*report.valid_trace.last().expect("non-empty trace"))
        }
        ValidationCriterion::MaskedL1 => {
            // artificially mask 10% of observed validation cells (fixed
            // stream), impute them, and score by -L1
            let (x_va, r_va) = data.split_rows(Split::Valid)?;
            let (n, p) = x_va.dim();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x766d_6173);
            let mut extra = r_va.clone();
            let mut held: Vec<(usize, usize)> = Vec::new();
            for i in 0..n {
                for j in 0..p {
                    if r_va[(i, j)] == 1.0 && rand::Rng::random::<f64>(&mut rng) < 0.1 {
                        extra[(i, j)] = 0.0;
                        held.push((i, j));
                    }
                }
            }
            if held.is_empty() {
                return Ok(f64::NEG_INFINITY);
            }
            let col_means = data.train_observed_col_means()?;
            let (imputed, _, _) = impute_matrix(
                &report.params,
                &x_va,
                &extra,
                &report.mask_spec,
                cfg.bound,
                cfg.k.max(5),
                if cfg.bound == BoundKind::Nimiwae { cfg.m.max(5) } else { 1 },
                cfg.seed ^ 0x696d_7075,
                WeightMode::Full,
                cfg.pre_impute,
                &col_means,
                &col_means,
            )?;
            let l1: f64 = held
                .iter()
                .map(|&(i, j)| (imputed[(i, j)] - x_va[(i, j)]).abs())
                .sum::<f64>()
                / held.len() as f64;
            Ok(-l1)
        }
    }
}

/// The 16-configuration grid layout used for tuning: two values per
/// hyperparameter (h, lr, dz, nhl) on top of a base configuration.
pub fn expand_grid(
    base: &TrainConfig,
    hs: &[usize],
    lrs: &[f64],
    dzs: &[usize],
    nhls: &[usize],
) -> Vec<TrainConfig> {
    let mut grid = Vec::new();
    for &h in hs {
        for &lr in lrs {
            for &dz in dzs {
                for &nhl in nhls {
                    let mut cfg = base.clone();
                    cfg.net.h = h;
                    cfg.net.nhl = nhl;
                    cfg.net.dz = dz;
                    cfg.lr = lr;
                    grid.push(cfg);
                }
            }
        }
    }
    grid
}

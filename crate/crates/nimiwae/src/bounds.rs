//! The four training objectives: ELBO, IWAE bound, the ignorable
//! importance-weighted bound (IMIWAE), and the non-ignorable bound
//! (NIMIWAE) whose weights include the mask-decoder likelihood.
//!
//! All bounds are assembled on the autodiff tape so one backward
//! pass yields gradients for every weight set. Sampling is ancestral and
//! fully reparametrized: z from the latent posterior, then (for NIMIWAE)
//! the missing entries from the conditional posterior given z. Noise is
//! always injected by the caller, which makes bounds deterministic given
//! a noise matrix and lets tests share noise across bound kinds.
//!
//! Multi-sample layout: with K latent samples and M missing-data samples
//! per latent sample, matrices are stacked in blocks of n rows. Block
//! index `l*K + k` of the (M*K*n)-row stage holds sample (k, l), and the
//! per-row log-weight matrix is n x (K*M) with column `l*K + k`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dist;
use crate::networks::{self, MaskModelSpec, ModelParams, ParamNodes};
use crate::tape::{NodeId, Tape};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Elbo,
    Iwae,
    Imiwae,
    Nimiwae,
}

impl std::fmt::Display for BoundKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BoundKind::Elbo => "elbo",
            BoundKind::Iwae => "iwae",
            BoundKind::Imiwae => "imiwae",
            BoundKind::Nimiwae => "nimiwae",
        };
        f.write_str(s)
    }
}

/// Sample counts for a bound evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundConfig {
    pub kind: BoundKind,
    pub k: usize,
    pub m: usize,
}

impl BoundConfig {
    pub fn new(kind: BoundKind, k: usize, m: usize) -> Result<Self> {
        if k < 1 || m < 1 {
            return Err(Error::Config("K and M must be >= 1".into()));
        }
        match kind {
            BoundKind::Elbo if k != 1 || m != 1 => {
                return Err(Error::Config("elbo requires K = M = 1".into()))
            }
            BoundKind::Iwae | BoundKind::Imiwae if m != 1 => {
                return Err(Error::Config(format!("{kind} requires M = 1")))
            }
            _ => {}
        }
        Ok(BoundConfig { kind, k, m })
    }

    pub fn weights_per_row(&self) -> usize {
        self.k * self.m
    }
}

/// Evaluated lower bound plus the per-row log importance weights.
#[derive(Debug, Clone)]
pub struct BoundEstimate {
    /// Mean over kept rows of `logsumexp(log_weights) - ln(K*M)`.
    pub value: f64,
    /// n x (K*M); column `l*K + k` is sample (k, l). Retained for
    /// imputation and diagnostics; may hold non-finite entries for
    /// aborted rows.
    pub log_weights: Array2<f64>,
    /// Rows excluded from the batch mean because a log-weight was
    /// non-finite.
    pub aborted_rows: Vec<usize>,
}

/// How missing entries are filled before entering the encoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PreImpute {
    #[default]
    Zero,
    Mean,
}

/// A minibatch in model (standardized) scale.
#[derive(Debug, Clone)]
pub struct Batch {
    /// Values with missing entries set to zero.
    pub x_obs: Array2<f64>,
    /// 1 = observed, 0 = missing.
    pub mask: Array2<f64>,
    /// Encoder input: observed values with missing entries pre-imputed.
    pub x_pre: Array2<f64>,
}

impl Batch {
    /// Build from raw values (arbitrary placeholders at missing cells),
    /// the mask, and the pre-imputation rule. `col_means` are the
    /// training-split observed column means used by mean pre-imputation.
    pub fn new(
        values: &Array2<f64>,
        mask: &Array2<f64>,
        pre: PreImpute,
        col_means: &[f64],
    ) -> Result<Self> {
        if values.dim() != mask.dim() {
            return Err(Error::Dim(format!(
                "values {:?} vs mask {:?}",
                values.dim(),
                mask.dim()
            )));
        }
        if pre == PreImpute::Mean && col_means.len() != values.dim().1 {
            return Err(Error::Dim(format!(
                "{} column means for {} columns",
                col_means.len(),
                values.dim().1
            )));
        }
        let (n, p) = values.dim();
        let mut x_obs = Array2::zeros((n, p));
        let mut x_pre = Array2::zeros((n, p));
        for i in 0..n {
            for j in 0..p {
                if mask[(i, j)] == 1.0 {
                    x_obs[(i, j)] = values[(i, j)];
                    x_pre[(i, j)] = values[(i, j)];
                } else if pre == PreImpute::Mean {
                    x_pre[(i, j)] = col_means[j];
                }
            }
        }
        Ok(Batch { x_obs, mask: mask.clone(), x_pre })
    }

    /// Fully observed batch.
    pub fn complete(values: &Array2<f64>) -> Self {
        Batch {
            x_obs: values.clone(),
            mask: Array2::ones(values.dim()),
            x_pre: values.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.x_obs.dim().0
    }

    pub fn p(&self) -> usize {
        self.x_obs.dim().1
    }
}

/// Externally drawn standard-normal noise for the reparametrized samples.
#[derive(Debug, Clone)]
pub struct BoundNoise {
    /// (K*n) x dz.
    pub z: Array2<f64>,
    /// (M*K*n) x p; only consumed by the NIMIWAE bound.
    pub xm: Option<Array2<f64>>,
}

pub fn draw_noise<R: rand::Rng>(
    rng: &mut R,
    n: usize,
    dz: usize,
    p: usize,
    cfg: &BoundConfig,
) -> BoundNoise {
    let z = dist::standard_normal_matrix(rng, cfg.k * n, dz);
    let xm = match cfg.kind {
        BoundKind::Nimiwae => Some(dist::standard_normal_matrix(rng, cfg.m * cfg.k * n, p)),
        _ => None,
    };
    BoundNoise { z, xm }
}

/// Bound objective assembled on a tape, ready for a backward pass.
pub struct BoundGraph {
    pub tape: Tape,
    /// Scalar node: mean over kept rows of the per-row bound.
    pub objective: NodeId,
    pub estimate: BoundEstimate,
    /// (M*K*n) x p sampled missing-entry completions (NIMIWAE only).
    pub xm_samples: Option<NodeId>,
    /// (M*K*n) x 1 mask-decoder log-likelihood per sample (NIMIWAE only);
    /// lets the imputer drop the mask factor from its weights.
    pub log_mask_term: Option<NodeId>,
    /// (K*n) x p decoder mean head, used by the ignorable imputer.
    pub dec_mu: NodeId,
}

pub(crate) fn tile(a: &Array2<f64>, t: usize) -> Array2<f64> {
    let (n, m) = a.dim();
    let mut out = Array2::zeros((n * t, m));
    for i in 0..t {
        out.slice_mut(ndarray::s![i * n..(i + 1) * n, ..]).assign(a);
    }
    out
}

/// Build the bound objective for any kind. `mask_spec` is required for
/// the NIMIWAE kind and ignored otherwise.
pub fn build_graph(
    params: &ModelParams,
    mask_spec: Option<&MaskModelSpec>,
    batch: &Batch,
    noise: &BoundNoise,
    cfg: &BoundConfig,
) -> Result<BoundGraph> {
    let n = batch.n();
    let p = batch.p();
    let dz = params.psi.input_dim();
    let (k, m) = (cfg.k, cfg.m);
    if noise.z.dim() != (k * n, dz) {
        return Err(Error::Dim(format!(
            "noise.z {:?}, expected {:?}",
            noise.z.dim(),
            (k * n, dz)
        )));
    }

    let mut t = Tape::new();
    let nodes: ParamNodes = networks::insert_params(&mut t, params);

    // encoder 1 on [x_pre, r], then K reparametrized latent samples
    let enc_in = {
        let mut e = Array2::zeros((n, 2 * p));
        e.slice_mut(ndarray::s![.., ..p]).assign(&batch.x_pre);
        e.slice_mut(ndarray::s![.., p..]).assign(&batch.mask);
        t.constant(e)
    };
    let (mu_z, sigma_z) = networks::gaussian_forward(&mut t, &nodes.theta1, enc_in, dz)?;
    let mu_zk = t.tile_rows(mu_z, k)?;
    let sigma_zk = t.tile_rows(sigma_z, k)?;
    let eps_z = t.constant(noise.z.clone());
    let z = dist::reparam(&mut t, mu_zk, sigma_zk, eps_z)?;

    // log q1(z | x^o, r) and log p(z), per latent sample
    let q1_terms = dist::gaussian_logpdf_terms(&mut t, z, mu_zk, sigma_zk)?;
    let log_q1 = t.row_sum(q1_terms);
    let pz_terms = dist::std_normal_logpdf_terms(&mut t, z);
    let log_pz = t.row_sum(pz_terms);

    // decoder heads over all p coordinates
    let (mu_x, sigma_x) = networks::gaussian_forward(&mut t, &nodes.psi, z, p)?;

    let x_obs_k = t.constant(tile(&batch.x_obs, k));
    let (log_w, blocks, xm_samples, log_mask_term) = match cfg.kind {
        BoundKind::Elbo | BoundKind::Iwae => {
            // complete-data (or pre-imputed, ignorable-convention)
            // likelihood over all coordinates
            let lik_terms = dist::gaussian_logpdf_terms(&mut t, x_obs_k, mu_x, sigma_x)?;
            let log_lik = t.row_sum(lik_terms);
            let a = t.add(log_lik, log_pz)?;
            let w = t.sub(a, log_q1)?;
            (w, k, None, None)
        }
        BoundKind::Imiwae => {
            // likelihood restricted to observed coordinates; no mask term
            let lik_terms = dist::gaussian_logpdf_terms(&mut t, x_obs_k, mu_x, sigma_x)?;
            let mask_k = t.constant(tile(&batch.mask, k));
            let observed_terms = t.mul(lik_terms, mask_k)?;
            let log_lik = t.row_sum(observed_terms);
            let a = t.add(log_lik, log_pz)?;
            let w = t.sub(a, log_q1)?;
            (w, k, None, None)
        }
        BoundKind::Nimiwae => {
            let spec = mask_spec
                .ok_or_else(|| Error::Config("nimiwae bound requires a mask model spec".into()))?;
            spec.validate(p)?;
            let noise_xm = noise
                .xm
                .as_ref()
                .ok_or_else(|| Error::Config("nimiwae bound requires X^m noise".into()))?;
            if noise_xm.dim() != (m * k * n, p) {
                return Err(Error::Dim(format!(
                    "noise.xm {:?}, expected {:?}",
                    noise_xm.dim(),
                    (m * k * n, p)
                )));
            }

            // encoder 2 on [z, x_pre, r]; M samples of X^m per z sample
            let x_pre_k = t.constant(tile(&batch.x_pre, k));
            let mask_k = t.constant(tile(&batch.mask, k));
            let e2a = t.concat_cols(z, x_pre_k)?;
            let e2_in = t.concat_cols(e2a, mask_k)?;
            let (mu_m, sigma_m) = networks::gaussian_forward(&mut t, &nodes.theta2, e2_in, p)?;
            let mu_ml = t.tile_rows(mu_m, m)?;
            let sigma_ml = t.tile_rows(sigma_m, m)?;
            let eps_m = t.constant(noise_xm.clone());
            let xm = dist::reparam(&mut t, mu_ml, sigma_ml, eps_m)?;

            // log q2 over the missing coordinates only
            let q2_terms = dist::gaussian_logpdf_terms(&mut t, xm, mu_ml, sigma_ml)?;
            let miss_mk = t.constant(tile(&batch.mask, m * k).mapv(|r| 1.0 - r));
            let q2_missing = t.mul(q2_terms, miss_mk)?;
            let log_q2 = t.row_sum(q2_missing);

            // completed data: observed entries fixed, missing entries sampled
            let xm_missing = t.mul(xm, miss_mk)?;
            let x_obs_mk = t.constant(tile(&batch.x_obs, m * k));
            let x_completed = t.add(x_obs_mk, xm_missing)?;

            // generative term over all p coordinates
            let mu_x_ml = t.tile_rows(mu_x, m)?;
            let sigma_x_ml = t.tile_rows(sigma_x, m)?;
            let lik_terms =
                dist::gaussian_logpdf_terms(&mut t, x_completed, mu_x_ml, sigma_x_ml)?;
            let log_lik = t.row_sum(lik_terms);

            // mask decoder on the completed covariates (and z if wired in)
            let covs = t.select_cols(x_completed, spec.covariates.clone())?;
            let mask_in = if spec.include_z {
                let z_ml = t.tile_rows(z, m)?;
                t.concat_cols(covs, z_ml)?
            } else {
                covs
            };
            let probs = networks::mask_forward(&mut t, &nodes.phi, mask_in)?;
            let r_modeled = {
                let full = tile(&batch.mask, m * k);
                let mut sel = Array2::zeros((m * k * n, spec.modeled_cols.len()));
                for (c, &j) in spec.modeled_cols.iter().enumerate() {
                    sel.column_mut(c).assign(&full.column(j));
                }
                t.constant(sel)
            };
            let mask_terms = dist::bernoulli_logpmf_terms(&mut t, r_modeled, probs)?;
            let log_mask = t.row_sum(mask_terms);

            let log_pz_ml = t.tile_rows(log_pz, m)?;
            let log_q1_ml = t.tile_rows(log_q1, m)?;
            let a = t.add(log_lik, log_pz_ml)?;
            let b = t.add(a, log_mask)?;
            let c = t.sub(b, log_q1_ml)?;
            let w = t.sub(c, log_q2)?;
            (w, m * k, Some(xm), Some(log_mask))
        }
    };

    // per-row log-weight matrix, row filtering, and the batch mean
    let log_weight_cols = t.stack_blocks_as_cols(log_w, blocks)?;
    let log_weights = t.value(log_weight_cols).clone();
    let keep: Vec<bool> = (0..n)
        .map(|i| log_weights.row(i).iter().all(|x| x.is_finite()))
        .collect();
    let aborted_rows: Vec<usize> =
        keep.iter().enumerate().filter(|(_, &kp)| !kp).map(|(i, _)| i).collect();
    let kept = n - aborted_rows.len();
    if kept == 0 {
        return Err(Error::AllRowsAborted(n));
    }

    let masked = t.mask_rows(log_weight_cols, keep)?;
    let lse = t.logsumexp_row(masked)?;
    // dropped rows hold ln(K*M) after the all-zero mask, so this shift
    // cancels them from the sum exactly
    let shifted = t.add_scalar(lse, -((k * m) as f64).ln());
    let total = t.sum_all(shifted);
    let objective = t.scale(total, 1.0 / kept as f64);

    let value = t.scalar(objective);
    Ok(BoundGraph {
        tape: t,
        objective,
        estimate: BoundEstimate { value, log_weights, aborted_rows },
        xm_samples,
        log_mask_term,
        dec_mu: mu_x,
    })
}

/// Single-sample evidence lower bound (IWAE bound with K = 1).
pub fn elbo(params: &ModelParams, batch: &Batch, noise: &BoundNoise) -> Result<BoundEstimate> {
    let cfg = BoundConfig::new(BoundKind::Elbo, 1, 1)?;
    Ok(build_graph(params, None, batch, noise, &cfg)?.estimate)
}

/// K-sample importance-weighted bound on complete (or pre-imputed) data.
pub fn iwae_bound(
    params: &ModelParams,
    batch: &Batch,
    noise: &BoundNoise,
    k: usize,
) -> Result<BoundEstimate> {
    let cfg = BoundConfig::new(BoundKind::Iwae, k, 1)?;
    Ok(build_graph(params, None, batch, noise, &cfg)?.estimate)
}

/// Ignorable bound: weights use only observed coordinates of the
/// generative likelihood, with no mask-decoder term.
pub fn imiwae_bound(
    params: &ModelParams,
    batch: &Batch,
    noise: &BoundNoise,
    k: usize,
) -> Result<BoundEstimate> {
    let cfg = BoundConfig::new(BoundKind::Imiwae, k, 1)?;
    Ok(build_graph(params, None, batch, noise, &cfg)?.estimate)
}

/// Non-ignorable bound over K latent samples and M missing-data samples
/// per latent sample.
pub fn nimiwae_bound(
    params: &ModelParams,
    mask_spec: &MaskModelSpec,
    batch: &Batch,
    noise: &BoundNoise,
    k: usize,
    m: usize,
) -> Result<BoundEstimate> {
    let cfg = BoundConfig::new(BoundKind::Nimiwae, k, m)?;
    Ok(build_graph(params, Some(mask_spec), batch, noise, &cfg)?.estimate)
}

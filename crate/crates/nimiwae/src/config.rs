//! Structured (TOML) configuration files shared by the CLI subcommands.
//! Every key can be overridden by a command-line flag of the same name.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::{BoundKind, PreImpute};
use crate::networks::{MaskMode, NetworkConfig};
use crate::simulate::{CoefScale, Mechanism, SimSpec};
use crate::train::{MaskSpecOptions, TrainConfig, ValidationCriterion};
use crate::{Error, Result};

#[derive(Debug, Clone, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<DataSection>,
    pub mask: Option<MaskSection>,
    pub model: Option<ModelSection>,
    pub training: Option<TrainingSection>,
    pub experiment: Option<ExperimentSection>,
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// "simulate" or "csv".
    pub source: Option<String>,
    pub path: Option<PathBuf>,
    pub missing_tokens: Option<Vec<String>>,
    pub simulate: Option<SimulateSection>,
    /// Seed for the 6:2:2 split.
    pub split_seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub d: Option<usize>,
    pub seed: Option<u64>,
}

/// Missingness-mask simulation settings.
#[derive(Debug, Clone, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MaskSection {
    pub mechanism: Option<String>,
    /// Percent of all entries masked, e.g. 25.
    pub pct_missing: Option<f64>,
    pub missing_features: Option<Vec<usize>>,
    pub coef_location: Option<f64>,
    pub coef_scale: Option<f64>,
    /// "log" (default) or "arithmetic".
    pub coef_scale_mode: Option<String>,
}

#[derive(Debug, Clone, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub h: Option<usize>,
    pub nhl: Option<usize>,
    pub dz: Option<usize>,
    /// "logistic" (default) or "deep".
    pub mask_mode: Option<String>,
    pub include_z: Option<bool>,
    pub covariates: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    /// "elbo", "iwae", "imiwae", or "nimiwae".
    pub bound: Option<String>,
    pub k: Option<usize>,
    pub m: Option<usize>,
    pub lr: Option<f64>,
    pub bs: Option<usize>,
    pub epochs: Option<usize>,
    /// "zero" (default) or "mean".
    pub pre_impute: Option<String>,
    pub seed: Option<u64>,
    /// "bound" (default) or "masked_l1".
    pub validation: Option<String>,
    pub grid: Option<GridSection>,
}

#[derive(Debug, Clone, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub h: Option<Vec<usize>>,
    pub lr: Option<Vec<f64>>,
    pub dz: Option<Vec<usize>>,
    pub nhl: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Subset of {"nimiwae", "imiwae", "mean"}.
    pub methods: Option<Vec<String>>,
    /// Replicate seeds; each seed is one independent dataset draw.
    pub seeds: Option<Vec<u64>>,
    pub mechanisms: Option<Vec<String>>,
    pub pct_missing: Option<Vec<f64>>,
    /// Sample counts for the final imputation pass.
    pub eval_k: Option<usize>,
    pub eval_m: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Resolve the training configuration with library defaults for
    /// anything unspecified.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        if let Some(m) = &self.model {
            if let Some(h) = m.h {
                cfg.net.h = h;
            }
            if let Some(nhl) = m.nhl {
                cfg.net.nhl = nhl;
            }
            if let Some(dz) = m.dz {
                cfg.net.dz = dz;
            }
            cfg.mask = MaskSpecOptions {
                covariates: m.covariates.clone(),
                include_z: m.include_z.unwrap_or(false),
                mode: match m.mask_mode.as_deref() {
                    None | Some("logistic") => MaskMode::Logistic,
                    Some("deep") => MaskMode::Deep,
                    Some(other) => {
                        return Err(Error::Config(format!("unknown mask_mode {other:?}")))
                    }
                },
            };
        }
        if let Some(t) = &self.training {
            if let Some(b) = &t.bound {
                cfg.bound = parse_bound(b)?;
            }
            if let Some(k) = t.k {
                cfg.k = k;
            }
            if let Some(m) = t.m {
                cfg.m = m;
            }
            if let Some(lr) = t.lr {
                cfg.lr = lr;
            }
            if let Some(bs) = t.bs {
                cfg.bs = bs;
            }
            if let Some(e) = t.epochs {
                cfg.epochs = e;
            }
            if let Some(p) = &t.pre_impute {
                cfg.pre_impute = parse_pre_impute(p)?;
            }
            if let Some(s) = t.seed {
                cfg.seed = s;
            }
            if let Some(v) = &t.validation {
                cfg.validation = match v.as_str() {
                    "bound" => ValidationCriterion::Bound,
                    "masked_l1" => ValidationCriterion::MaskedL1,
                    other => {
                        return Err(Error::Config(format!("unknown validation {other:?}")))
                    }
                };
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn net_config(&self) -> Result<NetworkConfig> {
        Ok(self.train_config()?.net)
    }

    /// Resolve the simulation spec ([data.simulate] plus [mask]).
    pub fn sim_spec(&self) -> Result<SimSpec> {
        let sim = self
            .data
            .as_ref()
            .and_then(|d| d.simulate.as_ref())
            .cloned()
            .unwrap_or_default();
        let mask = self.mask.clone().unwrap_or_default();
        let mechanism: Mechanism = mask
            .mechanism
            .as_deref()
            .unwrap_or("MCAR")
            .parse()?;
        let mut spec = SimSpec::new(
            sim.n.unwrap_or(2000),
            sim.p.unwrap_or(8),
            sim.d.unwrap_or(2),
            sim.seed.unwrap_or(0),
            mechanism,
        );
        if let Some(pct) = mask.pct_missing {
            spec.target_missing = pct / 100.0;
        }
        spec.missing_features = mask.missing_features.clone();
        if let Some(l) = mask.coef_location {
            spec.coef_location = l;
        }
        if let Some(s) = mask.coef_scale {
            spec.coef_scale = s;
        }
        if let Some(m) = &mask.coef_scale_mode {
            spec.coef_scale_mode = match m.as_str() {
                "log" => CoefScale::Log,
                "arithmetic" => CoefScale::Arithmetic,
                other => return Err(Error::Config(format!("unknown coef_scale_mode {other:?}"))),
            };
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn grid_lists(&self) -> Option<&GridSection> {
        self.training.as_ref().and_then(|t| t.grid.as_ref())
    }

    pub fn split_seed(&self) -> u64 {
        self.data.as_ref().and_then(|d| d.split_seed).unwrap_or(0)
    }

    pub fn missing_tokens(&self) -> Vec<String> {
        self.data
            .as_ref()
            .and_then(|d| d.missing_tokens.clone())
            .unwrap_or_else(|| {
                crate::dataio::DEFAULT_MISSING_TOKENS
                    .iter()
                    .map(|s| s.to_string())
                    .collect()
            })
    }
}

pub fn parse_bound(s: &str) -> Result<BoundKind> {
    match s.to_ascii_lowercase().as_str() {
        "elbo" => Ok(BoundKind::Elbo),
        "iwae" => Ok(BoundKind::Iwae),
        "imiwae" => Ok(BoundKind::Imiwae),
        "nimiwae" => Ok(BoundKind::Nimiwae),
        other => Err(Error::Config(format!("unknown bound {other:?}"))),
    }
}

pub fn parse_pre_impute(s: &str) -> Result<PreImpute> {
    match s.to_ascii_lowercase().as_str() {
        "zero" => Ok(PreImpute::Zero),
        "mean" => Ok(PreImpute::Mean),
        other => Err(Error::Config(format!("unknown pre_impute {other:?}"))),
    }
}

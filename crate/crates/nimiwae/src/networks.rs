//! The four feed-forward networks: Encoder 1 (latent posterior),
//! Decoder 1 (generative model), Encoder 2 (missing-data posterior), and
//! the mask decoder (missingness model).
//!
//! Gaussian networks emit a mean head and a raw-σ head; σ is
//! `softplus(raw) + SIGMA_FLOOR` so near-constant features cannot drive
//! the likelihood to infinity. The mask decoder in logistic mode has no
//! hidden layers, so its weights read directly as logistic-regression
//! coefficients.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::clamp_probs;
use crate::math::{sigmoid, softplus};
use crate::tape::{NodeId, Tape};
use crate::{Error, Result};

/// Additive floor on every Gaussian σ head.
pub const SIGMA_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Activation {
    #[default]
    Tanh,
}

/// Architecture hyperparameters shared by the Gaussian networks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Nodes per hidden layer.
    pub h: usize,
    /// Number of hidden layers.
    pub nhl: usize,
    /// Latent dimension.
    pub dz: usize,
    pub activation: Activation,
}

impl NetworkConfig {
    pub fn new(h: usize, nhl: usize, dz: usize) -> Result<Self> {
        let cfg = NetworkConfig { h, nhl, dz, activation: Activation::Tanh };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.h < 1 {
            return Err(Error::Config("h must be >= 1".into()));
        }
        if self.dz < 1 {
            return Err(Error::Config("dz must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// No hidden layers + sigmoid: exactly logistic regression.
    #[default]
    Logistic,
    /// Hidden layers (width/count from `NetworkConfig`) before the sigmoid.
    Deep,
}

/// What the mask decoder sees and which mask columns it models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskModelSpec {
    /// Feature indices fed as covariates (default: all features).
    pub covariates: Vec<usize>,
    /// Whether the latent sample is appended to the covariates.
    pub include_z: bool,
    /// Mask columns modeled; must have missingness in the training split.
    pub modeled_cols: Vec<usize>,
    pub mode: MaskMode,
}

impl MaskModelSpec {
    /// Spec over all features as covariates, modeling the given columns.
    pub fn all_features(p: usize, modeled_cols: Vec<usize>) -> Result<Self> {
        let spec = MaskModelSpec {
            covariates: (0..p).collect(),
            include_z: false,
            modeled_cols,
            mode: MaskMode::Logistic,
        };
        spec.validate(p)?;
        Ok(spec)
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        for &c in self.covariates.iter().chain(&self.modeled_cols) {
            if c >= p {
                return Err(Error::CovariateOutOfRange(c, p));
            }
        }
        Ok(())
    }

    /// Validate modeled columns against columns actually missing in training.
    pub fn check_modeled_subset(&self, train_missing_cols: &[usize]) -> Result<()> {
        for &c in &self.modeled_cols {
            if !train_missing_cols.contains(&c) {
                return Err(Error::Config(format!(
                    "mask column {c} modeled but fully observed in the training split"
                )));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self, dz: usize) -> usize {
        self.covariates.len() + if self.include_z { dz } else { 0 }
    }
}

/// One dense layer; bias is a 1 x out row vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array2<f64>,
}

/// Hidden layers use the configured activation; the final layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    fn init(dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut layers = Vec::new();
        for win in dims.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| {
                (2.0 * rng.random::<f64>() - 1.0) * bound
            });
            layers.push(Dense { w, b: Array2::zeros((1, fan_out)) });
        }
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.dim().0
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty mlp").w.dim().1
    }
}

fn mlp_dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut dims = vec![input];
    dims.extend_from_slice(hidden);
    dims.push(output);
    dims
}

/// The four weight sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Encoder 1: [x_pre, r] -> latent Gaussian heads.
    pub theta1: Mlp,
    /// Decoder 1: z -> feature Gaussian heads.
    pub psi: Mlp,
    /// Encoder 2: [z, x_pre, r] -> missing-feature Gaussian heads.
    pub theta2: Mlp,
    /// Mask decoder: covariates (+ z) -> missingness logits.
    pub phi: Mlp,
}

impl ModelParams {
    /// All parameter matrices in a fixed order (the registration order used
    /// on tapes, by the optimizer, and in checkpoints).
    pub fn mats(&self) -> Vec<&Array2<f64>> {
        self.networks()
            .into_iter()
            .flat_map(|(_, mlp)| mlp.layers.iter().flat_map(|l| [&l.w, &l.b]))
            .collect()
    }

    pub fn mats_mut(&mut self) -> Vec<&mut Array2<f64>> {
        [&mut self.theta1, &mut self.psi, &mut self.theta2, &mut self.phi]
            .into_iter()
            .flat_map(|mlp| mlp.layers.iter_mut().flat_map(|l| [&mut l.w, &mut l.b]))
            .collect()
    }

    pub fn mat_names(&self) -> Vec<String> {
        self.networks()
            .into_iter()
            .flat_map(|(name, mlp)| {
                (0..mlp.layers.len()).flat_map(move |i| {
                    [format!("{name}.{i}.w"), format!("{name}.{i}.b")]
                })
            })
            .collect()
    }

    fn networks(&self) -> [(&'static str, &Mlp); 4] {
        [
            ("theta1", &self.theta1),
            ("psi", &self.psi),
            ("theta2", &self.theta2),
            ("phi", &self.phi),
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.mats().iter().all(|m| m.iter().all(|x| x.is_finite()))
    }

    /// Index of the first phi matrix in `mats()` order; gradients past this
    /// index belong to the mask decoder.
    pub fn phi_offset(&self) -> usize {
        2 * (self.theta1.layers.len() + self.psi.layers.len() + self.theta2.layers.len())
    }
}

/// Xavier-uniform weights, zero biases; deterministic in the seed.
pub fn init_params(
    config: &NetworkConfig,
    p: usize,
    mask_spec: &MaskModelSpec,
    seed: u64,
) -> Result<ModelParams> {
    config.validate()?;
    mask_spec.validate(p)?;
    let hidden: Vec<usize> = vec![config.h; config.nhl];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let theta1 = Mlp::init(&mlp_dims(2 * p, &hidden, 2 * config.dz), &mut rng);
    let psi = Mlp::init(&mlp_dims(config.dz, &hidden, 2 * p), &mut rng);
    let theta2 = Mlp::init(&mlp_dims(config.dz + 2 * p, &hidden, 2 * p), &mut rng);
    let mask_hidden: Vec<usize> = match mask_spec.mode {
        MaskMode::Logistic => Vec::new(),
        MaskMode::Deep => hidden.clone(),
    };
    let phi = Mlp::init(
        &mlp_dims(
            mask_spec.input_dim(config.dz),
            &mask_hidden,
            mask_spec.modeled_cols.len(),
        ),
        &mut rng,
    );
    Ok(ModelParams { theta1, psi, theta2, phi })
}

// ---- tape wiring ----------------------------------------------------------

/// Per-network (weight, bias) node ids after registering all parameters.
pub struct ParamNodes {
    pub theta1: Vec<(NodeId, NodeId)>,
    pub psi: Vec<(NodeId, NodeId)>,
    pub theta2: Vec<(NodeId, NodeId)>,
    pub phi: Vec<(NodeId, NodeId)>,
}

/// Register every parameter matrix on the tape, in `mats()` order, so the
/// backward pass returns gradients aligned with the optimizer state.
pub fn insert_params(t: &mut Tape, params: &ModelParams) -> ParamNodes {
    let mut insert = |mlp: &Mlp| -> Vec<(NodeId, NodeId)> {
        mlp.layers
            .iter()
            .map(|l| (t.param(l.w.clone()), t.param(l.b.clone())))
            .collect()
    };
    let theta1 = insert(&params.theta1);
    let psi = insert(&params.psi);
    let theta2 = insert(&params.theta2);
    let phi = insert(&params.phi);
    ParamNodes { theta1, psi, theta2, phi }
}

/// MLP forward: tanh on hidden layers, linear output.
pub fn mlp_forward(t: &mut Tape, layers: &[(NodeId, NodeId)], input: NodeId) -> Result<NodeId> {
    let mut cur = input;
    for (i, &(w, b)) in layers.iter().enumerate() {
        let lin = t.matmul(cur, w)?;
        cur = t.broadcast_add_row(lin, b)?;
        if i + 1 < layers.len() {
            cur = t.tanh(cur);
        }
    }
    Ok(cur)
}

/// Split a 2d-wide linear output into (μ, σ) heads with the softplus floor.
pub fn gaussian_heads(t: &mut Tape, raw: NodeId, out_dim: usize) -> Result<(NodeId, NodeId)> {
    let mu = t.select_cols(raw, (0..out_dim).collect())?;
    let raw_sigma = t.select_cols(raw, (out_dim..2 * out_dim).collect())?;
    let sp = t.softplus(raw_sigma);
    let sigma = t.add_scalar(sp, SIGMA_FLOOR);
    Ok((mu, sigma))
}

/// Gaussian network forward on the tape: returns (μ, σ) node ids.
pub fn gaussian_forward(
    t: &mut Tape,
    layers: &[(NodeId, NodeId)],
    input: NodeId,
    out_dim: usize,
) -> Result<(NodeId, NodeId)> {
    let raw = mlp_forward(t, layers, input)?;
    gaussian_heads(t, raw, out_dim)
}

/// Mask decoder forward on the tape: logits -> sigmoid -> clamped probs.
pub fn mask_forward(t: &mut Tape, layers: &[(NodeId, NodeId)], input: NodeId) -> Result<NodeId> {
    let logits = mlp_forward(t, layers, input)?;
    let probs = t.sigmoid(logits);
    Ok(clamp_probs(t, probs))
}

// ---- plain (non-tape) evaluation ------------------------------------------

fn mlp_eval(mlp: &Mlp, input: &Array2<f64>) -> Array2<f64> {
    let mut cur = input.clone();
    for (i, l) in mlp.layers.iter().enumerate() {
        let mut lin = cur.dot(&l.w);
        lin += &l.b.row(0);
        cur = if i + 1 < mlp.layers.len() {
            lin.mapv(f64::tanh)
        } else {
            lin
        };
    }
    cur
}

fn gaussian_eval(mlp: &Mlp, input: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let raw = mlp_eval(mlp, input);
    let d = raw.dim().1 / 2;
    let mu = raw.slice(ndarray::s![.., ..d]).to_owned();
    let sigma = raw
        .slice(ndarray::s![.., d..])
        .mapv(|x| softplus(x) + SIGMA_FLOOR);
    (mu, sigma)
}

/// Latent posterior heads from pre-imputed inputs and the mask.
pub fn encoder1_forward(
    params: &ModelParams,
    x_preimputed: &Array2<f64>,
    r: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let input = hstack(x_preimputed, r)?;
    expect_input(&params.theta1, &input, "encoder 1")?;
    Ok(gaussian_eval(&params.theta1, &input))
}

/// Generative heads over all features from latent samples.
pub fn decoder1_forward(
    params: &ModelParams,
    z: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    expect_input(&params.psi, z, "decoder 1")?;
    Ok(gaussian_eval(&params.psi, z))
}

/// Missing-data posterior heads; emits parameters for every coordinate,
/// the bound consumes only the missing ones.
pub fn encoder2_forward(
    params: &ModelParams,
    z: &Array2<f64>,
    x_preimputed: &Array2<f64>,
    r: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let input = hstack(&hstack(z, x_preimputed)?, r)?;
    expect_input(&params.theta2, &input, "encoder 2")?;
    Ok(gaussian_eval(&params.theta2, &input))
}

/// Missingness probabilities for the modeled columns, from completed data
/// (missing entries filled with current samples) and optionally z.
pub fn mask_decoder_forward(
    params: &ModelParams,
    x_completed: &Array2<f64>,
    z: &Array2<f64>,
    spec: &MaskModelSpec,
) -> Result<Array2<f64>> {
    spec.validate(x_completed.dim().1)?;
    let mut cols = Array2::zeros((x_completed.dim().0, spec.covariates.len()));
    for (c, &j) in spec.covariates.iter().enumerate() {
        cols.column_mut(c).assign(&x_completed.column(j));
    }
    let input = if spec.include_z { hstack(&cols, z)? } else { cols };
    expect_input(&params.phi, &input, "mask decoder")?;
    let logits = mlp_eval(&params.phi, &input);
    Ok(logits.mapv(|x| sigmoid(x).clamp(crate::dist::PROB_CLAMP, 1.0 - crate::dist::PROB_CLAMP)))
}

fn expect_input(mlp: &Mlp, input: &Array2<f64>, what: &str) -> Result<()> {
    if mlp.input_dim() != input.dim().1 {
        return Err(Error::Dim(format!(
            "{what}: expected {} input columns, got {}",
            mlp.input_dim(),
            input.dim().1
        )));
    }
    Ok(())
}

fn hstack(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    if a.dim().0 != b.dim().0 {
        return Err(Error::Dim(format!(
            "hstack: {} vs {} rows",
            a.dim().0,
            b.dim().0
        )));
    }
    let mut out = Array2::zeros((a.dim().0, a.dim().1 + b.dim().1));
    out.slice_mut(ndarray::s![.., ..a.dim().1]).assign(a);
    out.slice_mut(ndarray::s![.., a.dim().1..]).assign(b);
    Ok(out)
}

// ---- checkpoints -----------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CheckpointMat {
    name: String,
    shape: (usize, usize),
    /// Row-major values.
    data: Vec<f64>,
}

/// Self-contained checkpoint: architecture plus flat parameter list.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub p: usize,
    pub config: NetworkConfig,
    pub mask_spec: MaskModelSpec,
    params: Vec<CheckpointMat>,
}

pub const CHECKPOINT_FORMAT: &str = "nimiwae-checkpoint-v1";

impl Checkpoint {
    pub fn from_params(
        params: &ModelParams,
        p: usize,
        config: &NetworkConfig,
        mask_spec: &MaskModelSpec,
    ) -> Result<Self> {
        if !params.all_finite() {
            return Err(Error::NonFiniteParams("refusing to checkpoint".into()));
        }
        let mats = params.mats();
        let names = params.mat_names();
        Ok(Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            p,
            config: *config,
            mask_spec: mask_spec.clone(),
            params: mats
                .iter()
                .zip(names)
                .map(|(m, name)| CheckpointMat {
                    name,
                    shape: m.dim(),
                    data: m.iter().copied().collect(),
                })
                .collect(),
        })
    }

    pub fn into_params(self) -> Result<(ModelParams, usize, NetworkConfig, MaskModelSpec)> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        // rebuild the skeleton from the stored architecture, then fill
        let mut params = init_params(&self.config, self.p, &self.mask_spec, 0)?;
        let names = params.mat_names();
        if names.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} matrices, found {}",
                names.len(),
                self.params.len()
            )));
        }
        {
            let mut mats = params.mats_mut();
            for (i, cm) in self.params.iter().enumerate() {
                if cm.name != names[i] {
                    return Err(Error::Checkpoint(format!(
                        "matrix {i}: expected name {:?}, found {:?}",
                        names[i], cm.name
                    )));
                }
                if cm.shape != mats[i].dim() {
                    return Err(Error::Checkpoint(format!(
                        "matrix {}: expected shape {:?}, found {:?}",
                        cm.name,
                        mats[i].dim(),
                        cm.shape
                    )));
                }
                if cm.data.len() != cm.shape.0 * cm.shape.1 {
                    return Err(Error::Checkpoint(format!(
                        "matrix {}: {} values for shape {:?}",
                        cm.name,
                        cm.data.len(),
                        cm.shape
                    )));
                }
                *mats[i] = Array2::from_shape_vec(cm.shape, cm.data.clone())
                    .map_err(|e| Error::Checkpoint(e.to_string()))?;
            }
        }
        Ok((params, self.p, self.config, self.mask_spec))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&json)?)
    }
}

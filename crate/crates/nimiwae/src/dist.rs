//! Diagonal Gaussian and Bernoulli log-densities with reparametrized
//! sampling, in two forms: plain `f64` evaluators and tape-graph builders
//! that the bound objectives differentiate through.

use ndarray::Array2;

use crate::tape::{NodeId, Tape};
use crate::{Error, Result};

pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
/// Bernoulli probabilities are clamped into [PROB_CLAMP, 1-PROB_CLAMP]
/// before any log, so saturated mask decoders cannot emit infinite
/// log-weights.
pub const PROB_CLAMP: f64 = 1e-7;

/// Mean/std pairs of an independent (diagonal-covariance) Gaussian.
#[derive(Debug, Clone)]
pub struct DiagGaussianParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl DiagGaussianParams {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(Error::Dim(format!(
                "mu has {} entries, sigma {}",
                mu.len(),
                sigma.len()
            )));
        }
        if let Some(i) = sigma.iter().position(|&s| s <= 0.0) {
            return Err(Error::NonPositiveSigma(i));
        }
        Ok(DiagGaussianParams { mu, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Per-column missingness probabilities, clamped on construction.
#[derive(Debug, Clone)]
pub struct BernoulliParams {
    pub probs: Vec<f64>,
}

impl BernoulliParams {
    pub fn new(probs: Vec<f64>) -> Self {
        BernoulliParams {
            probs: probs
                .into_iter()
                .map(|p| p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
                .collect(),
        }
    }
}

/// `Σ_j [-0.5 ln(2π) - ln σ_j - 0.5((x_j - μ_j)/σ_j)^2]`
pub fn gaussian_logpdf(x: &[f64], params: &DiagGaussianParams) -> Result<f64> {
    if x.len() != params.dim() {
        return Err(Error::Dim(format!(
            "x has {} entries, params {}",
            x.len(),
            params.dim()
        )));
    }
    let mut acc = 0.0;
    for ((xi, mu), sigma) in x.iter().zip(&params.mu).zip(&params.sigma) {
        let z = (xi - mu) / sigma;
        acc += -HALF_LN_2PI - sigma.ln() - 0.5 * z * z;
    }
    Ok(acc)
}

/// `μ + σ ⊙ ε` with externally supplied standard-normal noise.
pub fn reparam_sample(params: &DiagGaussianParams, eps: &[f64]) -> Result<Vec<f64>> {
    if eps.len() != params.dim() {
        return Err(Error::Dim(format!(
            "eps has {} entries, params {}",
            eps.len(),
            params.dim()
        )));
    }
    Ok(params
        .mu
        .iter()
        .zip(&params.sigma)
        .zip(eps)
        .map(|((mu, sigma), e)| mu + sigma * e)
        .collect())
}

/// `Σ_j [r_j ln p_j + (1-r_j) ln(1-p_j)]` with clamped probabilities.
pub fn bernoulli_logpmf(r: &[f64], params: &BernoulliParams) -> Result<f64> {
    if r.len() != params.probs.len() {
        return Err(Error::Dim(format!(
            "r has {} entries, params {}",
            r.len(),
            params.probs.len()
        )));
    }
    if let Some((i, &v)) = r.iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0) {
        return Err(Error::NonBinary { index: i, value: v });
    }
    Ok(r.iter()
        .zip(&params.probs)
        .map(|(&ri, &p)| {
            if ri == 1.0 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum())
}

// ---- tape-graph builders -------------------------------------------------

/// Elementwise Gaussian log-density terms: each entry of the result is
/// the log-density of one coordinate. Row-sum (possibly after masking)
/// gives per-row log-densities.
pub fn gaussian_logpdf_terms(
    t: &mut Tape,
    x: NodeId,
    mu: NodeId,
    sigma: NodeId,
) -> Result<NodeId> {
    let diff = t.sub(x, mu)?;
    let z = t.div(diff, sigma)?;
    let z2 = t.square(z);
    let quad = t.scale(z2, -0.5);
    let ln_sigma = t.ln(sigma);
    let a = t.sub(quad, ln_sigma)?;
    Ok(t.add_scalar(a, -HALF_LN_2PI))
}

/// Standard-normal log-density terms: `-0.5 ln(2π) - 0.5 x^2` per entry.
pub fn std_normal_logpdf_terms(t: &mut Tape, x: NodeId) -> NodeId {
    let x2 = t.square(x);
    let quad = t.scale(x2, -0.5);
    t.add_scalar(quad, -HALF_LN_2PI)
}

/// `μ + σ ⊙ ε` on the tape; `eps` must be a constant leaf.
pub fn reparam(t: &mut Tape, mu: NodeId, sigma: NodeId, eps: NodeId) -> Result<NodeId> {
    let scaled = t.mul(sigma, eps)?;
    t.add(mu, scaled)
}

/// Elementwise Bernoulli log-pmf terms from clamped probabilities:
/// `r ln p + (1-r) ln(1-p)`. The mask `r` must be a constant 0/1 leaf.
pub fn bernoulli_logpmf_terms(t: &mut Tape, r: NodeId, probs: NodeId) -> Result<NodeId> {
    let ln_p = t.ln(probs);
    let hit = t.mul(r, ln_p)?;
    let one_minus_p = {
        let neg = t.neg(probs);
        t.add_scalar(neg, 1.0)
    };
    let ln_q = t.ln(one_minus_p);
    let one_minus_r = {
        let neg = t.neg(r);
        t.add_scalar(neg, 1.0)
    };
    let miss = t.mul(one_minus_r, ln_q)?;
    t.add(hit, miss)
}

/// Clamp raw probabilities into the legal Bernoulli range on the tape.
pub fn clamp_probs(t: &mut Tape, probs: NodeId) -> NodeId {
    t.clamp(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Standard-normal noise matrix drawn from the given RNG.
pub fn standard_normal_matrix<R: rand::Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    use rand_distr::Distribution;
    Array2::from_shape_fn((rows, cols), |_| rand_distr::StandardNormal.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_normal_logpdf_at_zero() {
        let p = DiagGaussianParams::new(vec![0.0], vec![1.0]).unwrap();
        let v = gaussian_logpdf(&[0.0], &p).unwrap();
        assert!((v - -0.918_938_533_204_672_7).abs() < 1e-15);
    }

    #[test]
    fn standard_normal_logpdf_at_one() {
        // frozen from the closed form: -0.5 ln(2π) - 0.5
        let p = DiagGaussianParams::new(vec![0.0], vec![1.0]).unwrap();
        let v = gaussian_logpdf(&[1.0], &p).unwrap();
        assert!((v - -1.418_938_533_204_672_7).abs() < 1e-15);
    }

    #[test]
    fn logpdf_at_mean_scales_with_dimension() {
        for d in [1usize, 3, 17] {
            let mu: Vec<f64> = (0..d).map(|i| i as f64 - 2.0).collect();
            let p = DiagGaussianParams::new(mu.clone(), vec![1.0; d]).unwrap();
            let v = gaussian_logpdf(&mu, &p).unwrap();
            assert!((v - -(d as f64) * 0.918_938_533_204_672_7).abs() < 1e-12);
        }
    }

    #[test]
    fn logpdf_error_paths() {
        assert!(DiagGaussianParams::new(vec![0.0], vec![0.0]).is_err());
        assert!(DiagGaussianParams::new(vec![0.0], vec![-1.0]).is_err());
        let p = DiagGaussianParams::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(gaussian_logpdf(&[0.0], &p), Err(Error::Dim(_))));
    }

    #[test]
    fn logpdf_integrates_to_one_on_grid() {
        // trapezoid quadrature of exp(logpdf) over [-10, 10]
        let p = DiagGaussianParams::new(vec![0.3], vec![0.8]).unwrap();
        let n = 20_000;
        let (lo, hi) = (-10.0, 10.0);
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += w * gaussian_logpdf(&[x], &p).unwrap().exp();
        }
        total *= h;
        assert!((total - 1.0).abs() < 1e-3, "integral {total}");
    }

    #[test]
    fn reparam_identity_cases() {
        let p = DiagGaussianParams::new(vec![1.0, -2.0], vec![0.5, 2.0]).unwrap();
        assert_eq!(reparam_sample(&p, &[0.0, 0.0]).unwrap(), vec![1.0, -2.0]);
        let std = DiagGaussianParams::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(reparam_sample(&std, &[0.7, -0.3]).unwrap(), vec![0.7, -0.3]);
        assert!(reparam_sample(&p, &[0.0]).is_err());
    }

    #[test]
    fn reparam_monte_carlo_mean() {
        use rand_distr::Distribution;
        let p = DiagGaussianParams::new(vec![2.5], vec![1.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000usize;
        let mut acc = 0.0;
        for _ in 0..n {
            let e: f64 = rand_distr::StandardNormal.sample(&mut rng);
            acc += reparam_sample(&p, &[e]).unwrap()[0];
        }
        let mean = acc / n as f64;
        let tol = 4.0 * 1.5 / (n as f64).sqrt();
        assert!((mean - 2.5).abs() < tol, "mean {mean}");
    }

    #[test]
    fn reparam_gradients_are_identity_and_noise() {
        // d(mu + sigma*eps)/dmu = 1, d/dsigma = eps; checked through the tape
        let mut t = Tape::new();
        let mu = t.param(arr2(&[[0.3, -0.7]]));
        let sigma = t.param(arr2(&[[1.2, 0.4]]));
        let eps = t.constant(arr2(&[[0.9, -1.1]]));
        let z = reparam(&mut t, mu, sigma, eps).unwrap();
        let s = t.sum_all(z);
        let g = t.backward(s).unwrap();
        assert_eq!(g[0], arr2(&[[1.0, 1.0]]));
        assert_eq!(g[1], arr2(&[[0.9, -1.1]]));
    }

    #[test]
    fn bernoulli_frozen_values() {
        let p = BernoulliParams::new(vec![0.5]);
        let v = bernoulli_logpmf(&[1.0], &p).unwrap();
        assert!((v - -std::f64::consts::LN_2).abs() < 1e-15);
        let v = bernoulli_logpmf(&[0.0], &p).unwrap();
        assert!((v - -std::f64::consts::LN_2).abs() < 1e-15);
        // r=(1,0), p=(0.9, 0.2) -> ln 0.9 + ln 0.8
        let p = BernoulliParams::new(vec![0.9, 0.2]);
        let v = bernoulli_logpmf(&[1.0, 0.0], &p).unwrap();
        assert!((v - -0.328_504_066_972_036).abs() < 1e-12);
    }

    #[test]
    fn bernoulli_rejects_non_binary() {
        let p = BernoulliParams::new(vec![0.5]);
        assert!(matches!(
            bernoulli_logpmf(&[0.5], &p),
            Err(Error::NonBinary { index: 0, .. })
        ));
    }

    #[test]
    fn bernoulli_nonpositive_and_clamped() {
        // log-pmf <= 0 always; == 0 only via clamp saturation
        let p = BernoulliParams::new(vec![1.0]);
        assert_eq!(p.probs[0], 1.0 - PROB_CLAMP);
        let v = bernoulli_logpmf(&[1.0], &p).unwrap();
        assert!(v <= 0.0 && v > -2e-7);
        let mut worst: f64 = 0.0;
        for (r, pr) in [(1.0, 0.01), (0.0, 0.97), (1.0, 0.5)] {
            let v = bernoulli_logpmf(&[r], &BernoulliParams::new(vec![pr])).unwrap();
            worst = worst.min(v);
            assert!(v <= 0.0);
        }
        assert!(worst < -0.03);
    }

    #[test]
    fn graph_terms_match_plain_evaluators() {
        let mut t = Tape::new();
        let x = t.constant(arr2(&[[0.4, -1.2], [2.0, 0.0]]));
        let mu = t.constant(arr2(&[[0.0, 0.5], [1.0, -0.5]]));
        let sigma = t.constant(arr2(&[[1.0, 0.7], [2.0, 1.3]]));
        let terms = gaussian_logpdf_terms(&mut t, x, mu, sigma).unwrap();
        let rows = t.row_sum(terms);
        for i in 0..2 {
            let p = DiagGaussianParams::new(
                t.value(mu).row(i).to_vec(),
                t.value(sigma).row(i).to_vec(),
            )
            .unwrap();
            let want = gaussian_logpdf(&t.value(x).row(i).to_vec(), &p).unwrap();
            assert!((t.value(rows)[(i, 0)] - want).abs() < 1e-12);
        }
    }
}

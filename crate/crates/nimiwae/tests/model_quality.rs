//! Trained-model quality checks against closed-form oracles.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

use nimiwae::bounds::BoundKind;
use nimiwae::dataio::{MaskedDataset, Split};
use nimiwae::impute::{impute, RowSel, WeightMode};
use nimiwae::networks::NetworkConfig;
use nimiwae::train::{train, TrainConfig};

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

/// Bivariate Gaussian with one coordinate MCAR-masked: after training,
/// the model's imputation error must approach the analytic
/// conditional-expectation imputer's error within 10% relative.
#[test]
fn bivariate_gaussian_imputation_near_conditional_oracle() {
    let n = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let normal = rand_distr::StandardNormal;
    // x1 = 2z + b1, x2 = 2z + b2 with z, b ~ N(0,1): corr = 4/5 = 0.8
    let mut vals = Array2::zeros((n, 2));
    for i in 0..n {
        let z: f64 = normal.sample(&mut rng);
        let b1: f64 = normal.sample(&mut rng);
        let b2: f64 = normal.sample(&mut rng);
        vals[(i, 0)] = 2.0 * z + b1;
        vals[(i, 1)] = 2.0 * z + b2;
    }
    // 50% MCAR mask on the second coordinate
    let mut mask = Array2::ones((n, 2));
    for i in 0..n {
        if rng.random::<f64>() < 0.5 {
            mask[(i, 1)] = 0.0;
        }
    }
    let truth = vals.clone();
    let mut ds = MaskedDataset::from_parts(vals, mask, names(2)).unwrap();
    ds.assign_splits(7).unwrap();
    ds.standardize().unwrap();

    let cfg = TrainConfig {
        bound: BoundKind::Imiwae,
        k: 5,
        epochs: 400,
        net: NetworkConfig::new(32, 1, 1).unwrap(),
        seed: 3,
        ..Default::default()
    };
    let report = train(&ds, &cfg).unwrap();
    let result = impute(
        &report.params,
        &ds,
        RowSel::Split(Split::Test),
        &report.mask_spec,
        BoundKind::Imiwae,
        20,
        1,
        11,
        WeightMode::Full,
        cfg.pre_impute,
    )
    .unwrap();

    // conditional-expectation oracle on the same masked cells:
    // E[x2 | x1] = rho * x1 (equal marginal scales)
    let rho = 0.8;
    let test_idx = ds.split_indices(Split::Test).unwrap();
    let mut model_err = 0.0;
    let mut oracle_err = 0.0;
    let mut count = 0usize;
    for (r, &i) in test_idx.iter().enumerate() {
        if ds.mask_value(i, 1) == 0.0 {
            let x1 = truth[(i, 0)];
            let x2 = truth[(i, 1)];
            model_err += (result.imputed[(r, 1)] - x2).abs();
            oracle_err += (rho * x1 - x2).abs();
            count += 1;
        }
    }
    let model_mae = model_err / count as f64;
    let oracle_mae = oracle_err / count as f64;
    assert!(
        model_mae <= 1.10 * oracle_mae,
        "model MAE {model_mae:.4} not within 10% of conditional oracle {oracle_mae:.4}"
    );
    eprintln!("bivariate oracle: model MAE {model_mae:.4} vs conditional {oracle_mae:.4}");
}

/// Linear nets (nhl = 0) trained on rank-1 linear-Gaussian data recover
/// the closed-form posterior-mean affine reconstruction.
#[test]
fn linear_decoder_recovers_affine_reconstruction() {
    let n = 1500;
    let p = 2;
    let w = [1.5, -1.0];
    let b = [0.3, -0.2];
    let noise_sd = 0.3;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let normal = rand_distr::StandardNormal;
    let mut vals = Array2::zeros((n, p));
    for i in 0..n {
        let z: f64 = normal.sample(&mut rng);
        for j in 0..p {
            let e: f64 = normal.sample(&mut rng);
            vals[(i, j)] = b[j] + w[j] * z + noise_sd * e;
        }
    }
    let truth = vals.clone();
    let mut ds = MaskedDataset::from_parts(vals, Array2::ones((n, p)), names(p)).unwrap();
    ds.assign_splits(1).unwrap();
    ds.standardize().unwrap();

    let cfg = TrainConfig {
        bound: BoundKind::Iwae,
        k: 5,
        epochs: 1200,
        lr: 0.01,
        net: NetworkConfig::new(8, 0, 1).unwrap(),
        seed: 9,
        ..Default::default()
    };
    let report = train(&ds, &cfg).unwrap();

    // the identified check: the trained model's likelihood matches the
    // analytic log-marginal of the (standardized) rank-1 Gaussian
    let (x_tr, _) = ds.split_rows(Split::Train).unwrap();
    let st = ds.standardization().unwrap();
    let wstd = [w[0] / st.stds[0], w[1] / st.stds[1]];
    let sstd = [noise_sd / st.stds[0], noise_sd / st.stds[1]];
    let c00 = wstd[0] * wstd[0] + sstd[0] * sstd[0];
    let c11 = wstd[1] * wstd[1] + sstd[1] * sstd[1];
    let c01 = wstd[0] * wstd[1];
    let det = c00 * c11 - c01 * c01;
    let m0 = (b[0] - st.means[0]) / st.stds[0];
    let m1 = (b[1] - st.means[1]) / st.stds[1];
    let mut analytic = 0.0;
    for i in 0..x_tr.dim().0 {
        let d0 = x_tr[(i, 0)] - m0;
        let d1 = x_tr[(i, 1)] - m1;
        let quad = (c11 * d0 * d0 - 2.0 * c01 * d0 * d1 + c00 * d1 * d1) / det;
        analytic += -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * quad;
    }
    analytic /= x_tr.dim().0 as f64;
    let bc = nimiwae::bounds::BoundConfig::new(BoundKind::Iwae, 50, 1).unwrap();
    let mut nrng = ChaCha8Rng::seed_from_u64(77);
    let noise = nimiwae::bounds::draw_noise(&mut nrng, x_tr.dim().0, 1, 2, &bc);
    let tight = nimiwae::bounds::iwae_bound(
        &report.params,
        &nimiwae::bounds::Batch::complete(&x_tr),
        &noise,
        50,
    )
    .unwrap();
    assert!(
        (tight.value - analytic).abs() < 0.02,
        "K=50 bound {:.5} vs analytic log-marginal {analytic:.5}",
        tight.value
    );

    // closed-form linear-Gaussian fit: x_hat = b + w E[z|x],
    // E[z|x] = w' (w w' + s^2 I)^{-1} (x - b); evaluated on test rows
    let s2 = noise_sd * noise_sd;
    let denom = w[0] * w[0] + w[1] * w[1] + s2;
    // for rank-1 plus isotropic noise the posterior weights reduce to
    // w_j / denom
    let test_idx = ds.split_indices(Split::Test).unwrap();
    let (x_std, mask_std) = ds.split_rows(Split::Test).unwrap();
    let (mu_z, _) =
        nimiwae::networks::encoder1_forward(&report.params, &x_std, &mask_std).unwrap();
    let (mu_x, _) = nimiwae::networks::decoder1_forward(&report.params, &mu_z).unwrap();
    let mut model_mse = 0.0;
    let mut oracle_mse = 0.0;
    for (r, &i) in test_idx.iter().enumerate() {
        let x = [truth[(i, 0)], truth[(i, 1)]];
        let zed = (w[0] * (x[0] - b[0]) + w[1] * (x[1] - b[1])) / denom;
        for j in 0..p {
            let oracle = b[j] + w[j] * zed;
            let model = ds.destandardize_value(j, mu_x[(r, j)]);
            model_mse += (model - x[j]).powi(2);
            oracle_mse += (oracle - x[j]).powi(2);
        }
    }
    model_mse /= (test_idx.len() * p) as f64;
    oracle_mse /= (test_idx.len() * p) as f64;
    // the reconstruction map has likelihood-flat directions (per-column
    // sigma trades off against the loading), so its tolerance is looser
    assert!(
        model_mse <= 1.4 * oracle_mse,
        "reconstruction MSE {model_mse:.4} not within 40% of closed form {oracle_mse:.4}"
    );
    eprintln!(
        "linear fit: bound {:.5} vs analytic {analytic:.5}; model MSE {model_mse:.4} vs closed form {oracle_mse:.4}",
        tight.value
    );
}

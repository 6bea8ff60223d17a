//! Imputation accuracy (average L1 over masked entries) and downstream
//! logistic regression with Wald statistics.

use ndarray::Array2;
use serde::Serialize;
use statrs::distribution::ContinuousCDF;

use crate::math::sigmoid;
use crate::{Error, Result};

/// The 97.5% normal quantile used for the confidence intervals.
pub const Z_975: f64 = 1.959_964;

#[derive(Debug, Clone, Serialize)]
pub struct ColumnL1 {
    pub column: usize,
    pub avg_l1: f64,
    pub n_miss: usize,
}

/// Average absolute error over masked entries, on the original scale.
#[derive(Debug, Clone, Serialize)]
pub struct L1Report {
    pub avg_l1: f64,
    pub n_miss: usize,
    pub per_column: Vec<ColumnL1>,
    pub method: String,
    pub mechanism: String,
    pub pct_missing: String,
}

/// Sum of |imputed - truth| over entries with mask 0, divided by their
/// count. Truth must be available at masked entries (simulation and
/// held-out-test settings).
pub fn average_l1(
    imputed: &Array2<f64>,
    truth: &Array2<f64>,
    mask: &Array2<f64>,
) -> Result<L1Report> {
    if imputed.dim() != truth.dim() || imputed.dim() != mask.dim() {
        return Err(Error::Dim(format!(
            "imputed {:?}, truth {:?}, mask {:?}",
            imputed.dim(),
            truth.dim(),
            mask.dim()
        )));
    }
    let (n, p) = imputed.dim();
    let mut per_column = Vec::with_capacity(p);
    let mut total = 0.0;
    let mut count = 0usize;
    for j in 0..p {
        let mut col_total = 0.0;
        let mut col_count = 0usize;
        for i in 0..n {
            if mask[(i, j)] == 0.0 {
                col_total += (imputed[(i, j)] - truth[(i, j)]).abs();
                col_count += 1;
            }
        }
        if col_count > 0 {
            per_column.push(ColumnL1 {
                column: j,
                avg_l1: col_total / col_count as f64,
                n_miss: col_count,
            });
        }
        total += col_total;
        count += col_count;
    }
    if count == 0 {
        return Err(Error::NoMaskedEntries);
    }
    Ok(L1Report {
        avg_l1: total / count as f64,
        n_miss: count,
        per_column,
        method: String::new(),
        mechanism: String::new(),
        pct_missing: String::new(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionTerm {
    pub name: String,
    pub coef: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionReport {
    pub terms: Vec<RegressionTerm>,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
}

/// Maximum-likelihood logistic regression by iteratively reweighted
/// least squares (gradient-norm < 1e-8 or 100 iterations), with standard
/// errors from the inverse observed information. The design matrix must
/// already include its intercept column.
pub fn logistic_fit(x: &Array2<f64>, y: &[f64]) -> Result<RegressionReport> {
    logistic_fit_named(x, y, None)
}

pub fn logistic_fit_named(
    x: &Array2<f64>,
    y: &[f64],
    names: Option<&[String]>,
) -> Result<RegressionReport> {
    let (n, p) = x.dim();
    if y.len() != n {
        return Err(Error::Dim(format!("{n} rows vs {} responses", y.len())));
    }
    if let Some((i, &v)) = y.iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0) {
        return Err(Error::NonBinary { index: i, value: v });
    }
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(Error::DegenerateResponse);
    }

    // rank check via pivoted Cholesky of X'X; reports the original index
    // of the first column that is linearly dependent on its predecessors
    let gram = xtwx(x, &vec![1.0; n]);
    if let Some(bad) = pivoted_cholesky_deficient_column(&gram) {
        return Err(Error::Collinear(bad));
    }

    let mut beta = vec![0.0; p];
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..100 {
        iterations = it + 1;
        let eta: Vec<f64> = (0..n)
            .map(|i| (0..p).map(|j| x[(i, j)] * beta[j]).sum())
            .collect();
        let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let grad: Vec<f64> = (0..p)
            .map(|j| (0..n).map(|i| x[(i, j)] * (y[i] - mu[i])).sum())
            .collect();
        let gnorm = grad.iter().fold(0.0f64, |a, &g| a.max(g.abs()));
        if gnorm < 1e-8 {
            converged = true;
            break;
        }
        let w: Vec<f64> = mu.iter().map(|&m| (m * (1.0 - m)).max(1e-10)).collect();
        let info = xtwx(x, &w);
        let delta = cholesky_solve(&info, &grad).ok_or(Error::SingularInformation)?;
        for j in 0..p {
            beta[j] += delta[j];
        }
        let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
        if norm > 1e3 {
            return Err(Error::Separation(norm));
        }
    }

    // observed information and covariance at the final estimate
    let eta: Vec<f64> = (0..n)
        .map(|i| (0..p).map(|j| x[(i, j)] * beta[j]).sum())
        .collect();
    let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
    let w: Vec<f64> = mu.iter().map(|&m| (m * (1.0 - m)).max(1e-10)).collect();
    let info = xtwx(x, &w);
    let cov = cholesky_inverse(&info).ok_or(Error::SingularInformation)?;
    let log_likelihood: f64 = (0..n)
        .map(|i| {
            if y[i] == 1.0 {
                mu[i].max(1e-300).ln()
            } else {
                (1.0 - mu[i]).max(1e-300).ln()
            }
        })
        .sum();

    let normal = statrs::distribution::Normal::new(0.0, 1.0).expect("standard normal");
    let terms = (0..p)
        .map(|j| {
            let se = cov[(j, j)].sqrt();
            let z = beta[j] / se;
            RegressionTerm {
                name: names
                    .and_then(|ns| ns.get(j).cloned())
                    .unwrap_or_else(|| format!("b{j}")),
                coef: beta[j],
                se,
                z,
                p_value: 2.0 * (1.0 - normal.cdf(z.abs())),
                ci_lo: beta[j] - Z_975 * se,
                ci_hi: beta[j] + Z_975 * se,
            }
        })
        .collect();
    Ok(RegressionReport { terms, iterations, converged, log_likelihood })
}

fn xtwx(x: &Array2<f64>, w: &[f64]) -> Array2<f64> {
    let (n, p) = x.dim();
    let mut a = Array2::zeros((p, p));
    for i in 0..n {
        for j in 0..p {
            let xw = x[(i, j)] * w[i];
            for k in j..p {
                a[(j, k)] += xw * x[(i, k)];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            a[(j, k)] = a[(k, j)];
        }
    }
    a
}

/// Full-pivot Cholesky rank probe: Some(original column index) when a
/// pivot collapses, meaning that column is (numerically) a linear
/// combination of the ones already factored.
fn pivoted_cholesky_deficient_column(a: &Array2<f64>) -> Option<usize> {
    let p = a.dim().0;
    let mut m = a.clone();
    let mut perm: Vec<usize> = (0..p).collect();
    let tol = 1e-10 * (0..p).map(|j| a[(j, j)]).fold(f64::MIN, f64::max).max(1e-300);
    for k in 0..p {
        // choose the largest remaining diagonal
        let (jmax, dmax) = (k..p)
            .map(|j| (j, m[(j, j)]))
            .fold((k, f64::MIN), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if dmax <= tol {
            // every remaining column is dependent; report the one whose
            // original index is smallest for a stable message
            return perm[k..p].iter().min().copied();
        }
        if jmax != k {
            perm.swap(k, jmax);
            swap_rows_cols(&mut m, k, jmax);
        }
        let piv = m[(k, k)].sqrt();
        m[(k, k)] = piv;
        for i in k + 1..p {
            m[(i, k)] /= piv;
        }
        for j in k + 1..p {
            for i in j..p {
                let v = m[(i, k)] * m[(j, k)];
                m[(i, j)] -= v;
                if i != j {
                    m[(j, i)] = m[(i, j)];
                }
            }
        }
    }
    None
}

fn swap_rows_cols(m: &mut Array2<f64>, a: usize, b: usize) {
    let p = m.dim().0;
    for j in 0..p {
        m.swap((a, j), (b, j));
    }
    for i in 0..p {
        m.swap((i, a), (i, b));
    }
}

/// Plain Cholesky factor (lower), or None if not positive definite.
fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let p = a.dim().0;
    let mut l: Array2<f64> = Array2::zeros((p, p));
    for i in 0..p {
        for j in 0..=i {
            let mut sum = a[(i, j)];
            for k in 0..j {
                sum -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[(i, j)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(a: &Array2<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let l = cholesky(a)?;
    let p = b.len();
    // L y = b
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[(i, k)] * y[k];
        }
        y[i] = sum / l[(i, i)];
    }
    // L' x = y
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut sum = y[i];
        for k in i + 1..p {
            sum -= l[(k, i)] * x[k];
        }
        x[i] = sum / l[(i, i)];
    }
    Some(x)
}

fn cholesky_inverse(a: &Array2<f64>) -> Option<Array2<f64>> {
    let p = a.dim().0;
    let mut inv = Array2::zeros((p, p));
    for j in 0..p {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        let col = cholesky_solve(a, &e)?;
        for i in 0..p {
            inv[(i, j)] = col[i];
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn l1_zero_when_exact() {
        let truth = arr2(&[[1.0, 2.0], [3.0, 4.0]]);
        let mask = arr2(&[[0.0, 1.0], [1.0, 0.0]]);
        let rep = average_l1(&truth.clone(), &truth, &mask).unwrap();
        assert_eq!(rep.avg_l1, 0.0);
        assert_eq!(rep.n_miss, 2);
    }

    #[test]
    fn l1_hand_sums() {
        let truth = arr2(&[[2.0]]);
        let imputed = arr2(&[[3.0]]);
        let mask = arr2(&[[0.0]]);
        assert_eq!(average_l1(&imputed, &truth, &mask).unwrap().avg_l1, 1.0);

        // errors {1, 3} -> average 2
        let truth = arr2(&[[0.0, 0.0]]);
        let imputed = arr2(&[[1.0, 3.0]]);
        let mask = arr2(&[[0.0, 0.0]]);
        let rep = average_l1(&imputed, &truth, &mask).unwrap();
        assert_eq!(rep.avg_l1, 2.0);
        assert_eq!(rep.per_column.len(), 2);
    }

    #[test]
    fn l1_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = crate::dist::standard_normal_matrix(&mut rng, 20, 3);
        let imputed = crate::dist::standard_normal_matrix(&mut rng, 20, 3);
        let mask = Array2::from_shape_fn((20, 3), |(i, j)| ((i + j) % 3 == 0) as u8 as f64);
        let base = average_l1(&imputed, &truth, &mask).unwrap().avg_l1;

        // shuffle rows consistently
        let perm: Vec<usize> = (0..20).rev().collect();
        let reorder = |m: &Array2<f64>| {
            let mut out = Array2::zeros(m.dim());
            for (dst, &src) in perm.iter().enumerate() {
                out.row_mut(dst).assign(&m.row(src));
            }
            out
        };
        let shuffled = average_l1(&reorder(&imputed), &reorder(&truth), &reorder(&mask))
            .unwrap()
            .avg_l1;
        assert!((base - shuffled).abs() < 1e-15);
    }

    #[test]
    fn l1_no_masked_entries_is_error() {
        let m = arr2(&[[1.0]]);
        assert!(matches!(
            average_l1(&m.clone(), &m.clone(), &Array2::ones((1, 1))),
            Err(Error::NoMaskedEntries)
        ));
    }

    #[test]
    fn intercept_only_balanced() {
        let n = 64;
        let x = Array2::ones((n, 1));
        let y: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let rep = logistic_fit(&x, &y).unwrap();
        assert!(rep.converged);
        assert!(rep.terms[0].coef.abs() < 1e-9);
        let se_expected = 2.0 / (n as f64).sqrt();
        assert!((rep.terms[0].se - se_expected).abs() < 1e-9);
    }

    #[test]
    fn intercept_only_three_quarters() {
        // mean 0.75 -> intercept logit(0.75) = ln 3
        let x = Array2::ones((80, 1));
        let y: Vec<f64> = (0..80).map(|i| (i % 4 != 0) as u8 as f64).collect();
        let rep = logistic_fit(&x, &y).unwrap();
        assert!((rep.terms[0].coef - 1.098_612_288_668_109_8).abs() < 1e-9);
    }

    #[test]
    fn ci_and_z_definitions() {
        let x = Array2::ones((40, 1));
        let y: Vec<f64> = (0..40).map(|i| (i % 4 == 0) as u8 as f64).collect();
        let rep = logistic_fit(&x, &y).unwrap();
        let t = &rep.terms[0];
        assert!((t.z - t.coef / t.se).abs() < 1e-12);
        assert!((t.ci_lo - (t.coef - Z_975 * t.se)).abs() < 1e-12);
        assert!((t.ci_hi - (t.coef + Z_975 * t.se)).abs() < 1e-12);
        assert!(t.p_value > 0.0 && t.p_value < 1.0);
    }

    /// Independent maximum-likelihood route: Barzilai-Borwein gradient
    /// ascent on the log-likelihood, plus a Gauss-Jordan inverse of the
    /// information matrix assembled from scratch.
    fn brute_force_fit(x: &Array2<f64>, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (n, p) = x.dim();
        let grad = |beta: &[f64]| -> Vec<f64> {
            let mut g = vec![0.0; p];
            for i in 0..n {
                let eta: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum();
                let mu = 1.0 / (1.0 + (-eta).exp());
                for j in 0..p {
                    g[j] += x[(i, j)] * (y[i] - mu);
                }
            }
            g
        };
        let mut beta = vec![0.0; p];
        let mut g = grad(&beta);
        let mut step = 1e-3;
        for _ in 0..5000 {
            let beta_new: Vec<f64> = beta.iter().zip(&g).map(|(b, gi)| b + step * gi).collect();
            let g_new = grad(&beta_new);
            let mut s_dot_y = 0.0;
            let mut y_dot_y = 0.0;
            for j in 0..p {
                let s = beta_new[j] - beta[j];
                let dy = g_new[j] - g[j];
                s_dot_y += s * dy;
                y_dot_y += dy * dy;
            }
            beta = beta_new;
            g = g_new;
            if g.iter().all(|gi| gi.abs() < 1e-11) {
                break;
            }
            if y_dot_y > 0.0 {
                step = (s_dot_y / y_dot_y).abs().clamp(1e-8, 1e3);
            }
        }
        // observed information and its inverse by Gauss-Jordan
        let mut info = vec![vec![0.0; p]; p];
        for i in 0..n {
            let eta: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum();
            let mu = 1.0 / (1.0 + (-eta).exp());
            let w = mu * (1.0 - mu);
            for a in 0..p {
                for b in 0..p {
                    info[a][b] += w * x[(i, a)] * x[(i, b)];
                }
            }
        }
        let mut aug: Vec<Vec<f64>> = info
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut r = row.clone();
                r.extend((0..p).map(|j| f64::from(u8::from(i == j))));
                r
            })
            .collect();
        for col in 0..p {
            let piv = (col..p).max_by(|&a, &b| {
                aug[a][col].abs().partial_cmp(&aug[b][col].abs()).unwrap()
            });
            let piv = piv.unwrap();
            aug.swap(col, piv);
            let d = aug[col][col];
            for v in aug[col].iter_mut() {
                *v /= d;
            }
            for r in 0..p {
                if r != col {
                    let f = aug[r][col];
                    for c in 0..2 * p {
                        let sub = f * aug[col][c];
                        aug[r][c] -= sub;
                    }
                }
            }
        }
        let se: Vec<f64> = (0..p).map(|j| aug[j][p + j].sqrt()).collect();
        (beta, se)
    }

    #[test]
    fn random_fit_matches_brute_force_oracle() {
        for seed in 0..3u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 200;
            let p = 3;
            let mut x = Array2::ones((n, p));
            for i in 0..n {
                for j in 1..p {
                    x[(i, j)] = rand_distr::Distribution::sample(
                        &rand_distr::StandardNormal,
                        &mut rng,
                    );
                }
            }
            let beta_true = [0.3, -0.8, 0.5];
            let y: Vec<f64> = (0..n)
                .map(|i| {
                    let eta: f64 = (0..p).map(|j| x[(i, j)] * beta_true[j]).sum();
                    (rng.random::<f64>() < sigmoid(eta)) as u8 as f64
                })
                .collect();
            let rep = logistic_fit(&x, &y).unwrap();
            assert!(rep.converged);
            let (beta_bf, se_bf) = brute_force_fit(&x, &y);
            for j in 0..p {
                assert!(
                    (rep.terms[j].coef - beta_bf[j]).abs() < 1e-6,
                    "seed {seed}, coef {j}: {} vs {}",
                    rep.terms[j].coef,
                    beta_bf[j]
                );
                assert!(
                    (rep.terms[j].se - se_bf[j]).abs() < 1e-4,
                    "seed {seed}, se {j}: {} vs {}",
                    rep.terms[j].se,
                    se_bf[j]
                );
            }
        }
    }

    #[test]
    fn collinear_column_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 50;
        let mut x = Array2::ones((n, 3));
        for i in 0..n {
            let v: f64 =
                rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            x[(i, 1)] = v;
            x[(i, 2)] = 2.5 * v; // exact scaled copy
        }
        let y: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        match logistic_fit(&x, &y) {
            Err(Error::Collinear(j)) => assert!(j == 1 || j == 2),
            other => panic!("expected collinearity error, got {other:?}"),
        }
    }

    #[test]
    fn separation_reported() {
        // perfectly separable with a tiny margin: y = I(x > 0), so the
        // likelihood pushes the slope past any bound
        let n = 60;
        let mut x = Array2::ones((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let v = (i as f64 - 29.5) / 1000.0;
            x[(i, 1)] = v;
            y.push((v > 0.0) as u8 as f64);
        }
        assert!(matches!(logistic_fit(&x, &y), Err(Error::Separation(_))));
    }

    #[test]
    fn degenerate_response_rejected() {
        let x = Array2::ones((10, 1));
        assert!(matches!(
            logistic_fit(&x, &vec![1.0; 10]),
            Err(Error::DegenerateResponse)
        ));
        assert!(matches!(
            logistic_fit(&x, &vec![0.5; 10]),
            Err(Error::NonBinary { .. })
        ));
    }
}

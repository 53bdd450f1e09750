//! Rademacher complexity: an empirical estimator for the unit-ball
//! kernel class (where the supremum has the closed form √(σᵀKσ)), plus
//! closed-form bounds for the kernel and two-layer ReLU classes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::LabeledDataset;
use crate::seed::mix64;
use crate::train::rbf_kernel;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = -1e-9;

/// Exact enumeration is auto-selected at or below this size (2^20 sign
/// vectors is desk-scale).
pub const EXACT_MODE_MAX_N: usize = 20;
pub const DEFAULT_DRAWS: usize = 200;

#[derive(Debug, Error)]
pub enum RademacherError {
    #[error("kernel matrix is not symmetric: |K[{i}][{j}] - K[{j}][{i}]| > 1e-12")]
    NotSymmetric { i: usize, j: usize },
    #[error("negative diagonal entry K[{i}][{i}] = {value}")]
    NegativeDiagonal { i: usize, value: f64 },
    #[error("sigma' K sigma = {value} < -1e-9; kernel matrix is not PSD")]
    NonPsdNegative { value: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Symmetric Gram matrix with its kernel bound B² = max diagonal entry.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    entries: Vec<Vec<f64>>,
    b_sq: f64,
}

impl KernelMatrix {
    pub fn new(entries: Vec<Vec<f64>>) -> Result<KernelMatrix, RademacherError> {
        let n = entries.len();
        for (i, row) in entries.iter().enumerate() {
            if row.len() != n {
                return Err(RademacherError::InvalidParams(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
        }
        for i in 0..n {
            if entries[i][i] < 0.0 {
                return Err(RademacherError::NegativeDiagonal { i, value: entries[i][i] });
            }
            for j in (i + 1)..n {
                if (entries[i][j] - entries[j][i]).abs() > SYMMETRY_TOL {
                    return Err(RademacherError::NotSymmetric { i, j });
                }
            }
        }
        let b_sq = (0..n).map(|i| entries[i][i]).fold(0.0f64, f64::max);
        Ok(KernelMatrix { entries, b_sq })
    }

    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn b_sq(&self) -> f64 {
        self.b_sq
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }
}

/// Monte-Carlo (or exact) estimate of (1/N)·E_σ √(σᵀKσ).
#[derive(Debug, Clone, PartialEq)]
pub struct RademacherEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Number of σ vectors averaged; 2^N in exact mode.
    pub draws: usize,
    pub exact: bool,
}

/// K_ij = exp(−gamma·‖x_i − x_j‖²); unit diagonal by construction.
pub fn build_rbf_kernel_matrix(ds: &LabeledDataset, gamma: f64) -> KernelMatrix {
    assert!(gamma > 0.0, "gamma must be positive");
    let n = ds.len();
    let mut entries = vec![vec![0.0; n]; n];
    for i in 0..n {
        entries[i][i] = 1.0;
        for j in (i + 1)..n {
            let k = rbf_kernel(gamma, &ds.examples[i].features, &ds.examples[j].features);
            entries[i][j] = k;
            entries[j][i] = k;
        }
    }
    KernelMatrix { entries, b_sq: if n == 0 { 0.0 } else { 1.0 } }
}

fn quadratic_form(k: &KernelMatrix, sigma_bits: impl Fn(usize) -> f64) -> f64 {
    let n = k.n();
    let mut total = 0.0;
    for i in 0..n {
        let si = sigma_bits(i);
        let row = &k.entries[i];
        let mut acc = 0.0;
        for j in 0..n {
            acc += sigma_bits(j) * row[j];
        }
        total += si * acc;
    }
    total
}

/// Empirical Rademacher complexity of the unit-ball kernel class on the
/// sample behind `k`: the supremum over the class is √(σᵀKσ)/N exactly,
/// so only the σ average is estimated. At N ≤ 20 all 2^N sign vectors
/// are enumerated and the result is exact in σ; otherwise `draws` i.i.d.
/// uniform sign vectors are averaged. Draws are generated from
/// per-index counter seeds, so the estimate does not depend on how the
/// work is partitioned across threads.
pub fn kernel_rademacher_exact_sup(
    k: &KernelMatrix,
    draws: usize,
    seed: u64,
) -> Result<RademacherEstimate, RademacherError> {
    if draws == 0 {
        return Err(RademacherError::InvalidParams("draws must be >= 1".into()));
    }
    let n = k.n();
    if n == 0 {
        return Err(RademacherError::InvalidParams("empty kernel matrix".into()));
    }

    let value_of = |quad: f64| -> Result<f64, RademacherError> {
        if quad < PSD_TOL {
            return Err(RademacherError::NonPsdNegative { value: quad });
        }
        Ok(quad.max(0.0).sqrt() / n as f64)
    };

    if n <= EXACT_MODE_MAX_N {
        let total = 1usize << n;
        let mut values: Vec<f64> = (0..total)
            .into_par_iter()
            .map(|mask| {
                let quad = quadratic_form(k, |i| {
                    if mask >> i & 1 == 1 {
                        1.0
                    } else {
                        -1.0
                    }
                });
                value_of(quad)
            })
            .collect::<Result<_, _>>()?;
        // sum in value order: relabeling the sample permutes the sigma
        // vectors, and a canonical order keeps the mean bit-identical
        values.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / total as f64;
        return Ok(RademacherEstimate {
            mean,
            std_error: 0.0,
            draws: total,
            exact: true,
        });
    }

    let values: Vec<f64> = (0..draws as u64)
        .into_par_iter()
        .map(|draw_idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix64(&[seed, draw_idx]));
            let sigma: Vec<f64> = (0..n)
                .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect();
            value_of(quadratic_form(k, |i| sigma[i]))
        })
        .collect::<Result<_, _>>()?;
    let mean = values.iter().sum::<f64>() / draws as f64;
    let var = if draws > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (draws - 1) as f64
    } else {
        0.0
    };
    Ok(RademacherEstimate {
        mean,
        std_error: (var / draws as f64).sqrt(),
        draws,
        exact: false,
    })
}

/// √(23·e·B²/(22·n)).
pub fn kernel_rademacher_closed_form_bound(b_sq: f64, n: u64) -> Result<f64, RademacherError> {
    if n < 1 {
        return Err(RademacherError::InvalidParams("n must be >= 1".into()));
    }
    if !(b_sq >= 0.0) {
        return Err(RademacherError::InvalidParams("B^2 must be non-negative".into()));
    }
    Ok((23.0 * std::f64::consts::E * b_sq / (22.0 * n as f64)).sqrt())
}

/// 4/n^{3/2} + (26·ln(n)·ln(2·d_max)/n)·‖X‖_F·(Π s_i)·(Σ (b_j/s_j)^{2/3})^{3/2}.
pub fn relu_rademacher_closed_form_bound(
    n: u64,
    d_max: u64,
    frobenius_x: f64,
    spectral: &[f64],
    two_one: &[f64],
) -> Result<f64, RademacherError> {
    if n < 2 {
        return Err(RademacherError::InvalidParams("n must be >= 2".into()));
    }
    if d_max < 1 {
        return Err(RademacherError::InvalidParams("d_max must be >= 1".into()));
    }
    if !(frobenius_x >= 0.0) {
        return Err(RademacherError::InvalidParams("frobenius_X must be non-negative".into()));
    }
    if spectral.len() != two_one.len() || spectral.is_empty() {
        return Err(RademacherError::InvalidParams(
            "spectral and two_one norm lists must be nonempty and equal length".into(),
        ));
    }
    if spectral.iter().any(|&s| !(s > 0.0)) {
        return Err(RademacherError::InvalidParams("all spectral norms must be positive".into()));
    }
    let spec_prod: f64 = spectral.iter().product();
    let ratio_sum: f64 = spectral
        .iter()
        .zip(two_one)
        .map(|(s, b)| (b / s).powf(2.0 / 3.0))
        .sum();
    let nf = n as f64;
    Ok(4.0 / nf.powf(1.5)
        + (26.0 * nf.ln() * (2.0 * d_max as f64).ln() / nf)
            * frobenius_x
            * spec_prod
            * ratio_sum.powf(1.5))
}

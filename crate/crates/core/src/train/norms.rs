//! Weight-matrix norms used by the network capacity bounds: spectral norm
//! via power iteration, and the (2,1) norm of the transpose (sum of
//! Euclidean row norms).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PredictorModel;

const POWER_TOL: f64 = 1e-8;
const POWER_MAX_ITER: usize = 1000;

/// Largest singular value of a row-major `rows x cols` matrix.
///
/// Power iteration on AᵀA with a deterministic start vector (seed 0) and
/// a 1000-iteration cap; converges when the estimate moves by less than
/// 1e-8 relatively.
pub fn spectral_norm(matrix: &[f64], rows: usize, cols: usize) -> f64 {
    assert_eq!(matrix.len(), rows * cols);
    if matrix.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut v: Vec<f64> = (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize(&mut v);
    let mut estimate = 0.0;
    let mut u = vec![0.0; rows];
    for _ in 0..POWER_MAX_ITER {
        // u = A v
        for (r, slot) in u.iter_mut().enumerate() {
            *slot = matrix[r * cols..(r + 1) * cols]
                .iter()
                .zip(&v)
                .map(|(a, b)| a * b)
                .sum();
        }
        let sigma = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if sigma == 0.0 {
            // start vector happened to lie in the null space; perturb
            for slot in v.iter_mut() {
                *slot += rng.gen_range(-1.0..1.0);
            }
            normalize(&mut v);
            continue;
        }
        // v = Aᵀ u / |A v|
        for (c, slot) in v.iter_mut().enumerate() {
            *slot = (0..rows).map(|r| matrix[r * cols + c] * u[r]).sum::<f64>() / sigma;
        }
        normalize(&mut v);
        if (sigma - estimate).abs() <= POWER_TOL * sigma.max(1.0) {
            return sigma;
        }
        estimate = sigma;
    }
    estimate
}

/// ‖Wᵀ‖_{2,1}: sum over rows of W of the Euclidean row norm.
pub fn two_one_norm(matrix: &[f64], rows: usize, cols: usize) -> f64 {
    assert_eq!(matrix.len(), rows * cols);
    (0..rows)
        .map(|r| {
            matrix[r * cols..(r + 1) * cols]
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

/// Per-layer (spectral, (2,1)) norms of a trained ReLU network, ordered
/// input to output.
pub fn weight_norms(model: &PredictorModel) -> Option<(Vec<f64>, Vec<f64>)> {
    match model {
        PredictorModel::ReluNet { w1, w2, hidden, dim } => {
            let spectral = vec![
                spectral_norm(w1, *hidden, *dim),
                spectral_norm(w2, 1, *hidden),
            ];
            let two_one = vec![
                two_one_norm(w1, *hidden, *dim),
                two_one_norm(w2, 1, *hidden),
            ];
            Some((spectral, two_one))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matrix() {
        let w = vec![1.0, 0.0, 0.0, 1.0];
        assert!((spectral_norm(&w, 2, 2) - 1.0).abs() < 1e-7);
        assert!((two_one_norm(&w, 2, 2) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_matrix() {
        let w = vec![3.0, 0.0, 0.0, 4.0];
        assert!((spectral_norm(&w, 2, 2) - 4.0).abs() < 1e-7);
        assert!((two_one_norm(&w, 2, 2) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix() {
        let w = vec![0.0; 6];
        assert_eq!(spectral_norm(&w, 2, 3), 0.0);
        assert_eq!(two_one_norm(&w, 2, 3), 0.0);
    }

    #[test]
    fn rank_one_matrix() {
        // outer product [1,2]ᵀ[3,4]: spectral norm = |[1,2]|·|[3,4]| = √5·5
        let w = vec![3.0, 4.0, 6.0, 8.0];
        let expected = (5.0f64).sqrt() * 5.0;
        assert!((spectral_norm(&w, 2, 2) - expected).abs() < 1e-6);
    }

    #[test]
    fn relu_model_norms() {
        let model = PredictorModel::ReluNet {
            w1: vec![3.0, 0.0, 0.0, 4.0],
            w2: vec![1.0, 1.0],
            hidden: 2,
            dim: 2,
        };
        let (s, b) = weight_norms(&model).unwrap();
        assert!((s[0] - 4.0).abs() < 1e-7);
        assert!((b[0] - 7.0).abs() < 1e-12);
        assert!((s[1] - (2.0f64).sqrt()).abs() < 1e-7);
        assert!((b[1] - (2.0f64).sqrt()).abs() < 1e-12);
    }
}

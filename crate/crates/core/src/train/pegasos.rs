//! Stochastic subgradient training of the hinge objective
//! `λ/2 ||w||² + (1/N) Σ max(0, 1 − y·score)`, in primal form for the
//! linear SVM and in kernelized form for the RBF SVM. Both include the
//! projection onto the ball of radius 1/√λ.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dot, rbf_kernel, signed_label, PredictorModel, TrainError};
use crate::data::LabeledDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmConfig {
    pub reg_lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for LinearSvmConfig {
    fn default() -> Self {
        LinearSvmConfig {
            reg_lambda: 1e-4,
            epochs: 30,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfSvmConfig {
    /// Kernel width: K(x, x') = exp(-gamma ||x - x'||²).
    pub gamma: f64,
    pub reg_lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for RbfSvmConfig {
    fn default() -> Self {
        RbfSvmConfig {
            gamma: 1.0,
            reg_lambda: 1e-4,
            epochs: 30,
            seed: 0,
        }
    }
}

fn all_same_label(train: &LabeledDataset) -> Option<u8> {
    let first = train.examples.first()?.label;
    train
        .examples
        .iter()
        .all(|ex| ex.label == first)
        .then_some(first)
}

pub fn train_linear_svm(
    train: &LabeledDataset,
    cfg: &LinearSvmConfig,
) -> Result<PredictorModel, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    if let Some(label) = all_same_label(train) {
        return Ok(PredictorModel::LinearSvm {
            weights: vec![0.0; train.dim()],
            bias: signed_label(label),
            degenerate: true,
        });
    }

    let n = train.len();
    let d = train.dim();
    let lambda = cfg.reg_lambda;
    let cap_sq = 1.0 / lambda;
    let mut w = vec![0.0f64; d];
    let mut b = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let steps = cfg.epochs * n;
    for step in 0..steps {
        // start the schedule at t=2 so the first decay factor is not zero
        let t = (step + 2) as f64;
        let eta = 1.0 / (lambda * t);
        let i = rng.gen_range(0..n);
        let ex = &train.examples[i];
        let y = signed_label(ex.label);
        let margin = y * (dot(&w, &ex.features) + b);

        let decay = 1.0 - eta * lambda;
        for wj in w.iter_mut() {
            *wj *= decay;
        }
        b *= decay;
        if margin < 1.0 {
            for (wj, xj) in w.iter_mut().zip(&ex.features) {
                *wj += eta * y * xj;
            }
            b += eta * y;
        }
        let norm_sq = dot(&w, &w) + b * b;
        if norm_sq > cap_sq {
            let scale = (cap_sq / norm_sq).sqrt();
            for wj in w.iter_mut() {
                *wj *= scale;
            }
            b *= scale;
        }
    }

    Ok(PredictorModel::LinearSvm {
        weights: w,
        bias: b,
        degenerate: false,
    })
}

pub fn train_rbf_svm(
    train: &LabeledDataset,
    cfg: &RbfSvmConfig,
) -> Result<PredictorModel, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    if let Some(label) = all_same_label(train) {
        // constant predictor expressed as a single support point
        return Ok(PredictorModel::RbfSvm {
            gamma: cfg.gamma,
            support: vec![train.examples[0].features.clone()],
            coefs: vec![signed_label(label) * 2.0],
            degenerate: true,
        });
    }

    let n = train.len();
    let lambda = cfg.reg_lambda;
    let cap = 1.0 / lambda.sqrt();
    // w = scale * Σ_j stored[j] y_j Φ(x_j); sq_norm tracks ||w||² exactly
    let mut stored = vec![0.0f64; n];
    let mut scale = 1.0f64;
    let mut sq_norm = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let steps = cfg.epochs * n;
    for step in 0..steps {
        let t = (step + 2) as f64;
        let eta = 1.0 / (lambda * t);
        let i = rng.gen_range(0..n);
        let xi = &train.examples[i].features;
        let yi = signed_label(train.examples[i].label);

        let mut ki_score = 0.0;
        for (j, sj) in stored.iter().enumerate() {
            if *sj != 0.0 {
                ki_score += sj * signed_label(train.examples[j].label)
                    * rbf_kernel(cfg.gamma, &train.examples[j].features, xi);
            }
        }
        let score = scale * ki_score;

        let decay = 1.0 - eta * lambda;
        scale *= decay;
        sq_norm *= decay * decay;
        if yi * score < 1.0 {
            // K(x,x)=1 for RBF
            let score_after = score * decay;
            // the y_i factor lives in the representation, not the coefficient
            stored[i] += eta / scale;
            sq_norm += 2.0 * eta * yi * score_after + eta * eta;
        }
        if sq_norm > cap * cap {
            let c = cap / sq_norm.sqrt();
            scale *= c;
            sq_norm *= c * c;
        }
        if !scale.is_finite() || !sq_norm.is_finite() {
            return Err(TrainError::NonFiniteLoss);
        }
    }

    let mut support = Vec::new();
    let mut coefs = Vec::new();
    for (j, sj) in stored.iter().enumerate() {
        if *sj != 0.0 {
            support.push(train.examples[j].features.clone());
            coefs.push(scale * sj * signed_label(train.examples[j].label));
        }
    }
    Ok(PredictorModel::RbfSvm {
        gamma: cfg.gamma,
        support,
        coefs,
        degenerate: false,
    })
}

/// Regularized hinge objective the Pegasos trainers minimize, evaluated
/// on `ds`. Used by tests to check training progress.
pub fn pegasos_objective(model: &PredictorModel, ds: &LabeledDataset, lambda: f64) -> f64 {
    let norm_sq = match model {
        PredictorModel::LinearSvm { weights, bias, .. } => dot(weights, weights) + bias * bias,
        PredictorModel::RbfSvm {
            gamma,
            support,
            coefs,
            ..
        } => {
            let mut s = 0.0;
            for (a, ca) in support.iter().zip(coefs) {
                for (b, cb) in support.iter().zip(coefs) {
                    s += ca * cb * rbf_kernel(*gamma, a, b);
                }
            }
            s
        }
        PredictorModel::ReluNet { .. } => panic!("not a pegasos model"),
    };
    let hinge: f64 = ds
        .examples
        .iter()
        .map(|ex| {
            let y = signed_label(ex.label);
            (1.0 - y * crate::train::Predictor::raw_score(model, &ex.features)).max(0.0)
        })
        .sum();
    lambda / 2.0 * norm_sq + hinge / ds.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Example;
    use crate::train::Predictor;

    fn clusters(n_per: usize, gap: f64) -> LabeledDataset {
        // two separable clusters around ±(gap, gap)
        let mut examples = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..n_per {
            let dx: f64 = rng.gen_range(-0.5..0.5);
            let dy: f64 = rng.gen_range(-0.5..0.5);
            examples.push(Example {
                features: vec![gap + dx, gap + dy],
                label: 1,
                group_ids: vec![],
            });
            let dx: f64 = rng.gen_range(-0.5..0.5);
            let dy: f64 = rng.gen_range(-0.5..0.5);
            examples.push(Example {
                features: vec![-gap + dx, -gap + dy],
                label: 0,
                group_ids: vec![],
            });
        }
        LabeledDataset {
            examples,
            feature_names: vec!["x".into(), "y".into()],
            groups: vec![],
        }
    }

    pub(crate) fn xor_dataset() -> LabeledDataset {
        let pts = [
            ([0.0, 0.0], 1),
            ([1.0, 1.0], 1),
            ([0.0, 1.0], 0),
            ([1.0, 0.0], 0),
        ];
        LabeledDataset {
            examples: pts
                .iter()
                .map(|(f, l)| Example {
                    features: f.to_vec(),
                    label: *l,
                    group_ids: vec![],
                })
                .collect(),
            feature_names: vec!["x".into(), "y".into()],
            groups: vec![],
        }
    }

    #[test]
    fn linear_separates_clusters() {
        let ds = clusters(50, 2.0);
        let m = train_linear_svm(&ds, &LinearSvmConfig::default()).unwrap();
        assert_eq!(m.accuracy(&ds), 1.0);
    }

    #[test]
    fn linear_degenerate_data_gives_constant() {
        let mut ds = clusters(5, 2.0);
        for ex in ds.examples.iter_mut() {
            ex.label = 1;
        }
        let m = train_linear_svm(&ds, &LinearSvmConfig::default()).unwrap();
        match &m {
            PredictorModel::LinearSvm { degenerate, .. } => assert!(degenerate),
            _ => unreachable!(),
        }
        assert!(ds.examples.iter().all(|ex| m.predict(&ex.features) == 1));
    }

    #[test]
    fn linear_training_is_seed_deterministic() {
        let ds = clusters(20, 1.5);
        let cfg = LinearSvmConfig::default();
        let a = train_linear_svm(&ds, &cfg).unwrap();
        let b = train_linear_svm(&ds, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rbf_solves_xor() {
        let ds = xor_dataset();
        let cfg = RbfSvmConfig {
            gamma: 1.0,
            reg_lambda: 0.01,
            epochs: 300,
            seed: 1,
        };
        let m = train_rbf_svm(&ds, &cfg).unwrap();
        assert_eq!(m.accuracy(&ds), 1.0);
    }

    #[test]
    fn rbf_single_point_predicts_its_label() {
        let ds = LabeledDataset {
            examples: vec![Example {
                features: vec![0.3, -0.7],
                label: 1,
                group_ids: vec![],
            }],
            feature_names: vec!["a".into(), "b".into()],
            groups: vec![],
        };
        let m = train_rbf_svm(&ds, &RbfSvmConfig::default()).unwrap();
        assert_eq!(m.predict(&[0.3, -0.7]), 1);
    }

    #[test]
    fn rbf_vanishing_gamma_collapses_to_majority() {
        // 3 positives, 2 negatives; at gamma ~ 0 every kernel value is ~1
        // so the score is the same everywhere and the majority label wins.
        let mut ds = clusters(1, 2.0);
        ds.examples.push(Example {
            features: vec![5.0, -5.0],
            label: 1,
            group_ids: vec![],
        });
        ds.examples.push(Example {
            features: vec![-5.0, 5.0],
            label: 1,
            group_ids: vec![],
        });
        ds.examples.push(Example {
            features: vec![3.0, 3.0],
            label: 0,
            group_ids: vec![],
        });
        let cfg = RbfSvmConfig {
            gamma: 1e-9,
            reg_lambda: 0.01,
            epochs: 50,
            seed: 3,
        };
        let m = train_rbf_svm(&ds, &cfg).unwrap();
        let probe = [[0.0, 0.0], [4.0, 4.0], [-4.0, -4.0], [10.0, -10.0]];
        for p in probe {
            assert_eq!(m.predict(&p), 1, "majority label expected at {:?}", p);
        }
    }

    #[test]
    fn rbf_determinism_is_seeded() {
        let ds = xor_dataset();
        let cfg = RbfSvmConfig {
            gamma: 1.0,
            reg_lambda: 0.01,
            epochs: 50,
            seed: 9,
        };
        let a = train_rbf_svm(&ds, &cfg).unwrap();
        let b = train_rbf_svm(&ds, &cfg).unwrap();
        assert_eq!(a, b);
        let x = [0.25, 0.75];
        assert_eq!(a.raw_score(&x).to_bits(), b.raw_score(&x).to_bits());
    }

    #[test]
    fn objective_decreases_with_more_epochs() {
        let ds = clusters(40, 1.0);
        let lambda = 1e-2;
        let one = train_linear_svm(
            &ds,
            &LinearSvmConfig { reg_lambda: lambda, epochs: 1, seed: 5 },
        )
        .unwrap();
        let full = train_linear_svm(
            &ds,
            &LinearSvmConfig { reg_lambda: lambda, epochs: 30, seed: 5 },
        )
        .unwrap();
        assert!(
            pegasos_objective(&full, &ds, lambda) < pegasos_objective(&one, &ds, lambda),
            "objective should improve between epoch 1 and the final epoch"
        );
    }
}

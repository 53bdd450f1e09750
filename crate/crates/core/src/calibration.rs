//! Per-category empirical calibration error and category frequencies.
//!
//! A category is a (group, predicted label) pair. Its calibration error
//! on an evaluation set is `ŷ − mean(y over category members)`: the gap
//! between the hard prediction and the observed label rate among the
//! group members the predictor maps to ŷ. Empty categories carry no
//! information, so their error is `None`, never zero.

use thiserror::Error;

use crate::data::LabeledDataset;
use crate::train::Predictor;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("no nonempty group in evaluation set")]
    NoNonemptyGroup,
    #[error("unknown group: {0}")]
    UnknownGroup(String),
}

/// (group, predicted label) pair. `group` indexes the dataset's group
/// list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Category {
    pub group: usize,
    pub predicted_label: u8,
}

/// Everything measured about one category on one evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryStats {
    pub category: Category,
    pub member_count: usize,
    /// Group fraction of the evaluation set.
    pub gamma_hat: f64,
    /// Fraction of group members the predictor maps to this label.
    pub psi_hat: f64,
    /// gamma_hat * psi_hat.
    pub frequency: f64,
    /// None exactly when the category has no members.
    pub calibration_error: Option<f64>,
}

/// ŷ − mean(y) over members of the category; `None` when empty.
pub fn empirical_calibration_error<P: Predictor + ?Sized>(
    model: &P,
    eval: &LabeledDataset,
    cat: Category,
) -> Option<f64> {
    let mut members = 0usize;
    let mut label_sum = 0usize;
    for ex in &eval.examples {
        if ex.in_group(cat.group) && model.predict(&ex.features) == cat.predicted_label {
            members += 1;
            label_sum += ex.label as usize;
        }
    }
    if members == 0 {
        None
    } else {
        Some(cat.predicted_label as f64 - label_sum as f64 / members as f64)
    }
}

/// One [`CategoryStats`] per declared group × label in {0,1}.
pub fn category_stats<P: Predictor + ?Sized>(
    model: &P,
    eval: &LabeledDataset,
) -> Vec<CategoryStats> {
    let n = eval.len();
    let num_groups = eval.groups.len();
    // member/label tallies per (group, predicted label)
    let mut group_size = vec![0usize; num_groups];
    let mut members = vec![[0usize; 2]; num_groups];
    let mut label_sums = vec![[0usize; 2]; num_groups];
    for ex in &eval.examples {
        let pred = model.predict(&ex.features) as usize;
        for &g in &ex.group_ids {
            group_size[g] += 1;
            members[g][pred] += 1;
            label_sums[g][pred] += ex.label as usize;
        }
    }

    let mut out = Vec::with_capacity(num_groups * 2);
    for g in 0..num_groups {
        for label in 0..2u8 {
            let m = members[g][label as usize];
            let gamma_hat = if n == 0 { 0.0 } else { group_size[g] as f64 / n as f64 };
            let psi_hat = if group_size[g] == 0 {
                0.0
            } else {
                m as f64 / group_size[g] as f64
            };
            let calibration_error = if m == 0 {
                None
            } else {
                Some(label as f64 - label_sums[g][label as usize] as f64 / m as f64)
            };
            out.push(CategoryStats {
                category: Category { group: g, predicted_label: label },
                member_count: m,
                gamma_hat,
                psi_hat,
                frequency: gamma_hat * psi_hat,
                calibration_error,
            });
        }
    }
    out
}

/// (γ, ψ) estimates: the minimum group frequency over nonempty groups and
/// the minimum conditional prediction frequency over nonempty categories.
pub fn min_frequency_params(stats: &[CategoryStats]) -> Result<(f64, f64), CalibrationError> {
    let mut gamma = f64::INFINITY;
    let mut psi = f64::INFINITY;
    for s in stats {
        if s.gamma_hat > 0.0 {
            gamma = gamma.min(s.gamma_hat);
        }
        if s.member_count > 0 {
            psi = psi.min(s.psi_hat);
        }
    }
    if !gamma.is_finite() {
        return Err(CalibrationError::NoNonemptyGroup);
    }
    Ok((gamma, psi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Example;

    /// Predicts a fixed label per feature sign: score = x[0].
    struct SignPredictor;
    impl Predictor for SignPredictor {
        fn raw_score(&self, x: &[f64]) -> f64 {
            x[0]
        }
    }

    /// Always predicts `label`.
    struct ConstPredictor(u8);
    impl Predictor for ConstPredictor {
        fn raw_score(&self, _: &[f64]) -> f64 {
            if self.0 == 1 {
                1.0
            } else {
                -1.0
            }
        }
    }

    fn ds(rows: &[(f64, u8, &[usize])], num_groups: usize) -> LabeledDataset {
        LabeledDataset {
            examples: rows
                .iter()
                .map(|(x, y, gs)| Example {
                    features: vec![*x],
                    label: *y,
                    group_ids: gs.to_vec(),
                })
                .collect(),
            feature_names: vec!["x".into()],
            groups: (0..num_groups).map(|i| format!("g{i}")).collect(),
        }
    }

    #[test]
    fn perfect_predictor_has_zero_error() {
        // SignPredictor predicts 1 iff x >= 0; labels match
        let eval = ds(
            &[(1.0, 1, &[0]), (-1.0, 0, &[0]), (2.0, 1, &[1]), (-2.0, 0, &[1])],
            2,
        );
        for s in category_stats(&SignPredictor, &eval) {
            if s.member_count > 0 {
                assert_eq!(s.calibration_error, Some(0.0));
            }
        }
    }

    #[test]
    fn hand_enumerated_error() {
        // group A: predictions (1,1,0), labels (1,0,0); cat (A,1) -> 1 - 1/2
        let eval = ds(&[(1.0, 1, &[0]), (1.0, 0, &[0]), (-1.0, 0, &[0])], 1);
        let err = empirical_calibration_error(
            &SignPredictor,
            &eval,
            Category { group: 0, predicted_label: 1 },
        );
        assert_eq!(err, Some(0.5));
    }

    #[test]
    fn empty_category_is_undefined() {
        let eval = ds(&[(1.0, 1, &[0])], 1);
        let err = empirical_calibration_error(
            &SignPredictor,
            &eval,
            Category { group: 0, predicted_label: 0 },
        );
        assert_eq!(err, None);
    }

    #[test]
    fn stats_hand_example() {
        // group 0 holds 4 of 10 examples, 3 of them predicted 1
        let mut rows: Vec<(f64, u8, &[usize])> = vec![
            (1.0, 1, &[0]),
            (1.0, 0, &[0]),
            (1.0, 1, &[0]),
            (-1.0, 0, &[0]),
        ];
        for _ in 0..6 {
            rows.push((1.0, 1, &[]));
        }
        let eval = ds(&rows, 1);
        let stats = category_stats(&SignPredictor, &eval);
        let s1 = stats.iter().find(|s| s.category.predicted_label == 1).unwrap();
        assert!((s1.gamma_hat - 0.4).abs() < 1e-12);
        assert!((s1.psi_hat - 0.75).abs() < 1e-12);
        assert!((s1.frequency - 0.3).abs() < 1e-12);
    }

    #[test]
    fn psi_sums_to_one_per_nonempty_group() {
        let eval = ds(
            &[(1.0, 1, &[0]), (-1.0, 0, &[0]), (1.0, 0, &[0]), (5.0, 1, &[1])],
            2,
        );
        let stats = category_stats(&SignPredictor, &eval);
        for g in 0..2 {
            let total: f64 = stats
                .iter()
                .filter(|s| s.category.group == g)
                .map(|s| s.psi_hat)
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn all_predicted_one_collapses_psi() {
        let eval = ds(&[(0.5, 1, &[0]), (0.5, 0, &[0])], 1);
        let stats = category_stats(&ConstPredictor(1), &eval);
        assert_eq!(stats[1].psi_hat, 1.0); // (g0, 1)
        assert_eq!(stats[0].psi_hat, 0.0); // (g0, 0)
    }

    #[test]
    fn member_counts_partition_group() {
        let eval = ds(
            &[(1.0, 1, &[0]), (-1.0, 0, &[0]), (1.0, 0, &[0]), (-3.0, 1, &[0])],
            1,
        );
        let stats = category_stats(&SignPredictor, &eval);
        let total: usize = stats.iter().map(|s| s.member_count).sum();
        assert_eq!(total, 4);
    }

    #[test]
    fn min_frequency_hand_values() {
        let eval = ds(
            &[
                (1.0, 1, &[0]),
                (1.0, 0, &[0]),
                (-1.0, 0, &[0]),
                (-1.0, 0, &[0]),
                (1.0, 1, &[1]),
                (1.0, 1, &[1]),
                (1.0, 0, &[1]),
                (1.0, 0, &[1]),
                (-1.0, 0, &[1]),
                (-1.0, 0, &[1]),
            ],
            2,
        );
        let stats = category_stats(&SignPredictor, &eval);
        let (gamma, psi) = min_frequency_params(&stats).unwrap();
        assert!((gamma - 0.4).abs() < 1e-12);
        // group 1 splits 4/2 over labels -> psi values {2/3, 1/3}; group 0 {1/2, 1/2}
        assert!((psi - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn min_frequency_single_group() {
        let eval = ds(&[(1.0, 1, &[0]), (-1.0, 0, &[0])], 1);
        let stats = category_stats(&SignPredictor, &eval);
        let (gamma, _) = min_frequency_params(&stats).unwrap();
        assert_eq!(gamma, 1.0);
    }

    #[test]
    fn min_frequency_balanced_disjoint_groups() {
        let eval = ds(&[(1.0, 1, &[0]), (1.0, 1, &[1])], 2);
        let stats = category_stats(&SignPredictor, &eval);
        let (gamma, psi) = min_frequency_params(&stats).unwrap();
        assert_eq!(gamma, 0.5);
        assert_eq!(psi, 1.0);
    }

    #[test]
    fn no_nonempty_group_errors() {
        let eval = ds(&[(1.0, 1, &[])], 1);
        let stats = category_stats(&SignPredictor, &eval);
        assert!(matches!(
            min_frequency_params(&stats),
            Err(CalibrationError::NoNonemptyGroup)
        ));
    }
}

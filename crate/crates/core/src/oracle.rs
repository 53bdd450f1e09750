//! Finite discrete distributions with exactly computable true
//! calibration error. These serve as ground truth for convergence
//! checks: the distribution is enumerable, so the conditional label
//! expectation inside each (group, predicted label) category is exact.
//!
//! Distributions persist as a plain-text atom table, one atom per line:
//!
//! ```text
//! # features | groups | p_y1 | mass
//! 0.0,1.5 | A | 0.8 | 0.5
//! 1.0,0.0 | A,B | 0.3 | 0.5
//! ```

use std::io::{BufRead, Write as _};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::calibration::Category;
use crate::data::{Example, LabeledDataset};
use crate::train::Predictor;

const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("atom masses sum to {0}, expected 1")]
    MassNotNormalized(f64),
    #[error("atom {0} has non-positive mass")]
    NonPositiveMass(usize),
    #[error("atom {0} has p_y1 outside [0,1]")]
    BadLabelProbability(usize),
    #[error("atom {index} names undeclared group {group:?}")]
    UndeclaredGroup { index: usize, group: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One support point: a feature vector, its group memberships (indices
/// into the declared group list), the conditional P(y=1 | x), and its
/// probability mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub features: Vec<f64>,
    pub group_ids: Vec<usize>,
    pub p_y1: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    pub atoms: Vec<Atom>,
    pub groups: Vec<String>,
    pub feature_names: Vec<String>,
}

impl DiscreteDistribution {
    pub fn new(
        atoms: Vec<Atom>,
        groups: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<DiscreteDistribution, OracleError> {
        let mut total = 0.0;
        for (i, atom) in atoms.iter().enumerate() {
            if !(atom.mass > 0.0) {
                return Err(OracleError::NonPositiveMass(i));
            }
            if !(0.0..=1.0).contains(&atom.p_y1) {
                return Err(OracleError::BadLabelProbability(i));
            }
            if let Some(&g) = atom.group_ids.iter().find(|&&g| g >= groups.len()) {
                return Err(OracleError::UndeclaredGroup {
                    index: i,
                    group: format!("#{g}"),
                });
            }
            total += atom.mass;
        }
        if (total - 1.0).abs() > MASS_TOL {
            return Err(OracleError::MassNotNormalized(total));
        }
        Ok(DiscreteDistribution { atoms, groups, feature_names })
    }

    /// c = ŷ − E[y | x ∈ g, h(x) = ŷ], by exact enumeration over atoms.
    /// `None` when the conditioning event has zero mass.
    pub fn true_calibration_error<P: Predictor + ?Sized>(
        &self,
        model: &P,
        cat: Category,
    ) -> Option<f64> {
        let mut mass = 0.0;
        let mut weighted_p = 0.0;
        for atom in &self.atoms {
            if atom.group_ids.contains(&cat.group)
                && model.predict(&atom.features) == cat.predicted_label
            {
                mass += atom.mass;
                weighted_p += atom.mass * atom.p_y1;
            }
        }
        if mass == 0.0 {
            None
        } else {
            Some(cat.predicted_label as f64 - weighted_p / mass)
        }
    }

    /// n i.i.d. draws: atoms by mass, labels Bernoulli(p_y1).
    pub fn sample(&self, n: usize, seed: u64) -> LabeledDataset {
        assert!(n >= 1, "n must be >= 1");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cumulative: Vec<f64> = self
            .atoms
            .iter()
            .scan(0.0, |acc, a| {
                *acc += a.mass;
                Some(*acc)
            })
            .collect();
        let examples = (0..n)
            .map(|_| {
                let u: f64 = rng.gen();
                let idx = cumulative
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or(self.atoms.len() - 1);
                let atom = &self.atoms[idx];
                let label = if rng.gen::<f64>() < atom.p_y1 { 1 } else { 0 };
                Example {
                    features: atom.features.clone(),
                    label,
                    group_ids: atom.group_ids.clone(),
                }
            })
            .collect();
        LabeledDataset {
            examples,
            feature_names: self.feature_names.clone(),
            groups: self.groups.clone(),
        }
    }

    /// |true − empirical| calibration error on a fresh n-sample.
    /// `None` when either side is undefined.
    pub fn convergence_gap<P: Predictor + ?Sized>(
        &self,
        model: &P,
        cat: Category,
        n: usize,
        seed: u64,
    ) -> Option<f64> {
        let truth = self.true_calibration_error(model, cat)?;
        let sample = self.sample(n, seed);
        let empirical = crate::calibration::empirical_calibration_error(model, &sample, cat)?;
        Some((truth - empirical).abs())
    }

    pub fn load(path: &Path) -> Result<DiscreteDistribution, OracleError> {
        let file = std::fs::File::open(path)?;
        let mut atoms = Vec::new();
        let mut groups: Vec<String> = Vec::new();
        let mut dim: Option<usize> = None;
        for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| OracleError::Parse { line: lineno + 1, message };
            let fields: Vec<&str> = text.split('|').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(parse_err(format!(
                    "expected 4 '|'-separated fields (features | groups | p_y1 | mass), got {}",
                    fields.len()
                )));
            }
            let features = fields[0]
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| parse_err(format!("bad feature value {:?}", s.trim())))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            if let Some(d) = dim {
                if features.len() != d {
                    return Err(parse_err(format!(
                        "atom has {} features, earlier atoms had {d}",
                        features.len()
                    )));
                }
            } else {
                dim = Some(features.len());
            }
            let mut group_ids = Vec::new();
            if !fields[1].is_empty() {
                for name in fields[1].split(',').map(str::trim) {
                    let id = match groups.iter().position(|g| g == name) {
                        Some(id) => id,
                        None => {
                            groups.push(name.to_string());
                            groups.len() - 1
                        }
                    };
                    group_ids.push(id);
                }
                group_ids.sort_unstable();
                group_ids.dedup();
            }
            let p_y1: f64 = fields[2]
                .parse()
                .map_err(|_| parse_err(format!("bad p_y1 value {:?}", fields[2])))?;
            let mass: f64 = fields[3]
                .parse()
                .map_err(|_| parse_err(format!("bad mass value {:?}", fields[3])))?;
            atoms.push(Atom { features, group_ids, p_y1, mass });
        }
        let dim = dim.unwrap_or(0);
        let feature_names = (0..dim).map(|i| format!("x{i}")).collect();
        DiscreteDistribution::new(atoms, groups, feature_names)
    }

    pub fn save(&self, path: &Path) -> Result<(), OracleError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# features | groups | p_y1 | mass")?;
        for atom in &self.atoms {
            let features = atom
                .features
                .iter()
                .map(|f| f.to_string())
                .collect::<Vec<_>>()
                .join(",");
            let groups = atom
                .group_ids
                .iter()
                .map(|&g| self.groups[g].as_str())
                .collect::<Vec<_>>()
                .join(",");
            writeln!(out, "{features} | {groups} | {} | {}", atom.p_y1, atom.mass)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::PredictorModel;

    fn two_atom() -> DiscreteDistribution {
        // x=0 in group A with p_y1=0.8; x=1 in group B with p_y1=0.3
        DiscreteDistribution::new(
            vec![
                Atom { features: vec![0.0], group_ids: vec![0], p_y1: 0.8, mass: 0.5 },
                Atom { features: vec![1.0], group_ids: vec![1], p_y1: 0.3, mass: 0.5 },
            ],
            vec!["A".into(), "B".into()],
            vec!["x".into()],
        )
        .unwrap()
    }

    /// h ≡ 1.
    fn always_one() -> PredictorModel {
        PredictorModel::LinearSvm { weights: vec![0.0], bias: 1.0, degenerate: true }
    }

    /// h(0)=1, h(1)=0: score = 0.5 − x.
    fn bayes() -> PredictorModel {
        PredictorModel::LinearSvm { weights: vec![-1.0], bias: 0.5, degenerate: false }
    }

    #[test]
    fn true_error_hand_values() {
        let dist = two_atom();
        let c = dist
            .true_calibration_error(&always_one(), Category { group: 0, predicted_label: 1 })
            .unwrap();
        assert!((c - 0.2).abs() < 1e-15);

        let c = dist
            .true_calibration_error(&bayes(), Category { group: 1, predicted_label: 0 })
            .unwrap();
        assert!((c - (-0.3)).abs() < 1e-15);
    }

    #[test]
    fn matched_probabilities_give_zero() {
        let dist = DiscreteDistribution::new(
            vec![Atom { features: vec![5.0], group_ids: vec![0], p_y1: 1.0, mass: 1.0 }],
            vec!["A".into()],
            vec!["x".into()],
        )
        .unwrap();
        let c = dist
            .true_calibration_error(&always_one(), Category { group: 0, predicted_label: 1 })
            .unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn zero_mass_category_undefined() {
        let dist = two_atom();
        // always_one never predicts 0
        assert_eq!(
            dist.true_calibration_error(&always_one(), Category { group: 0, predicted_label: 0 }),
            None
        );
    }

    #[test]
    fn brute_force_enumeration_agrees() {
        // independent computation with the opposite loop structure:
        // numerator and denominator accumulated per-category over a
        // cross of (atom, group) pairs
        let dist = two_atom();
        let model = bayes();
        for g in 0..2 {
            for label in 0..2u8 {
                let cat = Category { group: g, predicted_label: label };
                let mut num = 0.0;
                let mut den = 0.0;
                for atom in &dist.atoms {
                    for &ag in &atom.group_ids {
                        if ag != g {
                            continue;
                        }
                        if crate::train::Predictor::predict(&model, &atom.features) != label {
                            continue;
                        }
                        den += atom.mass;
                        num += atom.mass * atom.p_y1;
                    }
                }
                let expected = if den == 0.0 { None } else { Some(label as f64 - num / den) };
                assert_eq!(dist.true_calibration_error(&model, cat), expected);
            }
        }
    }

    #[test]
    fn sampling_deterministic_and_mass_faithful() {
        let dist = two_atom();
        let a = dist.sample(1000, 9);
        let b = dist.sample(1000, 9);
        assert_eq!(a.examples, b.examples);

        let big = dist.sample(100_000, 1);
        let frac_a = big.empirical_group_frequency("A").unwrap();
        // binomial 3 sigma around 0.5 at n = 1e5
        assert!((frac_a - 0.5).abs() < 0.01, "group A fraction {frac_a}");
    }

    #[test]
    fn deterministic_labels_sample_exactly() {
        let dist = DiscreteDistribution::new(
            vec![Atom { features: vec![0.0], group_ids: vec![0], p_y1: 1.0, mass: 1.0 }],
            vec!["A".into()],
            vec!["x".into()],
        )
        .unwrap();
        let ds = dist.sample(50, 3);
        assert!(ds.examples.iter().all(|e| e.label == 1));
    }

    #[test]
    fn deterministic_labels_have_zero_gap() {
        let dist = DiscreteDistribution::new(
            vec![
                Atom { features: vec![0.0], group_ids: vec![0], p_y1: 1.0, mass: 0.5 },
                Atom { features: vec![1.0], group_ids: vec![0], p_y1: 0.0, mass: 0.5 },
            ],
            vec!["A".into()],
            vec!["x".into()],
        )
        .unwrap();
        let gap = dist
            .convergence_gap(&bayes(), Category { group: 0, predicted_label: 1 }, 200, 4)
            .unwrap();
        assert_eq!(gap, 0.0);
    }

    #[test]
    fn gap_bounded_by_one_at_n_1() {
        let dist = two_atom();
        for seed in 0..20 {
            if let Some(gap) =
                dist.convergence_gap(&always_one(), Category { group: 0, predicted_label: 1 }, 1, seed)
            {
                assert!(gap <= 1.0);
            }
        }
    }

    #[test]
    fn atom_table_round_trip() {
        let dist = DiscreteDistribution::new(
            vec![
                Atom { features: vec![0.0, 1.5], group_ids: vec![0], p_y1: 0.8, mass: 0.5 },
                Atom { features: vec![1.0, 0.0], group_ids: vec![0, 1], p_y1: 0.3, mass: 0.5 },
            ],
            vec!["A".into(), "B".into()],
            vec!["x0".into(), "x1".into()],
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        dist.save(f.path()).unwrap();
        let loaded = DiscreteDistribution::load(f.path()).unwrap();
        assert_eq!(loaded.atoms, dist.atoms);
        assert_eq!(loaded.groups, dist.groups);
    }

    #[test]
    fn bad_mass_rejected() {
        let r = DiscreteDistribution::new(
            vec![Atom { features: vec![0.0], group_ids: vec![], p_y1: 0.5, mass: 0.7 }],
            vec![],
            vec!["x".into()],
        );
        assert!(matches!(r, Err(OracleError::MassNotNormalized(_))));
    }

    #[test]
    fn parse_error_reports_line() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), "# header\n0.0 | A | 0.5\n").unwrap();
        match DiscreteDistribution::load(f.path()) {
            Err(OracleError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}

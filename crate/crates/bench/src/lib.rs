//! Shared fixtures for the benchmark targets.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use multical_core::data::{Example, LabeledDataset};

pub fn random_dataset(n: usize, dim: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LabeledDataset {
        examples: (0..n)
            .map(|_| Example {
                features: (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                label: rng.gen_range(0..=1),
                group_ids: vec![rng.gen_range(0..2)],
            })
            .collect(),
        feature_names: (0..dim).map(|i| format!("x{i}")).collect(),
        groups: vec!["A".into(), "B".into()],
    }
}

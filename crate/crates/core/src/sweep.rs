//! Full experiment sweep: splits × classifiers × repetitions, producing
//! persisted calibration records.
//!
//! Determinism contract: re-running with an identical config reproduces
//! the output CSV byte-for-byte, regardless of `worker_count`. Tasks run
//! on a bounded rayon pool, but the records are sorted by
//! (model_kind, z1, z2, rep, group, predicted_label) before writing, so
//! scheduling never leaks into the artifact.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::calibration::{category_stats, CategoryStats};
use crate::data::{ingest_csv, DataError, GroupSpec, IngestOptions, LabeledDataset};
use crate::oracle::{DiscreteDistribution, OracleError};
use crate::split::{enumerate_splits, filter_by_train_size, Split, SplitError, SplitPlan};
use crate::train::{
    train_linear_svm, train_rbf_svm, train_relu_net, LinearSvmConfig, PredictorModel,
    RbfSvmConfig, ReluNetConfig, TrainError,
};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("sidecar encode error: {0}")]
    Encode(#[from] serde_json::Error),
}

/// Where the sweep's examples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        ingest: IngestOptions,
        group_spec: GroupSpec,
        feature_columns: Vec<String>,
    },
    /// Sample `n` points from a saved atom table.
    OracleAtoms {
        path: PathBuf,
        n: usize,
        sample_seed: u64,
    },
}

/// One classifier to train per split, with its hyperparameters. The
/// config is echoed into the sweep sidecar so every record is
/// reproducible from the artifact alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ModelSpec {
    LinearSvm(LinearSvmConfig),
    RbfSvm(RbfSvmConfig),
    ReluNet(ReluNetConfig),
}

impl ModelSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelSpec::LinearSvm(_) => "LinearSVM",
            ModelSpec::RbfSvm(_) => "RbfSVM",
            ModelSpec::ReluNet(_) => "ReluNet",
        }
    }

    fn train(&self, train: &LabeledDataset) -> Result<PredictorModel, TrainError> {
        match self {
            ModelSpec::LinearSvm(cfg) => train_linear_svm(train, cfg),
            ModelSpec::RbfSvm(cfg) => train_rbf_svm(train, cfg),
            ModelSpec::ReluNet(cfg) => train_relu_net(train, cfg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub dataset_id: String,
    pub source: DatasetSource,
    /// Ordered group pair (g1, g2) controlling the split counts.
    pub group_pair: (String, String),
    pub plan: SplitPlan,
    pub models: Vec<ModelSpec>,
    pub output_path: PathBuf,
    pub worker_count: usize,
}

/// One row of the output CSV; field order here is the column order.
/// `error_code` is set (and the measured fields empty) when a split's
/// training failed — the sweep records the failure and moves on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub dataset_id: String,
    pub model_kind: String,
    pub group: String,
    pub predicted_label: u8,
    pub z1: usize,
    pub z2: usize,
    pub rep: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub gamma_hat: Option<f64>,
    pub psi_hat: Option<f64>,
    pub frequency: Option<f64>,
    pub calibration_error: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub split_seed: u64,
    pub error_code: Option<String>,
}

fn train_error_code(e: &TrainError) -> &'static str {
    match e {
        TrainError::NonFiniteLoss => "NonFiniteLoss",
        TrainError::EmptyTrainSet => "EmptyTrainSet",
        TrainError::Io(_) => "Io",
        TrainError::Decode(_) => "Decode",
        TrainError::BadVersion(_) => "BadVersion",
    }
}

fn load_dataset(source: &DatasetSource) -> Result<LabeledDataset, SweepError> {
    match source {
        DatasetSource::Csv { path, ingest, group_spec, feature_columns } => {
            let (ds, _) = ingest_csv(path, ingest, group_spec, feature_columns)?;
            Ok(ds)
        }
        DatasetSource::OracleAtoms { path, n, sample_seed } => {
            let dist = DiscreteDistribution::load(path)?;
            Ok(dist.sample(*n, *sample_seed))
        }
    }
}

fn records_for_task(
    cfg: &SweepConfig,
    ds: &LabeledDataset,
    split: &Split,
    spec: &ModelSpec,
    pair_groups: &[(usize, String)],
) -> Vec<CalibrationRecord> {
    let base = |group: &str, label: u8| CalibrationRecord {
        dataset_id: cfg.dataset_id.clone(),
        model_kind: spec.kind_name().to_string(),
        group: group.to_string(),
        predicted_label: label,
        z1: split.z1,
        z2: split.z2,
        rep: split.rep,
        train_size: split.train_indices.len(),
        test_size: split.test_indices.len(),
        gamma_hat: None,
        psi_hat: None,
        frequency: None,
        calibration_error: None,
        train_accuracy: None,
        test_accuracy: None,
        split_seed: split.split_seed,
        error_code: None,
    };

    let train = ds.subset(&split.train_indices);
    let test = ds.subset(&split.test_indices);
    let model = match spec.train(&train) {
        Ok(m) => m,
        Err(e) => {
            let code = train_error_code(&e);
            return pair_groups
                .iter()
                .flat_map(|(_, name)| {
                    [0u8, 1].map(|label| {
                        let mut r = base(name, label);
                        r.error_code = Some(code.to_string());
                        r
                    })
                })
                .collect();
        }
    };

    let train_acc = model.accuracy(&train);
    let test_acc = model.accuracy(&test);
    let stats: Vec<CategoryStats> = category_stats(&model, &test);
    pair_groups
        .iter()
        .flat_map(|&(gi, ref name)| {
            [0u8, 1].map(|label| {
                let s = stats
                    .iter()
                    .find(|s| s.category.group == gi && s.category.predicted_label == label)
                    .expect("category_stats covers every group x label");
                let mut r = base(name, label);
                r.gamma_hat = Some(s.gamma_hat);
                r.psi_hat = Some(s.psi_hat);
                r.frequency = Some(s.frequency);
                r.calibration_error = s.calibration_error;
                r.train_accuracy = Some(train_acc);
                r.test_accuracy = Some(test_acc);
                r
            })
        })
        .collect()
}

/// Encode records as the canonical output CSV (header row, empty field
/// for null).
pub fn records_to_csv(records: &[CalibrationRecord]) -> Result<Vec<u8>, SweepError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for r in records {
        writer.serialize(r)?;
    }
    Ok(writer.into_inner().expect("in-memory writer"))
}

pub fn read_records_csv(path: &Path) -> Result<Vec<CalibrationRecord>, SweepError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    config: &'a SweepConfig,
    record_count: usize,
    csv_sha256: String,
}

/// Run the whole sweep and persist the records.
///
/// Writes `cfg.output_path` (CSV) and a sidecar at the same path with
/// `.json` appended, echoing the config and the SHA-256 of the CSV bytes.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<CalibrationRecord>, SweepError> {
    if cfg.models.is_empty() {
        return Err(SweepError::InvalidConfig("at least one model kind required".into()));
    }
    let ds = load_dataset(&cfg.source)?;
    let (g1, g2) = (&cfg.group_pair.0, &cfg.group_pair.1);
    let pair_groups: Vec<(usize, String)> = [g1, g2]
        .iter()
        .map(|g| {
            ds.group_index(g)
                .map(|i| (i, g.to_string()))
                .ok_or_else(|| SweepError::InvalidConfig(format!("unknown group {g:?}")))
        })
        .collect::<Result<_, _>>()?;

    let splits_iter = enumerate_splits(&ds, g1, g2, &cfg.plan)?;
    let splits: Vec<Split> = match cfg.plan.train_size_window {
        Some(window) => filter_by_train_size(splits_iter, window)?.collect(),
        None => splits_iter.collect(),
    };

    let tasks: Vec<(&Split, &ModelSpec)> = splits
        .iter()
        .flat_map(|s| cfg.models.iter().map(move |m| (s, m)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.worker_count.max(1))
        .build()
        .map_err(|e| SweepError::InvalidConfig(format!("worker pool: {e}")))?;
    let mut records: Vec<CalibrationRecord> = pool.install(|| {
        tasks
            .par_iter()
            .flat_map_iter(|(split, spec)| records_for_task(cfg, &ds, split, spec, &pair_groups))
            .collect()
    });

    records.sort_by(|a, b| {
        (&a.model_kind, a.z1, a.z2, a.rep, &a.group, a.predicted_label)
            .cmp(&(&b.model_kind, b.z1, b.z2, b.rep, &b.group, b.predicted_label))
    });

    let csv_bytes = records_to_csv(&records)?;
    let mut hasher = Sha256::new();
    hasher.update(&csv_bytes);
    let digest = hasher.finalize();
    let csv_sha256 = digest.iter().map(|b| format!("{b:02x}")).collect::<String>();

    std::fs::write(&cfg.output_path, &csv_bytes)?;
    let sidecar = Sidecar {
        config: cfg,
        record_count: records.len(),
        csv_sha256,
    };
    let mut sidecar_path = cfg.output_path.clone().into_os_string();
    sidecar_path.push(".json");
    std::fs::write(PathBuf::from(sidecar_path), serde_json::to_string_pretty(&sidecar)?)?;

    Ok(records)
}

/// Per-bin dispersion of |calibration_error| over record frequency.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinSummary {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_abs_error: Option<f64>,
    /// Nearest-rank 90th percentile: the ⌈0.9·n⌉-th smallest value.
    pub p90_abs_error: Option<f64>,
}

/// Bin records by `frequency` into half-open bins [lo, hi) and summarize
/// the spread of |calibration_error| per bin. Records with a null error
/// (empty category) or a failure code are excluded.
pub fn dispersion_summary(
    records: &[CalibrationRecord],
    frequency_bins: &[(f64, f64)],
) -> Vec<BinSummary> {
    frequency_bins
        .iter()
        .map(|&(lo, hi)| {
            let mut errs: Vec<f64> = records
                .iter()
                .filter(|r| r.error_code.is_none())
                .filter_map(|r| {
                    let f = r.frequency?;
                    let e = r.calibration_error?;
                    (f >= lo && f < hi).then_some(e.abs())
                })
                .collect();
            if errs.is_empty() {
                return BinSummary {
                    lo,
                    hi,
                    count: 0,
                    mean_abs_error: None,
                    p90_abs_error: None,
                };
            }
            errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = errs.len();
            let mean = errs.iter().sum::<f64>() / n as f64;
            let rank = ((0.9 * n as f64).ceil() as usize).max(1);
            BinSummary {
                lo,
                hi,
                count: n,
                mean_abs_error: Some(mean),
                p90_abs_error: Some(errs[rank - 1]),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_csv_dataset(dir: &Path, rows: usize) -> PathBuf {
        // separable two-group data: group M at x>0 labeled 1, F at x<0 labeled 0
        let path = dir.join("data.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "x,sex,y").unwrap();
        for i in 0..rows {
            if i % 2 == 0 {
                writeln!(f, "{},M,1", 1.0 + (i % 7) as f64 * 0.1).unwrap();
            } else {
                writeln!(f, "{},F,0", -1.0 - (i % 5) as f64 * 0.1).unwrap();
            }
        }
        path
    }

    fn csv_source(path: PathBuf) -> DatasetSource {
        DatasetSource::Csv {
            path,
            ingest: IngestOptions {
                label_column: "y".into(),
                positive_label: "1".into(),
                negative_label: None,
            },
            group_spec: GroupSpec {
                protected_column: "sex".into(),
                group_values: vec!["M".into(), "F".into()],
                augment_with_others: false,
            },
            feature_columns: vec!["x".into()],
        }
    }

    fn small_config(dir: &Path, worker_count: usize) -> SweepConfig {
        SweepConfig {
            dataset_id: "toy".into(),
            source: csv_source(write_csv_dataset(dir, 60)),
            group_pair: ("M".into(), "F".into()),
            plan: SplitPlan {
                v1: vec![5, 10],
                v2: vec![5],
                reps: 2,
                seed: 3,
                augment_with_others: false,
                train_size_window: None,
            },
            models: vec![ModelSpec::LinearSvm(LinearSvmConfig::default())],
            output_path: dir.join("records.csv"),
            worker_count,
        }
    }

    #[test]
    fn single_split_yields_four_records() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path(), 1);
        cfg.plan.v1 = vec![5];
        cfg.plan.reps = 1;
        let records = run_sweep(&cfg).unwrap();
        assert_eq!(records.len(), 4);
        assert!(records.iter().all(|r| r.error_code.is_none()));
    }

    #[test]
    fn record_count_matches_product() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path(), 2);
        cfg.models.push(ModelSpec::RbfSvm(RbfSvmConfig::default()));
        // 2·1 grid × 2 reps × 2 models × 2 groups × 2 labels
        let records = run_sweep(&cfg).unwrap();
        assert_eq!(records.len(), 2 * 2 * 2 * 4);
    }

    #[test]
    fn rerun_is_byte_identical_and_hash_matches() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path(), 2);
        run_sweep(&cfg).unwrap();
        let first = std::fs::read(&cfg.output_path).unwrap();
        run_sweep(&cfg).unwrap();
        let second = std::fs::read(&cfg.output_path).unwrap();
        assert_eq!(first, second);

        let sidecar: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("records.csv.json")).unwrap(),
        )
        .unwrap();
        let mut hasher = Sha256::new();
        hasher.update(&second);
        let expect = hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<String>();
        assert_eq!(sidecar["csv_sha256"], serde_json::Value::String(expect));
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path(), 1);
        cfg.models.push(ModelSpec::ReluNet(ReluNetConfig {
            hidden_units: 4,
            epochs: 3,
            ..ReluNetConfig::default()
        }));
        run_sweep(&cfg).unwrap();
        let serial = std::fs::read(&cfg.output_path).unwrap();
        cfg.worker_count = 4;
        run_sweep(&cfg).unwrap();
        let parallel = std::fs::read(&cfg.output_path).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn empty_train_set_records_failure_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path(), 1);
        cfg.plan.v1 = vec![0];
        cfg.plan.v2 = vec![0];
        cfg.plan.reps = 1;
        let records = run_sweep(&cfg).unwrap();
        assert_eq!(records.len(), 4);
        assert!(records
            .iter()
            .all(|r| r.error_code.as_deref() == Some("EmptyTrainSet")));
        assert!(records.iter().all(|r| r.calibration_error.is_none()));
    }

    #[test]
    fn perfect_fit_on_deterministic_oracle_gives_zero_errors() {
        let dir = tempfile::tempdir().unwrap();
        // deterministic labels: x=1 -> y=1 in group M, x=-1 -> y=0 in F
        let atoms = dir.path().join("atoms.txt");
        std::fs::write(&atoms, "1.0 | M | 1 | 0.5\n-1.0 | F | 0 | 0.5\n").unwrap();
        let cfg = SweepConfig {
            dataset_id: "oracle".into(),
            source: DatasetSource::OracleAtoms { path: atoms, n: 200, sample_seed: 1 },
            group_pair: ("M".into(), "F".into()),
            plan: SplitPlan {
                v1: vec![20],
                v2: vec![20],
                reps: 2,
                seed: 0,
                augment_with_others: false,
                train_size_window: None,
            },
            models: vec![ModelSpec::LinearSvm(LinearSvmConfig::default())],
            output_path: dir.path().join("out.csv"),
            worker_count: 1,
        };
        let records = run_sweep(&cfg).unwrap();
        for r in &records {
            if let Some(e) = r.calibration_error {
                assert_eq!(e, 0.0, "record {r:?}");
            }
            assert_eq!(r.test_accuracy, Some(1.0));
        }
    }

    #[test]
    fn csv_round_trips_through_reader() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path(), 1);
        let records = run_sweep(&cfg).unwrap();
        let back = read_records_csv(&cfg.output_path).unwrap();
        assert_eq!(records, back);
    }

    fn record_with(freq: f64, err: Option<f64>) -> CalibrationRecord {
        CalibrationRecord {
            dataset_id: "d".into(),
            model_kind: "LinearSVM".into(),
            group: "g".into(),
            predicted_label: 1,
            z1: 0,
            z2: 0,
            rep: 0,
            train_size: 0,
            test_size: 0,
            gamma_hat: Some(freq),
            psi_hat: Some(1.0),
            frequency: Some(freq),
            calibration_error: err,
            train_accuracy: Some(1.0),
            test_accuracy: Some(1.0),
            split_seed: 0,
            error_code: None,
        }
    }

    #[test]
    fn p90_nearest_rank_hand_example() {
        let records: Vec<CalibrationRecord> = (1..=10)
            .map(|i| record_with(0.5, Some(i as f64 / 10.0)))
            .collect();
        let bins = dispersion_summary(&records, &[(0.0, 1.0)]);
        assert_eq!(bins[0].count, 10);
        assert_eq!(bins[0].p90_abs_error, Some(0.9));
    }

    #[test]
    fn zero_errors_give_zero_p90() {
        let records: Vec<CalibrationRecord> =
            (0..5).map(|_| record_with(0.3, Some(0.0))).collect();
        let bins = dispersion_summary(&records, &[(0.0, 0.5), (0.5, 1.0)]);
        assert_eq!(bins[0].p90_abs_error, Some(0.0));
        assert_eq!(bins[1].count, 0);
        assert_eq!(bins[1].p90_abs_error, None);
    }

    #[test]
    fn null_errors_excluded() {
        let records = vec![record_with(0.4, None), record_with(0.4, Some(0.2))];
        let bins = dispersion_summary(&records, &[(0.0, 1.0)]);
        assert_eq!(bins[0].count, 1);
        assert_eq!(bins[0].mean_abs_error, Some(0.2));
    }
}

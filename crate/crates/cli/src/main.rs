//! `multical` — measure multicalibration error under demographic-
//! controlled resampling and evaluate the matching sample-complexity
//! bounds.
//!
//! Exit codes: 0 success; 1 validation error (no partial output files);
//! 2 runtime failure mid-sweep (partial output retained, failure rows
//! marked). Errors print one machine-parseable line on standard error:
//! `code=<n>, msg=<text>`.

mod config;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use multical_core::bounds::{self, BoundResult, FairnessParams};
use multical_core::calibration::Category;
use multical_core::data::{ingest_csv, GroupSpec, IngestOptions, LabeledDataset};
use multical_core::oracle::DiscreteDistribution;
use multical_core::rademacher::{
    build_rbf_kernel_matrix, kernel_rademacher_closed_form_bound, kernel_rademacher_exact_sup,
    DEFAULT_DRAWS, EXACT_MODE_MAX_N,
};
use multical_core::seed::mix64;
use multical_core::split::{enumerate_splits, SplitPlan};
use multical_core::sweep::{
    dispersion_summary, read_records_csv, run_sweep, DatasetSource, ModelSpec, SweepConfig,
};
use multical_core::train::{
    train_linear_svm, train_rbf_svm, train_relu_net, LinearSvmConfig, PredictorModel,
    RbfSvmConfig, ReluNetConfig,
};

use config::{parse_bins, parse_comma_list, Ctx};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or inputs; nothing was written.
    Validation(String),
    /// Failure after work started; partial artifacts may exist.
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(name = "multical", version, about = "Multicalibration measurement and bounds")]
struct Cli {
    /// Flat key=value config file; flags override config keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a CSV into the canonical dataset form.
    Ingest(IngestCmd),
    /// Enumerate demographic-controlled splits (counts only with --dry-run).
    Split(SplitCmd),
    /// Train one classifier on the full ingested dataset.
    Train(TrainCmd),
    /// Run the full splits x classifiers x repetitions sweep.
    Sweep(SweepCmd),
    /// Evaluate a sample-complexity bound.
    Bounds(BoundsCmd),
    /// Empirical and closed-form kernel Rademacher complexity.
    Rademacher(RademacherCmd),
    /// True calibration errors of a saved model on an atom table.
    Oracle(OracleCmd),
    /// Dispersion summary over a sweep's record file.
    Report(ReportCmd),
}

/// Dataset ingestion flags shared by several subcommands. Config keys
/// carry the same names with underscores.
#[derive(Args, Clone)]
struct IngestArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    positive_label: Option<String>,
    /// When set, rows with any other label value are rejected.
    #[arg(long)]
    negative_label: Option<String>,
    #[arg(long)]
    protected_column: Option<String>,
    /// Comma list of protected-column values, one group per value.
    #[arg(long)]
    group_values: Option<String>,
    /// Comma list of feature columns.
    #[arg(long)]
    feature_columns: Option<String>,
    /// Send examples in neither group of the pair to train instead of test.
    #[arg(long)]
    augment_with_others: Option<bool>,
}

struct ResolvedIngest {
    input: PathBuf,
    opts: IngestOptions,
    group_spec: GroupSpec,
    feature_columns: Vec<String>,
}

impl IngestArgs {
    fn resolve(&self, ctx: &Ctx) -> Result<ResolvedIngest, CliError> {
        let input = ctx.require_path(self.input.clone(), "input")?;
        let label_column = ctx.require(self.label_column.clone(), "label_column")?;
        let positive_label = ctx.require(self.positive_label.clone(), "positive_label")?;
        let negative_label = ctx.opt(self.negative_label.clone(), "negative_label")?;
        let protected_column = ctx.require(self.protected_column.clone(), "protected_column")?;
        let group_values: Vec<String> =
            parse_comma_list(&ctx.require::<String>(self.group_values.clone(), "group_values")?,
                "group_values")?;
        let feature_columns: Vec<String> = parse_comma_list(
            &ctx.require::<String>(self.feature_columns.clone(), "feature_columns")?,
            "feature_columns",
        )?;
        let augment_with_others =
            ctx.opt_or(self.augment_with_others, "augment_with_others", false)?;
        Ok(ResolvedIngest {
            input,
            opts: IngestOptions {
                label_column,
                positive_label,
                negative_label,
            },
            group_spec: GroupSpec {
                protected_column,
                group_values,
                augment_with_others,
            },
            feature_columns,
        })
    }

    fn load(&self, ctx: &Ctx) -> Result<(ResolvedIngest, LabeledDataset), CliError> {
        let resolved = self.resolve(ctx)?;
        let (ds, _) = ingest_csv(
            &resolved.input,
            &resolved.opts,
            &resolved.group_spec,
            &resolved.feature_columns,
        )
        .map_err(|e| CliError::Validation(e.to_string()))?;
        Ok((resolved, ds))
    }
}

#[derive(Args)]
struct IngestCmd {
    #[command(flatten)]
    ingest: IngestArgs,
    /// Write the canonical single-group CSV form here.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SplitCmd {
    #[command(flatten)]
    ingest: IngestArgs,
    #[arg(long)]
    g1: Option<String>,
    #[arg(long)]
    g2: Option<String>,
    /// Comma list of g1 train counts.
    #[arg(long)]
    v1: Option<String>,
    /// Comma list of g2 train counts.
    #[arg(long)]
    v2: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_size_min: Option<usize>,
    #[arg(long)]
    train_size_max: Option<usize>,
    /// Print the (z1,z2) grid with train sizes instead of materializing splits.
    #[arg(long)]
    dry_run: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TrainCmd {
    #[command(flatten)]
    ingest: IngestArgs,
    /// One of linear-svm, rbf-svm, relu-net.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    reg_lambda: Option<f64>,
    /// RBF kernel width.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden_units: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Model JSON output path.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepCmd {
    #[command(flatten)]
    ingest: IngestArgs,
    /// Oracle atom table (alternative to --input).
    #[arg(long)]
    atoms: Option<PathBuf>,
    /// Sample size when drawing from an atom table.
    #[arg(long)]
    oracle_n: Option<usize>,
    #[arg(long)]
    dataset_id: Option<String>,
    #[arg(long)]
    g1: Option<String>,
    #[arg(long)]
    g2: Option<String>,
    #[arg(long)]
    v1: Option<String>,
    #[arg(long)]
    v2: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    /// Master seed; every subsystem seed is mixed from it.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_size_min: Option<usize>,
    #[arg(long)]
    train_size_max: Option<usize>,
    /// Comma list from {linear-svm, rbf-svm, relu-net}.
    #[arg(long)]
    models: Option<String>,
    #[arg(long)]
    reg_lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden_units: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Records CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker pool size; MULTICAL_WORKERS overrides.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BoundsCmd {
    /// One of main, vc, kernel, relu, hard-margin, gap, occupancy.
    #[arg(long)]
    formula: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    psi: Option<f64>,
    #[arg(long)]
    num_groups: Option<u64>,
    #[arg(long)]
    num_labels: Option<u64>,
    /// Kernel bound B².
    #[arg(long)]
    b_sq: Option<f64>,
    /// Margin parameter λ.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    d_vc: Option<u64>,
    #[arg(long)]
    leading_const: Option<f64>,
    #[arg(long)]
    d_max: Option<u64>,
    #[arg(long)]
    frobenius_x: Option<f64>,
    /// Comma list of per-layer spectral norms.
    #[arg(long)]
    spectral: Option<String>,
    /// Comma list of per-layer transpose-(2,1) norms.
    #[arg(long)]
    two_one: Option<String>,
    #[arg(long)]
    diameter_d: Option<f64>,
    #[arg(long)]
    margin_rho: Option<f64>,
    /// Rademacher complexity for --formula gap.
    #[arg(long)]
    rademacher: Option<f64>,
    #[arg(long)]
    loss_bound_c: Option<f64>,
    #[arg(long)]
    n: Option<u64>,
    /// Use the data-dependent (empirical Rademacher) gap form.
    #[arg(long)]
    empirical: bool,
    /// Generic ERM complexity for --formula main: m(ε,δ) = (c1 + c2·ln(1/δ))/ε².
    #[arg(long)]
    erm_c1: Option<f64>,
    #[arg(long)]
    erm_c2: Option<f64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RademacherCmd {
    /// CSV of numeric feature columns (non-numeric columns are skipped).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    draws: Option<usize>,
    /// Force exact enumeration (error if N > 20).
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct OracleCmd {
    #[arg(long)]
    atoms: Option<PathBuf>,
    /// Saved model JSON.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReportCmd {
    /// Sweep records CSV.
    #[arg(long, value_name = "PATH")]
    r#in: Option<PathBuf>,
    /// Comma list of lo:hi frequency bins.
    #[arg(long)]
    bins: Option<String>,
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("code=1, msg={}", first_line(&e.to_string()));
            return ExitCode::from(1);
        }
    };
    let ctx = match Ctx::load(cli.config.as_deref()) {
        Ok(ctx) => ctx,
        Err(e) => {
            eprintln!("code={}, msg={}", e.code(), first_line(e.message()));
            return ExitCode::from(e.code());
        }
    };
    let result = match &cli.command {
        Command::Ingest(cmd) => cmd_ingest(cmd, &ctx),
        Command::Split(cmd) => cmd_split(cmd, &ctx),
        Command::Train(cmd) => cmd_train(cmd, &ctx),
        Command::Sweep(cmd) => cmd_sweep(cmd, &ctx),
        Command::Bounds(cmd) => cmd_bounds(cmd, &ctx),
        Command::Rademacher(cmd) => cmd_rademacher(cmd, &ctx),
        Command::Oracle(cmd) => cmd_oracle(cmd, &ctx),
        Command::Report(cmd) => cmd_report(cmd, &ctx),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("code={}, msg={}", e.code(), first_line(e.message()));
            ExitCode::from(e.code())
        }
    }
}

fn first_line(s: &str) -> String {
    s.lines().next().unwrap_or("").to_string()
}

fn validation<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Validation(e.to_string())
}

fn cmd_ingest(cmd: &IngestCmd, ctx: &Ctx) -> Result<(), CliError> {
    let (_, ds) = cmd.ingest.load(ctx)?;
    if let Some(out) = ctx.opt_path(cmd.output.clone(), "output") {
        ds.write_csv(&out).map_err(validation)?;
    }
    let counts = ds.group_counts();
    if cmd.json {
        let obj = serde_json::json!({
            "rows": ds.len(),
            "feature_dim": ds.dim(),
            "feature_names": ds.feature_names,
            "group_counts": counts.iter().cloned().collect::<BTreeMap<String, usize>>(),
        });
        println!("{}", serde_json::to_string_pretty(&obj).map_err(validation)?);
    } else {
        println!("rows: {}", ds.len());
        println!("feature dim: {}", ds.dim());
        for (g, c) in counts {
            println!("group {g}: {c}");
        }
    }
    Ok(())
}

fn cmd_split(cmd: &SplitCmd, ctx: &Ctx) -> Result<(), CliError> {
    let (resolved, ds) = cmd.ingest.load(ctx)?;
    let g1: String = ctx.require(cmd.g1.clone(), "g1")?;
    let g2: String = ctx.require(cmd.g2.clone(), "g2")?;
    let v1: Vec<usize> = parse_comma_list(&ctx.require::<String>(cmd.v1.clone(), "v1")?, "v1")?;
    let v2: Vec<usize> = parse_comma_list(&ctx.require::<String>(cmd.v2.clone(), "v2")?, "v2")?;
    let reps = ctx.opt_or(cmd.reps, "reps", 25)?;
    let seed = ctx.opt_or(cmd.seed, "seed", 0)?;
    let min = ctx.opt(cmd.train_size_min, "train_size_min")?;
    let max = ctx.opt(cmd.train_size_max, "train_size_max")?;
    let window = match (min, max) {
        (Some(lo), Some(hi)) => Some((lo, hi)),
        (None, None) => None,
        _ => {
            return Err(CliError::Validation(
                "train_size_min and train_size_max must be given together".into(),
            ))
        }
    };
    let plan = SplitPlan {
        v1: v1.clone(),
        v2: v2.clone(),
        reps,
        seed,
        augment_with_others: resolved.group_spec.augment_with_others,
        train_size_window: window,
    };

    // other-count is deterministic, so train size is known per (z1, z2)
    // without drawing
    let gi1 = ds
        .group_index(&g1)
        .ok_or_else(|| CliError::Validation(format!("unknown group {g1:?}")))?;
    let gi2 = ds
        .group_index(&g2)
        .ok_or_else(|| CliError::Validation(format!("unknown group {g2:?}")))?;
    let mut pool1 = 0usize;
    let mut pool2 = 0usize;
    let mut others = 0usize;
    for ex in &ds.examples {
        match (ex.in_group(gi1), ex.in_group(gi2)) {
            (true, false) => pool1 += 1,
            (false, true) => pool2 += 1,
            _ => others += 1,
        }
    }
    let extra = if plan.augment_with_others { others } else { 0 };

    let mut grid = Vec::new();
    for &z1 in &v1 {
        for &z2 in &v2 {
            let train_size = z1 + z2 + extra;
            let kept = window.map_or(true, |(lo, hi)| train_size >= lo && train_size <= hi);
            grid.push((z1, z2, train_size, kept));
        }
    }
    let total = grid.len() * reps;
    let kept_total = grid.iter().filter(|g| g.3).count() * reps;

    if !cmd.dry_run {
        // materialize to validate pool sizes and seeds; counts reported below
        let n = enumerate_splits(&ds, &g1, &g2, &plan)
            .map_err(validation)?
            .count();
        debug_assert_eq!(n, total);
    } else if v1.iter().any(|&z| z > pool1) || v2.iter().any(|&z| z > pool2) {
        return Err(CliError::Validation(format!(
            "grid exceeds pool sizes (g1 pool {pool1}, g2 pool {pool2})"
        )));
    }

    if cmd.json {
        let obj = serde_json::json!({
            "grid": grid
                .iter()
                .map(|(z1, z2, size, kept)| serde_json::json!({
                    "z1": z1, "z2": z2, "train_size": size, "in_window": kept,
                }))
                .collect::<Vec<_>>(),
            "reps": reps,
            "total_splits": total,
            "filtered_splits": kept_total,
        });
        println!("{}", serde_json::to_string_pretty(&obj).map_err(validation)?);
    } else {
        println!("z1\tz2\ttrain_size\tin_window");
        for (z1, z2, size, kept) in &grid {
            println!("{z1}\t{z2}\t{size}\t{kept}");
        }
        println!("splits: {total} total, {kept_total} in window");
    }
    Ok(())
}

fn parse_model_kind(raw: &str) -> Result<&'static str, CliError> {
    match raw {
        "linear-svm" => Ok("linear-svm"),
        "rbf-svm" => Ok("rbf-svm"),
        "relu-net" => Ok("relu-net"),
        other => Err(CliError::Validation(format!(
            "unknown model {other:?}; expected linear-svm, rbf-svm, or relu-net"
        ))),
    }
}

fn cmd_train(cmd: &TrainCmd, ctx: &Ctx) -> Result<(), CliError> {
    let (_, ds) = cmd.ingest.load(ctx)?;
    let kind = parse_model_kind(&ctx.require::<String>(cmd.model.clone(), "model")?)?;
    let seed = ctx.opt_or(cmd.seed, "seed", 0)?;
    let epochs = ctx.opt_or(cmd.epochs, "epochs", 30)?;
    let model: PredictorModel = match kind {
        "linear-svm" => {
            let cfg = LinearSvmConfig {
                reg_lambda: ctx.opt_or(cmd.reg_lambda, "reg_lambda", 1e-4)?,
                epochs,
                seed,
            };
            train_linear_svm(&ds, &cfg).map_err(|e| CliError::Runtime(e.to_string()))?
        }
        "rbf-svm" => {
            let cfg = RbfSvmConfig {
                gamma: ctx.opt_or(cmd.gamma, "gamma", 1.0)?,
                reg_lambda: ctx.opt_or(cmd.reg_lambda, "reg_lambda", 1e-4)?,
                epochs,
                seed,
            };
            train_rbf_svm(&ds, &cfg).map_err(|e| CliError::Runtime(e.to_string()))?
        }
        _ => {
            let cfg = ReluNetConfig {
                hidden_units: ctx.opt_or(cmd.hidden_units, "hidden_units", 1000)?,
                learning_rate: ctx.opt_or(cmd.learning_rate, "learning_rate", 0.01)?,
                epochs,
                seed,
            };
            train_relu_net(&ds, &cfg).map_err(|e| CliError::Runtime(e.to_string()))?
        }
    };
    if let Some(out) = ctx.opt_path(cmd.output.clone(), "output") {
        model.save(&out).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let accuracy = model.accuracy(&ds);
    if cmd.json {
        let obj = serde_json::json!({
            "model_kind": model.kind_name(),
            "train_accuracy": accuracy,
        });
        println!("{}", serde_json::to_string_pretty(&obj).map_err(validation)?);
    } else {
        println!("{} train accuracy: {accuracy}", model.kind_name());
    }
    Ok(())
}

fn cmd_sweep(cmd: &SweepCmd, ctx: &Ctx) -> Result<(), CliError> {
    let seed = ctx.opt_or(cmd.seed, "seed", 0)?;
    // one master seed; per-subsystem seeds via the repo's mixer
    let plan_seed = mix64(&[seed, 0]);
    let linear_seed = mix64(&[seed, 1]);
    let rbf_seed = mix64(&[seed, 2]);
    let relu_seed = mix64(&[seed, 3]);
    let oracle_seed = mix64(&[seed, 4]);

    let atoms = ctx.opt_path(cmd.atoms.clone(), "atoms");
    let source = if let Some(atoms) = atoms {
        DatasetSource::OracleAtoms {
            path: atoms,
            n: ctx.require(cmd.oracle_n, "oracle_n")?,
            sample_seed: oracle_seed,
        }
    } else {
        let resolved = cmd.ingest.resolve(ctx)?;
        DatasetSource::Csv {
            path: resolved.input,
            ingest: resolved.opts,
            group_spec: resolved.group_spec,
            feature_columns: resolved.feature_columns,
        }
    };

    let v1: Vec<usize> = parse_comma_list(&ctx.require::<String>(cmd.v1.clone(), "v1")?, "v1")?;
    let v2: Vec<usize> = parse_comma_list(&ctx.require::<String>(cmd.v2.clone(), "v2")?, "v2")?;
    let min = ctx.opt(cmd.train_size_min, "train_size_min")?;
    let max = ctx.opt(cmd.train_size_max, "train_size_max")?;
    let window = match (min, max) {
        (Some(lo), Some(hi)) => Some((lo, hi)),
        (None, None) => None,
        _ => {
            return Err(CliError::Validation(
                "train_size_min and train_size_max must be given together".into(),
            ))
        }
    };
    let augment = ctx.opt_or(cmd.ingest.augment_with_others, "augment_with_others", false)?;
    let plan = SplitPlan {
        v1,
        v2,
        reps: ctx.opt_or(cmd.reps, "reps", 25)?,
        seed: plan_seed,
        augment_with_others: augment,
        train_size_window: window,
    };

    let epochs = ctx.opt_or(cmd.epochs, "epochs", 30)?;
    let model_names: Vec<String> =
        parse_comma_list(&ctx.require::<String>(cmd.models.clone(), "models")?, "models")?;
    let mut models = Vec::new();
    for name in &model_names {
        models.push(match parse_model_kind(name)? {
            "linear-svm" => ModelSpec::LinearSvm(LinearSvmConfig {
                reg_lambda: ctx.opt_or(cmd.reg_lambda, "reg_lambda", 1e-4)?,
                epochs,
                seed: linear_seed,
            }),
            "rbf-svm" => ModelSpec::RbfSvm(RbfSvmConfig {
                gamma: ctx.opt_or(cmd.gamma, "gamma", 1.0)?,
                reg_lambda: ctx.opt_or(cmd.reg_lambda, "reg_lambda", 1e-4)?,
                epochs,
                seed: rbf_seed,
            }),
            _ => ModelSpec::ReluNet(ReluNetConfig {
                hidden_units: ctx.opt_or(cmd.hidden_units, "hidden_units", 1000)?,
                learning_rate: ctx.opt_or(cmd.learning_rate, "learning_rate", 0.01)?,
                epochs,
                seed: relu_seed,
            }),
        });
    }

    let workers = match std::env::var("MULTICAL_WORKERS") {
        Ok(raw) => raw
            .parse::<usize>()
            .map_err(|_| CliError::Validation(format!("bad MULTICAL_WORKERS value {raw:?}")))?,
        Err(_) => ctx.opt_or(cmd.workers, "workers", 1)?,
    };

    let cfg = SweepConfig {
        dataset_id: ctx.opt_or(cmd.dataset_id.clone(), "dataset_id", "dataset".into())?,
        source,
        group_pair: (
            ctx.require(cmd.g1.clone(), "g1")?,
            ctx.require(cmd.g2.clone(), "g2")?,
        ),
        plan,
        models,
        output_path: ctx.require_path(cmd.out.clone(), "out")?,
        worker_count: workers,
    };

    let records = run_sweep(&cfg).map_err(validation)?;
    let failures = records.iter().filter(|r| r.error_code.is_some()).count();
    if cmd.json {
        let obj = serde_json::json!({
            "records": records.len(),
            "failures": failures,
            "output": cfg.output_path,
        });
        println!("{}", serde_json::to_string_pretty(&obj).map_err(validation)?);
    } else {
        println!(
            "wrote {} records ({failures} failure rows) to {}",
            records.len(),
            cfg.output_path.display()
        );
    }
    if failures > 0 {
        return Err(CliError::Runtime(format!(
            "{failures} failure rows recorded; partial results kept at {}",
            cfg.output_path.display()
        )));
    }
    Ok(())
}

fn cmd_bounds(cmd: &BoundsCmd, ctx: &Ctx) -> Result<(), CliError> {
    let formula: String = ctx.require(cmd.formula.clone(), "formula")?;
    let fairness = |cmd: &BoundsCmd| -> Result<FairnessParams, CliError> {
        Ok(FairnessParams {
            epsilon: ctx.require(cmd.epsilon, "epsilon")?,
            delta: ctx.require(cmd.delta, "delta")?,
            gamma: ctx.require(cmd.gamma, "gamma")?,
            psi: ctx.require(cmd.psi, "psi")?,
            num_groups: ctx.opt_or(cmd.num_groups, "num_groups", 2)?,
            num_labels: ctx.opt_or(cmd.num_labels, "num_labels", 2)?,
        })
    };
    let norms = |cmd: &BoundsCmd| -> Result<(Vec<f64>, Vec<f64>), CliError> {
        let s: Vec<f64> =
            parse_comma_list(&ctx.require::<String>(cmd.spectral.clone(), "spectral")?, "spectral")?;
        let b: Vec<f64> =
            parse_comma_list(&ctx.require::<String>(cmd.two_one.clone(), "two_one")?, "two_one")?;
        Ok((s, b))
    };

    let leading_const = ctx.opt_or(cmd.leading_const, "leading_const", 1.0)?;
    let result: BoundResult = match formula.as_str() {
        "main" => {
            let p = fairness(cmd)?;
            let c1 = ctx.opt_or(cmd.erm_c1, "erm_c1", 0.0)?;
            let c2 = ctx.opt_or(cmd.erm_c2, "erm_c2", 1.0)?;
            let mut r = bounds::multicalibration_from_erm(
                |e, d| (c1 + c2 * (1.0 / d).ln()) / (e * e),
                &p,
            )
            .map_err(validation)?;
            r.inputs.insert("erm_c1".into(), c1);
            r.inputs.insert("erm_c2".into(), c2);
            r
        }
        "vc" => {
            let p = fairness(cmd)?;
            let d_vc = ctx.require(cmd.d_vc, "d_vc")?;
            bounds::vc_multicalibration_bound(d_vc, &p, leading_const).map_err(validation)?
        }
        "kernel" => {
            let b_sq = ctx.require(cmd.b_sq, "b_sq")?;
            let lambda = ctx.require(cmd.lambda, "lambda")?;
            // fairness knobs present -> multicalibration form; otherwise
            // the plain ERM sample complexity
            if ctx.opt(cmd.gamma, "gamma")?.is_some() {
                bounds::kernel_multicalibration_bound(b_sq, lambda, &fairness(cmd)?)
                    .map_err(validation)?
            } else {
                let epsilon = ctx.require(cmd.epsilon, "epsilon")?;
                let delta = ctx.require(cmd.delta, "delta")?;
                let samples = bounds::kernel_erm_sample_complexity(b_sq, lambda, epsilon, delta)
                    .map_err(validation)?;
                let mut inputs = BTreeMap::new();
                inputs.insert("b_sq".into(), b_sq);
                inputs.insert("lambda_margin".into(), lambda);
                inputs.insert("epsilon".into(), epsilon);
                inputs.insert("delta".into(), delta);
                BoundResult {
                    samples,
                    formula_id: "kernel-erm".into(),
                    inputs,
                }
            }
        }
        "relu" => {
            let (s, b) = norms(cmd)?;
            let d_max = ctx.require(cmd.d_max, "d_max")?;
            let frob = ctx.require(cmd.frobenius_x, "frobenius_x")?;
            if ctx.opt(cmd.gamma, "gamma")?.is_some() {
                bounds::relu_multicalibration_bound(&s, &b, d_max, frob, &fairness(cmd)?)
                    .map_err(validation)?
            } else {
                let epsilon = ctx.require(cmd.epsilon, "epsilon")?;
                let delta = ctx.require(cmd.delta, "delta")?;
                let samples =
                    bounds::relu_erm_sample_complexity(d_max, frob, &s, &b, epsilon, delta)
                        .map_err(validation)?;
                let mut inputs = BTreeMap::new();
                inputs.insert("d_max".into(), d_max as f64);
                inputs.insert("frobenius_X".into(), frob);
                inputs.insert("epsilon".into(), epsilon);
                inputs.insert("delta".into(), delta);
                BoundResult {
                    samples,
                    formula_id: "relu-erm".into(),
                    inputs,
                }
            }
        }
        "hard-margin" => {
            let p = fairness(cmd)?;
            let d = ctx.require(cmd.diameter_d, "diameter_d")?;
            let rho = ctx.require(cmd.margin_rho, "margin_rho")?;
            bounds::hard_margin_multicalibration_bound(d, rho, &p, leading_const)
                .map_err(validation)?
        }
        "gap" => {
            let r = ctx.require(cmd.rademacher, "rademacher")?;
            let c = ctx.opt_or(cmd.loss_bound_c, "loss_bound_c", 1.0)?;
            let n = ctx.require(cmd.n, "n")?;
            let delta = ctx.require(cmd.delta, "delta")?;
            let gap = bounds::two_sided_generalization_gap(r, c, n, delta, cmd.empirical)
                .map_err(validation)?;
            if cmd.json {
                let obj = serde_json::json!({
                    "formula_id": "gap",
                    "inputs": {
                        "rademacher": r,
                        "loss_bound_c": c,
                        "n": n,
                        "delta": delta,
                        "empirical": cmd.empirical,
                    },
                    "value": gap,
                });
                println!("{}", serde_json::to_string_pretty(&obj).map_err(validation)?);
            } else {
                println!("{gap}");
            }
            return Ok(());
        }
        "occupancy" => {
            let num_groups = ctx.require(cmd.num_groups, "num_groups")?;
            let gamma = ctx.require(cmd.gamma, "gamma")?;
            let delta = ctx.require(cmd.delta, "delta")?;
            let samples = bounds::group_occupancy_threshold(num_groups, gamma, delta)
                .map_err(validation)?;
            let mut inputs = BTreeMap::new();
            inputs.insert("num_groups".into(), num_groups as f64);
            inputs.insert("gamma".into(), gamma);
            inputs.insert("delta".into(), delta);
            BoundResult {
                samples,
                formula_id: "occupancy".into(),
                inputs,
            }
        }
        other => {
            return Err(CliError::Validation(format!(
                "unknown formula {other:?}; expected main, vc, kernel, relu, hard-margin, gap, or occupancy"
            )))
        }
    };

    if cmd.json {
        println!("{}", serde_json::to_string_pretty(&result).map_err(validation)?);
    } else {
        println!("{}", result.samples);
    }
    Ok(())
}

/// Read every all-numeric column of a CSV as a feature; other columns
/// (labels, group names, ids) are skipped.
fn read_numeric_csv(path: &std::path::Path) -> Result<LabeledDataset, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(validation)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(validation)?
        .iter()
        .map(String::from)
        .collect();
    let rows: Vec<csv::StringRecord> = reader
        .records()
        .collect::<Result<_, _>>()
        .map_err(validation)?;
    if rows.is_empty() {
        return Err(CliError::Validation("empty dataset".into()));
    }
    let numeric: Vec<usize> = (0..headers.len())
        .filter(|&c| {
            rows.iter()
                .all(|r| r.get(c).map_or(false, |v| v.trim().parse::<f64>().is_ok()))
        })
        .collect();
    if numeric.is_empty() {
        return Err(CliError::Validation("no numeric feature columns found".into()));
    }
    let examples = rows
        .iter()
        .map(|r| multical_core::data::Example {
            features: numeric
                .iter()
                .map(|&c| r.get(c).unwrap().trim().parse::<f64>().unwrap())
                .collect(),
            label: 0,
            group_ids: vec![],
        })
        .collect();
    Ok(LabeledDataset {
        examples,
        feature_names: numeric.iter().map(|&c| headers[c].clone()).collect(),
        groups: vec![],
    })
}

fn cmd_rademacher(cmd: &RademacherCmd, ctx: &Ctx) -> Result<(), CliError> {
    let input = ctx.require_path(cmd.input.clone(), "input")?;
    let gamma = ctx.opt_or(cmd.gamma, "gamma", 1.0)?;
    let draws = ctx.opt_or(cmd.draws, "draws", DEFAULT_DRAWS)?;
    let seed = ctx.opt_or(cmd.seed, "seed", 0)?;
    let ds = read_numeric_csv(&input)?;
    if cmd.exact && ds.len() > EXACT_MODE_MAX_N {
        return Err(CliError::Validation(format!(
            "exact mode caps at N = {EXACT_MODE_MAX_N}, dataset has {}",
            ds.len()
        )));
    }
    let k = build_rbf_kernel_matrix(&ds, gamma);
    let est = kernel_rademacher_exact_sup(&k, draws, seed).map_err(validation)?;
    let closed_form =
        kernel_rademacher_closed_form_bound(k.b_sq(), ds.len() as u64).map_err(validation)?;
    if cmd.json {
        let obj = serde_json::json!({
            "n": ds.len(),
            "mean": est.mean,
            "std_error": est.std_error,
            "draws": est.draws,
            "exact": est.exact,
            "closed_form_bound": closed_form,
        });
        println!("{}", serde_json::to_string_pretty(&obj).map_err(validation)?);
    } else {
        println!(
            "empirical: {} (std err {}, {} {})",
            est.mean,
            est.std_error,
            est.draws,
            if est.exact { "sign vectors, exact" } else { "draws" }
        );
        println!("closed-form bound: {closed_form}");
    }
    Ok(())
}

fn cmd_oracle(cmd: &OracleCmd, ctx: &Ctx) -> Result<(), CliError> {
    let atoms = ctx.require_path(cmd.atoms.clone(), "atoms")?;
    let model_path = ctx.require_path(cmd.model.clone(), "model")?;
    let dist = DiscreteDistribution::load(&atoms).map_err(validation)?;
    let model = PredictorModel::load(&model_path).map_err(validation)?;

    let mut entries = Vec::new();
    for (gi, group) in dist.groups.iter().enumerate() {
        for label in 0..2u8 {
            let cat = Category { group: gi, predicted_label: label };
            entries.push((group.clone(), label, dist.true_calibration_error(&model, cat)));
        }
    }
    if cmd.json {
        let obj = serde_json::json!({
            "model_kind": model.kind_name(),
            "errors": entries
                .iter()
                .map(|(g, l, e)| serde_json::json!({
                    "group": g,
                    "predicted_label": l,
                    "true_calibration_error": e,
                }))
                .collect::<Vec<_>>(),
        });
        println!("{}", serde_json::to_string_pretty(&obj).map_err(validation)?);
    } else {
        println!("group\tpredicted_label\ttrue_calibration_error");
        for (g, l, e) in &entries {
            match e {
                Some(v) => println!("{g}\t{l}\t{v}"),
                None => println!("{g}\t{l}\tundefined"),
            }
        }
    }
    Ok(())
}

fn cmd_report(cmd: &ReportCmd, ctx: &Ctx) -> Result<(), CliError> {
    let input = ctx.require_path(cmd.r#in.clone(), "in")?;
    let bins = parse_bins(&ctx.require::<String>(cmd.bins.clone(), "bins")?)?;
    for w in bins.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(CliError::Validation(format!(
                "bins overlap: {}:{} and {}:{}",
                w[0].0, w[0].1, w[1].0, w[1].1
            )));
        }
    }
    let records = read_records_csv(&input).map_err(validation)?;
    let summary = dispersion_summary(&records, &bins);
    if cmd.json {
        println!("{}", serde_json::to_string_pretty(&summary).map_err(validation)?);
    } else {
        println!("bin_lo\tbin_hi\tcount\tmean_abs_error\tp90_abs_error");
        for b in &summary {
            let fmt = |v: Option<f64>| v.map_or("null".to_string(), |x| x.to_string());
            println!(
                "{}\t{}\t{}\t{}\t{}",
                b.lo,
                b.hi,
                b.count,
                fmt(b.mean_abs_error),
                fmt(b.p90_abs_error)
            );
        }
    }
    Ok(())
}

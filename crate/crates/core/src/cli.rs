//! Command-line interface.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::baselines::{influence_outlier_removal, precision_recall, sor_from_scores, sor_scores};
use crate::corruptions::{corrupt_dataset, Family, SeveritySchedule, SEVERITIES};
use crate::error::{Error, Result};
use crate::evaluation::{
    focus_histogram, measure_latency, run_experiment, to_fixed_json, write_experiment,
    CeAggregation, Defense, DefenseConfig, ExperimentConfig,
};
use crate::focus::focus_stats;
use crate::geometry::{
    generate_dataset, load_dataset, load_rfpc, load_xyz, save_dataset, Dataset, PointCloud, Split,
    MANIFEST_FILE,
};
use crate::network::{
    load_checkpoint, save_checkpoint, train, EncoderParams, Optimizer, PointNetwork, TrainConfig,
};
use crate::refocus::{trace_focus, InfluenceKind, RefocusConfig, RefocusSampler};

#[derive(Debug, Parser)]
#[command(
    name = "pcfocus",
    version,
    about = "Focus-based refocusing for point cloud classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic shape dataset (train and test splits).
    GenData(GenDataArgs),
    /// Train the point encoder and write a checkpoint.
    Train(TrainArgs),
    /// Write corrupted copies of a dataset with outlier flags.
    Corrupt(CorruptArgs),
    /// Evaluate a checkpoint on clean and corrupted data.
    Eval(EvalArgs),
    /// Per-sample focus, focus bands and a focus histogram.
    FocusStats(FocusStatsArgs),
    /// Dump the per-point influence of one cloud.
    Influence(InfluenceArgs),
    /// Compare influence-based outlier removal with SOR.
    Outliers(OutliersArgs),
    /// Collect several evaluation reports into one table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Output directory; receives `train/` and `test/`.
    #[arg(long)]
    out: PathBuf,
    /// Training clouds per class.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    per_class: u64,
    /// Test clouds per class [default: per-class / 4, at least 1].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    test_per_class: Option<u64>,
    /// Points per cloud.
    #[arg(long, default_value_t = 1024, value_parser = clap::value_parser!(u64).range(64..))]
    points: u64,
    /// Seed for every random draw.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory (its `train/` split is used when present).
    #[arg(long)]
    data: PathBuf,
    /// Output directory for `model.rfnn` and `train_report.json`.
    #[arg(long)]
    out: PathBuf,
    /// Training epochs.
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    /// Peak learning rate.
    #[arg(long = "lr", default_value_t = 5e-4)]
    learning_rate: f64,
    /// Samples per optimization step.
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Disable cosine annealing of the learning rate.
    #[arg(long)]
    no_cosine: bool,
    /// Optimizer: adam or sgd.
    #[arg(long, default_value = "adam")]
    optimizer: Optimizer,
    /// Crop each training cloud to its least influential points.
    #[arg(long)]
    refocus: bool,
    /// Hold out every n-th sample of each class for model selection; 0 disables.
    #[arg(long, default_value_t = 10)]
    val_stride: usize,
    /// Random per-axis scaling augmentation.
    #[arg(long)]
    augment_scale: bool,
    /// Random translation augmentation.
    #[arg(long)]
    augment_translate: bool,
    /// Seed for every random draw.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    /// JSON file overriding the severity schedule.
    #[arg(long)]
    schedule: Option<PathBuf>,
}

impl ScheduleArgs {
    fn load(&self) -> std::result::Result<SeveritySchedule, CliError> {
        match &self.schedule {
            None => Ok(SeveritySchedule::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
            }
        }
    }
}

#[derive(Debug, Args)]
struct CorruptArgs {
    /// Dataset directory (its `test/` split is used when present).
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Corruption family, or every family when omitted.
    #[arg(long)]
    family: Option<Family>,
    /// Severity 1-5, or every severity when omitted.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
    severity: Option<u8>,
    /// Seed for every random draw.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    schedule: ScheduleArgs,
}

#[derive(Debug, Args)]
struct RefocusArgs {
    /// Keep this many points instead of the adaptive count.
    #[arg(long)]
    fixed_k: Option<usize>,
    /// Lower bound on the adaptive count.
    #[arg(long, default_value_t = 16)]
    k_min: usize,
    /// Influence used for focus and filtering: argmax or l1.
    #[arg(long, default_value = "argmax")]
    influence: InfluenceKind,
}

impl RefocusArgs {
    fn config(&self) -> RefocusConfig {
        RefocusConfig {
            k_min: self.k_min,
            fixed_k: self.fixed_k,
            influence: self.influence,
            ..RefocusConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Model checkpoint (.rfnn).
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory (its `test/` split is used when present).
    #[arg(long)]
    data: PathBuf,
    /// Inference path: none, refocus, refocus-feature, srs or sor.
    #[arg(long, default_value = "none")]
    defense: Defense,
    /// Vanilla model used as the CE pivot [default: the evaluated checkpoint without defense].
    #[arg(long)]
    pivot_checkpoint: Option<PathBuf>,
    #[command(flatten)]
    refocus: RefocusArgs,
    /// Fraction of points dropped by srs.
    #[arg(long, default_value_t = 0.5)]
    srs_drop: f64,
    /// Neighbours used by sor.
    #[arg(long, default_value_t = 2)]
    sor_k: usize,
    /// Standard-deviation multiplier used by sor.
    #[arg(long, default_value_t = 1.1)]
    sor_sigma: f64,
    /// CE aggregation: sum-ratio or mean-ratio.
    #[arg(long, default_value = "sum-ratio")]
    ce_aggregation: CeAggregation,
    /// Focus histogram bins.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    bins: u64,
    /// Evaluation threads; results do not depend on it.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    workers: u64,
    /// Only measure mean single-cloud latency on the first test cloud.
    #[arg(long)]
    timing: bool,
    /// Iterations averaged by --timing.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    iterations: u64,
    /// Seed for every random draw.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// Output directory [default: print the JSON report to stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FocusStatsArgs {
    /// Model checkpoint (.rfnn).
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory (its `test/` split is used when present).
    #[arg(long)]
    data: PathBuf,
    /// Dataset whose focus distribution sets the bands [default: the `train/` split next to --data, else --data].
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Corrupt the evaluated set with this family first.
    #[arg(long)]
    family: Option<Family>,
    /// Severity for --family.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u8).range(1..=5))]
    severity: u8,
    /// Upper band width in reference standard deviations.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Lower band width in reference standard deviations.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Focus histogram bins.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    bins: u64,
    /// Influence used for focus: argmax or l1.
    #[arg(long, default_value = "argmax")]
    influence: InfluenceKind,
    /// Seed for every random draw.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InfluenceArgs {
    /// Model checkpoint (.rfnn).
    #[arg(long)]
    checkpoint: PathBuf,
    /// Point cloud file (.xyz or .rfpc).
    #[arg(long)]
    cloud: PathBuf,
    /// Influence: argmax or l1.
    #[arg(long, default_value = "argmax")]
    influence: InfluenceKind,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct OutliersArgs {
    /// Model checkpoint (.rfnn).
    #[arg(long)]
    checkpoint: PathBuf,
    /// Clean dataset directory (its `test/` split is used when present).
    #[arg(long)]
    data: PathBuf,
    /// Point-adding family used to plant outliers.
    #[arg(long, default_value = "add_local")]
    family: Family,
    /// Corruption severity 1-5.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(1..=5))]
    severity: u8,
    /// Neighbours used by SOR.
    #[arg(long, default_value_t = 2)]
    sor_k: usize,
    /// Comma-separated SOR standard-deviation multipliers.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.5,0.75,1.0,1.25,1.5,1.75,2.0,2.25,2.5,2.75,3.0"
    )]
    sor_sigmas: Vec<f64>,
    /// Seed for every random draw.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Evaluation output directories (each holding `report.json`).
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(result: Result<T>) -> CliResult<T> {
    result.map_err(|e| CliError::Usage(e.to_string()))
}

/// Parse `args` (program name first) and run. Returns the process exit code:
/// 0 on success, 1 on usage errors, 2 on runtime errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Corrupt(a) => corrupt(a),
        Command::Eval(a) => eval(a),
        Command::FocusStats(a) => focus_stats_cmd(a),
        Command::Influence(a) => influence(a),
        Command::Outliers(a) => outliers(a),
        Command::Report(a) => report(a),
    }
}

/// `dir/<split>` when it holds a dataset, else `dir`.
fn split_dir(dir: &Path, split: Split) -> PathBuf {
    let nested = dir.join(split.to_string());
    if nested.join(MANIFEST_FILE).exists() {
        nested
    } else {
        dir.to_path_buf()
    }
}

fn load_split(dir: &Path, split: Split) -> Result<Dataset> {
    load_dataset(&split_dir(dir, split), split)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_rows(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let io = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn gen_data(a: GenDataArgs) -> CliResult<()> {
    let per_class = a.per_class as usize;
    let test_per_class = a
        .test_per_class
        .map(|t| t as usize)
        .unwrap_or((per_class / 4).max(1));
    let train_set = generate_dataset(per_class, a.points as usize, a.seed, Split::Train)?;
    let test_set = generate_dataset(test_per_class, a.points as usize, a.seed, Split::Test)?;
    save_dataset(&a.out.join("train"), &train_set)?;
    save_dataset(&a.out.join("test"), &test_set)?;
    println!(
        "wrote {} train and {} test clouds to {}",
        train_set.len(),
        test_set.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainReport<'a> {
    config: &'a TrainConfig,
    refocus_sampler: bool,
    val_stride: usize,
    train_samples: usize,
    val_samples: usize,
    best_epoch: usize,
    first_step_loss: f64,
    history: &'a [crate::network::EpochStats],
}

fn train_cmd(a: TrainArgs) -> CliResult<()> {
    let config = TrainConfig {
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        batch_size: a.batch_size,
        cosine: !a.no_cosine,
        optimizer: a.optimizer,
        seed: a.seed,
        augment_scale: a.augment_scale,
        augment_translate: a.augment_translate,
        ..TrainConfig::default()
    };
    usage(config.validate())?;
    let full = load_split(&a.data, Split::Train)?;
    let (train_set, val_set) = full.split_holdout(a.val_stride);
    let val = (!val_set.is_empty()).then_some(&val_set);
    let sampler = RefocusSampler;
    let outcome = train(
        &train_set,
        val,
        &config,
        a.refocus
            .then_some(&sampler as &dyn crate::network::TrainSampler),
    )?;
    create_dir(&a.out)?;
    save_checkpoint(&a.out.join("model.rfnn"), &outcome.params)?;
    let report = TrainReport {
        config: &config,
        refocus_sampler: a.refocus,
        val_stride: a.val_stride,
        train_samples: train_set.len(),
        val_samples: val_set.len(),
        best_epoch: outcome.best_epoch,
        first_step_loss: outcome.first_step_loss,
        history: &outcome.history,
    };
    write_file(&a.out.join("train_report.json"), to_fixed_json(&report)?)?;
    let best = &outcome.history[outcome.best_epoch];
    println!(
        "best epoch {} (train acc {:.4}, val acc {}); checkpoint {}",
        best.epoch,
        best.train_accuracy,
        best.val_accuracy
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "n/a".into()),
        a.out.join("model.rfnn").display()
    );
    Ok(())
}

fn corrupt(a: CorruptArgs) -> CliResult<()> {
    let schedule = a.schedule.load()?;
    let data = load_split(&a.data, Split::Test)?;
    let families: Vec<Family> = a
        .family
        .map(|f| vec![f])
        .unwrap_or_else(|| Family::ALL.to_vec());
    let severities: Vec<u8> = a
        .severity
        .map(|s| vec![s])
        .unwrap_or_else(|| SEVERITIES.to_vec());
    for &family in &families {
        for &severity in &severities {
            let c = corrupt_dataset(&data, family, severity, a.seed, &schedule)?;
            let dir = a.out.join(format!("{family}_s{severity}"));
            save_dataset(&dir, &c.dataset)?;
            let rows = c.dataset.samples.iter().zip(&c.labels).flat_map(|(s, l)| {
                let file = format!("{}.xyz", s.name);
                l.flagged_indices()
                    .into_iter()
                    .map(move |i| vec![file.clone(), i.to_string()])
            });
            write_rows(&dir.join("flags.csv"), &["file", "point_index"], rows)?;
        }
    }
    println!(
        "wrote {} corrupted copies of {} clouds to {}",
        families.len() * severities.len(),
        data.len(),
        a.out.display()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let defense = DefenseConfig {
        defense: a.defense,
        refocus: a.refocus.config(),
        srs_drop: a.srs_drop,
        sor_k: a.sor_k,
        sor_sigma: a.sor_sigma,
        seed: a.seed,
    };
    usage(defense.validate())?;
    let schedule = a.schedule.load()?;
    let net = load_checkpoint(&a.checkpoint)?;
    let pivot = a
        .pivot_checkpoint
        .as_deref()
        .map(load_checkpoint)
        .transpose()?;
    let test = load_split(&a.data, Split::Test)?;
    check_classes(&net, &test)?;

    if a.timing {
        let cloud = &test.samples[0].cloud;
        let seconds = measure_latency(&net, cloud, &defense, a.iterations as usize)?;
        let line = format!(
            "defense={} points={} iterations={} mean_latency_ms={:.6}",
            a.defense,
            cloud.len(),
            a.iterations,
            seconds * 1e3
        );
        if let Some(out) = &a.out {
            create_dir(out)?;
            write_file(&out.join("timing.txt"), format!("{line}\n"))?;
        }
        println!("{line}");
        return Ok(());
    }

    let config = ExperimentConfig {
        defense,
        corruption_seed: a.seed,
        schedule,
        ce_aggregation: a.ce_aggregation,
        bins: a.bins as usize,
        checkpoint: Some(a.checkpoint.display().to_string()),
        pivot_checkpoint: a.pivot_checkpoint.as_ref().map(|p| p.display().to_string()),
        workers: a.workers as usize,
    };
    let experiment = run_experiment(&net, pivot.as_ref(), &test, &config)?;
    match &a.out {
        Some(out) => {
            write_experiment(out, &experiment)?;
            let r = &experiment.report;
            println!(
                "clean OA {:.4}, mCE {}; report in {}",
                r.clean_oa,
                r.mce
                    .map(|m| format!("{m:.4}"))
                    .unwrap_or_else(|| "undefined".into()),
                out.display()
            );
        }
        None => print!("{}", experiment.report.to_json()?),
    }
    Ok(())
}

fn check_classes(net: &EncoderParams, data: &Dataset) -> Result<()> {
    if net.num_classes() != data.num_classes() {
        return Err(Error::InvalidInput(format!(
            "checkpoint predicts {} classes but the dataset has {}",
            net.num_classes(),
            data.num_classes()
        )));
    }
    Ok(())
}

fn dataset_focus<N: PointNetwork + ?Sized>(
    net: &N,
    data: &Dataset,
    kind: InfluenceKind,
) -> Result<Vec<f64>> {
    data.samples
        .iter()
        .map(|s| Ok(trace_focus(&net.forward(&s.cloud)?, kind)?.1))
        .collect()
}

fn focus_stats_cmd(a: FocusStatsArgs) -> CliResult<()> {
    for (name, v) in [("alpha", a.alpha), ("beta", a.beta)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(CliError::Usage(format!(
                "--{name} must be a non-negative number"
            )));
        }
    }
    let schedule = a.schedule.load()?;
    let net = load_checkpoint(&a.checkpoint)?;
    let mut data = load_split(&a.data, Split::Test)?;
    check_classes(&net, &data)?;
    let reference = match &a.reference {
        Some(dir) => load_split(dir, Split::Train)?,
        None => {
            let train_dir = a.data.join(Split::Train.to_string());
            if train_dir.join(MANIFEST_FILE).exists() {
                load_dataset(&train_dir, Split::Train)?
            } else {
                data.clone()
            }
        }
    };
    if let Some(family) = a.family {
        data = corrupt_dataset(&data, family, a.severity, a.seed, &schedule)?.dataset;
    }
    let stats = focus_stats(
        &dataset_focus(&net, &reference, a.influence)?,
        a.alpha,
        a.beta,
    )?;
    let values = dataset_focus(&net, &data, a.influence)?;
    create_dir(&a.out)?;
    write_rows(
        &a.out.join("focus.csv"),
        &["file", "focus", "band"],
        data.samples.iter().zip(&values).map(|(s, &f)| {
            vec![
                format!("{}.xyz", s.name),
                f6(f),
                stats.classify(f).to_string(),
            ]
        }),
    )?;
    write_rows(
        &a.out.join("histogram.csv"),
        &["bin_left", "bin_right", "count"],
        focus_histogram(&values, a.bins as usize)?
            .into_iter()
            .map(|b| vec![f6(b.bin_left), f6(b.bin_right), b.count.to_string()]),
    )?;
    write_file(&a.out.join("stats.json"), to_fixed_json(&stats)?)?;
    println!(
        "reference focus mean {:.6}, std {:.6}; {} samples written to {}",
        stats.mu,
        stats.sigma,
        values.len(),
        a.out.display()
    );
    Ok(())
}

fn load_cloud(path: &Path) -> Result<PointCloud> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("rfpc") => load_rfpc(path),
        _ => load_xyz(path),
    }
}

fn influence(a: InfluenceArgs) -> CliResult<()> {
    let net = load_checkpoint(&a.checkpoint)?;
    let cloud = load_cloud(&a.cloud)?;
    let (map, f, degenerate) = trace_focus(&net.forward(&cloud)?, a.influence)?;
    create_dir(&a.out)?;
    write_rows(
        &a.out.join("influence.csv"),
        &["point_index", "value"],
        map.values()
            .iter()
            .enumerate()
            .map(|(i, &v)| vec![i.to_string(), format!("{v:.9}")]),
    )?;
    println!(
        "focus {:.6}{} over {} points",
        f,
        if degenerate {
            " (degenerate influence)"
        } else {
            ""
        },
        cloud.len()
    );
    Ok(())
}

fn outliers(a: OutliersArgs) -> CliResult<()> {
    if !a.family.adds_points() {
        return Err(CliError::Usage(format!(
            "family {} plants no outliers",
            a.family
        )));
    }
    if a.sor_k == 0 {
        return Err(CliError::Usage("--sor-k must be at least 1".into()));
    }
    let schedule = a.schedule.load()?;
    let net = load_checkpoint(&a.checkpoint)?;
    let data = load_split(&a.data, Split::Test)?;
    check_classes(&net, &data)?;
    let corrupted = corrupt_dataset(&data, a.family, a.severity, a.seed, &schedule)?;
    let methods: Vec<String> = std::iter::once("influence".to_string())
        .chain(a.sor_sigmas.iter().map(|s| format!("sor_{s:.2}")))
        .collect();
    let mut rows = Vec::new();
    let mut totals = vec![(0.0, 0.0); methods.len()];
    for (s, flags) in corrupted.dataset.samples.iter().zip(&corrupted.labels) {
        let file = format!("{}.xyz", s.name);
        let mut removed_sets = vec![influence_outlier_removal(&net, &s.cloud)?.removed];
        let scores = sor_scores(&s.cloud, a.sor_k)?;
        for &sigma in &a.sor_sigmas {
            removed_sets.push(sor_from_scores(&s.cloud, &scores, sigma).removed);
        }
        for (j, removed) in removed_sets.iter().enumerate() {
            let (p, r) = precision_recall(removed, flags);
            totals[j].0 += p;
            totals[j].1 += r;
            rows.push(vec![file.clone(), methods[j].clone(), f6(p), f6(r)]);
        }
    }
    create_dir(&a.out)?;
    write_rows(
        &a.out.join("outliers.csv"),
        &["file", "method", "precision", "recall"],
        rows,
    )?;
    let n = corrupted.dataset.len() as f64;
    write_rows(
        &a.out.join("outliers_summary.csv"),
        &["method", "mean_precision", "mean_recall"],
        methods
            .iter()
            .zip(&totals)
            .map(|(m, (p, r))| vec![m.clone(), f6(p / n), f6(r / n)]),
    )?;
    println!(
        "influence removal: mean precision {:.4}, mean recall {:.4} over {} samples",
        totals[0].0 / n,
        totals[0].1 / n,
        corrupted.dataset.len()
    );
    Ok(())
}

fn report(a: ReportArgs) -> CliResult<()> {
    let mut rows = Vec::new();
    for run in &a.runs {
        let path = run.join("report.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let r: crate::evaluation::EvalReport =
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.clone(),
                line: e.line(),
                msg: e.to_string(),
            })?;
        let mut row = vec![
            run.display().to_string(),
            r.config.defense.defense.to_string(),
            f6(r.clean_oa),
            r.mce.map(f6).unwrap_or_default(),
        ];
        for family in Family::ALL {
            row.push(
                r.ce.get(&family)
                    .copied()
                    .flatten()
                    .map(f6)
                    .unwrap_or_default(),
            );
        }
        rows.push(row);
    }
    let mut header = vec!["run", "defense", "clean_oa", "mce"];
    header.extend(Family::ALL.iter().map(|f| f.name()));
    create_dir(&a.out)?;
    write_rows(&a.out.join("summary.csv"), &header, rows)?;
    println!(
        "summarized {} runs in {}",
        a.runs.len(),
        a.out.join("summary.csv").display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["pcfocus", "eval", "--bogus"]), 1);
        assert_eq!(run(["pcfocus", "gen-data"]), 1);
        assert_eq!(
            run([
                "pcfocus",
                "corrupt",
                "--data",
                "d",
                "--out",
                "o",
                "--severity",
                "9"
            ]),
            1
        );
        assert_eq!(
            run([
                "pcfocus",
                "eval",
                "--checkpoint",
                "m",
                "--data",
                "d",
                "--defense",
                "magic"
            ]),
            1
        );
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(["pcfocus", "--help"]), 0);
        assert_eq!(run(["pcfocus", "eval", "--help"]), 0);
    }

    #[test]
    fn invalid_config_is_usage_error() {
        // fixed-k below k-min is rejected before the checkpoint is read.
        let code = run([
            "pcfocus",
            "eval",
            "--checkpoint",
            "/nonexistent/m.rfnn",
            "--data",
            "/nonexistent",
            "--defense",
            "refocus",
            "--fixed-k",
            "4",
        ]);
        assert_eq!(code, 1);
    }

    #[test]
    fn missing_input_is_runtime_error() {
        let code = run([
            "pcfocus",
            "eval",
            "--checkpoint",
            "/nonexistent/m.rfnn",
            "--data",
            "/nonexistent",
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn split_dir_prefers_nested_split() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(split_dir(dir.path(), Split::Test), dir.path());
        let nested = dir.path().join("test");
        fs::create_dir_all(&nested).unwrap();
        fs::write(nested.join(MANIFEST_FILE), "file,label\n").unwrap();
        assert_eq!(split_dir(dir.path(), Split::Test), nested);
        assert_eq!(split_dir(dir.path(), Split::Train), dir.path());
    }
}

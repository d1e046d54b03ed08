//! Accuracy, corruption error, mCE and focus tables.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{sor, srs};
use crate::corruptions::{corrupt_dataset, Family, SeveritySchedule, SEVERITIES};
use crate::error::{Error, Result};
use crate::geometry::{Dataset, PointCloud};
use crate::network::{argmax, softmax, ForwardTrace, PointNetwork};
use crate::refocus::{refocus_from_trace, trace_focus, RefocusConfig, RefocusVariant};
use crate::rng::mix_seed;

pub const DEFAULT_BINS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Defense {
    None,
    Refocus,
    RefocusFeature,
    Srs,
    Sor,
}

impl Defense {
    pub const ALL: [Defense; 5] = [
        Defense::None,
        Defense::Refocus,
        Defense::RefocusFeature,
        Defense::Srs,
        Defense::Sor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Defense::None => "none",
            Defense::Refocus => "refocus",
            Defense::RefocusFeature => "refocus-feature",
            Defense::Srs => "srs",
            Defense::Sor => "sor",
        }
    }
}

impl fmt::Display for Defense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Defense {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Defense::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown defense `{s}`")))
    }
}

/// Inference path and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseConfig {
    pub defense: Defense,
    pub refocus: RefocusConfig,
    pub srs_drop: f64,
    pub sor_k: usize,
    pub sor_sigma: f64,
    pub seed: u64,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        Self {
            defense: Defense::None,
            refocus: RefocusConfig::default(),
            srs_drop: 0.5,
            sor_k: 2,
            sor_sigma: 1.1,
            seed: 0,
        }
    }
}

impl DefenseConfig {
    pub fn new(defense: Defense) -> Self {
        Self {
            defense,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.refocus.validate()?;
        if !(0.0..1.0).contains(&self.srs_drop) {
            return Err(Error::Config(format!(
                "srs drop fraction {} not in [0, 1)",
                self.srs_drop
            )));
        }
        if self.sor_k == 0 {
            return Err(Error::Config("sor k must be at least 1".into()));
        }
        if !self.sor_sigma.is_finite() {
            return Err(Error::Config("sor sigma multiplier must be finite".into()));
        }
        Ok(())
    }

    fn refocus_config(&self) -> RefocusConfig {
        let mut cfg = self.refocus.clone();
        if self.defense == Defense::RefocusFeature {
            cfg.variant = RefocusVariant::FeatureSpace;
        }
        cfg
    }
}

/// Outcome of classifying one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub name: String,
    pub label: usize,
    pub predicted: usize,
    pub points: usize,
    /// Points that reached the classifying pass.
    pub kept: usize,
    pub focus_pre: f64,
    /// Focus of the cloud that was classified, when a filter ran.
    pub focus_post: Option<f64>,
    pub fallback: bool,
}

impl SampleResult {
    pub fn correct(&self) -> bool {
        self.predicted == self.label
    }
}

fn classify_from_trace<N: PointNetwork + ?Sized>(
    net: &N,
    cloud: &PointCloud,
    trace: &ForwardTrace,
    config: &DefenseConfig,
    sample_seed: u64,
) -> Result<(usize, usize, f64, Option<f64>, bool)> {
    let influence = config.refocus.influence;
    let (_, f_pre, degenerate) = trace_focus(trace, influence)?;
    let filtered = |sub: &PointCloud| -> Result<(usize, usize, f64, Option<f64>, bool)> {
        let second = net.forward(sub)?;
        let (_, f_post, _) = trace_focus(&second, influence)?;
        Ok((
            argmax(&softmax(&second.logits)),
            sub.len(),
            f_pre,
            Some(f_post),
            degenerate,
        ))
    };
    match config.defense {
        Defense::None => Ok((argmax(&trace.logits), cloud.len(), f_pre, None, degenerate)),
        Defense::Refocus | Defense::RefocusFeature => {
            let out = refocus_from_trace(net, cloud, trace, &config.refocus_config())?;
            let d = out.diagnostics;
            Ok((out.class, d.k, d.focus_pre, Some(d.focus_post), d.fallback))
        }
        Defense::Srs => filtered(&srs(cloud, config.srs_drop, sample_seed)?.kept),
        Defense::Sor => {
            if config.sor_k >= cloud.len() {
                return Ok((
                    argmax(&trace.logits),
                    cloud.len(),
                    f_pre,
                    Some(f_pre),
                    degenerate,
                ));
            }
            filtered(&sor(cloud, config.sor_k, config.sor_sigma)?.kept)
        }
    }
}

/// Classify a single cloud under a defense. `sample_seed` drives the random
/// filters only.
pub fn classify<N: PointNetwork + ?Sized>(
    net: &N,
    cloud: &PointCloud,
    config: &DefenseConfig,
    sample_seed: u64,
) -> Result<(usize, Option<f64>)> {
    let trace = net.forward(cloud)?;
    let (class, _, _, f_post, _) = classify_from_trace(net, cloud, &trace, config, sample_seed)?;
    Ok((class, f_post))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Classify every sample of `dataset`. `stream` separates the random filter
/// draws of different datasets evaluated under the same defense seed.
pub fn evaluate<N: PointNetwork + Sync + ?Sized>(
    net: &N,
    dataset: &Dataset,
    config: &DefenseConfig,
    stream: u64,
    workers: usize,
) -> Result<Vec<SampleResult>> {
    config.validate()?;
    let base = mix_seed(config.seed, stream);
    pool(workers)?.install(|| {
        dataset
            .samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let trace = net.forward(&s.cloud)?;
                let (predicted, kept, focus_pre, focus_post, fallback) =
                    classify_from_trace(net, &s.cloud, &trace, config, mix_seed(base, i as u64))?;
                Ok(SampleResult {
                    name: s.name.clone(),
                    label: s.label,
                    predicted,
                    points: s.cloud.len(),
                    kept,
                    focus_pre,
                    focus_post,
                    fallback,
                })
            })
            .collect()
    })
}

/// Evaluate several refocus configurations, sharing each sample's first pass.
pub fn evaluate_refocus_sweep<N: PointNetwork + Sync + ?Sized>(
    net: &N,
    dataset: &Dataset,
    configs: &[RefocusConfig],
    workers: usize,
) -> Result<Vec<Vec<SampleResult>>> {
    for c in configs {
        c.validate()?;
    }
    let per_sample: Vec<Vec<SampleResult>> = pool(workers)?.install(|| {
        dataset
            .samples
            .par_iter()
            .map(|s| {
                let trace = net.forward(&s.cloud)?;
                configs
                    .iter()
                    .map(|cfg| {
                        let out = refocus_from_trace(net, &s.cloud, &trace, cfg)?;
                        let d = out.diagnostics;
                        Ok(SampleResult {
                            name: s.name.clone(),
                            label: s.label,
                            predicted: out.class,
                            points: s.cloud.len(),
                            kept: d.k,
                            focus_pre: d.focus_pre,
                            focus_post: Some(d.focus_post),
                            fallback: d.fallback,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut out: Vec<Vec<SampleResult>> = configs
        .iter()
        .map(|_| Vec::with_capacity(per_sample.len()))
        .collect();
    for row in per_sample {
        for (j, r) in row.into_iter().enumerate() {
            out[j].push(r);
        }
    }
    Ok(out)
}

/// Fraction of correct predictions.
pub fn accuracy(results: &[SampleResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::InvalidInput(
            "accuracy of an empty result set".into(),
        ));
    }
    Ok(results.iter().filter(|r| r.correct()).count() as f64 / results.len() as f64)
}

/// Overall accuracy of a defended pipeline on `dataset`.
pub fn overall_accuracy<N: PointNetwork + Sync + ?Sized>(
    net: &N,
    dataset: &Dataset,
    config: &DefenseConfig,
    workers: usize,
) -> Result<f64> {
    accuracy(&evaluate(net, dataset, config, 0, workers)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CeAggregation {
    /// Summed model errors over summed pivot errors.
    #[default]
    SumRatio,
    /// Mean of the per-severity error ratios.
    MeanRatio,
}

impl FromStr for CeAggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum-ratio" => Ok(CeAggregation::SumRatio),
            "mean-ratio" => Ok(CeAggregation::MeanRatio),
            other => Err(Error::InvalidArgument(format!(
                "unknown CE aggregation `{other}`"
            ))),
        }
    }
}

/// Corruption error of one family from per-severity accuracies.
pub fn corruption_error(
    model: &[f64],
    pivot: &[f64],
    family: Family,
    mode: CeAggregation,
) -> Result<f64> {
    if model.len() != SEVERITIES.len() || pivot.len() != SEVERITIES.len() {
        return Err(Error::InvalidInput(format!(
            "expected {} severities, got {} (model) and {} (pivot)",
            SEVERITIES.len(),
            model.len(),
            pivot.len()
        )));
    }
    let undefined = || Error::UndefinedCe {
        family: family.name().to_string(),
    };
    match mode {
        CeAggregation::SumRatio => {
            let num: f64 = model.iter().map(|a| 1.0 - a).sum();
            let den: f64 = pivot.iter().map(|a| 1.0 - a).sum();
            if den <= 0.0 {
                return Err(undefined());
            }
            Ok(num / den)
        }
        CeAggregation::MeanRatio => {
            let mut total = 0.0;
            for (m, p) in model.iter().zip(pivot) {
                if 1.0 - p <= 0.0 {
                    return Err(undefined());
                }
                total += (1.0 - m) / (1.0 - p);
            }
            Ok(total / model.len() as f64)
        }
    }
}

/// Per-(family, severity) accuracies.
pub type AccuracyTable = BTreeMap<(Family, u8), f64>;

fn family_row(table: &AccuracyTable, family: Family) -> Result<Vec<f64>> {
    SEVERITIES
        .iter()
        .map(|&s| {
            table.get(&(family, s)).copied().ok_or_else(|| {
                Error::InvalidInput(format!("missing accuracy for {family} severity {s}"))
            })
        })
        .collect()
}

/// CE of every family, `None` where the pivot leaves no error to compare to.
pub fn ce_table(
    model: &AccuracyTable,
    pivot: &AccuracyTable,
    mode: CeAggregation,
) -> Result<BTreeMap<Family, Option<f64>>> {
    let mut out = BTreeMap::new();
    for family in Family::ALL {
        let ce = match corruption_error(
            &family_row(model, family)?,
            &family_row(pivot, family)?,
            family,
            mode,
        ) {
            Ok(v) => Some(v),
            Err(Error::UndefinedCe { .. }) => None,
            Err(e) => return Err(e),
        };
        out.insert(family, ce);
    }
    Ok(out)
}

/// Unweighted mean of the family CEs; undefined if any CE is.
pub fn mce(ces: &BTreeMap<Family, Option<f64>>) -> Option<f64> {
    if ces.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for ce in ces.values() {
        sum += (*ce)?;
    }
    Some(sum / ces.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: usize,
    /// `None` for an empty bin.
    pub success_rate: Option<f64>,
}

fn bin_of(f: f64, bins: usize) -> usize {
    ((f.clamp(0.0, 1.0) * bins as f64).floor() as usize).min(bins - 1)
}

fn edges(i: usize, bins: usize) -> (f64, f64) {
    (i as f64 / bins as f64, (i + 1) as f64 / bins as f64)
}

/// Uniform histogram over `[0, 1]`; a focus of exactly 1 lands in the last bin.
pub fn focus_histogram(values: &[f64], bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return Err(Error::InvalidArgument(
            "histogram needs at least one bin".into(),
        ));
    }
    let mut counts = vec![0usize; bins];
    for &f in values {
        counts[bin_of(f, bins)] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| {
            let (bin_left, bin_right) = edges(i, bins);
            HistogramBin {
                bin_left,
                bin_right,
                count,
            }
        })
        .collect())
}

/// Sample count and success rate per input-focus bin.
pub fn focus_success_curve(results: &[SampleResult], bins: usize) -> Result<Vec<SuccessBin>> {
    if bins == 0 {
        return Err(Error::InvalidArgument(
            "success curve needs at least one bin".into(),
        ));
    }
    let mut counts = vec![(0usize, 0usize); bins];
    for r in results {
        let slot = &mut counts[bin_of(r.focus_pre, bins)];
        slot.0 += 1;
        slot.1 += r.correct() as usize;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, (count, hits))| {
            let (bin_left, bin_right) = edges(i, bins);
            SuccessBin {
                bin_left,
                bin_right,
                count,
                success_rate: (count > 0).then(|| hits as f64 / count as f64),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub defense: DefenseConfig,
    pub corruption_seed: u64,
    pub schedule: SeveritySchedule,
    pub ce_aggregation: CeAggregation,
    pub bins: usize,
    pub checkpoint: Option<String>,
    pub pivot_checkpoint: Option<String>,
    #[serde(skip)]
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            defense: DefenseConfig::default(),
            corruption_seed: 0,
            schedule: SeveritySchedule::default(),
            ce_aggregation: CeAggregation::SumRatio,
            bins: DEFAULT_BINS,
            checkpoint: None,
            pivot_checkpoint: None,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionAccuracy {
    pub family: Family,
    pub severity: u8,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ExperimentConfig,
    pub clean_oa: f64,
    pub corruptions: Vec<CorruptionAccuracy>,
    pub ce: BTreeMap<Family, Option<f64>>,
    pub mce: Option<f64>,
    pub focus_histograms: BTreeMap<String, Vec<HistogramBin>>,
    pub focus_success: BTreeMap<String, Vec<SuccessBin>>,
}

impl EvalReport {
    pub fn accuracy_table(&self) -> AccuracyTable {
        self.corruptions
            .iter()
            .map(|c| ((c.family, c.severity), c.accuracy))
            .collect()
    }

    /// JSON with every float printed to six decimals.
    pub fn to_json(&self) -> Result<String> {
        to_fixed_json(self)
    }
}

/// Per-sample results of one evaluated set.
#[derive(Debug, Clone, PartialEq)]
pub struct SetResults {
    /// `None` for the clean set.
    pub cell: Option<(Family, u8)>,
    pub results: Vec<SampleResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub report: EvalReport,
    pub sets: Vec<SetResults>,
}

/// Evaluate `net` on the clean test set and all 35 corrupted copies.
///
/// The pivot defaults to `net` itself without a defense.
pub fn run_experiment<N: PointNetwork + Sync + ?Sized>(
    net: &N,
    pivot: Option<&N>,
    test: &Dataset,
    config: &ExperimentConfig,
) -> Result<Experiment> {
    config.defense.validate()?;
    if test.is_empty() {
        return Err(Error::InvalidInput("test set is empty".into()));
    }
    let pivot_cfg = DefenseConfig {
        defense: Defense::None,
        ..config.defense.clone()
    };
    let pivot_needed = pivot.is_some() || config.defense.defense != Defense::None;
    let pivot_net = pivot.unwrap_or(net);

    let clean = evaluate(net, test, &config.defense, 0, config.workers)?;
    let mut sets = vec![SetResults {
        cell: None,
        results: clean,
    }];
    let mut model_acc = AccuracyTable::new();
    let mut pivot_acc = AccuracyTable::new();
    for family in Family::ALL {
        for severity in SEVERITIES {
            let corrupted = corrupt_dataset(
                test,
                family,
                severity,
                config.corruption_seed,
                &config.schedule,
            )?;
            let stream = (family as u64) * 16 + severity as u64;
            let results = evaluate(
                net,
                &corrupted.dataset,
                &config.defense,
                stream,
                config.workers,
            )?;
            let acc = accuracy(&results)?;
            model_acc.insert((family, severity), acc);
            let p = if pivot_needed {
                accuracy(&evaluate(
                    pivot_net,
                    &corrupted.dataset,
                    &pivot_cfg,
                    stream,
                    config.workers,
                )?)?
            } else {
                acc
            };
            pivot_acc.insert((family, severity), p);
            sets.push(SetResults {
                cell: Some((family, severity)),
                results,
            });
        }
    }

    let ce = ce_table(&model_acc, &pivot_acc, config.ce_aggregation)?;
    let mut focus_histograms = BTreeMap::new();
    let clean_focus: Vec<f64> = sets[0].results.iter().map(|r| r.focus_pre).collect();
    focus_histograms.insert(
        "clean".to_string(),
        focus_histogram(&clean_focus, config.bins)?,
    );
    for family in Family::ALL {
        let values: Vec<f64> = sets
            .iter()
            .filter(|s| s.cell.map(|c| c.0) == Some(family))
            .flat_map(|s| s.results.iter().map(|r| r.focus_pre))
            .collect();
        focus_histograms.insert(
            family.name().to_string(),
            focus_histogram(&values, config.bins)?,
        );
    }
    let corrupted_results: Vec<SampleResult> = sets[1..]
        .iter()
        .flat_map(|s| s.results.iter().cloned())
        .collect();
    let mut focus_success = BTreeMap::new();
    focus_success.insert(
        "clean".to_string(),
        focus_success_curve(&sets[0].results, config.bins)?,
    );
    focus_success.insert(
        "corrupted".to_string(),
        focus_success_curve(&corrupted_results, config.bins)?,
    );

    let report = EvalReport {
        config: config.clone(),
        clean_oa: accuracy(&sets[0].results)?,
        corruptions: model_acc
            .iter()
            .map(|(&(family, severity), &accuracy)| CorruptionAccuracy {
                family,
                severity,
                accuracy,
            })
            .collect(),
        mce: mce(&ce),
        ce,
        focus_histograms,
        focus_success,
    };
    Ok(Experiment { report, sets })
}

struct FixedFloats;

impl serde_json::ser::Formatter for FixedFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.6}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        write!(writer, "{value:.6}")
    }
}

/// Serialize `value` as compact JSON with six-decimal floats.
pub fn to_fixed_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloats);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Config(format!("cannot serialize report: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn opt6(v: Option<f64>) -> String {
    v.map(f6).unwrap_or_default()
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    let io = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write `report.json` and its CSV mirrors into `dir`.
pub fn write_experiment(dir: &Path, experiment: &Experiment) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let report = &experiment.report;
    let json_path = dir.join("report.json");
    std::fs::write(&json_path, report.to_json()?).map_err(|e| Error::io(&json_path, e))?;

    write_csv(
        &dir.join("summary.csv"),
        &["metric", "value"],
        [
            vec!["clean_oa".to_string(), f6(report.clean_oa)],
            vec!["mce".to_string(), opt6(report.mce)],
        ],
    )?;
    write_csv(
        &dir.join("corruptions.csv"),
        &["family", "severity", "accuracy"],
        report
            .corruptions
            .iter()
            .map(|c| vec![c.family.to_string(), c.severity.to_string(), f6(c.accuracy)]),
    )?;
    write_csv(
        &dir.join("ce.csv"),
        &["family", "ce"],
        report.ce.iter().map(|(f, v)| vec![f.to_string(), opt6(*v)]),
    )?;
    write_csv(
        &dir.join("focus_histograms.csv"),
        &["set", "bin_left", "bin_right", "count"],
        report.focus_histograms.iter().flat_map(|(set, bins)| {
            bins.iter().map(move |b| {
                vec![
                    set.clone(),
                    f6(b.bin_left),
                    f6(b.bin_right),
                    b.count.to_string(),
                ]
            })
        }),
    )?;
    write_csv(
        &dir.join("focus_success.csv"),
        &["set", "bin_left", "bin_right", "count", "success_rate"],
        report.focus_success.iter().flat_map(|(set, bins)| {
            bins.iter().map(move |b| {
                vec![
                    set.clone(),
                    f6(b.bin_left),
                    f6(b.bin_right),
                    b.count.to_string(),
                    opt6(b.success_rate),
                ]
            })
        }),
    )?;
    write_csv(
        &dir.join("samples.csv"),
        &[
            "family",
            "severity",
            "file",
            "label",
            "predicted",
            "points",
            "k",
            "focus_pre",
            "focus_post",
            "fallback",
        ],
        experiment.sets.iter().flat_map(|set| {
            let (family, severity) = match set.cell {
                Some((f, s)) => (f.to_string(), s.to_string()),
                None => ("clean".to_string(), "0".to_string()),
            };
            set.results.iter().map(move |r| {
                vec![
                    family.clone(),
                    severity.clone(),
                    r.name.clone(),
                    r.label.to_string(),
                    r.predicted.to_string(),
                    r.points.to_string(),
                    r.kept.to_string(),
                    f6(r.focus_pre),
                    opt6(r.focus_post),
                    r.fallback.to_string(),
                ]
            })
        }),
    )
}

/// Mean seconds per single-cloud inference over `iterations` runs.
pub fn measure_latency<N: PointNetwork + ?Sized>(
    net: &N,
    cloud: &PointCloud,
    config: &DefenseConfig,
    iterations: usize,
) -> Result<f64> {
    if iterations == 0 {
        return Err(Error::InvalidArgument(
            "iterations must be at least 1".into(),
        ));
    }
    config.validate()?;
    let start = Instant::now();
    for i in 0..iterations {
        classify(net, cloud, config, i as u64)?;
    }
    Ok(start.elapsed().as_secs_f64() / iterations as f64)
}

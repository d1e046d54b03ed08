//! Refocusing: drop the most influential points and classify the rest.
//!
//! Inference runs two forward passes. The first yields the argmax-count
//! influence map and its focus `f`; the `K = floor((1 - f) N)` least
//! influential points are kept and classified by the second pass. A
//! single-pass variant instead re-pools the global feature without the
//! `ceil(f N)` most influential points.

use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::focus::focus;
use crate::geometry::PointCloud;
use crate::influence::{argmax_count_influence, l1_feature_influence, InfluenceMap};
use crate::network::{argmax, softmax, EncoderParams, ForwardTrace, PointNetwork, TrainSampler};
use crate::rng::Rng;

/// Smallest and largest crop drawn by the training sampler.
pub const TRAIN_CROP_MIN: usize = 256;
pub const TRAIN_CROP_MAX: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefocusVariant {
    /// Filter input points, then run a second forward pass.
    Euclidean,
    /// Mask influential points inside the max pool of the first pass.
    FeatureSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfluenceKind {
    ArgmaxCount,
    L1,
}

impl FromStr for InfluenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "argmax" | "argmax_count" | "argmax-count" => Ok(InfluenceKind::ArgmaxCount),
            "l1" => Ok(InfluenceKind::L1),
            other => Err(Error::InvalidArgument(format!(
                "unknown influence kind `{other}`"
            ))),
        }
    }
}

impl InfluenceKind {
    pub fn compute(self, trace: &ForwardTrace) -> InfluenceMap {
        match self {
            InfluenceKind::ArgmaxCount => argmax_count_influence(trace),
            InfluenceKind::L1 => l1_feature_influence(trace),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefocusConfig {
    pub k_min: usize,
    pub variant: RefocusVariant,
    /// Keep this many points instead of the adaptive count.
    pub fixed_k: Option<usize>,
    pub influence: InfluenceKind,
}

impl Default for RefocusConfig {
    fn default() -> Self {
        Self {
            k_min: 16,
            variant: RefocusVariant::Euclidean,
            fixed_k: None,
            influence: InfluenceKind::ArgmaxCount,
        }
    }
}

impl RefocusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_min == 0 {
            return Err(Error::Config("k_min must be at least 1".into()));
        }
        if let Some(k) = self.fixed_k {
            if k < self.k_min {
                return Err(Error::Config(format!(
                    "fixed_k {k} is below k_min {}",
                    self.k_min
                )));
            }
        }
        Ok(())
    }

    /// Points to keep for a cloud of `n` points with focus `f`. A fixed
    /// count larger than the cloud keeps every point.
    pub fn retained(&self, f: f64, n: usize) -> usize {
        match self.fixed_k {
            Some(k) => k.min(n),
            None => adaptive_k(f, n, self.k_min),
        }
    }
}

/// Absorbs rounding noise in `f` (a uniform map yields `f` of order 1e-16).
const COUNT_EPS: f64 = 1e-9;

/// `floor((1 - f) * n)`, clamped to `[k_min, n]`.
pub fn adaptive_k(f: f64, n: usize, k_min: usize) -> usize {
    let raw = ((1.0 - f.clamp(0.0, 1.0)) * n as f64 + COUNT_EPS).floor() as usize;
    raw.max(k_min).min(n)
}

/// Indices of the `k` smallest values (lower index first on ties),
/// returned in ascending index order.
pub fn lowest_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    if k < order.len() {
        order.select_nth_unstable_by(k, |&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    }
    let mut keep = order[..k.min(values.len())].to_vec();
    keep.sort_unstable();
    keep
}

/// The `k` least influential points, in their original order.
pub fn select_lowest(
    cloud: &PointCloud,
    influence: &InfluenceMap,
    k: usize,
) -> Result<(PointCloud, Vec<usize>)> {
    if influence.len() != cloud.len() {
        return Err(Error::InvalidArgument(format!(
            "influence has {} entries for {} points",
            influence.len(),
            cloud.len()
        )));
    }
    if k == 0 || k > cloud.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot keep {k} of {} points",
            cloud.len()
        )));
    }
    let idx = lowest_indices(influence.values(), k);
    Ok((cloud.subset(&idx), idx))
}

/// Normalized influence and focus of a trace. Falls back to uniform
/// influence when the map carries no mass.
pub fn trace_focus(trace: &ForwardTrace, kind: InfluenceKind) -> Result<(InfluenceMap, f64, bool)> {
    let raw = kind.compute(trace);
    let (map, degenerate) = match raw.normalize() {
        Ok(m) => (m, false),
        Err(Error::DegenerateInfluence) => (InfluenceMap::uniform(raw.len()), true),
        Err(e) => return Err(e),
    };
    let f = focus(map.values(), map.len())?;
    Ok((map, f, degenerate))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefocusDiagnostics {
    /// Focus of the full input.
    pub focus_pre: f64,
    /// Focus of the retained subset, measured by the classifying pass.
    pub focus_post: f64,
    pub k: usize,
    pub retained: Vec<usize>,
    /// Influence had no mass and was replaced by a uniform map, or the
    /// feature-space mask would have removed every point.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefocusOutput {
    pub class: usize,
    pub probs: Vec<f64>,
    pub diagnostics: RefocusDiagnostics,
}

/// Two-pass refocused classification.
pub fn refocus_infer<N: PointNetwork + ?Sized>(
    net: &N,
    cloud: &PointCloud,
    config: &RefocusConfig,
) -> Result<RefocusOutput> {
    config.validate()?;
    let trace = net.forward(cloud)?;
    refocus_from_trace(net, cloud, &trace, config)
}

/// Refocused classification given the first pass's trace of `cloud`.
pub fn refocus_from_trace<N: PointNetwork + ?Sized>(
    net: &N,
    cloud: &PointCloud,
    trace: &ForwardTrace,
    config: &RefocusConfig,
) -> Result<RefocusOutput> {
    let (influence, f, degenerate) = trace_focus(trace, config.influence)?;
    let n = cloud.len();
    match config.variant {
        RefocusVariant::Euclidean => {
            let k = config.retained(f, n);
            let (sub, retained) = select_lowest(cloud, &influence, k)?;
            let second = net.forward(&sub)?;
            let (_, f_post, _) = trace_focus(&second, config.influence)?;
            let probs = softmax(&second.logits);
            Ok(RefocusOutput {
                class: argmax(&probs),
                probs,
                diagnostics: RefocusDiagnostics {
                    focus_pre: f,
                    focus_post: f_post,
                    k,
                    retained,
                    fallback: degenerate,
                },
            })
        }
        RefocusVariant::FeatureSpace => {
            let masked = feature_space_filter_with(
                trace,
                &influence,
                f,
                config.fixed_k.map(|k| n - k.min(n)),
            );
            let logits = net.head_logits(&masked.global_feature)?;
            let probs = softmax(&logits);
            let post_counts: Vec<f64> = {
                let mut c = vec![0.0; masked.retained.len()];
                for &j in &masked.argmax_indices {
                    if let Ok(slot) = masked.retained.binary_search(&j) {
                        c[slot] += 1.0;
                    }
                }
                c
            };
            let f_post = InfluenceMap::new(post_counts)?
                .normalize()
                .ok()
                .map(|m| focus(m.values(), m.len()))
                .transpose()?
                .unwrap_or(f);
            Ok(RefocusOutput {
                class: argmax(&probs),
                probs,
                diagnostics: RefocusDiagnostics {
                    focus_pre: f,
                    focus_post: f_post,
                    k: masked.retained.len(),
                    retained: masked.retained,
                    fallback: degenerate || masked.fallback,
                },
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedFeature {
    pub global_feature: Vec<f64>,
    pub argmax_indices: Vec<usize>,
    /// Points still taking part in the pool.
    pub retained: Vec<usize>,
    /// The mask would have covered every point; the unmasked feature was used.
    pub fallback: bool,
}

/// Re-pool the global feature without the `ceil(f * N)` most influential
/// points, using argmax-count influence of the trace.
pub fn feature_space_filter(trace: &ForwardTrace, f: f64) -> Result<MaskedFeature> {
    let map = argmax_count_influence(trace).normalize()?;
    Ok(feature_space_filter_with(trace, &map, f, None))
}

fn feature_space_filter_with(
    trace: &ForwardTrace,
    influence: &InfluenceMap,
    f: f64,
    exclude_override: Option<usize>,
) -> MaskedFeature {
    let n = trace.num_points();
    let exclude = exclude_override
        .unwrap_or_else(|| (f.clamp(0.0, 1.0) * n as f64 - COUNT_EPS).ceil().max(0.0) as usize);
    let unmasked = |fallback| MaskedFeature {
        global_feature: trace.global_feature.clone(),
        argmax_indices: trace.argmax_indices.clone(),
        retained: (0..n).collect(),
        fallback,
    };
    if exclude == 0 {
        return unmasked(false);
    }
    if exclude >= n {
        return unmasked(true);
    }
    let retained = lowest_indices(influence.values(), n - exclude);
    let (global_feature, argmax_indices) = trace
        .per_point_features
        .pool_rows(retained.iter().copied())
        .expect("retained set is non-empty");
    MaskedFeature {
        global_feature,
        argmax_indices,
        retained,
        fallback: false,
    }
}

/// Training-time crop: keep a uniformly drawn number of least influential
/// points under the current parameters. Clouds smaller than
/// [`TRAIN_CROP_MIN`] pass through untouched.
pub fn refocus_train_sampler(
    params: &EncoderParams,
    cloud: &PointCloud,
    rng: &mut Rng,
) -> Result<PointCloud> {
    if cloud.len() < TRAIN_CROP_MIN {
        return Ok(cloud.clone());
    }
    let trace = params.forward(cloud)?;
    let idx = crop_from_trace(&trace, rng)?;
    Ok(cloud.subset(&idx))
}

fn crop_from_trace(trace: &ForwardTrace, rng: &mut Rng) -> Result<Vec<usize>> {
    let n = trace.num_points();
    if n < TRAIN_CROP_MIN {
        return Ok((0..n).collect());
    }
    let k = rng.gen_range(TRAIN_CROP_MIN..=TRAIN_CROP_MAX.min(n));
    let map = argmax_count_influence(trace).normalize()?;
    Ok(lowest_indices(map.values(), k))
}

/// [`refocus_train_sampler`] packaged for [`crate::network::train`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RefocusSampler;

impl TrainSampler for RefocusSampler {
    fn crop(
        &self,
        params: &EncoderParams,
        cloud: &PointCloud,
        rng: &mut Rng,
    ) -> Result<PointCloud> {
        refocus_train_sampler(params, cloud, rng)
    }

    fn uses_trace(&self) -> bool {
        true
    }

    fn crop_indices(&self, trace: &ForwardTrace, rng: &mut Rng) -> Result<Vec<usize>> {
        crop_from_trace(trace, rng)
    }
}

//! Shared per-point encoder with global max pooling and a small MLP head.
//!
//! Layout: per-point `3 -> 64 -> 128 -> 256` with ReLU after every layer,
//! max-pool over points, then `256 -> 128 (ReLU) -> C`. All math is `f64`.
//! Gradients are written out by hand; max pooling routes each column's
//! gradient to its argmax point only, so the encoder backward pass touches
//! at most `K` rows.

pub mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use train::{train, EpochStats, Optimizer, TrainConfig, TrainOutcome, TrainSampler};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::geometry::{LabeledCloud, PointCloud};
use crate::rng::rng_from_seed;

/// Width of the pooled global feature.
pub const FEATURE_DIM: usize = 256;
const ENCODER_DIMS: [usize; 4] = [3, 64, 128, FEATURE_DIM];
const HEAD_HIDDEN: usize = 128;
const LAYER_NAMES: [&str; 5] = ["enc1", "enc2", "enc3", "head1", "head2"];

/// A dense layer, `weight` stored row-major as `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            out_dim,
            in_dim,
            weight: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn is_finite(&self) -> bool {
        self.weight.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// Network parameters (and, with the same shape, gradients).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    layers: Vec<Dense>,
}

impl EncoderParams {
    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization.
    pub fn init(num_classes: usize, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(num_classes)?;
        let mut rng = rng_from_seed(seed);
        for layer in &mut p.layers {
            let bound = 1.0 / (layer.in_dim as f64).sqrt();
            for w in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *w = rng.gen_range(-bound..=bound);
            }
        }
        Ok(p)
    }

    pub fn zeros(num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "classifier needs at least 2 classes, got {num_classes}"
            )));
        }
        let d = ENCODER_DIMS;
        Ok(Self {
            layers: vec![
                Dense::zeros(d[1], d[0]),
                Dense::zeros(d[2], d[1]),
                Dense::zeros(d[3], d[2]),
                Dense::zeros(HEAD_HIDDEN, FEATURE_DIM),
                Dense::zeros(num_classes, HEAD_HIDDEN),
            ],
        })
    }

    pub(crate) fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        let expect = Self::zeros(layers.last().map_or(0, |l| l.out_dim))?;
        let shapes_match = layers.len() == expect.layers.len()
            && layers.iter().zip(&expect.layers).all(|(a, b)| {
                a.out_dim == b.out_dim
                    && a.in_dim == b.in_dim
                    && a.weight.len() == a.out_dim * a.in_dim
                    && a.bias.len() == a.out_dim
            });
        if !shapes_match {
            return Err(Error::InvalidInput(
                "layer shapes do not match the architecture".into(),
            ));
        }
        Ok(Self { layers })
    }

    pub fn num_classes(&self) -> usize {
        self.layers[4].out_dim
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layer_names() -> [&'static str; 5] {
        LAYER_NAMES
    }

    /// Zero the output layer so every class starts with equal logits.
    pub fn zero_head(&mut self) {
        let last = &mut self.layers[4];
        last.weight.iter_mut().for_each(|w| *w = 0.0);
        last.bias.iter_mut().for_each(|w| *w = 0.0);
    }

    /// Every scalar, in a fixed layer/weight/bias order.
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().map(<[f64]>::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Dense::is_finite)
    }

    fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.out_dim, l.in_dim))
                .collect(),
        }
    }
}

/// Row-major `rows x cols` matrix of per-point activations.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "feature matrix size mismatch");
        Self { rows, cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.cols + k]
    }

    /// Column maxima over `rows` (lowest row wins ties).
    pub fn pool_rows(&self, rows: impl Iterator<Item = usize>) -> Option<(Vec<f64>, Vec<usize>)> {
        let mut best: Option<(Vec<f64>, Vec<usize>)> = None;
        for r in rows {
            let row = self.row(r);
            match &mut best {
                None => best = Some((row.to_vec(), vec![r; self.cols])),
                Some((vals, idx)) => {
                    for k in 0..self.cols {
                        if row[k] > vals[k] || (row[k] == vals[k] && r < idx[k]) {
                            vals[k] = row[k];
                            idx[k] = r;
                        }
                    }
                }
            }
        }
        best
    }
}

/// Everything produced by one forward pass that downstream analysis needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `N x K` post-activation features before pooling.
    pub per_point_features: FeatureMatrix,
    pub global_feature: Vec<f64>,
    /// Point index attaining each column maximum.
    pub argmax_indices: Vec<usize>,
    pub logits: Vec<f64>,
}

impl ForwardTrace {
    pub fn num_points(&self) -> usize {
        self.per_point_features.rows
    }
}

/// The minimal interface refocusing needs from a classifier: a traced
/// forward pass and the head applied to an arbitrary pooled feature.
pub trait PointNetwork {
    fn forward(&self, cloud: &PointCloud) -> Result<ForwardTrace>;
    fn head_logits(&self, global_feature: &[f64]) -> Result<Vec<f64>>;
}

/// `out (rows x layer.out) = relu?(input (rows x layer.in) * W^T + b)`.
fn dense_rows(input: &[f64], rows: usize, layer: &Dense, relu: bool) -> Vec<f64> {
    let (m, k, n) = (rows, layer.in_dim, layer.out_dim);
    let mut out = Vec::with_capacity(m * n);
    for _ in 0..m {
        out.extend_from_slice(&layer.bias);
    }
    // SAFETY: slices are sized m*k, n*k and m*n with the strides given.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            input.as_ptr(),
            k as isize,
            1,
            layer.weight.as_ptr(),
            1,
            k as isize,
            1.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    if relu {
        out.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    out
}

fn check_finite(values: &[f64], layer: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericOverflow { layer })
    }
}

fn matvec(layer: &Dense, x: &[f64]) -> Vec<f64> {
    (0..layer.out_dim)
        .map(|o| {
            let row = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
            layer.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect()
}

/// Intermediate activations kept for the backward pass.
struct Cache {
    input: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
}

impl EncoderParams {
    fn forward_cached(&self, cloud: &PointCloud) -> Result<(ForwardTrace, Cache)> {
        let n = cloud.len();
        let input: Vec<f64> = cloud
            .points()
            .iter()
            .flat_map(|p| p.map(f64::from))
            .collect();
        let h1 = dense_rows(&input, n, &self.layers[0], true);
        check_finite(&h1, LAYER_NAMES[0])?;
        let h2 = dense_rows(&h1, n, &self.layers[1], true);
        check_finite(&h2, LAYER_NAMES[1])?;
        let h3 = dense_rows(&h2, n, &self.layers[2], true);
        check_finite(&h3, LAYER_NAMES[2])?;
        let features = FeatureMatrix::new(n, FEATURE_DIM, h3);
        let (global, argmax) = features
            .pool_rows(0..n)
            .expect("point clouds are never empty");
        let (_, logits) = self.head_forward(&global)?;
        Ok((
            ForwardTrace {
                per_point_features: features,
                global_feature: global,
                argmax_indices: argmax,
                logits,
            },
            Cache { input, h1, h2 },
        ))
    }

    fn head_forward(&self, global: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if global.len() != FEATURE_DIM {
            return Err(Error::InvalidArgument(format!(
                "global feature has {} entries, expected {FEATURE_DIM}",
                global.len()
            )));
        }
        let mut hidden = matvec(&self.layers[3], global);
        hidden.iter_mut().for_each(|v| *v = v.max(0.0));
        check_finite(&hidden, LAYER_NAMES[3])?;
        let logits = matvec(&self.layers[4], &hidden);
        check_finite(&logits, LAYER_NAMES[4])?;
        Ok((hidden, logits))
    }

    /// Accumulate `scale * d(loss)/d(params)` for one sample; returns its
    /// loss and class probabilities.
    fn accumulate_grads(
        &self,
        cloud: &PointCloud,
        label: usize,
        scale: f64,
        grads: &mut EncoderParams,
    ) -> Result<(f64, Vec<f64>)> {
        let (trace, cache) = self.forward_cached(cloud)?;
        self.backward(&trace.per_point_features, &cache, None, label, scale, grads)
    }

    /// Backward pass for the sub-cloud made of `rows` (all rows if `None`).
    ///
    /// The encoder is applied to every point independently, so the features
    /// of a sub-cloud are exactly the corresponding rows of the full pass.
    fn backward(
        &self,
        features: &FeatureMatrix,
        cache: &Cache,
        rows: Option<&[usize]>,
        label: usize,
        scale: f64,
        grads: &mut EncoderParams,
    ) -> Result<(f64, Vec<f64>)> {
        let (global, argmax_indices) = match rows {
            Some(r) => features.pool_rows(r.iter().copied()),
            None => features.pool_rows(0..features.rows),
        }
        .ok_or_else(|| Error::InvalidArgument("cannot train on an empty sub-cloud".into()))?;
        let (head_hidden, logits) = self.head_forward(&global)?;
        let probs = softmax(&logits);
        let loss = -probs[label].max(f64::MIN_POSITIVE).ln();

        let mut d_logits = probs.clone();
        d_logits[label] -= 1.0;
        d_logits.iter_mut().for_each(|v| *v *= scale);

        // Head.
        let out = &self.layers[4];
        let g_out = &mut grads.layers[4];
        for o in 0..out.out_dim {
            g_out.bias[o] += d_logits[o];
            let row = &mut g_out.weight[o * out.in_dim..(o + 1) * out.in_dim];
            for (w, h) in row.iter_mut().zip(&head_hidden) {
                *w += d_logits[o] * h;
            }
        }
        let mut d_hidden = vec![0.0; out.in_dim];
        for o in 0..out.out_dim {
            let row = &out.weight[o * out.in_dim..(o + 1) * out.in_dim];
            for (d, w) in d_hidden.iter_mut().zip(row) {
                *d += d_logits[o] * w;
            }
        }
        for (d, h) in d_hidden.iter_mut().zip(&head_hidden) {
            if *h <= 0.0 {
                *d = 0.0;
            }
        }
        let hid = &self.layers[3];
        let g_hid = &mut grads.layers[3];
        let mut d_global = vec![0.0; FEATURE_DIM];
        for o in 0..hid.out_dim {
            if d_hidden[o] == 0.0 {
                continue;
            }
            g_hid.bias[o] += d_hidden[o];
            let grow = &mut g_hid.weight[o * FEATURE_DIM..(o + 1) * FEATURE_DIM];
            let wrow = &hid.weight[o * FEATURE_DIM..(o + 1) * FEATURE_DIM];
            for k in 0..FEATURE_DIM {
                grow[k] += d_hidden[o] * global[k];
                d_global[k] += d_hidden[o] * wrow[k];
            }
        }

        // Max pooling: column k's gradient lands on its argmax row; ReLU
        // passes it only where the pooled activation is positive.
        let mut rows: Vec<usize> = argmax_indices.clone();
        rows.sort_unstable();
        rows.dedup();
        let r = rows.len();
        let mut d_z3 = vec![0.0; r * FEATURE_DIM];
        for k in 0..FEATURE_DIM {
            if global[k] > 0.0 {
                let slot = rows.binary_search(&argmax_indices[k]).unwrap();
                d_z3[slot * FEATURE_DIM + k] = d_global[k];
            }
        }
        let gather = |src: &[f64], width: usize| -> Vec<f64> {
            rows.iter()
                .flat_map(|&i| src[i * width..(i + 1) * width].iter().copied())
                .collect()
        };
        let x_r = gather(&cache.input, 3);
        let h1_r = gather(&cache.h1, ENCODER_DIMS[1]);
        let h2_r = gather(&cache.h2, ENCODER_DIMS[2]);

        let d_h2 = backprop_dense(&self.layers[2], &mut grads.layers[2], &d_z3, &h2_r, r);
        let d_z2 = relu_mask(d_h2, &h2_r);
        let d_h1 = backprop_dense(&self.layers[1], &mut grads.layers[1], &d_z2, &h1_r, r);
        let d_z1 = relu_mask(d_h1, &h1_r);
        backprop_dense(&self.layers[0], &mut grads.layers[0], &d_z1, &x_r, r);

        Ok((loss, probs))
    }
}

fn relu_mask(mut grad: Vec<f64>, activation: &[f64]) -> Vec<f64> {
    for (g, a) in grad.iter_mut().zip(activation) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
    grad
}

/// Given `d_out (rows x out)` and the layer input `(rows x in)`, add weight
/// and bias gradients and return `d_input (rows x in)`.
fn backprop_dense(
    layer: &Dense,
    grad: &mut Dense,
    d_out: &[f64],
    input: &[f64],
    rows: usize,
) -> Vec<f64> {
    let (i_dim, o_dim) = (layer.in_dim, layer.out_dim);
    for r in 0..rows {
        for o in 0..o_dim {
            grad.bias[o] += d_out[r * o_dim + o];
        }
    }
    let mut d_in = vec![0.0; rows * i_dim];
    // SAFETY: dimensions and strides match the slice lengths above.
    unsafe {
        // dW (out x in) += d_out^T (out x rows) * input (rows x in)
        matrixmultiply::dgemm(
            o_dim,
            rows,
            i_dim,
            1.0,
            d_out.as_ptr(),
            1,
            o_dim as isize,
            input.as_ptr(),
            i_dim as isize,
            1,
            1.0,
            grad.weight.as_mut_ptr(),
            i_dim as isize,
            1,
        );
        // d_in (rows x in) = d_out (rows x out) * W (out x in)
        matrixmultiply::dgemm(
            rows,
            o_dim,
            i_dim,
            1.0,
            d_out.as_ptr(),
            o_dim as isize,
            1,
            layer.weight.as_ptr(),
            i_dim as isize,
            1,
            0.0,
            d_in.as_mut_ptr(),
            i_dim as isize,
            1,
        );
    }
    d_in
}

impl PointNetwork for EncoderParams {
    fn forward(&self, cloud: &PointCloud) -> Result<ForwardTrace> {
        self.forward_cached(cloud).map(|(t, _)| t)
    }

    fn head_logits(&self, global_feature: &[f64]) -> Result<Vec<f64>> {
        self.head_forward(global_feature).map(|(_, l)| l)
    }
}

/// Traced forward pass.
pub fn forward(params: &EncoderParams, cloud: &PointCloud) -> Result<ForwardTrace> {
    params.forward(cloud)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the largest value; lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Class index and probability vector.
pub fn predict<N: PointNetwork + ?Sized>(net: &N, cloud: &PointCloud) -> Result<(usize, Vec<f64>)> {
    let trace = net.forward(cloud)?;
    let probs = softmax(&trace.logits);
    Ok((argmax(&probs), probs))
}

/// Mean cross-entropy over `batch` and its exact gradient.
pub fn loss_and_grads(
    params: &EncoderParams,
    batch: &[LabeledCloud],
) -> Result<(f64, EncoderParams)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut grads = params.zeros_like();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for s in batch {
        if s.label >= params.num_classes() {
            return Err(Error::InvalidInput(format!(
                "label {} out of range for {} classes",
                s.label,
                params.num_classes()
            )));
        }
        loss += params
            .accumulate_grads(&s.cloud, s.label, scale, &mut grads)?
            .0;
    }
    Ok((loss * scale, grads))
}

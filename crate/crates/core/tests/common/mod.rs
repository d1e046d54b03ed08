//! Oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use pcfocus::geometry::{LabeledCloud, PointCloud};
use pcfocus::network::{Dense, EncoderParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `ln x` from the series `2 * atanh((x - 1) / (x + 1))`, summed with
/// Kahan compensation. Independent of the platform `ln`.
pub fn series_ln(x: f64) -> f64 {
    assert!(x > 0.0);
    // Range-reduce by powers of two so the series converges quickly.
    let mut m = x;
    let mut k = 0i32;
    while m > 1.5 {
        m /= 2.0;
        k += 1;
    }
    while m < 0.75 {
        m *= 2.0;
        k -= 1;
    }
    let atanh_sum = |z: f64| {
        let z2 = z * z;
        let (mut sum, mut comp, mut term, mut n) = (0.0f64, 0.0f64, z, 1.0f64);
        while term.abs() > 1e-30 {
            let y = term / n - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            term *= z2;
            n += 2.0;
        }
        2.0 * sum
    };
    let ln2 = atanh_sum(1.0 / 3.0);
    atanh_sum((m - 1.0) / (m + 1.0)) + k as f64 * ln2
}

/// Entropy in nats with the series logarithm.
pub fn oracle_entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * series_ln(v))
        .sum::<f64>()
}

pub fn oracle_focus(p: &[f64]) -> f64 {
    1.0 - oracle_entropy(p) / series_ln(p.len() as f64)
}

/// Random batch of small clouds for gradient checks.
pub fn gradient_batch(points: usize, labels: &[usize], seed: u64) -> Vec<LabeledCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let pts: Vec<[f32; 3]> = (0..points)
                .map(|_| [0, 1, 2].map(|_| rng.gen_range(-1.0f32..1.0)))
                .collect();
            LabeledCloud {
                name: format!("g{i}"),
                cloud: PointCloud::new(pts).unwrap(),
                label,
            }
        })
        .collect()
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// Plain-loop forward pass with every intermediate kept, so that a single
/// perturbed parameter can be propagated incrementally.
struct Naive<'a> {
    layers: &'a [Dense],
    rows: usize,
    input: Vec<f64>,
    pre: [Vec<f64>; 3],
    post: [Vec<f64>; 3],
    pooled: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
    label: usize,
}

fn dense_rows(layer: &Dense, x: &[f64], rows: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * layer.out_dim];
    for r in 0..rows {
        let xr = &x[r * layer.in_dim..(r + 1) * layer.in_dim];
        for o in 0..layer.out_dim {
            let w = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
            out[r * layer.out_dim + o] =
                layer.bias[o] + w.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    out
}

fn colmax(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    (0..cols)
        .map(|c| {
            (0..rows)
                .map(|r| x[r * cols + c])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    lse - logits[label]
}

impl<'a> Naive<'a> {
    fn new(layers: &'a [Dense], sample: &LabeledCloud) -> Self {
        let rows = sample.cloud.len();
        let input: Vec<f64> = sample
            .cloud
            .points()
            .iter()
            .flat_map(|p| p.map(f64::from))
            .collect();
        let pre0 = dense_rows(&layers[0], &input, rows);
        let post0: Vec<f64> = pre0.iter().map(|&v| relu(v)).collect();
        let pre1 = dense_rows(&layers[1], &post0, rows);
        let post1: Vec<f64> = pre1.iter().map(|&v| relu(v)).collect();
        let pre2 = dense_rows(&layers[2], &post1, rows);
        let post2: Vec<f64> = pre2.iter().map(|&v| relu(v)).collect();
        let pooled = colmax(&post2, rows, layers[2].out_dim);
        let hidden_pre = dense_rows(&layers[3], &pooled, 1);
        let hidden: Vec<f64> = hidden_pre.iter().map(|&v| relu(v)).collect();
        let logits = dense_rows(&layers[4], &hidden, 1);
        Self {
            layers,
            rows,
            input,
            pre: [pre0, pre1, pre2],
            post: [post0, post1, post2],
            pooled,
            hidden_pre,
            hidden,
            logits,
            label: sample.label,
        }
    }

    fn loss(&self) -> f64 {
        cross_entropy(&self.logits, self.label)
    }

    fn layer_input(&self, layer: usize) -> (&[f64], usize) {
        match layer {
            0 => (&self.input, self.rows),
            1 | 2 => (&self.post[layer - 1], self.rows),
            3 => (&self.pooled, 1),
            _ => (&self.hidden, 1),
        }
    }

    fn head_from_pooled(&self, pooled: &[f64]) -> f64 {
        let hidden: Vec<f64> = dense_rows(&self.layers[3], pooled, 1)
            .into_iter()
            .map(relu)
            .collect();
        cross_entropy(&dense_rows(&self.layers[4], &hidden, 1), self.label)
    }

    /// Loss after adding `h` to weight `(o, i)` of `layer`, or to bias `o`
    /// when `i` is `None`.
    fn perturbed_loss(&self, layer: usize, o: usize, i: Option<usize>, h: f64) -> f64 {
        let (x, rows) = self.layer_input(layer);
        let in_dim = self.layers[layer].in_dim;
        let delta: Vec<f64> = (0..rows)
            .map(|r| i.map(|i| h * x[r * in_dim + i]).unwrap_or(h))
            .collect();
        match layer {
            4 => {
                let mut logits = self.logits.clone();
                logits[o] += delta[0];
                cross_entropy(&logits, self.label)
            }
            3 => {
                let new_h = relu(self.hidden_pre[o] + delta[0]);
                let d = new_h - self.hidden[o];
                let head = &self.layers[4];
                let logits: Vec<f64> = (0..head.out_dim)
                    .map(|c| self.logits[c] + head.weight[c * head.in_dim + o] * d)
                    .collect();
                cross_entropy(&logits, self.label)
            }
            2 => {
                let cols = self.layers[2].out_dim;
                let new_max = (0..rows)
                    .map(|r| relu(self.pre[2][r * cols + o] + delta[r]))
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut pooled = self.pooled.clone();
                pooled[o] = new_max;
                self.head_from_pooled(&pooled)
            }
            1 => {
                let (c1, c2) = (self.layers[1].out_dim, self.layers[2].out_dim);
                let next = &self.layers[2];
                let mut pre2 = self.pre[2].clone();
                for r in 0..rows {
                    let d = relu(self.pre[1][r * c1 + o] + delta[r]) - self.post[1][r * c1 + o];
                    if d != 0.0 {
                        for c in 0..c2 {
                            pre2[r * c2 + c] += next.weight[c * next.in_dim + o] * d;
                        }
                    }
                }
                let post2: Vec<f64> = pre2.into_iter().map(relu).collect();
                self.head_from_pooled(&colmax(&post2, rows, c2))
            }
            _ => {
                let (c0, c1) = (self.layers[0].out_dim, self.layers[1].out_dim);
                let next = &self.layers[1];
                let mut pre1 = self.pre[1].clone();
                for r in 0..rows {
                    let d = relu(self.pre[0][r * c0 + o] + delta[r]) - self.post[0][r * c0 + o];
                    if d != 0.0 {
                        for c in 0..c1 {
                            pre1[r * c1 + c] += next.weight[c * next.in_dim + o] * d;
                        }
                    }
                }
                let post1: Vec<f64> = pre1.into_iter().map(relu).collect();
                let post2: Vec<f64> = dense_rows(&self.layers[2], &post1, rows)
                    .into_iter()
                    .map(relu)
                    .collect();
                self.head_from_pooled(&colmax(&post2, rows, self.layers[2].out_dim))
            }
        }
    }
}

/// Mean cross-entropy of the plain-loop network.
pub fn oracle_loss(params: &EncoderParams, batch: &[LabeledCloud]) -> f64 {
    batch
        .iter()
        .map(|s| Naive::new(params.layers(), s).loss())
        .sum::<f64>()
        / batch.len() as f64
}

#[derive(Debug, Clone, Default)]
pub struct GradientCheck {
    pub checked: usize,
    pub failures: usize,
    /// Largest relative error among coordinates with a gradient of at least 1e-6.
    pub max_rel_error: f64,
    /// `(layer, coordinate, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Compare `grads` with central differences of the plain-loop loss on every
/// `stride`-th coordinate. A coordinate passes when the relative error is
/// within `rel_tol`, or the absolute error is within `abs_floor`.
pub fn check_gradients(
    params: &EncoderParams,
    grads: &EncoderParams,
    batch: &[LabeledCloud],
    h: f64,
    rel_tol: f64,
    abs_floor: f64,
    stride: usize,
) -> GradientCheck {
    let nets: Vec<Naive> = batch
        .iter()
        .map(|s| Naive::new(params.layers(), s))
        .collect();
    let scale = 1.0 / batch.len() as f64;
    let mut report = GradientCheck::default();
    let mut counter = 0usize;
    for (l, (layer, glayer)) in params.layers().iter().zip(grads.layers()).enumerate() {
        let n_w = layer.out_dim * layer.in_dim;
        for t in 0..n_w + layer.out_dim {
            counter += 1;
            if !(counter - 1).is_multiple_of(stride) {
                continue;
            }
            let (o, i, analytic) = if t < n_w {
                (t / layer.in_dim, Some(t % layer.in_dim), glayer.weight[t])
            } else {
                (t - n_w, None, glayer.bias[t - n_w])
            };
            let numeric: f64 = nets
                .iter()
                .map(|n| (n.perturbed_loss(l, o, i, h) - n.perturbed_loss(l, o, i, -h)) / (2.0 * h))
                .sum::<f64>()
                * scale;
            let err = (analytic - numeric).abs();
            let denom = analytic.abs().max(numeric.abs());
            let rel = if denom > 0.0 { err / denom } else { 0.0 };
            report.checked += 1;
            let ok = rel <= rel_tol || err <= abs_floor;
            if !ok {
                report.failures += 1;
            }
            if denom >= 1e-6 && rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((l, t, analytic, numeric));
            }
        }
    }
    report
}

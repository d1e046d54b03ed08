//! Per-point influence maps derived from a forward trace.

use crate::error::{Error, Result};
use crate::network::ForwardTrace;

/// Non-negative per-point influence values.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMap {
    values: Vec<f64>,
}

impl InfluenceMap {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("influence map is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "influence value {v} is not a finite non-negative number"
            )));
        }
        Ok(Self { values })
    }

    /// Equal influence on `n` points, already normalized.
    pub fn uniform(n: usize) -> Self {
        Self {
            values: vec![1.0 / n as f64; n],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Scale to unit sum.
    pub fn normalize(&self) -> Result<InfluenceMap> {
        let total = self.sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::DegenerateInfluence);
        }
        Ok(InfluenceMap {
            values: self.values.iter().map(|v| v / total).collect(),
        })
    }
}

/// How many feature columns each point wins in the max pool.
///
/// The counts sum to the feature width exactly.
pub fn argmax_count_influence(trace: &ForwardTrace) -> InfluenceMap {
    let mut counts = vec![0.0; trace.num_points()];
    for &j in &trace.argmax_indices {
        counts[j] += 1.0;
    }
    InfluenceMap { values: counts }
}

/// L1 norm of each point's feature row.
pub fn l1_feature_influence(trace: &ForwardTrace) -> InfluenceMap {
    let f = &trace.per_point_features;
    InfluenceMap {
        values: (0..f.rows)
            .map(|i| f.row(i).iter().map(|v| v.abs()).sum())
            .collect(),
    }
}

pub fn normalize(map: &InfluenceMap) -> Result<InfluenceMap> {
    map.normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::FeatureMatrix;
    use proptest::prelude::*;

    fn trace(rows: usize, cols: usize, data: Vec<f64>, argmax: Vec<usize>) -> ForwardTrace {
        ForwardTrace {
            per_point_features: FeatureMatrix::new(rows, cols, data),
            global_feature: vec![0.0; cols],
            argmax_indices: argmax,
            logits: vec![0.0, 0.0],
        }
    }

    #[test]
    fn counts_by_definition() {
        let t = trace(3, 4, vec![0.0; 12], vec![0, 0, 2, 1]);
        assert_eq!(argmax_count_influence(&t).values(), &[2.0, 1.0, 1.0]);
        let single = trace(1, 4, vec![0.0; 4], vec![0; 4]);
        assert_eq!(argmax_count_influence(&single).values(), &[4.0]);
    }

    #[test]
    fn l1_rows() {
        let t = trace(2, 2, vec![1.0, -1.0, 2.0, 0.0], vec![1, 0]);
        assert_eq!(l1_feature_influence(&t).values(), &[2.0, 2.0]);
        let z = trace(2, 2, vec![0.0, 0.0, 3.0, 1.0], vec![1, 1]);
        assert_eq!(l1_feature_influence(&z).values()[0], 0.0);
    }

    #[test]
    fn normalization() {
        let m = InfluenceMap::new(vec![2.0, 1.0, 1.0]).unwrap();
        assert_eq!(normalize(&m).unwrap().values(), &[0.5, 0.25, 0.25]);
        let hot = InfluenceMap::new(vec![0.0, 0.0, 5.0, 0.0]).unwrap();
        assert_eq!(hot.normalize().unwrap().values(), &[0.0, 0.0, 1.0, 0.0]);
        let zero = InfluenceMap::new(vec![0.0; 3]).unwrap();
        assert!(matches!(zero.normalize(), Err(Error::DegenerateInfluence)));
        assert!(InfluenceMap::new(vec![-1.0]).is_err());
        assert!(InfluenceMap::new(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn counts_match_column_rescan(seed in any::<u64>(), n in 1usize..40, k in 1usize..64) {
            use rand::Rng;
            let mut rng = crate::rng::rng_from_seed(seed);
            let data: Vec<f64> = (0..n * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = FeatureMatrix::new(n, k, data.clone());
            let (_, argmax) = f.pool_rows(0..n).unwrap();
            let t = trace(n, k, data.clone(), argmax);
            // Independent O(NK) scan.
            let mut expect = vec![0.0; n];
            for col in 0..k {
                let mut best = 0;
                for row in 1..n {
                    if data[row * k + col] > data[best * k + col] {
                        best = row;
                    }
                }
                expect[best] += 1.0;
            }
            let got = argmax_count_influence(&t);
            prop_assert_eq!(got.values(), &expect[..]);
            prop_assert_eq!(got.sum(), k as f64);
            let l1 = l1_feature_influence(&t);
            for row in 0..n {
                let s: f64 = data[row * k..(row + 1) * k].iter().map(|v| v.abs()).sum();
                prop_assert!((l1.values()[row] - s).abs() < 1e-12);
            }
            let norm = got.normalize().unwrap();
            prop_assert!((norm.sum() - 1.0).abs() < 1e-9);
            prop_assert!(norm.values().iter().all(|&v| v >= 0.0));
        }
    }
}

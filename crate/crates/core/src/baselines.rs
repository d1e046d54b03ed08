//! Input-filtering baselines and the influence-based outlier remover.

use rand::seq::index::sample;

use crate::corruptions::CorruptionLabel;
use crate::error::{Error, Result};
use crate::geometry::{mean_knn_distances, PointCloud};
use crate::influence::l1_feature_influence;
use crate::network::PointNetwork;
use crate::rng::rng_from_seed;

/// A filtered cloud together with the input indices it dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub kept: PointCloud,
    pub kept_indices: Vec<usize>,
    pub removed: Vec<usize>,
}

impl Filtered {
    fn from_mask(cloud: &PointCloud, keep: &[bool]) -> Self {
        let (mut kept_indices, mut removed) = (Vec::new(), Vec::new());
        for (i, &k) in keep.iter().enumerate() {
            if k {
                kept_indices.push(i);
            } else {
                removed.push(i);
            }
        }
        Self {
            kept: cloud.subset(&kept_indices),
            kept_indices,
            removed,
        }
    }
}

/// Simple random sampling: drop `floor(drop_fraction * N)` random points.
pub fn srs(cloud: &PointCloud, drop_fraction: f64, seed: u64) -> Result<Filtered> {
    if !(0.0..1.0).contains(&drop_fraction) {
        return Err(Error::InvalidArgument(format!(
            "drop fraction must be in [0, 1), got {drop_fraction}"
        )));
    }
    let n = cloud.len();
    let keep = (n - (drop_fraction * n as f64).floor() as usize).max(1);
    let mut rng = rng_from_seed(seed);
    let mut mask = vec![false; n];
    for i in sample(&mut rng, n, keep) {
        mask[i] = true;
    }
    Ok(Filtered::from_mask(cloud, &mask))
}

/// Mean distance of every point to its `k` nearest neighbours, the score
/// statistical outlier removal thresholds on.
pub fn sor_scores(cloud: &PointCloud, k: usize) -> Result<Vec<f64>> {
    if k == 0 || k >= cloud.len() {
        return Err(Error::InvalidArgument(format!(
            "SOR needs 1 <= k < N, got k={k} for N={}",
            cloud.len()
        )));
    }
    mean_knn_distances(cloud, k)
}

/// Remove points whose score exceeds `mean + sigma_mult * std` (strictly).
pub fn sor_from_scores(cloud: &PointCloud, scores: &[f64], sigma_mult: f64) -> Filtered {
    let m = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / m;
    let std = (scores.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / m).sqrt();
    let threshold = mean + sigma_mult * std;
    let mask: Vec<bool> = scores.iter().map(|&d| d <= threshold).collect();
    Filtered::from_mask(cloud, &mask)
}

/// Statistical outlier removal. The usual defense setting is `k = 2`,
/// `sigma_mult = 1.1`.
pub fn sor(cloud: &PointCloud, k: usize, sigma_mult: f64) -> Result<Filtered> {
    let scores = sor_scores(cloud, k)?;
    Ok(sor_from_scores(cloud, &scores, sigma_mult))
}

/// Keep points whose L1 feature influence is at most the cloud's mean
/// influence.
pub fn influence_outlier_removal<N: PointNetwork + ?Sized>(
    net: &N,
    cloud: &PointCloud,
) -> Result<Filtered> {
    let trace = net.forward(cloud)?;
    let influence = l1_feature_influence(&trace);
    Ok(influence_threshold(cloud, influence.values()))
}

fn influence_threshold(cloud: &PointCloud, values: &[f64]) -> Filtered {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    // Equal values must all survive, whatever the summation rounding.
    let all_equal = values.iter().all(|v| *v == values[0]);
    let mask: Vec<bool> = values.iter().map(|&v| all_equal || v <= mean).collect();
    Filtered::from_mask(cloud, &mask)
}

/// Precision and recall of `removed` against inserted-point flags.
///
/// Precision is 1 when nothing was removed; recall is 1 when nothing was
/// inserted.
pub fn precision_recall(removed: &[usize], flags: &CorruptionLabel) -> (f64, f64) {
    let hits = removed
        .iter()
        .filter(|&&i| flags.inserted.get(i).copied().unwrap_or(false))
        .count();
    let flagged = flags.count();
    let precision = if removed.is_empty() {
        1.0
    } else {
        hits as f64 / removed.len() as f64
    };
    let recall = if flagged == 0 {
        1.0
    } else {
        hits as f64 / flagged as f64
    };
    (precision, recall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{synth_shape, ShapeKind};
    use crate::network::{FeatureMatrix, ForwardTrace};

    fn grid() -> PointCloud {
        let mut pts = Vec::new();
        for x in 0..6 {
            for y in 0..6 {
                pts.push([x as f32, y as f32, 0.0]);
            }
        }
        PointCloud::new(pts).unwrap()
    }

    fn is_ordered_subset(f: &Filtered, n: usize) -> bool {
        f.kept_indices.windows(2).all(|w| w[0] < w[1])
            && f.kept_indices.len() + f.removed.len() == n
    }

    #[test]
    fn srs_contracts() {
        let c = synth_shape(ShapeKind::Torus, 1024, 1).unwrap();
        assert_eq!(srs(&c, 0.0, 3).unwrap().kept, c);
        let half = srs(&c, 0.5, 3).unwrap();
        assert_eq!(half.kept.len(), 512);
        assert!(is_ordered_subset(&half, 1024));
        for (j, &i) in half.kept_indices.iter().enumerate() {
            assert_eq!(half.kept.points()[j], c.points()[i]);
        }
        assert_eq!(srs(&c, 0.3, 9).unwrap(), srs(&c, 0.3, 9).unwrap());
        assert!(srs(&c, 1.0, 0).is_err());
        assert!(srs(&c, -0.1, 0).is_err());
    }

    #[test]
    fn srs_retention_is_unbiased() {
        let c = synth_shape(ShapeKind::Box, 100, 1).unwrap();
        let trials = 1000;
        let drop = 0.3;
        let mut hits = vec![0usize; c.len()];
        for t in 0..trials {
            for i in srs(&c, drop, t as u64).unwrap().kept_indices {
                hits[i] += 1;
            }
        }
        let p = 1.0 - drop;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        for h in hits {
            let freq = h as f64 / trials as f64;
            assert!((freq - p).abs() <= 3.0 * se + 1e-12, "freq {freq}");
        }
    }

    #[test]
    fn sor_keeps_uniform_spacing() {
        // Interior and boundary points of a regular grid all have k=2 mean
        // distance exactly 1, so the std is 0 and nothing is removed.
        let g = grid();
        let f = sor(&g, 2, 1.1).unwrap();
        assert!(f.removed.is_empty());
        assert_eq!(f.kept, g);
    }

    #[test]
    fn sor_drops_far_point() {
        // Cluster: 10 points spaced 0.1 on a line, plus one at distance 5.
        let mut pts: Vec<[f32; 3]> = (0..10).map(|i| [i as f32 * 0.1, 0.0, 0.0]).collect();
        pts.push([5.0, 0.0, 0.0]);
        let c = PointCloud::new(pts).unwrap();
        // Scores: ends 0.15, interior 0.1, far point (4.1 + 4.2) / 2 = 4.15.
        let scores = sor_scores(&c, 2).unwrap();
        assert!((scores[10] - 4.15).abs() < 1e-6);
        let f = sor(&c, 2, 1.1).unwrap();
        assert_eq!(f.removed, vec![10]);
        assert!(is_ordered_subset(&f, 11));
        assert!(sor(&c, 11, 1.0).is_err());
        assert!(sor(&c, 0, 1.0).is_err());
    }

    #[test]
    fn mean_threshold() {
        let c = grid().subset(&[0, 1, 2, 3]);
        let f = influence_threshold(&c, &[1.0, 1.0, 1.0, 5.0]);
        assert_eq!(f.kept_indices, vec![0, 1, 2]);
        assert_eq!(f.removed, vec![3]);
        let u = influence_threshold(&c, &[0.1; 4]);
        assert!(u.removed.is_empty());
    }

    #[test]
    fn influence_removal_uses_feature_norms() {
        struct Rows;
        impl PointNetwork for Rows {
            fn forward(&self, cloud: &PointCloud) -> Result<ForwardTrace> {
                let n = cloud.len();
                let data: Vec<f64> = (0..n).flat_map(|i| [cloud.point(i)[0], 0.0]).collect();
                Ok(ForwardTrace {
                    per_point_features: FeatureMatrix::new(n, 2, data),
                    global_feature: vec![0.0; 2],
                    argmax_indices: vec![0; 2],
                    logits: vec![0.0; 2],
                })
            }
            fn head_logits(&self, _: &[f64]) -> Result<Vec<f64>> {
                Ok(vec![0.0; 2])
            }
        }
        let c = PointCloud::new(vec![
            [1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [5.0, 0.0, 0.0],
        ])
        .unwrap();
        let f = influence_outlier_removal(&Rows, &c).unwrap();
        assert_eq!(f.removed, vec![3]);
    }

    #[test]
    fn precision_recall_cases() {
        let flags = CorruptionLabel {
            inserted: vec![false, false, true, true, true, true],
        };
        assert_eq!(precision_recall(&[2, 3, 4, 5], &flags), (1.0, 1.0));
        assert_eq!(precision_recall(&[0, 1], &flags), (0.0, 0.0));
        assert_eq!(precision_recall(&[2, 3], &flags), (1.0, 0.5));
        assert_eq!(precision_recall(&[], &flags), (1.0, 0.0));
        let clean = CorruptionLabel {
            inserted: vec![false; 3],
        };
        assert_eq!(precision_recall(&[1], &clean), (0.0, 1.0));
    }
}

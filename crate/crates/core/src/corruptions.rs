//! Synthetic corruption families with five severity levels each.
//!
//! Corrupted clouds are not re-normalized, so inserted outliers stay outside
//! the shape envelope.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist2, norm, rotate_about, Dataset, PointCloud};
use crate::rng::{mix_seed, rng_from_seed, Rng};

pub const SEVERITIES: [u8; 5] = [1, 2, 3, 4, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Jitter,
    Scale,
    Rotate,
    AddGlobal,
    AddLocal,
    DropGlobal,
    DropLocal,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Jitter,
        Family::Scale,
        Family::Rotate,
        Family::AddGlobal,
        Family::AddLocal,
        Family::DropGlobal,
        Family::DropLocal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Jitter => "jitter",
            Family::Scale => "scale",
            Family::Rotate => "rotate",
            Family::AddGlobal => "add_global",
            Family::AddLocal => "add_local",
            Family::DropGlobal => "drop_global",
            Family::DropLocal => "drop_local",
        }
    }

    pub fn adds_points(self) -> bool {
        matches!(self, Family::AddGlobal | Family::AddLocal)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('-', "_");
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown corruption family `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorruptionSpec {
    pub family: Family,
    pub severity: u8,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(family: Family, severity: u8, seed: u64) -> Result<Self> {
        if !(1..=5).contains(&severity) {
            return Err(Error::InvalidArgument(format!(
                "severity must be in 1..=5, got {severity}"
            )));
        }
        Ok(Self {
            family,
            severity,
            seed,
        })
    }
}

/// Per-level parameters of every family. Level `s` uses `s` times the step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeveritySchedule {
    /// Gaussian jitter standard deviation per level.
    pub jitter_sigma: f64,
    /// Per-axis scale factors are drawn from `[1/(1+s*step), 1+s*step]`.
    pub scale_step: f64,
    /// Maximum rotation angle per level, as a fraction of pi.
    pub rotate_step: f64,
    /// Points added by `add_global` per level.
    pub add_global_points: usize,
    /// Points added around each `add_local` anchor; one anchor per level.
    pub add_local_points: usize,
    pub add_local_sigma: f64,
    /// Fraction of points removed per level by both drop families.
    pub drop_step: f64,
}

impl Default for SeveritySchedule {
    fn default() -> Self {
        Self {
            jitter_sigma: 0.01,
            scale_step: 0.1,
            rotate_step: 0.1,
            add_global_points: 10,
            add_local_points: 10,
            add_local_sigma: 0.05,
            drop_step: 0.15,
        }
    }
}

impl SeveritySchedule {
    /// Number of points that survive a drop corruption at `severity`.
    pub fn kept_after_drop(&self, n: usize, severity: u8) -> usize {
        let keep = n as f64 * (1.0 - self.drop_step * severity as f64);
        // The epsilon absorbs representation error in products like 0.15*5*1024.
        ((keep + 1e-9).floor().max(1.0) as usize).min(n)
    }
}

/// Marks points inserted by an `add_*` corruption.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorruptionLabel {
    pub inserted: Vec<bool>,
}

impl CorruptionLabel {
    fn clean(n: usize) -> Self {
        Self {
            inserted: vec![false; n],
        }
    }

    pub fn count(&self) -> usize {
        self.inserted.iter().filter(|&&f| f).count()
    }

    pub fn flagged_indices(&self) -> Vec<usize> {
        self.inserted
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }
}

fn to_cloud(points: &[[f64; 3]]) -> Result<PointCloud> {
    PointCloud::from_f64(points)
}

fn random_unit(rng: &mut Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [0, 1, 2].map(|_| StandardNormal.sample(rng));
        let n = norm(v);
        if n > 1e-12 {
            return v.map(|c| c / n);
        }
    }
}

fn uniform_in_ball(rng: &mut Rng) -> [f64; 3] {
    loop {
        let p: [f64; 3] = [0, 1, 2].map(|_| rng.gen_range(-1.0..1.0));
        if norm(p) <= 1.0 {
            return p;
        }
    }
}

/// Apply one corruption to a cloud.
pub fn apply(
    cloud: &PointCloud,
    spec: &CorruptionSpec,
    schedule: &SeveritySchedule,
) -> Result<(PointCloud, CorruptionLabel)> {
    let spec = CorruptionSpec::new(spec.family, spec.severity, spec.seed)?;
    let s = spec.severity as f64;
    let mut rng = rng_from_seed(spec.seed);
    let n = cloud.len();
    let pts: Vec<[f64; 3]> = (0..n).map(|i| cloud.point(i)).collect();

    match spec.family {
        Family::Jitter => {
            let noise = Normal::new(0.0, schedule.jitter_sigma * s)
                .map_err(|e| Error::Config(e.to_string()))?;
            let out: Vec<[f64; 3]> = pts
                .iter()
                .map(|p| p.map(|c| c + noise.sample(&mut rng)))
                .collect();
            Ok((to_cloud(&out)?, CorruptionLabel::clean(n)))
        }
        Family::Scale => {
            let hi = 1.0 + schedule.scale_step * s;
            let f: [f64; 3] = [0, 1, 2].map(|_| rng.gen_range(1.0 / hi..=hi));
            let out: Vec<[f64; 3]> = pts
                .iter()
                .map(|p| [p[0] * f[0], p[1] * f[1], p[2] * f[2]])
                .collect();
            Ok((to_cloud(&out)?, CorruptionLabel::clean(n)))
        }
        Family::Rotate => {
            let max = PI * schedule.rotate_step * s;
            let angle = rng.gen_range(-max..=max);
            let axis = random_unit(&mut rng);
            let out: Vec<[f64; 3]> = pts.iter().map(|p| rotate_about(*p, axis, angle)).collect();
            Ok((to_cloud(&out)?, CorruptionLabel::clean(n)))
        }
        Family::AddGlobal => {
            let extra = schedule.add_global_points * spec.severity as usize;
            let mut out = pts;
            out.extend((0..extra).map(|_| uniform_in_ball(&mut rng)));
            let mut label = CorruptionLabel::clean(n);
            label.inserted.resize(n + extra, true);
            Ok((to_cloud(&out)?, label))
        }
        Family::AddLocal => {
            let anchors = spec.severity as usize;
            let noise = Normal::new(0.0, schedule.add_local_sigma)
                .map_err(|e| Error::Config(e.to_string()))?;
            let mut out = pts.clone();
            for _ in 0..anchors {
                let a = pts[rng.gen_range(0..n)];
                out.extend(
                    (0..schedule.add_local_points).map(|_| a.map(|c| c + noise.sample(&mut rng))),
                );
            }
            let mut label = CorruptionLabel::clean(n);
            label.inserted.resize(out.len(), true);
            Ok((to_cloud(&out)?, label))
        }
        Family::DropGlobal => {
            let keep = schedule.kept_after_drop(n, spec.severity);
            let mut idx = sample(&mut rng, n, keep).into_vec();
            idx.sort_unstable();
            Ok((cloud.subset(&idx), CorruptionLabel::clean(keep)))
        }
        Family::DropLocal => {
            let remove = n - schedule.kept_after_drop(n, spec.severity);
            let anchors = spec.severity as usize;
            let mut alive = vec![true; n];
            let mut remaining = n;
            for a in 0..anchors {
                let quota = remove / anchors + usize::from(a < remove % anchors);
                if quota == 0 || remaining <= 1 {
                    continue;
                }
                let quota = quota.min(remaining - 1);
                let live: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
                let anchor = pts[live[rng.gen_range(0..live.len())]];
                let mut by_dist: Vec<(f64, usize)> =
                    live.iter().map(|&i| (dist2(anchor, pts[i]), i)).collect();
                by_dist.sort_unstable_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                for &(_, i) in &by_dist[..quota] {
                    alive[i] = false;
                }
                remaining -= quota;
            }
            let idx: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
            let kept = idx.len();
            Ok((cloud.subset(&idx), CorruptionLabel::clean(kept)))
        }
    }
}

/// A corrupted copy of a dataset with per-sample outlier flags.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedDataset {
    pub spec_family: Family,
    pub severity: u8,
    pub dataset: Dataset,
    pub labels: Vec<CorruptionLabel>,
}

/// Seed used for sample `index` of a `(family, severity)` cell.
pub fn sample_seed(base: u64, family: Family, severity: u8, index: usize) -> u64 {
    let cell = mix_seed(base, (family as u64) * 16 + severity as u64);
    mix_seed(cell, index as u64)
}

/// Corrupt one dataset with a single family and severity.
pub fn corrupt_dataset(
    dataset: &Dataset,
    family: Family,
    severity: u8,
    seed: u64,
    schedule: &SeveritySchedule,
) -> Result<CorruptedDataset> {
    let mut samples = Vec::with_capacity(dataset.len());
    let mut labels = Vec::with_capacity(dataset.len());
    for (i, s) in dataset.samples.iter().enumerate() {
        let spec = CorruptionSpec::new(family, severity, sample_seed(seed, family, severity, i))?;
        let (cloud, label) = apply(&s.cloud, &spec, schedule)?;
        samples.push(crate::geometry::LabeledCloud {
            name: s.name.clone(),
            cloud,
            label: s.label,
        });
        labels.push(label);
    }
    Ok(CorruptedDataset {
        spec_family: family,
        severity,
        dataset: Dataset {
            samples,
            class_names: dataset.class_names.clone(),
            split: dataset.split,
        },
        labels,
    })
}

/// All 35 `(family, severity)` corrupted copies of `dataset`.
pub fn corruption_suite(
    dataset: &Dataset,
    seed: u64,
    schedule: &SeveritySchedule,
) -> Result<BTreeMap<(Family, u8), CorruptedDataset>> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot corrupt an empty dataset".into(),
        ));
    }
    let mut out = BTreeMap::new();
    for family in Family::ALL {
        for severity in SEVERITIES {
            out.insert(
                (family, severity),
                corrupt_dataset(dataset, family, severity, seed, schedule)?,
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{chamfer_distance, generate_dataset, synth_shape, ShapeKind, Split};

    fn base() -> PointCloud {
        synth_shape(ShapeKind::Box, 1024, 3).unwrap()
    }

    fn run(family: Family, severity: u8, seed: u64) -> (PointCloud, CorruptionLabel) {
        let spec = CorruptionSpec::new(family, severity, seed).unwrap();
        apply(&base(), &spec, &SeveritySchedule::default()).unwrap()
    }

    #[test]
    fn severity_range_enforced() {
        assert!(CorruptionSpec::new(Family::Jitter, 0, 1).is_err());
        assert!(CorruptionSpec::new(Family::Jitter, 6, 1).is_err());
        let bad = CorruptionSpec {
            family: Family::Jitter,
            severity: 9,
            seed: 0,
        };
        assert!(apply(&base(), &bad, &SeveritySchedule::default()).is_err());
    }

    #[test]
    fn drop_global_sizes() {
        let expect = [870, 716, 563, 409, 256];
        for s in SEVERITIES {
            let (c, l) = run(Family::DropGlobal, s, 5);
            // 1024 * (1 - 0.15 s), rounded down.
            assert_eq!(c.len(), expect[s as usize - 1]);
            assert_eq!(l.count(), 0);
        }
    }

    #[test]
    fn drop_local_sizes_match_drop_global() {
        for s in SEVERITIES {
            let (g, _) = run(Family::DropGlobal, s, 5);
            let (l, _) = run(Family::DropLocal, s, 5);
            assert_eq!(g.len(), l.len());
        }
    }

    #[test]
    fn drop_local_removes_compact_regions() {
        let c = base();
        let (d, _) = run(Family::DropLocal, 1, 2);
        // One anchor at severity 1: every removed point lies closer to the
        // removed set's centroid than the farthest kept point does.
        let kept: std::collections::HashSet<[u32; 3]> =
            d.points().iter().map(|p| p.map(f32::to_bits)).collect();
        let removed: Vec<[f64; 3]> = (0..c.len())
            .filter(|&i| !kept.contains(&c.points()[i].map(f32::to_bits)))
            .map(|i| c.point(i))
            .collect();
        assert_eq!(removed.len(), 1024 - 870);
        let spread = removed
            .iter()
            .flat_map(|a| removed.iter().map(move |b| dist2(*a, *b).sqrt()))
            .fold(0.0, f64::max);
        assert!(spread < 1.5, "removed region diameter {spread}");
    }

    #[test]
    fn add_global_sizes_and_flags() {
        for s in SEVERITIES {
            let (c, l) = run(Family::AddGlobal, s, 5);
            let extra = 10 * s as usize;
            assert_eq!(c.len(), 1024 + extra);
            assert_eq!(l.count(), extra);
            assert!(l.inserted[..1024].iter().all(|f| !f));
            assert!(l.inserted[1024..].iter().all(|&f| f));
            for i in 1024..c.len() {
                assert!(norm(c.point(i)) <= 1.0 + 1e-6);
            }
        }
    }

    #[test]
    fn add_local_sizes_and_flags() {
        for s in SEVERITIES {
            let (c, l) = run(Family::AddLocal, s, 5);
            assert_eq!(c.len(), 1024 + 10 * s as usize);
            assert_eq!(l.flagged_indices(), (1024..c.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn rotation_preserves_norms() {
        let c = base();
        for s in SEVERITIES {
            let (r, l) = run(Family::Rotate, s, 11);
            assert_eq!(r.len(), c.len());
            assert_eq!(l.count(), 0);
            for i in 0..c.len() {
                assert!((norm(c.point(i)) - norm(r.point(i))).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn smooth_families_preserve_size_and_stay_finite() {
        for f in [Family::Jitter, Family::Scale, Family::Rotate] {
            for s in SEVERITIES {
                let (c, l) = run(f, s, 3);
                assert_eq!(c.len(), 1024);
                assert_eq!(l.inserted.len(), 1024);
                assert!(c.points().iter().flatten().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn scale_factors_in_range() {
        let c = base();
        let (s, _) = run(Family::Scale, 5, 9);
        for d in 0..3 {
            let i = (0..c.len()).find(|&i| c.point(i)[d].abs() > 0.2).unwrap();
            let f = s.point(i)[d] / c.point(i)[d];
            assert!((1.0 / 1.5 - 1e-6..=1.5 + 1e-6).contains(&f), "{f}");
        }
    }

    #[test]
    fn suite_shape_and_determinism() {
        let full = generate_dataset(2, 128, 4, Split::Test).unwrap();
        let d = Dataset {
            samples: full.samples[..10].to_vec(),
            ..full
        };
        assert_eq!(d.len(), 10);
        let a = corruption_suite(&d, 42, &SeveritySchedule::default()).unwrap();
        assert_eq!(a.len(), 35);
        assert!(a
            .values()
            .all(|c| c.dataset.len() == 10 && c.labels.len() == 10));
        let b = corruption_suite(&d, 42, &SeveritySchedule::default()).unwrap();
        assert_eq!(a, b);
    }

    /// Brute-force Chamfer distance to the clean cloud grows with jitter severity.
    #[test]
    fn jitter_chamfer_increases_with_severity() {
        let clouds: Vec<PointCloud> = (0..100)
            .map(|i| synth_shape(ShapeKind::ALL[i % 8], 128, 100 + i as u64).unwrap())
            .collect();
        let sched = SeveritySchedule::default();
        let mean_cd: Vec<f64> = SEVERITIES
            .iter()
            .map(|&s| {
                clouds
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let spec = CorruptionSpec::new(Family::Jitter, s, i as u64).unwrap();
                        chamfer_distance(c, &apply(c, &spec, &sched).unwrap().0)
                    })
                    .sum::<f64>()
                    / clouds.len() as f64
            })
            .collect();
        assert!(mean_cd.windows(2).all(|w| w[0] < w[1]), "{mean_cd:?}");
    }
}

//! Parametric shape classes used as a synthetic classification benchmark.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, LabeledCloud, PointCloud, Split};
use crate::error::{Error, Result};
use crate::rng::{mix_seed, rng_from_seed, Rng};

/// Minimum number of points accepted by [`synth_shape`].
pub const MIN_SHAPE_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Sphere,
    Box,
    Cylinder,
    Cone,
    Torus,
    Plane,
    TwoSpheres,
    Pyramid,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 8] = [
        ShapeKind::Sphere,
        ShapeKind::Box,
        ShapeKind::Cylinder,
        ShapeKind::Cone,
        ShapeKind::Torus,
        ShapeKind::Plane,
        ShapeKind::TwoSpheres,
        ShapeKind::Pyramid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Box => "box",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Cone => "cone",
            ShapeKind::Torus => "torus",
            ShapeKind::Plane => "plane",
            ShapeKind::TwoSpheres => "two-spheres",
            ShapeKind::Pyramid => "pyramid",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown shape kind `{s}`")))
    }
}

fn unit_vector(rng: &mut Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let n = super::norm(v);
        if n > 1e-12 {
            return v.map(|c| c / n);
        }
    }
}

fn sample_triangle(rng: &mut Rng, a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> [f64; 3] {
    let (mut u, mut v): (f64, f64) = (rng.gen(), rng.gen());
    if u + v > 1.0 {
        u = 1.0 - u;
        v = 1.0 - v;
    }
    [0, 1, 2].map(|d| a[d] + u * (b[d] - a[d]) + v * (c[d] - a[d]))
}

fn triangle_area(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    0.5 * super::norm([
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ])
}

/// Uniform sphere samples whose centroid is the sphere center: antipodal
/// pairs, plus one great-circle triple when `n` is odd. Centering then leaves
/// every radius untouched.
fn balanced_sphere(rng: &mut Rng, n: usize) -> Vec<[f64; 3]> {
    let mut pts = Vec::with_capacity(n);
    if n % 2 == 1 {
        let a = unit_vector(rng);
        let t = loop {
            let v = unit_vector(rng);
            let d = a[0] * v[0] + a[1] * v[1] + a[2] * v[2];
            let w = [v[0] - d * a[0], v[1] - d * a[1], v[2] - d * a[2]];
            let wn = super::norm(w);
            if wn > 1e-6 {
                break w.map(|x| x / wn);
            }
        };
        let b = [0, 1, 2].map(|d| -0.5 * a[d] + 0.75f64.sqrt() * t[d]);
        let c = [0, 1, 2].map(|d| -0.5 * a[d] - 0.75f64.sqrt() * t[d]);
        pts.extend([a, b, c]);
    }
    while pts.len() < n {
        let p = unit_vector(rng);
        pts.push(p);
        pts.push(p.map(|x| -x));
    }
    pts
}

/// Pick an index with probability proportional to `weights`.
fn pick(rng: &mut Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut r = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if r < *w {
            return i;
        }
        r -= w;
    }
    weights.len() - 1
}

fn disk(rng: &mut Rng, radius: f64, z: f64) -> [f64; 3] {
    let r = radius * rng.gen::<f64>().sqrt();
    let t = rng.gen_range(0.0..TAU);
    [r * t.cos(), r * t.sin(), z]
}

/// One surface sample of the canonical (unscaled) shape.
fn surface_point(kind: ShapeKind, rng: &mut Rng, extents: [f64; 3]) -> [f64; 3] {
    match kind {
        ShapeKind::Sphere => unit_vector(rng),
        ShapeKind::Box => {
            // Faces are sampled at the scaled extents so density stays uniform.
            let [ex, ey, ez] = extents;
            let face = pick(rng, &[ey * ez, ey * ez, ex * ez, ex * ez, ex * ey, ex * ey]);
            let (u, v) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            match face {
                0 => [ex, u * ey, v * ez],
                1 => [-ex, u * ey, v * ez],
                2 => [u * ex, ey, v * ez],
                3 => [u * ex, -ey, v * ez],
                4 => [u * ex, v * ey, ez],
                _ => [u * ex, v * ey, -ez],
            }
        }
        ShapeKind::Cylinder => {
            let (r, h) = (0.5, 1.0);
            let side = TAU * r * 2.0 * h;
            let cap = PI * r * r;
            match pick(rng, &[side, cap, cap]) {
                0 => {
                    let t = rng.gen_range(0.0..TAU);
                    [r * t.cos(), r * t.sin(), rng.gen_range(-h..h)]
                }
                1 => disk(rng, r, h),
                _ => disk(rng, r, -h),
            }
        }
        ShapeKind::Cone => {
            let (r, h): (f64, f64) = (0.7, 1.5);
            let slant = (r * r + h * h).sqrt();
            match pick(rng, &[PI * r * slant, PI * r * r]) {
                0 => {
                    // Lateral area density grows linearly with distance from the apex.
                    let s = rng.gen::<f64>().sqrt();
                    let t = rng.gen_range(0.0..TAU);
                    [s * r * t.cos(), s * r * t.sin(), h * (1.0 - s) - 0.5 * h]
                }
                _ => disk(rng, r, -0.5 * h),
            }
        }
        ShapeKind::Torus => {
            let (big, small) = (0.7, 0.25);
            let u = rng.gen_range(0.0..TAU);
            let v = loop {
                let v = rng.gen_range(0.0..TAU);
                if rng.gen::<f64>() * (big + small) <= big + small * v.cos() {
                    break v;
                }
            };
            let ring = big + small * v.cos();
            [ring * u.cos(), ring * u.sin(), small * v.sin()]
        }
        ShapeKind::Plane => [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0],
        ShapeKind::TwoSpheres => {
            let d = unit_vector(rng);
            let cx = if rng.gen::<bool>() { 0.6 } else { -0.6 };
            [cx + 0.45 * d[0], 0.45 * d[1], 0.45 * d[2]]
        }
        ShapeKind::Pyramid => {
            let b = 0.8;
            let base = [[-b, -b, -0.6], [b, -b, -0.6], [b, b, -0.6], [-b, b, -0.6]];
            let apex = [0.0, 0.0, 0.9];
            let mut tris: Vec<[[f64; 3]; 3]> =
                (0..4).map(|i| [base[i], base[(i + 1) % 4], apex]).collect();
            tris.push([base[0], base[1], base[2]]);
            tris.push([base[0], base[2], base[3]]);
            let areas: Vec<f64> = tris
                .iter()
                .map(|t| triangle_area(t[0], t[1], t[2]))
                .collect();
            let t = tris[pick(rng, &areas)];
            sample_triangle(rng, t[0], t[1], t[2])
        }
    }
}

/// Sample `n_points` on the surface of a randomly scaled and rotated instance
/// of `kind`, normalized into the unit sphere.
///
/// Every shape except the sphere receives an independent per-axis scale in
/// `[0.8, 1.25]`; all shapes get a random rotation about the vertical axis.
pub fn synth_shape(kind: ShapeKind, n_points: usize, seed: u64) -> Result<PointCloud> {
    if n_points < MIN_SHAPE_POINTS {
        return Err(Error::InvalidArgument(format!(
            "synth_shape needs at least {MIN_SHAPE_POINTS} points, got {n_points}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let scale: [f64; 3] = if kind == ShapeKind::Sphere {
        [1.0; 3]
    } else {
        [0, 1, 2].map(|_| rng.gen_range(0.8..1.25))
    };
    let yaw = rng.gen_range(0.0..TAU);
    let (s, c) = yaw.sin_cos();
    let raw = if kind == ShapeKind::Sphere {
        balanced_sphere(&mut rng, n_points)
    } else {
        (0..n_points)
            .map(|_| {
                if kind == ShapeKind::Box {
                    surface_point(kind, &mut rng, scale)
                } else {
                    let p = surface_point(kind, &mut rng, [1.0; 3]);
                    [p[0] * scale[0], p[1] * scale[1], p[2] * scale[2]]
                }
            })
            .collect()
    };
    let pts: Vec<[f64; 3]> = raw
        .into_iter()
        .map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]])
        .collect();
    Ok(PointCloud::from_f64(&pts)?.normalized())
}

/// `per_class` samples of every shape class for the given split.
pub fn generate_dataset(
    per_class: usize,
    n_points: usize,
    seed: u64,
    split: Split,
) -> Result<Dataset> {
    let split_seed = mix_seed(seed, split as u64);
    let mut samples = Vec::with_capacity(per_class * ShapeKind::ALL.len());
    for (label, kind) in ShapeKind::ALL.into_iter().enumerate() {
        for i in 0..per_class {
            let sample_seed = mix_seed(split_seed, (label * 1_000_000 + i) as u64);
            samples.push(LabeledCloud {
                name: format!("{}_{:05}", kind.name(), i),
                cloud: synth_shape(kind, n_points, sample_seed)?,
                label,
            });
        }
    }
    Dataset::new(
        samples,
        ShapeKind::ALL
            .iter()
            .map(|k| k.name().to_string())
            .collect(),
        split,
    )
}

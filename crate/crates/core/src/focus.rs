//! Entropy-based focus of an influence distribution.
//!
//! `focus = 1 - H(p) / ln N`: 0 when influence is spread evenly over all
//! points, 1 when a single point carries all of it. Single-point maps are
//! assigned focus 1.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-6;

fn validate(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution("empty distribution".into()));
    }
    if let Some(v) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidDistribution(format!(
            "entry {v} is negative or not finite"
        )));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidDistribution(format!(
            "entries sum to {s}, not 1"
        )));
    }
    Ok(())
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    validate(p)?;
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    Ok(h.max(0.0))
}

/// Entropy divided by `ln n`, clamped into `[0, 1]`.
pub fn normalized_entropy(p: &[f64], n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "normalized entropy needs at least 2 elements, got {n}"
        )));
    }
    if p.len() != n {
        return Err(Error::InvalidArgument(format!(
            "distribution has {} entries, expected {n}",
            p.len()
        )));
    }
    Ok((entropy(p)? / (n as f64).ln()).clamp(0.0, 1.0))
}

/// Focus of a normalized influence map over `n` points.
pub fn focus(p: &[f64], n: usize) -> Result<f64> {
    if n == 1 {
        validate(p)?;
        return Ok(1.0);
    }
    Ok(1.0 - normalized_entropy(p, n)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FocusBand {
    Under,
    In,
    Over,
}

impl fmt::Display for FocusBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FocusBand::Under => "under",
            FocusBand::In => "in",
            FocusBand::Over => "over",
        })
    }
}

/// Mean and population standard deviation of focus over a reference set,
/// with the band multipliers that define over- and under-focus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocusStats {
    pub mu: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl FocusStats {
    pub fn lower_edge(&self) -> f64 {
        self.mu - self.beta * self.sigma
    }

    pub fn upper_edge(&self) -> f64 {
        self.mu + self.alpha * self.sigma
    }

    pub fn classify(&self, f: f64) -> FocusBand {
        classify_focus(f, self)
    }
}

pub fn focus_stats(values: &[f64], alpha: f64, beta: f64) -> Result<FocusStats> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "focus statistics need at least 2 values, got {}",
            values.len()
        )));
    }
    let m = values.len() as f64;
    let mu = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m;
    Ok(FocusStats {
        mu,
        sigma: var.sqrt(),
        alpha,
        beta,
    })
}

/// Over iff `f >= mu + alpha*sigma`, under iff `f <= mu - beta*sigma`.
pub fn classify_focus(f: f64, stats: &FocusStats) -> FocusBand {
    if f >= stats.upper_edge() {
        FocusBand::Over
    } else if f <= stats.lower_edge() {
        FocusBand::Under
    } else {
        FocusBand::In
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn entropy_extremes() {
        assert_eq!(entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(entropy(&[0.25; 4]).unwrap(), 4f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(entropy(&[0.25; 4]).unwrap(), 1.386294, epsilon = 1e-6);
    }

    #[test]
    fn entropy_rejects_bad_distributions() {
        assert!(matches!(
            entropy(&[0.5, 0.6]),
            Err(Error::InvalidDistribution(_))
        ));
        assert!(entropy(&[1.5, -0.5]).is_err());
        assert!(entropy(&[]).is_err());
    }

    #[test]
    fn normalized_entropy_and_focus_bounds() {
        for n in [2usize, 3, 17, 1024] {
            let u = vec![1.0 / n as f64; n];
            assert_abs_diff_eq!(normalized_entropy(&u, n).unwrap(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(focus(&u, n).unwrap(), 0.0, epsilon = 1e-12);
            let mut hot = vec![0.0; n];
            hot[n / 2] = 1.0;
            assert_eq!(normalized_entropy(&hot, n).unwrap(), 0.0);
            assert_eq!(focus(&hot, n).unwrap(), 1.0);
        }
        assert!(normalized_entropy(&[1.0], 1).is_err());
        assert_eq!(focus(&[1.0], 1).unwrap(), 1.0);
        assert!(focus(&[0.5, 0.5], 3).is_err());
    }

    #[test]
    fn stats_two_points() {
        let s = focus_stats(&[0.2, 0.4], 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(s.mu, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(s.sigma, 0.1, epsilon = 1e-15);
        assert_eq!(focus_stats(&[0.7; 5], 1.0, 1.0).unwrap().sigma, 0.0);
        assert!(focus_stats(&[0.1], 1.0, 1.0).is_err());
    }

    #[test]
    fn banding() {
        let s = FocusStats {
            mu: 0.3,
            sigma: 0.1,
            alpha: 1.0,
            beta: 1.0,
        };
        assert_eq!(classify_focus(0.45, &s), FocusBand::Over);
        assert_eq!(classify_focus(0.15, &s), FocusBand::Under);
        assert_eq!(classify_focus(0.3, &s), FocusBand::In);
        assert_eq!(s.classify(s.upper_edge()), FocusBand::Over);
        assert_eq!(s.classify(s.lower_edge()), FocusBand::Under);
    }

    #[test]
    fn stats_match_two_pass_oracle() {
        use rand::Rng;
        let mut rng = crate::rng::rng_from_seed(99);
        let v: Vec<f64> = (0..1000).map(|_| rng.gen::<f64>()).collect();
        let mean = v.iter().sum::<f64>() / 1000.0;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 1000.0;
        let s = focus_stats(&v, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(s.mu, mean, epsilon = 1e-12);
        assert_abs_diff_eq!(s.sigma, var.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn focus_increases_with_concentration() {
        let n = 64;
        let f: Vec<f64> = (0..=10)
            .map(|i| {
                let lam = i as f64 / 10.0;
                let mut p = vec![(1.0 - lam) / n as f64; n];
                p[0] += lam;
                focus(&p, n).unwrap()
            })
            .collect();
        assert!(f.windows(2).all(|w| w[0] < w[1]), "{f:?}");
    }

    proptest! {
        #[test]
        fn focus_stays_in_unit_interval(raw in prop::collection::vec(0.0f64..1.0, 2..200)) {
            let s: f64 = raw.iter().sum();
            prop_assume!(s > 0.0);
            let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let f = focus(&p, p.len()).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }
}

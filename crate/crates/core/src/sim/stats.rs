use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl MeanEstimate {
    /// Mean and standard error (unbiased variance over `n`) of `samples`.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return domain("cannot average an empty sample");
        }
        if samples.iter().all(|&x| x == samples[0]) {
            // avoid roundoff noise in the mean of a constant sample
            return Ok(Self { mean: samples[0], std_error: 0.0, n });
        }
        let mean = pairwise_sum(samples) / n as f64;
        let var = if n > 1 {
            let dev: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
            pairwise_sum(&dev) / (n - 1) as f64
        } else {
            0.0
        };
        Ok(Self { mean, std_error: (var / n as f64).sqrt(), n })
    }

    /// `k·SE` plus a roundoff allowance so that noiseless samples can agree.
    pub fn tolerance(&self, target: f64, k: f64) -> f64 {
        k * self.std_error + 1e-12 * target.abs().max(1.0)
    }

    /// `|mean − target| ≤ k·SE`, with a roundoff allowance for noiseless samples.
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= self.tolerance(target, k)
    }
}

/// Sum in a fixed binary-tree order; independent of how samples were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Sample variance and the standard error of that variance estimate.
pub fn variance_with_error(samples: &[f64]) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 2 {
        return domain("variance needs at least two samples");
    }
    let mean = pairwise_sum(samples) / n as f64;
    let m2: Vec<f64> = samples.iter().map(|x| (x - mean).powi(2)).collect();
    let m4: Vec<f64> = samples.iter().map(|x| (x - mean).powi(4)).collect();
    let var = pairwise_sum(&m2) / (n - 1) as f64;
    let fourth = pairwise_sum(&m4) / n as f64;
    Ok((var, ((fourth - var * var).max(0.0) / n as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_error() {
        let m = MeanEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.mean, 2.5);
        assert!((m.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(MeanEstimate::from_samples(&[]).is_err());
    }

    #[test]
    fn constant_sample_has_zero_error() {
        let m = MeanEstimate::from_samples(&[0.5; 100]).unwrap();
        assert_eq!(m.std_error, 0.0);
        assert!(m.agrees_with(0.5, 3.0));
        assert!(!m.agrees_with(0.5001, 3.0));
    }

    #[test]
    fn pairwise_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|k| k as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }
}

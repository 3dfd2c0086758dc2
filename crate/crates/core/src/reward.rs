//! Likelihood families shared by environments and policies.
//!
//! [`LinearGaussianModel`] is the reward law `N(<phi, theta>, sigma^2)` and also
//! the likelihood every Langevin policy differentiates. [`MixtureGaussianReward`]
//! only generates rewards.

use crate::error::{Error, Result};
use crate::rng::Stream;

const LN_TAU: f64 = 1.837_877_066_409_345_5; // ln(2*pi)

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianModel {
    feature: Vec<f64>,
    noise_variance: f64,
}

impl LinearGaussianModel {
    pub fn new(feature: Vec<f64>, noise_variance: f64) -> Result<Self> {
        if feature.is_empty() {
            return Err(Error::config("feature", "feature vector must be nonempty"));
        }
        let norm = feature.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::config(
                "feature",
                "feature norm must be finite and nonzero",
            ));
        }
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(Error::config(
                "noise_variance",
                format!("must be positive and finite, got {noise_variance}"),
            ));
        }
        Ok(Self {
            feature,
            noise_variance,
        })
    }

    /// One-dimensional model with unit feature.
    pub fn scalar(noise_variance: f64) -> Result<Self> {
        Self::new(vec![1.0], noise_variance)
    }

    pub fn dim(&self) -> usize {
        self.feature.len()
    }

    pub fn feature(&self) -> &[f64] {
        &self.feature
    }

    pub fn feature_norm(&self) -> f64 {
        self.feature.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    fn check_dim(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn mean_unchecked(&self, theta: &[f64]) -> f64 {
        self.feature.iter().zip(theta).map(|(p, t)| p * t).sum()
    }

    /// Expected reward `<phi, theta>`.
    pub fn mean(&self, theta: &[f64]) -> Result<f64> {
        self.check_dim(theta)?;
        Ok(self.mean_unchecked(theta))
    }

    /// Draws one reward. Consumes exactly one Gaussian variate.
    pub fn sample(&self, theta: &[f64], stream: &mut Stream) -> Result<f64> {
        let mean = self.mean(theta)?;
        Ok(mean + self.noise_variance.sqrt() * stream.gaussian())
    }

    pub fn log_density(&self, x: f64, theta: &[f64]) -> Result<f64> {
        let residual = x - self.mean(theta)?;
        Ok(-residual * residual / (2.0 * self.noise_variance)
            - 0.5 * (LN_TAU + self.noise_variance.ln()))
    }

    /// Score in theta: `phi * (x - <phi, theta>) / sigma^2`.
    pub fn grad_log_density(&self, x: f64, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(theta)?;
        let mut out = vec![0.0; self.dim()];
        self.accumulate_score(x, theta, &mut out);
        Ok(out)
    }

    /// Adds the score at `x` into `out`. Caller guarantees dimensions.
    #[inline]
    pub(crate) fn accumulate_score(&self, x: f64, theta: &[f64], out: &mut [f64]) {
        let scale = (x - self.mean_unchecked(theta)) / self.noise_variance;
        for (o, p) in out.iter_mut().zip(&self.feature) {
            *o += p * scale;
        }
    }
}

/// Equal-weight mixture `1/2 N(lo, s2) + 1/2 N(hi, s2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureGaussianReward {
    lo: f64,
    hi: f64,
    component_variance: f64,
}

impl MixtureGaussianReward {
    pub fn new(lo: f64, hi: f64, component_variance: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::config("component_means", "must be finite"));
        }
        if !(component_variance > 0.0 && component_variance.is_finite()) {
            return Err(Error::config(
                "component_variance",
                format!("must be positive and finite, got {component_variance}"),
            ));
        }
        Ok(Self {
            lo,
            hi,
            component_variance,
        })
    }

    pub fn component_means(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn component_variance(&self) -> f64 {
        self.component_variance
    }

    pub fn mean(&self) -> f64 {
        (self.lo + self.hi) / 2.0
    }

    pub fn variance(&self) -> f64 {
        let half_gap = (self.hi - self.lo) / 2.0;
        self.component_variance + half_gap * half_gap
    }

    /// Consumes one uniform (component choice) and one Gaussian variate.
    pub fn sample(&self, stream: &mut Stream) -> f64 {
        let centre = if stream.uniform() < 0.5 {
            self.lo
        } else {
            self.hi
        };
        centre + self.component_variance.sqrt() * stream.gaussian()
    }
}

//! Stationary bandit instances: single-Gaussian (SGR) and mixture-Gaussian (MGR) rewards.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::{LinearGaussianModel, MixtureGaussianReward};
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq)]
pub enum ArmReward {
    Linear {
        model: LinearGaussianModel,
        theta: Vec<f64>,
    },
    Mixture(MixtureGaussianReward),
}

impl ArmReward {
    pub fn mean(&self) -> f64 {
        match self {
            ArmReward::Linear { model, theta } => model.mean_unchecked(theta),
            ArmReward::Mixture(m) => m.mean(),
        }
    }

    pub fn sample(&self, stream: &mut Stream) -> f64 {
        match self {
            ArmReward::Linear { model, theta } => {
                model.mean_unchecked(theta) + model.noise_variance().sqrt() * stream.gaussian()
            }
            ArmReward::Mixture(m) => m.sample(stream),
        }
    }

    /// Feature vector a policy should pair with this arm. Mixture arms are scalar.
    pub fn feature(&self) -> Vec<f64> {
        match self {
            ArmReward::Linear { model, .. } => model.feature().to_vec(),
            ArmReward::Mixture(_) => vec![1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvironmentKind {
    Sgr,
    Mgr,
}

#[derive(Debug, Clone)]
pub struct BanditInstance {
    arms: Vec<ArmReward>,
    true_means: Vec<f64>,
    optimal_arm: usize,
    gap: f64,
    regrets: Vec<f64>,
}

fn check_common(k: usize, delta: f64, mu1: f64, sigma2: f64) -> Result<()> {
    if k < 2 {
        return Err(Error::config(
            "environment.arms",
            format!("need at least 2 arms, got {k}"),
        ));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::config(
            "environment.gap",
            format!("gap must be positive, got {delta}"),
        ));
    }
    if !mu1.is_finite() {
        return Err(Error::config("environment.mu1", "must be finite"));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::config(
            "environment.sigma2",
            format!("must be positive, got {sigma2}"),
        ));
    }
    Ok(())
}

// Increments are exactly `delta`; `mu1 - (mu1 - delta)` need not round to it.
fn gap_regrets(k: usize, delta: f64) -> Vec<f64> {
    (0..k).map(|a| if a == 0 { 0.0 } else { delta }).collect()
}

impl BanditInstance {
    /// Builds an instance from arbitrary arms. `gap` is the smallest positive gap.
    pub fn from_arms(arms: Vec<ArmReward>) -> Result<Self> {
        if arms.len() < 2 {
            return Err(Error::config("environment.arms", "need at least 2 arms"));
        }
        let true_means: Vec<f64> = arms.iter().map(ArmReward::mean).collect();
        if true_means.iter().any(|m| !m.is_finite()) {
            return Err(Error::config("environment", "arm means must be finite"));
        }
        let mut optimal_arm = 0;
        for (i, &m) in true_means.iter().enumerate() {
            if m > true_means[optimal_arm] {
                optimal_arm = i;
            }
        }
        let best = true_means[optimal_arm];
        let gap = true_means
            .iter()
            .map(|m| best - m)
            .filter(|g| *g > 0.0)
            .fold(f64::INFINITY, f64::min);
        let gap = if gap.is_finite() { gap } else { 0.0 };
        let regrets = true_means.iter().map(|m| best - m).collect();
        Ok(Self {
            arms,
            true_means,
            optimal_arm,
            gap,
            regrets,
        })
    }

    /// Arm 0 has mean `mu1`, the other `k - 1` arms `mu1 - delta`; Gaussian noise `sigma2`.
    pub fn make_sgr(k: usize, delta: f64, mu1: f64, sigma2: f64) -> Result<Self> {
        check_common(k, delta, mu1, sigma2)?;
        let model = LinearGaussianModel::scalar(sigma2)?;
        let arms = (0..k)
            .map(|a| ArmReward::Linear {
                model: model.clone(),
                theta: vec![if a == 0 { mu1 } else { mu1 - delta }],
            })
            .collect();
        let mut inst = Self::from_arms(arms)?;
        inst.gap = delta;
        inst.regrets = gap_regrets(k, delta);
        Ok(inst)
    }

    /// Optimal arm `1/2 N(mu1, s2) + 1/2 N(mu1 + delta, s2)`, the rest
    /// `1/2 N(mu1 - delta, s2) + 1/2 N(mu1, s2)`. Means are `mu1 +- delta / 2`.
    pub fn make_mgr(k: usize, delta: f64, mu1: f64, sigma2: f64) -> Result<Self> {
        check_common(k, delta, mu1, sigma2)?;
        let mut arms = Vec::with_capacity(k);
        arms.push(ArmReward::Mixture(MixtureGaussianReward::new(
            mu1,
            mu1 + delta,
            sigma2,
        )?));
        for _ in 1..k {
            arms.push(ArmReward::Mixture(MixtureGaussianReward::new(
                mu1 - delta,
                mu1,
                sigma2,
            )?));
        }
        let true_means = (0..k)
            .map(|a| {
                if a == 0 {
                    mu1 + delta / 2.0
                } else {
                    mu1 - delta / 2.0
                }
            })
            .collect();
        Ok(Self {
            arms,
            true_means,
            optimal_arm: 0,
            gap: delta,
            regrets: gap_regrets(k, delta),
        })
    }

    pub fn build(
        kind: EnvironmentKind,
        k: usize,
        delta: f64,
        mu1: f64,
        sigma2: f64,
    ) -> Result<Self> {
        match kind {
            EnvironmentKind::Sgr => Self::make_sgr(k, delta, mu1, sigma2),
            EnvironmentKind::Mgr => Self::make_mgr(k, delta, mu1, sigma2),
        }
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn arms(&self) -> &[ArmReward] {
        &self.arms
    }

    pub fn true_means(&self) -> &[f64] {
        &self.true_means
    }

    pub fn optimal_arm(&self) -> usize {
        self.optimal_arm
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    /// Largest per-round pseudo-regret.
    pub fn max_gap(&self) -> f64 {
        self.regrets.iter().copied().fold(0.0, f64::max)
    }

    /// Pseudo-regret of one pull of `arm`.
    pub fn regret_of(&self, arm: usize) -> f64 {
        self.regrets[arm]
    }

    /// Draws a reward from `arm` and returns it with the pseudo-regret increment.
    ///
    /// Panics if `arm` is out of range.
    pub fn pull(&self, arm: usize, stream: &mut Stream) -> (f64, f64) {
        assert!(arm < self.arms.len(), "arm index {arm} out of range");
        (self.arms[arm].sample(stream), self.regret_of(arm))
    }
}

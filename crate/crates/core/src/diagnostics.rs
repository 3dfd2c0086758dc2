//! Oracles for the sampling machinery: conjugate posteriors, finite-difference
//! gradients, chain moment checks, and an empirical concentration probe.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::policy::{Agent, InitMode, Policy, PolicyConfig, TsSaConfig};
use crate::reward::LinearGaussianModel;
use crate::rng::{provision_stream, Stream};
use crate::sampler::{lmc_step_scaled, minibatch_gradient, sa_average};

/// Iterates beyond this magnitude mark a chain as diverged.
pub const DIVERGENCE_GUARD: f64 = 1e6;

/// Gaussian prior, Gaussian likelihood with known variance, fixed data.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateOracle {
    pub prior_mean: f64,
    pub prior_variance: f64,
    pub data: Vec<f64>,
    pub noise_variance: f64,
}

impl ConjugateOracle {
    pub fn posterior(&self) -> (f64, f64) {
        conjugate_posterior(self)
    }
}

/// Closed-form posterior `(mean, variance)` of the oracle's mean parameter.
pub fn conjugate_posterior(oracle: &ConjugateOracle) -> (f64, f64) {
    let n = oracle.data.len() as f64;
    let sum: f64 = oracle.data.iter().sum();
    let precision = 1.0 / oracle.prior_variance + n / oracle.noise_variance;
    let mean =
        (oracle.prior_mean / oracle.prior_variance + sum / oracle.noise_variance) / precision;
    (mean, 1.0 / precision)
}

/// Central differences, one coordinate at a time.
pub fn finite_difference_gradient<F>(f: F, theta: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut probe = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            probe[i] = theta[i] + step;
            let up = f(&probe);
            probe[i] = theta[i] - step;
            let down = f(&probe);
            probe[i] = theta[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub tuples: usize,
    /// Largest `|analytic - fd| / (1 + |analytic|)` over all coordinates.
    pub max_rel_error: f64,
    pub rows: Vec<GradcheckRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckRow {
    pub x: f64,
    pub theta: Vec<f64>,
    pub feature: Vec<f64>,
    pub noise_variance: f64,
    pub rel_error: f64,
}

/// Analytic Gaussian score against central differences on random `(x, theta, phi, sigma^2)`.
pub fn gradcheck(tuples: usize, seed: u64, step: f64) -> Result<GradcheckReport> {
    let mut s = provision_stream(seed, "gradcheck", 0);
    let mut rows = Vec::with_capacity(tuples);
    let mut worst: f64 = 0.0;
    for _ in 0..tuples {
        let d = 1 + s.below(4);
        let feature: Vec<f64> = (0..d)
            .map(|_| {
                let v = -3.0 + 6.0 * s.uniform();
                if v.abs() < 0.05 {
                    0.05_f64.copysign(v)
                } else {
                    v
                }
            })
            .collect();
        let theta: Vec<f64> = (0..d).map(|_| -5.0 + 10.0 * s.uniform()).collect();
        let x = -10.0 + 20.0 * s.uniform();
        let noise_variance = 0.1 + 9.9 * s.uniform();
        let model = LinearGaussianModel::new(feature.clone(), noise_variance)?;
        let analytic = model.grad_log_density(x, &theta)?;
        let fd = finite_difference_gradient(
            |t| model.log_density(x, t).unwrap_or(f64::NAN),
            &theta,
            step,
        );
        let rel = analytic
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b).abs() / (1.0 + a.abs()))
            .fold(0.0, f64::max);
        worst = worst.max(rel);
        rows.push(GradcheckRow {
            x,
            theta,
            feature,
            noise_variance,
            rel_error: rel,
        });
    }
    Ok(GradcheckReport {
        tuples,
        max_rel_error: worst,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub mean: f64,
    pub variance: f64,
    pub mean_error: f64,
    pub var_error: f64,
    pub samples: usize,
    pub diverged: bool,
}

impl MomentReport {
    pub fn relative_var_error(&self, target_variance: f64) -> f64 {
        self.var_error / target_variance
    }
}

/// Runs `chain` for `burn_in` discarded and `samples` kept steps and compares
/// the kept draws' moments with the oracle posterior.
pub fn chain_moment_check<F>(
    mut chain: F,
    oracle: &ConjugateOracle,
    burn_in: usize,
    samples: usize,
    stream: &mut Stream,
) -> MomentReport
where
    F: FnMut(&mut Stream) -> f64,
{
    let (target_mean, target_var) = conjugate_posterior(oracle);
    for _ in 0..burn_in {
        let v = chain(stream);
        if v.is_nan() || v.abs() > DIVERGENCE_GUARD {
            return diverged(samples);
        }
    }
    // Welford
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..samples {
        let v = chain(stream);
        if v.is_nan() || v.abs() > DIVERGENCE_GUARD {
            return diverged(samples);
        }
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let variance = if samples > 1 {
        m2 / (samples - 1) as f64
    } else {
        0.0
    };
    MomentReport {
        mean,
        variance,
        mean_error: (mean - target_mean).abs(),
        var_error: (variance - target_var).abs(),
        samples,
        diverged: false,
    }
}

fn diverged(samples: usize) -> MomentReport {
    MomentReport {
        mean: f64::NAN,
        variance: f64::NAN,
        mean_error: f64::INFINITY,
        var_error: f64::INFINITY,
        samples,
        diverged: true,
    }
}

/// Independent draws from the exact posterior.
pub fn exact_posterior_chain(oracle: &ConjugateOracle) -> impl FnMut(&mut Stream) -> f64 {
    let (mean, var) = conjugate_posterior(oracle);
    let sd = var.sqrt();
    move |s: &mut Stream| mean + sd * s.gaussian()
}

/// The TS-SA inner iteration on a fixed dataset with full-window gradient,
/// `gamma = 1` and noise scaled by `1 / sqrt(n)`: a Langevin chain targeting
/// the oracle posterior. The prior enters the gradient as `grad log prior / n`.
pub fn langevin_posterior_chain(
    oracle: &ConjugateOracle,
    h: f64,
    start: f64,
) -> Result<impl FnMut(&mut Stream) -> f64> {
    let model = LinearGaussianModel::scalar(oracle.noise_variance)?;
    let data = oracle.data.clone();
    if data.is_empty() {
        return Err(Error::Runtime("langevin chain needs data".into()));
    }
    let n = data.len();
    let (prior_mean, prior_variance) = (oracle.prior_mean, oracle.prior_variance);
    let noise_scale = 1.0 / (n as f64).sqrt();
    let mut theta = vec![start];
    Ok(move |s: &mut Stream| {
        let mut g = minibatch_gradient(&model, &data, &theta, n).expect("nonempty data");
        g[0] += (prior_mean - theta[0]) / prior_variance / n as f64;
        let omega = lmc_step_scaled(&theta, &g, h, noise_scale, s);
        theta = sa_average(&theta, &omega, 1.0);
        theta[0]
    })
}

/// Outcome of running the Langevin chain against a conjugate dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateCheck {
    pub oracle: ConjugateOracle,
    pub posterior_mean: f64,
    pub posterior_variance: f64,
    pub report: MomentReport,
}

impl ConjugateCheck {
    pub fn relative_var_error(&self) -> f64 {
        self.report.relative_var_error(self.posterior_variance)
    }
}

/// Draws `n` rewards from `N(data_mean, 1)`, puts a `N(0, 100)` prior on the
/// mean and runs [`langevin_posterior_chain`] with step `h` from the prior mean.
pub fn conjugate_check(
    n: usize,
    data_mean: f64,
    h: f64,
    burn_in: usize,
    samples: usize,
    seed: u64,
) -> Result<ConjugateCheck> {
    if n == 0 || samples == 0 {
        return Err(Error::config("samples", "n and samples must be at least 1"));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::config("h", format!("must be positive, got {h}")));
    }
    let mut data_stream = provision_stream(seed, "conjugate/data", 0);
    let data = (0..n).map(|_| data_mean + data_stream.gaussian()).collect();
    let oracle = ConjugateOracle {
        prior_mean: 0.0,
        prior_variance: 100.0,
        data,
        noise_variance: 1.0,
    };
    let (posterior_mean, posterior_variance) = conjugate_posterior(&oracle);
    let chain = langevin_posterior_chain(&oracle, h, oracle.prior_mean)?;
    let mut s = provision_stream(seed, "conjugate/chain", 0);
    let report = chain_moment_check(chain, &oracle, burn_in, samples, &mut s);
    Ok(ConjugateCheck {
        oracle,
        posterior_mean,
        posterior_variance,
        report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationRow {
    pub pulls: u64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub mean: f64,
}

/// Settings for the concentration probe: `gamma = 1/n`, single-reward
/// gradient, single warm-up pull.
pub fn concentration_config() -> TsSaConfig {
    TsSaConfig {
        h: 0.9,
        c1: 1.0,
        c2: 1.0,
        c3: 0.0,
        alpha: 1.0,
        batch_cap: 1,
        warmup: 1,
        init: InitMode::WarmupMean,
        ..TsSaConfig::default()
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    // linear interpolation between order statistics
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Pulls a single arm repeatedly under `cfg` and reports the distribution of
/// `||theta(n) - theta*||` across `trials` at each `n` in `pulls_grid`.
pub fn concentration_probe(
    cfg: &TsSaConfig,
    env_model: &LinearGaussianModel,
    true_theta: &[f64],
    pulls_grid: &[u64],
    trials: usize,
    base_seed: u64,
) -> Result<Vec<ConcentrationRow>> {
    if pulls_grid.is_empty() || pulls_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(
            "pulls_grid",
            "must be nonempty and strictly increasing",
        ));
    }
    if trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    if pulls_grid[0] < cfg.warmup as u64 {
        return Err(Error::config(
            "pulls_grid",
            "grid must start at or after the warm-up",
        ));
    }
    env_model.mean(true_theta)?;
    let policy = PolicyConfig::TsSa(cfg.clone());
    policy.validate()?;
    let horizon = *pulls_grid.last().expect("nonempty");

    let errors: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<f64>> {
            let mut ps = provision_stream(base_seed, "concentration", trial as u64);
            let mut rs = provision_stream(base_seed, "concentration/rewards", trial as u64);
            let mut agent = Agent::new(&policy, &[env_model.feature().to_vec()], horizon, &mut ps)?;
            let mut out = Vec::with_capacity(pulls_grid.len());
            let mut next = 0;
            for pull in 1..=horizon {
                let x = env_model.sample(true_theta, &mut rs)?;
                agent.update(0, x, &mut ps);
                if pull == cfg.warmup as u64 {
                    agent.end_warmup();
                }
                if pulls_grid[next] == pull {
                    let theta = &agent.arm_states()[0].theta;
                    let err = theta
                        .iter()
                        .zip(true_theta)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    out.push(err);
                    next += 1;
                    if next == pulls_grid.len() {
                        break;
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    Ok(pulls_grid
        .iter()
        .enumerate()
        .map(|(i, &pulls)| {
            let mut col: Vec<f64> = errors.iter().map(|e| e[i]).collect();
            col.sort_by(f64::total_cmp);
            ConcentrationRow {
                pulls,
                median: quantile(&col, 0.5),
                q10: quantile(&col, 0.1),
                q90: quantile(&col, 0.9),
                mean: col.iter().sum::<f64>() / col.len() as f64,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn posterior_examples() {
        let prior_only = ConjugateOracle {
            prior_mean: 1.5,
            prior_variance: 2.0,
            data: vec![],
            noise_variance: 1.0,
        };
        assert_eq!(conjugate_posterior(&prior_only), (1.5, 2.0));

        let one = ConjugateOracle {
            prior_mean: 0.0,
            prior_variance: 1.0,
            data: vec![2.0],
            noise_variance: 1.0,
        };
        assert_eq!(conjugate_posterior(&one), (1.0, 0.5));

        let flat = ConjugateOracle {
            prior_mean: 0.0,
            prior_variance: 1e15,
            data: vec![1.0, 2.0, 4.0, 5.0],
            noise_variance: 1.0,
        };
        let (m, v) = conjugate_posterior(&flat);
        assert!((m - 3.0).abs() < 1e-12 && (v - 0.25).abs() < 1e-12);
    }

    #[test]
    fn fd_examples() {
        let g = finite_difference_gradient(|t| 3.0 * t[0] - 2.0 * t[1] + 1.0, &[0.4, -7.0], 0.5);
        assert!((g[0] - 3.0).abs() < 1e-12 && (g[1] + 2.0).abs() < 1e-12);
        let g = finite_difference_gradient(|t| t[0] * t[0], &[1.0], 1e-5);
        assert!((g[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn exact_chain_passes_its_own_check() {
        let oracle = ConjugateOracle {
            prior_mean: 0.0,
            prior_variance: 100.0,
            data: vec![1.0, 2.0, 1.5],
            noise_variance: 1.0,
        };
        let (_, var) = conjugate_posterior(&oracle);
        let samples = 200_000;
        let r = chain_moment_check(
            exact_posterior_chain(&oracle),
            &oracle,
            10,
            samples,
            &mut Stream::seeded(3),
        );
        assert!(!r.diverged);
        assert!(r.mean_error < 4.0 * (var / samples as f64).sqrt());
        assert!(r.var_error < 4.0 * var * (2.0 / samples as f64).sqrt());
    }

    #[test]
    fn absurd_step_is_flagged() {
        let oracle = ConjugateOracle {
            prior_mean: 0.0,
            prior_variance: 100.0,
            data: vec![1.0; 10],
            noise_variance: 1.0,
        };
        // strong convexity 1 per unit of gradient: h = 10 makes the map expand by 9x
        let chain = langevin_posterior_chain(&oracle, 10.0, 0.0).unwrap();
        let r = chain_moment_check(chain, &oracle, 1000, 1000, &mut Stream::seeded(4));
        assert!(r.diverged);
    }

    #[test]
    fn small_step_chain_tracks_posterior() {
        let mut s = Stream::seeded(5);
        let data: Vec<f64> = (0..20).map(|_| 0.5 + s.gaussian()).collect();
        let oracle = ConjugateOracle {
            prior_mean: 0.0,
            prior_variance: 100.0,
            data,
            noise_variance: 1.0,
        };
        let (mean, var) = conjugate_posterior(&oracle);
        let chain = langevin_posterior_chain(&oracle, 0.05, 0.0).unwrap();
        let r = chain_moment_check(chain, &oracle, 2_000, 100_000, &mut s);
        assert!(r.mean_error < 0.03, "{r:?} vs {mean}");
        assert!(r.relative_var_error(var) < 0.2, "{r:?} vs {var}");
    }

    #[test]
    fn gradcheck_small_run() {
        let r = gradcheck(200, 1, 1e-5).unwrap();
        assert_eq!(r.rows.len(), 200);
        assert!(r.max_rel_error < 1e-6);
    }

    #[test]
    fn probe_rejects_bad_grids() {
        let m = LinearGaussianModel::scalar(1.0).unwrap();
        let cfg = concentration_config();
        assert!(concentration_probe(&cfg, &m, &[1.0], &[10, 5], 4, 0).is_err());
        assert!(concentration_probe(&cfg, &m, &[1.0], &[], 4, 0).is_err());
        assert!(concentration_probe(&cfg, &m, &[1.0, 2.0], &[10], 4, 0).is_err());
    }

    #[test]
    fn noiseless_probe_shrinks() {
        let m = LinearGaussianModel::scalar(1e-12).unwrap();
        let cfg = TsSaConfig {
            h: 0.01,
            warmup: 50,
            ..concentration_config()
        };
        let rows = concentration_probe(&cfg, &m, &[3.0], &[50, 100, 400], 8, 2).unwrap();
        // starts at the exact warm-up mean; Langevin noise is the only error left
        assert!(rows.iter().all(|r| r.median < 0.05));
    }

    proptest! {
        #[test]
        fn incremental_posterior_equals_batch(data in prop::collection::vec(-5.0f64..5.0, 1..40)) {
            // posterior after k points used as prior for the rest
            let full = ConjugateOracle { prior_mean: 0.5, prior_variance: 3.0, data: data.clone(), noise_variance: 1.0 };
            let mut prior = (0.5, 3.0);
            for x in &data {
                let step = ConjugateOracle { prior_mean: prior.0, prior_variance: prior.1, data: vec![*x], noise_variance: 1.0 };
                prior = conjugate_posterior(&step);
            }
            let batch = conjugate_posterior(&full);
            prop_assert!((prior.0 - batch.0).abs() <= 1e-12 * (1.0 + batch.0.abs()));
            prop_assert!((prior.1 - batch.1).abs() <= 1e-12 * batch.1);
        }
    }
}

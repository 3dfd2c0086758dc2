//! Langevin proposals, stochastic-approximation averaging, and the TS-SA inner loop.
//!
//! One inner iteration is
//!
//! ```text
//! g     = mean score over the newest min(len, cap) rewards
//! omega = theta + h * g + sqrt(2h) * z          z ~ N(0, I)
//! theta = (1 - gamma) * theta + gamma * omega
//! ```
//!
//! Random draws are taken in a fixed order: all of `z` for one iteration, one
//! coordinate at a time, after the gradient has been formed.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::LinearGaussianModel;
use crate::rng::Stream;

/// `gamma(n) = c1 / (c2 * n^alpha + c3)`, clamped to at most 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaSchedule {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub alpha: f64,
}

impl Default for SaSchedule {
    fn default() -> Self {
        Self {
            c1: 144.07,
            c2: 677.88,
            c3: 40.02,
            alpha: 0.999,
        }
    }
}

impl SaSchedule {
    pub fn new(c1: f64, c2: f64, c3: f64, alpha: f64) -> Result<Self> {
        let s = Self { c1, c2, c3, alpha };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c1.is_finite()) {
            return Err(Error::config(
                "c1",
                format!("must be positive, got {}", self.c1),
            ));
        }
        if !(self.c2 >= 0.0 && self.c2.is_finite()) {
            return Err(Error::config(
                "c2",
                format!("must be nonnegative, got {}", self.c2),
            ));
        }
        if !(self.c3 >= 0.0 && self.c3.is_finite()) {
            return Err(Error::config(
                "c3",
                format!("must be nonnegative, got {}", self.c3),
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(
                "alpha",
                format!("must lie in [0, 1], got {}", self.alpha),
            ));
        }
        // n^alpha >= 1 for n >= 1, so c2 + c3 > 0 covers every n
        if self.c2 + self.c3 <= 0.0 {
            return Err(Error::config("c2", "c2 + c3 must be positive"));
        }
        Ok(())
    }

    /// Step size after `n >= 1` pulls.
    pub fn step_size(&self, n: u64) -> f64 {
        debug_assert!(n >= 1);
        let n = n.max(1) as f64;
        let raw = self.c1 / (self.c2 * n.powf(self.alpha) + self.c3);
        raw.min(1.0)
    }
}

/// Free-function form of [`SaSchedule::step_size`].
pub fn sa_step_size(schedule: &SaSchedule, n: u64) -> f64 {
    schedule.step_size(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LangevinConfig {
    /// Langevin step size `h`.
    pub step_size: f64,
    /// Inner iterations per update.
    pub inner_iters: usize,
    /// Number of newest rewards in the gradient window.
    pub batch_cap: usize,
    /// Inverse temperature of the decision sample.
    pub temperature: f64,
}

impl LangevinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::config(
                "step_size",
                format!("must be nonnegative and finite, got {}", self.step_size),
            ));
        }
        if self.inner_iters == 0 {
            return Err(Error::config("inner_iters", "must be at least 1"));
        }
        if self.batch_cap == 0 {
            return Err(Error::config("batch_cap", "must be at least 1"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config(
                "tau",
                format!("must be positive, got {}", self.temperature),
            ));
        }
        Ok(())
    }
}

/// FIFO of the newest `cap` rewards, oldest first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RewardWindow {
    buf: VecDeque<f64>,
    cap: usize,
}

impl RewardWindow {
    pub fn new(cap: usize) -> Self {
        Self {
            buf: VecDeque::with_capacity(cap),
            cap,
        }
    }

    pub fn push(&mut self, x: f64) {
        if self.cap == 0 {
            return;
        }
        if self.buf.len() == self.cap {
            self.buf.pop_front();
        }
        self.buf.push_back(x);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.cap
    }

    pub fn iter(&self) -> std::collections::vec_deque::Iter<'_, f64> {
        self.buf.iter()
    }

    pub fn newest(&self) -> Option<f64> {
        self.buf.back().copied()
    }
}

impl<'a> IntoIterator for &'a RewardWindow {
    type Item = &'a f64;
    type IntoIter = std::collections::vec_deque::Iter<'a, f64>;

    fn into_iter(self) -> Self::IntoIter {
        self.buf.iter()
    }
}

/// Mean score over the `min(len, cap)` newest rewards. `recent` is ordered oldest first.
pub fn minibatch_gradient<'a, I>(
    model: &LinearGaussianModel,
    recent: I,
    theta: &[f64],
    cap: usize,
) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a f64>,
    I::IntoIter: DoubleEndedIterator,
{
    if theta.len() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            got: theta.len(),
        });
    }
    let mut grad = vec![0.0; theta.len()];
    let mut m = 0usize;
    for &x in recent.into_iter().rev().take(cap) {
        model.accumulate_score(x, theta, &mut grad);
        m += 1;
    }
    if m == 0 {
        return Err(Error::Runtime(
            "minibatch gradient over an empty reward window".into(),
        ));
    }
    let inv = 1.0 / m as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok(grad)
}

/// `omega = theta + h * g + noise_scale * sqrt(2h) * z`.
pub fn lmc_step_scaled(
    theta: &[f64],
    gradient: &[f64],
    h: f64,
    noise_scale: f64,
    stream: &mut Stream,
) -> Vec<f64> {
    debug_assert_eq!(theta.len(), gradient.len());
    let sd = noise_scale * (2.0 * h).sqrt();
    theta
        .iter()
        .zip(gradient)
        .map(|(t, g)| t + h * g + sd * stream.gaussian())
        .collect()
}

/// One unadjusted Langevin proposal with noise `N(0, 2h I)`.
pub fn lmc_step(theta: &[f64], gradient: &[f64], h: f64, stream: &mut Stream) -> Vec<f64> {
    lmc_step_scaled(theta, gradient, h, 1.0, stream)
}

/// Convex combination `(1 - gamma) * theta + gamma * omega`.
pub fn sa_average(theta: &[f64], omega: &[f64], gamma: f64) -> Vec<f64> {
    debug_assert!(gamma > 0.0 && gamma <= 1.0);
    theta
        .iter()
        .zip(omega)
        .map(|(t, w)| (1.0 - gamma) * t + gamma * w)
        .collect()
}

/// The combined update `theta + h * gamma * g + gamma * sqrt(2h) * z` that the
/// proposal-then-average pair reduces to.
pub fn joint_update(
    theta: &[f64],
    gradient: &[f64],
    h: f64,
    gamma: f64,
    stream: &mut Stream,
) -> Vec<f64> {
    let sd = (2.0 * h).sqrt();
    theta
        .iter()
        .zip(gradient)
        .map(|(t, g)| t + h * gamma * g + gamma * (sd * stream.gaussian()))
        .collect()
}

/// Runs `cfg.inner_iters` rounds of gradient, proposal, and averaging.
pub fn ts_sa_update<'a, I>(
    theta: &[f64],
    recent: I,
    model: &LinearGaussianModel,
    cfg: &LangevinConfig,
    gamma: f64,
    stream: &mut Stream,
) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a f64> + Clone,
    I::IntoIter: DoubleEndedIterator,
{
    ts_sa_update_iters(theta, recent, model, cfg, cfg.inner_iters, gamma, stream)
}

pub(crate) fn ts_sa_update_iters<'a, I>(
    theta: &[f64],
    recent: I,
    model: &LinearGaussianModel,
    cfg: &LangevinConfig,
    iters: usize,
    gamma: f64,
    stream: &mut Stream,
) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a f64> + Clone,
    I::IntoIter: DoubleEndedIterator,
{
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::config(
            "gamma",
            format!("must lie in (0, 1], got {gamma}"),
        ));
    }
    let mut current = theta.to_vec();
    for _ in 0..iters {
        let g = minibatch_gradient(model, recent.clone(), &current, cfg.batch_cap)?;
        let omega = lmc_step(&current, &g, cfg.step_size, stream);
        current = sa_average(&current, &omega, gamma);
    }
    Ok(current)
}

/// Decision sample `theta + z / sqrt(tau * n)`.
pub fn decision_sample(theta: &[f64], n: u64, tau: f64, stream: &mut Stream) -> Vec<f64> {
    debug_assert!(n >= 1 && tau > 0.0);
    let sd = 1.0 / (tau * n as f64).sqrt();
    theta.iter().map(|t| t + sd * stream.gaussian()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_model() -> LinearGaussianModel {
        LinearGaussianModel::scalar(1.0).unwrap()
    }

    #[test]
    fn default_schedule_first_step() {
        let s = SaSchedule::default();
        let expected = 144.07 / (677.88 + 40.02);
        assert!((s.step_size(1) - expected).abs() < 1e-15);
        assert!((s.step_size(1) - 0.20068).abs() < 5e-6);
        for n in [1, 2, 10, 1000, 1_000_000] {
            let g = s.step_size(n);
            assert!(g > 0.0 && g <= 1.0);
        }
    }

    #[test]
    fn constant_schedules() {
        let s = SaSchedule::new(2.5, 0.0, 2.5, 0.7).unwrap();
        for n in [1, 5, 500] {
            assert_eq!(s.step_size(n), 1.0);
        }
        let s = SaSchedule::new(1.0, 3.0, 1.0, 0.0).unwrap();
        assert_eq!(s.step_size(1), s.step_size(12345));
        // values above one are clamped
        let s = SaSchedule::new(10.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(s.step_size(2), 1.0);
    }

    #[test]
    fn schedule_validation() {
        assert!(SaSchedule::new(0.0, 1.0, 1.0, 0.5).is_err());
        assert!(SaSchedule::new(1.0, 0.0, 0.0, 0.5).is_err());
        assert!(SaSchedule::new(1.0, 1.0, 1.0, 1.5).is_err());
        assert!(SaSchedule::new(1.0, -1.0, 3.0, 0.5).is_err());
    }

    #[test]
    fn window_keeps_newest() {
        let mut w = RewardWindow::new(3);
        for x in 1..=5 {
            w.push(x as f64);
        }
        assert_eq!(w.iter().copied().collect::<Vec<_>>(), vec![3.0, 4.0, 5.0]);
        assert_eq!(w.newest(), Some(5.0));
        let mut none = RewardWindow::new(0);
        none.push(1.0);
        assert!(none.is_empty());
    }

    #[test]
    fn minibatch_examples() {
        let m = unit_model();
        let g = minibatch_gradient(&m, &[1.0, 2.0, 3.0], &[0.0], 2).unwrap();
        assert_eq!(g, vec![2.5]);
        let g = minibatch_gradient(&m, &[1.0, 2.0, 3.0], &[0.0], 1).unwrap();
        assert_eq!(g, m.grad_log_density(3.0, &[0.0]).unwrap());
        let g = minibatch_gradient(&m, &[0.4, 0.4], &[0.4], 5).unwrap();
        assert_eq!(g, vec![0.0]);
        assert!(minibatch_gradient(&m, &[], &[0.0], 2).is_err());
        assert!(minibatch_gradient(&m, &[1.0], &[0.0, 1.0], 2).is_err());
    }

    #[test]
    fn lmc_degenerate_step() {
        let w = lmc_step(&[1.25, -2.0], &[0.0, 0.0], 1e-300, &mut Stream::seeded(0));
        assert!((w[0] - 1.25).abs() < 1e-140 && (w[1] + 2.0).abs() < 1e-140);
    }

    #[test]
    fn lmc_moments() {
        let (h, theta, g) = (0.3, 1.0, -2.0);
        let n = 100_000;
        let mut s = Stream::seeded(21);
        let draws: Vec<f64> = (0..n)
            .map(|_| lmc_step(&[theta], &[g], h, &mut s)[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target_var = 2.0 * h;
        assert!((mean - (theta + h * g)).abs() < 4.0 * (target_var / n as f64).sqrt());
        assert!((var - target_var).abs() < 4.0 * target_var * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn sa_average_examples() {
        assert_eq!(sa_average(&[0.3], &[7.0], 1.0), vec![7.0]);
        assert_eq!(sa_average(&[0.0], &[2.0], 0.5), vec![1.0]);
        assert_eq!(
            sa_average(&[1.5, -3.0], &[1.5, -3.0], 0.37),
            vec![1.5, -3.0]
        );
    }

    #[test]
    fn zero_step_leaves_theta() {
        let cfg = LangevinConfig {
            step_size: 0.0,
            inner_iters: 4,
            batch_cap: 3,
            temperature: 1.0,
        };
        let out = ts_sa_update(
            &[0.7],
            &[1.0, 5.0],
            &unit_model(),
            &cfg,
            0.3,
            &mut Stream::seeded(1),
        )
        .unwrap();
        assert_eq!(out, vec![0.7]);
    }

    #[test]
    fn single_iteration_matches_bare_update() {
        let cfg = LangevinConfig {
            step_size: 0.2,
            inner_iters: 1,
            batch_cap: 1,
            temperature: 1.0,
        };
        let m = unit_model();
        let window = [0.5, 2.0];
        let mut s1 = Stream::seeded(4);
        let mut s2 = s1.clone();
        let out = ts_sa_update(&[1.0], &window, &m, &cfg, 1.0, &mut s1).unwrap();
        let g = m.grad_log_density(2.0, &[1.0]).unwrap();
        let bare = lmc_step(&[1.0], &g, 0.2, &mut s2);
        assert_eq!(out, bare);
    }

    #[test]
    fn gamma_out_of_range_rejected() {
        let cfg = LangevinConfig {
            step_size: 0.1,
            inner_iters: 1,
            batch_cap: 1,
            temperature: 1.0,
        };
        let m = unit_model();
        assert!(ts_sa_update(&[0.0], &[1.0], &m, &cfg, 0.0, &mut Stream::seeded(0)).is_err());
        assert!(ts_sa_update(&[0.0], &[1.0], &m, &cfg, 1.5, &mut Stream::seeded(0)).is_err());
    }

    #[test]
    fn decision_sample_variance_and_determinism() {
        let (tau, n) = (0.5, 8u64);
        let count = 100_000;
        let mut s = Stream::seeded(8);
        let xs: Vec<f64> = (0..count)
            .map(|_| decision_sample(&[2.0], n, tau, &mut s)[0])
            .collect();
        let mean = xs.iter().sum::<f64>() / count as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
        let target = 1.0 / (tau * n as f64);
        assert!((var - target).abs() < 4.0 * target * (2.0 / count as f64).sqrt());

        let mut a = Stream::seeded(9);
        let mut b = a.clone();
        let first = decision_sample(&[0.0, 1.0], 3, 1.0, &mut a);
        assert_eq!(first, decision_sample(&[0.0, 1.0], 3, 1.0, &mut b));
        assert_ne!(first, decision_sample(&[0.0, 1.0], 3, 1.0, &mut a));

        let tight = decision_sample(&[2.0], u64::MAX, 1e300, &mut a);
        assert!((tight[0] - 2.0).abs() < 1e-100);
    }

    proptest! {
        #[test]
        fn sa_average_contracts_toward_proposal(
            theta in prop::collection::vec(-100.0f64..100.0, 1..4),
            shift in -50.0f64..50.0,
            gamma in 0.001f64..=1.0,
        ) {
            let omega: Vec<f64> = theta.iter().map(|t| t + shift).collect();
            let out = sa_average(&theta, &omega, gamma);
            let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let lhs = dist(&out, &omega);
            let rhs = (1.0 - gamma) * dist(&theta, &omega);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs));
        }

        #[test]
        fn one_iteration_agrees_with_joint_form_numerically(
            theta in -10.0f64..10.0,
            x in -10.0f64..10.0,
            h in 0.001f64..2.0,
            gamma in 0.001f64..=1.0,
            seed in any::<u64>(),
        ) {
            let m = unit_model();
            let cfg = LangevinConfig { step_size: h, inner_iters: 1, batch_cap: 1, temperature: 1.0 };
            let mut s1 = Stream::seeded(seed);
            let mut s2 = s1.clone();
            let a = ts_sa_update(&[theta], &[x], &m, &cfg, gamma, &mut s1).unwrap()[0];
            let g = m.grad_log_density(x, &[theta]).unwrap();
            let b = joint_update(&[theta], &g, h, gamma, &mut s2)[0];
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}

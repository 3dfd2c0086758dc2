//! Seeded trials, cross-trial aggregation, and the horizon-scaling probe.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{BanditInstance, EnvironmentKind};
use crate::error::{Error, Result};
use crate::policy::{Agent, Policy, PolicyConfig};
use crate::rng::{provision_stream, provision_substream, Stream};

/// Label that keys the shared reward streams when common random numbers are on.
const CRN_LABEL: &str = "__crn__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentSpec {
    pub kind: EnvironmentKind,
    pub arms: usize,
    pub gap: f64,
    pub mu1: f64,
    pub sigma2: f64,
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        Self {
            kind: EnvironmentKind::Sgr,
            arms: 10,
            gap: 0.5,
            mu1: 3.0,
            sigma2: 1.0,
        }
    }
}

impl EnvironmentSpec {
    pub fn build(&self) -> Result<BanditInstance> {
        BanditInstance::build(self.kind, self.arms, self.gap, self.mu1, self.sigma2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    #[serde(alias = "T")]
    pub horizon: u64,
    pub trials: usize,
    pub base_seed: u64,
    pub record_stride: u64,
    pub crn: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            horizon: 10_000,
            trials: 50,
            base_seed: 0,
            record_stride: 10,
            crn: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub directory: String,
    /// File name; `{kind}`, `{arms}`, `{gap}` and `{seed}` are substituted.
    pub csv: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            directory: "results".into(),
            csv: "regret_{kind}_K{arms}_gap{gap}.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub environment: EnvironmentSpec,
    /// Named policies in declaration order.
    pub policies: Vec<(String, PolicyConfig)>,
    pub run: RunSettings,
    pub output: OutputSpec,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let inst = self.environment.build()?;
        if self.run.trials == 0 {
            return Err(Error::config("run.trials", "must be at least 1"));
        }
        if self.run.record_stride == 0 {
            return Err(Error::config("run.record_stride", "must be at least 1"));
        }
        if self.run.horizon < inst.num_arms() as u64 {
            return Err(Error::config(
                "run.horizon",
                format!("must be at least the number of arms ({})", inst.num_arms()),
            ));
        }
        if self.policies.is_empty() {
            return Err(Error::config(
                "policy",
                "at least one [policy.<name>] section is required",
            ));
        }
        for (i, (name, cfg)) in self.policies.iter().enumerate() {
            if self.policies[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::config(
                    format!("policy.{name}"),
                    "duplicate policy name",
                ));
            }
            cfg.validate()
                .map_err(|e| prefix_key(e, &format!("policy.{name}")))?;
        }
        Ok(())
    }

    pub fn policy(&self, name: &str) -> Option<&PolicyConfig> {
        self.policies
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c)
    }

    /// Resolves the output file name pattern.
    pub fn csv_file_name(&self) -> String {
        let kind = match self.environment.kind {
            EnvironmentKind::Sgr => "sgr",
            EnvironmentKind::Mgr => "mgr",
        };
        self.output
            .csv
            .replace("{kind}", kind)
            .replace("{arms}", &self.environment.arms.to_string())
            .replace("{gap}", &self.environment.gap.to_string())
            .replace("{seed}", &self.run.base_seed.to_string())
    }
}

pub(crate) fn prefix_key(err: Error, prefix: &str) -> Error {
    match err {
        Error::Config { key, message } => Error::Config {
            key: format!("{prefix}.{key}"),
            message,
        },
        other => other,
    }
}

/// Cumulative pseudo-regret of one trial.
///
/// Warm-up pulls occupy rounds `-warmup_rounds + 1 ..= 0`; their regret is
/// folded into every recorded value so that round 1 is the first adaptive round.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub rounds: Vec<u64>,
    pub cumulative_regret: Vec<f64>,
    pub warmup_rounds: u64,
    pub warmup_regret: f64,
}

impl RegretTrace {
    pub fn final_regret(&self) -> f64 {
        self.cumulative_regret
            .last()
            .copied()
            .unwrap_or(self.warmup_regret)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTrace {
    pub rounds: Vec<u64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub trials: usize,
}

impl AggregateTrace {
    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }

    pub fn final_stderr(&self) -> f64 {
        self.stderr.last().copied().unwrap_or(0.0)
    }
}

/// Recorded rounds: every multiple of `stride` up to `horizon`, plus `horizon`.
pub fn record_grid(horizon: u64, stride: u64) -> Vec<u64> {
    let mut rounds: Vec<u64> = (1..=horizon / stride).map(|i| i * stride).collect();
    if rounds.last() != Some(&horizon) {
        rounds.push(horizon);
    }
    rounds
}

/// Where rewards come from during a trial.
#[allow(clippy::large_enum_variant)]
pub enum RewardSource {
    /// One stream per arm, so the k-th pull of an arm is policy independent.
    PerArm(Vec<Stream>),
    Single(Stream),
}

impl RewardSource {
    fn stream_for(&mut self, arm: usize) -> &mut Stream {
        match self {
            RewardSource::PerArm(v) => &mut v[arm],
            RewardSource::Single(s) => s,
        }
    }
}

/// Plays `policy` on `instance`: warm-up, then `horizon` adaptive rounds.
pub fn play(
    policy: &mut dyn Policy,
    instance: &BanditInstance,
    horizon: u64,
    record_stride: u64,
    policy_stream: &mut Stream,
    rewards: &mut RewardSource,
) -> RegretTrace {
    let k = instance.num_arms();
    let warmup = policy.warmup();
    let mut warmup_regret = 0.0;
    for _ in 0..warmup {
        for arm in 0..k {
            let (x, inc) = instance.pull(arm, rewards.stream_for(arm));
            warmup_regret += inc;
            policy.update(arm, x, policy_stream);
        }
    }
    policy.end_warmup();
    let warmup_rounds = (warmup * k) as u64;

    let grid = record_grid(horizon, record_stride);
    let mut cumulative = Vec::with_capacity(grid.len());
    let mut next = 0;
    let mut total = warmup_regret;
    for t in 1..=horizon {
        let arm = policy.select_arm(warmup_rounds + t, policy_stream);
        let (x, inc) = instance.pull(arm, rewards.stream_for(arm));
        total += inc;
        policy.update(arm, x, policy_stream);
        if grid.get(next) == Some(&t) {
            cumulative.push(total);
            next += 1;
        }
    }
    RegretTrace {
        rounds: grid,
        cumulative_regret: cumulative,
        warmup_rounds,
        warmup_regret,
    }
}

fn reward_source(run: &RunSettings, policy_name: &str, trial: u64, arms: usize) -> RewardSource {
    let label = if run.crn { CRN_LABEL } else { policy_name };
    RewardSource::PerArm(
        (0..arms as u64)
            .map(|a| provision_substream(run.base_seed, label, trial, a))
            .collect(),
    )
}

/// Runs trial `trial_index` of `policy_name`. Streams depend only on
/// `(base_seed, policy_name, trial_index)`.
pub fn run_trial(
    spec: &ExperimentSpec,
    policy_name: &str,
    trial_index: usize,
) -> Result<RegretTrace> {
    let cfg = spec
        .policy(policy_name)
        .ok_or_else(|| Error::config(format!("policy.{policy_name}"), "no such policy"))?;
    let instance = spec.environment.build()?;
    run_trial_on(&instance, cfg, policy_name, &spec.run, trial_index)
}

pub(crate) fn run_trial_on(
    instance: &BanditInstance,
    cfg: &PolicyConfig,
    policy_name: &str,
    run: &RunSettings,
    trial_index: usize,
) -> Result<RegretTrace> {
    let trial = trial_index as u64;
    let mut policy_stream = provision_stream(run.base_seed, policy_name, trial);
    let features: Vec<Vec<f64>> = instance.arms().iter().map(|a| a.feature()).collect();
    let mut agent = Agent::new(cfg, &features, run.horizon, &mut policy_stream)?;
    let mut rewards = reward_source(run, policy_name, trial, instance.num_arms());
    Ok(play(
        &mut agent,
        instance,
        run.horizon,
        run.record_stride,
        &mut policy_stream,
        &mut rewards,
    ))
}

/// Mean and standard error per recorded round. The result does not depend on
/// the order of `traces`.
pub fn aggregate(traces: &[RegretTrace]) -> Result<AggregateTrace> {
    let first = traces
        .first()
        .ok_or_else(|| Error::Runtime("cannot aggregate zero traces".into()))?;
    if traces.iter().any(|t| t.rounds != first.rounds) {
        return Err(Error::Runtime("traces have different round grids".into()));
    }
    let n = traces.len();
    let mut mean = Vec::with_capacity(first.rounds.len());
    let mut stderr = Vec::with_capacity(first.rounds.len());
    let mut column = vec![0.0; n];
    for i in 0..first.rounds.len() {
        for (c, t) in column.iter_mut().zip(traces) {
            *c = t.cumulative_regret[i];
        }
        column.sort_by(f64::total_cmp);
        let m = column.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let ss = column.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
            (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        mean.push(m);
        stderr.push(se);
    }
    Ok(AggregateTrace {
        rounds: first.rounds.clone(),
        mean,
        stderr,
        trials: n,
    })
}

fn with_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Runtime(format!("thread pool: {e}")))
            .map(|pool| pool.install(job)),
        None => Ok(job()),
    }
}

/// Runs every trial of one policy on at most `threads` workers.
pub fn run_policy_trials(
    spec: &ExperimentSpec,
    policy_name: &str,
    threads: Option<usize>,
) -> Result<Vec<RegretTrace>> {
    let cfg = spec
        .policy(policy_name)
        .ok_or_else(|| Error::config(format!("policy.{policy_name}"), "no such policy"))?;
    let instance = spec.environment.build()?;
    with_pool(threads, || {
        (0..spec.run.trials)
            .into_par_iter()
            .map(|i| run_trial_on(&instance, cfg, policy_name, &spec.run, i))
            .collect::<Result<Vec<_>>>()
    })?
}

/// Runs all policies and aggregates each across its trials.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<(String, AggregateTrace)>> {
    run_experiment_with_threads(spec, None)
}

pub fn run_experiment_with_threads(
    spec: &ExperimentSpec,
    threads: Option<usize>,
) -> Result<Vec<(String, AggregateTrace)>> {
    spec.validate()?;
    spec.policies
        .iter()
        .map(|(name, _)| {
            let traces = run_policy_trials(spec, name, threads)?;
            Ok((name.clone(), aggregate(&traces)?))
        })
        .collect()
}

/// Final mean regret of `policy_name` at each horizon, one full experiment per horizon.
pub fn regret_scaling_probe(
    template: &ExperimentSpec,
    policy_name: &str,
    horizons: &[u64],
    threads: Option<usize>,
) -> Result<Vec<(u64, f64)>> {
    if horizons.len() < 3 || horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(
            "horizons",
            "need at least three strictly increasing horizons",
        ));
    }
    horizons
        .iter()
        .map(|&t| {
            let mut spec = template.clone();
            spec.run.horizon = t;
            let traces = run_policy_trials(&spec, policy_name, threads)?;
            Ok((t, aggregate(&traces)?.final_mean()))
        })
        .collect()
}

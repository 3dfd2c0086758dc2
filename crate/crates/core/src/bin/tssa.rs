use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tssa_core::config::{parse_config, set_key_path, spec_from_table, to_toml_string};
use tssa_core::diagnostics::{
    concentration_config, concentration_probe, conjugate_check, gradcheck,
};
use tssa_core::output::{format_g6, write_csv};
use tssa_core::{run_experiment_with_threads, Error, ExperimentSpec, LinearGaussianModel, Result};

/// Bandit experiments with TS-SA and baseline policies.
#[derive(Parser)]
#[command(name = "tssa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every policy in a config and write the regret CSV.
    Run {
        config: PathBuf,
        /// Overrides run.base_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// CSV path; defaults to output.directory joined with output.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sampler and gradient diagnostics.
    Diag {
        #[command(subcommand)]
        probe: Probe,
    },
    /// One-dimensional sweep over a config key; writes one CSV per value.
    Sweep {
        config: PathBuf,
        /// Dotted key path, e.g. policy.ts_sa.warmup.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Restrict the run to this policy.
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to output.directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Validate a config and print it with every default filled in.
    Check { config: PathBuf },
}

#[derive(Subcommand)]
enum Probe {
    /// Analytic Gaussian score against central differences.
    Gradcheck {
        #[arg(long, default_value_t = 1000)]
        tuples: usize,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        #[command(flatten)]
        common: DiagArgs,
    },
    /// Langevin chain moments against the conjugate posterior.
    Conjugate {
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 1.5)]
        data_mean: f64,
        #[arg(long, default_value_t = 0.01)]
        h: f64,
        #[arg(long, default_value_t = 10_000)]
        burn_in: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[command(flatten)]
        common: DiagArgs,
    },
    /// Estimation error of a single pulled arm against pull count.
    Concentration {
        #[arg(long, value_delimiter = ',', default_value = "100,200,400,800")]
        grid: Vec<u64>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[command(flatten)]
        common: DiagArgs,
    },
}

#[derive(Args)]
struct DiagArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write per-item detail here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn threads() -> Result<Option<usize>> {
    match std::env::var("BANDIT_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n >= 1)
            .map(Some)
            .ok_or_else(|| {
                Error::config(
                    "BANDIT_THREADS",
                    format!("expected a positive integer, got `{v}`"),
                )
            }),
        _ => Ok(None),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let io = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, text).map_err(io)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn run_and_write(spec: &ExperimentSpec, out: &Path) -> Result<()> {
    let aggregates = run_experiment_with_threads(spec, threads()?)?;
    write_csv(&aggregates, out)?;
    for (name, agg) in &aggregates {
        println!(
            "{name}: final regret {} +- {} over {} trials",
            format_g6(agg.final_mean()),
            format_g6(agg.final_stderr()),
            agg.trials
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn default_out(spec: &ExperimentSpec, dir: Option<&Path>) -> PathBuf {
    let dir = dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&spec.output.directory));
    dir.join(spec.csv_file_name())
}

/// Returns whether the probe passed.
fn diag(probe: Probe) -> Result<bool> {
    match probe {
        Probe::Gradcheck {
            tuples,
            tolerance,
            common,
        } => {
            let r = gradcheck(tuples, common.seed, 1e-5)?;
            let pass = r.max_rel_error < tolerance;
            println!(
                "gradcheck {}: max relative error {:e} over {} tuples (tolerance {:e})",
                verdict(pass),
                r.max_rel_error,
                r.tuples,
                tolerance
            );
            if let Some(p) = common.csv {
                let mut text = String::from("x,theta,feature,noise_variance,rel_error\n");
                for row in &r.rows {
                    let join = |v: &[f64]| {
                        v.iter()
                            .map(|x| x.to_string())
                            .collect::<Vec<_>>()
                            .join(" ")
                    };
                    text.push_str(&format!(
                        "{},{},{},{},{:e}\n",
                        row.x,
                        join(&row.theta),
                        join(&row.feature),
                        row.noise_variance,
                        row.rel_error
                    ));
                }
                write_text(&p, &text)?;
            }
            Ok(pass)
        }
        Probe::Conjugate {
            n,
            data_mean,
            h,
            burn_in,
            samples,
            common,
        } => {
            let c = conjugate_check(n, data_mean, h, burn_in, samples, common.seed)?;
            let pass =
                !c.report.diverged && c.report.mean_error < 0.02 && c.relative_var_error() < 0.2;
            if c.report.diverged {
                println!("conjugate FAIL: chain diverged");
            } else {
                println!(
                    "conjugate {}: mean {} vs {} (error {:e}), variance {} vs {} (relative error {:.3})",
                    verdict(pass),
                    c.report.mean,
                    c.posterior_mean,
                    c.report.mean_error,
                    c.report.variance,
                    c.posterior_variance,
                    c.relative_var_error()
                );
            }
            if let Some(p) = common.csv {
                let text = format!(
                    "quantity,chain,posterior\nmean,{},{}\nvariance,{},{}\n",
                    c.report.mean, c.posterior_mean, c.report.variance, c.posterior_variance
                );
                write_text(&p, &text)?;
            }
            Ok(pass)
        }
        Probe::Concentration {
            grid,
            trials,
            theta,
            common,
        } => {
            let model = LinearGaussianModel::scalar(1.0)?;
            let rows = concentration_probe(
                &concentration_config(),
                &model,
                &[theta],
                &grid,
                trials,
                common.seed,
            )?;
            let ratios: Vec<f64> = rows.windows(2).map(|w| w[0].median / w[1].median).collect();
            let within = ratios.iter().filter(|r| (1.2..=1.7).contains(*r)).count();
            let pass = 2 * within >= ratios.len();
            println!(
                "concentration {}: {} of {} consecutive median ratios in [1.2, 1.7]: {:?}",
                verdict(pass),
                within,
                ratios.len(),
                ratios.iter().map(|r| format_g6(*r)).collect::<Vec<_>>()
            );
            let mut text = String::from("pulls,median,q10,q90,mean\n");
            for r in &rows {
                text.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.pulls,
                    format_g6(r.median),
                    format_g6(r.q10),
                    format_g6(r.q90),
                    format_g6(r.mean)
                ));
            }
            match common.csv {
                Some(p) => write_text(&p, &text)?,
                None => print!("{text}"),
            }
            Ok(pass)
        }
    }
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut spec = parse_config(&config)?;
            if let Some(s) = seed {
                spec.run.base_seed = s;
            }
            let out = out.unwrap_or_else(|| default_out(&spec, None));
            run_and_write(&spec, &out)?;
            Ok(true)
        }
        Command::Diag { probe } => diag(probe),
        Command::Sweep {
            config,
            param,
            values,
            policy,
            seed,
            out_dir,
        } => {
            let text = std::fs::read_to_string(&config).map_err(|source| Error::Io {
                path: config.display().to_string(),
                source,
            })?;
            let base: toml::Table = text.parse()?;
            let leaf = param.rsplit('.').next().unwrap_or(&param).to_string();
            // validate every point before running any
            let mut specs = Vec::with_capacity(values.len());
            for v in &values {
                let mut doc = base.clone();
                set_key_path(&mut doc, &param, v)?;
                let mut spec = spec_from_table(&doc)?;
                if let Some(name) = &policy {
                    spec.policies.retain(|(n, _)| n == name);
                    if spec.policies.is_empty() {
                        return Err(Error::config(format!("policy.{name}"), "no such policy"));
                    }
                }
                if let Some(s) = seed {
                    spec.run.base_seed = s;
                }
                specs.push((v, spec));
            }
            for (v, spec) in specs {
                let stem = spec.csv_file_name();
                let stem = stem.strip_suffix(".csv").unwrap_or(&stem);
                let file = format!("{stem}_{leaf}{}.csv", v.trim());
                let dir = out_dir
                    .clone()
                    .unwrap_or_else(|| PathBuf::from(&spec.output.directory));
                println!("{param} = {}", v.trim());
                run_and_write(&spec, &dir.join(file))?;
            }
            Ok(true)
        }
        Command::Check { config } => {
            let spec = parse_config(&config)?;
            print!("{}", to_toml_string(&spec)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        // a diagnostic ran to completion but missed its tolerance
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

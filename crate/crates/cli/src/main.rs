//! `avgrl`: validate assumptions, solve oracles, train, sweep and fit rates.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use avgrl_core::error::Error;
use avgrl_core::harness::{
    self, load_theta, mean_over_runs, read_metric_column, sidecar_path, MetricsWriter, RunConfig, Sidecar,
    ValidationOptions,
};
use avgrl_core::learner::{run_with, Algorithm};
use avgrl_core::DVector;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "avgrl", version, about = "Average-reward critic-actor with exact oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check Assumptions 1–3 and the step-size constants.
    Validate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 20)]
        policy_samples: usize,
        /// Standard deviation of the sampled θ.
        #[arg(long, default_value_t = 1.0)]
        theta_scale: f64,
        #[arg(long, default_value_t = 200)]
        horizon: usize,
        /// Write the JSON report here (`-` for stdout instead of the summary).
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run one learner and write a metrics CSV plus a JSON sidecar.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run seeds 0..N in parallel; writes seed_<k>.csv and aggregate.csv.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the decay exponent of a metric across one or more CSV files.
    Rate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, default_value = "critic_err_sq")]
        metric: String,
        #[arg(long, default_value_t = 0.0)]
        t_min: f64,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Dump exact oracle quantities at one θ as JSON.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// JSON array (or `{"theta": [...]}`); zero when omitted.
        #[arg(long)]
        theta: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        horizon: usize,
    },
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// key=value or JSON file with any of the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in name (easy4, frozen_lake_4x4, two_cycle, garnet:n:a:b:eps:seed) or JSON path.
    #[arg(long)]
    env: Option<String>,
    /// one_hot_reduced, tabular_centered, random_unit:<d>, one_hot_full, env, or a JSON path.
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    feature_seed: Option<u64>,
    /// ca, ac or stac.
    #[arg(long)]
    algo: Option<Algorithm>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    c_alpha: Option<f64>,
    #[arg(long)]
    c_beta: Option<f64>,
    #[arg(long)]
    c_gamma: Option<f64>,
    /// Sets c_gamma = K * c_alpha.
    #[arg(long)]
    k_coupling: Option<f64>,
    /// Critic projection radius U_v.
    #[arg(long)]
    uv: Option<f64>,
    #[arg(long)]
    theta_radius: Option<f64>,
    /// Relative amplitude of bounded zero-mean reward noise, in [0, 1].
    #[arg(long)]
    reward_noise: Option<f64>,
    #[arg(long)]
    metrics_every: Option<u64>,
}

impl RunArgs {
    fn config(&self) -> anyhow::Result<RunConfig> {
        let flags = RunConfig {
            algo: self.algo,
            env: self.env.clone(),
            features: self.features.clone(),
            feature_seed: self.feature_seed,
            steps: self.steps,
            seed: self.seed,
            nu: self.nu,
            sigma: self.sigma,
            c_alpha: self.c_alpha,
            c_beta: self.c_beta,
            c_gamma: self.c_gamma,
            k_coupling: self.k_coupling,
            uv: self.uv,
            theta_radius: self.theta_radius,
            reward_noise: self.reward_noise,
            metrics_every: self.metrics_every,
            ..Default::default()
        };
        Ok(match &self.config {
            Some(path) => RunConfig::load(path)
                .with_context(|| format!("reading config {}", path.display()))?
                .merged(&flags),
            None => flags,
        })
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    if path == Path::new("-") {
        print!("{text}");
    } else {
        std::fs::write(path, text).map_err(Error::from).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn pass_fail(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn cmd_validate(
    run: &RunArgs,
    policy_samples: usize,
    theta_scale: f64,
    horizon: usize,
    json: Option<&Path>,
) -> anyhow::Result<ExitCode> {
    let cfg = run.config()?;
    let resolved = cfg.resolve()?;
    let opts = ValidationOptions {
        policy_samples,
        theta_scale,
        seed: resolved.settings.seed,
        mixing_horizon: horizon,
        critic_radius: cfg.uv,
    };
    let report = harness::validate(&resolved.problem, &resolved.settings.schedule, resolved.settings.algo, &opts)?;
    let to_stdout = json.is_some_and(|p| p == Path::new("-"));
    if !to_stdout {
        let titles = ["", "bounded features", "negative-definite A", "uniform ergodicity"];
        for v in &report.verdicts {
            println!("Assumption {} ({}): {}  {}", v.assumption, titles[v.assumption as usize], pass_fail(v.pass), v.detail);
        }
        if let Some(r) = &report.report {
            let c = &r.constants;
            println!(
                "constants: B = {:.4}, K = {:.4}, L = {:.4}, U_r = {:.4}, U_v = {:.4}, U_v_bar = {:.4} (estimate), G = {:.4}, U_w = {:.4}",
                c.score_bound, c.score_smoothness, c.policy_lipschitz, c.u_r, c.u_v, c.u_v_bar, c.g, c.u_w
            );
            if let Some(m) = r.mixing.as_ref().filter(|m| m.error.is_none()) {
                let taus: Vec<String> = m.tau.iter().map(|(t, tau)| format!("tau({t}) = {tau}")).collect();
                println!("mixing: {}", taus.join(", "));
            }
        }
        if let Some(s) = &report.schedule {
            println!(
                "schedule: finite_time_ok = {}, asymptotic_ok = {}, c_alpha/c_gamma = {:.4} (bound {:.4e})",
                s.finite_time_ok, s.asymptotic_ok, s.ratio, s.ratio_bound
            );
        }
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
    }
    if let Some(path) = json {
        write_json(path, &report)?;
    }
    Ok(if report.all_pass() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_train(run: &RunArgs, out: Option<&Path>) -> anyhow::Result<ExitCode> {
    let mut cfg = run.config()?;
    if let Some(out) = out {
        cfg.out = Some(out.to_path_buf());
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("metrics.csv"));
    let resolved = cfg.resolve()?;
    if !resolved.settings.schedule.finite_time_ok() {
        eprintln!("warning: schedule violates the finite-time exponent conditions");
    }
    let mut writer = MetricsWriter::create(&out).with_context(|| format!("creating {}", out.display()))?;
    let output = run_with(&resolved.problem, &resolved.settings, |row| writer.write(row))?;
    writer.finish()?;
    Sidecar::new(&cfg, output.critic_radius, &output.final_state).write(&sidecar_path(&out))?;
    if let Some(last) = output.rows.last() {
        eprintln!("t = {}: L(theta) = {:.6}, critic_err_sq = {:.3e}", last.t, last.l_theta, last.critic_err_sq);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(run: &RunArgs, seeds: Option<usize>, jobs: Option<usize>, out: Option<&Path>) -> anyhow::Result<ExitCode> {
    let mut cfg = run.config()?;
    cfg.seeds = seeds.or(cfg.seeds);
    cfg.jobs = jobs.or(cfg.jobs);
    if let Some(out) = out {
        cfg.out = Some(out.to_path_buf());
    }
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("sweep"));
    let resolved = cfg.resolve()?;
    let jobs = cfg.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let runs = harness::run_sweep(&resolved.problem, &resolved.settings, cfg.seeds.unwrap_or(10), jobs)?;
    let failed = harness::write_sweep(&dir, &runs)?;
    for (seed, err) in &failed {
        eprintln!("seed {seed} failed: {err}");
    }
    eprintln!("{} of {} seeds written to {}", runs.len() - failed.len(), runs.len(), dir.display());
    Ok(if failed.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_rate(files: &[PathBuf], metric: &str, t_min: f64, t_max: Option<f64>, json: bool) -> anyhow::Result<ExitCode> {
    let columns = files
        .iter()
        .map(|f| read_metric_column(f, metric).with_context(|| format!("reading {}", f.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let fit = harness::fit_rate(&mean_over_runs(&columns)?, t_min, t_max)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&fit)?);
    } else {
        println!("{metric}: slope {:.4}, R^2 {:.4}, {} rows", fit.slope, fit.r_squared, fit.rows);
        for (t, v) in &fit.decades {
            println!("  t = {t}: {v:.6e}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(run: &RunArgs, theta: Option<&Path>, horizon: usize) -> anyhow::Result<ExitCode> {
    let resolved = run.config()?.resolve()?;
    let dim = resolved.problem.actor.dim();
    let theta = match theta {
        Some(path) => load_theta(path, dim).with_context(|| format!("reading {}", path.display()))?,
        None => DVector::zeros(dim),
    };
    write_json(Path::new("-"), &harness::solve_dump(&resolved.problem, &theta, horizon)?)?;
    Ok(ExitCode::SUCCESS)
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) if !e.is_input_error() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { run, policy_samples, theta_scale, horizon, json } => {
            cmd_validate(run, *policy_samples, *theta_scale, *horizon, json.as_deref())
        }
        Command::Train { run, out } => cmd_train(run, out.as_deref()),
        Command::Sweep { run, seeds, jobs, out } => cmd_sweep(run, *seeds, *jobs, out.as_deref()),
        Command::Rate { files, metric, t_min, t_max, json } => cmd_rate(files, metric, *t_min, *t_max, *json),
        Command::Solve { run, theta, horizon } => cmd_solve(run, theta.as_deref(), *horizon),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

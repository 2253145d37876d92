//! `iodm` command line.
//!
//! Exit codes: 0 success, 1 runtime error, 2 validation failure, 64 usage.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::calibration::{run_calibration, CalibrationFamily, CalibrationSpec};
use super::config::{parse_count, ExperimentConfig};
use super::experiment::{curve_schedule, execute, summary_text, write_outputs};
use super::report::compare_to_complexity;
use super::validate::validate_config;
use super::fmt_f64;
use crate::complexity::{complexity_curve, linear_bandit_allocation, solve_complexity};
use crate::error::{Error, Result};
use crate::families::Params;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Parser, Debug)]
#[command(name = "iodm", version, about = "Instance-optimal decision making: allocation program, Test-to-Commit and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of seeds (overrides `seeds`).
    #[arg(long)]
    seeds: Option<usize>,
    /// Worker threads (overrides `threads`).
    #[arg(long)]
    threads: Option<usize>,
    /// Horizon or cap; scientific notation such as `1e6` is accepted.
    #[arg(long, value_parser = parse_count)]
    n: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configured experiment and write runs.csv, checkpoints.csv and summary.txt.
    Run(Common),
    /// Solve C(f, n) for the configured truth.
    Complexity(Common),
    /// Solve C(f, n) over a schedule of caps.
    Curve {
        #[command(flatten)]
        common: Common,
        /// Comma-separated caps; defaults to 1e2, 1e3, ... up to n.
        #[arg(long)]
        schedule: Option<String>,
    },
    /// Monte-Carlo false-accept and false-reject rates of the likelihood-ratio test.
    TestCalibration(CalibrationArgs),
    /// Check divergence and solver invariants over the configured family.
    Validate(Common),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CalFamily {
    Gaussian,
    Bernoulli,
}

#[derive(Args, Debug)]
struct CalibrationArgs {
    /// Test threshold c.
    #[arg(long, default_value_t = 1000f64.ln())]
    c: f64,
    #[arg(long, default_value_t = 100_000, value_parser = parse_count)]
    trials: usize,
    /// Observations per trial.
    #[arg(long, default_value_t = 50, value_parser = parse_count)]
    m: usize,
    /// Mean shift of P relative to Q. Defaults to sqrt(2c/m), the shift
    /// that maximises the Gaussian false-accept rate.
    #[arg(long)]
    shift: Option<f64>,
    /// λ for the power bound (Rényi order 1 − λ).
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "gaussian")]
    family: CalFamily,
    #[arg(long)]
    threads: Option<usize>,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    ExperimentConfig::from_file(&common.config)?.with_overrides(
        common.n,
        common.seeds,
        common.threads,
        common.out.clone(),
    )
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Solver(format!("thread pool: {e}")))
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",")
}

fn cmd_run(common: &Common, out: &mut dyn Write) -> Result<i32> {
    let config = load(common)?;
    let output = execute(&config)?;
    write_outputs(&config, &output, &config.out)?;
    let a = &output.aggregate;
    write_text(out, &summary_text(a))?;
    if let Some(alloc) = pool(config.threads)?.install(|| -> Result<_> {
        let (family, _) = config.build_family()?;
        let f = family.instance(a.instance_id);
        Ok(solve_complexity(f, &family, a.effective_budget)?.into_allocation())
    })? {
        write_text(out, &compare_to_complexity(a, &alloc).to_string())?;
    }
    write_text(out, &format!("out={}\n", config.out.display()))?;
    Ok(EXIT_OK)
}

fn cmd_complexity(common: &Common, out: &mut dyn Write) -> Result<i32> {
    let config = load(common)?;
    let cap = config.n as f64;
    let (text, csv) = pool(config.threads)?.install(|| -> Result<(String, Option<(usize, String)>)> {
        let start = Instant::now();
        let (family, _) = config.build_family()?;
        let truth = config.truth_index(&family)?;
        let sol = solve_complexity(family.instance(truth), &family, cap)?;
        let elapsed = start.elapsed().as_millis();
        let mut text = format!("instance_id={truth}\nn={}\nfamily_size={}\n", fmt_f64(cap), family.len());
        let mut row = None;
        match sol.allocation() {
            Some(a) => {
                text += &format!(
                    "feasible=true\nobjective={}\nweights={}\nbinding_alternatives={}\niterations={}\ncap_binds={}\n",
                    fmt_f64(a.objective),
                    join(&a.weights),
                    a.binding_alternatives.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","),
                    a.iterations,
                    a.cap_binds
                );
                row = Some(format!("{truth},{},{},{}\n", fmt_f64(cap), fmt_f64(a.objective), join(&a.weights)));
            }
            None => text += "feasible=false\n",
        }
        if let Params::LinearBandit(template) = &config.template {
            let p = match family.instance(truth).model() {
                crate::families::Model::LinearBandit(p) => p.clone(),
                _ => template.clone(),
            };
            text += &format!("linear_program_objective={}\n", fmt_f64(linear_bandit_allocation(&p, cap)?.value()));
        }
        text += &format!("wall_time_ms={elapsed}\n");
        Ok((text, row.map(|r| (family.num_decisions(), r))))
    })?;
    write_text(out, &text)?;
    if let (Some(dir), Some((k, row))) = (&common.out, csv) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let header: Vec<String> = (0..k).map(|i| format!("w_{i}")).collect();
        let path = dir.join("complexity.csv");
        std::fs::write(&path, format!("instance_id,n,objective,{}\n{row}", header.join(",")))
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(EXIT_OK)
}

fn cmd_curve(common: &Common, schedule: Option<&str>, out: &mut dyn Write) -> Result<i32> {
    let config = load(common)?;
    let caps = match schedule {
        Some(s) => s
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| Error::Config(vec![format!("schedule: `{x}` is not a number")])))
            .collect::<Result<Vec<_>>>()?,
        None => curve_schedule(config.n),
    };
    let text = pool(config.threads)?.install(|| -> Result<String> {
        let (family, _) = config.build_family()?;
        let truth = config.truth_index(&family)?;
        let curve = complexity_curve(family.instance(truth), &family, &caps)?;
        let mut text = format!("instance_id={truth}\n");
        for (n, c) in &curve.points {
            text += &format!("n={} complexity={}\n", fmt_f64(*n), fmt_f64(*c));
        }
        text += &format!("limit_estimate={}\n", fmt_f64(curve.limit_estimate));
        Ok(text)
    })?;
    write_text(out, &text)?;
    Ok(EXIT_OK)
}

fn cmd_calibration(args: &CalibrationArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = CalibrationSpec {
        family: match args.family {
            CalFamily::Gaussian => CalibrationFamily::Gaussian,
            CalFamily::Bernoulli => CalibrationFamily::Bernoulli,
        },
        c: args.c,
        trials: args.trials,
        m: args.m,
        shift: args.shift.unwrap_or_else(|| (2.0 * args.c / args.m as f64).sqrt()),
        lambda: args.lambda,
        seed: args.seed,
    };
    let threads = args.threads.unwrap_or_else(rayon::current_num_threads);
    let r = pool(threads)?.install(|| run_calibration(&spec))?;
    let text = format!(
        "c={}\ntrials={}\nm={}\nshift={}\nlambda={}\nbeta={}\n\
         false_accept_rate={}\nfalse_accept_bound={}\nfalse_accept_sigma={}\nfalse_accept_within_3sigma={}\n\
         false_reject_rate={}\nfalse_reject_bound={}\nfalse_reject_sigma={}\nfalse_reject_within_3sigma={}\n",
        fmt_f64(spec.c),
        spec.trials,
        spec.m,
        fmt_f64(spec.shift),
        fmt_f64(spec.lambda),
        fmt_f64(r.beta),
        fmt_f64(r.false_accept_rate),
        fmt_f64(r.false_accept_bound),
        fmt_f64(r.false_accept_sigma),
        r.false_accept_within(3.0),
        fmt_f64(r.false_reject_rate),
        fmt_f64(r.false_reject_bound),
        fmt_f64(r.false_reject_sigma),
        r.false_reject_within(3.0),
    );
    write_text(out, &text)?;
    Ok(EXIT_OK)
}

fn cmd_validate(common: &Common, out: &mut dyn Write) -> Result<i32> {
    let config = load(common)?;
    let report = pool(config.threads)?.install(|| validate_config(&config))?;
    write_text(out, &report.to_string())?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_VALIDATION })
}

fn write_text(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

/// Parse `argv` (including the program name) and run the subcommand.
pub fn cli_main<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c, out),
        Command::Complexity(c) => cmd_complexity(c, out),
        Command::Curve { common, schedule } => cmd_curve(common, schedule.as_deref(), out),
        Command::TestCalibration(a) => cmd_calibration(a, out),
        Command::Validate(c) => cmd_validate(c, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::Config(_) => EXIT_VALIDATION,
                _ => EXIT_RUNTIME,
            }
        }
    }
}


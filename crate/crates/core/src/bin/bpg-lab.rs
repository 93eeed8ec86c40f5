use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bpg_lab::envs::Lqr;
use bpg_lab::harness::{
    self, grad_compare_csv, optimize_csv, presets, run_grad_compare, run_optimize, write_output,
    ExperimentConfig, RawConfig,
};
use bpg_lab::oracles::{lqr_mc_reference, write_fixture};
use bpg_lab::policies::LqrGaussian;
use bpg_lab::Result;

#[derive(Parser)]
#[command(
    name = "bpg-lab",
    version,
    about = "Bayesian policy-gradient experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare gradient estimators on shared samples.
    GradCompare(RunArgs),
    /// Run policy optimization and record learning curves.
    Optimize(RunArgs),
    /// List or print the built-in presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Regenerate the frozen Monte-Carlo LQR gradient reference.
    Fixture {
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 20_070_101)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// One line per preset: name, command, description.
    List,
    /// Print a preset's configuration text.
    Show { name: String },
}

#[derive(Args)]
struct RunArgs {
    /// Config file, or `preset:<name>`.
    #[arg(long)]
    config: String,
    /// Master seed; every stream is derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Multiply repetitions by ten.
    #[arg(long)]
    paper_scale: bool,
    /// Natural-gradient actor updates.
    #[arg(long)]
    natural: bool,
    /// Fisher estimate: analytic, mc, state-action-avg, g-est or ml.
    #[arg(long)]
    fisher: Option<String>,
    /// Sparsification threshold for the sparse estimators.
    #[arg(long)]
    tau: Option<f64>,
    /// GPTD observation-noise variance.
    #[arg(long = "gptd-sigma")]
    gptd_sigma2: Option<f64>,
    /// Extra `key=value` overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let text = match args.config.strip_prefix("preset:") {
        Some(name) => presets::find(name)?.text.to_string(),
        None => fs::read_to_string(&args.config)?,
    };
    let mut raw = RawConfig::parse(&text)?;
    if let Some(seed) = args.seed {
        raw.set("seed", &seed.to_string());
    }
    if args.natural {
        raw.set("natural", "true");
    }
    if let Some(f) = &args.fisher {
        raw.set("fisher", f);
    }
    if let Some(t) = args.tau {
        raw.set("tau", &t.to_string());
    }
    if let Some(s) = args.gptd_sigma2 {
        raw.set("gptd_sigma2", &s.to_string());
    }
    for o in &args.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| bpg_lab::Error::Config {
            field: o.clone(),
            message: "expected KEY=VALUE".into(),
        })?;
        // parse the single line to reject unknown keys
        RawConfig::parse(&format!("{k} = {v}"))?;
        raw.set(k.trim(), v.trim());
    }
    let mut cfg = ExperimentConfig::from_raw(raw)?;
    if args.paper_scale {
        harness::paper_scale(&mut cfg);
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn emit(cfg: &ExperimentConfig, csv: &str) -> Result<()> {
    match &cfg.out {
        Some(path) => write_output(path, csv),
        None => to_stdout(csv),
    }
}

/// Writes to stdout; a reader closing the pipe early is not an error.
fn to_stdout(text: &str) -> Result<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GradCompare(args) => {
            let cfg = load_config(&args)?;
            emit(&cfg, &grad_compare_csv(&run_grad_compare(&cfg)?))
        }
        Command::Optimize(args) => {
            let cfg = load_config(&args)?;
            emit(&cfg, &optimize_csv(&run_optimize(&cfg)?))
        }
        Command::Presets { action } => {
            let text = match action {
                PresetAction::List => presets::PRESETS
                    .iter()
                    .map(|p| format!("{:<12} {:<13} {}\n", p.name, p.command, p.description))
                    .collect(),
                PresetAction::Show { name } => presets::find(&name)?.text.to_string(),
            };
            to_stdout(&text)
        }
        Command::Fixture { samples, seed, out } => {
            let rows = lqr_mc_reference(
                &Lqr::default(),
                &LqrGaussian::direct(),
                &nalgebra::DVector::from_vec(vec![-0.2, 1.0]),
                samples,
                seed,
            )?;
            write_fixture(&out, &rows)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

//! Command-line front end.
//!
//! Exit status: 0 on success or a passed check, 2 when a statistical check
//! fails, 1 on any execution error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use saddle_core::harness::config::parse_emit_list;
use saddle_core::harness::emit::{emit_divergence, emit_experiment};
use saddle_core::harness::presets::preset_description;
use saddle_core::harness::{
    clt_check, divergence_demo, run_experiment, DivergenceConfig, EmitKind, ExperimentOutcome,
    Overrides, PartialConfig, PRESET_NAMES,
};
use saddle_core::{Result, SaddleError};

#[derive(Parser)]
#[command(name = "saddle", version, about = "Stochastic extra-gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts.
    Run(ExperimentArgs),
    /// Run an experiment and test the averaged iterates against the normal limit.
    CltCheck(ExperimentArgs),
    /// Compare SGDA and SEG on the ramp game.
    DivergenceDemo(DivergenceArgs),
    /// List built-in presets.
    Presets,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of csv,json,svg.
    #[arg(long, value_delimiter = ',', value_parser = parse_emit)]
    emit: Option<Vec<EmitKind>>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    preset: Option<String>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct DivergenceArgs {
    /// Constant SGDA step size.
    #[arg(long)]
    eta: Option<f64>,
    /// SGDA horizon; `--steps` sets the SEG horizon.
    #[arg(long)]
    sgda_steps: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

fn parse_emit(s: &str) -> std::result::Result<EmitKind, String> {
    match parse_emit_list(s).map_err(|e| e.to_string())?.as_slice() {
        [kind] => Ok(*kind),
        _ => Err(format!("expected one of csv, json, svg, got `{s}`")),
    }
}

fn experiment_config(args: &ExperimentArgs) -> Result<saddle_core::harness::ExperimentConfig> {
    let mut partial = match &args.common.config {
        Some(p) => PartialConfig::load(p)?,
        None => PartialConfig::default(),
    };
    partial.apply(&Overrides {
        preset: args.preset.clone(),
        seed: args.common.seed,
        replications: args.common.replications,
        steps: args.common.steps,
        out: args.common.out.clone(),
        emit: args.common.emit.clone(),
    });
    partial.resolve()
}

fn print_outcome(outcome: &ExperimentOutcome) {
    println!(
        "replications: {} ok, {} failed",
        outcome.successes(),
        outcome.failures().len()
    );
    let mean: Vec<String> = outcome.mean_averaged_z.iter().map(|v| format!("{v:.5}")).collect();
    println!("mean averaged iterate: [{}]", mean.join(", "));
    if let Some(t) = &outcome.theory {
        println!("limit projection variance: {:.5}", t.sigma2);
    }
    if let Some(r) = &outcome.report {
        println!("covariance Frobenius relative error: {:.5}", r.frobenius_rel_error);
    }
    for c in &outcome.checkpoint_stats {
        println!(
            "n = {}: KS = {:.5} (critical {:.5}) {}",
            c.step,
            c.ks,
            c.critical_value,
            if c.pass { "pass" } else { "fail" }
        );
    }
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Presets => {
            for name in PRESET_NAMES {
                println!("{name:<14} {}", preset_description(name).unwrap_or_default());
            }
            Ok(true)
        }
        Command::Run(args) => {
            let config = experiment_config(&args)?;
            let outcome = run_experiment(&config, args.common.workers)?;
            print_outcome(&outcome);
            for p in emit_experiment(&outcome)? {
                println!("wrote {}", p.display());
            }
            Ok(true)
        }
        Command::CltCheck(args) => {
            let config = experiment_config(&args)?;
            let outcome = clt_check(&config, args.common.workers)?;
            print_outcome(&outcome);
            for p in emit_experiment(&outcome)? {
                println!("wrote {}", p.display());
            }
            Ok(outcome.passed().unwrap_or(false))
        }
        Command::DivergenceDemo(args) => {
            let mut config = match &args.common.config {
                Some(p) => toml::from_str(&std::fs::read_to_string(p)?)
                    .map_err(|e| SaddleError::Config(e.to_string()))?,
                None => DivergenceConfig::default(),
            };
            if let Some(v) = args.eta {
                config.eta = v;
            }
            if let Some(v) = args.sgda_steps {
                config.sgda_steps = v;
            }
            if let Some(v) = args.common.steps {
                config.seg_steps = v;
            }
            if let Some(v) = args.common.replications {
                config.n_replications = v;
            }
            if let Some(v) = args.common.seed {
                config.seed = v;
            }
            let outcome = divergence_demo(&config, args.common.workers)?;
            println!(
                "one-step SGDA second moment: {:.5} +/- {:.5} (predicted {:.5}) {}",
                outcome.one_step_mean,
                outcome.one_step_se,
                outcome.one_step_prediction,
                if outcome.one_step_pass { "pass" } else { "fail" }
            );
            let at = config.sgda_steps.min(200);
            println!(
                "SGDA mean |z|^2 at step {at}: {:.5} {}",
                outcome.rows[at - 1].sgda_mean_sq_norm.unwrap_or(f64::NAN),
                if outcome.sgda_growth_pass { "grows" } else { "does not grow" }
            );
            if let Some(v) = outcome.seg_final_mean_norm {
                println!(
                    "SEG mean |z - z*| at step {}: {v:.5} {}",
                    config.seg_steps,
                    if outcome.seg_converged_pass { "pass" } else { "fail" }
                );
            }
            let dir = args.common.out.unwrap_or_else(|| PathBuf::from("out"));
            let emit = args.common.emit.unwrap_or_else(|| vec![EmitKind::Csv, EmitKind::Json]);
            for p in emit_divergence(&outcome, &dir, &emit)? {
                println!("wrote {}", p.display());
            }
            Ok(outcome.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

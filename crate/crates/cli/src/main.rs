use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mvsde_cli::{
    cmd_check_lemma, cmd_params, cmd_run, cmd_sweep, cmd_weak_order, CliError, Config, FlagOverrides, Result,
};
use mvsde_core::SchemeKind;

#[derive(Parser)]
#[command(name = "mvsde", version, about = "Particle and emulated amplitude-estimation solvers for mean-field SDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// `euler` or `sri1w1`.
    #[arg(long, global = true)]
    scheme: Option<String>,

    /// `shimizu_yamada` or `linear_mean`.
    #[arg(long, global = true)]
    model: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// One run, persisted as run.json.
    Run,
    /// Repeated runs over the accuracy list with CSV and plot data.
    Sweep,
    /// Empirical weak order on the Ornstein-Uhlenbeck process.
    WeakOrder,
    /// Perturbation bound check on the configured model.
    CheckLemma1,
    /// Print step sizes and budgets for the configured accuracy.
    Params,
}

fn execute(cli: &Cli) -> Result<()> {
    let scheme = cli
        .scheme
        .as_deref()
        .map(|s| s.parse::<SchemeKind>())
        .transpose()
        .map_err(|e| CliError::config(e.to_string()))?;
    let flags = FlagOverrides {
        seed: cli.seed,
        out_dir: cli.out.clone(),
        scheme,
        model: cli.model.clone(),
    };
    let cfg = Config::load(cli.config.as_deref(), std::env::vars(), &flags)?;
    match cli.command {
        Command::Run => {
            let (out, path) = cmd_run(&cfg)?;
            println!("estimate {:.12e} -> {}", out.estimate(), path.display());
        }
        Command::Sweep => {
            let report = cmd_sweep(&cfg)?;
            println!("{:>10} {:>14} {:>14} {:>12} {:>6}", "eps", "rmse", "queries", "wall_ms", "runs");
            for r in &report.outcome.rows {
                let flag = if r.flagged() { " FAILED RUNS" } else { "" };
                println!(
                    "{:>10.6} {:>14.6e} {:>14.6e} {:>12.1} {:>6}{flag}",
                    r.eps, r.rmse, r.mean_queries, r.mean_wall_ms, r.n_runs
                );
            }
            if let Some(f) = report.rmse_fit {
                println!("rmse vs eps slope {:.4} (r2 {:.4})", f.slope, f.r2);
            }
            if let Some(f) = report.queries_fit {
                println!("queries vs rmse slope {:.4} (r2 {:.4})", f.slope, f.r2);
            }
        }
        Command::WeakOrder => {
            let r = cmd_weak_order(&cfg)?;
            for p in &r.points {
                let note = if p.excluded { " (below noise floor)" } else { "" };
                println!("h {:<8} error {:.4e} ± {:.1e}{note}", p.h, p.error, p.std_error);
            }
            match r.slope() {
                Some(s) => println!("{} weak order {s:.3}", r.scheme),
                None => println!("{} weak order indeterminate", r.scheme),
            }
        }
        Command::CheckLemma1 => {
            for c in cmd_check_lemma(&cfg)? {
                println!(
                    "delta {:<6} t {:<6} |dE| {:.4e} ± {:.1e} bound {:.4e} holds {}",
                    c.delta, c.t, c.check.lhs, c.check.std_error, c.check.rhs, c.check.holds
                );
            }
        }
        Command::Params => {
            println!("{}", serde_json::to_string_pretty(&cmd_params(&cfg)?)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

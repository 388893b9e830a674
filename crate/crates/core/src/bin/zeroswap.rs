use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use zeroswap::challenge::{parse_claims, verify_records};
use zeroswap::experiment::config::{load_config_with, load_sweep, Overrides};
use zeroswap::experiment::csvio::{write_record, write_stats};
use zeroswap::experiment::runner::{run_seeds, run_sweep};
use zeroswap::metrics::AggregateStats;
use zeroswap::{QTable, RLParams};

#[derive(Parser)]
#[command(name = "zeroswap", version, about = "Market-maker simulations and challenge verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of one experiment and write per-seed CSVs plus stats.csv.
    Run {
        /// TOML file, or the name of a shipped preset (fig_fixed, fig_jump, ...).
        #[arg(long)]
        config: PathBuf,
        /// Base seed; run i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Run a [sweep] grid and write one stats row per cell.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check published challenges against a Q-table snapshot.
    Verify {
        #[arg(long)]
        qtable: PathBuf,
        #[arg(long)]
        claims: PathBuf,
        #[arg(long, default_value_t = RLParams::default().learning_rate)]
        learning_rate: f64,
        #[arg(long, default_value_t = RLParams::default().discount)]
        discount: f64,
    },
}

enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

fn invalid<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Validation(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn prepare_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(runtime)
}

fn run(config: &Path, overrides: Overrides) -> Result<(), Failure> {
    let cfg = load_config_with(config, &overrides).map_err(invalid)?;
    prepare_dir(&cfg.out)?;
    log::info!("{} / {}: {} seeds x {} slots", cfg.policy, cfg.scenario, cfg.seeds, cfg.steps);
    let runs = run_seeds(&cfg).map_err(runtime)?;
    for (i, record) in runs.iter().enumerate() {
        let path = cfg.out.join(format!("run_seed{}.csv", cfg.run_seed(i)));
        write_record(record, &path).map_err(runtime)?;
    }
    let m = cfg.market;
    let stats = AggregateStats::from_runs(m.alpha, m.sigma, m.arrival_rate, cfg.policy.name(), &runs);
    write_stats(&[stats], &cfg.out.join("stats.csv")).map_err(runtime)?;
    println!("wrote {} runs to {}", runs.len(), cfg.out.display());
    Ok(())
}

fn sweep(config: &Path, out: PathBuf) -> Result<(), Failure> {
    let overrides = Overrides { out: Some(out.clone()), ..Overrides::default() };
    let spec = load_sweep(config, &overrides).map_err(invalid)?;
    prepare_dir(&out)?;
    let stats = run_sweep(&spec).map_err(runtime)?;
    write_stats(&stats, &out.join("stats.csv")).map_err(runtime)?;
    println!("wrote {} cells to {}", stats.len(), out.join("stats.csv").display());
    Ok(())
}

fn verify(qtable: &Path, claims: &Path, params: RLParams) -> Result<(), Failure> {
    let read = |p: &Path| fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
    let table = QTable::<f64>::from_csv(&read(qtable).map_err(invalid)?).map_err(invalid)?;
    let records = parse_claims(&read(claims).map_err(invalid)?).map_err(invalid)?;
    let verdicts = verify_records(&table, &records, &params).map_err(invalid)?;
    for (i, ok) in verdicts.iter().enumerate() {
        println!("claim {}: {}", i + 1, if *ok { "challenge upheld" } else { "challenge rejected" });
    }
    let upheld = verdicts.iter().filter(|v| **v).count();
    println!("{upheld} of {} challenges upheld", verdicts.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out, policy, scenario } => run(&config, Overrides { seed, out, policy, scenario }),
        Command::Sweep { config, out } => sweep(&config, out),
        Command::Verify { qtable, claims, learning_rate, discount } => {
            let params = RLParams { learning_rate, discount, ..RLParams::default() };
            verify(&qtable, &claims, params)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

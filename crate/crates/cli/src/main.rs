use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use varorder_cli::{scenarios, thread_budget, CliError, CliResult, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "varorder",
    version,
    about = "Exact and simulated variance orderings for data-augmentation MCMC"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a JSON config file.
    Run {
        config: PathBuf,
        /// Overrides the config's base_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's out_dir (default: out/<scenario>).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Worker threads; VARORDER_THREADS takes precedence.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List registered scenarios.
    List,
    /// Show a scenario's parameters, algorithms and a default config.
    Describe { scenario: String },
}

fn describe(id: &str) -> CliResult<()> {
    let d = scenarios::find(id)?;
    println!("{}: {}", d.id, d.summary);
    println!("algorithms: {}", d.algorithms.join(", "));
    println!("default chain_length: {}", d.default_chain_length);
    if d.params.is_empty() {
        println!("params: none");
    } else {
        println!("params:");
        for p in d.params {
            println!("  {} = {} ({})", p.name, p.default.to_value(), p.help);
        }
    }
    let mut config = ScenarioConfig::new(d.id);
    config.params = d.params.iter().map(|p| (p.name.to_string(), p.default.to_value())).collect();
    config.chain_length = Some(d.default_chain_length);
    println!("{}", serde_json::to_string_pretty(&config).expect("config serializes"));
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::List => {
            for d in scenarios::registry() {
                println!("{:<26} {}", d.id, d.summary);
            }
            Ok(())
        }
        Command::Describe { scenario } => describe(&scenario),
        Command::Run { config, seed, out_dir, threads } => {
            let mut config = ScenarioConfig::load(&config)?;
            if let Some(seed) = seed {
                config.base_seed = seed;
            }
            let dir = out_dir
                .or_else(|| config.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out").join(&config.scenario));
            let threads = thread_budget(threads)?;
            let result = varorder_cli::run(&config, &dir, threads);
            let outcome = match &result {
                Ok(out) => Some(&out.outcome),
                Err(_) => None,
            };
            if let Some(o) = outcome {
                println!(
                    "{}: {} rows, {} assertions hold",
                    config.scenario,
                    o.rows.len(),
                    o.assertions.len()
                );
            }
            if !matches!(result, Err(CliError::Config(_)) | Err(CliError::Model { .. })) {
                println!("wrote {}", dir.display());
            }
            result.map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

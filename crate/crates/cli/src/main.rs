use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bisectquest_cli::{
    bounds_table, load_json, load_scenario, run_interactive, simulate, verify, write_bounds,
    CliError, InteractiveConfig, Result, VerifyConfig,
};
use clap::{Args, Parser, Subcommand};

/// Collaborative noisy twenty questions: simulation, bounds and verification.
#[derive(Parser)]
#[command(name = "bisectquest", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Override a config field, e.g. `--set players.0.eps=0.3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte Carlo trials.
    #[arg(long)]
    trials: Option<usize>,
}

impl Overrides {
    fn collect(&self) -> Vec<String> {
        let mut all = self.set.clone();
        if let Some(s) = self.seed {
            all.push(format!("seed={s}"));
        }
        if let Some(t) = self.trials {
            all.push(format!("trials={t}"));
        }
        all
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its MSE curve as CSV plus a `.meta.json` sidecar.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also dump trial 0's posterior every K cycles to `<out>.snapshots.jsonl`.
        #[arg(long, value_name = "K")]
        snapshot_every: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Tabulate the analytic MSE bounds for a scenario.
    Bounds {
        config: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dimension used by the lower bound.
        #[arg(long, default_value_t = 1)]
        dim: u32,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check the query-design identities; exits 1 if any exceeds its tolerance.
    Verify {
        /// Check list; the stock checks when omitted.
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Answer the questions yourself.
    Interactive {
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn configure_threads() {
    let Ok(raw) = std::env::var("BISECTQUEST_THREADS") else {
        return;
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size the thread pool: {e}");
            }
        }
        _ => log::warn!("ignoring BISECTQUEST_THREADS={raw:?}"),
    }
}

fn load_or_default<T: Default + serde::de::DeserializeOwned>(path: Option<&Path>, set: &[String]) -> Result<T> {
    match path {
        Some(p) => load_json(p, set),
        None if set.is_empty() => Ok(T::default()),
        None => {
            let mut doc = serde_json::to_value(serde_json::Map::new()).expect("empty object");
            bisectquest_cli::apply_overrides(&mut doc, set).map_err(|message| CliError::Config {
                path: "--set".into(),
                message,
            })?;
            serde_json::from_value(doc).map_err(|e| CliError::Config {
                path: "--set".into(),
                message: e.to_string(),
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            snapshot_every,
            overrides,
        } => {
            let cfg = load_scenario(&config, &overrides.collect())?;
            let curve = simulate(&cfg, &out, snapshot_every)?;
            let last = curve.mse_x.last().copied().unwrap_or(f64::NAN);
            eprintln!(
                "wrote {} ({} rows, final mse_x {last:.4e})",
                out.display(),
                curve.n_values.len()
            );
            Ok(())
        }
        Command::Bounds {
            config,
            out,
            dim,
            overrides,
        } => {
            let cfg = load_scenario(&config, &overrides.collect())?;
            if dim == 0 {
                return Err(CliError::Config {
                    path: "--dim".into(),
                    message: "dimension must be at least 1".into(),
                });
            }
            let rows = bounds_table(&cfg, dim)?;
            match out {
                Some(path) => {
                    let mut buf = Vec::new();
                    write_bounds(&mut buf, &rows)?;
                    fs::write(&path, buf).map_err(|source| CliError::Io {
                        context: format!("writing {}", path.display()),
                        source,
                    })
                }
                None => write_bounds(io::stdout().lock(), &rows),
            }
        }
        Command::Verify { config, set } => {
            let cfg: VerifyConfig = load_or_default(config.as_deref(), &set)?;
            verify(&cfg, &mut io::stdout().lock())
        }
        Command::Interactive { config, set } => {
            let cfg: InteractiveConfig = load_or_default(config.as_deref(), &set)?;
            let stdin = io::stdin();
            let mut stdout = BufWriter::new(io::stdout().lock());
            run_interactive(&cfg, stdin.lock(), &mut stdout)?;
            stdout.flush().map_err(|source| CliError::Io {
                context: "terminal".into(),
                source,
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

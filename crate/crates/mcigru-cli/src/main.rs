use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use mcigru::pipeline::{self, Layout, RunConfig};

#[derive(Parser)]
#[command(name = "mcigru", version, about = "Train and backtest the stock ranking model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat JSON config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable). Values are read as JSON when
    /// they parse, else as strings.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Directory for every artifact of the run.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated training seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Stocks held per day.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Load the bar CSV named by `data` and cache the panel.
    Ingest(Common),
    /// Generate a planted-signal market and a config that points at it.
    Synth {
        /// Generator settings (JSON); `--set` overrides its keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Train one model per seed.
    Train(Common),
    /// Score the test split, averaging seeds.
    Predict(Common),
    /// Score, simulate the top-k strategy and write the report.
    Backtest(Common),
    /// Train and backtest once per value of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of judge_value, label_t, his_t, hidden_size, gat_heads,
        /// num_hidden_states.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<String>,
    },
    /// Print the metrics of an existing report.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn resolve(c: &Common) -> Result<(RunConfig, Layout)> {
    let base = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = base.with_overrides(&c.set)?;
    if let Some(seeds) = &c.seeds {
        cfg.run.seeds = seeds.clone();
    }
    if let Some(k) = c.k {
        cfg.run.k = k;
    }
    cfg.validate()?;
    let out = Layout::new(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(c) => {
            let (cfg, out) = resolve(&c)?;
            let r = pipeline::cmd_ingest(&cfg, &out)?;
            let span = r.date_range.map_or("none".into(), |(a, b)| format!("{a} to {b}"));
            println!(
                "rows read {}, rejected {}, tickers {}, dates {span}",
                r.rows_read, r.rows_rejected, r.tickers
            );
            println!("panel cache written to {}", out.panel().display());
        }
        Command::Synth { config, set, out } => {
            let synth = pipeline::load_synth_config(config.as_deref(), &set)?;
            let out = Layout::new(&out)?;
            pipeline::cmd_synth(&synth, &out)?;
            println!(
                "{} stocks x {} days written to {}; next: mcigru ingest --config {} --out {}",
                synth.n_stocks,
                synth.n_days,
                out.dir.join("bars.csv").display(),
                out.dir.join("config.json").display(),
                out.dir.display()
            );
        }
        Command::Train(c) => {
            let (cfg, out) = resolve(&c)?;
            let logs = pipeline::cmd_train(&cfg, &out)?;
            for (seed, log) in cfg.run.seeds.iter().zip(&logs) {
                let best = log.best_epoch.and_then(|e| log.epochs.get(e));
                match best {
                    Some(e) => println!(
                        "seed {seed}: best epoch {} train {:.6e} valid {}",
                        e.epoch,
                        e.train_loss,
                        e.valid_loss.map_or("n/a".into(), |v| format!("{v:.6e}"))
                    ),
                    None => println!("seed {seed}: no epochs run"),
                }
            }
        }
        Command::Predict(c) => {
            let (cfg, out) = resolve(&c)?;
            let scores = pipeline::cmd_predict(&cfg, &out)?;
            println!("{} scored days written to {}", scores.days.len(), out.scores().display());
        }
        Command::Backtest(c) => {
            let (cfg, out) = resolve(&c)?;
            pipeline::cmd_backtest(&cfg, &out)?;
            print!("{}", pipeline::cmd_report(&out)?);
        }
        Command::Sweep { common, param, values } => {
            let (cfg, out) = resolve(&common)?;
            let values = values
                .iter()
                .filter(|v| !v.trim().is_empty())
                .map(|v| v.trim().parse::<f64>().map_err(|e| mcigru::Error::Config(format!("sweep value {v:?}: {e}"))))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let rows = pipeline::cmd_sweep(&cfg, &out, &param, &values)?;
            println!("{param}\tarr\tasr\tmse");
            for r in rows {
                let asr = r.asr.map_or("n/a".into(), |v| format!("{v:.4}"));
                println!("{}\t{:.4}\t{asr}\t{:.4e}", r.value, r.arr, r.mse);
            }
        }
        Command::Report { out } => {
            let out = Layout::new(&out)?;
            print!("{}", pipeline::cmd_report(&out)?);
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<mcigru::Error>() {
        Some(e) if e.is_validation() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => {
            info!("done");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

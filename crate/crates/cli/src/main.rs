use std::path::PathBuf;
use std::process::ExitCode;

use chmob::commands::{self, exit};
use chmob::{Error, Result, RunConfig};
use clap::{Args, Parser, Subcommand};

/// Cahn-Hilliard solver with degenerate mobility.
#[derive(Debug, Parser)]
#[command(name = "chmob", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one configuration and write series, snapshots and manifest.
    Run(Opts),
    /// Spatial convergence study against a fine reference run.
    Converge(Opts),
    /// Run several schemes on the same data and merge their extrema.
    Compare(Opts),
    /// Print the resolved configuration of a preset (or of the given flags).
    Preset(Opts),
}

#[derive(Debug, Args)]
struct Opts {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// example1 .. example4
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "abort-on-fail")]
    abort_on_fail: bool,
    /// Comma-separated scheme list for `compare`.
    #[arg(long)]
    schemes: Option<String>,
    /// Any other configuration key, as `key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Opts {
    fn resolve(&self) -> Result<RunConfig> {
        let preset = self.preset.as_deref().map(RunConfig::preset).transpose()?;
        let mut flags: Vec<(&str, String)> = Vec::new();
        let mut push = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                flags.push((k, v));
            }
        };
        push("scheme", self.scheme.clone());
        push("eta", self.eta.map(|v| v.to_string()));
        push("eps", self.eps.map(|v| v.to_string()));
        push("nx", self.nx.map(|v| v.to_string()));
        push("ny", self.ny.map(|v| v.to_string()));
        push("dt", self.dt.map(|v| v.to_string()));
        push("t_end", self.t_end.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("output_dir", self.out.as_ref().map(|p| p.display().to_string()));
        push("schemes", self.schemes.clone());
        if self.abort_on_fail {
            push("abort_on_fail", Some("true".into()));
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config { key: kv.clone(), msg: "expected KEY=VALUE".into() })?;
            flags.push((k.trim(), v.to_string()));
        }

        // Flags are appended to the file text so that a missing required key
        // may come from either source.
        let mut text = match &self.config {
            Some(path) => std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?,
            None => String::new(),
        };
        for (k, v) in flags {
            text.push('\n');
            text.push_str(&format!("{k} = {v}"));
        }
        RunConfig::parse_str(&text, preset)
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run(opts) => {
            let cfg = opts.resolve()?;
            let summary = commands::cmd_run(&cfg)?;
            if let Some(&step) = summary.failed_steps.first() {
                eprintln!(
                    "{}: Picard iteration did not converge at step {step} ({} failing step(s))",
                    summary.scheme,
                    summary.failed_steps.len()
                );
            }
            println!("{} records written to {}", summary.records, summary.output_dir.display());
            Ok(summary.exit_code())
        }
        Command::Converge(opts) => {
            let cfg = opts.resolve()?;
            let rows = commands::cmd_converge(&cfg)?;
            for r in rows {
                match r.r2 {
                    Some(rate) => println!("N={:>6}  e2={:.6e}  r2={rate:.6}", r.n, r.e2),
                    None => println!("N={:>6}  e2={:.6e}", r.n, r.e2),
                }
            }
            Ok(exit::SUCCESS)
        }
        Command::Compare(opts) => {
            let cfg = opts.resolve()?;
            let summaries = commands::cmd_compare(&cfg)?;
            let mut code = exit::SUCCESS;
            for s in &summaries {
                println!("{}: {} records, exit {}", s.scheme, s.records, s.exit_code());
                code = code.max(s.exit_code());
            }
            Ok(code)
        }
        Command::Preset(opts) => {
            let cfg = opts.resolve()?;
            print!("{}", cfg.to_manifest());
            Ok(exit::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

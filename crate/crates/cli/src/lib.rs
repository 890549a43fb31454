//! Command-line driver: configuration, subcommands and artifact output.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod reproduce;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "metastable", version, about = "Tunneling currents out of a metastable well")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, short, global = true, default_value = "configs/numerics.toml")]
    pub config: PathBuf,

    /// Override any config key, e.g. `--set potential.eta=1e-3`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,

    #[arg(long, global = true)]
    pub experiment: Option<String>,

    /// `output_dir`, relative to $METASTABLE_OUTPUT_ROOT when that is set.
    #[arg(long, global = true)]
    pub output_dir: Option<String>,

    /// `state.kind`: coherent, random_phase, file or gaussian.
    #[arg(long, global = true)]
    pub state: Option<String>,

    #[arg(long, global = true, allow_negative_numbers = true)]
    pub alpha: Option<f64>,

    #[arg(long, global = true, allow_negative_numbers = true)]
    pub alpha_im: Option<f64>,

    #[arg(long, global = true)]
    pub n_max: Option<usize>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// `evolution.dt`.
    #[arg(long, global = true)]
    pub dt: Option<f64>,

    /// `evolution.T`.
    #[arg(long = "T", global = true)]
    pub t_total: Option<f64>,

    /// `evolution.boundary`: hardwall or cap.
    #[arg(long, global = true)]
    pub bc: Option<String>,

    #[arg(long, global = true)]
    pub x_t: Option<f64>,

    /// `current.source`: cap or wkb.
    #[arg(long, global = true)]
    pub source: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Resonant states of the CAP Hamiltonian.
    Resonances,
    /// Semiclassical actions, periods and widths per level.
    Wkb,
    /// Expansion coefficients of the configured state.
    Decompose,
    /// Current from the resonance formula.
    Current,
    /// Saddle-point burst parameters.
    Saddle,
    /// Crank-Nicolson evolution.
    Evolve,
    /// Residual between two current series.
    Compare,
    /// Data for every reference figure.
    ReproducePaper,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Resonances => "resonances",
            Command::Wkb => "wkb",
            Command::Decompose => "decompose",
            Command::Current => "current",
            Command::Saddle => "saddle",
            Command::Evolve => "evolve",
            Command::Compare => "compare",
            Command::ReproducePaper => "reproduce-paper",
        }
    }
}

impl Cli {
    /// `--set` pairs followed by the dedicated flags, in application order.
    pub fn overrides(&self) -> Result<Vec<(String, String)>, CliError> {
        let mut out = Vec::new();
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| CliError::ConfigInvalid {
                field: kv.clone(),
                message: "expected KEY=VALUE".into(),
            })?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let text = |s: &String| toml::Value::String(s.clone()).to_string();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        push("experiment", self.experiment.as_ref().map(text));
        push("output_dir", self.output_dir.as_ref().map(text));
        push("state.kind", self.state.as_ref().map(text));
        push("state.alpha", self.alpha.map(float));
        push("state.alpha_im", self.alpha_im.map(float));
        push("state.n_max", self.n_max.map(|v| v.to_string()));
        push("state.seed", self.seed.map(|v| v.to_string()));
        push("evolution.dt", self.dt.map(float));
        push("evolution.T", self.t_total.map(float));
        push("evolution.boundary", self.bc.as_ref().map(text));
        push("x_t", self.x_t.map(float));
        push("current.source", self.source.as_ref().map(text));
        Ok(out)
    }
}

fn float(v: f64) -> String {
    toml::Value::Float(v).to_string()
}

/// Loads the config, runs the subcommand and writes the manifest; returns the output directory.
pub fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let started = Instant::now();
    let cfg = config::load(&cli.config, &cli.overrides()?)?;
    let session = commands::Session::new(config::resolve(cfg)?);
    match cli.command {
        Command::Resonances => commands::resonances(&session)?,
        Command::Wkb => commands::wkb_table(&session)?,
        Command::Decompose => commands::decompose(&session)?,
        Command::Current => commands::current(&session)?,
        Command::Saddle => commands::saddle(&session)?,
        Command::Evolve => commands::evolve(&session)?,
        Command::Compare => commands::compare_runs(&session)?,
        Command::ReproducePaper => reproduce::reproduce(&session)?,
    }
    session.arts.write_manifest(&session.run, cli.command.name(), started)?;
    Ok(session.arts.dir().to_path_buf())
}

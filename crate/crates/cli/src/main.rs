//! `wardsense`: synthesize traces, train and evaluate the three pipelines,
//! inspect signals, run the ward service and replay traces against it.

mod args;
mod data;
mod inspect;
mod net;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// An invalid flag value, found before any work starts. Exits with 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(Usage(msg.into()).into())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let det = cli.deterministic;
    match cli.command {
        Command::Synth(a) => data::synth(&a),
        Command::SynthDataset(a) => data::synth_dataset(&a),
        Command::TrainActivity(a) => data::train_activity(&a, det),
        Command::TrainDepression(a) => data::train_depression(&a, det),
        Command::TrainCognitive(a) => data::train_cognitive(&a, det),
        Command::Eval(a) => data::eval(&a),
        Command::Spectrogram(a) => inspect::spectrogram(&a),
        Command::Voxelize(a) => inspect::voxelize(&a),
        Command::ExportCloud(a) => inspect::export_cloud(&a),
        Command::Serve(a) => net::serve(&a),
        Command::Replay(a) => net::replay(&a, det),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(if cli.deterministic { None } else { Some(env_logger::fmt::TimestampPrecision::Millis) })
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

//! `ilrec` command-line driver: synthesis, preparation, training,
//! evaluation, overlap analysis, benchmarks and report summaries.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{Arg, ArgMatches, Command};

use crate::config::{keys, Cmd, RunConfig};
use crate::error::{CliError, CliResult};

pub const THREADS_ENV: &str = "ILR_THREADS";

fn about(cmd: Cmd) -> &'static str {
    match cmd {
        Cmd::Synth => "Generate a synthetic dataset with all four feature types",
        Cmd::Prepare => "k-core filter, split and optionally drop images from a raw dataset",
        Cmd::Train => "Train a model and write its checkpoint and loss log",
        Cmd::Eval => "Evaluate a scorer with sampled negatives",
        Cmd::Overlap => "Image versus joint-text cosine overlap analysis",
        Cmd::Bench => "Token, complexity, timing and context-budget benchmarks",
        Cmd::Report => "Summarize the JSON reports of a reports directory",
    }
}

/// The full command tree; every key becomes a `--key` flag with its default.
pub fn command() -> Command {
    let table = keys();
    let mut root = Command::new("ilrec")
        .about("Image-token sequential recommendation toolkit")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for cmd in Cmd::ALL {
        let mut sub = Command::new(cmd.name()).about(about(cmd)).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("key=value config file; flags override it"),
        );
        for k in table.iter().filter(|k| k.cmds.contains(&cmd)) {
            sub = sub.arg(
                Arg::new(k.name)
                    .long(k.name)
                    .alias(k.name.replace('_', "-"))
                    .value_name("VALUE")
                    .default_value(k.default.clone())
                    .hide_default_value(false)
                    .help(k.help),
            );
        }
        root = root.subcommand(sub);
    }
    root
}

fn explicit_flags(m: &ArgMatches) -> Vec<(String, String)> {
    m.ids()
        .filter(|id| id.as_str() != "config")
        .filter(|id| m.value_source(id.as_str()) == Some(ValueSource::CommandLine))
        .filter_map(|id| {
            m.get_one::<String>(id.as_str())
                .map(|v| (id.as_str().to_string(), v.clone()))
        })
        .collect()
}

fn init_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn dispatch(cmd: Cmd, cfg: &RunConfig) -> CliResult<()> {
    match cmd {
        Cmd::Synth => commands::synth(cfg),
        Cmd::Prepare => commands::prepare(cfg),
        Cmd::Train => commands::train(cfg),
        Cmd::Eval => commands::eval(cfg),
        Cmd::Overlap => commands::overlap(cfg),
        Cmd::Bench => commands::bench(cfg),
        Cmd::Report => commands::report(cfg),
    }
}

fn run_inner(m: &ArgMatches) -> CliResult<()> {
    init_threads()?;
    let (name, sub) = m.subcommand().expect("subcommand is required");
    let cmd = Cmd::ALL.into_iter().find(|c| c.name() == name).expect("known subcommand");
    let file = sub.get_one::<String>("config").map(PathBuf::from);
    let cfg = RunConfig::resolve(cmd, file.as_deref(), &explicit_flags(sub))?;
    dispatch(cmd, &cfg)
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let m = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
        }
    };
    match run_inner(&m) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

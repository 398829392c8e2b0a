mod args;
mod commands;
mod error;
mod run;

use std::path::PathBuf;

use clap::Parser;
use serde_json::{Map, Value};

use args::{merge, Cli, Command, GlobalArgs, TheoryCommand};
use error::CliError;
use run::{Run, DEFAULT_OUT};

fn load_config(path: &Option<PathBuf>) -> Result<Map<String, Value>, CliError> {
    let Some(path) = path else {
        return Ok(Map::new());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(CliError::Usage(format!(
            "config {} is not a JSON object",
            path.display()
        ))),
        Err(e) => Err(CliError::Usage(format!("config {}: {e}", path.display()))),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let config = load_config(&cli.global.config)?;
    let global: GlobalArgs = merge(&cli.global, &config)?;
    if let Some(n) = global.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let out = global.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut run = Run::new(
        cli.command.name(),
        out,
        rayon::current_num_threads(),
        cli.global.config.clone(),
    );

    let outcome = match &cli.command {
        Command::MinEll(a) => commands::min_ell(&merge(a, &config)?, &mut run),
        Command::Sweep(a) => commands::sweep(&merge(a, &config)?, &mut run),
        Command::EigDecay(a) => commands::eig_decay(&merge(a, &config)?, &mut run),
        Command::Sample(a) => commands::sample(&merge(a, &config)?, &mut run),
        Command::Validate(a) => commands::validate(&merge(a, &config)?, &mut run),
        Command::Spectrum(a) => commands::spectrum(&merge(a, &config)?, &mut run),
        Command::Theory(t) => {
            let t = match t {
                TheoryCommand::PdCriterion(a) => TheoryCommand::PdCriterion(merge(a, &config)?),
                TheoryCommand::Bounds(a) => TheoryCommand::Bounds(merge(a, &config)?),
                TheoryCommand::ContinuousEigs(a) => {
                    TheoryCommand::ContinuousEigs(merge(a, &config)?)
                }
                TheoryCommand::SamplingTheorem(a) => {
                    TheoryCommand::SamplingTheorem(merge(a, &config)?)
                }
                TheoryCommand::QmcSum(a) => TheoryCommand::QmcSum(merge(a, &config)?),
            };
            commands::theory(&t, &mut run)
        }
    };

    match outcome {
        Ok(result) => {
            run.write_manifest(&result, None)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
            Ok(())
        }
        Err(e) => {
            // Usage errors are reported before anything is computed; other
            // failures still leave a manifest behind.
            if !matches!(e, CliError::Usage(_)) && run.create_out_dir().is_ok() {
                let _ = run.write_manifest(&Value::Null, Some(&e));
            }
            Err(e)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = execute(cli) {
        eprintln!("circembed: {e}");
        std::process::exit(e.exit_code());
    }
}

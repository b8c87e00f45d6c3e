mod args;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use tempmode::pipeline::{self, Manifest, PipelineConfig, OUTPUT_DIR_ENV};
use tempmode::{exec, selftest, Error, ErrorKind};

use args::{Cli, Command, Overrides};

const EXIT_SELFTEST_FAILED: u8 = 1;

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Validation => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::Io => 4,
    }
}

/// Defaults, then the environment's output directory, then the config file,
/// then flags.
fn resolve(config: Option<&Path>, overrides: Overrides) -> Result<PipelineConfig, Error> {
    let mut c = PipelineConfig::default();
    let mut directory_from_file = false;
    if let Some(path) = config {
        let text = std::fs::read_to_string(path)?;
        c = PipelineConfig::from_toml_str(&text)?;
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        directory_from_file = table
            .get("output")
            .and_then(|o| o.get("directory"))
            .is_some();
    }
    if !directory_from_file {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            c.output.directory = PathBuf::from(dir);
        }
    }
    overrides.apply(&mut c);
    c.validate()?;
    Ok(c)
}

fn report(m: &Manifest) {
    for f in &m.files {
        println!("{}  {}", f.sha256, f.path);
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Simulate(o) => report(&pipeline::cmd_simulate(&resolve(config, o)?)?),
        Command::Analyze { inputs, overrides } => report(&pipeline::cmd_analyze(
            &resolve(config, overrides)?,
            &inputs.state,
            &inputs.vacuum,
        )?),
        Command::Tomography { inputs, overrides } => report(&pipeline::cmd_tomography(
            &resolve(config, overrides)?,
            &inputs.state,
            &inputs.vacuum,
        )?),
        Command::Sweep(o) => report(&pipeline::cmd_sweep(&resolve(config, o)?)?),
        Command::Selftest { only, json } => {
            let reports = if only.is_empty() {
                selftest::run_all(|r| print!("{r}"))
            } else {
                only.iter()
                    .map(|&id| {
                        let r = selftest::run(id)?;
                        print!("{r}");
                        Ok(r)
                    })
                    .collect::<Result<Vec<_>, Error>>()?
            };
            let passed = reports.iter().filter(|r| r.passed).count();
            println!("{passed} of {} criteria passed", reports.len());
            if let Some(path) = json {
                std::fs::write(path, serde_json::to_vec_pretty(&reports)?)?;
            }
            if passed < reports.len() {
                return Ok(EXIT_SELFTEST_FAILED);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = exec::set_worker_count(jobs) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

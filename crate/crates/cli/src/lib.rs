//! Command-line front end for the `shapestat` toolkit: dataset files,
//! experiment commands and replayable run manifests.

pub mod args;
pub mod commands;
pub mod error;
pub mod io;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde::{Deserialize, Serialize};

pub use args::{Cli, Command};
pub use error::CliError;

/// Record of one run; replaying it reproduces the listed outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: serde_json::Value,
    /// Arguments as given on the command line, without the program name.
    pub args: Vec<String>,
    /// Working directory against which relative input paths resolve.
    pub cwd: PathBuf,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub version: String,
    pub wall_millis: u128,
    pub outputs: Vec<String>,
    pub converged: bool,
    pub metadata: serde_json::Value,
}

impl RunManifest {
    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct RunStatus {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    pub summary: String,
}

fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(path).map_err(CliError::io(path))
}

fn rebase(path: &mut PathBuf, cwd: &Path) {
    if path.is_relative() {
        *path = cwd.join(&*path);
    }
}

/// Resolve relative input paths of a recorded command against `cwd`.
fn rebase_inputs(command: &mut Command, cwd: &Path) {
    match command {
        Command::Mean(a) => rebase(&mut a.input.input, cwd),
        Command::Test(a) => {
            rebase(&mut a.input.input, cwd);
            rebase(&mut a.hypothesis, cwd);
        }
        Command::Frusta(a) => {
            if let Some(p) = a.input.as_mut() {
                rebase(p, cwd);
            }
        }
        Command::Dtmean(a) => rebase(&mut a.input, cwd),
        _ => {}
    }
}

fn run_command(cli: &Cli, args: Vec<String>, cwd: PathBuf) -> Result<RunStatus, CliError> {
    let start = Instant::now();
    let output = commands::execute(&cli.command, cli.timing)?;
    let wall_millis = start.elapsed().as_millis();
    let out_dir = absolute(&cli.out)?;
    fs::create_dir_all(&out_dir).map_err(CliError::io(&out_dir))?;
    for (name, contents) in &output.files {
        let path = out_dir.join(name);
        fs::write(&path, contents).map_err(CliError::io(&path))?;
    }
    let name = cli.command.name();
    let manifest = RunManifest {
        command: name.to_string(),
        parameters: serde_json::to_value(&cli.command)?,
        args,
        cwd,
        out_dir: out_dir.clone(),
        seed: cli.command.seed(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_millis,
        outputs: output.files.iter().map(|(n, _)| n.clone()).collect(),
        converged: output.converged,
        metadata: output.metadata,
    };
    let manifest_path = out_dir.join(RunManifest::file_name(name));
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")
        .map_err(CliError::io(&manifest_path))?;
    Ok(RunStatus {
        manifest,
        manifest_path,
        summary: output.summary,
    })
}

/// Run a parsed command line. `args` are the raw arguments without the
/// program name, kept for the manifest.
pub fn run(cli: Cli, args: Vec<String>) -> Result<RunStatus, CliError> {
    let cwd = absolute(Path::new("."))?;
    let Command::Replay(replay) = &cli.command else {
        return run_command(&cli, args, cwd);
    };
    let recorded = RunManifest::load(&replay.manifest)?;
    let mut inner = Cli::try_parse_from(std::iter::once("shapestat".to_string()).chain(recorded.args.iter().cloned()))
        .map_err(|e| CliError::Argument(format!("manifest arguments do not parse: {e}")))?;
    rebase_inputs(&mut inner.command, &recorded.cwd);
    inner.out = cli.out.clone();
    let status = run_command(&inner, recorded.args.clone(), recorded.cwd.clone())?;
    if replay.verify {
        for name in &recorded.outputs {
            let old = recorded.out_dir.join(name);
            let new = status.manifest.out_dir.join(name);
            let a = fs::read(&old).map_err(CliError::io(&old))?;
            let b = fs::read(&new).map_err(CliError::io(&new))?;
            if a != b {
                return Err(CliError::Argument(format!("replayed {name} differs from {}", old.display())));
            }
        }
    }
    Ok(status)
}

/// Exit status of a finished run: 0 when every mean converged, 3 otherwise.
pub fn exit_code(status: &RunStatus) -> i32 {
    if status.manifest.converged {
        0
    } else {
        3
    }
}

/// Exit status for an error: 3 for solver failures, 1 otherwise.
pub fn error_code(err: &CliError) -> i32 {
    match err {
        CliError::Shape(shapestat::ShapeError::SolverFailure { .. }) => 3,
        _ => 1,
    }
}

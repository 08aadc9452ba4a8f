use std::process::ExitCode;

use clap::Parser;
use shapestat_cli::{error_code, exit_code, run, Cli};

fn main() -> ExitCode {
    if let Some(n) = std::env::var("SHAPESTAT_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not cap threads: {e}");
        }
    }
    let cli = Cli::parse();
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(cli, args) {
        Ok(status) => {
            println!("{}", status.summary);
            println!("manifest: {}", status.manifest_path.display());
            let code = exit_code(&status);
            if code != 0 {
                eprintln!("error: a mean solver did not converge");
            }
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e) as u8)
        }
    }
}

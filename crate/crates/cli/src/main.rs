use std::process::ExitCode;

use clap::Parser;
use isodecon_cli::{exit_code, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("isodecon: cannot start {} threads: {e}", cli.threads);
            return ExitCode::from(isodecon_cli::exit::CONFIG);
        }
    }
    match run(&cli) {
        Ok(manifest) => {
            for path in &manifest.outputs {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("isodecon: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

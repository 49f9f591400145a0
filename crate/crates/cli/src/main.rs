mod args;
mod commands;
mod output;

use std::io::Write;

use clap::Parser;

use crate::args::Cli;
use crate::output::CliError;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            CliError::usage("threads", "must be at least 1").exit();
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            CliError::internal(format!("thread pool: {e}")).exit();
        }
    }
    match commands::run(cli.command) {
        Ok(doc) => {
            // A closed pipe on stdout is not an error for a pipeline stage.
            let _ = writeln!(std::io::stdout().lock(), "{doc}");
        }
        Err(e) => e.exit(),
    }
}

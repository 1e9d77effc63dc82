mod args;
mod commands;
mod run;

use clap::Parser;

use args::Cli;
use commands::Context;
use run::{unix_now, Failure};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(f) = execute(&cli) {
        let report = serde_json::json!({ "error": f.kind_name(), "message": f.message });
        eprintln!("{report}");
        std::process::exit(f.exit_code());
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let started = unix_now();
    if cli.global.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.jobs)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    let mut ctx = Context::new(&cli.global)?;
    commands::run(&cli.command, &mut ctx)?;
    ctx.finish(cli.command.name(), started)
}

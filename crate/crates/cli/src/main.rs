use clap::Parser;
use dicke_stark_cli::{cache, run, Cli};
use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = run(&cli);
    eprintln!(
        "stats: eigendecompositions={} cache_hits={}",
        cache::eigendecomposition_count(),
        cache::cache_hit_count()
    );
    let failure = match result {
        Ok(summary) => summary
            .first_error
            .inspect(|_| eprintln!("{} of the grid points failed", summary.failed_rows)),
        Err(e) => Some(e),
    };
    match failure {
        None => ExitCode::SUCCESS,
        Some(e) => {
            eprintln!("{}", e.machine_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use clap::Parser;

use flood_surrogate::cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(w) = cli.workers.filter(|&w| w > 0) {
        // Corpus generation and loading use the global pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

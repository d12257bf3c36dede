use clap::Parser;

use annoloop_cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ANNOLOOP_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        for d in e.diagnostics() {
            eprintln!("{d}");
        }
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

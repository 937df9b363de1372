use clap::Parser;
use kgacc_cli::args::Cli;
use tracing::Level;

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => Level::WARN,
        1 => Level::INFO,
        _ => Level::DEBUG,
    };
    tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).init();
    if let Err(e) = kgacc_cli::run(&cli, std::env::args().collect()) {
        eprintln!("error: {e}");
        std::process::exit(e.code());
    }
}

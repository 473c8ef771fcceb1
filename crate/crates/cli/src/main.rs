use clap::Parser;

fn main() {
    let cli = bnhm_cli::config::Cli::parse();
    if let Err(e) = bnhm_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

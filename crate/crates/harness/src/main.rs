use clap::Parser;

fn main() {
    let cli = ducs_harness::Cli::parse();
    if let Err(e) = ducs_harness::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

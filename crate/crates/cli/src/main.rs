use clap::Parser;

fn main() {
    let cli = selfrep_cli::Cli::parse();
    if let Err(e) = selfrep_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

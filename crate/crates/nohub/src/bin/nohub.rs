use clap::Parser;

fn main() {
    let cli = nohub::cli::Cli::parse();
    if let Err(e) = nohub::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

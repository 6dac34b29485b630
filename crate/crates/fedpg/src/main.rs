use clap::Parser;

fn main() {
    let cli = fedpg::cli::Cli::parse();
    if let Err(err) = fedpg::cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}

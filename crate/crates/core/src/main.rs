use clap::Parser;

fn main() {
    if let Err(e) = hierdit::cli::run(hierdit::cli::Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

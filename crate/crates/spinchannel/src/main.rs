use clap::Parser;

fn main() {
    let cli = spinchannel::cli::Cli::parse();
    if let Err(err) = spinchannel::cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}

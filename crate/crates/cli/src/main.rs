use clap::Parser;

fn main() {
    let cli = resprompt_cli::Cli::parse();
    if let Err(err) = resprompt_cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

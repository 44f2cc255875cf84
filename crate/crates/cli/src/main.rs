use clap::Parser;

fn main() {
    let cli = apf_cli::Cli::parse();
    std::process::exit(apf_cli::run(cli));
}

use clap::Parser;

fn main() {
    let cli = wentzell_cli::Cli::parse();
    std::process::exit(wentzell_cli::run(&cli));
}

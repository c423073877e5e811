use clap::Parser;

fn main() {
    let code = weakvar_cli::run(weakvar_cli::Cli::parse());
    std::process::exit(code);
}

use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = gcn::cli::Cli::parse();
    if let Err(e) = gcn::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(gcn::cli::exit_code(&e));
    }
}

use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ROADMTT_LOG", "warn")).init();
    let cli = roadmtt::cli::Cli::parse();
    if let Err(e) = roadmtt::cli::run(cli) {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}

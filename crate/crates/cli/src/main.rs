use clap::Parser;
use hankel_sysid_cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HANKEL_SYSID_LOG", "warn")).init();
    let cli = Cli::parse();
    std::process::exit(run(&cli));
}

use clap::Parser;

use kgprobe::cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => print!("{out}"),
        Err(e) => {
            eprintln!("kgprobe: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

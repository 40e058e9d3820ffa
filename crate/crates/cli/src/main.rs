use clap::Parser;
use difflink_cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DIFFLINK_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli.command, &cli.flags) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("difflink: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

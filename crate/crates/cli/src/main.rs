use clap::Parser;

fn main() -> std::process::ExitCode {
    let cli = busroute_cli::Cli::parse();
    match busroute_cli::run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

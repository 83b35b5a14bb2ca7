use clap::Parser;

fn main() {
    let cli = roiaug_cli::Cli::parse();
    let code = match roiaug_cli::run(cli) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}

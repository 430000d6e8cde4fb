use clap::Parser;

fn main() {
    let cli = match dphase_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own usage-error status (2) is reserved for non-convergence.
            let code = if e.use_stderr() { dphase_cli::EXIT_CONFIG } else { dphase_cli::EXIT_OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    std::process::exit(dphase_cli::main_with(&cli));
}

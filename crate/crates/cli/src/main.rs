use clap::Parser;
use coopsense_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(report) => {
            println!("wrote {} rows to {}", report.rows, report.csv.display());
            println!("sidecar {}", report.sidecar.display());
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            std::process::exit(e.exit_code());
        }
    }
}

use std::process::ExitCode;

use clap::Parser;
use ssqcqp_cli::args::{Cli, Command};
use ssqcqp_cli::{export, solve};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Solve(args) => match solve::cmd_solve(&args) {
            Ok(out) => {
                let doc = &out.document;
                eprintln!(
                    "{} ({}): {} after {} records, f = {}, n = {}, m = {}",
                    doc.problem.name,
                    doc.variant,
                    doc.status,
                    doc.trace.len(),
                    doc.f_final,
                    doc.problem.n,
                    doc.problem.m
                );
                eprintln!("wrote {} and {}", out.result_path.display(), out.trace_path.display());
                out.exit_code()
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Command::Export(args) => match export::cmd_export(&args) {
            Ok(_) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    };
    ExitCode::from(code)
}

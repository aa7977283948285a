//! Candidate worker: handshake on stdout, then one report line per job line on stdin.

use std::io::{stdin, stdout};
use std::process::ExitCode;

use coevo::runner::{serve, NativeRunner};

fn main() -> ExitCode {
    match serve(stdin().lock(), stdout().lock(), &NativeRunner) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("coevo-worker: {e}");
            ExitCode::from(2)
        }
    }
}

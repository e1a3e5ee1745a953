//! Reference external evaluator: answers every slice with its pixel mean
//! (scalar mode) or its mean-pooled grid, averaged over channels.

use std::io::{self, BufReader, BufWriter};
use std::process::ExitCode;

use tomorecon_core::evaluators::protocol::{mean_handler, serve};

fn main() -> ExitCode {
    let mut stdin = BufReader::new(io::stdin().lock());
    let mut stdout = BufWriter::new(io::stdout().lock());
    match serve(&mut stdin, &mut stdout, mean_handler) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({"error": "protocol", "message": e.to_string()}));
            ExitCode::FAILURE
        }
    }
}

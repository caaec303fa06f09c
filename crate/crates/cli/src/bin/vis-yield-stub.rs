//! Test simulator for the external-bench line protocol: fails iff
//! `x[coord] >= threshold`, with switches that inject protocol faults.

use std::io::{self, BufRead, Write};
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use clap::Parser;

#[derive(Parser)]
#[command(about = "Line-protocol simulator stub: fails iff x[coord] >= threshold")]
struct Args {
    #[arg(long, default_value_t = 0)]
    coord: usize,
    #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
    threshold: f64,
    /// Reply `2` to the n-th EVAL (1-based).
    #[arg(long)]
    malformed_at: Option<usize>,
    /// Exit without replying to the n-th EVAL.
    #[arg(long)]
    exit_at: Option<usize>,
    /// Sleep before replying to the n-th EVAL.
    #[arg(long)]
    sleep_at: Option<usize>,
    #[arg(long, default_value_t = 60_000)]
    sleep_ms: u64,
    /// Answer the handshake with something other than READY.
    #[arg(long)]
    bad_hello: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    let mut evals = 0usize;
    for line in stdin.lock().lines() {
        let Ok(line) = line else { return ExitCode::FAILURE };
        let mut words = line.split_whitespace();
        let reply = match words.next() {
            Some("HELLO") if args.bad_hello => "NOPE".to_string(),
            Some("HELLO") => "READY".to_string(),
            Some("EVAL") => {
                evals += 1;
                if args.exit_at == Some(evals) {
                    return ExitCode::SUCCESS;
                }
                if args.sleep_at == Some(evals) {
                    thread::sleep(Duration::from_millis(args.sleep_ms));
                }
                if args.malformed_at == Some(evals) {
                    "2".to_string()
                } else {
                    let x: Vec<f64> = match words.map(str::parse).collect() {
                        Ok(x) => x,
                        Err(_) => return ExitCode::FAILURE,
                    };
                    match x.get(args.coord) {
                        Some(&v) if v >= args.threshold => "FAIL".to_string(),
                        Some(_) => "PASS".to_string(),
                        None => return ExitCode::FAILURE,
                    }
                }
            }
            Some("QUIT") => return ExitCode::SUCCESS,
            _ => return ExitCode::FAILURE,
        };
        if writeln!(out, "{reply}").and_then(|_| out.flush()).is_err() {
            return ExitCode::FAILURE;
        }
    }
    ExitCode::SUCCESS
}

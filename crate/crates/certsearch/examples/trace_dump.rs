//! Solves an `sdp-dump` file and prints the interior-point trace.
//!
//! cargo run --release --example trace_dump -- crates/certsearch/tests/fixtures/sdp/random_00.sdp

use std::path::Path;
use std::process::ExitCode;

use certsearch::dump::read_dump_file;
use certsearch::model::sdp::{solve, SolverOptions};

fn main() -> ExitCode {
    let Some(path) = std::env::args().nth(1) else {
        eprintln!("usage: trace_dump <file.sdp>");
        return ExitCode::from(2);
    };
    let p = match read_dump_file(Path::new(&path)) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let opts = SolverOptions {
        trace: true,
        ..Default::default()
    };
    let sol = match solve(&p, &opts) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    for t in &sol.trace {
        println!(
            "{:3} mu {:.2e} pinf {:.2e} dinf {:.2e} p {:.12} d {:.12} gap {:.2e}",
            t.iter, t.mu, t.primal_infeasibility, t.dual_infeasibility, t.primal_obj, t.dual_obj, t.gap
        );
    }
    println!("{:?} primal {} dual {}", sol.status, sol.primal_obj, sol.dual_obj);
    ExitCode::SUCCESS
}

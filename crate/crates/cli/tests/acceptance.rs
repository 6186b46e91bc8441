//! Runs the full acceptance suite and prints one line per criterion.
//!
//! Set `RWRE_ACCEPTANCE_STRICT=1` to exit non-zero when a criterion fails.

use rwre_cli::acceptance::{run_suite, DEFAULT_SEED};

fn main() {
    rwre_cli::init_threads().expect("RWRE_THREADS");
    let dir = tempfile::tempdir().expect("temp dir");
    println!("running acceptance suite, seed {DEFAULT_SEED}");
    let outcomes = run_suite(&[], DEFAULT_SEED, dir.path(), &mut |o| println!("{}", o.line())).expect("suite runs");
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!("acceptance: {}/{} passed", outcomes.len() - failed.len(), outcomes.len());
    if !failed.is_empty() {
        println!("failing criteria: {failed:?}");
        if std::env::var("RWRE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}

//! Runs the full verification suite and prints one line per criterion.

use std::process::ExitCode;

fn main() -> ExitCode {
    let results = btn_core::acceptance::run_with(|c| println!("{c}"));
    let failed = results.iter().filter(|c| !c.passed).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

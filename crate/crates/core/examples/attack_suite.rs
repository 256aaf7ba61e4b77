//! Runs every bundled attack scenario and prints the resilience matrix, or
//! a single scenario file given on the command line.
//!
//! ```bash
//! cargo run --release --example attack_suite
//! cargo run --release --example attack_suite -- crates/core/scenarios/storage.scn
//! ```

use medchain::scenario::{attack_suite, run_scenario, Scenario};

fn main() {
    if let Some(path) = std::env::args().nth(1) {
        let text = std::fs::read_to_string(&path).expect("readable scenario file");
        let scenario = Scenario::parse(&text).unwrap_or_else(|e| panic!("{path}: {e}"));
        let report = run_scenario(&scenario).expect("scenario runs");
        print!("{}", report.render_text());
        return;
    }
    let suite = attack_suite(None, &mut |line| {
        if line.starts_with("running") {
            eprintln!("{line}");
        }
    })
    .expect("bundled scenarios parse");
    print!("{}", suite.render_text());
}

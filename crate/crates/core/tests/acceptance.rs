//! Full verification battery at its stated tolerances. Prints one line per
//! criterion and exits non-zero if any of them fails.

use exitmass_core::verify::{run_battery, VerifyConfig};

fn main() {
    let summary = run_battery(&VerifyConfig::default()).expect("battery configuration is valid");
    println!("acceptance: {} criteria", summary.outcomes.len());
    for line in summary.lines() {
        println!("{line}");
    }
    let failed = summary.outcomes.iter().filter(|o| !o.pass).count();
    println!(
        "acceptance result: {} passed; {failed} failed; {:.1}s",
        summary.outcomes.len() - failed,
        summary.wall_seconds
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Full acceptance suite at the desk profile, one line per criterion.
//! `HYPERWALK_PROFILE=smoke` runs the reduced suite instead.

use std::process::ExitCode;

use hyperwalk::acceptance::{run_suite, Status};
use hyperwalk::config::Profile;

fn main() -> ExitCode {
    // cargo passes harness flags such as --nocapture; none apply here
    let profile = std::env::var("HYPERWALK_PROFILE")
        .ok()
        .map(|s| s.parse::<Profile>().expect("HYPERWALK_PROFILE"))
        .unwrap_or(Profile::Desk);
    println!("acceptance suite, profile {profile}");
    let outcomes = run_suite(profile, 1, None, |o| {
        println!("{}", o.line());
        for n in &o.notes {
            println!("       {n}");
        }
    });
    let failed: Vec<u8> = outcomes.iter().filter(|o| o.status == Status::Fail).map(|o| o.id).collect();
    if failed.is_empty() {
        println!("all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}

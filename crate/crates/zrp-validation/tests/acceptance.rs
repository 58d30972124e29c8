//! One test per acceptance criterion, each printing a single report line.

use std::io::Write;

use zrp::verify::{run_one, VerifyConfig};

fn criterion(id: u8) {
    let report = run_one(id, &VerifyConfig::default()).expect("criterion exists");
    // Written to the raw handle so the line shows for passing tests too.
    writeln!(std::io::stderr(), "{}", report.line()).unwrap();
    assert!(report.pass, "criterion {id} failed");
}

#[test]
fn criterion_01_constants() {
    criterion(1);
}

#[test]
fn criterion_02_oracle_soundness() {
    criterion(2);
}

#[test]
fn criterion_03_sampler_exactness() {
    criterion(3);
}

#[test]
fn criterion_04_dynamics_stationarity() {
    criterion(4);
}

#[test]
fn criterion_05_law_of_large_numbers() {
    criterion(5);
}

#[test]
fn criterion_06_bernoulli_mixture() {
    criterion(6);
}

#[test]
fn criterion_07_fluctuation_laws() {
    criterion(7);
}

#[test]
fn criterion_08_moderate_deviations() {
    criterion(8);
}

#[test]
fn criterion_09_split_estimate() {
    criterion(9);
}

#[test]
fn criterion_10_bulk_fluctuations() {
    criterion(10);
}

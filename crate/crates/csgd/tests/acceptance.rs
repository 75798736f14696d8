//! Acceptance suite: one test per criterion, each printing its pass/fail
//! line. Run with `cargo test --test acceptance -- --nocapture` to see the
//! per-criterion details, or via the CLI: `csgd suite`.

use csgd::suite;

fn assert_criterion(result: suite::CheckResult) {
    println!("{}", result.line());
    assert!(
        result.passed,
        "criterion {} ({}) failed: {}",
        result.id, result.name, result.details
    );
}

#[test]
fn acceptance_01_compressor_contracts() {
    assert_criterion(suite::criterion_01_compressor_contracts());
}

#[test]
fn acceptance_02_linearity() {
    assert_criterion(suite::criterion_02_linearity());
}

#[test]
fn acceptance_03_corrected_iterate_identity() {
    assert_criterion(suite::criterion_03_corrected_iterate_identity());
}

#[test]
fn acceptance_04_error_bound() {
    assert_criterion(suite::criterion_04_error_bound());
}

#[test]
fn acceptance_05_descent_lemma() {
    assert_criterion(suite::criterion_05_descent_lemma());
}

#[test]
fn acceptance_06_fosp_at_desk_scale() {
    assert_criterion(suite::criterion_06_fosp_at_desk_scale());
}

#[test]
fn acceptance_07_sosp_escape() {
    assert_criterion(suite::criterion_07_sosp_escape());
}

#[test]
fn acceptance_08_sosp_fraction() {
    assert_criterion(suite::criterion_08_sosp_fraction());
}

#[test]
fn acceptance_09_coupling_growth() {
    assert_criterion(suite::criterion_09_coupling_growth());
}

#[test]
fn acceptance_10_beta_bounds() {
    assert_criterion(suite::criterion_10_beta_bounds());
}

#[test]
fn acceptance_11_communication_arithmetic() {
    assert_criterion(suite::criterion_11_communication_arithmetic());
}

#[test]
fn acceptance_12_distributed_equivalence() {
    assert_criterion(suite::criterion_12_distributed_equivalence());
}

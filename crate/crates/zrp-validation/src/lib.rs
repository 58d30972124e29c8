//! Acceptance suite; see `tests/acceptance.rs`.
//!
//! Each criterion is a separate test that prints one `[PASS]` or `[FAIL]`
//! line. Run with `cargo test -p zrp-validation -- --nocapture`.

//! Holds the acceptance suite in `tests/acceptance.rs`; run it with
//! `cargo test -p dpp-validation -- --nocapture` to see one line per criterion.

//! Holds the `acceptance` test target (`cargo test -p sketch-lstd-suite`).
//! It lives in its own package so a workspace test run finishes every unit
//! and integration test before starting the long suite.

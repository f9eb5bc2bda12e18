//! Holds the acceptance suite in `tests/acceptance.rs`. It lives in its own package so
//! that it runs after the unit, property and oracle suites of `sda-core`.

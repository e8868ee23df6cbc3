//! File formats shared by the `ileg` binary and its tests: the run
//! manifest, trajectory/gain/cost CSVs, and Monte-Carlo statistics output.

pub mod files;

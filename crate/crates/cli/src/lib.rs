//! Library side of the `mmc-hvdc` command: configuration parsing, the run
//! driver and output writers.

pub mod config;
pub mod output;
pub mod run;

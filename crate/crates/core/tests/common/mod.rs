//! Reference solvers and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

pub mod acc_synth;
pub mod eda_oracle;
pub mod hdbn_oracle;
pub mod hrv_oracle;
pub mod qp_oracle;
pub mod signals;
pub mod stats_oracle;

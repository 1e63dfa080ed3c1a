// SPDX-License-Identifier: Apache-2.0

//! Quickest change detection across many independent data streams.
//!
//! Every stream runs a cheap recursive local statistic (CUSUM, log-scale
//! Shiryaev–Roberts, or the two-sided Lorden–Pollak adaptive CUSUM). A fusion
//! center combines the local statistics through a shrinkage transform
//! `G_n = Σ_k h_k(W_{k,n})` and raises a global alarm at the first `n` with
//! `G_n ≥ a`. The crate also carries the Monte Carlo machinery needed to pick
//! `a` under an average-run-length constraint and to measure detection delays.

#![forbid(unsafe_code)]

pub mod calibration;
pub mod combiners;
pub mod detectors;
mod error;
pub mod experiments;
pub mod quantile;
pub mod rng;
pub mod simulation;
pub mod stream_models;

pub use calibration::{
    bayes_b1, calibrate_threshold, censoring_from_eta, chebyshev_threshold,
    chebyshev_threshold_with_log_mgf, clt_threshold, estimate_arl, estimate_stationary_moments,
    ArlEstimate, CalibrationResult, CalibrationTarget, CensoringPlan, StationaryMoments,
};
pub use combiners::{
    censored_messages, global_stat, hard_transform, soft_transform, top_r_sum, xs_stat,
    DetectorKind, Monitor, SchemeSpec, SensorMessage, Shrinkage, StepOutcome, XsWindowState,
};
pub use detectors::{CusumState, LpConfig, LpRegisters, Side, SrState, TwoSidedLpState};
pub use error::{Error, Result};
pub use experiments::{
    arl_bound_report, info_lower_bound, log_arl_bound, run_table, simulate_delay,
    transmission_fraction, CommReport, DelayCell, ExperimentSpec, LabeledScheme, TableResult,
    DEFAULT_DELAY_HORIZON,
};
pub use quantile::{normal_cdf, normal_quantile};
pub use rng::SeedSpec;
pub use stream_models::{ChangeScenario, GaussianShift, ObservationFamily, StreamModel};

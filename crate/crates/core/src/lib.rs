//! Data-driven prediction for building climate and the hierarchical
//! frequency-control stack built on top of it.
//!
//! The crate is organised around the control hierarchy:
//!
//! - [`data`]: operational time series, Hankel matrix assembly and the
//!   persistent-excitation check.
//! - [`ddp`]: the Hankel-based linear predictor (QP form and its KKT
//!   reformulation), the physical-consistency test and the adaptive
//!   update pipeline.
//! - [`robust`]: affine disturbance-feedback policies and exact box
//!   robustification of linear constraints.
//! - [`planner`]: day-ahead scenario optimization for the flexibility bid
//!   and the intraday-transaction recursion.
//! - [`controller`]: the 15-minute robust predictive controller, the
//!   4-second battery tracking law and the generic predictive-control
//!   entry point.
//! - [`sim`]: the synthetic two-timescale testbed (plant, battery, grid
//!   signal, weather, market ledger, comfort metrics).
//! - [`eval`]: prediction-quality metrics and hyperparameter sweeps.
//! - [`config`]: run configuration for the CLI workflows.
//!
//! Scenario sweeps, multi-seed experiments and per-scenario assembly run
//! data-parallel through [`exec`] when the `parallel` feature (default)
//! is enabled; disabling it yields a sequential build with the same API.

pub mod config;
pub mod controller;
pub mod data;
pub mod ddp;
pub mod eval;
pub mod exec;
pub mod planner;
pub mod qp;
pub mod robust;
pub mod sim;

//! Cryptocurrency asset-pricing factors, idiosyncratic volatility and
//! investor-base panel regressions.
//!
//! The pipeline runs in stages:
//!
//! 1. [`ingest`] loads prices, metadata, subreddit followers and the
//!    risk-free rate, computes daily returns and the eligible universe.
//! 2. [`factors`] builds daily MRKT, SMB and WML with weekly rebalancing.
//! 3. [`riskmodel`] fits CAPM and three-factor regressions per coin-month
//!    and extracts idiosyncratic volatility.
//! 4. [`characteristics`] computes monthly controls and the change in
//!    investor base, and assembles the lagged panel.
//! 5. [`econometrics`] estimates two-way fixed-effects regressions and
//!    variance inflation factors.
//!
//! [`synth`] generates data with known ground truth for all of the above,
//! and [`pipeline`] wires the stages together for the command-line tool.

pub mod characteristics;
pub mod config;
pub mod econometrics;
pub mod factors;
pub mod ingest;
pub mod month;
pub mod output;
pub mod pipeline;
pub mod riskmodel;
pub mod skiplog;
pub mod stats;
pub mod synth;

pub use month::Month;
pub use skiplog::{Reason, Skip};

//! Value-at-Risk forecasting with score-driven NIG models.
//!
//! The crate fits daily and intraday dynamic conditional score (DCS) filters
//! with normal inverse Gaussian (NIG) conditional returns, aggregates the
//! intraday forecasts into a daily loss distribution, and backtests the
//! resulting VaR forecasts.

pub mod dataprep;
pub mod dcs;
pub mod error;
pub mod backtest;
pub mod cli;
pub mod intraday;
pub mod io;
pub mod mcs;
pub mod nig;
pub mod numeric;
pub mod optim;
pub mod par;
pub mod special;

pub use error::{Error, Result};

//! Core of the NFT portfolio pipeline.
//!
//! This crate holds everything that does not touch the network:
//!
//! * [`model`] defines the dataset schema and the shared value types.
//! * [`extract`] scans raw marketplace response bodies for collections,
//!   token links and activity records.
//! * [`returns`] cleans trade series and computes the per-second compounded
//!   time-weighted return.
//! * [`optimize`] estimates moments on a calendar grid and finds the long-only
//!   maximum Sharpe portfolio.
//! * [`report`] renders allocations and return summaries as CSV or text tables.

pub mod extract;
pub mod model;
pub mod optimize;
pub mod report;
pub mod returns;

pub use model::{
    CollectionRef, Dataset, IntervalReturn, MomentEstimate, PortfolioAllocation,
    PriceSeries, ReturnSummary, TokenRef, TradeEvent,
};

//! A deterministic stand-in for the marketplace API.
//!
//! [`Fixture`]s are generated from a seed and served over plain HTTP by
//! [`serve`]. Every request is appended to a synchronized log, and faults
//! from the fixture's schedule are applied to the n-th matching request.

mod fixture;
mod server;

pub use fixture::{generate_fixture, Fault, FaultRule, Fixture, FixtureCollection, FixtureParams, FixtureToken, RequestMatcher};
pub use server::{serve, serve_with, ReplayError, ReplayServer, RequestRecord, ServeOptions};

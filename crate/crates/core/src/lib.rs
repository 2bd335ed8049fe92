//! Three-message feedback coding over a binary symmetric channel.
//!
//! The crate evaluates the max-posterior query strategy for three equiprobable
//! messages over BSC(p) with noiseless feedback: exact error probabilities by
//! forward dynamic programming, the optimal (Bellman) error over all
//! metric-state strategies, the "octopus" Markov chain of the decoder state,
//! the closed-form exponent bounds, and a seeded Monte Carlo cross-check.
//!
//! Exact work uses arbitrary-precision rationals; deep horizons use a
//! log-domain float accumulator.

pub mod belief;
pub mod bounds;
pub mod channel;
pub mod cli;
pub mod dp;
pub mod error;
pub mod exact;
pub mod hp;
pub mod montecarlo;
pub mod octopus;
#[doc(hidden)]
pub mod oracle;
pub mod report;
pub mod semiring;
pub mod strategy;

pub use belief::{MessageId, MetricState, PosteriorVec, ProbabilityMode, QuerySet};
pub use channel::{ArithmeticMode, ChannelParams, Seed};
pub use error::{Error, Result};
pub use strategy::{StrategyRule, TiePolicy};

//! Sequential first-price item auctions.
//!
//! The crate builds auction instances, computes subgame-perfect equilibria by
//! backward induction with stage-level elimination of weakly dominated bids,
//! verifies strategy profiles against one-shot deviations, and computes VCG
//! outcomes together with the item orderings derived from their augmenting
//! paths.

pub mod auction;
pub mod error;
pub mod instances;
pub mod money;
pub mod ordering;
pub mod solver;
pub mod valuation;
pub mod verifier;
pub mod vcg;

pub use auction::{GameState, Instance, ItemId, Outcome, PlayerId};
pub use error::{Error, Result};
pub use money::{money, Money, Utility, WelfareRatio};
pub use valuation::{ItemSet, Valuation};

//! Exact master equation for small populations: enumerate every allocation,
//! build the sparse generator, solve for the stationary law and compare
//! simulations against it.

mod solve;
mod space;
mod verify;

pub use solve::{
    closed_classes, detailed_balance, evolve_distribution, stationary, strongly_connected,
    ClosedClass, DetailedBalance, Stationary, DENSE_LIMIT,
};
pub use space::{build_master, count_compositions, StateSpace, TransitionMatrix, STATE_LIMIT};
pub use verify::{marginal_entropy, marginal_money, pooled_marginal, verify_simulation, VerificationReport};

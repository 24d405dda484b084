//! Model-construction coach for project funding decisions.
//!
//! A blackboard holds an influence diagram that grows from a five-node
//! core. Knowledge sources, keyed by variable type, coach the user through
//! decomposing each core uncertainty; a control cycle restricts attention
//! through a focus-node stack. The finished diagram is reduced back to the
//! core to produce the probability of technical success, expected present
//! values, a funding recommendation and a tornado sensitivity table.

pub mod idiag;
pub mod solve;
pub mod board;
pub mod ks;
pub mod engine;

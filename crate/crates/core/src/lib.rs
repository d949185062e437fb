//! Finite Markov decision processes and the Bellman-type operators that act
//! on their value functions.
//!
//! The crate is organised bottom-up:
//!
//! * [`mdp`] holds the finite MDP model, policies and value tables.
//! * [`operators`] implements the optimality, expectation, consistent and
//!   advantage operators together with the decaying β schedules used by the
//!   advantage operator.
//! * [`dp`] drives operators to their fixed points and provides an exact
//!   linear-solve oracle for policy evaluation.
//! * [`verify`] turns contraction, monotonicity, optimality preservation and
//!   gap increase into randomized, replayable checks.
//! * [`envs`], [`qlearning`] and [`harness`] form the tabular learning
//!   pipeline over MountainCar, CartPole and Acrobot.

pub mod dp;
pub mod envs;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod operators;
pub mod qlearning;
pub mod seed;
pub mod verify;

pub use error::{Error, Result};
pub use mdp::{Mdp, Policy, QTable, VTable};
pub use operators::{BetaSchedule, OperatorKind};

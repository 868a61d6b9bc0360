//! Latch-based logic locking toolkit: netlists, simulation, timing,
//! key constraints, key equivalence and a sequential SAT attack.

pub mod attack;
pub mod cnf;
pub mod constraints;
pub mod corpus;
pub mod equivalence;
pub mod locking;
pub mod netlist;
pub mod rng;
pub mod sim;
pub mod timing;

//! Optimal stochastic sensor scheduling on controlled continuous-time Markov
//! chains, together with the estimation and control bounds that the resulting
//! sampling frequencies support.
//!
//! The usual pipeline is
//! [`chain_model::build_matrices`] → [`policy_solver::solve_stationary`] →
//! [`chain_analysis::sampling_frequencies`], then either exact chain simulation
//! ([`chain_sim`]) or plant-level Monte Carlo through [`harness`].

pub mod chain_analysis;
pub mod chain_model;
pub mod chain_sim;
pub mod controllers;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod plant_models;
pub mod policy_solver;
pub mod rng;

pub use error::{Error, Result};

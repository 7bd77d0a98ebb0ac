//! Robust adversarial reinforcement learning with uncertainty-aware critic
//! ensembles.
//!
//! A protagonist and an adversary, each a soft actor-critic agent with an
//! ensemble of critics, play a zero-sum continuous-control game. Critic
//! outputs are combined as `mean + beta(n) * std`, where `beta` decays over
//! training so that early updates are optimistic and later ones settle on
//! the ensemble mean.

pub mod config;
pub mod exec;
pub mod export;
pub mod game;
pub mod harness;
pub mod nn;
pub mod plot;
pub mod sac;
pub mod tdu;

pub use exec::Exec;

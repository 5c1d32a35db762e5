//! Experiment harness for the context plane: a deterministic seed corpus
//! modeling a small consulting firm, a 200-query benchmark with ground-truth
//! relevance labels, four retrieval pipelines of increasing governance
//! strength, scripted attack sessions, freshness fault scenarios, and the
//! correctness experiment suite.

pub mod attacks;
pub mod baselines;
pub mod benchmark;
pub mod corpus;
pub mod correctness;
pub mod metrics;
pub mod report;
pub mod scenarios;
pub mod world;

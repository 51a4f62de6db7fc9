//! Generate-then-verify navigation over discrete viewpoint graphs.
//!
//! An agent reads a natural-language instruction, sees lettered textual
//! options at each viewpoint, samples several chain-of-thought candidates
//! from a text backend, checks them with true/false and masked-entity
//! verification queries, and executes the best-scoring action.

pub mod agent;
pub mod backend;
pub mod cli;
pub mod cot;
pub mod metrics;
pub mod textualizer;
pub mod trace;
pub mod util;
pub mod verify;
pub mod world;

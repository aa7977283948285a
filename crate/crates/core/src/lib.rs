//! Co-evolution of fireworks-algorithm programs and the prompt templates that produce them.

pub mod evolve;
pub mod fwa;
pub mod landing;
pub mod ledger;
pub mod llm;
pub mod problem;
pub mod prompt;
pub mod runner;
pub mod selection;

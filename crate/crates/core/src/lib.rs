//! Instruction and tool retrieval for long-running agent loops.

pub mod assembler;
pub mod cache;
pub mod corpus;
pub mod costmodel;
pub mod engine;
pub mod gate;
pub mod index;
pub mod report;
pub mod selector;
pub mod sim;
pub mod telemetry;
pub mod tokenize;

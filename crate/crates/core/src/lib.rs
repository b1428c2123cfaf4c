//! Seed-indexed synthetic scientific data repositories, privileged question
//! generation, grading, a tool service for agents and an evaluation harness.

pub mod seedstream;
pub mod taxonomy;
pub mod value;
pub mod repospec;
pub mod genmodel;
pub mod materializer;
pub mod qaengine;
pub mod grader;
pub mod toolserver;
pub mod evalharness;
pub mod config;
pub mod cli;

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod discretization;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod galerkin;
pub mod geometry;
pub mod integrator;
pub mod sparse;

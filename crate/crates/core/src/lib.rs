pub mod config;
pub mod error;
pub mod hamiltonian;
pub mod mixing;
pub mod operator;
pub mod lsq;
pub mod oscillation;
pub mod dynamics;
pub mod estimation;
pub mod cli;

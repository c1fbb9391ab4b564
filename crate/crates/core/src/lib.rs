//! Quantum-classical networks for seismic gather reconstruction.

pub mod autograd;
pub mod qsim;
pub mod qlayer;
pub mod models;
pub mod objectives;
pub mod seisdata;
pub mod trainer;
pub mod selftest;
pub mod cli;

//! Pseudo-Poincaré graph networks.
//!
//! The crate provides Poincaré-ball geometry kernels, the hyperbolic
//! normalization layer and its cascaded form, normalized GCN/GAT and
//! multi-relational scoring models, Riemannian optimization, dataset
//! handling, and a numeric verification harness. Everything runs on a
//! small f64 tensor engine with reverse-mode autodiff.

pub mod cli;
pub mod data;
pub mod geometry;
pub mod hypnorm;
pub mod layers;
pub mod metrics;
pub mod multirel;
pub mod optim;
pub mod tensor;
pub mod train;
pub mod verify;

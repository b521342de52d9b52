//! Learned mixed-order optimizers for denoising samples of low-dimensional
//! manifolds.
//!
//! A [`TraversalNetwork`] stores landmarks with local tangent models, a
//! graph of first-order edges between nearby landmarks and zero-order
//! "tunnels". The network is grown online from noisy samples
//! ([`online`]), then used at test time to locate a nearby landmark by
//! greedy descent ([`traversal`]) and project onto its tangent plane.

// `!(x > 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bench;
pub mod datagen;
pub mod error;
pub mod ipca;
pub mod linalg;
pub mod network;
pub mod online;
pub mod traversal;

pub use error::{Error, Result};
pub use network::{NetworkConfig, OpCount, TraversalMode, TraversalNetwork, VertexModel};

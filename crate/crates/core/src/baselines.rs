//! Exhaustive nearest-landmark search over the same landmarks a traversal
//! network uses, with the same cost conventions.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::sq_dist;
use crate::network::{OpCount, TraversalNetwork};

#[derive(Debug, Clone, PartialEq)]
pub struct NnResult {
    /// Lowest id among the closest landmarks.
    pub vertex: usize,
    pub sq_dist: f64,
    pub ops: OpCount,
}

/// Scans every landmark; costs `D·|Q|`.
pub fn nn_search(net: &TraversalNetwork, x: &[f64]) -> Result<NnResult> {
    net.check_point(x)?;
    if net.is_empty() {
        return Err(Error::EmptyNetwork);
    }
    let mut best = (0, f64::INFINITY);
    for j in 0..net.len() {
        let d = sq_dist(net.landmark(j), x);
        if d < best.1 {
            best = (j, d);
        }
    }
    Ok(NnResult {
        vertex: best.0,
        sq_dist: best.1,
        ops: OpCount {
            distance_mults: (net.ambient_dim() * net.len()) as u64,
            ..OpCount::default()
        },
    })
}

/// Cost of `q + U Uᵀ (x - q)` at a vertex with tangent dimension `l`.
pub fn projection_mults(ambient_dim: usize, tangent_dim: usize) -> u64 {
    2 * (ambient_dim * tangent_dim) as u64
}

/// Nearest landmark followed by projection onto its tangent plane.
pub fn nn_denoise(net: &TraversalNetwork, x: &[f64]) -> Result<(DVector<f64>, NnResult)> {
    let mut r = nn_search(net, x)?;
    let v = &net.vertices()[r.vertex];
    r.ops.gradient_mults += projection_mults(net.ambient_dim(), v.tangent_dim());
    Ok((v.project(x), r))
}

#![allow(dead_code)]

use manifold_traversal::linalg::pad_with_random_columns;
use manifold_traversal::{NetworkConfig, TraversalNetwork, VertexModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Square grid of `side x side` landmarks with spacing `h` on a random
/// 2-plane through a random origin in `R^dim`. Every vertex carries the
/// exact plane as its tangent and is linked to its 4-neighborhood.
pub struct AffineGrid {
    pub net: TraversalNetwork,
    pub origin: DVector<f64>,
    pub plane: DMatrix<f64>,
    pub side: usize,
    pub h: f64,
}

impl AffineGrid {
    pub fn new<R: Rng>(rng: &mut R, side: usize, dim: usize, h: f64) -> Self {
        let plane = pad_with_random_columns(DMatrix::zeros(dim, 0), 2, rng);
        let origin = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let cfg = NetworkConfig::with_default_schedule(0.01, 1.01 * h);
        let mut net = TraversalNetwork::new(dim, 2, cfg).unwrap();
        for a in 0..side {
            for b in 0..side {
                let c = DVector::from_column_slice(&[a as f64 * h, b as f64 * h]);
                net.add_vertex(VertexModel {
                    landmark: &origin + &plane * c,
                    basis: plane.clone(),
                    eigenvalues: vec![1.0, 1.0],
                    count: 1,
                })
                .unwrap();
            }
        }
        for a in 0..side {
            for b in 0..side {
                let id = a * side + b;
                if a + 1 < side {
                    net.connect_first_order(id, id + side).unwrap();
                }
                if b + 1 < side {
                    net.connect_first_order(id, id + 1).unwrap();
                }
            }
        }
        AffineGrid {
            net,
            origin,
            plane,
            side,
            h,
        }
    }

    /// Plane point with coordinates uniform over the grid extent padded by
    /// one cell, plus isotropic off-plane noise of scale `off`.
    pub fn sample<R: Rng>(&self, rng: &mut R, off: f64) -> Vec<f64> {
        let span = self.side as f64 * self.h;
        let c = DVector::from_column_slice(&[rng.random_range(-self.h..span), rng.random_range(-self.h..span)]);
        let mut x = &self.origin + &self.plane * c;
        let dim = x.len();
        let mut z = DVector::from_fn(dim, |_, _| off * rng.sample::<f64, _>(StandardNormal));
        z -= &self.plane * self.plane.tr_mul(&z);
        x += z;
        x.as_slice().to_vec()
    }
}

/// Random network: landmarks uniform in the unit cube, random orthonormal
/// tangents, first-order edges within a random radius and random tunnels.
pub fn random_network<R: Rng>(rng: &mut R, n: usize, dim: usize, d: usize) -> TraversalNetwork {
    let r_nbrs = rng.random_range(0.3..1.5);
    let cfg = NetworkConfig::with_default_schedule(0.01, r_nbrs);
    let mut net = TraversalNetwork::new(dim, d, cfg).unwrap();
    for _ in 0..n {
        let l = rng.random_range(0..=d);
        let basis = pad_with_random_columns(DMatrix::zeros(dim, 0), l, rng);
        net.add_vertex(VertexModel {
            landmark: DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0)),
            basis,
            eigenvalues: vec![0.0; l],
            count: 1,
        })
        .unwrap();
    }
    for u in 0..n {
        for v in u + 1..n {
            let d2: f64 = net
                .landmark(u)
                .iter()
                .zip(net.landmark(v))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2 <= r_nbrs * r_nbrs {
                net.connect_first_order(u, v).unwrap();
            }
        }
    }
    let tunnels = if n > 1 { rng.random_range(0..2 * n) } else { 0 };
    for _ in 0..tunnels {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            net.add_zero_order_edge(a, b).unwrap();
        }
    }
    net
}

pub fn random_point<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.2..1.2)).collect()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

//! Test-time optimizers over a fixed traversal network.
//!
//! All routines minimize `‖q - x‖` over landmarks and charge every
//! multiplication to an [`OpCount`]:
//!
//! * a tangent gradient `Uᵀ(x - q)` costs `D·l`,
//! * scoring one first-order arc costs `l` (inner product or residual),
//! * one squared ambient distance costs `D`.
//!
//! The current vertex's distance is computed once per visit, so a first-order
//! candidate costs one extra distance for the acceptance test and a
//! zero-order step costs one distance per candidate.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, sq_dist};
use crate::network::{OpCount, TraversalMode, TraversalNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Start,
    First,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraversalOutcome {
    pub terminal: usize,
    /// Visited vertices; the first entry is the start.
    pub trace: Vec<(usize, StepKind)>,
    pub ops: OpCount,
    /// False iff a step cap was hit.
    pub converged: bool,
    /// `‖q_terminal - x‖²`.
    pub terminal_sq_dist: f64,
    /// Set by [`traversal_101`] when the phase-I vertex had no zero-order arcs.
    pub zero_order_phase_skipped: bool,
}

/// Descent direction `U_iᵀ(x - q_i)`, the negated approximate Riemannian
/// gradient of `½‖q - x‖²` in tangent coordinates.
pub fn approx_gradient(net: &TraversalNetwork, i: usize, x: &[f64], ops: &mut OpCount) -> DVector<f64> {
    let v = &net.vertices()[i];
    ops.gradient_mults += (net.ambient_dim() * v.tangent_dim()) as u64;
    linalg::tangent_coords(&v.basis, v.landmark.as_slice(), x)
}

/// First-order neighbor maximizing `⟨g, ξ_{i→v}⟩`; `None` if there are no
/// neighbors or no positive inner product.
pub fn first_order_step(net: &TraversalNetwork, i: usize, g: &DVector<f64>, ops: &mut OpCount) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for arc in net.first_order_arcs(i) {
        ops.edge_mults += arc.embedding.len() as u64;
        let score = g.dot(&arc.embedding);
        best = match best {
            Some((b, s)) if s > score || (s == score && b < arc.to) => Some((b, s)),
            _ => Some((arc.to, score)),
        };
    }
    best.filter(|&(_, s)| s > 0.0).map(|(v, _)| v)
}

fn argmin_distance(
    net: &TraversalNetwork,
    candidates: impl Iterator<Item = usize>,
    x: &[f64],
    ops: &mut OpCount,
) -> Option<(usize, f64)> {
    let dim = net.ambient_dim() as u64;
    let mut best: Option<(usize, f64)> = None;
    for v in candidates {
        ops.distance_mults += dim;
        let dv = sq_dist(net.landmark(v), x);
        best = match best {
            Some((b, s)) if s < dv || (s == dv && b < v) => Some((b, s)),
            _ => Some((v, dv)),
        };
    }
    best
}

/// Zero-order neighbor of `i` closest to `x`, with its squared distance.
pub fn zero_order_step(net: &TraversalNetwork, i: usize, x: &[f64], ops: &mut OpCount) -> Option<(usize, f64)> {
    argmin_distance(net, net.zero_order_targets(i).iter().copied(), x, ops)
}

/// Mixed-order traversal in the network's configured mode.
pub fn manifold_traversal(net: &TraversalNetwork, x: &[f64], start: usize) -> Result<TraversalOutcome> {
    manifold_traversal_with_mode(net, x, start, net.config().mode)
}

/// Greedy descent on `‖q - x‖`: try the best-aligned first-order neighbor,
/// fall back to the best zero-order neighbor, stop when neither is strictly
/// closer than the current vertex.
pub fn manifold_traversal_with_mode(
    net: &TraversalNetwork,
    x: &[f64],
    start: usize,
    mode: TraversalMode,
) -> Result<TraversalOutcome> {
    net.check_point(x)?;
    net.vertex(start)?;
    let dim = net.ambient_dim() as u64;
    let max_steps = net.max_traversal_steps();
    let mut ops = OpCount::default();

    let mut current = start;
    ops.distance_mults += dim;
    let mut current_dist = sq_dist(net.landmark(start), x);
    let mut trace = vec![(start, StepKind::Start)];
    let mut converged = true;

    loop {
        if trace.len() > max_steps {
            converged = false;
            break;
        }
        let mut next: Option<(usize, f64, StepKind)> = None;

        if mode != TraversalMode::ZeroOrderOnly {
            let g = approx_gradient(net, current, x, &mut ops);
            if let Some(candidate) = first_order_step(net, current, &g, &mut ops) {
                ops.distance_mults += dim;
                let d = sq_dist(net.landmark(candidate), x);
                if d < current_dist {
                    next = Some((candidate, d, StepKind::First));
                }
            }
        }

        if next.is_none() && mode != TraversalMode::FirstOrderOnly {
            let best = if mode == TraversalMode::ZeroOrderOnly {
                let zero = net.zero_order_targets(current);
                let extra = net.first_order_neighbors(current).filter(|v| !zero.contains(v));
                argmin_distance(net, zero.iter().copied().chain(extra), x, &mut ops)
            } else {
                zero_order_step(net, current, x, &mut ops)
            };
            if let Some((candidate, d)) = best {
                if d < current_dist {
                    next = Some((candidate, d, StepKind::Zero));
                }
            }
        }

        match next {
            Some((v, d, kind)) => {
                current = v;
                current_dist = d;
                trace.push((v, kind));
                ops.steps += 1;
            }
            None => break,
        }
    }

    Ok(TraversalOutcome {
        terminal: current,
        trace,
        ops,
        converged,
        terminal_sq_dist: current_dist,
        zero_order_phase_skipped: false,
    })
}

/// `g` rescaled to norm `ra` when longer than `ra`.
fn clip_to_ball(g: &DVector<f64>, ra: f64) -> DVector<f64> {
    let n = g.norm();
    if n > ra {
        g * (ra / n)
    } else {
        g.clone()
    }
}

/// First-order neighbor minimizing `‖clip(g, ra) - ξ_{i→j}‖`.
pub fn first_order_step_projected(
    net: &TraversalNetwork,
    i: usize,
    g: &DVector<f64>,
    ra: f64,
    ops: &mut OpCount,
) -> Result<usize> {
    let target = clip_to_ball(g, ra);
    let mut best: Option<(usize, f64)> = None;
    for arc in net.first_order_arcs(i) {
        ops.edge_mults += arc.embedding.len() as u64;
        let r = linalg::sq_dist(target.as_slice(), arc.embedding.as_slice());
        best = match best {
            Some((b, s)) if s < r || (s == r && b < arc.to) => Some((b, s)),
            _ => Some((arc.to, r)),
        };
    }
    best.map(|(v, _)| v).ok_or(Error::IsolatedVertex(i))
}

/// Step radius and stopping tolerances for [`traversal_101`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params101 {
    pub ra: f64,
    pub eps1: f64,
    pub eps2: f64,
}

impl Params101 {
    pub fn validate(&self) -> Result<()> {
        if !(self.ra > 0.0 && self.eps2 > 0.0 && self.eps1 >= self.eps2) {
            return Err(Error::InvalidConfig(format!(
                "101 traversal needs ra > 0 and eps1 ≥ eps2 > 0, got ra = {}, eps1 = {}, eps2 = {}",
                self.ra, self.eps1, self.eps2
            )));
        }
        Ok(())
    }

    /// Knob defaults: `ra = R_nbrs - δ` with `δ` the smallest landmark
    /// separation, `eps1 = R_nbrs`, `eps2 = min(eps1, R_nbrs/2 + σ√d)`.
    pub fn defaults_for(net: &TraversalNetwork) -> Self {
        let cfg = net.config();
        let n = net.len();
        let mut delta = f64::INFINITY;
        for a in 0..n {
            for b in a + 1..n {
                delta = delta.min(sq_dist(net.landmark(a), net.landmark(b)));
            }
        }
        let delta = if delta.is_finite() { delta.sqrt() } else { 0.0 };
        let ra = if cfg.r_nbrs - delta > 0.0 {
            cfg.r_nbrs - delta
        } else {
            cfg.r_nbrs
        };
        let eps1 = cfg.r_nbrs;
        let eps2 = eps1.min(0.5 * cfg.r_nbrs + cfg.sigma * (net.intrinsic_dim() as f64).sqrt());
        Params101 { ra, eps1, eps2 }
    }
}

fn projected_descent(
    net: &TraversalNetwork,
    x: &[f64],
    mut current: usize,
    eps: f64,
    ra: f64,
    ops: &mut OpCount,
    trace: &mut Vec<(usize, StepKind)>,
) -> Result<(usize, bool)> {
    let max_steps = net.max_traversal_steps();
    let mut taken = 0;
    loop {
        let g = approx_gradient(net, current, x, ops);
        ops.gradient_mults += g.len() as u64;
        if g.norm() <= eps {
            return Ok((current, true));
        }
        if taken >= max_steps {
            return Ok((current, false));
        }
        current = first_order_step_projected(net, current, &g, ra, ops)?;
        trace.push((current, StepKind::First));
        ops.steps += 1;
        taken += 1;
    }
}

/// Three-phase traversal: projected first-order descent until the tangent
/// gradient norm is at most `eps1`, a single zero-order jump, then projected
/// first-order descent until it is at most `eps2`.
///
/// A phase-I vertex without zero-order arcs skips the jump and sets
/// `zero_order_phase_skipped`.
pub fn traversal_101(net: &TraversalNetwork, x: &[f64], params: Params101, start: usize) -> Result<TraversalOutcome> {
    params.validate()?;
    net.check_point(x)?;
    net.vertex(start)?;
    let mut ops = OpCount::default();
    let mut trace = vec![(start, StepKind::Start)];

    let (phase_one, ok_one) = projected_descent(net, x, start, params.eps1, params.ra, &mut ops, &mut trace)?;

    let mut skipped = false;
    let phase_two = match zero_order_step(net, phase_one, x, &mut ops) {
        Some((v, _)) => {
            trace.push((v, StepKind::Zero));
            ops.steps += 1;
            v
        }
        None => {
            skipped = true;
            phase_one
        }
    };

    let (terminal, ok_three) = projected_descent(net, x, phase_two, params.eps2, params.ra, &mut ops, &mut trace)?;

    Ok(TraversalOutcome {
        terminal,
        trace,
        ops,
        converged: ok_one && ok_three,
        terminal_sq_dist: sq_dist(net.landmark(terminal), x),
        zero_order_phase_skipped: skipped,
    })
}

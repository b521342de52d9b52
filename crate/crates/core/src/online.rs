//! Online growth of a traversal network from a stream of noisy samples.
//!
//! Each sample is routed by a mixed-order traversal. It is absorbed by the
//! terminal landmark when within that landmark's denoising radius; otherwise
//! an exhaustive scan either finds a landmark that accepts it (and a tunnel
//! is recorded from the terminal to it) or the sample becomes a new landmark.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::LabeledDataset;
use crate::error::{Error, Result};
use crate::ipca::SubspaceState;
use crate::linalg::{self, pad_with_random_columns, sq_dist, CompensatedSum};
use crate::network::{NetworkConfig, OpCount, TraversalMode, TraversalNetwork, VertexModel};
use crate::traversal::manifold_traversal_with_mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Inlier,
    Tunnel,
    NewLandmark,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Inlier => "inlier",
            EventKind::Tunnel => "tunnel",
            EventKind::NewLandmark => "new-landmark",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainEvent {
    pub kind: EventKind,
    /// The vertex that absorbed the sample, or the new landmark.
    pub vertex: usize,
    pub denoised: DVector<f64>,
    /// `‖x̂ - x♮‖²` when the clean sample was supplied.
    pub training_squared_error: Option<f64>,
}

/// Where the centered sample fed to the tangent update is anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Centering {
    /// At the landmark after the running-mean update.
    #[default]
    PostUpdate,
    /// At the landmark before the running-mean update.
    PreUpdate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LearnerOptions {
    /// Seeds the random tangent initialization of isolated landmarks.
    pub seed: u64,
    /// Start each traversal at the previous sample's vertex instead of 0.
    pub warm_start: bool,
    pub centering: Centering,
}

impl Default for LearnerOptions {
    fn default() -> Self {
        LearnerOptions {
            seed: 0,
            warm_start: false,
            centering: Centering::PostUpdate,
        }
    }
}

/// `R(N)² = c₁ (σ²D + σ²D / Nᵏ + c₂ σ² d)`.
pub fn denoising_radius_sq(count: u64, cfg: &NetworkConfig, ambient_dim: usize, intrinsic_dim: usize) -> f64 {
    let n = count.max(1) as f64;
    let s2 = cfg.sigma * cfg.sigma;
    let big = s2 * ambient_dim as f64;
    cfg.radius_c1 * (big + big / n.powf(cfg.radius_k) + cfg.radius_c2 * s2 * intrinsic_dim as f64)
}

pub fn denoising_radius(count: u64, cfg: &NetworkConfig, ambient_dim: usize, intrinsic_dim: usize) -> f64 {
    denoising_radius_sq(count, cfg, ambient_dim, intrinsic_dim).sqrt()
}

fn radius_sq_at(net: &TraversalNetwork, i: usize) -> f64 {
    denoising_radius_sq(
        net.vertices()[i].count,
        net.config(),
        net.ambient_dim(),
        net.intrinsic_dim(),
    )
}

/// Gram eigenvalues below this fraction of the largest count as rank-deficient.
const GRAM_RANK_TOL: f64 = 1e-12;

/// Sets the tangent basis of a freshly created landmark from its first-order
/// neighbors: top left singular directions of the normalized offsets
/// `(q_j - q_new) / ‖q_j - q_new‖`, padded with random orthonormal directions
/// up to `d` columns. Embeddings around the vertex are refreshed.
pub fn initialize_tangent<R: rand::Rng + ?Sized>(net: &mut TraversalNetwork, new_id: usize, rng: &mut R) -> Result<()> {
    let dim = net.ambient_dim();
    let d = net.intrinsic_dim();
    let origin = net.vertex(new_id)?.landmark.clone();
    let mut offsets: Vec<DVector<f64>> = Vec::new();
    for j in net.first_order_neighbors(new_id) {
        let h = DVector::from_column_slice(net.landmark(j)) - &origin;
        let n = h.norm();
        if n > 0.0 {
            offsets.push(h / n);
        }
    }

    let mut basis = DMatrix::zeros(dim, 0);
    if !offsets.is_empty() {
        let h = DMatrix::from_columns(&offsets);
        // left singular directions via the small Gram matrix Hᵀ H
        let eig = SymmetricEigen::new(h.tr_mul(&h));
        let lam = &eig.eigenvalues;
        let mut order: Vec<usize> = (0..lam.len()).collect();
        order.sort_by(|&a, &b| lam[b].total_cmp(&lam[a]));
        let top = lam[order[0]];
        let keep: Vec<usize> = order
            .into_iter()
            .filter(|&i| lam[i] > GRAM_RANK_TOL * top)
            .take(d)
            .collect();
        basis = DMatrix::zeros(dim, keep.len());
        for (c, &i) in keep.iter().enumerate() {
            let col = &h * eig.eigenvectors.column(i) / lam[i].sqrt();
            basis.set_column(c, &col);
        }
        linalg::modified_gram_schmidt(&mut basis);
    }
    let basis = pad_with_random_columns(basis, d, rng);

    let v = net.vertex_mut(new_id)?;
    v.eigenvalues = vec![0.0; basis.ncols()];
    v.basis = basis;
    net.refresh_embeddings_around(new_id)
}

/// Absorbs `x` into vertex `i`: running-mean landmark update, one incremental
/// PCA step on the centered sample, count increment and embedding refresh.
pub fn update_local_model(net: &mut TraversalNetwork, i: usize, x: &[f64], centering: Centering) -> Result<()> {
    net.check_point(x)?;
    let d = net.intrinsic_dim();
    let v = net.vertex_mut(i)?;
    let n = v.count as f64;
    let before = v.landmark.clone();
    for (q, &xi) in v.landmark.iter_mut().zip(x) {
        *q = (n * *q + xi) / (n + 1.0);
    }
    let anchor = match centering {
        Centering::PostUpdate => &v.landmark,
        Centering::PreUpdate => &before,
    };
    let centered: Vec<f64> = x.iter().zip(anchor.iter()).map(|(a, b)| a - b).collect();
    let mut state = SubspaceState {
        basis: std::mem::replace(&mut v.basis, DMatrix::zeros(0, 0)),
        eigenvalues: std::mem::take(&mut v.eigenvalues),
        seen: v.count as usize,
    };
    state.update(&centered, d);
    v.basis = state.basis;
    v.eigenvalues = state.eigenvalues;
    v.count += 1;
    net.refresh_embeddings_around(i)
}

/// Stateful wrapper around a growing network.
#[derive(Debug, Clone)]
pub struct OnlineLearner {
    net: TraversalNetwork,
    options: LearnerOptions,
    rng: ChaCha8Rng,
    previous: Option<usize>,
    training_ops: OpCount,
}

impl OnlineLearner {
    pub fn new(
        ambient_dim: usize,
        intrinsic_dim: usize,
        config: NetworkConfig,
        options: LearnerOptions,
    ) -> Result<Self> {
        Ok(Self::from_network(
            TraversalNetwork::new(ambient_dim, intrinsic_dim, config)?,
            options,
        ))
    }

    pub fn from_network(net: TraversalNetwork, options: LearnerOptions) -> Self {
        OnlineLearner {
            net,
            rng: ChaCha8Rng::seed_from_u64(options.seed),
            options,
            previous: None,
            training_ops: OpCount::default(),
        }
    }

    pub fn network(&self) -> &TraversalNetwork {
        &self.net
    }

    pub fn into_network(self) -> TraversalNetwork {
        self.net
    }

    /// Multiplications spent in traversals and exhaustive scans during
    /// training; kept apart from any test-time ledger.
    pub fn training_ops(&self) -> OpCount {
        self.training_ops
    }

    fn new_landmark(&mut self, x: &[f64], sq_dists: &[f64]) -> Result<usize> {
        let id = self.net.add_vertex(VertexModel {
            landmark: DVector::from_column_slice(x),
            basis: DMatrix::zeros(self.net.ambient_dim(), 0),
            eigenvalues: Vec::new(),
            count: 1,
        })?;
        let r2 = self.net.config().r_nbrs * self.net.config().r_nbrs;
        for (j, &dj) in sq_dists.iter().enumerate() {
            if dj <= r2 {
                self.net.connect_first_order(id, j)?;
            }
        }
        initialize_tangent(&mut self.net, id, &mut self.rng)?;
        Ok(id)
    }

    /// Processes one noisy sample; `clean` only feeds the reported error.
    pub fn process_sample(&mut self, x: &[f64], clean: Option<&[f64]>) -> Result<TrainEvent> {
        self.net.check_point(x)?;
        if let Some(c) = clean {
            self.net.check_point(c)?;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite sample".into()));
        }

        let (kind, vertex, denoised) = if self.net.is_empty() {
            let id = self.new_landmark(x, &[])?;
            (EventKind::NewLandmark, id, DVector::from_column_slice(x))
        } else {
            let start = if self.options.warm_start {
                self.previous.unwrap_or(0)
            } else {
                0
            };
            let outcome = manifold_traversal_with_mode(&self.net, x, start, TraversalMode::Mixed)?;
            self.training_ops += outcome.ops;
            let i = outcome.terminal;

            if outcome.terminal_sq_dist <= radius_sq_at(&self.net, i) {
                let denoised = self.net.vertices()[i].project(x);
                update_local_model(&mut self.net, i, x, self.options.centering)?;
                (EventKind::Inlier, i, denoised)
            } else {
                let dim = self.net.ambient_dim() as u64;
                let sq_dists: Vec<f64> = (0..self.net.len()).map(|j| sq_dist(self.net.landmark(j), x)).collect();
                self.training_ops.distance_mults += dim * sq_dists.len() as u64;
                let (best, best_dist) =
                    sq_dists
                        .iter()
                        .copied()
                        .enumerate()
                        .fold(
                            (0, f64::INFINITY),
                            |acc, (j, dj)| if dj < acc.1 { (j, dj) } else { acc },
                        );

                if best_dist <= radius_sq_at(&self.net, best) {
                    // the terminal failed its own radius test, so best != i
                    debug_assert!(best != i && best_dist <= outcome.terminal_sq_dist);
                    let added = self.net.add_zero_order_edge(i, best)?;
                    debug_assert!(added, "terminal already had an arc to a closer vertex");
                    let denoised = self.net.vertices()[best].project(x);
                    update_local_model(&mut self.net, best, x, self.options.centering)?;
                    (EventKind::Tunnel, best, denoised)
                } else {
                    let id = self.new_landmark(x, &sq_dists)?;
                    (EventKind::NewLandmark, id, DVector::from_column_slice(x))
                }
            }
        };

        self.previous = Some(vertex);
        let training_squared_error = clean.map(|c| sq_dist(denoised.as_slice(), c));
        if training_squared_error.is_some_and(|e| !e.is_finite()) {
            return Err(Error::Numeric("non-finite denoising error".into()));
        }
        Ok(TrainEvent {
            kind,
            vertex,
            denoised,
            training_squared_error,
        })
    }
}

/// One sampled point of the training curve plus network size telemetry.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CurvePoint {
    pub n: usize,
    pub running_mse: f64,
    pub num_landmarks: usize,
    pub num_first_order_edges: usize,
    pub num_zero_order_edges: usize,
    pub event_kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainOptions {
    pub learner: LearnerOptions,
    /// Curve sampling period, in samples.
    pub cadence: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            learner: LearnerOptions::default(),
            cadence: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub network: TraversalNetwork,
    pub curve: Vec<CurvePoint>,
    pub event_counts: [usize; 3],
    pub training_ops: OpCount,
}

/// Streams the whole dataset through a fresh learner. The curve has one
/// entry every `cadence` samples plus one for the final sample.
pub fn train(dataset: &LabeledDataset, config: &NetworkConfig, options: TrainOptions) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::Format("training stream is empty".into()));
    }
    if options.cadence == 0 {
        return Err(Error::InvalidConfig("cadence must be at least 1".into()));
    }
    let mut learner = OnlineLearner::new(
        dataset.ambient_dim(),
        dataset.intrinsic_dim_hint(),
        config.clone(),
        options.learner,
    )?;
    let mut curve = Vec::with_capacity(dataset.len().div_ceil(options.cadence));
    let mut sum = CompensatedSum::default();
    let mut counts = [0usize; 3];
    for k in 0..dataset.len() {
        let event = learner.process_sample(dataset.noisy_row(k), Some(dataset.clean_row(k)))?;
        sum.add(event.training_squared_error.unwrap_or(0.0));
        counts[event.kind as usize] += 1;
        let n = k + 1;
        if n % options.cadence == 0 || n == dataset.len() {
            let net = learner.network();
            curve.push(CurvePoint {
                n,
                running_mse: sum.value() / n as f64,
                num_landmarks: net.len(),
                num_first_order_edges: net.num_first_order_edges(),
                num_zero_order_edges: net.num_zero_order_edges(),
                event_kind: event.kind,
            });
        }
    }
    let training_ops = learner.training_ops();
    Ok(TrainReport {
        network: learner.into_network(),
        curve,
        event_counts: counts,
        training_ops,
    })
}

/// Telemetry CSV: `n,runningMSE,numLandmarks,numFirstOrderEdges,numZeroOrderEdges,eventKind`.
pub fn write_telemetry_csv<W: std::io::Write>(curve: &[CurvePoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "n",
        "runningMSE",
        "numLandmarks",
        "numFirstOrderEdges",
        "numZeroOrderEdges",
        "eventKind",
    ])?;
    for p in curve {
        out.write_record([
            p.n.to_string(),
            format!("{:e}", p.running_mse),
            p.num_landmarks.to_string(),
            p.num_first_order_edges.to_string(),
            p.num_zero_order_edges.to_string(),
            p.event_kind.as_str().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

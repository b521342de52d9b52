//! The traversal network: landmarks with local affine models, first-order
//! edges carrying tangent-space embeddings, and directed zero-order edges.
//!
//! Vertex ids are dense indices in insertion order. Edge embeddings are
//! cached per directed first-order arc; whoever moves a landmark or rotates a
//! basis must call [`TraversalNetwork::refresh_embeddings_around`].

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, tangent_coords};

/// Current version of the network JSON document.
pub const NETWORK_FORMAT_VERSION: u32 = 1;

/// Which edge kinds a traversal may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TraversalMode {
    #[default]
    Mixed,
    FirstOrderOnly,
    /// First-order arcs are evaluated as zero-order candidates.
    ZeroOrderOnly,
}

impl fmt::Display for TraversalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraversalMode::Mixed => "mixed",
            TraversalMode::FirstOrderOnly => "first-order-only",
            TraversalMode::ZeroOrderOnly => "zero-order-only",
        })
    }
}

impl FromStr for TraversalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixed" => Ok(TraversalMode::Mixed),
            "first-order-only" | "first" => Ok(TraversalMode::FirstOrderOnly),
            "zero-order-only" | "zero" => Ok(TraversalMode::ZeroOrderOnly),
            other => Err(Error::InvalidConfig(format!("unknown traversal mode `{other}`"))),
        }
    }
}

/// Learner and traversal hyperparameters.
///
/// The denoising radius is `R(N)² = c₁ (σ²D + σ²D / Nᵏ + c₂ σ² d)`. A constant
/// radius `R² = b σ²D` is expressed as `c₁ = b / 2, c₂ = 0, k = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NetworkConfig {
    pub sigma: f64,
    /// First-order connection radius, ambient units.
    pub r_nbrs: f64,
    pub radius_c1: f64,
    pub radius_c2: f64,
    pub radius_k: f64,
    /// `None` means `10 · |Q|` at traversal time.
    #[serde(default)]
    pub max_traversal_steps: Option<usize>,
    #[serde(default)]
    pub mode: TraversalMode,
}

impl NetworkConfig {
    /// The base schedule `R(N)² = σ²D + σ²D/N + σ²d`.
    pub fn with_default_schedule(sigma: f64, r_nbrs: f64) -> Self {
        NetworkConfig {
            sigma,
            r_nbrs,
            radius_c1: 1.0,
            radius_c2: 1.0,
            radius_k: 1.0,
            max_traversal_steps: None,
            mode: TraversalMode::Mixed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::InvalidConfig(format!("{field}: {why}")));
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad("sigma", "must be finite and nonnegative");
        }
        if !(self.r_nbrs.is_finite() && self.r_nbrs > 0.0) {
            return bad("rNbrs", "must be finite and positive");
        }
        if !(self.radius_c1.is_finite() && self.radius_c1 > 0.0) {
            return bad("radiusC1", "must be finite and positive");
        }
        if !(self.radius_c2.is_finite() && self.radius_c2 >= 0.0) {
            return bad("radiusC2", "must be finite and nonnegative");
        }
        if !(self.radius_k.is_finite() && self.radius_k >= 0.0) {
            return bad("radiusK", "must be finite and nonnegative");
        }
        if self.max_traversal_steps == Some(0) {
            return bad("maxTraversalSteps", "must be at least 1");
        }
        Ok(())
    }
}

/// Multiplication ledger for one traversal or search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OpCount {
    /// Tangent projections: gradients and local-model denoising.
    pub gradient_mults: u64,
    /// Inner products / residuals against first-order edge embeddings.
    pub edge_mults: u64,
    /// Squared ambient distances.
    pub distance_mults: u64,
    /// Accepted moves.
    pub steps: u64,
}

impl OpCount {
    pub fn total(&self) -> u64 {
        self.gradient_mults + self.edge_mults + self.distance_mults
    }
}

impl std::ops::AddAssign for OpCount {
    fn add_assign(&mut self, rhs: Self) {
        self.gradient_mults += rhs.gradient_mults;
        self.edge_mults += rhs.edge_mults;
        self.distance_mults += rhs.distance_mults;
        self.steps += rhs.steps;
    }
}

/// One landmark's local affine model.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexModel {
    pub landmark: DVector<f64>,
    /// `D x l` with orthonormal columns, `l ≤ d`.
    pub basis: DMatrix<f64>,
    /// Nonincreasing, nonnegative, one per basis column.
    pub eigenvalues: Vec<f64>,
    /// Number of samples absorbed (≥ 1).
    pub count: u64,
}

impl VertexModel {
    /// Checks the structural invariants against an ambient dimension.
    pub fn validate(&self, ambient_dim: usize, intrinsic_dim: usize) -> Result<()> {
        if self.landmark.len() != ambient_dim {
            return Err(Error::DimensionMismatch {
                what: "landmark",
                expected: ambient_dim,
                got: self.landmark.len(),
            });
        }
        if self.basis.nrows() != ambient_dim {
            return Err(Error::DimensionMismatch {
                what: "basis rows",
                expected: ambient_dim,
                got: self.basis.nrows(),
            });
        }
        if self.basis.ncols() > intrinsic_dim {
            return Err(Error::Format(format!(
                "basis has {} columns, more than intrinsic dimension {intrinsic_dim}",
                self.basis.ncols()
            )));
        }
        if self.eigenvalues.len() != self.basis.ncols() {
            return Err(Error::DimensionMismatch {
                what: "eigenvalues",
                expected: self.basis.ncols(),
                got: self.eigenvalues.len(),
            });
        }
        if self.count == 0 {
            return Err(Error::Format("vertex count must be at least 1".into()));
        }
        if self.eigenvalues.iter().any(|&e| !(e >= 0.0)) || self.eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Format(
                "eigenvalues must be nonnegative and nonincreasing".into(),
            ));
        }
        if self.landmark.iter().chain(self.basis.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite value in vertex model".into()));
        }
        if linalg::orthonormality_drift(&self.basis) > 1e-8 {
            return Err(Error::Format("basis columns are not orthonormal".into()));
        }
        Ok(())
    }

    pub fn tangent_dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Projection onto the affine tangent model: `q + U Uᵀ (x - q)`.
    pub fn project(&self, x: &[f64]) -> DVector<f64> {
        let coords = tangent_coords(&self.basis, self.landmark.as_slice(), x);
        linalg::lift(&self.basis, self.landmark.as_slice(), coords.as_slice())
    }
}

/// A directed first-order arc with its cached embedding `U_fromᵀ (q_to - q_from)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderArc {
    pub to: usize,
    pub embedding: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct TraversalNetwork {
    ambient_dim: usize,
    intrinsic_dim: usize,
    config: NetworkConfig,
    vertices: Vec<VertexModel>,
    first_order: Vec<Vec<FirstOrderArc>>,
    zero_order: Vec<Vec<usize>>,
    // creation order, used to make serialization canonical
    first_order_log: Vec<(usize, usize)>,
    zero_order_log: Vec<(usize, usize)>,
}

impl TraversalNetwork {
    pub fn new(ambient_dim: usize, intrinsic_dim: usize, config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        if ambient_dim == 0 || intrinsic_dim == 0 || intrinsic_dim > ambient_dim {
            return Err(Error::InvalidConfig(format!(
                "need 1 ≤ d ≤ D, got D = {ambient_dim}, d = {intrinsic_dim}"
            )));
        }
        Ok(TraversalNetwork {
            ambient_dim,
            intrinsic_dim,
            config,
            vertices: Vec::new(),
            first_order: Vec::new(),
            zero_order: Vec::new(),
            first_order_log: Vec::new(),
            zero_order_log: Vec::new(),
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[VertexModel] {
        &self.vertices
    }

    pub fn vertex(&self, id: usize) -> Result<&VertexModel> {
        self.vertices.get(id).ok_or(Error::InvalidVertex(id))
    }

    pub fn landmark(&self, id: usize) -> &[f64] {
        self.vertices[id].landmark.as_slice()
    }

    pub fn first_order_arcs(&self, id: usize) -> &[FirstOrderArc] {
        &self.first_order[id]
    }

    pub fn first_order_neighbors(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        self.first_order[id].iter().map(|a| a.to)
    }

    pub fn zero_order_targets(&self, id: usize) -> &[usize] {
        &self.zero_order[id]
    }

    pub fn first_order_degree(&self, id: usize) -> usize {
        self.first_order[id].len()
    }

    pub fn zero_order_degree(&self, id: usize) -> usize {
        self.zero_order[id].len()
    }

    /// Undirected first-order edges in creation order.
    pub fn first_order_edges(&self) -> &[(usize, usize)] {
        &self.first_order_log
    }

    /// Directed zero-order arcs in creation order.
    pub fn zero_order_edges(&self) -> &[(usize, usize)] {
        &self.zero_order_log
    }

    pub fn num_first_order_edges(&self) -> usize {
        self.first_order_log.len()
    }

    pub fn num_zero_order_edges(&self) -> usize {
        self.zero_order_log.len()
    }

    /// Effective step cap for traversals over this network.
    pub fn max_traversal_steps(&self) -> usize {
        self.config
            .max_traversal_steps
            .unwrap_or_else(|| 10 * self.vertices.len().max(1))
    }

    fn check_vertex(&self, id: usize) -> Result<()> {
        if id < self.vertices.len() {
            Ok(())
        } else {
            Err(Error::InvalidVertex(id))
        }
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.ambient_dim {
            return Err(Error::DimensionMismatch {
                what: "sample",
                expected: self.ambient_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn add_vertex(&mut self, model: VertexModel) -> Result<usize> {
        model.validate(self.ambient_dim, self.intrinsic_dim)?;
        self.vertices.push(model);
        self.first_order.push(Vec::new());
        self.zero_order.push(Vec::new());
        Ok(self.vertices.len() - 1)
    }

    pub fn has_first_order_edge(&self, u: usize, v: usize) -> bool {
        self.first_order
            .get(u)
            .is_some_and(|arcs| arcs.iter().any(|a| a.to == v))
    }

    pub fn has_zero_order_arc(&self, from: usize, to: usize) -> bool {
        self.zero_order.get(from).is_some_and(|t| t.contains(&to))
    }

    fn embedding(&self, from: usize, to: usize) -> DVector<f64> {
        tangent_coords(
            &self.vertices[from].basis,
            self.vertices[from].landmark.as_slice(),
            self.vertices[to].landmark.as_slice(),
        )
    }

    /// Records the undirected edge `u <-> v` and both arc embeddings. The
    /// radius rule is the caller's business.
    pub fn connect_first_order(&mut self, u: usize, v: usize) -> Result<()> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        if u == v {
            return Err(Error::SelfLoop(u));
        }
        if self.has_first_order_edge(u, v) {
            return Err(Error::DuplicateEdge(u, v));
        }
        let uv = self.embedding(u, v);
        let vu = self.embedding(v, u);
        self.first_order[u].push(FirstOrderArc { to: v, embedding: uv });
        self.first_order[v].push(FirstOrderArc { to: u, embedding: vu });
        self.first_order_log.push((u, v));
        Ok(())
    }

    /// Records the directed arc `from -> to`. Returns whether it was new.
    pub fn add_zero_order_edge(&mut self, from: usize, to: usize) -> Result<bool> {
        self.check_vertex(from)?;
        self.check_vertex(to)?;
        if from == to {
            return Err(Error::SelfLoop(from));
        }
        if self.has_zero_order_arc(from, to) {
            return Ok(false);
        }
        self.zero_order[from].push(to);
        self.zero_order_log.push((from, to));
        Ok(true)
    }

    /// Mutable access to a vertex model. Call
    /// [`refresh_embeddings_around`](Self::refresh_embeddings_around) after
    /// changing its landmark or basis.
    pub fn vertex_mut(&mut self, id: usize) -> Result<&mut VertexModel> {
        self.vertices.get_mut(id).ok_or(Error::InvalidVertex(id))
    }

    /// Recomputes `ξ_{i→j}` for every neighbor `j`, and `ξ_{j→i}` at each
    /// neighbor since `q_i` may have moved.
    pub fn refresh_embeddings_around(&mut self, i: usize) -> Result<()> {
        self.check_vertex(i)?;
        let targets: Vec<usize> = self.first_order[i].iter().map(|a| a.to).collect();
        for (slot, &j) in targets.iter().enumerate() {
            let out = self.embedding(i, j);
            self.first_order[i][slot].embedding = out;
            let back = self.embedding(j, i);
            if let Some(arc) = self.first_order[j].iter_mut().find(|a| a.to == i) {
                arc.embedding = back;
            }
        }
        Ok(())
    }

    /// Largest deviation of any cached embedding from its defining formula.
    pub fn max_embedding_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (u, arcs) in self.first_order.iter().enumerate() {
            for arc in arcs {
                let fresh = self.embedding(u, arc.to);
                worst = worst.max((&fresh - &arc.embedding).amax());
            }
        }
        worst
    }

    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            version: NETWORK_FORMAT_VERSION,
            ambient_dim: self.ambient_dim,
            intrinsic_dim: self.intrinsic_dim,
            config: self.config.clone(),
            vertices: self
                .vertices
                .iter()
                .map(|v| VertexRecord {
                    landmark: v.landmark.as_slice().to_vec(),
                    basis: v.basis.column_iter().map(|c| c.iter().copied().collect()).collect(),
                    eigenvalues: v.eigenvalues.clone(),
                    count: v.count,
                })
                .collect(),
            first_order: self
                .first_order_log
                .iter()
                .map(|&(u, v)| UndirectedEdge { u, v })
                .collect(),
            zero_order: self
                .zero_order_log
                .iter()
                .map(|&(from, to)| DirectedEdge { from, to })
                .collect(),
        }
    }

    /// Rebuilds a network from its document; embeddings are recomputed.
    pub fn from_document(doc: NetworkDocument) -> Result<Self> {
        if doc.version != NETWORK_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "version: unsupported network format version {}",
                doc.version
            )));
        }
        let mut net = TraversalNetwork::new(doc.ambient_dim, doc.intrinsic_dim, doc.config)?;
        for (id, rec) in doc.vertices.into_iter().enumerate() {
            let cols = rec.basis.len();
            let mut data = Vec::with_capacity(cols * doc.ambient_dim);
            for (c, col) in rec.basis.iter().enumerate() {
                if col.len() != doc.ambient_dim {
                    return Err(Error::Format(format!(
                        "vertices[{id}].basis[{c}]: expected {} entries, got {}",
                        doc.ambient_dim,
                        col.len()
                    )));
                }
                data.extend_from_slice(col);
            }
            let model = VertexModel {
                landmark: DVector::from_vec(rec.landmark),
                basis: DMatrix::from_vec(doc.ambient_dim, cols, data),
                eigenvalues: rec.eigenvalues,
                count: rec.count,
            };
            net.add_vertex(model)
                .map_err(|e| Error::Format(format!("vertices[{id}]: {e}")))?;
        }
        for (k, e) in doc.first_order.iter().enumerate() {
            net.connect_first_order(e.u, e.v)
                .map_err(|err| Error::Format(format!("firstOrder[{k}]: {err}")))?;
        }
        for (k, e) in doc.zero_order.iter().enumerate() {
            let fresh = net
                .add_zero_order_edge(e.from, e.to)
                .map_err(|err| Error::Format(format!("zeroOrder[{k}]: {err}")))?;
            if !fresh {
                return Err(Error::Format(format!("zeroOrder[{k}]: duplicate arc")));
            }
        }
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(&self.to_document())?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: NetworkDocument = serde_json::from_str(s)?;
        Self::from_document(doc)
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_json()?.as_bytes())?;
        Ok(())
    }

    pub fn read_json<R: Read>(mut r: R) -> Result<Self> {
        let mut s = String::new();
        r.read_to_string(&mut s)?;
        Self::from_json(&s)
    }
}

/// On-disk form of a network. Embeddings are not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NetworkDocument {
    pub version: u32,
    pub ambient_dim: usize,
    pub intrinsic_dim: usize,
    pub config: NetworkConfig,
    pub vertices: Vec<VertexRecord>,
    pub first_order: Vec<UndirectedEdge>,
    pub zero_order: Vec<DirectedEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexRecord {
    pub landmark: Vec<f64>,
    /// Column-major: one inner array per basis column.
    pub basis: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndirectedEdge {
    pub u: usize,
    pub v: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectedEdge {
    pub from: usize,
    pub to: usize,
}

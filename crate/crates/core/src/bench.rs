//! Accuracy versus multiplication-count evaluation of trained networks.
//!
//! Test points are denoised independently against a frozen network, in
//! parallel, and aggregated in index order with compensated summation so
//! the numbers do not depend on the thread count.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{nn_search, projection_mults};
use crate::datagen::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{sq_dist, CompensatedSum};
use crate::network::{NetworkConfig, OpCount, TraversalMode, TraversalNetwork};
use crate::online::{train, TrainOptions};
use crate::traversal::{manifold_traversal_with_mode, traversal_101, Params101};

/// Environment variable capping evaluation threads.
pub const THREADS_ENV: &str = "MT_THREADS";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Mixed,
    Nn,
    FirstOnly,
    ZeroOnly,
    Traversal101(Params101),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Mixed => "mixed",
            Method::Nn => "nn",
            Method::FirstOnly => "first-only",
            Method::ZeroOnly => "zero-only",
            Method::Traversal101(_) => "101",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses the parameter-free methods.
impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixed" => Ok(Method::Mixed),
            "nn" => Ok(Method::Nn),
            "first" | "first-only" => Ok(Method::FirstOnly),
            "zero" | "zero-only" => Ok(Method::ZeroOnly),
            _ => Err(Error::InvalidConfig(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub terminal: usize,
    /// `‖q_terminal - x‖²`.
    pub terminal_sq_dist: f64,
    pub denoised: DVector<f64>,
    pub ops: OpCount,
    pub converged: bool,
}

/// Locates a landmark for `x` with `method`, starting at vertex `start`
/// for traversals, and projects onto its tangent plane.
pub fn denoise_point(net: &TraversalNetwork, x: &[f64], method: Method, start: usize) -> Result<PointResult> {
    let (terminal, terminal_sq_dist, mut ops, converged) = match method {
        Method::Nn => {
            let r = nn_search(net, x)?;
            (r.vertex, r.sq_dist, r.ops, true)
        }
        Method::Traversal101(p) => {
            let o = traversal_101(net, x, p, start)?;
            (o.terminal, o.terminal_sq_dist, o.ops, o.converged)
        }
        _ => {
            let mode = match method {
                Method::FirstOnly => TraversalMode::FirstOrderOnly,
                Method::ZeroOnly => TraversalMode::ZeroOrderOnly,
                _ => TraversalMode::Mixed,
            };
            let o = manifold_traversal_with_mode(net, x, start, mode)?;
            (o.terminal, o.terminal_sq_dist, o.ops, o.converged)
        }
    };
    let v = &net.vertices()[terminal];
    ops.gradient_mults += projection_mults(net.ambient_dim(), v.tangent_dim());
    Ok(PointResult {
        terminal,
        terminal_sq_dist,
        denoised: v.project(x),
        ops,
        converged,
    })
}

/// Thread pool sized by `MT_THREADS` when set, else rayon's default.
pub fn evaluation_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("{THREADS_ENV}: expected a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Error::InvalidConfig(format!("{THREADS_ENV}: must be at least 1")));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub points: Vec<PointResult>,
    /// Sum of the per-point ledgers.
    pub total_ops: OpCount,
    /// Against the clean channel.
    pub mse: f64,
}

impl Evaluation {
    pub fn avg_multiplications(&self) -> f64 {
        self.total_ops.total() as f64 / self.points.len() as f64
    }
}

/// Denoises every noisy row of `test` from vertex 0.
pub fn evaluate(net: &TraversalNetwork, test: &LabeledDataset, method: Method) -> Result<Evaluation> {
    evaluate_from(net, test, method, 0)
}

pub fn evaluate_from(
    net: &TraversalNetwork,
    test: &LabeledDataset,
    method: Method,
    start: usize,
) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::Format("test set is empty".into()));
    }
    if test.ambient_dim() != net.ambient_dim() {
        return Err(Error::DimensionMismatch {
            what: "test set",
            expected: net.ambient_dim(),
            got: test.ambient_dim(),
        });
    }
    net.vertex(start)?;
    let pool = evaluation_pool()?;
    let points: Vec<PointResult> = pool.install(|| {
        (0..test.len())
            .into_par_iter()
            .map(|i| denoise_point(net, test.noisy_row(i), method, start))
            .collect::<Result<_>>()
    })?;
    let mut total_ops = OpCount::default();
    let mut err = CompensatedSum::default();
    for (i, p) in points.iter().enumerate() {
        total_ops += p.ops;
        err.add(sq_dist(p.denoised.as_slice(), test.clean_row(i)));
    }
    let mse = err.value() / points.len() as f64;
    if !mse.is_finite() {
        return Err(Error::Numeric("test MSE is not finite".into()));
    }
    Ok(Evaluation { points, total_ops, mse })
}

/// `(1/n) Σ ‖x̂_i - x_i‖²` over `dim`-wide rows.
pub fn mse(denoised: &[f64], clean: &[f64], dim: usize) -> Result<f64> {
    if denoised.len() != clean.len() {
        return Err(Error::DimensionMismatch {
            what: "denoised",
            expected: clean.len(),
            got: denoised.len(),
        });
    }
    if dim == 0 || clean.is_empty() || !clean.len().is_multiple_of(dim) {
        return Err(Error::Format(format!(
            "cannot split {} values into rows of {dim}",
            clean.len()
        )));
    }
    let sum: CompensatedSum = denoised
        .chunks_exact(dim)
        .zip(clean.chunks_exact(dim))
        .map(|(a, b)| sq_dist(a, b))
        .collect();
    Ok(sum.value() / (clean.len() / dim) as f64)
}

/// `σ²d`, the reference floor for a perfect tangent-plane denoiser.
pub fn sigma_squared_d(sigma: f64, intrinsic_dim: usize) -> f64 {
    sigma * sigma * intrinsic_dim as f64
}

/// `σ²D`, the error of returning the noisy input.
pub fn sigma_squared_big_d(sigma: f64, ambient_dim: usize) -> f64 {
    sigma * sigma * ambient_dim as f64
}

/// A named network configuration. On disk it is the flat `NetworkConfig`
/// object with an extra `"id"` member.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserConfig {
    pub id: String,
    pub config: NetworkConfig,
}

impl DenoiserConfig {
    pub fn from_value(mut v: serde_json::Value, fallback_id: &str) -> Result<Self> {
        let obj = v
            .as_object_mut()
            .ok_or_else(|| Error::Format("config: expected a JSON object".into()))?;
        let id = match obj.remove("id") {
            None => fallback_id.to_string(),
            Some(serde_json::Value::String(s)) => s,
            Some(serde_json::Value::Number(n)) => n.to_string(),
            Some(other) => return Err(Error::Format(format!("id: expected a string, got {other}"))),
        };
        let config: NetworkConfig =
            serde_json::from_value(v).map_err(|e| Error::Format(format!("config {id}: {e}")))?;
        config.validate()?;
        Ok(DenoiserConfig { id, config })
    }

    pub fn to_value(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(&self.config).expect("config serializes");
        let obj = v.as_object_mut().expect("config is an object");
        let mut out = serde_json::Map::new();
        out.insert("id".into(), serde_json::Value::String(self.id.clone()));
        out.append(obj);
        serde_json::Value::Object(out)
    }

    /// Reads a single config object or an array of them.
    pub fn parse_many(text: &str) -> Result<Vec<DenoiserConfig>> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        match v {
            serde_json::Value::Array(items) => {
                if items.is_empty() {
                    return Err(Error::Format("configs: empty array".into()));
                }
                items
                    .into_iter()
                    .enumerate()
                    .map(|(i, item)| DenoiserConfig::from_value(item, &(i + 1).to_string()))
                    .collect()
            }
            other => Ok(vec![DenoiserConfig::from_value(other, "1")?]),
        }
    }
}

/// Radius constants of one row of the published hyperparameter table:
/// `(c₁, c₂, k, R_nbrs² / σ²D)`.
pub const TABLE_ROWS: [(f64, f64, f64, f64); 12] = [
    (1.2, 20.0, 0.5, 2.39),
    (1.03, 0.0, 0.0, 2.39),
    (1.2, 8.0, 0.5, 2.39),
    (1.375, 0.0, 0.0, 3.13),
    (1.3, 20.0, 1.0 / 3.0, 2.39),
    (1.15, 4.0, 0.5, 2.39),
    (1.195, 0.0, 0.0, 2.75),
    (1.5, 30.0, 0.5, 2.39),
    (1.0, 0.0, 0.0, 2.39),
    (1.095, 0.0, 0.0, 2.39),
    (1.565, 0.0, 0.0, 3.53),
    (0.97, 0.0, 0.0, 2.39),
];

/// Config for table row `row` (1-based) at the given noise level and dimension.
pub fn table_row(row: usize, sigma: f64, ambient_dim: usize) -> Result<DenoiserConfig> {
    let &(c1, c2, k, nbrs) = TABLE_ROWS
        .get(row.wrapping_sub(1))
        .ok_or_else(|| Error::InvalidConfig(format!("table row {row} does not exist")))?;
    let sd = sigma_squared_big_d(sigma, ambient_dim);
    Ok(DenoiserConfig {
        id: row.to_string(),
        config: NetworkConfig {
            sigma,
            r_nbrs: (nbrs * sd).sqrt(),
            radius_c1: c1,
            radius_c2: c2,
            radius_k: k,
            max_traversal_steps: None,
            mode: TraversalMode::Mixed,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TradeoffRow {
    pub denoiser_id: String,
    pub method: String,
    pub num_landmarks: usize,
    pub avg_multiplications: f64,
    #[serde(rename = "testMSE")]
    pub test_mse: f64,
    #[serde(skip)]
    pub total_ops: OpCount,
    pub sigma2d: f64,
    #[serde(rename = "sigma2D")]
    pub sigma2_big_d: f64,
}

/// Trains one network per config on `train_set`, then evaluates each with
/// every method in `methods` on `test_set`.
pub fn sweep(
    train_set: &LabeledDataset,
    test_set: &LabeledDataset,
    configs: &[DenoiserConfig],
    methods: &[Method],
    options: TrainOptions,
) -> Result<Vec<TradeoffRow>> {
    let mut rows = Vec::with_capacity(configs.len() * methods.len());
    let d = train_set.intrinsic_dim_hint();
    let dim = train_set.ambient_dim();
    for c in configs {
        let report = train(train_set, &c.config, options)?;
        for &m in methods {
            let ev = evaluate(&report.network, test_set, m)?;
            rows.push(TradeoffRow {
                denoiser_id: c.id.clone(),
                method: m.name().to_string(),
                num_landmarks: report.network.len(),
                avg_multiplications: ev.avg_multiplications(),
                test_mse: ev.mse,
                total_ops: ev.total_ops,
                sigma2d: sigma_squared_d(c.config.sigma, d),
                sigma2_big_d: sigma_squared_big_d(c.config.sigma, dim),
            });
        }
    }
    Ok(rows)
}

/// Mixed traversal against exhaustive search over the same landmarks.
pub fn tradeoff_sweep(
    train_set: &LabeledDataset,
    test_set: &LabeledDataset,
    configs: &[DenoiserConfig],
    options: TrainOptions,
) -> Result<Vec<TradeoffRow>> {
    sweep(train_set, test_set, configs, &[Method::Mixed, Method::Nn], options)
}

/// Mixed traversal against its single-order restrictions.
pub fn ablation_sweep(
    train_set: &LabeledDataset,
    test_set: &LabeledDataset,
    configs: &[DenoiserConfig],
    options: TrainOptions,
) -> Result<Vec<TradeoffRow>> {
    sweep(
        train_set,
        test_set,
        configs,
        &[Method::Mixed, Method::FirstOnly, Method::ZeroOnly],
        options,
    )
}

/// Columns `denoiserId,method,numLandmarks,avgMultiplications,testMSE,sigma2d,sigma2D`.
pub fn write_sweep_csv<W: std::io::Write>(rows: &[TradeoffRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    if rows.is_empty() {
        out.write_record([
            "denoiserId",
            "method",
            "numLandmarks",
            "avgMultiplications",
            "testMSE",
            "sigma2d",
            "sigma2D",
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{chirp_manifold, swiss_roll};
    use crate::online::denoising_radius_sq;

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0], 2).unwrap(), 0.0);
        assert_eq!(mse(&[3.0, 4.0], &[0.0, 0.0], 2).unwrap(), 25.0);
        assert!(mse(&[1.0], &[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn identity_denoiser_error_is_sigma_squared_big_d() {
        let ds = chirp_manifold(10_000, 0.01, 3).unwrap();
        let m = mse(ds.noisy(), ds.clean(), 2048).unwrap();
        assert!((m / 0.2048 - 1.0).abs() < 0.02, "{m}");
    }

    #[test]
    fn reference_levels() {
        assert!((sigma_squared_d(0.01, 2) - 2e-4).abs() < 1e-18);
        assert_eq!(sigma_squared_d(0.0, 2), 0.0);
        assert!((sigma_squared_d(0.1, 3) - 0.03).abs() < 1e-15);
        assert!((sigma_squared_big_d(0.01, 2048) - 0.2048).abs() < 1e-15);
    }

    #[test]
    fn table_rows_match_published_radii() {
        let sd = 0.2048;
        let s2d = 2e-4;
        // (row, N, expected R², expected R_nbrs²)
        let checks = [
            (1, 4u64, 1.2 * (sd + sd / 2.0 + 20.0 * s2d), 2.39 * sd),
            (2, 9, 2.06 * sd, 2.39 * sd),
            (3, 16, 1.2 * (sd + sd / 4.0 + 8.0 * s2d), 2.39 * sd),
            (4, 5, 2.75 * sd, 3.13 * sd),
            (5, 8, 1.3 * (sd + sd / 2.0 + 20.0 * s2d), 2.39 * sd),
            (6, 4, 1.15 * (sd + sd / 2.0 + 4.0 * s2d), 2.39 * sd),
            (7, 3, 2.39 * sd, 2.75 * sd),
            (8, 25, 1.5 * (sd + sd / 5.0 + 30.0 * s2d), 2.39 * sd),
            (9, 2, 2.0 * sd, 2.39 * sd),
            (10, 2, 2.19 * sd, 2.39 * sd),
            (11, 7, 3.13 * sd, 3.53 * sd),
            (12, 1, 1.94 * sd, 2.39 * sd),
        ];
        for (row, n, r2, nb2) in checks {
            let c = table_row(row, 0.01, 2048).unwrap().config;
            let got = denoising_radius_sq(n, &c, 2048, 2);
            assert!((got - r2).abs() < 1e-12, "row {row}: {got} vs {r2}");
            assert!((c.r_nbrs * c.r_nbrs - nb2).abs() < 1e-12, "row {row}");
        }
        assert!(table_row(0, 0.01, 2048).is_err());
        assert!(table_row(13, 0.01, 2048).is_err());
    }

    #[test]
    fn shipped_config_files_match_the_table() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let all = DenoiserConfig::parse_many(&std::fs::read_to_string(dir.join("denoisers.json")).unwrap()).unwrap();
        assert_eq!(all.len(), 12);
        for row in 1..=12 {
            let text = std::fs::read_to_string(dir.join(format!("denoisers-{row}.json"))).unwrap();
            let one = DenoiserConfig::parse_many(&text).unwrap();
            let want = table_row(row, 0.01, 2048).unwrap();
            assert_eq!(one, vec![want.clone()]);
            assert_eq!(all[row - 1], want);
        }
    }

    #[test]
    fn config_value_round_trip() {
        let c = table_row(4, 0.01, 2048).unwrap();
        let back = DenoiserConfig::from_value(c.to_value(), "x").unwrap();
        assert_eq!(back, c);
        let e = DenoiserConfig::from_value(serde_json::json!({"id": "a", "sigma": 0.01}), "x").unwrap_err();
        assert!(e.to_string().contains("config a"), "{e}");
    }

    #[test]
    fn pool_respects_thread_cap_variable() {
        // only parse errors are observable without racing other tests
        assert!(evaluation_pool().is_ok());
    }

    fn small_swiss() -> (TraversalNetwork, LabeledDataset) {
        let train_set = swiss_roll(3000, 0.01, 1).unwrap();
        let test_set = swiss_roll(300, 0.01, 2).unwrap();
        let cfg = NetworkConfig::with_default_schedule(0.01, 0.1);
        let report = train(&train_set, &cfg, TrainOptions::default()).unwrap();
        (report.network, test_set)
    }

    #[test]
    fn ops_reconcile_and_dominance_chain_holds() {
        let (net, test) = small_swiss();
        let nn = evaluate(&net, &test, Method::Nn).unwrap();
        let mixed = evaluate(&net, &test, Method::Mixed).unwrap();
        let first = evaluate(&net, &test, Method::FirstOnly).unwrap();
        for ev in [&nn, &mixed, &first] {
            let mut sum = OpCount::default();
            for p in &ev.points {
                sum += p.ops;
            }
            assert_eq!(sum, ev.total_ops);
            assert!(ev.avg_multiplications() > 0.0);
        }
        for i in 0..test.len() {
            // mixed extends the first-only path from the same start
            assert!(nn.points[i].terminal_sq_dist <= mixed.points[i].terminal_sq_dist);
            assert!(mixed.points[i].terminal_sq_dist <= first.points[i].terminal_sq_dist);
        }
        let d = net.ambient_dim() as u64;
        assert_eq!(nn.points[0].ops.distance_mults, d * net.len() as u64);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let (net, test) = small_swiss();
        let a = evaluate(&net, &test, Method::Mixed).unwrap();
        let b = evaluate(&net, &test, Method::Mixed).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn huge_radius_collapses_costs() {
        let train_set = swiss_roll(500, 0.01, 1).unwrap();
        let test_set = swiss_roll(50, 0.01, 2).unwrap();
        let cfg = DenoiserConfig {
            id: "big".into(),
            config: NetworkConfig {
                radius_c1: 1e6,
                ..NetworkConfig::with_default_schedule(0.01, 0.1)
            },
        };
        let rows = tradeoff_sweep(&train_set, &test_set, &[cfg], TrainOptions::default()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].num_landmarks, 1);
        assert_eq!(rows[0].method, "mixed");
        assert_eq!(rows[1].method, "nn");
        // one landmark: both pay one distance and one projection, mixed also a gradient
        assert!(rows[0].avg_multiplications >= rows[1].avg_multiplications);
        assert!(rows[0].avg_multiplications <= rows[1].avg_multiplications + 6.0);
    }

    #[test]
    fn sweep_csv_schema() {
        let train_set = swiss_roll(300, 0.01, 1).unwrap();
        let test_set = swiss_roll(30, 0.01, 2).unwrap();
        let cfg = DenoiserConfig {
            id: "7".into(),
            config: NetworkConfig::with_default_schedule(0.01, 0.1),
        };
        let rows = ablation_sweep(&train_set, &test_set, &[cfg], TrainOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "denoiserId,method,numLandmarks,avgMultiplications,testMSE,sigma2d,sigma2D"
        );
        assert_eq!(lines.count(), 3);
        assert_eq!(
            rows.iter().map(|r| r.method.as_str()).collect::<Vec<_>>(),
            ["mixed", "first-only", "zero-only"]
        );
    }

    #[test]
    fn radius_row_two_literal() {
        let c = table_row(2, 0.01, 2048).unwrap().config;
        assert!((denoising_radius_sq(1, &c, 2048, 2) - 0.421888).abs() < 1e-12);
    }
}

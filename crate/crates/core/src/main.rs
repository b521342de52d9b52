//! `mtrav`: generate datasets, grow traversal networks, denoise and
//! benchmark from the command line.
//!
//! Exit codes: 0 success, 2 bad input, 3 numeric failure, 4 I/O.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use manifold_traversal::bench::{self, DenoiserConfig, Method};
use manifold_traversal::datagen::{self, LabeledDataset};
use manifold_traversal::online::{self, Centering, LearnerOptions, TrainOptions};
use manifold_traversal::traversal::Params101;
use manifold_traversal::{Error, Result, TraversalNetwork};

#[derive(Parser)]
#[command(name = "mtrav", version, about = "Manifold traversal denoiser")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Manifold {
    Swiss,
    Mobius,
    Sphere,
    Torus,
    Chirp,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Mixed,
    Nn,
    First,
    Zero,
    #[value(name = "101")]
    Traversal101,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a noisy dataset and write it in MTDS format.
    Generate {
        #[arg(long, value_enum)]
        manifold: Manifold,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write clean and noisy rows side by side as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Grow a network from the noisy rows of a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        telemetry: Option<PathBuf>,
        /// Seeds random tangent initialization.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Telemetry sampling period in samples.
        #[arg(long, default_value_t = 1000)]
        cadence: usize,
        /// Start each traversal at the previous sample's vertex.
        #[arg(long)]
        warm_start: bool,
        /// Center tangent updates at the landmark before its mean update.
        #[arg(long)]
        pre_update_centering: bool,
    },
    /// Denoise every noisy row of a dataset with a trained network.
    Denoise {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "mixed")]
        method: MethodArg,
        #[arg(long)]
        eps1: Option<f64>,
        #[arg(long)]
        eps2: Option<f64>,
        #[arg(long)]
        ra: Option<f64>,
        /// Start vertex for traversals.
        #[arg(long, default_value_t = 0)]
        start: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one network per config and compare methods on a test set.
    Benchmark {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// A config object or an array of them.
        #[arg(long)]
        configs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Compare mixed, first-only and zero-only instead of mixed and nn.
        #[arg(long)]
        ablation: bool,
        /// Use only the first N test rows.
        #[arg(long)]
        test_limit: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write landmarks and edges as a single CSV for plotting.
    ExportGraph {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 4,
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn read_text(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

fn load_net(path: &Path) -> Result<TraversalNetwork> {
    TraversalNetwork::from_json(&read_text(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn load_data(path: &Path) -> Result<LabeledDataset> {
    LabeledDataset::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Io(io),
        other => Error::Format(format!("{}: {other}", path.display())),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            manifold,
            n,
            sigma,
            seed,
            out,
            csv,
        } => {
            let name = match manifold {
                Manifold::Swiss => "swiss",
                Manifold::Mobius => "mobius",
                Manifold::Sphere => "sphere",
                Manifold::Torus => "torus",
                Manifold::Chirp => "chirp",
            };
            let ds = datagen::generate(name, n, sigma, seed)?;
            ds.save(&out)?;
            if let Some(p) = csv {
                ds.write_csv(create(&p)?)?;
            }
            println!(
                "n={} D={} dHint={} sigma={}",
                ds.len(),
                ds.ambient_dim(),
                ds.intrinsic_dim_hint(),
                ds.sigma
            );
        }
        Command::Train {
            data,
            config,
            out,
            telemetry,
            seed,
            cadence,
            warm_start,
            pre_update_centering,
        } => {
            let ds = load_data(&data)?;
            let mut configs = DenoiserConfig::parse_many(&read_text(&config)?)?;
            if configs.len() != 1 {
                return Err(Error::Format(format!(
                    "{}: expected one config, found {}",
                    config.display(),
                    configs.len()
                )));
            }
            let cfg = configs.remove(0).config;
            let options = TrainOptions {
                learner: LearnerOptions {
                    seed,
                    warm_start,
                    centering: if pre_update_centering {
                        Centering::PreUpdate
                    } else {
                        Centering::PostUpdate
                    },
                },
                cadence,
            };
            let report = online::train(&ds, &cfg, options)?;
            report.network.write_json(create(&out)?)?;
            if let Some(p) = telemetry {
                online::write_telemetry_csv(&report.curve, create(&p)?)?;
            }
            let last = report.curve.last().expect("nonempty stream");
            println!(
                "landmarks={} firstOrderEdges={} zeroOrderEdges={} runningMSE={:e}",
                report.network.len(),
                report.network.num_first_order_edges(),
                report.network.num_zero_order_edges(),
                last.running_mse
            );
        }
        Command::Denoise {
            net,
            data,
            method,
            eps1,
            eps2,
            ra,
            start,
            out,
        } => {
            let net = load_net(&net)?;
            let ds = load_data(&data)?;
            let method = match method {
                MethodArg::Mixed => Method::Mixed,
                MethodArg::Nn => Method::Nn,
                MethodArg::First => Method::FirstOnly,
                MethodArg::Zero => Method::ZeroOnly,
                MethodArg::Traversal101 => {
                    let d = Params101::defaults_for(&net);
                    let p = Params101 {
                        ra: ra.unwrap_or(d.ra),
                        eps1: eps1.unwrap_or(d.eps1),
                        eps2: eps2.unwrap_or(d.eps2),
                    };
                    p.validate()?;
                    Method::Traversal101(p)
                }
            };
            if !matches!(method, Method::Traversal101(_)) && (eps1.is_some() || eps2.is_some() || ra.is_some()) {
                return Err(Error::InvalidConfig(
                    "--eps1, --eps2 and --ra apply only to --method 101".into(),
                ));
            }
            let ev = bench::evaluate_from(&net, &ds, method, start)?;
            let mut w = csv::Writer::from_writer(create(&out)?);
            w.write_record(["index", "terminalVertex", "squaredError", "totalMults"])?;
            for (i, p) in ev.points.iter().enumerate() {
                let err = manifold_traversal::linalg::sq_dist(p.denoised.as_slice(), ds.clean_row(i));
                w.write_record([
                    i.to_string(),
                    p.terminal.to_string(),
                    format!("{err:e}"),
                    p.ops.total().to_string(),
                ])?;
            }
            w.flush()?;
            println!(
                "method={} points={} avgMultiplications={} testMSE={:e}",
                method,
                ev.points.len(),
                ev.avg_multiplications(),
                ev.mse
            );
        }
        Command::Benchmark {
            train,
            test,
            configs,
            out,
            ablation,
            test_limit,
            seed,
        } => {
            let train_set = load_data(&train)?;
            let mut test_set = load_data(&test)?;
            if let Some(k) = test_limit {
                if k == 0 || k > test_set.len() {
                    return Err(Error::InvalidConfig(format!(
                        "--test-limit must be in 1..={}",
                        test_set.len()
                    )));
                }
                test_set = test_set.slice(0..k);
            }
            let configs = DenoiserConfig::parse_many(&read_text(&configs)?)?;
            let options = TrainOptions {
                learner: LearnerOptions {
                    seed,
                    ..LearnerOptions::default()
                },
                ..TrainOptions::default()
            };
            let rows = if ablation {
                bench::ablation_sweep(&train_set, &test_set, &configs, options)?
            } else {
                bench::tradeoff_sweep(&train_set, &test_set, &configs, options)?
            };
            bench::write_sweep_csv(&rows, create(&out)?)?;
            for r in &rows {
                println!(
                    "{} {} landmarks={} avgMultiplications={:.1} testMSE={:e}",
                    r.denoiser_id, r.method, r.num_landmarks, r.avg_multiplications, r.test_mse
                );
            }
        }
        Command::ExportGraph { net, out } => {
            let net = load_net(&net)?;
            write_graph_csv(&net, create(&out)?)?;
        }
    }
    Ok(())
}

/// Columns `type,id,u,v,order,x0..`; vertex rows fill `id` and the
/// coordinates, edge rows fill `u`, `v` and `order` (1 first-order, 0 zero-order).
fn write_graph_csv<W: Write>(net: &TraversalNetwork, w: W) -> Result<()> {
    let dim = net.ambient_dim();
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["type", "id", "u", "v", "order"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..dim).map(|j| format!("x{j}")));
    out.write_record(&header)?;
    let blanks = vec![String::new(); dim];
    for id in 0..net.len() {
        let mut rec = vec![
            "vertex".to_string(),
            id.to_string(),
            String::new(),
            String::new(),
            String::new(),
        ];
        rec.extend(net.landmark(id).iter().map(|v| format!("{v:e}")));
        out.write_record(&rec)?;
    }
    let edges = net
        .first_order_edges()
        .iter()
        .map(|&e| (e, 1))
        .chain(net.zero_order_edges().iter().map(|&e| (e, 0)));
    for ((u, v), order) in edges {
        let mut rec = vec![
            "edge".to_string(),
            String::new(),
            u.to_string(),
            v.to_string(),
            order.to_string(),
        ];
        rec.extend(blanks.iter().cloned());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

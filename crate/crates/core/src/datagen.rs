//! Synthetic manifolds with additive Gaussian noise, and the dataset file
//! formats.
//!
//! Every generator draws manifold parameters from stream 0 and noise from
//! stream 1 of a `ChaCha8Rng` seeded with the caller's seed, so a dataset is
//! a pure function of `(generator, arguments, seed)`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const MTDS_MAGIC: &[u8; 4] = b"MTDS";
pub const MTDS_VERSION: u32 = 1;

/// Paired clean and noisy samples, both `n x D` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    pub sigma: f64,
    pub intrinsic_dim_hint: usize,
    dim: usize,
    clean: Vec<f64>,
    noisy: Vec<f64>,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        intrinsic_dim_hint: usize,
        sigma: f64,
        clean: Vec<f64>,
        noisy: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format("D: must be positive".into()));
        }
        if !clean.len().is_multiple_of(dim) {
            return Err(Error::Format(format!(
                "clean: length {} is not a multiple of D = {dim}",
                clean.len()
            )));
        }
        if noisy.len() != clean.len() {
            return Err(Error::DimensionMismatch {
                what: "noisy",
                expected: clean.len(),
                got: noisy.len(),
            });
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Format(format!(
                "sigma: {sigma} is not a finite nonnegative value"
            )));
        }
        Ok(LabeledDataset {
            name: name.into(),
            sigma,
            intrinsic_dim_hint,
            dim,
            clean,
            noisy,
        })
    }

    pub fn len(&self) -> usize {
        self.clean.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    pub fn intrinsic_dim_hint(&self) -> usize {
        self.intrinsic_dim_hint
    }

    pub fn clean(&self) -> &[f64] {
        &self.clean
    }

    pub fn noisy(&self) -> &[f64] {
        &self.noisy
    }

    pub fn clean_row(&self, i: usize) -> &[f64] {
        &self.clean[i * self.dim..(i + 1) * self.dim]
    }

    pub fn noisy_row(&self, i: usize) -> &[f64] {
        &self.noisy[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> LabeledDataset {
        let (a, b) = (range.start * self.dim, range.end * self.dim);
        LabeledDataset {
            name: self.name.clone(),
            sigma: self.sigma,
            intrinsic_dim_hint: self.intrinsic_dim_hint,
            dim: self.dim,
            clean: self.clean[a..b].to_vec(),
            noisy: self.noisy[a..b].to_vec(),
        }
    }

    pub fn write_mtds<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MTDS_MAGIC)?;
        w.write_all(&MTDS_VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.intrinsic_dim_hint as u32).to_le_bytes())?;
        w.write_all(&self.sigma.to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * self.clean.len());
        for v in self.clean.iter().chain(&self.noisy) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_mtds<R: Read>(mut r: R, name: impl Into<String>) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_field(&mut r, &mut magic, "magic")?;
        if &magic != MTDS_MAGIC {
            return Err(Error::Format(format!("magic: expected \"MTDS\", found {magic:?}")));
        }
        let version = u32::from_le_bytes(read_array(&mut r, "version")?);
        if version != MTDS_VERSION {
            return Err(Error::Format(format!("version: unsupported value {version}")));
        }
        let n = u64::from_le_bytes(read_array(&mut r, "n")?);
        let dim = u32::from_le_bytes(read_array(&mut r, "D")?) as usize;
        let hint = u32::from_le_bytes(read_array(&mut r, "dHint")?) as usize;
        let sigma = f64::from_le_bytes(read_array(&mut r, "sigma")?);
        let count = usize::try_from(n)
            .ok()
            .and_then(|n| n.checked_mul(dim))
            .ok_or_else(|| Error::Format(format!("n: {n} rows of D = {dim} overflow")))?;
        let clean = read_f64s(&mut r, count, "clean")?;
        let noisy = read_f64s(&mut r, count, "noisy")?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("noisy: trailing bytes after payload".into()));
        }
        LabeledDataset::new(name, dim, hint, sigma, clean, noisy)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_mtds(std::io::BufWriter::new(f))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::read_mtds(std::io::BufReader::new(f), name)
    }

    /// Header `clean0..clean{D-1},noisy0..noisy{D-1}`, one row per sample.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let header: Vec<String> = (0..self.dim)
            .map(|j| format!("clean{j}"))
            .chain((0..self.dim).map(|j| format!("noisy{j}")))
            .collect();
        out.write_record(&header)?;
        for i in 0..self.len() {
            out.write_record(
                self.clean_row(i)
                    .iter()
                    .chain(self.noisy_row(i))
                    .map(|v| format!("{v:e}")),
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

fn read_field<R: Read>(r: &mut R, buf: &mut [u8], field: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("{field}: file truncated")),
        _ => Error::Io(e),
    })
}

fn read_array<R: Read, const N: usize>(r: &mut R, field: &str) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    read_field(r, &mut b, field)?;
    Ok(b)
}

fn read_f64s<R: Read>(r: &mut R, count: usize, field: &str) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    read_field(r, &mut bytes, field)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut params = ChaCha8Rng::seed_from_u64(seed);
    params.set_stream(0);
    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    noise.set_stream(1);
    (params, noise)
}

fn add_noise(clean: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if sigma == 0.0 {
        return clean.to_vec();
    }
    clean
        .iter()
        .map(|&c| c + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn check_args(n: usize, sigma: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "sigma must be finite and nonnegative, got {sigma}"
        )));
    }
    Ok(())
}

/// Builds a 3D dataset from a point map over parameters drawn by `draw`.
fn surface<P>(
    name: &str,
    n: usize,
    sigma: f64,
    seed: u64,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> P,
    map: impl Fn(P) -> [f64; 3],
) -> Result<LabeledDataset> {
    check_args(n, sigma)?;
    let (mut prng, mut nrng) = streams(seed);
    let clean: Vec<f64> = (0..n).flat_map(|_| map(draw(&mut prng))).collect();
    let noisy = add_noise(&clean, sigma, &mut nrng);
    LabeledDataset::new(name, 3, 2, sigma, clean, noisy)
}

/// Divides the raw roll so its diameter is about 2.
pub const SWISS_ROLL_SCALE: f64 = 16.4;

pub fn swiss_roll_point(t: f64, h: f64) -> [f64; 3] {
    [
        t * t.cos() / SWISS_ROLL_SCALE,
        h / SWISS_ROLL_SCALE,
        t * t.sin() / SWISS_ROLL_SCALE,
    ]
}

/// `t ∈ [1.5π, 4.5π]`, `h ∈ [0, 21]`, both uniform.
pub fn swiss_roll(n: usize, sigma: f64, seed: u64) -> Result<LabeledDataset> {
    surface(
        "swiss",
        n,
        sigma,
        seed,
        |r| (r.random_range(1.5 * PI..=4.5 * PI), r.random_range(0.0..=21.0)),
        |(t, h)| swiss_roll_point(t, h),
    )
}

pub fn mobius_point(u: f64, w: f64) -> [f64; 3] {
    let radial = 1.0 + 0.5 * w * (0.5 * u).cos();
    [radial * u.cos(), radial * u.sin(), 0.5 * w * (0.5 * u).sin()]
}

/// `u ∈ [0, 2π)`, `w ∈ [-0.4, 0.4]`, both uniform.
pub fn mobius_strip(n: usize, sigma: f64, seed: u64) -> Result<LabeledDataset> {
    surface(
        "mobius",
        n,
        sigma,
        seed,
        |r| (r.random_range(0.0..2.0 * PI), r.random_range(-0.4..=0.4)),
        |(u, w)| mobius_point(u, w),
    )
}

/// Uniform on the unit sphere, as normalized standard Gaussians.
pub fn sphere(n: usize, sigma: f64, seed: u64) -> Result<LabeledDataset> {
    surface(
        "sphere",
        n,
        sigma,
        seed,
        |r| loop {
            let g: [f64; 3] = std::array::from_fn(|_| r.sample(StandardNormal));
            let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            if norm > 1e-12 {
                break g.map(|v| v / norm);
            }
        },
        |p| p,
    )
}

pub const TORUS_MAJOR: f64 = 1.0;
pub const TORUS_MINOR: f64 = 0.35;

pub fn torus_point(u: f64, v: f64) -> [f64; 3] {
    let radial = TORUS_MAJOR + TORUS_MINOR * v.cos();
    [radial * u.cos(), radial * u.sin(), TORUS_MINOR * v.sin()]
}

/// Both angles uniform on `[0, 2π)`.
pub fn torus(n: usize, sigma: f64, seed: u64) -> Result<LabeledDataset> {
    surface(
        "torus",
        n,
        sigma,
        seed,
        |r| (r.random_range(0.0..2.0 * PI), r.random_range(0.0..2.0 * PI)),
        |(u, v)| torus_point(u, v),
    )
}

/// Solar mass in seconds (`G M☉ / c³`).
pub const SOLAR_MASS_SECONDS: f64 = 4.925491e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChirpParams {
    pub dim: usize,
    pub sample_rate: f64,
    /// Frequency at `s = 0`.
    pub f0: f64,
    pub mass_mean: f64,
    /// Defaults to `√15`, a variance of 15.
    pub mass_sd: f64,
    pub mass_min: f64,
    pub mass_max: f64,
    /// Time of the cutoff within the window, in seconds.
    pub merger_time: f64,
}

impl Default for ChirpParams {
    fn default() -> Self {
        ChirpParams {
            dim: 2048,
            sample_rate: 2048.0,
            f0: 20.0,
            mass_mean: 35.0,
            mass_sd: 15f64.sqrt(),
            mass_min: 20.0,
            mass_max: 50.0,
            merger_time: 0.9,
        }
    }
}

/// Time to coalescence from `f0` at leading post-Newtonian order.
pub fn coalescence_time(m1: f64, m2: f64, f0: f64) -> f64 {
    let total = m1 + m2;
    let chirp_mass = (m1 * m2).powf(0.6) / total.powf(0.2);
    5.0 / 256.0 * (PI * f0).powf(-8.0 / 3.0) * (SOLAR_MASS_SECONDS * chirp_mass).powf(-5.0 / 3.0)
}

/// Unnormalized chirp: `a(s) sin(2π ∫₀ˢ f)` with `f(s) = f0 (1 - s/t_c)^{-3/8}`
/// and `a(s) = (1 - s/t_c)^{-1/4}`, cut where `f` reaches the innermost
/// stable orbit frequency of the total mass. The cutoff is placed at
/// `merger_time`; samples outside `[0, s_cut]` are zero.
pub fn chirp_waveform(m1: f64, m2: f64, p: &ChirpParams) -> Vec<f64> {
    let tc = coalescence_time(m1, m2, p.f0);
    let f_cut = 1.0 / (6f64.powf(1.5) * PI * SOLAR_MASS_SECONDS * (m1 + m2));
    let s_cut = tc * (1.0 - (p.f0 / f_cut).powf(8.0 / 3.0)).max(0.0);
    (0..p.dim)
        .map(|k| {
            let s = k as f64 / p.sample_rate + s_cut - p.merger_time;
            if !(0.0..=s_cut).contains(&s) {
                return 0.0;
            }
            let tau = 1.0 - s / tc;
            let phase = 2.0 * PI * p.f0 * tc * 1.6 * (1.0 - tau.powf(0.625));
            tau.powf(-0.25) * phase.sin()
        })
        .collect()
}

/// Unit `ℓ²` normalized [`chirp_waveform`].
pub fn chirp_row(m1: f64, m2: f64, p: &ChirpParams) -> Vec<f64> {
    let mut w = chirp_waveform(m1, m2, p);
    let norm = crate::linalg::sq_norm(&w).sqrt();
    for v in &mut w {
        *v /= norm;
    }
    w
}

/// Gaussian mass rejected until it falls in `[mass_min, mass_max]`.
pub fn draw_mass<R: Rng + ?Sized>(rng: &mut R, p: &ChirpParams) -> f64 {
    let g = Normal::new(p.mass_mean, p.mass_sd).expect("mass sd is positive");
    loop {
        let m = g.sample(rng);
        if (p.mass_min..=p.mass_max).contains(&m) {
            return m;
        }
    }
}

pub fn chirp_manifold(n: usize, sigma: f64, seed: u64) -> Result<LabeledDataset> {
    chirp_manifold_with(n, sigma, seed, &ChirpParams::default())
}

pub fn chirp_manifold_with(n: usize, sigma: f64, seed: u64, p: &ChirpParams) -> Result<LabeledDataset> {
    check_args(n, sigma)?;
    if p.dim == 0 || !(p.mass_sd > 0.0) || !(p.mass_min < p.mass_max) || !(p.mass_min > 0.0) {
        return Err(Error::InvalidConfig(format!("chirp parameters out of range: {p:?}")));
    }
    let (mut prng, mut nrng) = streams(seed);
    let masses: Vec<(f64, f64)> = (0..n)
        .map(|_| (draw_mass(&mut prng, p), draw_mass(&mut prng, p)))
        .collect();
    let clean: Vec<f64> = masses
        .par_iter()
        .flat_map_iter(|&(m1, m2)| chirp_row(m1, m2, p))
        .collect();
    if clean.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("chirp waveform is not finite".into()));
    }
    let noisy = add_noise(&clean, sigma, &mut nrng);
    LabeledDataset::new("chirp", p.dim, 2, sigma, clean, noisy)
}

/// Generator names accepted by [`generate`].
pub const MANIFOLDS: [&str; 5] = ["swiss", "mobius", "sphere", "torus", "chirp"];

pub fn generate(manifold: &str, n: usize, sigma: f64, seed: u64) -> Result<LabeledDataset> {
    match manifold {
        "swiss" => swiss_roll(n, sigma, seed),
        "mobius" => mobius_strip(n, sigma, seed),
        "sphere" => sphere(n, sigma, seed),
        "torus" => torus(n, sigma, seed),
        "chirp" => chirp_manifold(n, sigma, seed),
        other => Err(Error::InvalidConfig(format!("unknown manifold {other:?}"))),
    }
}

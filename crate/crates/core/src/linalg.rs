//! Small dense kernels shared by the traversal and learning code.
//!
//! Everything here works on raw slices so hot loops avoid temporary
//! allocations. Bases are stored column-major (`nalgebra` layout), so column
//! `c` of a `D x l` basis is `basis.as_slice()[c * D..(c + 1) * D]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sq_norm(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let t = x - y;
            t * t
        })
        .sum()
}

/// Coordinates of `to - from` in the column basis: `basisᵀ (to - from)`.
pub fn tangent_coords(basis: &DMatrix<f64>, from: &[f64], to: &[f64]) -> DVector<f64> {
    let dim = basis.nrows();
    debug_assert_eq!(from.len(), dim);
    debug_assert_eq!(to.len(), dim);
    let cols = basis.ncols();
    let data = basis.as_slice();
    DVector::from_iterator(
        cols,
        (0..cols).map(|c| {
            data[c * dim..(c + 1) * dim]
                .iter()
                .zip(from.iter().zip(to))
                .map(|(u, (f, t))| u * (t - f))
                .sum()
        }),
    )
}

/// `origin + basis · coords`.
pub fn lift(basis: &DMatrix<f64>, origin: &[f64], coords: &[f64]) -> DVector<f64> {
    let dim = basis.nrows();
    let mut out = DVector::from_column_slice(origin);
    let data = basis.as_slice();
    for (c, &w) in coords.iter().enumerate() {
        for (o, u) in out.iter_mut().zip(&data[c * dim..(c + 1) * dim]) {
            *o += w * u;
        }
    }
    out
}

/// Frobenius norm of `basisᵀ basis - I`.
pub fn orthonormality_drift(basis: &DMatrix<f64>) -> f64 {
    let gram = basis.transpose() * basis;
    let l = gram.nrows();
    (gram - DMatrix::<f64>::identity(l, l)).norm()
}

/// In-place modified Gram–Schmidt over the columns. Columns that collapse
/// numerically are left as zero and reported by the return value.
pub fn modified_gram_schmidt(basis: &mut DMatrix<f64>) -> usize {
    let mut collapsed = 0;
    for c in 0..basis.ncols() {
        for p in 0..c {
            let proj = basis.column(p).dot(&basis.column(c));
            let prev = basis.column(p).clone_owned();
            basis.column_mut(c).axpy(-proj, &prev, 1.0);
        }
        let n = basis.column(c).norm();
        if n > 1e-300 {
            basis.column_mut(c).unscale_mut(n);
        } else {
            basis.column_mut(c).fill(0.0);
            collapsed += 1;
        }
    }
    collapsed
}

/// Appends random Gaussian columns, orthogonalized against the existing
/// ones, until `basis` has `target` columns.
pub fn pad_with_random_columns<R: Rng + ?Sized>(basis: DMatrix<f64>, target: usize, rng: &mut R) -> DMatrix<f64> {
    let dim = basis.nrows();
    let mut out = basis;
    while out.ncols() < target {
        let mut v: DVector<f64> = DVector::from_fn(dim, |_, _| rng.sample(StandardNormal));
        // two passes keep the new column orthogonal to working precision
        for _ in 0..2 {
            for c in 0..out.ncols() {
                let proj = out.column(c).dot(&v);
                v.axpy(-proj, &out.column(c), 1.0);
            }
        }
        let n = v.norm();
        if n < 1e-8 {
            continue;
        }
        v.unscale_mut(n);
        let cols = out.ncols();
        out = out.insert_column(cols, 0.0);
        out.set_column(cols, &v);
    }
    out
}

/// Sine of the largest principal angle between the column spans of two
/// orthonormal bases of equal rank: `‖(I - B Bᵀ) A‖₂`.
///
/// Accurate for small angles, unlike `acos` of the smallest cosine.
pub fn max_principal_angle_sin(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.nrows(), b.nrows());
    let residual = a - b * (b.transpose() * a);
    if residual.ncols() == 0 {
        return 0.0;
    }
    residual.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

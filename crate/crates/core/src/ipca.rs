//! Rank-limited incremental eigendecomposition of a streamed scatter matrix.
//!
//! The state `(U, Λ)` represents `U diag(Λ) Uᵀ`. Folding in a centered sample
//! `x` splits it into `p = Uᵀx` and the residual `x⊥ = x - U p`, then
//! eigendecomposes the small arrow matrix `diag(Λ, 0) + v vᵀ` with
//! `v = [p; ‖x⊥‖]` and rotates `[U, x⊥/‖x⊥‖]` by its eigenvectors. Only the
//! top `d` eigenpairs are kept.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::linalg::{self, modified_gram_schmidt};

/// Centered samples shorter than this carry no direction.
pub const ZERO_SAMPLE_TOL: f64 = 1e-12;
/// Relative size below which the residual column is dropped.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Drift in `‖UᵀU - I‖_F` that triggers re-orthonormalization.
pub const REORTHONORMALIZE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceState {
    /// `D x l`, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Nonincreasing, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// Samples folded in so far.
    pub seen: usize,
}

impl SubspaceState {
    /// The `l = 0` state.
    pub fn empty(ambient_dim: usize) -> Self {
        SubspaceState {
            basis: DMatrix::zeros(ambient_dim, 0),
            eigenvalues: Vec::new(),
            seen: 0,
        }
    }

    /// State after a single sample: `U = [x/‖x‖]`, `Λ = [‖x‖²]`. A numerically
    /// zero sample yields the empty state (still counted as seen).
    pub fn init(centered: &[f64]) -> Self {
        let mut s = SubspaceState::empty(centered.len());
        s.update(centered, usize::MAX);
        s
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Folds one centered sample into the state, keeping at most
    /// `max_rank` eigenpairs.
    pub fn update(&mut self, centered: &[f64], max_rank: usize) {
        let dim = self.ambient_dim();
        assert_eq!(centered.len(), dim, "centered sample has wrong length");
        self.seen += 1;

        let x_norm = linalg::sq_norm(centered).sqrt();
        if x_norm < ZERO_SAMPLE_TOL {
            return;
        }

        let l = self.rank();
        let mut residual = DVector::from_column_slice(centered);
        let p = self.basis.tr_mul(&residual);
        residual -= &self.basis * &p;
        let r = residual.norm();
        let grow = l < dim && r >= RESIDUAL_TOL * x_norm.max(1.0);

        let k = if grow { l + 1 } else { l };
        let mut arrow = DMatrix::<f64>::zeros(k, k);
        for (i, &lam) in self.eigenvalues.iter().enumerate() {
            arrow[(i, i)] = lam;
        }
        let mut v = DVector::<f64>::zeros(k);
        v.rows_mut(0, l).copy_from(&p);
        if grow {
            v[l] = r;
        }
        arrow.ger(1.0, &v, &v, 1.0);

        let eig = SymmetricEigen::new(arrow);
        let mut order: Vec<usize> = (0..k).collect();
        // stable sort keeps ties in solver order, which is deterministic
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let keep = k.min(max_rank);
        let order = &order[..keep];

        let rotation = DMatrix::from_fn(k, keep, |row, col| eig.eigenvectors[(row, order[col])]);
        let extended = if grow {
            let mut e = self.basis.clone().insert_column(l, 0.0);
            e.set_column(l, &(residual / r));
            e
        } else {
            self.basis.clone()
        };
        let mut basis = extended * rotation;
        if linalg::orthonormality_drift(&basis) > REORTHONORMALIZE_TOL {
            modified_gram_schmidt(&mut basis);
        }
        self.basis = basis;
        self.eigenvalues = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    }
}

/// Top-`d` eigenpairs of `X Xᵀ` for the given columns, from a dense symmetric
/// eigendecomposition of the scatter matrix.
///
/// Used as an independent check on the incremental chain. nalgebra's SVD with
/// singular vectors requested misreports singular values of some exactly
/// rank-deficient inputs, so it is not used here.
pub fn batch_pca_oracle(columns: &DMatrix<f64>, d: usize) -> SubspaceState {
    assert!(columns.ncols() >= 1, "oracle needs at least one column");
    let eig = SymmetricEigen::new(columns * columns.transpose());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let keep = d.min(order.len()).min(columns.ncols());
    let order = &order[..keep];
    SubspaceState {
        basis: DMatrix::from_fn(columns.nrows(), keep, |r, c| eig.eigenvectors[(r, order[c])]),
        eigenvalues: order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect(),
        seen: columns.ncols(),
    }
}

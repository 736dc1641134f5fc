//! Dense symmetric-matrix primitives.
//!
//! Everything here works on real symmetric matrices stored as [`faer::Mat`].
//! Kernels run sequentially so results do not depend on the size of any
//! surrounding thread pool.

use faer::diag::Diag;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};

use crate::error::{CoralError, Result};

/// Relative tolerance for the symmetry check in [`SymmetricMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Eigenvalues below `-PSD_TOL * max_eigenvalue` mark a matrix as indefinite.
pub const PSD_TOL: f64 = 1e-8;

/// Relative floor applied to eigenvalues before taking inverse powers.
pub const CLAMP_REL: f64 = 1e-12;

/// Default relative rank tolerance: `D * machine epsilon`.
///
/// Thresholds are always taken relative to the largest eigenvalue, so the
/// absolute cutoff is `D * eps * max_eigenvalue`.
pub fn default_rank_tol(dim: usize) -> f64 {
    dim as f64 * f64::EPSILON
}

/// A square real matrix that is symmetric up to floating-point noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    data: Mat<f64>,
}

impl SymmetricMatrix {
    /// Validates and symmetrizes `data` as `(S + Sᵀ) / 2`.
    pub fn new(data: Mat<f64>) -> Result<Self> {
        let n = data.nrows();
        if n == 0 || data.ncols() != n {
            return Err(CoralError::Shape(format!(
                "symmetric matrix must be square and non-empty, got {}x{}",
                n,
                data.ncols()
            )));
        }
        for j in 0..n {
            for i in 0..n {
                let a = data[(i, j)];
                if !a.is_finite() {
                    return Err(CoralError::InvalidInput(format!("non-finite entry at ({i}, {j})")));
                }
                let b = data[(j, i)];
                if (a - b).abs() > SYMMETRY_TOL * (1.0 + a.abs()) {
                    return Err(CoralError::InvalidInput(format!(
                        "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self::from_mat_unchecked(data))
    }

    /// Symmetrizes without validation. Callers guarantee a square, finite,
    /// nearly symmetric input.
    pub(crate) fn from_mat_unchecked(mut data: Mat<f64>) -> Self {
        symmetrize(&mut data);
        Self { data }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(CoralError::Shape("rows must form a square matrix".into()));
        }
        Self::new(Mat::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(dim: usize) -> Self {
        Self { data: Mat::identity(dim, dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { data: Mat::zeros(dim, dim) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self { data: Mat::from_fn(n, n, |i, j| if i == j { diag[i] } else { 0.0 }) }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn as_mat(&self) -> MatRef<'_, f64> {
        self.data.as_ref()
    }

    pub fn into_mat(self) -> Mat<f64> {
        self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        scaled_norm(self.data.as_ref(), None)
    }

    /// Adds `shift` to every diagonal entry.
    pub fn shift_diagonal(mut self, shift: f64) -> Self {
        for i in 0..self.dim() {
            self.data[(i, i)] += shift;
        }
        self
    }
}

/// `S = vectors · diag(values) · vectorsᵀ` with eigenvalues sorted non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    vectors: Mat<f64>,
    values: Vec<f64>,
}

impl EigenDecomposition {
    /// Orthonormal eigenvectors, one per column.
    pub fn vectors(&self) -> MatRef<'_, f64> {
        self.vectors.as_ref()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Largest eigenvalue, or 0 for the empty decomposition.
    pub fn max_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn recompose(&self) -> SymmetricMatrix {
        self.reconstruct_with(self.dim(), |v| v)
    }

    /// `U[:, :r] · diag(f(values[:r])) · U[:, :r]ᵀ`, skipping zero weights.
    pub(crate) fn reconstruct_with(&self, r: usize, f: impl Fn(f64) -> f64) -> SymmetricMatrix {
        let d = self.dim();
        let kept: Vec<(usize, f64)> =
            (0..r.min(d)).map(|k| (k, f(self.values[k]))).filter(|&(_, w)| w != 0.0).collect();
        if kept.is_empty() {
            return SymmetricMatrix::zeros(d);
        }
        let basis = Mat::from_fn(d, kept.len(), |i, c| self.vectors[(i, kept[c].0)]);
        let scaled = Mat::from_fn(d, kept.len(), |i, c| basis[(i, c)] * kept[c].1);
        let mut out = Mat::zeros(d, d);
        matmul(&mut out, Accum::Replace, &scaled, basis.transpose(), 1.0, Par::Seq);
        SymmetricMatrix::from_mat_unchecked(out)
    }
}

/// Eigendecomposition of a symmetric matrix.
///
/// Eigenvalues come back non-increasing. Each eigenvector is signed so that
/// its first entry of non-negligible magnitude is positive.
pub fn sym_eig(s: &SymmetricMatrix) -> Result<EigenDecomposition> {
    let n = s.dim();
    let a = s.as_mat();
    if let Some((i, j)) = first_non_finite(a) {
        return Err(CoralError::InvalidInput(format!("non-finite entry at ({i}, {j})")));
    }

    let mut vals = Diag::<f64>::zeros(n);
    let mut vecs = Mat::<f64>::zeros(n, n);
    let par = Par::Seq;
    let mut mem = MemBuffer::new(evd::self_adjoint_evd_scratch::<f64>(
        n,
        ComputeEigenvectors::Yes,
        par,
        Default::default(),
    ));
    evd::self_adjoint_evd(
        a,
        vals.as_mut(),
        Some(vecs.as_mut()),
        par,
        MemStack::new(&mut mem),
        Default::default(),
    )
    .map_err(|e| CoralError::InvalidInput(format!("eigendecomposition failed: {e:?}")))?;

    // faer returns ascending order
    let values: Vec<f64> = (0..n).rev().map(|k| vals[k]).collect();
    let mut vectors = Mat::from_fn(n, n, |i, k| vecs[(i, n - 1 - k)]);
    for k in 0..n {
        let lead = (0..n).map(|i| vectors[(i, k)]).find(|x| x.abs() > 1e-10).unwrap_or(0.0);
        if lead < 0.0 {
            for i in 0..n {
                vectors[(i, k)] = -vectors[(i, k)];
            }
        }
    }
    Ok(EigenDecomposition { vectors, values })
}

/// Square root (`p = 0.5`) or inverse square root (`p = -0.5`) of a PSD matrix.
pub fn matrix_power(s: &SymmetricMatrix, p: f64) -> Result<SymmetricMatrix> {
    check_power(p)?;
    matrix_power_eig(&sym_eig(s)?, p)
}

/// [`matrix_power`] on an existing decomposition.
///
/// Tiny negative eigenvalues are treated as zero. For `p = -0.5` eigenvalues
/// are clamped to `CLAMP_REL * max(max_eigenvalue, 1)` first.
pub fn matrix_power_eig(e: &EigenDecomposition, p: f64) -> Result<SymmetricMatrix> {
    check_power(p)?;
    check_psd(e)?;
    if p > 0.0 {
        Ok(e.reconstruct_with(e.dim(), |v| v.max(0.0).sqrt()))
    } else {
        let floor = CLAMP_REL * e.max_value().max(1.0);
        Ok(e.reconstruct_with(e.dim(), |v| 1.0 / v.max(floor).sqrt()))
    }
}

/// `U · (Σ⁺)^{1/2} · Uᵀ`: eigenvalues at or below `rank_tol * max_eigenvalue`
/// map to zero, the rest to `value^{-1/2}`.
pub fn pseudo_inverse_sqrt(e: &EigenDecomposition, rank_tol: f64) -> SymmetricMatrix {
    let cutoff = rank_tol * e.max_value().max(0.0);
    e.reconstruct_with(e.dim(), |v| if v > cutoff { 1.0 / v.sqrt() } else { 0.0 })
}

/// Best rank-`r` approximation `U[:, :r] · Σ[:r] · U[:, :r]ᵀ`.
pub fn truncated_reconstruction(e: &EigenDecomposition, r: usize) -> Result<SymmetricMatrix> {
    check_rank(e, r)?;
    Ok(e.reconstruct_with(r, |v| v))
}

/// `U[:, :r] · Σ[:r]^{1/2} · U[:, :r]ᵀ`, the square root of the rank-`r` truncation.
pub fn truncated_sqrt(e: &EigenDecomposition, r: usize) -> Result<SymmetricMatrix> {
    check_rank(e, r)?;
    Ok(e.reconstruct_with(r, |v| v.max(0.0).sqrt()))
}

/// Number of eigenvalues strictly above `rank_tol * max(max_eigenvalue, 0)`.
pub fn numerical_rank(e: &EigenDecomposition, rank_tol: f64) -> usize {
    let cutoff = rank_tol * e.max_value().max(0.0);
    e.values.iter().filter(|&&v| v > cutoff).count()
}

/// `‖X − Y‖_F`; exactly zero only when the inputs are entrywise equal.
pub fn frobenius_distance(x: &SymmetricMatrix, y: &SymmetricMatrix) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(CoralError::Shape(format!("cannot compare {0}x{0} with {1}x{1}", x.dim(), y.dim())));
    }
    Ok(scaled_norm(x.as_mat(), Some(y.as_mat())))
}

/// Frobenius norm of `a` (or `a - b`), scaled by the largest entry so that
/// tiny nonzero differences never underflow to zero.
pub(crate) fn scaled_norm(a: MatRef<'_, f64>, b: Option<MatRef<'_, f64>>) -> f64 {
    let entry = |i: usize, j: usize| match b {
        Some(b) => a[(i, j)] - b[(i, j)],
        None => a[(i, j)],
    };
    let (m, n) = (a.nrows(), a.ncols());
    let mut scale = 0.0f64;
    for j in 0..n {
        for i in 0..m {
            scale = scale.max(entry(i, j).abs());
        }
    }
    if scale == 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for j in 0..n {
        for i in 0..m {
            let x = entry(i, j) / scale;
            sum += x * x;
        }
    }
    scale * sum.sqrt()
}

pub(crate) fn mat_mul(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::zeros(a.nrows(), b.ncols());
    matmul(&mut out, Accum::Replace, a, b, 1.0, Par::Seq);
    out
}

/// `aᵀ · b`.
pub(crate) fn mat_mul_tn(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::zeros(a.ncols(), b.ncols());
    matmul(&mut out, Accum::Replace, a.transpose(), b, 1.0, Par::Seq);
    out
}

pub(crate) fn symmetrize(m: &mut Mat<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub(crate) fn first_non_finite(a: MatRef<'_, f64>) -> Option<(usize, usize)> {
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if !a[(i, j)].is_finite() {
                return Some((i, j));
            }
        }
    }
    None
}

fn check_power(p: f64) -> Result<()> {
    if p == 0.5 || p == -0.5 {
        Ok(())
    } else {
        Err(CoralError::UnsupportedPower(p))
    }
}

pub(crate) fn check_psd(e: &EigenDecomposition) -> Result<()> {
    let max = e.max_value();
    let min = e.values.last().copied().unwrap_or(0.0);
    if min < -PSD_TOL * max.max(0.0) {
        return Err(CoralError::NotPsd { min, max });
    }
    Ok(())
}

fn check_rank(e: &EigenDecomposition, r: usize) -> Result<()> {
    if r > e.dim() {
        return Err(CoralError::InvalidRank { rank: r, dim: e.dim() });
    }
    Ok(())
}

//! Correlation alignment.
//!
//! Source features are whitened with the source covariance and re-colored
//! with the target covariance, so that a classifier trained on the adjusted
//! source sees second-order statistics that match the target. Two variants
//! are provided:
//!
//! * [`coral_regularized`] adds `lambda * I` to both covariances and uses
//!   plain inverse square roots. This is the default path (`lambda = 1`).
//! * [`coral_analytical`] works on the unregularized covariances, using the
//!   pseudo-inverse square root of the source covariance and the square root
//!   of the best rank-`r` approximation of the target covariance, where `r`
//!   is the smaller of the two numerical ranks.
//!
//! Transforms act on row vectors: adjusted features are `F · A`.

use faer::{Mat, MatRef};

use crate::classifier::LinearModel;
use crate::error::{CoralError, Result};
use crate::linalg::{
    self, default_rank_tol, matrix_power_eig, numerical_rank, pseudo_inverse_sqrt, sym_eig, truncated_sqrt,
    SymmetricMatrix,
};

/// Default covariance regularization weight.
pub const DEFAULT_LAMBDA: f64 = 1.0;

/// `n × D` matrix of finite reals, one example per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Mat<f64>,
}

impl FeatureMatrix {
    pub fn new(data: Mat<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(CoralError::Shape(format!(
                "feature matrix must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if let Some((i, j)) = linalg::first_non_finite(data.as_ref()) {
            return Err(CoralError::InvalidInput(format!("non-finite feature at row {i}, column {j}")));
        }
        Ok(Self { data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        if let Some(i) = rows.iter().position(|r| r.as_ref().len() != d) {
            return Err(CoralError::Shape(format!("row {i} has a different length than row 0")));
        }
        Self::new(Mat::from_fn(rows.len(), d, |i, j| rows[i].as_ref()[j]))
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.ncols()).map(|j| self.data[(i, j)]).collect()
    }

    pub fn as_mat(&self) -> MatRef<'_, f64> {
        self.data.as_ref()
    }

    pub fn into_mat(self) -> Mat<f64> {
        self.data
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        let d = self.ncols();
        FeatureMatrix { data: Mat::from_fn(indices.len(), d, |i, j| self.data[(indices[i], j)]) }
    }

    pub fn column_means(&self) -> Vec<f64> {
        let n = self.nrows() as f64;
        (0..self.ncols()).map(|j| (0..self.nrows()).map(|i| self.data[(i, j)]).sum::<f64>() / n).collect()
    }
}

/// Sample covariance with `lambda * I` added to the diagonal.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    matrix: SymmetricMatrix,
    lambda: f64,
}

impl CovarianceMatrix {
    pub fn matrix(&self) -> &SymmetricMatrix {
        &self.matrix
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn into_matrix(self) -> SymmetricMatrix {
        self.matrix
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformMode {
    Regularized,
    Analytical,
}

/// The `D × D` alignment map `A`, applied as `F · A`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoralTransform {
    matrix: Mat<f64>,
    lambda: f64,
    mode: TransformMode,
    rank: usize,
}

impl CoralTransform {
    pub fn new(matrix: Mat<f64>, lambda: f64, mode: TransformMode, rank: usize) -> Result<Self> {
        let d = matrix.nrows();
        if d == 0 || matrix.ncols() != d {
            return Err(CoralError::Shape(format!("transform must be square, got {}x{}", d, matrix.ncols())));
        }
        if linalg::first_non_finite(matrix.as_ref()).is_some() {
            return Err(CoralError::InvalidInput("transform has non-finite entries".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(CoralError::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
        }
        if rank > d || (mode == TransformMode::Regularized && rank != d) {
            return Err(CoralError::InvalidRank { rank, dim: d });
        }
        Ok(Self { matrix, lambda, mode, rank })
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: Mat::identity(dim, dim), lambda: 0.0, mode: TransformMode::Regularized, rank: dim }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.matrix.as_ref()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mode(&self) -> TransformMode {
        self.mode
    }

    pub fn rank(&self) -> usize {
        self.rank
    }
}

/// Per-column means and sample standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub means: Vec<f64>,
    /// Zero marks a constant column.
    pub stds: Vec<f64>,
}

impl NormalizationStats {
    /// Centers and scales `features` with these statistics. Columns with a
    /// recorded std of zero become all zeros.
    pub fn apply(&self, features: &FeatureMatrix) -> Result<FeatureMatrix> {
        if features.ncols() != self.means.len() {
            return Err(CoralError::Shape(format!(
                "statistics have {} columns, features have {}",
                self.means.len(),
                features.ncols()
            )));
        }
        let data = Mat::from_fn(features.nrows(), features.ncols(), |i, j| {
            let s = self.stds[j];
            if s > 0.0 {
                (features.data[(i, j)] - self.means[j]) / s
            } else {
                0.0
            }
        });
        FeatureMatrix::new(data)
    }
}

/// Zero-mean, unit-sample-std columns (denominator `n - 1`).
pub fn normalize_features(features: &FeatureMatrix) -> Result<(FeatureMatrix, NormalizationStats)> {
    let n = features.nrows();
    if n < 2 {
        return Err(CoralError::InsufficientSamples { needed: 2, got: n });
    }
    let means = features.column_means();
    let stds = (0..features.ncols())
        .map(|j| {
            let first = features.data[(0, j)];
            if (1..n).all(|i| features.data[(i, j)] == first) {
                return 0.0;
            }
            let ss: f64 = (0..n).map(|i| (features.data[(i, j)] - means[j]).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        })
        .collect();
    let stats = NormalizationStats { means, stds };
    Ok((stats.apply(features)?, stats))
}

/// `(1 / (n - 1)) Σ (xᵢ - mean)(xᵢ - mean)ᵀ + lambda * I`.
pub fn estimate_covariance(features: &FeatureMatrix, lambda: f64) -> Result<CovarianceMatrix> {
    let n = features.nrows();
    if n < 2 {
        return Err(CoralError::InsufficientSamples { needed: 2, got: n });
    }
    check_lambda(lambda)?;
    let means = features.column_means();
    let centered = Mat::from_fn(n, features.ncols(), |i, j| features.data[(i, j)] - means[j]);
    let mut cov = linalg::mat_mul_tn(centered.as_ref(), centered.as_ref());
    let scale = 1.0 / (n - 1) as f64;
    for j in 0..cov.ncols() {
        for i in 0..cov.nrows() {
            cov[(i, j)] *= scale;
        }
        cov[(j, j)] += lambda;
    }
    Ok(CovarianceMatrix { matrix: SymmetricMatrix::from_mat_unchecked(cov), lambda })
}

/// Regularized whitening and re-coloring.
///
/// Returns the adjusted source `source · A` with
/// `A = (C_S + λI)^{-1/2} · (C_T + λI)^{1/2}`. The transform multiplies the
/// source as given; covariance estimation centers internally but the
/// features themselves are not re-centered.
///
/// With `lambda = 0` both covariances must be numerically full rank;
/// otherwise a [`CoralError::SingularCovariance`] points the caller at
/// [`coral_analytical`].
pub fn coral_regularized(
    source: &FeatureMatrix,
    target: &FeatureMatrix,
    lambda: f64,
) -> Result<(FeatureMatrix, CoralTransform)> {
    let transform = regularized_transform(source, target, lambda)?;
    let adjusted = apply_transform(source, &transform)?;
    Ok((adjusted, transform))
}

/// The transform half of [`coral_regularized`].
pub fn regularized_transform(
    source: &FeatureMatrix,
    target: &FeatureMatrix,
    lambda: f64,
) -> Result<CoralTransform> {
    check_same_dim(source, target)?;
    check_lambda(lambda)?;
    let d = source.ncols();
    let whiten = covariance_power(source, lambda, -0.5, "source")?;
    let color = covariance_power(target, lambda, 0.5, "target")?;
    let a = whiten.times(&color);
    CoralTransform::new(a, lambda, TransformMode::Regularized, d)
}

/// `shift · I + V · diag(weights) · Vᵀ` with orthonormal columns in `V`.
struct SpectralFactor {
    shift: f64,
    vectors: Mat<f64>,
    weights: Vec<f64>,
}

impl SpectralFactor {
    /// Dense product of two factors, grouped so that thin bases stay thin:
    /// `ab I + b Vs Ws Vsᵀ + (a Vt Wt + Vs Ws (Vsᵀ Vt) Wt) Vtᵀ`.
    fn times(&self, other: &SpectralFactor) -> Mat<f64> {
        let (a, b) = (self.shift, other.shift);
        let (vs, vt) = (self.vectors.as_ref(), other.vectors.as_ref());
        let d = vs.nrows();
        let vs_ws = Mat::from_fn(d, vs.ncols(), |i, k| vs[(i, k)] * self.weights[k]);
        let cross = linalg::mat_mul_tn(vs, vt);
        let mut left = linalg::mat_mul(vs_ws.as_ref(), cross.as_ref());
        for k in 0..vt.ncols() {
            let w = other.weights[k];
            for i in 0..d {
                left[(i, k)] = (left[(i, k)] + a * vt[(i, k)]) * w;
            }
        }
        let mut out = linalg::mat_mul(left.as_ref(), vt.transpose());
        if b != 0.0 {
            let own = linalg::mat_mul(vs_ws.as_ref(), vs.transpose());
            for j in 0..d {
                for i in 0..d {
                    out[(i, j)] += b * own[(i, j)];
                }
            }
        }
        for i in 0..d {
            out[(i, i)] += a * b;
        }
        out
    }
}

/// `(C + λI)^p` for `p = ±1/2` as a spectral factor. With fewer samples
/// than features and `λ > 0` the nonzero spectrum of `C` comes from the
/// `n × n` Gram matrix of the centered rows.
fn covariance_power(
    features: &FeatureMatrix,
    lambda: f64,
    p: f64,
    which: &'static str,
) -> Result<SpectralFactor> {
    let (n, d) = (features.nrows(), features.ncols());
    if lambda > 0.0 && n >= 2 && n <= d {
        let means = features.column_means();
        let centered = Mat::from_fn(n, d, |i, j| features.data[(i, j)] - means[j]);
        let mut gram = linalg::mat_mul(centered.as_ref(), centered.transpose());
        let scale = 1.0 / (n - 1) as f64;
        for j in 0..n {
            for i in 0..n {
                gram[(i, j)] *= scale;
            }
        }
        let eig = sym_eig(&SymmetricMatrix::from_mat_unchecked(gram))?;
        let cutoff = default_rank_tol(d) * eig.max_value().max(0.0);
        let kept: Vec<usize> = (0..n).filter(|&k| eig.values()[k] > cutoff).collect();
        let u = eig.vectors();
        let basis = Mat::from_fn(n, kept.len(), |i, c| {
            u[(i, kept[c])] / (eig.values()[kept[c]] * (n - 1) as f64).sqrt()
        });
        let vectors = linalg::mat_mul_tn(centered.as_ref(), basis.as_ref());
        let shift = lambda.powf(p);
        let weights = kept.iter().map(|&k| (eig.values()[k] + lambda).powf(p) - shift).collect();
        return Ok(SpectralFactor { shift, vectors, weights });
    }

    let eig = sym_eig(estimate_covariance(features, lambda)?.matrix())?;
    if lambda == 0.0 {
        let rank = numerical_rank(&eig, default_rank_tol(d));
        if rank < d {
            return Err(CoralError::SingularCovariance { which, rank, dim: d });
        }
    }
    linalg::check_psd(&eig)?;
    let floor = linalg::CLAMP_REL * eig.max_value().max(1.0);
    let weights = eig
        .values()
        .iter()
        .map(|&v| if p > 0.0 { v.max(0.0).sqrt() } else { 1.0 / v.max(floor).sqrt() })
        .collect();
    Ok(SpectralFactor { shift: 0.0, vectors: eig.vectors().to_owned(), weights })
}

/// Closed-form minimizer of `‖Aᵀ C_S A − C_T‖_F` on unregularized covariances:
///
/// `A = U_S (Σ_S⁺)^{1/2} U_Sᵀ · U_T[:r] Σ_T[:r]^{1/2} U_T[:r]ᵀ`,
/// `r = min(rank C_S, rank C_T)`.
pub fn coral_analytical(source: &FeatureMatrix, target: &FeatureMatrix) -> Result<CoralTransform> {
    check_same_dim(source, target)?;
    let d = source.ncols();
    let tol = default_rank_tol(d);
    let source_eig = sym_eig(estimate_covariance(source, 0.0)?.matrix())?;
    let target_eig = sym_eig(estimate_covariance(target, 0.0)?.matrix())?;
    let rank = numerical_rank(&source_eig, tol).min(numerical_rank(&target_eig, tol));
    let whiten = pseudo_inverse_sqrt(&source_eig, tol);
    let color = truncated_sqrt(&target_eig, rank)?;
    let a = linalg::mat_mul(whiten.as_mat(), color.as_mat());
    CoralTransform::new(a, 0.0, TransformMode::Analytical, rank)
}

/// Symmetric whitening map `(C + λI)^{-1/2}` of a single domain.
pub fn whitening_transform(features: &FeatureMatrix, lambda: f64) -> Result<CoralTransform> {
    let d = features.ncols();
    let eig = sym_eig(estimate_covariance(features, lambda)?.matrix())?;
    let w = matrix_power_eig(&eig, -0.5)?;
    CoralTransform::new(w.into_mat(), lambda, TransformMode::Regularized, d)
}

/// Row-wise `F · A`.
pub fn apply_transform(features: &FeatureMatrix, transform: &CoralTransform) -> Result<FeatureMatrix> {
    if features.ncols() != transform.dim() {
        return Err(CoralError::Shape(format!(
            "features have {} columns, transform is {}x{}",
            features.ncols(),
            transform.dim(),
            transform.dim()
        )));
    }
    FeatureMatrix::new(linalg::mat_mul(features.as_mat(), transform.matrix()))
}

/// Moves a transform into the classifier: every weight vector becomes
/// `A · w` and biases are kept, so scoring raw rows `u` with the returned
/// model equals scoring `u · A` with the original one.
pub fn pull_back_weights(model: &LinearModel, transform: &CoralTransform) -> Result<LinearModel> {
    if model.dim() != transform.dim() {
        return Err(CoralError::Shape(format!(
            "model has dimension {}, transform is {}x{}",
            model.dim(),
            transform.dim(),
            transform.dim()
        )));
    }
    let weights = linalg::mat_mul(model.weights(), transform.matrix().transpose());
    model.with_weights(weights)
}

fn check_same_dim(source: &FeatureMatrix, target: &FeatureMatrix) -> Result<()> {
    if source.ncols() != target.ncols() {
        return Err(CoralError::Shape(format!(
            "source has {} features, target has {}",
            source.ncols(),
            target.ncols()
        )));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(CoralError::InvalidInput(format!("lambda must be a finite value >= 0, got {lambda}")))
    }
}

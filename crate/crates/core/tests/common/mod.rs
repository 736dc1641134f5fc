#![allow(dead_code)]

use coral::FeatureMatrix;
use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Dense = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Dense {
    (0..rows).map(|_| (0..cols).map(|_| normal(rng)).collect()).collect()
}

pub fn to_mat(a: &Dense) -> Mat<f64> {
    Mat::from_fn(a.len(), a[0].len(), |i, j| a[i][j])
}

pub fn from_mat(m: faer::MatRef<'_, f64>) -> Dense {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn features(a: &Dense) -> FeatureMatrix {
    FeatureMatrix::from_rows(a).unwrap()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    assert_eq!(a[0].len(), k);
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn transpose(a: &Dense) -> Dense {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn sub(a: &Dense, b: &Dense) -> Dense {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect()).collect()
}

pub fn frob(a: &Dense) -> f64 {
    a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn identity(d: usize) -> Dense {
    (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// Sample covariance with the `n - 1` denominator, two-pass.
pub fn covariance(x: &Dense) -> Dense {
    let n = x.len();
    let d = x[0].len();
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut c = vec![vec![0.0; d]; d];
    for r in x {
        for i in 0..d {
            for j in 0..d {
                c[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    for row in &mut c {
        for v in row.iter_mut() {
            *v /= (n - 1) as f64;
        }
    }
    c
}

/// Cyclic Jacobi eigensolver: values non-increasing, eigenvectors as columns.
pub fn jacobi_eig(a: &Dense) -> (Vec<f64>, Dense) {
    let d = a.len();
    let mut m = a.clone();
    let mut v = identity(d);
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 * frob(&m).powi(2).max(1e-300) {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..d {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m[j][j].partial_cmp(&m[i][i]).unwrap());
    let values = order.iter().map(|&k| m[k][k]).collect();
    let vectors = (0..d).map(|i| order.iter().map(|&k| v[i][k]).collect()).collect();
    (values, vectors)
}

/// `V · diag(f(values)) · Vᵀ` from a Jacobi decomposition.
pub fn spectral(values: &[f64], vectors: &Dense, f: impl Fn(usize, f64) -> f64) -> Dense {
    let d = vectors.len();
    let mut out = vec![vec![0.0; d]; d];
    for (k, &lam) in values.iter().enumerate() {
        let w = f(k, lam);
        if w == 0.0 {
            continue;
        }
        for i in 0..d {
            for j in 0..d {
                out[i][j] += w * vectors[i][k] * vectors[j][k];
            }
        }
    }
    out
}

/// Random orthogonal matrix from Gram–Schmidt on a Gaussian matrix.
pub fn orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Dense {
    let cols = orthonormal_rows(&transpose(&gaussian(d, d, rng)));
    transpose(&cols)
}

/// Gram–Schmidt on the rows of `a`; returns orthonormal rows.
fn orthonormal_rows(a: &Dense) -> Dense {
    let mut out: Dense = Vec::new();
    for row in a {
        let mut v = row.clone();
        for _ in 0..2 {
            for q in &out {
                let dot: f64 = v.iter().zip(q).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= dot * y;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        out.push(v.iter().map(|x| x / norm).collect());
    }
    out
}

/// `n × D` data whose sample covariance is exactly `Σ_k scales[k] · q_k q_kᵀ`
/// (up to rounding), where `q_k` are the first columns of `basis`.
pub fn data_with_covariance(n: usize, basis: &Dense, scales: &[f64], rng: &mut ChaCha8Rng) -> Dense {
    let k = scales.len();
    let d = basis.len();
    // centered latent columns, orthogonal and scaled to unit sample variance
    let mut cols: Dense = Vec::new();
    while cols.len() < k {
        let mut z: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
        let mean = z.iter().sum::<f64>() / n as f64;
        z.iter_mut().for_each(|x| *x -= mean);
        cols.push(z);
    }
    let ones = vec![1.0 / (n as f64).sqrt(); n];
    let mut all = vec![ones];
    all.extend(cols);
    let ortho = orthonormal_rows(&all);
    let latent = &ortho[1..];
    let scale = ((n - 1) as f64).sqrt();
    (0..n)
        .map(|i| {
            (0..d)
                .map(|j| (0..k).map(|c| latent[c][i] * scale * scales[c].sqrt() * basis[j][c]).sum())
                .collect()
        })
        .collect()
}

/// Source and target data in `d` dimensions with covariance ranks
/// `rank_s` and `rank_t`. Both ranges are spanned by leading columns of one
/// random orthogonal basis and the target spectrum decreases along it, so
/// the lower-rank range always sits inside the other's top eigenspace.
pub fn nested_pair(d: usize, rank_s: usize, rank_t: usize, n: usize, seed: u64) -> (Dense, Dense) {
    let mut g = rng(seed);
    let basis = orthogonal(d, &mut g);
    let source_scales: Vec<f64> = (0..rank_s).map(|_| 0.5 + 4.0 * g.gen_range(0.0..1.0)).collect();
    let mut target_scales: Vec<f64> = (0..rank_t).map(|_| 0.5 + 9.5 * g.gen_range(0.0..1.0)).collect();
    target_scales.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let source = data_with_covariance(n, &basis, &source_scales, &mut g);
    let target = data_with_covariance(n, &basis, &target_scales, &mut g);
    (source, target)
}

/// `‖Aᵀ C_S A − C_T‖_F` evaluated with naive products.
pub fn coral_objective(a: &Dense, cs: &Dense, ct: &Dense) -> f64 {
    frob(&sub(&matmul(&matmul(&transpose(a), cs), a), ct))
}

/// `‖C − truncation_r(C)‖_F` from the Jacobi spectrum.
pub fn truncation_residual(c: &Dense, r: usize) -> f64 {
    let (vals, _) = jacobi_eig(c);
    vals[r..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn random_model(classes: usize, d: usize, seed: u64) -> coral::LinearModel {
    let mut g = rng(seed);
    let rows = if classes == 2 { 1 } else { classes };
    let w = gaussian(rows, d, &mut g);
    let b = (0..rows).map(|_| normal(&mut g)).collect();
    coral::LinearModel::new(to_mat(&w), b, 1.0, classes).unwrap()
}

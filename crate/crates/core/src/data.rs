//! Matrix, label and model files, the per-class subsampling protocol, and a
//! seeded synthetic domain-shift generator.
//!
//! Text matrices start with a `n D` header line followed by `n` lines of `D`
//! space-separated numbers. Binary matrices are `CORL`, `n` and `D` as
//! little-endian `u32`, then `n * D` little-endian `f64` values, row-major.
//! Label files hold one non-negative integer per line.

use std::fs;
use std::io::Write;
use std::path::Path;

use faer::Mat;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::classifier::{LabeledDataset, LinearModel};
use crate::coral::FeatureMatrix;
use crate::error::{CoralError, Result};

pub const MATRIX_MAGIC: &[u8; 4] = b"CORL";
pub const MODEL_MAGIC: &[u8; 4] = b"CMDL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    Text,
    #[serde(alias = "bin")]
    Binary,
}

impl MatrixFormat {
    /// Binary when the bytes start with the matrix magic, text otherwise.
    pub fn detect(bytes: &[u8]) -> Self {
        if bytes.starts_with(MATRIX_MAGIC) {
            MatrixFormat::Binary
        } else {
            MatrixFormat::Text
        }
    }
}

pub fn load_features(path: impl AsRef<Path>, format: MatrixFormat) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| CoralError::io(path, e))?;
    decode_matrix(&bytes, format, &path.display().to_string())
}

/// Loads a matrix, picking the format from its first bytes.
pub fn load_features_auto(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| CoralError::io(path, e))?;
    decode_matrix(&bytes, MatrixFormat::detect(&bytes), &path.display().to_string())
}

pub fn save_features(path: impl AsRef<Path>, features: &FeatureMatrix, format: MatrixFormat) -> Result<()> {
    let path = path.as_ref();
    write_file(path, &encode_matrix(features, format))
}

pub fn encode_matrix(features: &FeatureMatrix, format: MatrixFormat) -> Vec<u8> {
    let (n, d) = (features.nrows(), features.ncols());
    match format {
        MatrixFormat::Text => {
            let mut out = format!("{n} {d}\n");
            for i in 0..n {
                for j in 0..d {
                    if j > 0 {
                        out.push(' ');
                    }
                    out.push_str(&features.get(i, j).to_string());
                }
                out.push('\n');
            }
            out.into_bytes()
        }
        MatrixFormat::Binary => {
            let mut out = Vec::with_capacity(12 + 8 * n * d);
            out.extend_from_slice(MATRIX_MAGIC);
            out.extend_from_slice(&(n as u32).to_le_bytes());
            out.extend_from_slice(&(d as u32).to_le_bytes());
            for i in 0..n {
                for j in 0..d {
                    out.extend_from_slice(&features.get(i, j).to_le_bytes());
                }
            }
            out
        }
    }
}

pub fn decode_matrix(bytes: &[u8], format: MatrixFormat, origin: &str) -> Result<FeatureMatrix> {
    match format {
        MatrixFormat::Text => decode_text(bytes, origin),
        MatrixFormat::Binary => decode_binary(bytes, origin),
    }
}

fn decode_text(bytes: &[u8], origin: &str) -> Result<FeatureMatrix> {
    let err = |msg: String| CoralError::parse(origin, msg);
    let text = std::str::from_utf8(bytes).map_err(|_| err("file is not valid UTF-8".into()))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err("empty file".into()))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    let (n, d) = match dims.as_slice() {
        [n, d] => match (n.parse::<usize>(), d.parse::<usize>()) {
            (Ok(n), Ok(d)) if n > 0 && d > 0 => (n, d),
            _ => return Err(err(format!("malformed header '{header}'"))),
        },
        _ => return Err(err(format!("malformed header '{header}', expected 'n D'"))),
    };

    let mut values = Vec::with_capacity(n * d);
    let mut rows = 0;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if rows == n {
            return Err(err(format!("line {}: more than {n} data rows", lineno + 1)));
        }
        let mut count = 0;
        for (col, cell) in line.split_whitespace().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                err(format!("row {}, column {}: non-numeric value '{cell}'", rows + 1, col + 1))
            })?;
            if !v.is_finite() {
                return Err(err(format!("row {}, column {}: non-finite value", rows + 1, col + 1)));
            }
            if col < d {
                values.push(v);
            }
            count += 1;
        }
        if count != d {
            return Err(err(format!("row {}: expected {d} values, found {count}", rows + 1)));
        }
        rows += 1;
    }
    if rows != n {
        return Err(err(format!("header declares {n} rows, found {rows}")));
    }
    FeatureMatrix::new(Mat::from_fn(n, d, |i, j| values[i * d + j]))
}

fn decode_binary(bytes: &[u8], origin: &str) -> Result<FeatureMatrix> {
    let err = |msg: String| CoralError::parse(origin, msg);
    if bytes.len() < 12 || &bytes[..4] != MATRIX_MAGIC {
        return Err(err("missing CORL header".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if n == 0 || d == 0 {
        return Err(err(format!("empty matrix {n}x{d}")));
    }
    let expected = n.checked_mul(d).and_then(|c| c.checked_mul(8)).and_then(|c| c.checked_add(12));
    if expected != Some(bytes.len()) {
        return Err(err(format!("expected {n}x{d} values, file has {} payload bytes", bytes.len() - 12)));
    }
    let mut values = Vec::with_capacity(n * d);
    for (k, chunk) in bytes[12..].chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(err(format!("row {}, column {}: non-finite value", k / d + 1, k % d + 1)));
        }
        values.push(v);
    }
    FeatureMatrix::new(Mat::from_fn(n, d, |i, j| values[i * d + j]))
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CoralError::io(path, e))?;
    parse_labels(&text, &path.display().to_string())
}

pub fn parse_labels(text: &str, origin: &str) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let cell = line.trim();
        if cell.is_empty() {
            continue;
        }
        match cell.parse::<i64>() {
            Ok(v) if v >= 0 => labels.push(v as usize),
            Ok(v) => {
                return Err(CoralError::parse(origin, format!("line {}: negative label {v}", lineno + 1)))
            }
            Err(_) => {
                return Err(CoralError::parse(
                    origin,
                    format!("line {}: '{cell}' is not a non-negative integer", lineno + 1),
                ))
            }
        }
    }
    Ok(labels)
}

pub fn save_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    write_file(path.as_ref(), out.as_bytes())
}

/// Features (text or binary, detected) plus a label file of the same length.
pub fn load_labeled(
    features_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<LabeledDataset> {
    let features = load_features_auto(&features_path)?;
    let labels = load_labels(&labels_path)?;
    if labels.len() != features.nrows() {
        return Err(CoralError::parse(
            labels_path.as_ref().display(),
            format!("{} labels for {} feature rows", labels.len(), features.nrows()),
        ));
    }
    LabeledDataset::new(features, labels)
}

pub fn save_labeled(
    features_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    data: &LabeledDataset,
    format: MatrixFormat,
) -> Result<()> {
    save_features(features_path, data.features(), format)?;
    save_labels(labels_path, data.labels())
}

/// `CMDL`, `u32` stored directions `K`, `u32` dimension `D`, then `K * D`
/// weights (row-major), `K` biases and C, all little-endian `f64`. One
/// stored direction means a binary model.
pub fn encode_model(model: &LinearModel) -> Vec<u8> {
    let w = model.weights();
    let (k, d) = (w.nrows(), w.ncols());
    let mut out = Vec::with_capacity(12 + 8 * (k * d + k + 1));
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&(k as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for i in 0..k {
        for j in 0..d {
            out.extend_from_slice(&w[(i, j)].to_le_bytes());
        }
    }
    for b in model.biases() {
        out.extend_from_slice(&b.to_le_bytes());
    }
    out.extend_from_slice(&model.c().to_le_bytes());
    out
}

pub fn decode_model(bytes: &[u8], origin: &str) -> Result<LinearModel> {
    let err = |msg: String| CoralError::parse(origin, msg);
    if bytes.len() < 12 || &bytes[..4] != MODEL_MAGIC {
        return Err(err("missing CMDL header".into()));
    }
    let k = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = k * d + k + 1;
    if k == 0 || d == 0 || bytes.len() != 12 + 8 * count {
        return Err(err(format!("model header {k}x{d} does not match file size {}", bytes.len())));
    }
    let vals: Vec<f64> =
        bytes[12..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let weights = Mat::from_fn(k, d, |i, j| vals[i * d + j]);
    let biases = vals[k * d..k * d + k].to_vec();
    let c = vals[count - 1];
    let classes = if k == 1 { 2 } else { k };
    LinearModel::new(weights, biases, c, classes).map_err(|e| err(e.to_string()))
}

pub fn save_model(path: impl AsRef<Path>, model: &LinearModel) -> Result<()> {
    write_file(path.as_ref(), &encode_model(model))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LinearModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| CoralError::io(path, e))?;
    decode_model(&bytes, &path.display().to_string())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| CoralError::io(path, e))?;
    f.write_all(bytes).map_err(|e| CoralError::io(path, e))
}

/// Exactly `per_class` examples of every class, drawn without replacement.
/// Output is grouped by class in ascending class order.
pub fn subsample(data: &LabeledDataset, per_class: usize, seed: u64) -> Result<LabeledDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(per_class * data.num_classes());
    for (class, mut idx) in data.class_indices().into_iter().enumerate() {
        if idx.len() < per_class {
            return Err(CoralError::Protocol(format!(
                "class {class} has {} examples, {per_class} requested",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        chosen.extend_from_slice(&idx[..per_class]);
    }
    Ok(data.subset(&chosen))
}

/// How target features relate to the source class-conditionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetMap {
    Identity,
    Scaled {
        factor: f64,
    },
    /// `R · P`: a rotation built from Givens turns with angles up to `angle`
    /// radians, applied after an SPD coloring whose eigenvalues are spread
    /// log-uniformly over `[1/stretch, stretch]`.
    RotationColoring {
        angle: f64,
        stretch: f64,
    },
    /// Explicit `D × D` matrix, row-major.
    Matrix {
        rows: Vec<Vec<f64>>,
    },
}

/// Parameters of a synthetic source/target pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub dim: usize,
    pub classes: usize,
    /// Examples per class in each domain.
    pub per_class: usize,
    /// Class means are `separation * N(0, I)`.
    pub separation: f64,
    pub target_map: TargetMap,
    /// Std of isotropic noise added to the mapped target.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoralError::Config(m));
        if self.dim < 1 {
            return bad("dim must be >= 1".into());
        }
        if self.classes < 2 {
            return bad("classes must be >= 2".into());
        }
        if self.per_class < 2 {
            return bad("per_class must be >= 2".into());
        }
        if !(self.separation.is_finite() && self.noise.is_finite() && self.noise >= 0.0) {
            return bad("separation and noise must be finite, noise >= 0".into());
        }
        match &self.target_map {
            TargetMap::Scaled { factor } if !(factor.is_finite() && *factor != 0.0) => {
                bad(format!("scale factor {factor} is not invertible"))
            }
            TargetMap::RotationColoring { angle, stretch }
                if !(angle.is_finite() && stretch.is_finite() && *stretch >= 1.0) =>
            {
                bad("rotation angle must be finite and stretch >= 1".into())
            }
            TargetMap::Matrix { rows }
                if rows.len() != self.dim || rows.iter().any(|r| r.len() != self.dim) =>
            {
                bad(format!("target map must be {0}x{0}", self.dim))
            }
            _ => Ok(()),
        }
    }
}

/// A generated pair plus the map that produced the target.
#[derive(Debug, Clone)]
pub struct SyntheticShift {
    pub source: LabeledDataset,
    pub target: LabeledDataset,
    /// Column-vector map `M`: target rows are `x · Mᵀ + noise`.
    pub map: Mat<f64>,
    /// Ratio of the largest to smallest singular value of `M`.
    pub condition: f64,
}

/// Gaussian class blobs for the source; the target draws fresh samples from
/// the same class-conditionals and pushes them through the target map.
pub fn generate_shift(spec: &ShiftSpec) -> Result<SyntheticShift> {
    spec.validate()?;
    let d = spec.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means: Vec<Vec<f64>> =
        (0..spec.classes).map(|_| (0..d).map(|_| spec.separation * normal(&mut rng)).collect()).collect();

    let map = match &spec.target_map {
        TargetMap::Identity => Mat::identity(d, d),
        TargetMap::Scaled { factor } => Mat::from_fn(d, d, |i, j| if i == j { *factor } else { 0.0 }),
        TargetMap::RotationColoring { angle, stretch } => {
            let basis = givens_rotation(d, std::f64::consts::PI, &mut rng);
            let spread: Vec<f64> = (0..d).map(|_| stretch.powf(rng.gen_range(-1.0..=1.0))).collect();
            let scaled = Mat::from_fn(d, d, |i, k| basis[(i, k)] * spread[k]);
            let coloring = crate::linalg::mat_mul(scaled.as_ref(), basis.transpose());
            let rotation = givens_rotation(d, *angle, &mut rng);
            crate::linalg::mat_mul(rotation.as_ref(), coloring.as_ref())
        }
        TargetMap::Matrix { rows } => Mat::from_fn(d, d, |i, j| rows[i][j]),
    };
    let condition = condition_number(&map)?;

    let draw = |rng: &mut ChaCha8Rng| -> (Mat<f64>, Vec<usize>) {
        let n = spec.classes * spec.per_class;
        let mut x = Mat::zeros(n, d);
        let mut labels = Vec::with_capacity(n);
        for (c, mu) in means.iter().enumerate() {
            for k in 0..spec.per_class {
                let i = c * spec.per_class + k;
                for j in 0..d {
                    x[(i, j)] = mu[j] + normal(rng);
                }
                labels.push(c);
            }
        }
        (x, labels)
    };
    let (xs, ls) = draw(&mut rng);
    let (xt, lt) = draw(&mut rng);
    let mut mapped = crate::linalg::mat_mul(xt.as_ref(), map.transpose());
    if spec.noise > 0.0 {
        for j in 0..d {
            for i in 0..mapped.nrows() {
                mapped[(i, j)] += spec.noise * normal(&mut rng);
            }
        }
    }
    let source = LabeledDataset::with_num_classes(FeatureMatrix::new(xs)?, ls, spec.classes)?;
    let target = LabeledDataset::with_num_classes(FeatureMatrix::new(mapped)?, lt, spec.classes)?;
    Ok(SyntheticShift { source, target, map, condition })
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Product of Givens rotations over every coordinate plane, each by an
/// angle uniform in `[-max_angle, max_angle]`.
fn givens_rotation(d: usize, max_angle: f64, rng: &mut ChaCha8Rng) -> Mat<f64> {
    let mut r = Mat::<f64>::identity(d, d);
    if max_angle == 0.0 {
        return r;
    }
    for p in 0..d {
        for q in (p + 1)..d {
            let theta = max_angle * rng.gen_range(-1.0..=1.0);
            let (s, c) = theta.sin_cos();
            for i in 0..d {
                let (a, b) = (r[(i, p)], r[(i, q)]);
                r[(i, p)] = c * a - s * b;
                r[(i, q)] = s * a + c * b;
            }
        }
    }
    r
}

fn condition_number(m: &Mat<f64>) -> Result<f64> {
    let gram =
        crate::linalg::SymmetricMatrix::from_mat_unchecked(crate::linalg::mat_mul_tn(m.as_ref(), m.as_ref()));
    let e = crate::linalg::sym_eig(&gram)?;
    let max = e.max_value();
    let min = e.values().last().copied().unwrap_or(0.0);
    if !(min > 1e-14 * max) {
        return Err(CoralError::Config("target map is singular".into()));
    }
    Ok((max / min).sqrt())
}

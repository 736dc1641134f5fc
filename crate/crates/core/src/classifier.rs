//! One-vs-rest L2-regularized linear SVM with hinge loss.
//!
//! Each binary problem is solved in the dual by coordinate descent with
//! shrinking. The bias is learned through an appended constant feature of
//! value 1, so it is regularized together with the weights.

use faer::{Mat, MatRef};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coral::FeatureMatrix;
use crate::error::{CoralError, Result};

/// Default C grid for source-domain model selection.
pub const DEFAULT_C_GRID: [f64; 5] = [0.001, 0.01, 0.1, 1.0, 10.0];
pub const DEFAULT_FOLDS: usize = 5;

/// Features with integer class ids in `[0, num_classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: FeatureMatrix,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    /// `num_classes` is one past the largest label, so gaps in the label set
    /// produce empty classes.
    pub fn new(features: FeatureMatrix, labels: Vec<usize>) -> Result<Self> {
        let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
        Self::with_num_classes(features, labels, num_classes)
    }

    pub fn with_num_classes(features: FeatureMatrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.len() != features.nrows() {
            return Err(CoralError::Shape(format!(
                "{} labels for {} feature rows",
                labels.len(),
                features.nrows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(CoralError::InvalidInput(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self { features, labels, num_classes })
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Row indices of each class, in dataset order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Rows at `indices`; the class count is preserved.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Same labels, new features.
    pub fn with_features(&self, features: FeatureMatrix) -> Result<LabeledDataset> {
        Self::with_num_classes(features, self.labels.clone(), self.num_classes)
    }

    fn check_trainable(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(CoralError::DegenerateLabels(format!(
                "need at least 2 classes, found {}",
                self.num_classes
            )));
        }
        if let Some(c) = self.class_counts().iter().position(|&n| n == 0) {
            return Err(CoralError::DegenerateLabels(format!("class {c} has no examples")));
        }
        Ok(())
    }
}

/// Per-class linear scores `w · x + b`.
///
/// Binary models store one direction: class 1 scores `w · x + b` and class 0
/// scores its negation.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    weights: Mat<f64>,
    biases: Vec<f64>,
    c: f64,
    num_classes: usize,
}

impl LinearModel {
    pub fn new(weights: Mat<f64>, biases: Vec<f64>, c: f64, num_classes: usize) -> Result<Self> {
        let rows = weights.nrows();
        let expected = match num_classes {
            0 | 1 => {
                return Err(CoralError::InvalidInput(format!(
                    "model needs at least 2 classes, got {num_classes}"
                )))
            }
            2 if rows == 1 => 1,
            n => n,
        };
        if rows != expected || biases.len() != rows || weights.ncols() == 0 {
            return Err(CoralError::Shape(format!(
                "{num_classes}-class model needs {expected} weight rows and biases, got {rows} rows and {} biases",
                biases.len()
            )));
        }
        let finite = biases.iter().all(|b| b.is_finite())
            && crate::linalg::first_non_finite(weights.as_ref()).is_none()
            && c.is_finite();
        if !finite {
            return Err(CoralError::InvalidInput("model has non-finite parameters".into()));
        }
        Ok(Self { weights, biases, c, num_classes })
    }

    /// One weight row per stored decision direction.
    pub fn weights(&self) -> MatRef<'_, f64> {
        self.weights.as_ref()
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn is_binary(&self) -> bool {
        self.weights.nrows() == 1
    }

    /// Same biases and C, different weights.
    pub fn with_weights(&self, weights: Mat<f64>) -> Result<LinearModel> {
        LinearModel::new(weights, self.biases.clone(), self.c, self.num_classes)
    }

    /// `n × num_classes` matrix of class scores.
    pub fn scores(&self, features: &FeatureMatrix) -> Result<Mat<f64>> {
        if features.ncols() != self.dim() {
            return Err(CoralError::Shape(format!(
                "model has dimension {}, features have {} columns",
                self.dim(),
                features.ncols()
            )));
        }
        let raw = crate::linalg::mat_mul(features.as_mat(), self.weights.transpose());
        let n = features.nrows();
        Ok(if self.is_binary() {
            Mat::from_fn(n, 2, |i, k| {
                let s = raw[(i, 0)] + self.biases[0];
                if k == 1 {
                    s
                } else {
                    -s
                }
            })
        } else {
            Mat::from_fn(n, self.num_classes, |i, k| raw[(i, k)] + self.biases[k])
        })
    }
}

/// Argmax of class scores, ties going to the smallest class index.
pub fn predict(model: &LinearModel, features: &FeatureMatrix) -> Result<Vec<usize>> {
    let scores = model.scores(features)?;
    Ok((0..scores.nrows())
        .map(|i| {
            let mut best = 0;
            for k in 1..scores.ncols() {
                if scores[(i, k)] > scores[(i, best)] {
                    best = k;
                }
            }
            best
        })
        .collect())
}

/// Fraction of positions where `predicted` and `truth` agree.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(CoralError::Shape(format!(
            "cannot score {} predictions against {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Dual coordinate descent settings. The visiting order of each epoch is a
/// seeded shuffle, so training is a pure function of data, C and options.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmOptions {
    pub max_epochs: usize,
    /// Stop once the projected-gradient spread falls to this value.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self { max_epochs: 2000, tol: 1e-3, seed: 0x5eed }
    }
}

pub fn train_linear_svm(data: &LabeledDataset, c: f64) -> Result<LinearModel> {
    train_linear_svm_with(data, c, &SvmOptions::default())
}

/// Binary problems get a single direction; more classes use one-vs-rest.
pub fn train_linear_svm_with(data: &LabeledDataset, c: f64, opts: &SvmOptions) -> Result<LinearModel> {
    check_training_input(data, c)?;
    if data.num_classes() == 2 {
        let y: Vec<f64> = data.labels().iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let (w, b) = solve_binary(data.features(), &y, c, opts);
        let d = w.len();
        return LinearModel::new(Mat::from_fn(1, d, |_, j| w[j]), vec![b], c, 2);
    }
    train_one_vs_rest(data, c, opts)
}

/// One direction per class, even for two classes.
pub fn train_one_vs_rest(data: &LabeledDataset, c: f64, opts: &SvmOptions) -> Result<LinearModel> {
    check_training_input(data, c)?;
    let l = data.num_classes();
    let d = data.features().ncols();
    let mut weights = Mat::zeros(l, d);
    let mut biases = Vec::with_capacity(l);
    for class in 0..l {
        let y: Vec<f64> = data.labels().iter().map(|&lab| if lab == class { 1.0 } else { -1.0 }).collect();
        let (w, b) = solve_binary(data.features(), &y, c, opts);
        for j in 0..d {
            weights[(class, j)] = w[j];
        }
        biases.push(b);
    }
    LinearModel::new(weights, biases, c, l)
}

/// Picks the grid value with the best mean stratified k-fold accuracy,
/// preferring the smaller C on ties. Folds are dealt round-robin from a
/// per-class shuffle seeded with `seed`.
pub fn cross_validate_c(data: &LabeledDataset, grid: &[f64], folds: usize, seed: u64) -> Result<f64> {
    if grid.is_empty() {
        return Err(CoralError::InvalidInput("C grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|&&c| !(c > 0.0 && c.is_finite())) {
        return Err(CoralError::InvalidInput(format!("C must be positive, got {bad}")));
    }
    if folds < 2 {
        return Err(CoralError::InvalidInput(format!("need at least 2 folds, got {folds}")));
    }
    data.check_trainable()?;
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let assignment = stratified_folds(data, folds, seed)?;

    let mut splits = Vec::with_capacity(folds);
    for k in 0..folds {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| assignment[i] != k);
        splits.push((data.subset(&train), data.subset(&test)));
    }

    let opts = SvmOptions::default();
    let mut best: Option<(f64, f64)> = None;
    for &c in grid {
        let mut total = 0.0;
        for (train, test) in &splits {
            let model = train_linear_svm_with(train, c, &opts)?;
            total += accuracy(&predict(&model, test.features())?, test.labels())?;
        }
        let mean = total / folds as f64;
        best = match best {
            Some((bc, bm)) if bm > mean || (bm == mean && bc <= c) => Some((bc, bm)),
            _ => Some((c, mean)),
        };
    }
    Ok(best.map(|(c, _)| c).unwrap_or(grid[0]))
}

fn stratified_folds(data: &LabeledDataset, folds: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; data.len()];
    for (class, mut idx) in data.class_indices().into_iter().enumerate() {
        if idx.len() < folds {
            return Err(CoralError::Stratification { class, count: idx.len(), folds });
        }
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            assignment[i] = pos % folds;
        }
    }
    Ok(assignment)
}

fn check_training_input(data: &LabeledDataset, c: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(CoralError::InvalidInput(format!("C must be positive, got {c}")));
    }
    if data.len() < 2 {
        return Err(CoralError::InsufficientSamples { needed: 2, got: data.len() });
    }
    data.check_trainable()
}

/// Dual coordinate descent for
/// `min ½‖w‖² + ½b² + C Σ max(0, 1 − yᵢ(w·xᵢ + b))`.
pub(crate) fn solve_binary(x: &FeatureMatrix, y: &[f64], c: f64, opts: &SvmOptions) -> (Vec<f64>, f64) {
    let n = x.nrows();
    let d = x.ncols();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i)).collect();
    let qd: Vec<f64> = rows.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0).collect();

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut alpha = vec![0.0; n];
    let mut index: Vec<usize> = (0..n).collect();
    let mut active = n;
    let mut pg_max_old = f64::INFINITY;
    let mut pg_min_old = f64::NEG_INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    for _ in 0..opts.max_epochs {
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        for i in 0..active {
            let j = rng.gen_range(i..active);
            index.swap(i, j);
        }
        let mut s = 0;
        while s < active {
            let i = index[s];
            let xi = &rows[i];
            let g = y[i] * (dot(&w, xi) + b) - 1.0;
            let mut pg = 0.0;
            if alpha[i] == 0.0 {
                if g > pg_max_old {
                    active -= 1;
                    index.swap(s, active);
                    continue;
                }
                if g < 0.0 {
                    pg = g;
                }
            } else if alpha[i] == c {
                if g < pg_min_old {
                    active -= 1;
                    index.swap(s, active);
                    continue;
                }
                if g > 0.0 {
                    pg = g;
                }
            } else {
                pg = g;
            }
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * y[i];
                for (wj, xj) in w.iter_mut().zip(xi) {
                    *wj += step * xj;
                }
                b += step;
            }
            s += 1;
        }

        if pg_max - pg_min <= opts.tol {
            if active == n {
                break;
            }
            // re-check everything before declaring convergence
            active = n;
            pg_max_old = f64::INFINITY;
            pg_min_old = f64::NEG_INFINITY;
            continue;
        }
        pg_max_old = if pg_max <= 0.0 { f64::INFINITY } else { pg_max };
        pg_min_old = if pg_min >= 0.0 { f64::NEG_INFINITY } else { pg_min };
    }
    (w, b)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

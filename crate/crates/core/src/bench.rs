//! Experiment harness: per-shift trials, method comparison and reports.
//!
//! A trial subsamples (or takes all of) the source domain, normalizes each
//! domain with its own statistics, applies the method's transform, selects C
//! by stratified cross-validation on the transformed source, trains, and
//! scores every target example. Trial `t` is seeded with `seed + t`, so
//! trials can run in any order or in parallel.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, LabeledDataset, DEFAULT_C_GRID, DEFAULT_FOLDS};
use crate::coral::{self, FeatureMatrix, DEFAULT_LAMBDA};
use crate::data::{self, ShiftSpec};
use crate::error::{CoralError, Result};

/// A domain-adaptation method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MethodId {
    /// No adaptation.
    Na,
    /// Whitening and re-coloring with `lambda * I` added to both covariances.
    CoralReg(f64),
    /// Closed-form alignment on unregularized covariances.
    CoralAnalytical,
    /// Each domain whitened with its own regularized covariance.
    WhitenBoth,
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodId::Na => f.write_str("NA"),
            MethodId::CoralReg(l) => write!(f, "CORAL_REG({l})"),
            MethodId::CoralAnalytical => f.write_str("CORAL_ANALYTICAL"),
            MethodId::WhitenBoth => f.write_str("WHITEN_BOTH"),
        }
    }
}

impl FromStr for MethodId {
    type Err = CoralError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let upper = s.to_ascii_uppercase();
        match upper.as_str() {
            "NA" => return Ok(MethodId::Na),
            "CORAL" => return Ok(MethodId::CoralReg(DEFAULT_LAMBDA)),
            "CORAL_ANALYTICAL" => return Ok(MethodId::CoralAnalytical),
            "WHITEN_BOTH" => return Ok(MethodId::WhitenBoth),
            _ => {}
        }
        if let Some(inner) = upper.strip_prefix("CORAL_REG(").and_then(|r| r.strip_suffix(')')) {
            if let Ok(l) = inner.trim().parse::<f64>() {
                if l >= 0.0 && l.is_finite() {
                    return Ok(MethodId::CoralReg(l));
                }
            }
        }
        Err(CoralError::Config(format!("unknown method '{s}'")))
    }
}

impl TryFrom<String> for MethodId {
    type Error = CoralError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MethodId> for String {
    fn from(m: MethodId) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolMode {
    /// A fixed number of labeled source examples per class in every trial.
    Subsampled,
    /// All source examples, every trial.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSpec {
    pub mode: ProtocolMode,
    /// Source examples per class in subsampled mode.
    pub per_class: usize,
    pub trials: usize,
    pub seed: u64,
    /// Regularization used by `WHITEN_BOTH`.
    pub lambda: f64,
    pub c_grid: Vec<f64>,
    pub folds: usize,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        Self {
            mode: ProtocolMode::Subsampled,
            per_class: 20,
            trials: 20,
            seed: 0,
            lambda: DEFAULT_LAMBDA,
            c_grid: DEFAULT_C_GRID.to_vec(),
            folds: DEFAULT_FOLDS,
        }
    }
}

impl ProtocolSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(CoralError::Config("protocol.trials must be >= 1".into()));
        }
        if self.mode == ProtocolMode::Subsampled && self.per_class < 1 {
            return Err(CoralError::Config("protocol.per_class must be >= 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(CoralError::Config("protocol.lambda must be >= 0".into()));
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(CoralError::Config("protocol.c_grid must hold positive values".into()));
        }
        if self.folds < 2 {
            return Err(CoralError::Config("protocol.folds must be >= 2".into()));
        }
        Ok(())
    }
}

/// Accuracies of one method on one domain shift.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftResult {
    pub shift: String,
    pub method: MethodId,
    /// Per-trial target accuracy in `[0, 1]`.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over trials; 0 for a single trial.
    pub std: f64,
    pub trial_seconds: Vec<f64>,
}

impl ShiftResult {
    fn from_trials(shift: String, method: MethodId, trials: Vec<(f64, f64)>) -> Self {
        let (accuracies, trial_seconds): (Vec<f64>, Vec<f64>) = trials.into_iter().unzip();
        let (mean, std) = mean_std(&accuracies);
        Self { shift, method, accuracies, mean, std, trial_seconds }
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs `protocol.trials` trials of `method` on one shift. Trials fan out on
/// the current rayon pool.
pub fn run_shift(
    name: &str,
    source: &LabeledDataset,
    target: &LabeledDataset,
    method: MethodId,
    protocol: &ProtocolSpec,
) -> Result<ShiftResult> {
    protocol.validate()?;
    if source.features().ncols() != target.features().ncols() {
        return Err(CoralError::Shape(format!(
            "shift {name}: source has {} features, target has {}",
            source.features().ncols(),
            target.features().ncols()
        )));
    }
    let (target_norm, _) = coral::normalize_features(target.features())
        .map_err(|e| e.context(format!("shift {name}, target normalization")))?;

    let trials = (0..protocol.trials)
        .into_par_iter()
        .map(|t| {
            let started = Instant::now();
            run_trial(source, target, &target_norm, method, protocol, protocol.seed + t as u64)
                .map(|acc| (acc, started.elapsed().as_secs_f64()))
                .map_err(|e| e.context(format!("shift {name}, method {method}, trial {t}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ShiftResult::from_trials(name.to_string(), method, trials))
}

fn run_trial(
    source: &LabeledDataset,
    target: &LabeledDataset,
    target_norm: &FeatureMatrix,
    method: MethodId,
    protocol: &ProtocolSpec,
    seed: u64,
) -> Result<f64> {
    let train = match protocol.mode {
        ProtocolMode::Subsampled => data::subsample(source, protocol.per_class, seed)?,
        ProtocolMode::Full => source.clone(),
    };
    let (source_norm, _) = coral::normalize_features(train.features())?;

    let (train_x, test_x) = match method {
        MethodId::Na => (source_norm, target_norm.clone()),
        MethodId::CoralReg(lambda) => {
            (coral::coral_regularized(&source_norm, target_norm, lambda)?.0, target_norm.clone())
        }
        MethodId::CoralAnalytical => {
            let t = coral::coral_analytical(&source_norm, target_norm)?;
            (coral::apply_transform(&source_norm, &t)?, target_norm.clone())
        }
        MethodId::WhitenBoth => {
            let ws = coral::whitening_transform(&source_norm, protocol.lambda)?;
            let wt = coral::whitening_transform(target_norm, protocol.lambda)?;
            (coral::apply_transform(&source_norm, &ws)?, coral::apply_transform(target_norm, &wt)?)
        }
    };

    let train = train.with_features(train_x)?;
    let c = classifier::cross_validate_c(&train, &protocol.c_grid, protocol.folds, seed)?;
    let model = classifier::train_linear_svm(&train, c)?;
    classifier::accuracy(&classifier::predict(&model, &test_x)?, target.labels())
}

/// Seeds of the standard synthetic shift suite.
pub const SUITE_SEEDS: std::ops::Range<u64> = 0..10;

/// The rotated-colored synthetic shift used for method comparisons: D = 10,
/// four classes, 500 examples per class and domain.
pub fn suite_shift(seed: u64) -> ShiftSpec {
    ShiftSpec {
        dim: 10,
        classes: 4,
        per_class: 500,
        separation: 1.5,
        target_map: data::TargetMap::RotationColoring { angle: 0.05, stretch: 10.0 },
        noise: 0.1,
        seed,
    }
}

/// Full-training protocol with a single trial, as used on the suite.
pub fn suite_protocol() -> ProtocolSpec {
    ProtocolSpec { mode: ProtocolMode::Full, trials: 1, ..ProtocolSpec::default() }
}

/// Accuracy of a classifier trained on the labeled target itself and scored
/// on the same examples: the ceiling any adaptation method can approach.
pub fn target_oracle(target: &LabeledDataset, protocol: &ProtocolSpec) -> Result<f64> {
    protocol.validate()?;
    let (x, _) = coral::normalize_features(target.features())?;
    let train = target.with_features(x.clone())?;
    let c = classifier::cross_validate_c(&train, &protocol.c_grid, protocol.folds, protocol.seed)?;
    let model = classifier::train_linear_svm(&train, c)?;
    classifier::accuracy(&classifier::predict(&model, &x)?, target.labels())
}

/// Mean over shifts for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodAverage {
    pub method: MethodId,
    /// Arithmetic mean of the per-shift means.
    pub mean: f64,
    /// Sample standard deviation of the per-shift means.
    pub std: f64,
    pub shifts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    /// Shift-major, then in configured method order.
    pub results: Vec<ShiftResult>,
    pub averages: Vec<MethodAverage>,
}

impl ExperimentReport {
    pub fn new(results: Vec<ShiftResult>) -> Self {
        let mut methods: Vec<MethodId> = Vec::new();
        for r in &results {
            if !methods.contains(&r.method) {
                methods.push(r.method);
            }
        }
        let averages = methods
            .into_iter()
            .map(|m| {
                let means: Vec<f64> = results.iter().filter(|r| r.method == m).map(|r| r.mean).collect();
                let (mean, std) = mean_std(&means);
                MethodAverage { method: m, mean, std, shifts: means.len() }
            })
            .collect();
        Self { results, averages }
    }

    pub fn shifts(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.results {
            if !out.contains(&r.shift.as_str()) {
                out.push(&r.shift);
            }
        }
        out
    }

    pub fn get(&self, shift: &str, method: MethodId) -> Option<&ShiftResult> {
        self.results.iter().find(|r| r.shift == shift && r.method == method)
    }

    pub fn average(&self, method: MethodId) -> Option<&MethodAverage> {
        self.averages.iter().find(|a| a.method == method)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    #[serde(alias = "md")]
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = CoralError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(CoralError::Config(format!("unknown report format '{other}'"))),
        }
    }
}

/// Where a domain's labeled data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub name: String,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Synthetic pair; `side` picks which half this domain is.
    pub synthetic: Option<ShiftSpec>,
    pub side: Option<Side>,
    /// Overrides `protocol.per_class` when this domain is the source.
    pub per_class: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: ReportFormat,
}

fn default_format() -> ReportFormat {
    ReportFormat::Csv
}

/// A full experiment: domains, methods, protocol and optional output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub methods: Vec<MethodId>,
    #[serde(default)]
    pub protocol: ProtocolSpec,
    /// Explicit `[source, target]` pairs; all ordered pairs when absent.
    #[serde(default)]
    pub shifts: Option<Vec<[String; 2]>>,
    #[serde(default)]
    pub output: Option<OutputConfig>,
    #[serde(rename = "domain", default)]
    pub domains: Vec<DomainConfig>,
}

impl ExperimentConfig {
    /// Parses TOML; relative file paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CoralError::Config(e.to_string()))?;
        for d in &mut cfg.domains {
            for p in [&mut d.features, &mut d.labels].into_iter().flatten() {
                if p.is_relative() {
                    *p = base_dir.join(&*p);
                }
            }
        }
        if let Some(out) = &mut cfg.output {
            if out.path.is_relative() {
                out.path = base_dir.join(&out.path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CoralError::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(CoralError::Config("methods: at least one method is required".into()));
        }
        self.protocol.validate()?;
        for (i, d) in self.domains.iter().enumerate() {
            if self.domains[..i].iter().any(|o| o.name == d.name) {
                return Err(CoralError::Config(format!("domain '{}' is defined twice", d.name)));
            }
            match (&d.features, &d.labels, &d.synthetic) {
                (Some(_), Some(_), None) => {}
                (None, None, Some(spec)) => {
                    if d.side.is_none() {
                        return Err(CoralError::Config(format!(
                            "domain '{}': synthetic domains need side = \"source\" or \"target\"",
                            d.name
                        )));
                    }
                    spec.validate().map_err(|e| e.context(format!("domain '{}'", d.name)))?;
                }
                _ => {
                    return Err(CoralError::Config(format!(
                        "domain '{}': give either features and labels, or synthetic",
                        d.name
                    )))
                }
            }
        }
        let pairs = self.shift_pairs();
        if pairs.is_empty() {
            return Err(CoralError::Config("no shifts: need at least two domains".into()));
        }
        let mut missing: Vec<&str> = pairs
            .iter()
            .flat_map(|(s, t)| [s.as_str(), t.as_str()])
            .filter(|n| !self.domains.iter().any(|d| d.name == *n))
            .collect();
        missing.dedup();
        if !missing.is_empty() {
            return Err(CoralError::Config(format!("unresolved domain(s): {}", missing.join(", "))));
        }
        Ok(())
    }

    /// `(source, target)` names in run order.
    pub fn shift_pairs(&self) -> Vec<(String, String)> {
        match &self.shifts {
            Some(pairs) => pairs.iter().map(|[s, t]| (s.clone(), t.clone())).collect(),
            None => {
                let names: Vec<&String> = self.domains.iter().map(|d| &d.name).collect();
                let mut out = Vec::new();
                for s in &names {
                    for t in &names {
                        if s != t {
                            out.push(((*s).clone(), (*t).clone()));
                        }
                    }
                }
                out
            }
        }
    }
}

fn load_domain(d: &DomainConfig) -> Result<LabeledDataset> {
    match (&d.features, &d.labels, &d.synthetic, d.side) {
        (Some(f), Some(l), _, _) => data::load_labeled(f, l),
        (_, _, Some(spec), Some(side)) => {
            let pair = data::generate_shift(spec)?;
            Ok(match side {
                Side::Source => pair.source,
                Side::Target => pair.target,
            })
        }
        _ => Err(CoralError::Config(format!("domain '{}' has no data source", d.name))),
    }
}

/// Every configured shift under every method. `jobs` sets the number of
/// worker threads for trials; results do not depend on it.
pub fn run_matrix(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentReport> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CoralError::Config(format!("cannot start {jobs} workers: {e}")))?;

    let mut loaded: Vec<(String, LabeledDataset)> = Vec::new();
    for d in &config.domains {
        let ds = load_domain(d).map_err(|e| e.context(format!("domain '{}'", d.name)))?;
        loaded.push((d.name.clone(), ds));
    }
    let find = |n: &str| loaded.iter().find(|(name, _)| name == n).map(|(_, d)| d);

    pool.install(|| {
        let mut results = Vec::new();
        for (s, t) in config.shift_pairs() {
            let (Some(source), Some(target)) = (find(&s), find(&t)) else {
                return Err(CoralError::Config(format!("unresolved shift {s}->{t}")));
            };
            let mut protocol = config.protocol.clone();
            if let Some(pc) = config.domains.iter().find(|d| d.name == s).and_then(|d| d.per_class) {
                protocol.per_class = pc;
            }
            let name = format!("{s}->{t}");
            for &m in &config.methods {
                results.push(run_shift(&name, source, target, m, &protocol)?);
            }
        }
        Ok(ExperimentReport::new(results))
    })
}

/// CSV with header `shift,method,mean,std,trials`; values are fractions in
/// full precision. Multi-shift reports end with one `AVG` row per method.
pub fn render_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("shift,method,mean,std,trials\n");
    for r in &report.results {
        out.push_str(&format!("{},{},{},{},{}\n", r.shift, r.method, r.mean, r.std, r.accuracies.len()));
    }
    if report.shifts().len() > 1 {
        for a in &report.averages {
            out.push_str(&format!("AVG,{},{},{},{}\n", a.method, a.mean, a.std, a.shifts));
        }
    }
    out
}

/// One table per method with shifts as columns, accuracies in percent to
/// one decimal.
pub fn render_markdown(report: &ExperimentReport) -> String {
    let shifts = report.shifts();
    let multi = shifts.len() > 1;
    let mut out = String::new();
    for avg in &report.averages {
        out.push_str(&format!("### {}\n\n|", avg.method));
        for s in &shifts {
            out.push_str(&format!(" {} |", s.replace("->", "→")));
        }
        if multi {
            out.push_str(" AVG |");
        }
        out.push_str("\n|");
        for _ in 0..shifts.len() + multi as usize {
            out.push_str("---|");
        }
        out.push_str("\n|");
        for s in &shifts {
            match report.get(s, avg.method) {
                Some(r) => out.push_str(&format!(" {:.1} ± {:.1} |", 100.0 * r.mean, 100.0 * r.std)),
                None => out.push_str(" – |"),
            }
        }
        if multi {
            out.push_str(&format!(" {:.1} |", 100.0 * avg.mean));
        }
        out.push_str("\n\n");
    }
    out
}

pub fn render_report(report: &ExperimentReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Markdown => render_markdown(report),
    }
}

pub fn emit_report(report: &ExperimentReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    if report.results.is_empty() {
        return Err(CoralError::InvalidInput("report is empty".into()));
    }
    let path = path.as_ref();
    std::fs::write(path, render_report(report, format)).map_err(|e| CoralError::io(path, e))
}

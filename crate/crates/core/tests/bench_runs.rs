use std::path::Path;

use coral::bench::{
    render_csv, render_markdown, run_matrix, run_shift, suite_protocol, suite_shift, ExperimentConfig,
    ExperimentReport, MethodId, ProtocolMode, ProtocolSpec, SUITE_SEEDS,
};
use coral::data::{generate_shift, ShiftSpec, TargetMap};

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

const TWO_DOMAINS: &str = r#"
methods = ["NA", "CORAL_REG(1)", "WHITEN_BOTH"]

[protocol]
mode = "subsampled"
per_class = 10
trials = 6
seed = 3

[[domain]]
name = "left"
side = "source"
[domain.synthetic]
dim = 6
classes = 3
per_class = 40
separation = 2.0
noise = 0.1
seed = 8
[domain.synthetic.target_map]
kind = "rotation_coloring"
angle = 0.2
stretch = 4.0

[[domain]]
name = "right"
side = "target"
[domain.synthetic]
dim = 6
classes = 3
per_class = 40
separation = 2.0
noise = 0.1
seed = 8
[domain.synthetic.target_map]
kind = "rotation_coloring"
angle = 0.2
stretch = 4.0
"#;

fn two_domains() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(TWO_DOMAINS, Path::new(".")).unwrap()
}

#[test]
fn no_shift_gives_coral_no_advantage() {
    let spec = ShiftSpec {
        dim: 8,
        classes: 3,
        per_class: 200,
        separation: 1.5,
        target_map: TargetMap::Identity,
        noise: 0.0,
        seed: 5,
    };
    let pair = generate_shift(&spec).unwrap();
    let protocol = ProtocolSpec { mode: ProtocolMode::Full, trials: 1, ..ProtocolSpec::default() };
    let na = run_shift("s->t", &pair.source, &pair.target, MethodId::Na, &protocol).unwrap();
    let co = run_shift("s->t", &pair.source, &pair.target, MethodId::CoralReg(1.0), &protocol).unwrap();
    assert!((na.mean - co.mean).abs() <= 0.02, "NA {} CORAL {}", na.mean, co.mean);
}

#[test]
fn trials_are_independent_of_worker_count() {
    let pair = generate_shift(&suite_shift(1)).unwrap();
    let protocol = ProtocolSpec { per_class: 15, trials: 8, seed: 40, ..ProtocolSpec::default() };
    let run = || run_shift("a->b", &pair.source, &pair.target, MethodId::CoralReg(1.0), &protocol).unwrap();
    let (one, four) = (in_pool(1, run), in_pool(4, run));
    assert_eq!(one.accuracies, four.accuracies);
    assert_eq!(one.accuracies.len(), 8);
    assert!(one.accuracies.windows(2).any(|w| w[0] != w[1]));
}

#[test]
fn matrix_reports_are_identical_across_jobs() {
    let cfg = two_domains();
    let a = render_csv(&run_matrix(&cfg, 1).unwrap());
    let b = render_csv(&run_matrix(&cfg, 4).unwrap());
    let c = render_csv(&run_matrix(&cfg, 1).unwrap());
    assert_eq!(a, b);
    assert_eq!(a, c);
}

fn parse_csv(text: &str) -> Vec<(String, String, f64, f64, usize)> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("shift,method,mean,std,trials"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 5, "{l}");
            (f[0].into(), f[1].into(), f[2].parse().unwrap(), f[3].parse().unwrap(), f[4].parse().unwrap())
        })
        .collect()
}

#[test]
fn csv_round_trips_report_values() {
    let report = run_matrix(&two_domains(), 2).unwrap();
    let rows = parse_csv(&render_csv(&report));
    assert_eq!(rows.len(), report.results.len() + report.averages.len());
    for (row, r) in rows.iter().zip(&report.results) {
        assert_eq!((row.0.as_str(), row.1.parse::<MethodId>().unwrap()), (r.shift.as_str(), r.method));
        assert_eq!((row.2, row.3, row.4), (r.mean, r.std, r.accuracies.len()));
    }
    for (row, a) in rows[report.results.len()..].iter().zip(&report.averages) {
        assert_eq!(row.0, "AVG");
        assert_eq!((row.2, row.3, row.4), (a.mean, a.std, a.shifts));
    }
    let md = render_markdown(&report);
    assert_eq!(md.matches("### ").count(), 3);
    assert!(md.contains("left→right") && md.contains("AVG"));
}

#[test]
fn single_shift_report_has_no_average_rows() {
    let mut cfg = two_domains();
    cfg.shifts = Some(vec![["left".into(), "right".into()]]);
    cfg.methods = vec![MethodId::Na];
    let report: ExperimentReport = run_matrix(&cfg, 1).unwrap();
    assert_eq!(render_csv(&report).lines().count(), 2);
    assert!(!render_markdown(&report).contains("AVG"));
}

#[test]
fn suite_ablation_ordering() {
    let protocol = suite_protocol();
    let methods = [MethodId::Na, MethodId::CoralReg(1.0), MethodId::WhitenBoth, MethodId::CoralAnalytical];
    let mut sums = [0.0; 4];
    for seed in SUITE_SEEDS {
        let pair = generate_shift(&suite_shift(seed)).unwrap();
        for (k, &m) in methods.iter().enumerate() {
            sums[k] += run_shift("s->t", &pair.source, &pair.target, m, &protocol).unwrap().mean;
        }
    }
    let n = SUITE_SEEDS.count() as f64;
    let [na, coral, whiten, analytical] = sums.map(|s| 100.0 * s / n);
    eprintln!("NA {na:.2} CORAL {coral:.2} WHITEN {whiten:.2} ANALYTICAL {analytical:.2}");
    assert!(coral >= whiten, "CORAL {coral} < WHITEN_BOTH {whiten}");
    assert!(coral >= na, "CORAL {coral} < NA {na}");
    assert!((analytical - coral).abs() <= 3.0, "analytical {analytical} vs CORAL {coral}");
}

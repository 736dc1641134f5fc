//! Sweeps synthetic-shift parameters and prints NA, CORAL at four lambdas,
//! whitening and oracle accuracies averaged over seeds 0..10 under the
//! full-training protocol, followed by the CORAL(1) gain over NA and the
//! spread across lambdas (both in points).
//!
//! `cargo run --release -p coral-core --example calibrate -- 0.1 3,5,10 1,1.5,2 0.1`

use coral::bench::{run_shift, target_oracle, MethodId, ProtocolMode, ProtocolSpec};
use coral::data::{generate_shift, ShiftSpec, TargetMap};

fn list(arg: Option<String>, default: &[f64]) -> Vec<f64> {
    arg.map(|s| s.split(',').map(|v| v.parse().expect("number")).collect())
        .unwrap_or_else(|| default.to_vec())
}

fn main() -> coral::Result<()> {
    let mut args = std::env::args().skip(1);
    let angles = list(args.next(), &[0.05, 0.1, 0.2]);
    let stretches = list(args.next(), &[3.0, 5.0, 10.0]);
    let separations = list(args.next(), &[1.0, 1.5, 2.0]);
    let noises = list(args.next(), &[0.1]);
    let protocol = ProtocolSpec { mode: ProtocolMode::Full, trials: 1, ..ProtocolSpec::default() };
    let methods = [
        MethodId::Na,
        MethodId::CoralReg(1.0),
        MethodId::CoralReg(0.1),
        MethodId::CoralReg(0.01),
        MethodId::CoralReg(0.001),
        MethodId::WhitenBoth,
    ];

    println!("angle stretch sep noise | NA CORAL(1) (.1) (.01) (.001) WHITEN | ORACLE | gain spread");
    for &angle in &angles {
        for &stretch in &stretches {
            for &separation in &separations {
                for &noise in &noises {
                    let mut sums = [0.0; 7];
                    for seed in 0..10 {
                        let spec = ShiftSpec {
                            dim: 10,
                            classes: 4,
                            per_class: 500,
                            separation,
                            target_map: TargetMap::RotationColoring { angle, stretch },
                            noise,
                            seed,
                        };
                        let pair = generate_shift(&spec)?;
                        let mut accs = [0.0; 6];
                        for (k, &m) in methods.iter().enumerate() {
                            accs[k] = run_shift("s", &pair.source, &pair.target, m, &protocol)?.mean;
                            sums[k] += accs[k];
                        }
                        sums[6] += target_oracle(&pair.target, &protocol)?;
                    }
                    let m: Vec<String> = sums.iter().map(|s| format!("{:.1}", 10.0 * s)).collect();
                    let coral = &sums[1..5];
                    let spread = coral.iter().cloned().fold(f64::MIN, f64::max)
                        - coral.iter().cloned().fold(f64::MAX, f64::min);
                    println!(
                        "{angle} {stretch} {separation} {noise} | {} | {} | {:.1} {:.1}",
                        m[..6].join(" "),
                        m[6],
                        10.0 * (sums[1] - sums[0]),
                        10.0 * spread
                    );
                }
            }
        }
    }
    Ok(())
}

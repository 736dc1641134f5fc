mod common;

use common::*;
use coral::data::{
    decode_matrix, decode_model, encode_matrix, encode_model, generate_shift, load_features, load_labeled,
    load_model, parse_labels, save_features, save_labeled, save_model, subsample, MatrixFormat, ShiftSpec,
    TargetMap,
};
use coral::{accuracy, predict, train_linear_svm, CoralError, ErrorKind, LabeledDataset};

fn shift_spec(dim: usize, per_class: usize, map: TargetMap, noise: f64, seed: u64) -> ShiftSpec {
    ShiftSpec { dim, classes: 3, per_class, separation: 2.0, target_map: map, noise, seed }
}

#[test]
fn binary_round_trip_is_bit_identical() {
    let x = gaussian(50, 10, &mut rng(1));
    let f = features(&x);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    save_features(&path, &f, MatrixFormat::Binary).unwrap();
    let back = load_features(&path, MatrixFormat::Binary).unwrap();
    for i in 0..50 {
        for j in 0..10 {
            assert_eq!(back.get(i, j).to_bits(), x[i][j].to_bits());
        }
    }
    assert_eq!(encode_matrix(&back, MatrixFormat::Binary), std::fs::read(&path).unwrap());
}

#[test]
fn text_round_trip_preserves_values() {
    let x = gaussian(7, 3, &mut rng(2));
    let bytes = encode_matrix(&features(&x), MatrixFormat::Text);
    let back = decode_matrix(&bytes, MatrixFormat::Text, "mem").unwrap();
    for i in 0..7 {
        for j in 0..3 {
            assert_eq!(back.get(i, j), x[i][j]);
        }
    }
    let small = decode_matrix(b"2 2\n1 2\n3 4\n", MatrixFormat::Text, "mem").unwrap();
    assert_eq!((small.nrows(), small.ncols(), small.get(1, 0)), (2, 2, 3.0));
}

#[test]
fn malformed_matrices_are_rejected_with_location() {
    let text = |s: &str| decode_matrix(s.as_bytes(), MatrixFormat::Text, "m.txt").unwrap_err();
    assert!(matches!(text(""), CoralError::Parse { .. }));
    assert!(text("2 3\n1 2 3\n4 5\n").to_string().contains("row 2"));
    let nan = text("2 2\n1 2\n3 NaN\n").to_string();
    assert!(nan.contains("row 2") && nan.contains("column 2"), "{nan}");
    assert!(text("2 2\n1 x\n3 4\n").to_string().contains("column 2"));
    assert!(text("3 2\n1 2\n").to_string().contains("3 rows"));
    assert!(text("two 2\n").to_string().contains("header"));
    assert_eq!(text("").kind(), ErrorKind::Input);

    let mut bin = encode_matrix(&features(&vec![vec![1.0, 2.0]]), MatrixFormat::Binary);
    bin.pop();
    assert!(decode_matrix(&bin, MatrixFormat::Binary, "m.bin").is_err());
}

#[test]
fn labeled_files_and_label_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let (fp, lp) = (dir.path().join("x.txt"), dir.path().join("y.txt"));
    std::fs::write(&fp, "3 1\n0.5\n1.5\n2.5\n").unwrap();
    std::fs::write(&lp, "0\n1\n0\n").unwrap();
    assert_eq!(load_labeled(&fp, &lp).unwrap().num_classes(), 2);

    std::fs::write(&lp, "0\n1\n").unwrap();
    assert!(load_labeled(&fp, &lp).is_err());
    assert!(parse_labels("0\n-1\n", "y").is_err());
    assert!(parse_labels("0\n1.5\n", "y").is_err());

    let gap = LabeledDataset::new(features(&vec![vec![0.0], vec![1.0]]), vec![0, 2]).unwrap();
    assert_eq!(gap.num_classes(), 3);
    assert_eq!(gap.class_counts(), vec![1, 0, 1]);
    assert_eq!(accuracy(&[0, 2], gap.labels()).unwrap(), 1.0);
    let err = train_linear_svm(&gap, 1.0).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Protocol);
}

#[test]
fn labeled_save_and_load_agree() {
    let shift = generate_shift(&shift_spec(4, 5, TargetMap::Identity, 0.0, 3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (fp, lp) = (dir.path().join("x.bin"), dir.path().join("y.txt"));
    save_labeled(&fp, &lp, &shift.source, MatrixFormat::Binary).unwrap();
    let back = load_labeled(&fp, &lp).unwrap();
    assert_eq!(back.labels(), shift.source.labels());
    assert_eq!(back.features(), shift.source.features());
}

fn counted(per_class: usize) -> LabeledDataset {
    let labels: Vec<usize> = (0..4).flat_map(|c| std::iter::repeat(c).take(per_class)).collect();
    let rows: Dense = (0..labels.len()).map(|i| vec![i as f64]).collect();
    LabeledDataset::new(features(&rows), labels).unwrap()
}

#[test]
fn subsample_histogram_and_determinism() {
    let data = counted(100);
    let a = subsample(&data, 20, 7).unwrap();
    assert_eq!(a.len(), 80);
    assert_eq!(a.class_counts(), vec![20; 4]);
    let b = subsample(&data, 20, 7).unwrap();
    assert_eq!(a.features(), b.features());
    assert_ne!(subsample(&data, 20, 8).unwrap().features(), a.features());

    let ids: Vec<f64> = (0..80).map(|i| a.features().get(i, 0)).collect();
    let mut unique = ids.clone();
    unique.sort_by(|x, y| x.partial_cmp(y).unwrap());
    unique.dedup();
    assert_eq!(unique.len(), 80);
    for (i, &id) in ids.iter().enumerate() {
        assert_eq!(a.labels()[i], id as usize / 100);
    }

    let full = subsample(&data, 100, 1).unwrap();
    let mut all: Vec<usize> = (0..400).map(|i| full.features().get(i, 0) as usize).collect();
    all.sort();
    assert_eq!(all, (0..400).collect::<Vec<_>>());

    let err = subsample(&counted(5), 6, 0).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Protocol);
    assert!(err.to_string().contains("class 0"));
}

#[test]
fn scaled_target_has_four_times_the_covariance() {
    let shift = generate_shift(&ShiftSpec {
        dim: 5,
        classes: 2,
        per_class: 1000,
        separation: 0.0,
        target_map: TargetMap::Scaled { factor: 2.0 },
        noise: 0.0,
        seed: 11,
    })
    .unwrap();
    let cs = covariance(&from_mat(shift.source.features().as_mat()));
    let ct = covariance(&from_mat(shift.target.features().as_mat()));
    let scale = (0..5).map(|i| cs[i][i]).fold(0.0, f64::max);
    for i in 0..5 {
        for j in 0..5 {
            assert!((ct[i][j] - 4.0 * cs[i][j]).abs() <= 0.1 * 4.0 * scale, "{i},{j}");
        }
    }
}

#[test]
fn rotated_colored_target_matches_mapped_covariance() {
    let spec =
        shift_spec(10, 5000 / 3 + 1, TargetMap::RotationColoring { angle: 0.3, stretch: 5.0 }, 0.0, 12);
    let shift = generate_shift(&spec).unwrap();
    let m = from_mat(shift.map.as_ref());
    let cs = covariance(&from_mat(shift.source.features().as_mat()));
    let ct = covariance(&from_mat(shift.target.features().as_mat()));
    let predicted = matmul(&matmul(&m, &cs), &transpose(&m));
    assert!(frob(&sub(&ct, &predicted)) <= 0.1 * frob(&ct));
    assert!(shift.condition >= 1.0);
}

#[test]
fn generator_is_deterministic_and_validates() {
    let spec = shift_spec(6, 20, TargetMap::RotationColoring { angle: 0.2, stretch: 3.0 }, 0.1, 4);
    let (a, b) = (generate_shift(&spec).unwrap(), generate_shift(&spec).unwrap());
    assert_eq!(a.source.features(), b.source.features());
    assert_eq!(a.target.features(), b.target.features());
    let other = generate_shift(&ShiftSpec { seed: 5, ..spec.clone() }).unwrap();
    assert_ne!(other.source.features(), a.source.features());

    assert!(generate_shift(&ShiftSpec { classes: 1, ..spec.clone() }).is_err());
    assert!(
        generate_shift(&ShiftSpec { target_map: TargetMap::Scaled { factor: 0.0 }, ..spec.clone() }).is_err()
    );
    let bad = TargetMap::Matrix { rows: vec![vec![1.0; 6]; 5] };
    assert!(generate_shift(&ShiftSpec { target_map: bad, ..spec }).is_err());
}

#[test]
fn no_shift_transfers_without_loss() {
    let shift = generate_shift(&shift_spec(5, 300, TargetMap::Identity, 0.0, 21)).unwrap();
    let model = train_linear_svm(&shift.source, 1.0).unwrap();
    let src = accuracy(&predict(&model, shift.source.features()).unwrap(), shift.source.labels()).unwrap();
    let tgt = accuracy(&predict(&model, shift.target.features()).unwrap(), shift.target.labels()).unwrap();
    assert!((src - tgt).abs() <= 0.03, "source {src} target {tgt}");
}

#[test]
fn model_round_trip_keeps_predictions() {
    for classes in [2, 4] {
        let model = random_model(classes, 6, classes as u64);
        let back = decode_model(&encode_model(&model), "mem").unwrap();
        assert_eq!(back, model);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.cmdl");
        save_model(&path, &model).unwrap();
        let loaded = load_model(&path).unwrap();
        let u = features(&gaussian(30, 6, &mut rng(9)));
        assert_eq!(predict(&loaded, &u).unwrap(), predict(&model, &u).unwrap());
    }
    assert!(decode_model(b"CMDL\x01\0\0\0", "mem").is_err());
}

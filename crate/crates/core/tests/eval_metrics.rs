use proptest::prelude::*;
use qbilstm::eval::{evaluate_dataset, levenshtein, levenshtein_str, load_dataset, load_image, TextLineImage};
use qbilstm::toy::{toy_model, write_toy_bundle};
use qbilstm::{Error, NetworkModel, PrecisionConfig};

/// Exponential recursive edit distance.
fn brute(a: &[u8], b: &[u8]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = brute(ra, rb) + usize::from(x != y);
            sub.min(brute(ra, b) + 1).min(brute(a, rb) + 1)
        }
    }
}

fn short() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(b'a'..=b'c', 0..=6)
}

proptest! {
    #[test]
    fn matches_brute_force(a in short(), b in short()) {
        prop_assert_eq!(levenshtein(&a, &b), brute(&a, &b));
    }

    #[test]
    fn is_a_metric(a in short(), b in short(), c in short()) {
        prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
        prop_assert_eq!(levenshtein(&a, &b) == 0, a == b);
        prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
    }

    #[test]
    fn pgm_round_trip(width in 1usize..12, height in 1usize..6, seed in any::<u64>()) {
        let pixels: Vec<u8> = (0..width * height).map(|i| (seed.wrapping_mul(i as u64 + 7) >> 13) as u8).collect();
        let img = TextLineImage::from_pixels(width, height, &pixels).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        img.write_pgm(&path).unwrap();
        prop_assert_eq!(load_image(&path, height).unwrap(), img);
    }
}

#[test]
fn kitten_sitting() {
    assert_eq!(brute(b"kitten", b"sitting"), 3);
    assert_eq!(levenshtein_str("kitten", "sitting"), 3);
}

#[test]
fn height_mismatch_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.pgm");
    TextLineImage::from_pixels(2, 3, &[0; 6]).unwrap().write_pgm(&path).unwrap();
    assert!(matches!(load_image(&path, 4), Err(Error::Parse { field: "height", .. })));
    let zero = load_image(&path, 3).unwrap();
    assert!(zero.columns.iter().flatten().all(|&p| p == 0.0));
}

#[test]
fn toy_dataset_evaluates_perfectly_and_order_free() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = write_toy_bundle(dir.path()).unwrap();
    let raw = qbilstm::RawModel::load(&bundle.model).unwrap();
    assert_eq!(raw, toy_model_roundtrip());
    let prec: PrecisionConfig = "8/8/8".parse().unwrap();
    let model = NetworkModel::build(&raw, &prec).unwrap();
    let mut dataset = load_dataset(&bundle.images, &bundle.truth).unwrap();
    assert_eq!(dataset.len(), 5);
    let report = evaluate_dataset(&model, &dataset, &prec).unwrap();
    assert_eq!((report.cer, report.accuracy), (0.0, 1.0));

    let low: PrecisionConfig = "4/2/2".parse().unwrap();
    let low_model = NetworkModel::build(&raw, &low).unwrap();
    let a = evaluate_dataset(&low_model, &dataset, &low).unwrap();
    dataset.reverse();
    let b = evaluate_dataset(&low_model, &dataset, &low).unwrap();
    assert_eq!(a.cer, b.cer);
    assert!(a.cer > 0.0);
    let first = &b.images[0];
    assert!(first.image.ends_with("line4.pgm"));
}

/// The toy model after an f32 save/load cycle.
fn toy_model_roundtrip() -> qbilstm::RawModel {
    let mut m = toy_model();
    for dir in [&mut m.forward, &mut m.backward] {
        for g in [&mut dir.cell_input, &mut dir.input_gate, &mut dir.forget_gate, &mut dir.output_gate] {
            g.bias.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }
    m.batchnorm.eps = m.batchnorm.eps as f32 as f64;
    m
}

#[test]
fn unknown_symbols_and_empty_lists_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = write_toy_bundle(dir.path()).unwrap();
    let model = NetworkModel::build(&toy_model(), &"8/8/8".parse().unwrap()).unwrap();
    let bad = dir.path().join("bad.tsv");
    std::fs::write(&bad, "line0.pgm\tabz\n").unwrap();
    let dataset = load_dataset(&bundle.images, &bad).unwrap();
    let err = evaluate_dataset(&model, &dataset, &"8/8/8".parse().unwrap()).unwrap_err();
    assert!(matches!(&err, Error::Dataset(msg) if msg.contains("'z'")), "{err}");

    let empty = dir.path().join("empty.tsv");
    std::fs::write(&empty, "").unwrap();
    assert!(matches!(load_dataset(&bundle.images, &empty), Err(Error::Dataset(_))));
    assert!(matches!(evaluate_dataset(&model, &[], &"8/8/8".parse().unwrap()), Err(Error::Dataset(_))));
}

use pruneweight_core::dataset::{generate, map_samples, DatasetSpec, Generator, LabeledDataset};
use pruneweight_core::encoder::Encoder;
use pruneweight_core::metrics::{evaluate, frechet_distance, frechet_of_samples, mmd_sq_gaussian, Bandwidth};
use pruneweight_core::numerics::fit_gaussian;
use proptest::prelude::*;

fn mixture(seed: u64) -> LabeledDataset {
    generate(&DatasetSpec {
        generator: Generator::GaussianMixture,
        classes: 3,
        per_class: 30,
        dim: 3,
        seed,
    })
    .unwrap()
}

#[test]
fn mean_shift_gives_squared_shift() {
    let ds = mixture(1);
    let v = [0.5, -1.25, 2.0];
    let shifted = map_samples(&ds, |_, x| x.iter().zip(&v).map(|(a, b)| a + b).collect()).unwrap();
    let r = evaluate(&ds, &shifted, &Encoder::identity(3), 0).unwrap();
    let expected: f64 = v.iter().map(|x| x * x).sum();
    assert!((r.frechet - expected).abs() < 1e-9, "{} vs {expected}", r.frechet);
}

#[test]
fn per_class_value_depends_only_on_that_class() {
    let ds = mixture(2);
    let perturbed = map_samples(&ds, |i, x| {
        if ds.label(i) == 0 {
            x.to_vec()
        } else {
            x.iter().map(|a| 3.0 * a + 1.0).collect()
        }
    })
    .unwrap();
    let base = evaluate(&ds, &ds, &Encoder::identity(3), 0).unwrap();
    let r = evaluate(&ds, &perturbed, &Encoder::identity(3), 0).unwrap();
    assert_eq!(r.per_class_frechet[0], base.per_class_frechet[0]);
    assert!(r.per_class_frechet[1].unwrap() > 1.0);
}

#[test]
fn generated_order_does_not_matter() {
    let real = mixture(3);
    let gen = mixture(4);
    let n = gen.len();
    let reversed = LabeledDataset::new(
        "reversed",
        3,
        3,
        (0..n).rev().flat_map(|i| gen.sample(i).to_vec()).collect(),
        (0..n).rev().map(|i| gen.label(i)).collect(),
    )
    .unwrap();
    let a = evaluate(&real, &gen, &Encoder::identity(3), 0).unwrap();
    let b = evaluate(&real, &reversed, &Encoder::identity(3), 0).unwrap();
    assert!((a.frechet - b.frechet).abs() < 1e-9);
    assert!((a.mmd_sq - b.mmd_sq).abs() < 1e-12);
    for (x, y) in a.per_class_frechet.iter().zip(&b.per_class_frechet) {
        assert!((x.unwrap() - y.unwrap()).abs() < 1e-9);
    }
}

#[test]
fn duplicated_singletons_closed_form() {
    let x: Vec<&[f64]> = vec![&[0.0, 0.0], &[0.0, 0.0]];
    let y: Vec<&[f64]> = vec![&[1.0, 2.0], &[1.0, 2.0]];
    let (v, _) = mmd_sq_gaussian(&x, &y, Bandwidth::Fixed(1.5)).unwrap();
    let expected = 2.0 - 2.0 * (-5.0f64 / (2.0 * 1.5 * 1.5)).exp();
    assert!((v - expected).abs() < 1e-15);
}

#[test]
fn wide_kernel_flattens_mmd() {
    let a = mixture(5);
    let b = mixture(6);
    let (x, y) = (a.sample_refs(), b.sample_refs());
    let (narrow, _) = mmd_sq_gaussian(&x, &y, Bandwidth::Fixed(1.0)).unwrap();
    let (wide, _) = mmd_sq_gaussian(&x, &y, Bandwidth::Fixed(1e6)).unwrap();
    assert!(wide < 1e-9 && wide < narrow);
}

#[test]
fn one_dimensional_unit_shift() {
    let a: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64 * 0.37).sin()]).collect();
    let b: Vec<Vec<f64>> = a.iter().map(|x| vec![x[0] + 1.0]).collect();
    let ra: Vec<&[f64]> = a.iter().map(Vec::as_slice).collect();
    let rb: Vec<&[f64]> = b.iter().map(Vec::as_slice).collect();
    let fa = fit_gaussian(&ra, 0.0).unwrap();
    let fb = fit_gaussian(&rb, 0.0).unwrap();
    assert!((frechet_distance(&fa, &fb).unwrap() - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn frechet_is_symmetric_and_non_negative(
        a in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 6..30),
        b in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 6..30),
    ) {
        let ra: Vec<&[f64]> = a.iter().map(Vec::as_slice).collect();
        let rb: Vec<&[f64]> = b.iter().map(Vec::as_slice).collect();
        let ab = frechet_of_samples(&ra, &rb).unwrap();
        let ba = frechet_of_samples(&rb, &ra).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-9 * (1.0 + ab));
    }

    #[test]
    fn mmd_is_never_negative(
        a in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 2..25),
        b in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 2..25),
    ) {
        let ra: Vec<&[f64]> = a.iter().map(Vec::as_slice).collect();
        let rb: Vec<&[f64]> = b.iter().map(Vec::as_slice).collect();
        let (v, _) = mmd_sq_gaussian(&ra, &rb, Bandwidth::Median).unwrap();
        prop_assert!(v >= -1e-12);
    }
}

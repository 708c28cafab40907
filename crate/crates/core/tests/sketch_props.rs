mod common;

use common::max_abs_diff;
use proptest::prelude::*;
use sketch_lstd::features::FeatureVector;
use sketch_lstd::linalg::DenseMatrix;
use sketch_lstd::sketch::{
    estimate_jl_distortion, row_rank_statistics, sample_sketch, SketchFamily, SketchRepr,
    SketchSpec,
};

fn family() -> impl Strategy<Value = SketchFamily> {
    prop::sample::select(SketchFamily::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn apply_agrees_with_materialized_matrix(
        f in family(),
        d in 1usize..40,
        kfrac in 0.0f64..1.0,
        seed in 0u64..1000,
        x in prop::collection::vec(-2.0f64..2.0, 40),
    ) {
        let k = 1 + ((d - 1) as f64 * kfrac) as usize;
        let s = sample_sketch(SketchSpec::new(f, k, d, seed)).unwrap();
        let m = s.materialize();
        prop_assert_eq!(m.shape(), (k, d));
        let x = &x[..d];
        let fast = s.apply_dense(x).unwrap();
        let slow = m.matvec(x).unwrap();
        prop_assert!(max_abs_diff(&fast, &slow) < 1e-10);
        // Sparse input takes the same route.
        let sparse = FeatureVector::sparse(d, x.iter().copied().enumerate().filter(|(i, _)| i % 3 == 0).collect());
        let dense_equiv = sparse.to_dense();
        prop_assert!(max_abs_diff(&s.apply(&sparse).unwrap(), &m.matvec(&dense_equiv).unwrap()) < 1e-10);
    }

    #[test]
    fn sampling_is_a_pure_function_of_the_spec(f in family(), seed in 0u64..1000) {
        let spec = SketchSpec::new(f, 5, 33, seed);
        prop_assert_eq!(sample_sketch(spec).unwrap(), sample_sketch(spec).unwrap());
    }

    #[test]
    fn zero_maps_to_zero(f in family(), seed in 0u64..1000) {
        let s = sample_sketch(SketchSpec::new(f, 3, 10, seed)).unwrap();
        prop_assert_eq!(s.apply(&FeatureVector::zeros(10)).unwrap(), vec![0.0; 3]);
    }
}

#[test]
fn hadamard_rows_are_scaled_orthogonal() {
    // With no subsampling loss (k = d = 2^m), S Sᵀ = (d/k)·I = I.
    let s = sample_sketch(SketchSpec::new(SketchFamily::Hadamard, 16, 16, 3)).unwrap();
    let m = s.materialize();
    let sst = m.matmul(&m.transpose()).unwrap();
    assert!(max_abs_diff(sst.data(), DenseMatrix::identity(16).data()) < 1e-12);
    match &s.repr {
        SketchRepr::Hadamard { rows, .. } => {
            let mut r = rows.clone();
            r.sort_unstable();
            r.dedup();
            assert_eq!(r.len(), 16);
        }
        _ => unreachable!(),
    }
}

#[test]
fn combined_sketch_uses_an_intermediate_count_sketch() {
    let s = sample_sketch(SketchSpec::new(SketchFamily::Combined, 3, 100, 1)).unwrap();
    match &s.repr {
        SketchRepr::Combined { count, gaussian } => {
            assert_eq!(count.k, 12);
            assert_eq!(gaussian.shape(), (3, 12));
        }
        _ => unreachable!(),
    }
}

#[test]
fn second_moment_is_close_to_identity() {
    // Monte Carlo E[SᵀS] with a loose tolerance; the acceptance suite runs
    // the full-size check.
    let (k, d, n) = (5, 8, 4000);
    for f in SketchFamily::ALL {
        let mut acc = DenseMatrix::zeros(d, d);
        for i in 0..n {
            let m = sample_sketch(SketchSpec::new(f, k, d, i))
                .unwrap()
                .materialize();
            let sts = m.transpose().matmul(&m).unwrap();
            acc = acc.add(&sts).unwrap();
        }
        let mean = acc.scale(1.0 / n as f64);
        let err = max_abs_diff(mean.data(), DenseMatrix::identity(d).data());
        assert!(err < 0.1, "{f}: max deviation {err}");
    }
}

#[test]
fn jl_fraction_grows_with_epsilon() {
    let spec = SketchSpec::new(SketchFamily::Gaussian, 20, 64, 5);
    let narrow = estimate_jl_distortion(spec, 20, 20, 0.1).unwrap();
    let wide = estimate_jl_distortion(spec, 20, 20, 0.8).unwrap();
    assert!(narrow <= wide);
    assert!(wide > 0.9);
}

#[test]
fn sketched_rank_deficient_matrix_keeps_row_rank() {
    // A = B C with B 20×8, C 8×20 has rank 8 ≥ k = 4.
    let b = common::random_matrix(20, 8, 1);
    let c = common::random_matrix(8, 20, 2);
    let a = b.matmul(&c).unwrap();
    let frac = row_rank_statistics(
        SketchSpec::new(SketchFamily::Gaussian, 4, 20, 3),
        &a,
        50,
        1e-8,
    )
    .unwrap();
    assert_eq!(frac, 1.0);
}

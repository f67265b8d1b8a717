mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use sicerp_core::glasso::GlassoOptions;
use sicerp_core::representation::{
    coordinate_features, cov_rp, default_lambda_grid, inverse_cov_rp, sample_covariance,
    sice_hierarchy_auto, velocity_features, FrameFeatureSequence, GridSpec, SkeletonSequence,
};

fn covariance_oracle(frames: &[Vec<f64>]) -> DMatrix<f64> {
    let m = frames.len() as f64;
    let d = frames[0].len();
    let mean: Vec<f64> = (0..d).map(|k| frames.iter().map(|f| f[k]).sum::<f64>() / m).collect();
    DMatrix::from_fn(d, d, |i, j| {
        frames.iter().map(|f| (f[i] - mean[i]) * (f[j] - mean[j])).sum::<f64>() / m
    })
}

#[test]
fn covariance_matches_direct_formula() {
    let mut rng = common::rng(1);
    for m in [2, 5, 40] {
        let frames = common::gaussian_frames(&mut rng, m, 6);
        let f = FrameFeatureSequence::new(frames.clone(), None).unwrap();
        let s = sample_covariance(&f).unwrap();
        assert!((s.matrix().matrix() - covariance_oracle(&frames)).amax() < 1e-13);
    }
}

#[test]
fn covariance_converges_to_population() {
    let mut rng = common::rng(2);
    let mix = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.5, 1.0, 0.0, -0.3, 0.2, 1.0]);
    let population = &mix * mix.transpose();
    let m = 200_000;
    let frames: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            let z = nalgebra::DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
            (&mix * z).iter().copied().collect()
        })
        .collect();
    let s = sample_covariance(&FrameFeatureSequence::new(frames, None).unwrap()).unwrap();
    assert!((s.matrix().matrix() - population).amax() < 0.02);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn covariance_ignores_translation_and_frame_order(
        frames in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 3..12),
        shift in prop::collection::vec(-100.0f64..100.0, 4),
        rotate in 0usize..12,
    ) {
        let base = sample_covariance(&FrameFeatureSequence::new(frames.clone(), None).unwrap()).unwrap();
        let moved: Vec<Vec<f64>> = frames
            .iter()
            .map(|f| f.iter().zip(&shift).map(|(a, b)| a + b).collect())
            .collect();
        let mut permuted = frames.clone();
        let k = rotate % permuted.len();
        permuted.rotate_left(k);
        permuted.reverse();
        let a = sample_covariance(&FrameFeatureSequence::new(moved, None).unwrap()).unwrap();
        let b = sample_covariance(&FrameFeatureSequence::new(permuted, None).unwrap()).unwrap();
        let scale = base.matrix().matrix().amax().max(1.0);
        prop_assert!((a.matrix().matrix() - base.matrix().matrix()).amax() <= 1e-9 * scale);
        prop_assert!((b.matrix().matrix() - base.matrix().matrix()).amax() <= 1e-12 * scale);
    }
}

#[test]
fn few_frames_still_give_spd_levels() {
    let opts = GlassoOptions::default();
    for seed in 0..10 {
        let mut rng = common::rng(10 + seed);
        let f = FrameFeatureSequence::new(common::gaussian_frames(&mut rng, 5, 20), None).unwrap();
        let h = sice_hierarchy_auto("x", &f, GridSpec::default(), &opts).unwrap();
        assert_eq!(h.depth(), 10);
        assert!(h.levels().iter().all(|l| l.min_eigenvalue() > 0.0));
        assert!(h.lambdas().windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn grid_spans_the_requested_ratio() {
    let mut rng = common::rng(4);
    let sigma = common::random_covariance(&mut rng, 6, 30);
    let grid = default_lambda_grid(&sigma, GridSpec { levels: 5, ratio: 0.1 }).unwrap();
    assert_eq!(grid.len(), 5);
    let top = sigma.max_abs_off_diagonal();
    assert!((grid[4] - top).abs() < 1e-12 * top);
    assert!((grid[0] / grid[4] - 0.1).abs() < 1e-12);
    // geometric spacing
    for w in grid.windows(3) {
        assert!((w[1] / w[0] - w[2] / w[1]).abs() < 1e-12);
    }
}

#[test]
fn skeleton_featurization_shapes() {
    let mut rng = common::rng(5);
    let frames: Vec<Vec<[f64; 3]>> = (0..9)
        .map(|_| (0..20).map(|_| [rng.random(), rng.random(), rng.random()]).collect())
        .collect();
    let seq = SkeletonSequence::new(frames.clone()).unwrap();
    let coords = coordinate_features(&seq);
    assert_eq!((coords.dim(), coords.len()), (60, 9));
    assert_eq!(coords.frames()[2][3..6], frames[2][1]);
    let vel = velocity_features(&seq).unwrap();
    assert_eq!((vel.dim(), vel.len()), (120, 7));
    // backward difference of joint 0, x at interior frame 1
    assert_eq!(vel.frames()[0][0], frames[1][0][0] - frames[0][0][0]);
}

#[test]
fn cov_and_inverse_cov_are_mutual_inverses() {
    let mut rng = common::rng(6);
    let f = FrameFeatureSequence::new(common::gaussian_frames(&mut rng, 8, 5), None).unwrap();
    let c = cov_rp(&f, 1e-3).unwrap();
    let ic = inverse_cov_rp(&f, 1e-3).unwrap();
    assert!((c.matrix() * ic.matrix() - DMatrix::identity(5, 5)).amax() < 1e-9);
}

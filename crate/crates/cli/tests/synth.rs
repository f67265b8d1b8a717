use nalgebra::DMatrix;

use sicerp::synth::{synth_generate, Structure, SyntheticSpec};
use sicerp_core::representation::sample_covariance;

#[test]
fn same_seed_same_bits() {
    let spec = SyntheticSpec::benchmark(7);
    let a = synth_generate(&spec).unwrap();
    let b = synth_generate(&spec).unwrap();
    assert_eq!(a.dataset, b.dataset);
    assert_eq!(a.precisions, b.precisions);
    let c = synth_generate(&SyntheticSpec::benchmark(8)).unwrap();
    assert_ne!(a.dataset, c.dataset);
    assert_eq!(a.dataset.len(), 180);
    assert!(a.dataset.samples.iter().all(|s| (12..=18).contains(&s.features.len())));
}

#[test]
fn chain_truth_is_tridiagonal() {
    let spec = SyntheticSpec {
        classes: vec![Structure::Chain],
        ..SyntheticSpec::benchmark(1)
    };
    let p = &synth_generate(&spec).unwrap().precisions[0];
    for i in 0..20 {
        for j in 0..20 {
            assert_eq!(p[(i, j)] != 0.0, i.abs_diff(j) <= 1);
        }
    }
}

#[test]
fn long_sample_recovers_zero_pattern() {
    for structure in [Structure::Chain, Structure::Grid, Structure::RandomSparse { density: 0.1 }] {
        let spec = SyntheticSpec {
            d: 20,
            m_min: 1000,
            m_max: 1000,
            train_per_class: 1,
            test_per_class: 0,
            classes: vec![structure.clone()],
            noise: 0.0,
            seed: 3,
        };
        let data = synth_generate(&spec).unwrap();
        let sigma = sample_covariance(&data.dataset.samples[0].features).unwrap();
        let reg = sigma.matrix().matrix() + DMatrix::identity(20, 20) * 1e-6;
        let est = reg.try_inverse().unwrap();
        let truth = &data.precisions[0];
        let mut agree = 0;
        let mut total = 0;
        for i in 0..20 {
            for j in 0..20 {
                if i != j {
                    total += 1;
                    if (est[(i, j)].abs() > 0.05) == (truth[(i, j)] != 0.0) {
                        agree += 1;
                    }
                }
            }
        }
        let rate = agree as f64 / total as f64;
        assert!(rate >= 0.9, "{structure:?}: {rate}");
    }
}

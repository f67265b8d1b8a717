use sicerp::dataset::Dataset;
use sicerp::experiment::{run_experiment, split_indices, ExperimentConfig, IntegratorChoice, SplitSpec};
use sicerp::formats::{read_json, write_json, ModelFile, WeightsRecord};
use sicerp::represent::{represent, RepresentationConfig, RepresentationKind};
use sicerp::synth::{synth_generate, Structure, SyntheticSpec};
use sicerp::CliError;
use sicerp_core::svm::multiclass::predict;

fn small(seed: u64, train: usize, test: usize) -> Dataset {
    let spec = SyntheticSpec {
        d: 6,
        m_min: 8,
        m_max: 12,
        train_per_class: train,
        test_per_class: test,
        classes: vec![
            Structure::Chain,
            Structure::Grid,
            Structure::RandomSparse { density: 0.4 },
        ],
        noise: 0.0,
        seed,
    };
    synth_generate(&spec).unwrap().dataset
}

fn config(kind: RepresentationKind, levels: usize, integrator: IntegratorChoice) -> ExperimentConfig {
    let mut rep = RepresentationConfig::new(kind);
    rep.levels = levels;
    let mut cfg = ExperimentConfig::new(rep, integrator, 11);
    cfg.c_grid = vec![1.0, 100.0];
    cfg.folds = 3;
    cfg.max_iter = 20;
    cfg
}

#[test]
fn one_level_single_and_beta_agree() {
    let data = small(1, 8, 6);
    let single = run_experiment(&config(RepresentationKind::Sice, 1, IntegratorChoice::Single), &data).unwrap();
    let beta = run_experiment(&config(RepresentationKind::Hierarchy, 1, IntegratorChoice::Beta), &data).unwrap();
    assert_eq!(single.report.accuracy, beta.report.accuracy);
    assert_eq!(single.report.predictions, beta.report.predictions);
    assert_eq!(single.report.selected.level, Some(0));
    assert_eq!(beta.report.weights, WeightsRecord::Vector(vec![1.0]));
}

#[test]
fn weight_schema_follows_integrator() {
    let data = small(2, 6, 3);
    let mkl = run_experiment(&config(RepresentationKind::Hierarchy, 3, IntegratorChoice::Mkl), &data).unwrap();
    match &mkl.report.weights {
        WeightsRecord::Vector(values) => {
            assert_eq!(values.len(), 3);
            assert!((values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        w => panic!("mkl weights {w:?}"),
    }
    let emk = run_experiment(&config(RepresentationKind::Hierarchy, 3, IntegratorChoice::Emk), &data).unwrap();
    assert_eq!(emk.report.weights, WeightsRecord::None);
    let text = serde_json::to_string(&emk.report).unwrap();
    assert!(text.contains("\"weights\":{\"kind\":\"none\"}"), "{text}");
}

#[test]
fn test_labels_do_not_influence_selection() {
    let data = small(3, 8, 6);
    let cfg = config(RepresentationKind::Sice, 4, IntegratorChoice::Single);
    let clean = run_experiment(&cfg, &data).unwrap();
    let (_, test) = split_indices(&data, &cfg.split).unwrap();
    let mut poisoned = data.clone();
    let labels = data.labels();
    for i in test {
        let s = &mut poisoned.samples[i];
        let k = labels.iter().position(|l| *l == s.label).unwrap();
        s.label = labels[(k + 1) % labels.len()].clone();
    }
    let dirty = run_experiment(&cfg, &poisoned).unwrap();
    assert_eq!(clean.report.selected, dirty.report.selected);
    assert_eq!(clean.report.cv, dirty.report.cv);
    assert_eq!(clean.model, dirty.model);
    let predicted = |o: &sicerp::experiment::Outcome| -> Vec<String> {
        o.report.predictions.iter().map(|p| p.predicted.clone()).collect()
    };
    assert_eq!(predicted(&clean), predicted(&dirty));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let data = small(4, 6, 3);
    let cfg = config(RepresentationKind::Hierarchy, 3, IntegratorChoice::Matrix);
    let a = serde_json::to_vec_pretty(&run_experiment(&cfg, &data).unwrap().report).unwrap();
    let b = serde_json::to_vec_pretty(&run_experiment(&cfg, &data).unwrap().report).unwrap();
    assert_eq!(a, b);
}

#[test]
fn saved_model_predicts_exactly_like_the_original() {
    let data = small(5, 6, 34);
    for (kind, integrator) in [
        (RepresentationKind::Sice, IntegratorChoice::Single),
        (RepresentationKind::Hierarchy, IntegratorChoice::Matrix),
    ] {
        let cfg = config(kind, 3, integrator);
        let outcome = run_experiment(&cfg, &data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        write_json(&path, &outcome.model).unwrap();
        let loaded: ModelFile = read_json(&path).unwrap();
        assert_eq!(loaded, outcome.model);
        let original = outcome.model.to_classifier().unwrap();
        let reloaded = loaded.to_classifier().unwrap();
        let (_, test) = split_indices(&data, &cfg.split).unwrap();
        assert!(test.len() >= 100);
        let test_set = Dataset {
            samples: test.iter().take(100).map(|i| data.samples[*i].clone()).collect(),
        };
        for h in represent(&test_set, &cfg.representation).unwrap() {
            assert_eq!(predict(&original, &h).unwrap(), predict(&reloaded, &h).unwrap());
        }
    }
}

#[test]
fn empty_split_is_a_config_error() {
    let data = small(6, 3, 1);
    let mut cfg = config(RepresentationKind::Cov, 1, IntegratorChoice::Single);
    cfg.split = SplitSpec::Explicit {
        train: data.samples.iter().map(|s| s.id.clone()).collect(),
        test: Vec::new(),
    };
    assert!(matches!(run_experiment(&cfg, &data), Err(CliError::Config(_))));
    cfg.split = SplitSpec::Explicit {
        train: vec![data.samples[0].id.clone()],
        test: vec![data.samples[0].id.clone()],
    };
    assert!(matches!(run_experiment(&cfg, &data), Err(CliError::Config(_))));
}

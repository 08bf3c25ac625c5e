use qmgeo::flsim::data::synth_data;
use qmgeo::flsim::{run_on, run_training, Dataset, FlConfig, MlpShape, Task};
use qmgeo::privacy::rdp_vector_paper;
use qmgeo::StreamKey;

fn config(quantizer: &str, rounds: usize, seed: u64) -> FlConfig {
    serde_json::from_str(&format!(
        r#"{{
            "clients": 5, "rounds": {rounds}, "batch_size": 32, "learning_rate": 0.05,
            "quantizer": {quantizer}, "master_seed": {seed},
            "model": {{"kind": "mlp", "input_dim": 20, "hidden_dim": 16, "classes": 3}},
            "dataset": {{"kind": "synthetic", "samples": 1500, "input_dim": 20, "classes": 3, "separation": 3.0}}
        }}"#
    ))
    .unwrap()
}

const QMGEO: &str = r#"{"R": 8, "p": 0.9, "w_max": 0.5, "mode": "dp-safe"}"#;

#[test]
fn global_loss_weights_clients_by_size() {
    let data = synth_data(StreamKey::new(12), 40, 3, 2, 1.5).unwrap();
    let partitions = vec![(0..7).collect::<Vec<_>>(), (7..36).collect()];
    let dataset = Dataset {
        data,
        partitions: partitions.clone(),
        holdout: (36..40).collect(),
    };
    let shape = MlpShape::new(3, 5, 2).unwrap();
    let params = shape.init(StreamKey::new(1));
    let task = Task::Classifier {
        shape,
        dataset: dataset.clone(),
    };
    let f1 = shape.loss(&params, &dataset.data, &partitions[0]).unwrap();
    let f2 = shape.loss(&params, &dataset.data, &partitions[1]).unwrap();
    let want = 7.0 / 36.0 * f1 + 29.0 / 36.0 * f2;
    let got = task.global_loss(&params).unwrap();
    assert!((got - want).abs() < 1e-14, "{got} vs {want}");
    // An unweighted client mean would differ on this split.
    assert!((got - 0.5 * (f1 + f2)).abs() > 1e-6);
}

#[test]
fn aggregate_perturbation_is_bounded() {
    let cfg = config(QMGEO, 20, 3);
    let out = run_training(&cfg).unwrap();
    let d = out.summary.dimension as f64;
    let bound = cfg.clients as f64 * d.sqrt() * 2.0 * 0.5;
    for row in &out.metrics {
        assert!(row.delta_norm <= bound, "round {}", row.round);
        assert_eq!(row.client_delta_norms.len(), cfg.clients);
        for n in &row.client_delta_norms {
            assert!(*n <= d.sqrt() * 2.0 * 0.5);
        }
    }
    assert!(out.metrics[1..].iter().all(|r| r.delta_norm > 0.0));
}

#[test]
fn identical_seeds_identical_runs() {
    let cfg = config(QMGEO, 10, 9);
    let a = run_training(&cfg).unwrap();
    let b = run_training(&cfg).unwrap();
    assert_eq!(a, b);
    let c = run_training(&config(QMGEO, 10, 10)).unwrap();
    assert_ne!(a.metrics, c.metrics);
}

#[test]
fn per_round_epsilon_columns() {
    let cfg = config(QMGEO, 5, 1);
    let out = run_training(&cfg).unwrap();
    let kappa = out.summary.sampling_rate;
    assert!((kappa - 32.0 / 270.0).abs() < 1e-15);
    let want = rdp_vector_paper(8, 0.9, 2.0, out.summary.dimension, kappa).unwrap();
    let first = &out.metrics[0];
    assert_eq!((first.eps_round_rdp, first.eps_cumulative), (0.0, 0.0));
    for row in &out.metrics[1..] {
        assert_eq!(row.eps_round_rdp, want);
        assert!((row.eps_cumulative - want * row.round as f64).abs() < 1e-9 * want * row.round as f64);
        assert!(row.eps_round_pure.is_finite());
    }

    let plain = run_training(&config("\"none\"", 2, 1)).unwrap();
    assert!(plain.metrics[1].eps_round_rdp.is_infinite());
    assert_eq!(plain.metrics[1].delta_norm, 0.0);
}

#[test]
fn kappa_override_is_used() {
    let mut cfg = config(QMGEO, 1, 1);
    cfg.kappa_override = Some(0.005333);
    let out = run_training(&cfg).unwrap();
    assert_eq!(out.summary.sampling_rate, 0.005333);
}

#[test]
fn config_is_strict_and_round_trips() {
    let cfg = config(QMGEO, 3, 4);
    let json = serde_json::to_string(&cfg).unwrap();
    let back: FlConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back, cfg);

    let typo = json.replacen("\"rounds\"", "\"round\"", 1);
    assert!(serde_json::from_str::<FlConfig>(&typo).is_err());
    let bad_quantizer = json.replacen("\"w_max\"", "\"wmax\"", 1);
    assert!(serde_json::from_str::<FlConfig>(&bad_quantizer).is_err());
    let bad_model = json.replacen("\"hidden_dim\"", "\"hidden\"", 1);
    assert!(serde_json::from_str::<FlConfig>(&bad_model).is_err());
}

#[test]
fn validation_errors() {
    let mut cfg = config(QMGEO, 3, 4);
    cfg.alpha = 3.0;
    assert!(run_training(&cfg).is_err());
    let mut cfg = config(QMGEO, 3, 4);
    cfg.batch_size = 10_000;
    assert!(run_training(&cfg).is_err());
    let mut cfg = config("\"none\"", 3, 4);
    cfg.model = qmgeo::flsim::ModelSpec::Mlp {
        input_dim: 7,
        hidden_dim: 4,
        classes: 3,
    };
    assert!(run_training(&cfg).is_err());
    let mut cfg = config("\"none\"", 3, 4);
    cfg.pca_dim = Some(4);
    // The model still expects 20 inputs.
    assert!(run_training(&cfg).is_err());
}

#[test]
fn pca_reduced_run() {
    let mut cfg = config("\"none\"", 30, 4);
    cfg.pca_dim = Some(5);
    cfg.model = qmgeo::flsim::ModelSpec::Mlp {
        input_dim: 5,
        hidden_dim: 8,
        classes: 3,
    };
    let out = run_training(&cfg).unwrap();
    assert_eq!(out.summary.dimension, 5 * 8 + 8 + 8 * 3 + 3);
    assert!(out.summary.final_loss < out.summary.initial_loss);
}

#[test]
fn baseline_and_quantized_accuracy() {
    let base = run_training(&config("\"none\"", 200, 7)).unwrap();
    let acc = base.summary.final_accuracy.unwrap();
    assert!(acc >= 0.85, "baseline {acc}");
    let quant = run_training(&config(QMGEO, 200, 7)).unwrap();
    let qacc = quant.summary.final_accuracy.unwrap();
    assert!(qacc >= acc - 0.05, "quantized {qacc} vs baseline {acc}");
}

#[test]
fn run_on_checks_client_count() {
    let cfg = config("\"none\"", 1, 1);
    let task = Task::from_config(&cfg).unwrap();
    let mut other = cfg.clone();
    other.clients = 4;
    assert!(run_on(&other, &task).is_err());
}

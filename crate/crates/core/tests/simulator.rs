//! Dataset statistics, oracle noise and a full training run.

use elastic_res::predictor::{init_params, read_checkpoint, write_checkpoint, PredictorConfig};
use elastic_res::scale::{Preset, ScaleConfig};
use elastic_res::simulator::{
    evaluate, generate_dataset, oracle_loss, train, DatasetConfig, EvalConfig, OracleConfig,
    SceneObject, TrainConfig,
};

#[test]
fn mean_area_follows_configuration() {
    let cfg = DatasetConfig { n_scenes: 1000, ..DatasetConfig::default() };
    let scenes = generate_dataset(&cfg).unwrap();
    let areas: Vec<f64> = scenes.iter().flat_map(|s| s.normalized_areas()).collect();
    let mean = areas.iter().sum::<f64>() / areas.len() as f64;
    let rel = (mean - cfg.mean_area).abs() / cfg.mean_area;
    assert!(rel < 0.05, "empirical mean {mean} vs configured {}", cfg.mean_area);
}

#[test]
fn oracle_noise_has_log_normal_mean() {
    let oc = OracleConfig { noise_std: 0.3, ..OracleConfig::default() };
    let object = SceneObject { width: 40.0, height: 70.0, difficulty: 1.2 };
    let phi = 0.8;
    let n = 20_000;
    let mc = (0..n).map(|s| oracle_loss(&object, phi, &oc, s)).sum::<f64>() / n as f64;
    let expected = oc.noise_free_loss(&object, phi) * (0.3f64 * 0.3 / 2.0).exp();
    assert!((mc - expected).abs() / expected < 0.02, "{mc} vs {expected}");
}

#[test]
fn trained_predictor_scales_small_objects_up() {
    let scenes = generate_dataset(&DatasetConfig::default()).unwrap();
    let range = ScaleConfig::from_preset(Preset::M);
    let oracle = OracleConfig::default();
    let params = init_params(&PredictorConfig::default()).unwrap();
    let report = train(&scenes, params, &range, &oracle, &TrainConfig::default()).unwrap();
    let m = evaluate(&scenes, &report.params, &range, &oracle, &EvalConfig::default()).unwrap();

    // Buckets ascend in object size; φ may rise at most once between
    // neighbours.
    let phis: Vec<f64> = m.size_buckets.iter().map(|b| b.mean_phi).collect();
    let rises = phis.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(rises <= 1, "bucket means {phis:?}");
    assert!(phis[0] > phis[phis.len() - 1]);

    let again = evaluate(&scenes, &report.params, &range, &oracle, &EvalConfig::default()).unwrap();
    assert_eq!(m, again);

    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &report.checkpoint()).unwrap();
    let restored = read_checkpoint(bytes.as_slice()).unwrap();
    assert_eq!(restored, report.checkpoint());
    let m2 = evaluate(&scenes, &restored.predictor, &restored.range, &oracle, &EvalConfig::default()).unwrap();
    assert_eq!(m, m2);
}

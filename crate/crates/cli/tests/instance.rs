use merchant_po::mdp::PlantParams;
use merchant_po_cli::instance::{read_calibration, write_calibration};
use merchant_po_cli::{make_synthetic_instance, InstanceSpec, MarketSpec, SyntheticOptions};

#[test]
fn long_horizon_defaults_are_the_benchmark_plant() {
    let spec = make_synthetic_instance(&SyntheticOptions {
        stages: 24,
        ..Default::default()
    })
    .unwrap();
    let p: &PlantParams = &spec.plant;
    assert_eq!(p.stages, 24);
    assert_eq!(p.corn_per_gallon, 0.36);
    assert_eq!(p.gas_per_gallon, 0.035);
    assert_eq!(p.mothball_stages, 1);
    assert_eq!(p.reactivation_stages, 3);
    assert_eq!(p.output, 8.33);
    assert_eq!(p.mothball_init_cost, 0.5);
    assert_eq!(p.reactivation_init_cost, 2.5);
    assert_eq!(p.produce_cost, 2.25);
    assert_eq!(p.suspend_cost, 0.5208);
    assert_eq!(p.mothball_cost, 0.02917);
    assert_eq!(p.salvage, 0.0);
}

#[test]
fn zero_level_gives_zero_loadings() {
    let spec = make_synthetic_instance(&SyntheticOptions {
        level: 0.0,
        ..Default::default()
    })
    .unwrap();
    assert!(spec.loadings().unwrap().is_zero());
}

#[test]
fn same_seed_gives_identical_text() {
    let opts = SyntheticOptions::default();
    let a = make_synthetic_instance(&opts).unwrap().to_toml().unwrap();
    let b = make_synthetic_instance(&opts).unwrap().to_toml().unwrap();
    assert_eq!(a, b);
    let other = make_synthetic_instance(&SyntheticOptions { seed: 8, ..opts }).unwrap();
    assert_ne!(a, other.to_toml().unwrap());
}

#[test]
fn toml_round_trip() {
    let spec = make_synthetic_instance(&SyntheticOptions::default()).unwrap();
    let text = spec.to_toml().unwrap();
    assert!(text.starts_with('#'), "units header missing");
    let back = InstanceSpec::from_toml(&text).unwrap();
    assert_eq!(back, spec);
}

#[test]
fn calibration_file_is_resolved_next_to_the_instance() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = make_synthetic_instance(&SyntheticOptions {
        stages: 4,
        ..Default::default()
    })
    .unwrap();
    let loadings = spec.loadings().unwrap();
    write_calibration(&dir.path().join("cal.toml"), &loadings).unwrap();
    assert_eq!(read_calibration(&dir.path().join("cal.toml")).unwrap(), loadings);
    spec.market = MarketSpec::File("cal.toml".into());
    let path = dir.path().join("inst.toml");
    spec.save(&path).unwrap();
    let back = InstanceSpec::load(&path).unwrap();
    assert_eq!(back.loadings().unwrap(), loadings);
}

#[test]
fn invalid_instances_are_rejected() {
    let good = make_synthetic_instance(&SyntheticOptions::default()).unwrap();
    let mut same_seeds = good.clone();
    same_seeds.eval_seed = same_seeds.train_seed;
    assert!(same_seeds.validate().is_err());
    let mut one_path = good.clone();
    one_path.eval_paths = 1;
    assert!(one_path.validate().is_err());
    let mut short_curve = good.clone();
    short_curve.initial.corn.pop();
    assert!(short_curve.validate().is_err());
    let text = good.to_toml().unwrap().replace("train_paths", "training_paths");
    assert!(InstanceSpec::from_toml(&text).is_err());
    assert!(make_synthetic_instance(&SyntheticOptions {
        stages: 1,
        ..Default::default()
    })
    .is_err());
}

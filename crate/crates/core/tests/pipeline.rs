use fosae::dataset::TransitionDataset;
use fosae::fosae::{closed_form_parameter_count, load_checkpoint, FosaeConfig, FosaeModel};
use fosae::pipeline::{
    encode_dataset, encode_observations, eval_arity_grid, train, GridOrder, GridSpec, TrainError, TrainOptions,
};

fn small_config(epochs: usize) -> FosaeConfig {
    FosaeConfig {
        num_units: 3,
        num_predicates: 4,
        attention_hidden: 16,
        pn_hidden: 8,
        decoder_hidden: 32,
        batch_size: 50,
        seed: 4,
        ..FosaeConfig::default()
    }
    .with_epochs(epochs)
}

#[test]
fn overfits_ten_samples() {
    let data = TransitionDataset::generate_puzzle(200, 2, 0.9, true).unwrap();
    let cfg = FosaeConfig {
        batch_size: 10,
        learning_rate: 3e-3,
        tau_start: 1.0,
        tau_min: 1.0,
        ..small_config(500)
    };
    let opts = TrainOptions {
        max_train_states: Some(10),
        ..TrainOptions::default()
    };
    let out = train::<f32>(&cfg, &data, &opts).unwrap();
    assert_eq!(out.history.len(), 500);
    let last = out.history.last().unwrap();
    assert!(last.train_loss < 0.01, "train loss {}", last.train_loss);
}

#[test]
fn same_seed_gives_bitwise_identical_weights() {
    let data = TransitionDataset::generate_puzzle(300, 3, 0.9, true).unwrap();
    let a = train::<f32>(&small_config(2), &data, &TrainOptions::default()).unwrap();
    let b = train::<f32>(&small_config(2), &data, &TrainOptions::default()).unwrap();
    for (x, y) in a.model.params().iter().zip(b.model.params()) {
        let xb: Vec<u32> = x.data().iter().map(|v| v.to_bits()).collect();
        let yb: Vec<u32> = y.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(xb, yb);
    }
    let losses = |h: &[fosae::pipeline::EpochMetrics]| h.iter().map(|m| (m.train_loss, m.test_mse)).collect::<Vec<_>>();
    assert_eq!(losses(&a.history), losses(&b.history));
    let epochs: Vec<usize> = a.history.iter().map(|m| m.epoch).collect();
    assert_eq!(epochs, [0, 1]);
}

#[test]
fn checkpoint_round_trip_encodes_test_set_identically() {
    let dir = tempfile::tempdir().unwrap();
    let data = TransitionDataset::generate_puzzle(300, 5, 0.9, true).unwrap();
    let opts = TrainOptions {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..TrainOptions::default()
    };
    let out = train::<f64>(&small_config(2), &data, &opts).unwrap();
    let (loaded, manifest) = load_checkpoint::<f64>(dir.path()).unwrap();
    assert_eq!(manifest.epoch, out.best_epoch);
    let test = data.distinct_states(data.test_pairs());
    assert_eq!(
        encode_observations(&out.model, &data, &test).unwrap(),
        encode_observations(&loaded, &data, &test).unwrap()
    );
}

#[test]
fn mismatched_dataset_is_rejected() {
    let data = TransitionDataset::generate_puzzle(20, 5, 0.9, true).unwrap();
    let cfg = FosaeConfig {
        num_features: 14,
        ..small_config(1)
    };
    assert!(matches!(train::<f32>(&cfg, &data, &TrainOptions::default()), Err(TrainError::Failed(_))));
}

#[test]
fn encoding_is_deterministic_and_counts_collisions() {
    let data = TransitionDataset::generate_puzzle(400, 6, 0.9, false).unwrap();
    let model = FosaeModel::<f32>::new(small_config(1)).unwrap();
    let a = encode_dataset(&model, &data, 0..data.manifest.num_pairs).unwrap();
    let b = encode_dataset(&model, &data, 0..data.manifest.num_pairs).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.total_observations(), 400);
    let c = a.collisions;
    assert_eq!(c.distinct_inputs, data.distinct_states(0..400).len());
    assert!(c.distinct_codes <= c.distinct_inputs);
    assert!((0.0..=1.0).contains(&c.distinct_pair_fraction));
}

#[test]
fn grid_rows_cover_every_cell_and_count_parameters() {
    let data = TransitionDataset::generate_puzzle(60, 7, 0.5, true).unwrap();
    let spec = GridSpec {
        arities: vec![1, 2, 3],
        max_units: 2,
        max_predicates: 2,
        base: FosaeConfig {
            attention_hidden: 4,
            pn_hidden: 4,
            decoder_hidden: 8,
            batch_size: 32,
            ..FosaeConfig::default().with_epochs(1)
        },
        train: TrainOptions::default(),
        threshold: 0.1,
        order: GridOrder::Full,
    };
    let rows = eval_arity_grid::<f32>(&spec, &data, |_| {});
    assert_eq!(rows.len(), 4 * 3);
    for r in &rows {
        let cfg = FosaeConfig {
            num_units: r.units,
            arity: r.arity,
            num_predicates: r.predicates,
            ..spec.base.clone()
        };
        assert_eq!(r.parameters, FosaeModel::<f32>::new(cfg.clone()).unwrap().count_parameters());
        assert_eq!(r.parameters, closed_form_parameter_count(&cfg));
        assert_eq!(r.propositions, r.units * r.predicates);
    }
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vlac::autodiff::Tape;
use vlac::model::checkpoint::{self, Checkpoint};
use vlac::model::generate::{conditional_grid, marginal_grid, sample_prior_latents};
use vlac::model::{gm_dgm_forward, LadderNoise, ModelConfig, Vlac, Vlae, YMode};
use vlac::training::elbo;
use vlac::{Error, Tensor};

fn inputs(rows: usize, dim: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = vlac::model::LadderNoise::<f64>::sample(&ModelConfig::ladder(&[1], dim, dim, 2), rows, &mut rng);
    noise.normal[0].map(|v| 1.0 / (1.0 + (-v).exp()))
}

#[test]
fn all_single_component_ladder_reproduces_plain_ladder_bit_for_bit() {
    for seed in 0..3 {
        let (model, store) = Vlac::init::<f64>(ModelConfig::ladder(&[1, 1, 1, 1], 10, 3, 7).with_seed(seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let noise = LadderNoise::<f64>::sample(model.config(), 6, &mut rng);
        let tape = Tape::<f64>::new();
        let p = store.bind(&tape);
        let x = tape.constant(inputs(6, 10, seed));
        let ladder = elbo(&model, &p, x, &noise, &YMode::Relaxed { temperature: 0.7 }).unwrap();
        let plain = Vlae::new(&model).unwrap().elbo(&p, x, &noise.normal).unwrap();
        assert_eq!(ladder.mean().unwrap().item().unwrap().to_bits(), plain.total.item().unwrap().to_bits());
        assert_eq!(
            ladder.reconstruction.mean().unwrap().item().unwrap().to_bits(),
            plain.reconstruction.item().unwrap().to_bits()
        );
    }
}

#[test]
fn plain_ladder_refuses_mixture_layers() {
    let (model, _) = Vlac::init::<f64>(ModelConfig::ladder(&[1, 3], 4, 2, 3)).unwrap();
    assert!(Vlae::new(&model).is_err());
}

#[test]
fn conditional_grid_has_one_column_per_component() {
    let (model, store) = Vlac::init::<f64>(ModelConfig::ladder(&[1, 5, 3, 1], 12, 2, 6).with_seed(4)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let grid = conditional_grid(&model, &store, 1, 4, &mut rng).unwrap();
    assert_eq!((grid.rows, grid.cols), (4, 5));
    assert_eq!(grid.tiles.shape(), &[20, 12]);
    assert!(grid.tiles.data().iter().all(|v| (0.0..=1.0).contains(v)));

    // single-component layers have nothing to condition on
    assert!(conditional_grid(&model, &store, 0, 4, &mut rng).is_err());
}

#[test]
fn marginal_grid_keeps_other_layers_fixed() {
    let (model, store) = Vlac::init::<f64>(ModelConfig::ladder(&[1, 3, 1], 8, 2, 5).with_seed(5)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let base = sample_prior_latents(&model, &store, 3, &mut rng).unwrap();
    let grid = marginal_grid(&model, &store, 1, &base, 6, &mut rng).unwrap();
    assert_eq!((grid.rows, grid.cols), (3, 6));
    // columns of a row differ only through the resampled layer
    assert_ne!(grid.tile(0, 0), grid.tile(0, 1));

    let again = marginal_grid(&model, &store, 1, &base, 6, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(again.rows, 3);
}

#[test]
fn generation_is_seed_deterministic() {
    let (model, store) = Vlac::init::<f32>(ModelConfig::ladder(&[1, 4], 6, 2, 4).with_seed(2)).unwrap();
    let a = conditional_grid(&model, &store, 1, 3, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    let b = conditional_grid(&model, &store, 1, 3, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn checkpoint_round_trip_preserves_values_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let (model, store) = Vlac::init::<f64>(ModelConfig::ladder(&[1, 3], 5, 2, 4).with_seed(8)).unwrap();
    let ckpt = Checkpoint {
        meta: model.config().to_meta(),
        tensors: store.iter().map(|(n, t)| (n.to_string(), t.clone())).collect(),
    };
    checkpoint::save(&path, &ckpt).unwrap();
    let back = checkpoint::load::<f64>(&path).unwrap();
    assert_eq!(back, ckpt);
    let config = ModelConfig::from_meta(|k| back.meta(k)).unwrap();
    assert_eq!(&config, model.config());

    // a 64-bit checkpoint loads into 32-bit parameters
    let narrow = checkpoint::load::<f32>(&path).unwrap();
    assert_eq!(narrow.tensors.len(), ckpt.tensors.len());
}

#[test]
fn truncated_checkpoint_blob_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let (_, store) = Vlac::init::<f64>(ModelConfig::ladder(&[1], 4, 2, 3)).unwrap();
    let ckpt = Checkpoint {
        meta: vec![],
        tensors: store.iter().map(|(n, t)| (n.to_string(), t.clone())).collect(),
    };
    checkpoint::save(&path, &ckpt).unwrap();
    let blob = checkpoint::blob_path(&path);
    let bytes = std::fs::read(&blob).unwrap();
    std::fs::write(&blob, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(checkpoint::load::<f64>(&path), Err(Error::Format { .. })));
}

#[test]
fn gm_dgm_baseline_is_a_single_mixture_layer() {
    let config = ModelConfig::gm_dgm(16, 9, 3, 6, 3).with_seed(1);
    assert_eq!(config.num_layers(), 1);
    assert_eq!(config.block_depth, 3 * vlac::model::DEFAULT_BLOCK_DEPTH);
    let (model, store) = Vlac::init::<f64>(config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = LadderNoise::<f64>::sample(model.config(), 4, &mut rng);
    let tape = Tape::<f64>::new();
    let p = store.bind(&tape);
    let out = gm_dgm_forward(&model, &p, tape.constant(inputs(4, 9, 1)), &noise, &YMode::Relaxed { temperature: 1.0 })
        .unwrap();
    assert_eq!(out.posterior.k(), 16);
    assert_eq!(out.x_mean.shape(), vec![4, 9]);

    let (ladder, lstore) = Vlac::init::<f64>(ModelConfig::ladder(&[1, 4], 9, 3, 6)).unwrap();
    let tape = Tape::<f64>::new();
    let p = lstore.bind(&tape);
    let noise = LadderNoise::<f64>::sample(ladder.config(), 4, &mut rng);
    assert!(gm_dgm_forward(&ladder, &p, tape.constant(inputs(4, 9, 1)), &noise, &YMode::Relaxed { temperature: 1.0 }).is_err());
}

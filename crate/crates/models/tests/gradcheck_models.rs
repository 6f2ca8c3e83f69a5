//! Finite-difference checks of full-model parameter gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajkit_autodiff::gradcheck::check_params;
use trajkit_autodiff::{ParamId, ParamStore};
use trajkit_core::raster::{Palette, RasterConfig};
use trajkit_core::synth::{generate_synthetic, SynthConfig};
use trajkit_core::trajset::{build_cover, MatchMetric};
use trajkit_models::{
    generate_seq, prepare_samples, HeadKind, Model, ModelConfig, SeqConfig, SeqRegressor,
};

const H: f64 = 1e-5;
const MODEL_TOL: f64 = 1e-4;

/// Give every bias a random nonzero value so no ReLU sits exactly on its kink
/// over black background pixels.
fn jitter_biases(store: &mut ParamStore, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<ParamId> = store
        .iter()
        .filter(|(_, p)| p.name.ends_with(".bias"))
        .map(|(id, _)| id)
        .collect();
    for id in ids {
        for v in store.get_mut(id).value.data_mut() {
            *v = rng.random_range(0.05..0.3) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
    }
}

/// Up to `per_param` random coordinates from every trainable parameter.
fn sample_coords(store: &ParamStore, per_param: usize, seed: u64) -> Vec<(ParamId, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    store
        .iter()
        .filter(|(_, p)| p.trainable)
        .flat_map(|(id, p)| {
            let n = p.value.numel();
            (0..per_param.min(n))
                .map(|_| (id, rng.random_range(0..n)))
                .collect::<Vec<_>>()
        })
        .collect()
}

fn fixtures() -> (
    Vec<trajkit_models::Sample>,
    trajkit_core::trajset::TrajectorySet,
) {
    let data = generate_synthetic(
        &SynthConfig {
            count: 30,
            ..SynthConfig::default()
        },
        77,
    )
    .unwrap();
    let samples =
        prepare_samples(&data[..3], &Palette::default(), &RasterConfig::default()).unwrap();
    let gts: Vec<_> = data.iter().map(|i| i.ground_truth.clone()).collect();
    (samples, build_cover(&gts, 2.0).unwrap())
}

#[test]
fn covernet_full_model() {
    let (samples, set) = fixtures();
    let mut model = Model::new(ModelConfig::default(), HeadKind::CoverNet, set.len(), 1).unwrap();
    jitter_biases(&mut model.store, 2);
    let coords = sample_coords(&model.store, 6, 3);
    for s in &samples {
        let err = check_params(&model.store, &coords, H, |tape, store| {
            Ok(model
                .loss(
                    tape,
                    store,
                    &s.input,
                    &s.gt,
                    Some(&set),
                    MatchMetric::MeanPointwise,
                )
                .unwrap())
        })
        .unwrap();
        assert!(err < MODEL_TOL, "CoverNet relative error {err:e}");
    }
}

#[test]
fn mtp_full_model() {
    let (samples, _) = fixtures();
    let mut model = Model::new(ModelConfig::default(), HeadKind::Mtp, 0, 4).unwrap();
    jitter_biases(&mut model.store, 5);
    let coords = sample_coords(&model.store, 6, 6);
    for s in &samples {
        let err = check_params(&model.store, &coords, H, |tape, store| {
            Ok(model
                .loss(
                    tape,
                    store,
                    &s.input,
                    &s.gt,
                    None,
                    MatchMetric::MeanPointwise,
                )
                .unwrap())
        })
        .unwrap();
        assert!(err < MODEL_TOL, "MTP relative error {err:e}");
    }
}

#[test]
fn frozen_lower_blocks_receive_no_gradient() {
    let (samples, set) = fixtures();
    let mut model = Model::new(ModelConfig::default(), HeadKind::CoverNet, set.len(), 7).unwrap();
    jitter_biases(&mut model.store, 8);
    model.encoder.set_lower_frozen(&mut model.store, true);
    let coords = sample_coords(&model.store, 6, 9);
    assert!(coords
        .iter()
        .all(|(id, _)| !model.store.get(*id).name.starts_with("encoder.block0")));
    let s = &samples[0];
    let err = check_params(&model.store, &coords, H, |tape, store| {
        Ok(model
            .loss(
                tape,
                store,
                &s.input,
                &s.gt,
                Some(&set),
                MatchMetric::MeanPointwise,
            )
            .unwrap())
    })
    .unwrap();
    assert!(err < MODEL_TOL, "relative error {err:e}");

    let mut tape = trajkit_autodiff::Tape::new();
    let loss = model
        .loss(
            &mut tape,
            &model.store,
            &s.input,
            &s.gt,
            Some(&set),
            MatchMetric::MeanPointwise,
        )
        .unwrap();
    let grads = tape.backward(loss).unwrap();
    for name in model.encoder.lower_param_names(&model.store) {
        assert!(
            grads.param(model.store.find(&name).unwrap()).is_none(),
            "{name} got a gradient"
        );
    }
}

#[test]
fn sequence_regressor_through_recurrent_cell() {
    let cfg = SeqConfig {
        zero_init_output: false,
        ..SeqConfig::default()
    };
    let mut model = SeqRegressor::new(cfg, 10).unwrap();
    jitter_biases(&mut model.store, 11);
    let coords: Vec<_> = model
        .store
        .iter()
        .flat_map(|(id, p)| (0..p.value.numel()).map(move |j| (id, j)))
        .collect();
    for sample in generate_seq(3, &cfg, 12) {
        let err = check_params(&model.store, &coords, H, |tape, store| {
            Ok(model.loss(tape, store, &sample).unwrap())
        })
        .unwrap();
        assert!(err < MODEL_TOL, "sequence regressor relative error {err:e}");
    }
}

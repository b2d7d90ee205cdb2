//! End-to-end gradient check of a reduced model against central finite
//! differences, every parameter coordinate. (The full desk-size sweep runs
//! in the acceptance suite.)

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zerocast_core::network::{ModelConfig, ModelParams};
use zerocast_core::priors::{Phase, PriorConfig};
use zerocast_core::training::{loss_and_grads, make_instance, TrainConfig, TrainingInstance};

fn tiny_config() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        expand: 2,
        n_state: 4,
        n_heads: 2,
        n_encoder_layers: 2,
        conv_kernel: 3,
        conv_dilations: vec![1, 2],
        chunk_size: 8,
        ..ModelConfig::desk()
    }
}

fn short_instance(seed: u64) -> TrainingInstance {
    let priors = PriorConfig::default();
    let cfg = TrainConfig::desk();
    let stream = zerocast_core::SampleStream::new(seed);
    // Find a short instance so the finite-difference sweep stays fast.
    for i in 0..500 {
        let mut rng = stream.rng_for(i);
        let inst = make_instance(&priors, &cfg, Phase::Train, &mut rng).unwrap();
        if inst.tokens.len() <= 48 {
            return inst;
        }
    }
    panic!("no short instance found");
}

#[test]
fn every_parameter_gradient_matches_finite_differences() {
    let config = tiny_config();
    config.validate().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let params = ModelParams::<f64>::init(&config, &mut rng);
    let instance = short_instance(7);

    let (_, grads) = loss_and_grads(&params, &config, &instance).unwrap();

    let loss_of = |p: &ModelParams<f64>| -> f64 {
        loss_and_grads(p, &config, &instance).unwrap().0
    };

    let h = 1e-5;
    let mut worst: (f64, String) = (0.0, String::new());
    let mut n_checked = 0usize;
    for (name, arr) in &params.arrays {
        let g = grads.get(name).unwrap();
        for (coord, _) in arr.indexed_iter() {
            let mut plus = params.clone();
            plus.arrays[name][&coord] += h;
            let mut minus = params.clone();
            minus.arrays[name][&coord] -= h;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let analytic = g[&coord];
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6);
            if rel > worst.0 {
                worst = (rel, format!("{name}{coord:?}: ad={analytic} fd={fd}"));
            }
            n_checked += 1;
        }
    }
    assert!(n_checked > 1500, "checked only {n_checked} coordinates");
    assert!(
        worst.0 <= 1e-4,
        "worst relative error {} at {}",
        worst.0,
        worst.1
    );
}

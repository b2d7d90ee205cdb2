use std::time::Instant;
use zerocast_core::network::{ModelConfig, ModelParams};
use zerocast_core::priors::{PriorConfig, Phase};
use zerocast_core::rng::SampleStream;
use zerocast_core::training::{loss_and_grads, make_instance, TrainConfig};
use rand::SeedableRng;

fn main() {
    let priors = PriorConfig::default();
    let cfg = TrainConfig::desk();
    let stream = SampleStream::new(3);
    let n = 48;

    let t0 = Instant::now();
    let mut instances = vec![];
    for i in 0..n {
        let mut rng = stream.rng_for(i);
        instances.push(make_instance(&priors, &cfg, Phase::Train, &mut rng).unwrap());
    }
    let gen_s = t0.elapsed().as_secs_f64();
    println!("generation: {:.4}s/instance", gen_s / n as f64);
    let avg_t: f64 = instances.iter().map(|i| i.tokens.len() as f64).sum::<f64>() / n as f64;
    println!("avg tokens: {avg_t:.0}");

    let config = ModelConfig::desk();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let params = ModelParams::<f32>::init(&config, &mut rng);
    let t1 = Instant::now();
    for inst in &instances {
        let _ = loss_and_grads(&params, &config, inst).unwrap();
    }
    let lg_s = t1.elapsed().as_secs_f64();
    println!("fwd+bwd: {:.4}s/instance", lg_s / n as f64);
    println!("per-round (16): gen {:.3}s + train {:.3}s", gen_s / n as f64 * 16.0, lg_s / n as f64 * 16.0);
}

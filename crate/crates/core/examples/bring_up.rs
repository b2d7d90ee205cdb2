use std::time::Instant;
use zerocast_core::inference::{ForecastMode, ForecastRequest, Forecaster};
use zerocast_core::network::ModelConfig;
use zerocast_core::priors::PriorConfig;
use zerocast_core::rng::SampleStream;
use zerocast_core::timefeatures::{parse_timestamp, Frequency};
use zerocast_core::training::{heldout_mse, TrainConfig, Trainer};
use zerocast_core::TimeSeries;

fn sine_mase(f: &Forecaster, seed: u64, context: usize) -> f64 {
    // Amplitude-modulated period-24 sine on an hourly grid.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let amp: f64 = rng.gen_range(0.5..5.0);
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let phase2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let p2: f64 = rng.gen_range(97.0..293.0);
    let n = context + 24;
    let values: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64;
            amp * (1.0 + 0.5 * (std::f64::consts::TAU * t / p2 + phase2).sin())
                * (std::f64::consts::TAU * t / 24.0 + phase).sin()
        })
        .collect();
    let ctx = TimeSeries::new(
        parse_timestamp("2021-03-01T00:00").unwrap(),
        Frequency::hourly(),
        values[..context].to_vec(),
    )
    .unwrap();
    let actual = &values[context..];
    let fc = f
        .forecast(&ctx, &ForecastRequest { horizon: 24, mode: ForecastMode::Multipoint, context_cap: 512, seed: 0 })
        .unwrap();
    zerocast_core::evalharness::mase(&fc.values, actual, &ctx.values, 24).unwrap()
}

fn main() {
    let rounds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(600);
    let mut cfg = TrainConfig::desk();
    cfg.rounds = rounds;
    cfg.switch_round = rounds; // no finetune phase in the probe
    let priors = PriorConfig::default();
    let mut t = Trainer::new(ModelConfig::desk(), cfg.clone(), priors.clone(), 42).unwrap();

    let stream = SampleStream::new(42);
    let start = Instant::now();
    let mut recent = Vec::new();
    while t.round < t.config.rounds {
        let log = t.round_step().unwrap();
        recent.push(log.loss);
        if log.round % 100 == 0 || log.round + 1 == t.config.rounds {
            let avg: f64 = recent.iter().sum::<f64>() / recent.len() as f64;
            recent.clear();
            println!("round {:5}  loss(avg100) {:.5}  lr {:.2e}  [{:.0}s]", log.round, avg, log.lr, start.elapsed().as_secs_f64());
        }
    }
    let (model_mse, naive_mse) = heldout_mse(&t.params, &t.model_config, &priors, &cfg, &stream, 64).unwrap();
    println!("heldout: model {model_mse:.5} naive {naive_mse:.5} ratio {:.3}", model_mse / naive_mse);

    let f = Forecaster::new(t.params.clone(), t.model_config.clone()).unwrap();
    let mut wins = 0;
    let mut scores = vec![];
    for s in 0..20 {
        let m = sine_mase(&f, s, 256);
        scores.push(m);
        if m < 1.0 { wins += 1; }
    }
    scores.sort_by(f64::total_cmp);
    println!("sine MASE: wins {wins}/20, median {:.3}", scores[10]);
}

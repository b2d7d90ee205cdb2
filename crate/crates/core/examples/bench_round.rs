use std::time::Instant;
use zerocast_core::network::ModelConfig;
use zerocast_core::priors::PriorConfig;
use zerocast_core::training::{TrainConfig, Trainer};

fn main() {
    let mut cfg = TrainConfig::desk();
    cfg.rounds = 12;
    cfg.switch_round = 12;
    let mut t = Trainer::new(ModelConfig::desk(), cfg, PriorConfig::default(), 7).unwrap();
    let start = Instant::now();
    let mut losses = vec![];
    t.run(|log| losses.push((log.loss, log.samples_per_sec))).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    println!("12 rounds in {elapsed:.2}s => {:.3}s/round", elapsed / 12.0);
    println!("projected 5000 rounds: {:.1} min", elapsed / 12.0 * 5000.0 / 60.0);
    for (l, sps) in &losses { println!("loss {l:.5} sps {sps:.1}"); }
}

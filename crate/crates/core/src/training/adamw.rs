//! AdamW with decoupled weight decay, plus the learning-rate schedule.

use crate::error::{Error, Result};
use crate::network::ModelParams;
use crate::real::Real;
use indexmap::IndexMap;
use ndarray::ArrayD;

#[derive(Debug, Clone)]
pub struct OptimizerState<F: Real> {
    pub m: IndexMap<String, ArrayD<F>>,
    pub v: IndexMap<String, ArrayD<F>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl<F: Real> OptimizerState<F> {
    pub fn new(params: &ModelParams<F>, weight_decay: f64) -> Self {
        let zeros = |p: &ModelParams<F>| -> IndexMap<String, ArrayD<F>> {
            p.arrays
                .iter()
                .map(|(k, a)| (k.clone(), ArrayD::zeros(a.raw_dim())))
                .collect()
        };
        OptimizerState {
            m: zeros(params),
            v: zeros(params),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }

    /// One decoupled-weight-decay update over every parameter.
    pub fn apply(
        &mut self,
        params: &mut ModelParams<F>,
        grads: &IndexMap<String, ArrayD<F>>,
        lr: f64,
    ) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let b1 = F::of(self.beta1);
        let b2 = F::of(self.beta2);
        let one = F::one();
        let bias1 = F::of(1.0 - self.beta1.powi(t));
        let bias2 = F::of(1.0 - self.beta2.powi(t));
        let lr_f = F::of(lr);
        let eps = F::of(self.eps);
        let decay = F::of(lr * self.weight_decay);

        for (name, p) in params.arrays.iter_mut() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::config(format!("gradient missing for '{name}'")))?;
            let m = self.m.get_mut(name).expect("moment exists");
            let v = self.v.get_mut(name).expect("moment exists");
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, g| {
                    *m = b1 * *m + (one - b1) * *g;
                    *v = b2 * *v + (one - b2) * *g * *g;
                    let mhat = *m / bias1;
                    let vhat = *v / bias2;
                    *p = *p - lr_f * (mhat / (vhat.sqrt() + eps)) - decay * *p;
                });
        }
        Ok(())
    }
}

/// Cosine annealing from `lr_start` to `lr_end` over the main phase, then a
/// constant fine-tune rate once `round >= switch_round` (when a fine-tune
/// phase exists).
pub fn lr_at(
    round: u64,
    total_rounds: u64,
    switch_round: u64,
    lr_start: f64,
    lr_end: f64,
    finetune_lr: f64,
) -> f64 {
    let switch = switch_round.min(total_rounds);
    if switch < total_rounds && round >= switch {
        return finetune_lr;
    }
    let t_max = switch.max(1);
    let progress = (round.min(t_max) as f64) / (t_max as f64);
    lr_end + 0.5 * (lr_start - lr_end) * (1.0 + (std::f64::consts::PI * progress).cos())
}

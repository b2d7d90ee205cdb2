//! Multiplicative signal-level noises: regular spikes with partial masking
//! and alternating high/low step patterns.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, LogNormal};

/// At most this fraction of the spike slots inside one masking window may
/// be suppressed.
pub const SPIKE_MASK_FRACTION: f64 = 0.40;

/// Place multiplicative spikes at every `interval`-th index (random offset);
/// within each window of `window` consecutive spike slots a random subset of
/// at most 40% of the slots is suppressed.
pub fn apply_spikes<R: Rng>(values: &mut [f64], interval: usize, window: usize, rng: &mut R) {
    let magnitude = LogNormal::new(-0.5, 0.6).expect("valid lognormal");
    apply_spikes_with(values, interval, window, rng, |rng| {
        1.0 + magnitude.sample(rng)
    });
}

/// [`apply_spikes`] with a caller-supplied magnitude sampler.
pub fn apply_spikes_with<R: Rng, M: FnMut(&mut R) -> f64>(
    values: &mut [f64],
    interval: usize,
    window: usize,
    rng: &mut R,
    mut magnitude: M,
) {
    assert!(interval >= 2, "spike interval must be >= 2");
    assert!(window >= 1, "mask window must be >= 1");
    let n = values.len();
    let offset = rng.gen_range(0..interval);
    let slots: Vec<usize> = (offset..n).step_by(interval).collect();
    if slots.is_empty() {
        return;
    }

    let max_masked = (SPIKE_MASK_FRACTION * window as f64).floor() as usize;

    for chunk in slots.chunks(window) {
        let n_masked = if max_masked == 0 {
            0
        } else {
            rng.gen_range(0..=max_masked.min(chunk.len()))
        };
        let mut order: Vec<usize> = chunk.to_vec();
        order.shuffle(rng);
        for &idx in order.iter().skip(n_masked) {
            let mag = magnitude(rng);
            values[idx] *= mag;
        }
    }
}

/// Multiply the series by a piecewise-constant factor alternating between a
/// sampled high level and a sampled low level with sampled segment lengths.
/// Segments tile the series exactly and adjacent segments never share a
/// level.
pub fn apply_steps<R: Rng>(values: &mut [f64], rng: &mut R) {
    let n = values.len();
    if n == 0 {
        return;
    }
    let high = rng.gen_range(1.0..1.5f64);
    let mut low = rng.gen_range(0.5..1.0f64);
    if low == high {
        low *= 0.99;
    }
    let max_seg = (n / 3).max(4);

    let mut pos = 0;
    let mut use_high = rng.gen_bool(0.5);
    while pos < n {
        let len = rng.gen_range(2..=max_seg).min(n - pos);
        let level = if use_high { high } else { low };
        for v in values[pos..pos + len].iter_mut() {
            *v *= level;
        }
        pos += len;
        use_high = !use_high;
    }
}

/// Step pattern with the levels exposed, for tests that need to observe the
/// alternation directly.
pub fn step_pattern<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut ones = vec![1.0; n];
    apply_steps(&mut ones, rng);
    ones
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spikes_land_on_the_interval_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let mut v = vec![1.0; 200];
            apply_spikes(&mut v, 5, 1_000_000, &mut rng);
            // With the mask window covering everything, at most 0 slots can
            // be masked only when max_masked*window is degenerate; here find
            // the nonunit indices and check spacing.
            let hits: Vec<usize> = v
                .iter()
                .enumerate()
                .filter(|(_, x)| (**x - 1.0).abs() > 1e-12)
                .map(|(i, _)| i)
                .collect();
            for w in hits.windows(2) {
                assert_eq!((w[1] - w[0]) % 5, 0, "spikes off-grid: {hits:?}");
            }
        }
    }

    #[test]
    fn masked_fraction_never_exceeds_forty_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let interval = 3;
        let window = 10;
        for _ in 0..2_000 {
            let mut v = vec![1.0; interval * window];
            apply_spikes(&mut v, interval, window, &mut rng);
            let slots: Vec<usize> = (0..v.len())
                .filter(|i| (v[*i] - 1.0).abs() > 1e-12)
                .collect();
            // The window had `window` slots; at least 60% must have fired.
            assert!(
                slots.len() >= window - (SPIKE_MASK_FRACTION * window as f64) as usize,
                "too many masked: {} of {window}",
                window - slots.len()
            );
        }
    }

    #[test]
    fn spike_magnitudes_amplify() {
        // The log-normal offset keeps every spike factor >= 1.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut v = vec![1.0; 500];
        apply_spikes(&mut v, 7, 4, &mut rng);
        for x in v {
            assert!(x >= 1.0);
        }
    }

    #[test]
    fn steps_tile_and_alternate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let pat = step_pattern(120, &mut rng);
            // Reconstruct segments.
            let mut segments: Vec<(f64, usize)> = Vec::new();
            for &x in &pat {
                match segments.last_mut() {
                    Some((level, len)) if *level == x => *len += 1,
                    _ => segments.push((x, 1)),
                }
            }
            let total: usize = segments.iter().map(|(_, l)| l).sum();
            assert_eq!(total, 120, "segments must tile the series");
            for w in segments.windows(2) {
                assert_ne!(w[0].0, w[1].0, "adjacent segments share a level");
            }
            // Exactly two levels in play.
            let mut levels: Vec<f64> = segments.iter().map(|(l, _)| *l).collect();
            levels.sort_by(f64::total_cmp);
            levels.dedup();
            assert!(levels.len() <= 2);
        }
    }

    #[test]
    fn unit_magnitude_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let orig: Vec<f64> = (0..50).map(|i| f64::from(i) * 0.1 - 2.0).collect();
        let mut v = orig.clone();
        apply_spikes_with(&mut v, 5, 3, &mut rng, |_| 1.0);
        assert_eq!(v, orig);
    }
}

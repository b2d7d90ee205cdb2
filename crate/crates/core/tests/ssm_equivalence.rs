//! Chunked vs recurrent state-space evaluation at scale, plus the
//! throughput contract of the chunked path.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use zerocast_core::ssm::{ssd_forward_chunked, ssd_forward_recurrent};

fn random_instance(
    rng: &mut ChaCha8Rng,
    tlen: usize,
    heads: usize,
    head_dim: usize,
    n_state: usize,
) -> (Array2<f64>, Array3<f64>, Array3<f64>, Array3<f64>) {
    let a = Array2::from_shape_fn((tlen, heads), |_| rng.gen_range(0.001..1.0));
    let x = Array3::from_shape_fn((tlen, heads, head_dim), |_| rng.gen_range(-1.0..1.0));
    let b = Array3::from_shape_fn((tlen, heads, n_state), |_| rng.gen_range(-1.0..1.0));
    let c = Array3::from_shape_fn((tlen, heads, n_state), |_| rng.gen_range(-1.0..1.0));
    (a, x, b, c)
}

fn scale_of(y: &Array3<f64>) -> f64 {
    y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-30)
}

#[test]
fn chunked_equals_recurrent_at_scale() {
    // 100+ random instances, T up to 512, all chunk sizes of interest,
    // both dtypes.
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let chunks = [1usize, 16, 64, 128];
    let started = Instant::now();
    let mut checked = 0;
    for i in 0..104 {
        let tlen = rng.gen_range(1..=512);
        let heads = rng.gen_range(1..=4);
        let head_dim = rng.gen_range(1..=8);
        let n_state = rng.gen_range(1..=16);
        let (a, x, b, c) = random_instance(&mut rng, tlen, heads, head_dim, n_state);
        let q = chunks[i % chunks.len()];

        let rec = ssd_forward_recurrent(&a, &x, &b, &c);
        let chk = ssd_forward_chunked(&a, &x, &b, &c, q);
        let scale = scale_of(&rec);
        let dev64 = rec
            .iter()
            .zip(chk.iter())
            .map(|(r, h)| (r - h).abs() / scale)
            .fold(0.0, f64::max);
        assert!(dev64 < 1e-10, "i={i} T={tlen} Q={q} f64 dev={dev64}");

        let a32 = a.mapv(|v| v as f32);
        let x32 = x.mapv(|v| v as f32);
        let b32 = b.mapv(|v| v as f32);
        let c32 = c.mapv(|v| v as f32);
        let rec32 = ssd_forward_recurrent(&a32, &x32, &b32, &c32);
        let chk32 = ssd_forward_chunked(&a32, &x32, &b32, &c32, q);
        let scale32 = rec32.iter().fold(0.0f32, |m, v| m.max(v.abs())).max(1e-30);
        let dev32 = rec32
            .iter()
            .zip(chk32.iter())
            .map(|(r, h)| f64::from((r - h).abs() / scale32))
            .fold(0.0, f64::max);
        assert!(dev32 < 1e-5, "i={i} T={tlen} Q={q} f32 dev={dev32}");
        checked += 1;
    }
    assert!(checked >= 100);
    assert!(
        started.elapsed().as_secs() < 60,
        "equivalence sweep exceeded a minute"
    );
}

#[test]
fn chunked_is_faster_than_recurrent_on_long_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let (a, x, b, c) = random_instance(&mut rng, 4096, 4, 32, 16);
    let a32 = a.mapv(|v| v as f32);
    let x32 = x.mapv(|v| v as f32);
    let b32 = b.mapv(|v| v as f32);
    let c32 = c.mapv(|v| v as f32);

    // Warm both paths once.
    let _ = ssd_forward_recurrent(&a32, &x32, &b32, &c32);
    let _ = ssd_forward_chunked(&a32, &x32, &b32, &c32, 64);

    let time = |f: &dyn Fn() -> Array3<f32>| -> f64 {
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let t = Instant::now();
            let out = f();
            best = best.min(t.elapsed().as_secs_f64());
            assert!(out[[0, 0, 0]].is_finite());
        }
        best
    };
    let t_rec = time(&|| ssd_forward_recurrent(&a32, &x32, &b32, &c32));
    let t_chk = time(&|| ssd_forward_chunked(&a32, &x32, &b32, &c32, 64));
    assert!(
        t_rec >= 2.0 * t_chk,
        "chunked {t_chk:.4}s vs recurrent {t_rec:.4}s: less than 2x"
    );
}
